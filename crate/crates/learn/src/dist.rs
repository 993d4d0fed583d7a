//! The factored action distribution
//! p(ID) p(y|ID) p(z|ID) p(angle|ID) over N+1 ID classes and 64 bins per
//! pose dimension. Log-probabilities of no-op actions include only the ID
//! factor; pose factors enter only when a block is selected.

use crate::graph::{Graph, NodeId};
use crate::nn::PolicyNodes;
use bridge_sim::{DesignerAction, POSE_BINS};
use rand::Rng;

#[derive(Clone, Debug)]
pub struct ActionDistribution {
    pub n_blocks: usize,
    /// N+1 logits, index 0 is the no-op class.
    pub id_logits: Vec<f32>,
    /// Flattened `[N, 64]`, row i conditions on ID = i + 1.
    pub y_logits: Vec<f32>,
    pub z_logits: Vec<f32>,
    pub angle_logits: Vec<f32>,
}

fn log_softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let denom: f64 = logits.iter().map(|l| ((l - max) as f64).exp()).sum();
    let lse = max as f64 + denom.ln();
    logits.iter().map(|l| (*l as f64 - lse) as f32).collect()
}

fn sample_categorical<R: Rng>(log_probs: &[f32], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0f64;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += (*lp as f64).exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}

fn entropy_of(log_probs: &[f32]) -> f64 {
    log_probs
        .iter()
        .map(|lp| {
            let p = (*lp as f64).exp();
            -p * *lp as f64
        })
        .sum()
}

impl ActionDistribution {
    pub fn from_graph(g: &Graph, nodes: &PolicyNodes, n_blocks: usize) -> Self {
        ActionDistribution {
            n_blocks,
            id_logits: g.value(nodes.id_logits).data.clone(),
            y_logits: g.value(nodes.y_logits).data.clone(),
            z_logits: g.value(nodes.z_logits).data.clone(),
            angle_logits: g.value(nodes.angle_logits).data.clone(),
        }
    }

    fn pose_row(&self, which: usize, block_idx: usize) -> &[f32] {
        let src = match which {
            0 => &self.y_logits,
            1 => &self.z_logits,
            _ => &self.angle_logits,
        };
        &src[block_idx * POSE_BINS..(block_idx + 1) * POSE_BINS]
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> (DesignerAction, f32) {
        let lp_id = log_softmax(&self.id_logits);
        let id = sample_categorical(&lp_id, rng);
        if id == 0 {
            return (DesignerAction::no_op(), lp_id[0]);
        }
        let row = id - 1;
        let mut logp = lp_id[id] as f64;
        let mut bins = [0usize; 3];
        for (which, bin) in bins.iter_mut().enumerate() {
            let lp = log_softmax(self.pose_row(which, row));
            *bin = sample_categorical(&lp, rng);
            logp += lp[*bin] as f64;
        }
        (
            DesignerAction::place(id as u32, bins[0] as u8, bins[1] as u8, bins[2] as u8),
            logp as f32,
        )
    }

    pub fn log_prob(&self, a: &DesignerAction) -> f32 {
        let lp_id = log_softmax(&self.id_logits);
        if a.is_no_op() {
            return lp_id[0];
        }
        let row = (a.id - 1) as usize;
        let mut logp = lp_id[a.id as usize] as f64;
        for (which, bin) in [a.y_bin, a.z_bin, a.angle_bin].iter().enumerate() {
            let lp = log_softmax(self.pose_row(which, row));
            logp += lp[*bin as usize] as f64;
        }
        logp as f32
    }

    /// Entropy of the factored joint:
    /// H(ID) + sum_i p(ID=i) * (H(y|i) + H(z|i) + H(angle|i)).
    pub fn entropy(&self) -> f32 {
        let lp_id = log_softmax(&self.id_logits);
        let mut h = entropy_of(&lp_id);
        for i in 0..self.n_blocks {
            let p = (lp_id[i + 1] as f64).exp();
            let pose_h: f64 =
                (0..3).map(|w| entropy_of(&log_softmax(self.pose_row(w, i)))).sum();
            h += p * pose_h;
        }
        h as f32
    }

    /// Per-factor argmax action.
    pub fn greedy(&self) -> DesignerAction {
        let argmax = |v: &[f32]| -> usize {
            let mut best = 0;
            for (i, x) in v.iter().enumerate() {
                if *x > v[best] {
                    best = i;
                }
            }
            best
        };
        let id = argmax(&self.id_logits);
        if id == 0 {
            return DesignerAction::no_op();
        }
        let row = id - 1;
        DesignerAction::place(
            id as u32,
            argmax(self.pose_row(0, row)) as u8,
            argmax(self.pose_row(1, row)) as u8,
            argmax(self.pose_row(2, row)) as u8,
        )
    }
}

/// Graph node for the joint log-probability of a stored action.
pub fn log_prob_node(g: &mut Graph, nodes: &PolicyNodes, a: &DesignerAction) -> NodeId {
    let lp_id = g.log_softmax_rows(nodes.id_logits);
    let id_term = g.gather(lp_id, 0, a.id as usize);
    if a.is_no_op() {
        return id_term;
    }
    let row = (a.id - 1) as usize;
    let mut total = id_term;
    for (head, bin) in [
        (nodes.y_logits, a.y_bin),
        (nodes.z_logits, a.z_bin),
        (nodes.angle_logits, a.angle_bin),
    ] {
        let lp = g.log_softmax_rows(head);
        let term = g.gather(lp, row, bin as usize);
        total = g.add(total, term);
    }
    total
}

/// Graph node for the factored-joint entropy.
pub fn entropy_node(g: &mut Graph, nodes: &PolicyNodes, n_blocks: usize) -> NodeId {
    let factor_entropy = |g: &mut Graph, logits: NodeId| -> NodeId {
        // -sum p log p, rows kept separate: [rows, 1]
        let p = g.softmax_rows(logits);
        let lp = g.log_softmax_rows(logits);
        let plp = g.mul(p, lp);
        let rows = g.sum_cols(plp);
        g.scale(rows, -1.0)
    };
    let h_id = factor_entropy(g, nodes.id_logits);
    let h_id_total = g.sum_all(h_id);

    let h_y = factor_entropy(g, nodes.y_logits);
    let h_z = factor_entropy(g, nodes.z_logits);
    let h_a = factor_entropy(g, nodes.angle_logits);
    let hy_z = g.add(h_y, h_z);
    let h_pose = g.add(hy_z, h_a); // [N, 1]

    let p_id = g.softmax_rows(nodes.id_logits); // [1, N+1]
    let p_blocks_row = g.slice_cols(p_id, 1, n_blocks); // [1, N]
    let p_blocks = g.transpose(p_blocks_row); // [N, 1]
    let weighted = g.mul(p_blocks, h_pose);
    let pose_total = g.sum_all(weighted);
    g.add(h_id_total, pose_total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_dist(n: usize) -> ActionDistribution {
        ActionDistribution {
            n_blocks: n,
            id_logits: vec![0.0; n + 1],
            y_logits: vec![0.0; n * POSE_BINS],
            z_logits: vec![0.0; n * POSE_BINS],
            angle_logits: vec![0.0; n * POSE_BINS],
        }
    }

    #[test]
    fn uniform_no_op_log_prob() {
        let d = uniform_dist(7);
        let lp = d.log_prob(&DesignerAction::no_op());
        assert!((lp - (-(8.0f32).ln())).abs() < 1e-6);
    }

    #[test]
    fn uniform_placement_log_prob() {
        let d = uniform_dist(7);
        let lp = d.log_prob(&DesignerAction::place(3, 10, 20, 30));
        let expect = -(8.0f32).ln() - 3.0 * (64.0f32).ln();
        assert!((lp - expect).abs() < 1e-5);
    }

    #[test]
    fn probabilities_sum_to_one_exhaustively() {
        // N = 2: 3 ID classes, two with 64^3 pose combinations.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d = uniform_dist(2);
        for v in d
            .id_logits
            .iter_mut()
            .chain(d.y_logits.iter_mut())
            .chain(d.z_logits.iter_mut())
            .chain(d.angle_logits.iter_mut())
        {
            *v = rng.gen_range(-2.0..2.0);
        }
        // Factored structure: sum p = p(0) + sum_i p(i) * (sum_y)(sum_z)(sum_a),
        // evaluated by brute force over every action.
        let lp_id = log_softmax(&d.id_logits);
        let mut total = (lp_id[0] as f64).exp();
        for id in 1..=2u32 {
            let row = (id - 1) as usize;
            let lpy = log_softmax(d.pose_row(0, row));
            let lpz = log_softmax(d.pose_row(1, row));
            let lpa = log_softmax(d.pose_row(2, row));
            let mut id_total = 0.0f64;
            for y in 0..POSE_BINS {
                for z in 0..POSE_BINS {
                    let partial = (lp_id[id as usize] + lpy[y] + lpz[z]) as f64;
                    for a in 0..POSE_BINS {
                        id_total += (partial + lpa[a] as f64).exp();
                    }
                }
            }
            total += id_total;
        }
        assert!((total - 1.0).abs() < 1e-5, "total probability {total}");
    }

    #[test]
    fn sampling_matches_log_prob() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut d = uniform_dist(3);
        for v in d.id_logits.iter_mut().chain(d.y_logits.iter_mut()) {
            *v = rng.gen_range(-1.0..1.0);
        }
        for _ in 0..100 {
            let (a, lp) = d.sample(&mut rng);
            assert!((lp - d.log_prob(&a)).abs() < 1e-6);
        }
    }

    #[test]
    fn uniform_entropy_decomposes() {
        let d = uniform_dist(4);
        // H(id) = ln 5; each selected block adds 3 ln 64 with weight 1/5.
        let expect = (5.0f64).ln() + (4.0 / 5.0) * 3.0 * (64.0f64).ln();
        assert!((d.entropy() as f64 - expect).abs() < 1e-4);
    }
}
