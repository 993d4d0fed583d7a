//! Graph builders for the four training losses. The trainer and the
//! gradient-check suites share these, so the checked computation is exactly
//! the trained one.

use crate::dist::{entropy_node, log_prob_node};
use crate::graph::{Graph, NodeId};
use crate::nn::{aux_heads, encode, policy_heads, value_head, Binder};
use bridge_sim::{DesignerAction, EncodedObs, POSE_BINS};

/// One sample of the policy-phase loss.
pub struct PolicySample<'a> {
    pub obs: &'a EncodedObs,
    pub action: DesignerAction,
    pub logp_old: f32,
    pub advantage: f32,
}

/// Clipped-surrogate policy loss with an entropy bonus:
/// -E[min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)] - c_ent * E[H].
pub fn policy_loss(
    g: &mut Graph,
    b: &mut Binder,
    samples: &[PolicySample],
    clip_epsilon: f32,
    entropy_coef: f32,
) -> NodeId {
    let mut surrogates = Vec::with_capacity(samples.len());
    let mut entropies = Vec::with_capacity(samples.len());
    for s in samples {
        let h = encode(g, b, s.obs);
        let heads = policy_heads(g, b, h, s.obs.n_blocks());
        let logp = log_prob_node(g, &heads, &s.action);
        let logp_old = g.scalar_const(s.logp_old);
        let delta = g.sub(logp, logp_old);
        let ratio = g.exp(delta);
        let clipped = g.clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
        let adv_ratio = g.scale(ratio, s.advantage);
        let adv_clipped = g.scale(clipped, s.advantage);
        surrogates.push(g.min_elem(adv_ratio, adv_clipped));
        if entropy_coef != 0.0 {
            entropies.push(entropy_node(g, &heads, s.obs.n_blocks()));
        }
    }
    let mean_surr = g.mean_of(&surrogates);
    let mut loss = g.neg(mean_surr);
    if entropy_coef != 0.0 {
        let mean_ent = g.mean_of(&entropies);
        let bonus = g.scale(mean_ent, entropy_coef);
        loss = g.sub(loss, bonus);
    }
    loss
}

/// Value regression: (1/2) E[(V(s) - V_targ)^2].
pub fn value_loss(
    g: &mut Graph,
    b: &mut Binder,
    samples: &[(&EncodedObs, f32)],
) -> NodeId {
    let mut terms = Vec::with_capacity(samples.len());
    for (obs, target) in samples {
        let h = encode(g, b, obs);
        let v = value_head(g, b, h);
        let t = g.scalar_const(*target);
        let resid = g.sub(v, t);
        let sq = g.mul(resid, resid);
        terms.push(g.scale(sq, 0.5));
    }
    g.mean_of(&terms)
}

/// Reference distribution for the clone loss: probabilities and log
/// probabilities of every factor under the snapshot policy.
#[derive(Clone, Debug)]
pub struct FrozenDist {
    pub id_p: Vec<f32>,
    pub id_lp: Vec<f32>,
    /// Flattened [N, 64] per pose head.
    pub pose_p: [Vec<f32>; 3],
    pub pose_lp: [Vec<f32>; 3],
}

impl FrozenDist {
    pub fn from_dist(d: &crate::dist::ActionDistribution) -> Self {
        let soft = |logits: &[f32], width: usize| -> (Vec<f32>, Vec<f32>) {
            let rows = logits.len() / width;
            let mut p = Vec::with_capacity(logits.len());
            let mut lp = Vec::with_capacity(logits.len());
            for r in 0..rows {
                let row = &logits[r * width..(r + 1) * width];
                let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let denom: f64 = row.iter().map(|l| ((l - max) as f64).exp()).sum();
                let lse = max as f64 + denom.ln();
                for l in row {
                    let lpp = *l as f64 - lse;
                    lp.push(lpp as f32);
                    p.push(lpp.exp() as f32);
                }
            }
            (p, lp)
        };
        let (id_p, id_lp) = soft(&d.id_logits, d.id_logits.len());
        let (yp, ylp) = soft(&d.y_logits, POSE_BINS);
        let (zp, zlp) = soft(&d.z_logits, POSE_BINS);
        let (ap, alp) = soft(&d.angle_logits, POSE_BINS);
        FrozenDist { id_p, id_lp, pose_p: [yp, zp, ap], pose_lp: [ylp, zlp, alp] }
    }
}

/// KL(pi_old || pi) over the factored joint:
/// KL(ID) + sum_i p_old(ID=i) * (KL(y|i) + KL(z|i) + KL(angle|i)).
/// Computed as sum p_old * (lp_old - lp_new) elementwise, which is exactly
/// zero when the parameters match the snapshot bit for bit.
pub fn clone_loss_sample(
    g: &mut Graph,
    heads: &crate::nn::PolicyNodes,
    old: &FrozenDist,
    n_blocks: usize,
) -> NodeId {
    use crate::tensor::Tensor;
    let kl_of = |g: &mut Graph, logits: NodeId, p: &[f32], lp: &[f32], rows: usize| -> NodeId {
        let width = p.len() / rows;
        let lp_new = g.log_softmax_rows(logits);
        let p_old = g.constant(Tensor::from_vec(rows, width, p.to_vec()));
        let lp_old = g.constant(Tensor::from_vec(rows, width, lp.to_vec()));
        let diff = g.sub(lp_old, lp_new);
        let contrib = g.mul(p_old, diff);
        g.sum_cols(contrib) // [rows, 1]
    };
    let kl_id = kl_of(g, heads.id_logits, &old.id_p, &old.id_lp, 1);
    let kl_id_total = g.sum_all(kl_id);

    let kl_y = kl_of(g, heads.y_logits, &old.pose_p[0], &old.pose_lp[0], n_blocks);
    let kl_z = kl_of(g, heads.z_logits, &old.pose_p[1], &old.pose_lp[1], n_blocks);
    let kl_a = kl_of(g, heads.angle_logits, &old.pose_p[2], &old.pose_lp[2], n_blocks);
    let yz = g.add(kl_y, kl_z);
    let pose = g.add(yz, kl_a); // [N, 1]
    let weights = g.constant(crate::tensor::Tensor::from_vec(
        n_blocks,
        1,
        old.id_p[1..=n_blocks].to_vec(),
    ));
    let weighted = g.mul(weights, pose);
    let pose_total = g.sum_all(weighted);
    g.add(kl_id_total, pose_total)
}

/// Behavior-cloning KL over a batch of states against their frozen
/// distributions.
pub fn clone_loss(
    g: &mut Graph,
    b: &mut Binder,
    samples: &[(&EncodedObs, &FrozenDist)],
) -> NodeId {
    let mut terms = Vec::with_capacity(samples.len());
    for (obs, old) in samples {
        let h = encode(g, b, obs);
        let heads = policy_heads(g, b, h, obs.n_blocks());
        terms.push(clone_loss_sample(g, &heads, old, obs.n_blocks()));
    }
    g.mean_of(&terms)
}

/// Inverse-dynamics loss: cross-entropy between the predicted action factors
/// and the action actually taken, -log p_hat(a_t).
pub fn aux_loss(
    g: &mut Graph,
    b: &mut Binder,
    samples: &[(&EncodedObs, &EncodedObs, DesignerAction)],
) -> NodeId {
    let mut terms = Vec::with_capacity(samples.len());
    for (obs_t, obs_t1, action) in samples {
        let h_t = encode(g, b, obs_t);
        let h_t1 = encode(g, b, obs_t1);
        let heads = aux_heads(g, b, h_t, h_t1, obs_t.n_blocks());
        let logp = log_prob_node(g, &heads, action);
        terms.push(g.neg(logp));
    }
    g.mean_of(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ActionDistribution;
    use crate::nn::{NetConfig, Params};
    use bridge_sim::{encode_observation, sample_initial_state, EnvConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_setup() -> (Params, EncodedObs) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let params = Params::init(NetConfig::default(), &mut rng);
        let env = EnvConfig { n_blocks: 2, ..EnvConfig::default() };
        let state = sample_initial_state(&env, &mut rng).unwrap();
        (params, encode_observation(&state))
    }

    #[test]
    fn clone_loss_is_exactly_zero_against_own_snapshot() {
        let (params, obs) = tiny_setup();
        // Frozen distribution computed through the same graph ops.
        let mut g = Graph::new();
        let mut b = Binder::new(&params, false);
        let h = encode(&mut g, &mut b, &obs);
        let heads = policy_heads(&mut g, &mut b, h, obs.n_blocks());
        let dist = ActionDistribution::from_graph(&g, &heads, obs.n_blocks());
        let frozen = FrozenDist::from_dist(&dist);

        let mut g2 = Graph::new();
        let mut b2 = Binder::new(&params, true);
        let loss = clone_loss(&mut g2, &mut b2, &[(&obs, &frozen)]);
        assert_eq!(g2.value(loss).item(), 0.0);
    }

    #[test]
    fn ppo_clip_examples() {
        // rho = 1.5, A = +1, eps = 0.2 -> objective 1.2;
        // rho = 0.5, A = -1, eps = 0.2 -> objective -0.8.
        let mut g = Graph::new();
        for (rho, adv, expect) in [(1.5f32, 1.0f32, 1.2f32), (0.5, -1.0, -0.8)] {
            let r = g.constant(crate::tensor::Tensor::scalar(rho));
            let clipped = g.clamp(r, 0.8, 1.2);
            let a1 = g.scale(r, adv);
            let a2 = g.scale(clipped, adv);
            let m = g.min_elem(a1, a2);
            assert!((g.value(m).item() - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn value_loss_zero_at_exact_fit() {
        let (params, obs) = tiny_setup();
        let mut g = Graph::new();
        let mut b = Binder::new(&params, false);
        let h = encode(&mut g, &mut b, &obs);
        let v = value_head(&mut g, &mut b, h);
        let v0 = g.value(v).item();

        let mut g2 = Graph::new();
        let mut b2 = Binder::new(&params, true);
        let loss = value_loss(&mut g2, &mut b2, &[(&obs, v0)]);
        assert_eq!(g2.value(loss).item(), 0.0);
    }
}
