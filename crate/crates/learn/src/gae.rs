//! Generalized advantage estimation over a rollout buffer with episode
//! boundaries and optional time-limit bootstrapping.

/// Minimal view of one transition for advantage computation.
#[derive(Clone, Copy, Debug)]
pub struct GaeStep {
    pub reward: f64,
    pub value: f64,
    pub next_value: f64,
    pub terminal: bool,
}

/// Backward recursion:
/// delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t),
/// A_t = delta_t + gamma * lambda * (1 - terminal_t) * A_{t+1},
/// where done_t ignores time-limit terminals when `bootstrap_timeout` is set
/// (the advantage chain still breaks at every episode boundary). Value
/// targets are A_t + V(s_t).
pub fn compute_gae(
    steps: &[GaeStep],
    gamma: f64,
    lambda: f64,
    bootstrap_timeout: bool,
) -> (Vec<f64>, Vec<f64>) {
    let mut adv = vec![0.0f64; steps.len()];
    let mut carry = 0.0f64;
    for (i, s) in steps.iter().enumerate().rev() {
        let done = s.terminal && !bootstrap_timeout;
        let delta = s.reward + gamma * s.next_value * (1.0 - done as u8 as f64) - s.value;
        carry = delta + gamma * lambda * (1.0 - s.terminal as u8 as f64) * carry;
        adv[i] = carry;
    }
    let targets = steps.iter().zip(adv.iter()).map(|(s, a)| s.value + a).collect();
    (adv, targets)
}

/// In-place normalization to zero mean, unit standard deviation.
pub fn normalize(values: &mut [f64]) {
    if values.len() < 2 {
        for v in values.iter_mut() {
            *v = 0.0;
        }
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for v in values.iter_mut() {
        *v = (*v - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_terminal_transition() {
        let steps = [GaeStep { reward: 0.1, value: 0.0, next_value: 0.0, terminal: true }];
        let (adv, targ) = compute_gae(&steps, 0.97, 0.95, false);
        assert!((adv[0] - 0.1).abs() < 1e-12);
        assert!((targ[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn lambda_one_zero_values_gives_discounted_returns() {
        let rewards = [0.0, 0.1, 0.0, 0.1];
        let steps: Vec<GaeStep> = rewards
            .iter()
            .enumerate()
            .map(|(i, r)| GaeStep {
                reward: *r,
                value: 0.0,
                next_value: 0.0,
                terminal: i == 3,
            })
            .collect();
        let (adv, _) = compute_gae(&steps, 0.97, 1.0, false);
        for t in 0..4 {
            let expect: f64 = (t..4).map(|k| rewards[k] * 0.97f64.powi((k - t) as i32)).sum();
            assert!((adv[t] - expect).abs() < 1e-12, "t={t}: {} vs {expect}", adv[t]);
        }
    }

    /// O(T^2) oracle: directly sum the discounted deltas within the episode.
    fn gae_oracle(steps: &[GaeStep], gamma: f64, lambda: f64, bootstrap: bool) -> Vec<f64> {
        let n = steps.len();
        let mut adv = vec![0.0; n];
        for t in 0..n {
            let mut acc = 0.0;
            let mut weight = 1.0;
            for k in t..n {
                let s = &steps[k];
                let done = s.terminal && !bootstrap;
                let delta =
                    s.reward + gamma * s.next_value * (1.0 - done as u8 as f64) - s.value;
                acc += weight * delta;
                if s.terminal {
                    break;
                }
                weight *= gamma * lambda;
            }
            adv[t] = acc;
        }
        adv
    }

    #[test]
    fn recursion_matches_direct_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for bootstrap in [false, true] {
            for _ in 0..50 {
                let n = rng.gen_range(1..90);
                let steps: Vec<GaeStep> = (0..n)
                    .map(|i| GaeStep {
                        reward: if rng.gen_bool(0.2) { 0.1 } else { 0.0 },
                        value: rng.gen_range(-1.0..1.0),
                        next_value: rng.gen_range(-1.0..1.0),
                        terminal: (i + 1) % 30 == 0 || rng.gen_bool(0.05),
                    })
                    .collect();
                let (fast, _) = compute_gae(&steps, 0.97, 0.95, bootstrap);
                let slow = gae_oracle(&steps, 0.97, 0.95, bootstrap);
                for (a, b) in fast.iter().zip(slow.iter()) {
                    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn normalization_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut v: Vec<f64> = (0..1024).map(|_| rng.gen_range(-3.0..5.0)).collect();
        normalize(&mut v);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!(mean.abs() < 1e-6);
        assert!((std - 1.0).abs() < 1e-3);
    }
}
