//! Finite-difference gradient oracles shared by the unit and acceptance
//! suites: fourth-order central differences against the analytic gradients
//! of each loss on random 2-block scenes, at f32 storage precision.
//!
//! Three probes per loss:
//! - directional derivative along the normalized analytic gradient,
//! - per-coordinate differences on the largest-magnitude coordinates,
//! - sparse random directions to catch errors orthogonal to the gradient.

use crate::graph::{Graph, NodeId};
use crate::losses::{aux_loss, clone_loss, policy_loss, value_loss, FrozenDist, PolicySample};
use crate::nn::Binder;
use crate::nn::{NetConfig, Params};
use crate::tensor::Tensor;
use bridge_sim::{
    encode_observation, sample_initial_state, step_teleport, ActionRanges, DesignerAction,
    EncodedObs, EnvConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub type LossBuilder<'a> = Box<dyn Fn(&mut Graph, &mut Binder) -> NodeId + 'a>;

fn loss_value(params: &Params, build: &LossBuilder) -> f64 {
    let mut g = Graph::new();
    let mut b = Binder::new(params, false);
    let loss = build(&mut g, &mut b);
    g.value(loss).item() as f64
}

fn analytic_grads(params: &Params, build: &LossBuilder) -> BTreeMap<String, Tensor> {
    let mut g = Graph::new();
    let mut b = Binder::new(params, true);
    let loss = build(&mut g, &mut b);
    g.backward(loss);
    b.grads(&mut g).into_iter().collect()
}

fn perturbed(params: &Params, direction: &BTreeMap<String, Tensor>, t: f64) -> Params {
    let mut p = params.clone();
    for (name, d) in direction {
        let tensor = p.tensors.get_mut(name).unwrap();
        for (x, dx) in tensor.data.iter_mut().zip(d.data.iter()) {
            *x = (*x as f64 + t * *dx as f64) as f32;
        }
    }
    p
}

/// Fourth-order central stencil: curvature terms cancel to O(h^4), which
/// keeps the step large enough to stay above f32 rounding noise.
fn directional_fd(params: &Params, build: &LossBuilder, dir: &BTreeMap<String, Tensor>, h: f64) -> f64 {
    let f = |t: f64| loss_value(&perturbed(params, dir, t), build);
    (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
}

fn norm(grads: &BTreeMap<String, Tensor>) -> f64 {
    grads
        .values()
        .flat_map(|t| t.data.iter())
        .map(|v| (*v as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Relative error of the analytic gradient against central finite
/// differences; returns the worst case over all probes.
pub fn gradcheck(params: &Params, build: LossBuilder, label: &str) -> f64 {
    let grads = analytic_grads(params, &build);
    let gnorm = norm(&grads);
    assert!(gnorm > 0.0, "{label}: gradient is identically zero; test fixture is degenerate");
    let mut worst: f64 = 0.0;
    // Steeper directions get smaller steps so the stencil stays inside the
    // locally-polynomial region; the f64-accumulated forward keeps rounding
    // noise well below the tolerance at these step sizes.
    let step = |signal: f64| (2e-3 / signal.abs().max(0.04).sqrt()).clamp(2e-4, 8e-3);

    // (a) Along the normalized gradient the derivative must equal |g|.
    let unit: BTreeMap<String, Tensor> = grads
        .iter()
        .map(|(n, t)| (n.clone(), t.map(|v| (v as f64 / gnorm) as f32)))
        .collect();
    let fd = directional_fd(params, &build, &unit, step(gnorm));
    let rel = (fd - gnorm).abs() / gnorm.max(fd.abs());
    worst = worst.max(rel);
    assert!(rel < 1e-3, "{label}: directional derivative {fd} vs |g| {gnorm} (rel {rel:.2e})");

    // (b) Per-coordinate checks on the largest coordinates.
    let mut flat: Vec<(String, usize, f64)> = Vec::new();
    for (name, t) in &grads {
        for (i, v) in t.data.iter().enumerate() {
            flat.push((name.clone(), i, *v as f64));
        }
    }
    flat.sort_by(|a, b| b.2.abs().partial_cmp(&a.2.abs()).unwrap());
    for (name, idx, g_an) in flat.iter().take(20) {
        let mut dir = BTreeMap::new();
        let shape = params.get(name).shape();
        let mut d = Tensor::zeros(shape.0, shape.1);
        d.data[*idx] = 1.0;
        dir.insert(name.clone(), d);
        let fd = directional_fd(params, &build, &dir, step(*g_an));
        let rel = (fd - g_an).abs() / g_an.abs().max(fd.abs()).max(1e-12);
        worst = worst.max(rel);
        assert!(
            rel < 1e-3,
            "{label}: coordinate {name}[{idx}] analytic {g_an} vs fd {fd} (rel {rel:.2e})"
        );
    }

    // (c) Sparse random directions: projections must match within 1e-3 of
    // the gradient magnitude.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let names: Vec<&String> = grads.keys().collect();
    for _ in 0..5 {
        let mut dir: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut proj = 0.0f64;
        let mut dir_norm2 = 0.0f64;
        for _ in 0..48 {
            let name = names[rng.gen_range(0..names.len())].clone();
            let t = params.get(&name);
            let idx = rng.gen_range(0..t.data.len());
            let sign = if rng.gen::<bool>() { 1.0f32 } else { -1.0 };
            let d = dir
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(t.rows, t.cols));
            if d.data[idx] == 0.0 {
                d.data[idx] = sign;
                dir_norm2 += 1.0;
                proj += sign as f64 * grads[&name].data[idx] as f64;
            }
        }
        let scale = dir_norm2.sqrt();
        for t in dir.values_mut() {
            for v in t.data.iter_mut() {
                *v /= scale as f32;
            }
        }
        proj /= scale;
        let fd = directional_fd(params, &build, &dir, step(gnorm));
        let rel = (fd - proj).abs() / gnorm;
        worst = worst.max(rel);
        assert!(
            rel < 1e-3,
            "{label}: sparse direction derivative {fd} vs projection {proj} (rel {rel:.2e})"
        );
    }
    worst
}

struct Fixture {
    params: Params,
    frozen_params: Params,
    obs: Vec<EncodedObs>,
    next_obs: Vec<EncodedObs>,
    actions: Vec<DesignerAction>,
}

fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = Params::init(NetConfig::default(), &mut rng);
    let frozen_params = Params::init(NetConfig::default(), &mut rng);
    let env = EnvConfig { n_blocks: 2, ..EnvConfig::default() };
    let ranges = ActionRanges::default();
    let mut obs = Vec::new();
    let mut next_obs = Vec::new();
    let mut actions = Vec::new();
    for _ in 0..3 {
        let state = sample_initial_state(&env, &mut rng).unwrap();
        let action = DesignerAction::place(
            rng.gen_range(1..=2),
            rng.gen_range(0..64) as u8,
            rng.gen_range(0..64) as u8,
            rng.gen_range(0..64) as u8,
        );
        let result = step_teleport(&state, &action, &ranges, &env).unwrap();
        obs.push(encode_observation(&state));
        next_obs.push(encode_observation(&result.next_state));
        actions.push(action);
    }
    // Include one no-op transition so the ID-only path is exercised.
    let state = sample_initial_state(&env, &mut rng).unwrap();
    obs.push(encode_observation(&state));
    next_obs.push(encode_observation(&state));
    actions.push(DesignerAction::no_op());
    Fixture { params, frozen_params, obs, next_obs, actions }
}

pub fn check_policy_loss(seed: u64) -> f64 {
    let f = fixture(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let samples: Vec<(usize, f32, f32)> = (0..f.obs.len())
        .map(|i| (i, rng.gen_range(-0.5..0.5), rng.gen_range(-1.5..1.5)))
        .collect();
    gradcheck(
        &f.params,
        Box::new(move |g, b| {
            let batch: Vec<PolicySample> = samples
                .iter()
                .map(|(i, lp, adv)| PolicySample {
                    obs: &f.obs[*i],
                    action: f.actions[*i],
                    logp_old: *lp,
                    advantage: *adv,
                })
                .collect();
            policy_loss(g, b, &batch, 0.2, 0.01)
        }),
        "policy loss",
    )
}

pub fn check_value_loss(seed: u64) -> f64 {
    let f = fixture(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let targets: Vec<f32> = (0..f.obs.len()).map(|_| rng.gen_range(-1.0..3.0)).collect();
    gradcheck(
        &f.params,
        Box::new(move |g, b| {
            let batch: Vec<(&EncodedObs, f32)> =
                f.obs.iter().zip(targets.iter()).map(|(o, t)| (o, *t)).collect();
            value_loss(g, b, &batch)
        }),
        "value loss",
    )
}

pub fn check_clone_loss(seed: u64) -> f64 {
    let f = fixture(seed);
    // Clone targets from an unrelated parameter set; against its own
    // snapshot the KL sits at its minimum and the gradient vanishes.
    let frozen: Vec<FrozenDist> = f
        .obs
        .iter()
        .map(|o| FrozenDist::from_dist(&crate::trainer::policy_dist(&f.frozen_params, o)))
        .collect();
    gradcheck(
        &f.params,
        Box::new(move |g, b| {
            let batch: Vec<(&EncodedObs, &FrozenDist)> =
                f.obs.iter().zip(frozen.iter()).map(|(o, d)| (o, d)).collect();
            clone_loss(g, b, &batch)
        }),
        "clone loss",
    )
}

pub fn check_aux_loss(seed: u64) -> f64 {
    let f = fixture(seed);
    gradcheck(
        &f.params,
        Box::new(move |g, b| {
            let batch: Vec<(&EncodedObs, &EncodedObs, DesignerAction)> = (0..f.obs.len())
                .map(|i| (&f.obs[i], &f.next_obs[i], f.actions[i]))
                .collect();
            aux_loss(g, b, &batch)
        }),
        "aux loss",
    )
}
