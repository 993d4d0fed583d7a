//! The phasic policy gradient training loop with prioritized memory resets:
//! collect a fixed-length rollout (resetting finished episodes from the
//! store with probability p_restart), compute advantages, run the policy
//! phase and the value phase, then recompute every stored priority.

use crate::checkpoint;
use crate::config::{Executor, PriorityMetric, TrainConfig};
use crate::dist::{ActionDistribution, log_prob_node};
use crate::gae::{compute_gae, normalize, GaeStep};
use crate::graph::Graph;
use crate::losses::{clone_loss_sample, FrozenDist, PolicySample};
use crate::metrics::{CsvWriter, IterationMetrics};
use crate::nn::{aux_heads, encode, policy_heads, value_head, Adam, Binder, Params};
use crate::pmr::{choose_reset, compute_priority, make_entry, ResetStore};
use crate::LearnError;
use bridge_sim::planner::step_planner;
use bridge_sim::{
    encode_observation, hash_key, sample_initial_state, skyline, snapshot, step_teleport,
    DesignerAction, EncodedObs, SceneState, StepResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: EncodedObs,
    pub next_obs: EncodedObs,
    pub action: DesignerAction,
    pub logp_old: f32,
    pub reward: f64,
    pub terminal: bool,
    pub executed: bool,
    pub value: f32,
    pub next_value: f32,
    pub advantage: f32,
    pub value_target: f32,
}

/// Per-episode record emitted by evaluation; enough to replay the episode.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct EpisodeTrace {
    pub env_seed: u64,
    pub actions: Vec<DesignerAction>,
    pub success: bool,
    pub episode_return: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalExecutor {
    Teleport,
    Planner,
}

pub struct TrainOutput {
    pub params: Params,
    pub metrics: Vec<IterationMetrics>,
    pub store: ResetStore,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct FinetuneEvalRow {
    pub iter: u32,
    pub success_teleport: f64,
    pub success_planner: f64,
}

pub struct FinetuneOutput {
    pub train: TrainOutput,
    pub eval_rows: Vec<FinetuneEvalRow>,
}

struct Rollout {
    transitions: Vec<Transition>,
    episodes_done: u32,
    episode_returns: f64,
    resets_from_store: u32,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub params: Params,
    adam: Adam,
    pub store: ResetStore,
    cur: SceneState,
    cur_value: Option<(EncodedObs, f32)>,
    carried_return: f64,
    rng_env: ChaCha8Rng,
    rng_action: ChaCha8Rng,
    rng_reset: ChaCha8Rng,
    rng_shuffle: ChaCha8Rng,
    rng_eval: ChaCha8Rng,
    env_steps: u64,
    last_eval: f64,
    pops_total: u64,
}

/// Policy distribution for one observation under the given parameters.
pub fn policy_dist(params: &Params, obs: &EncodedObs) -> ActionDistribution {
    let mut g = Graph::new();
    let mut b = Binder::new(params, false);
    let h = encode(&mut g, &mut b, obs);
    let heads = policy_heads(&mut g, &mut b, h, obs.n_blocks());
    ActionDistribution::from_graph(&g, &heads, obs.n_blocks())
}

/// Critic value for one observation.
pub fn value_of(params: &Params, obs: &EncodedObs) -> f32 {
    let mut g = Graph::new();
    let mut b = Binder::new(params, false);
    let h = encode(&mut g, &mut b, obs);
    let v = value_head(&mut g, &mut b, h);
    g.value(v).item()
}

/// Inverse-dynamics cross-entropy of a single transition (no gradients).
pub fn aux_cross_entropy(
    params: &Params,
    obs_t: &EncodedObs,
    obs_t1: &EncodedObs,
    action: &DesignerAction,
) -> f64 {
    let mut g = Graph::new();
    let mut b = Binder::new(params, false);
    let h_t = encode(&mut g, &mut b, obs_t);
    let h_t1 = encode(&mut g, &mut b, obs_t1);
    let heads = aux_heads(&mut g, &mut b, h_t, h_t1, obs_t.n_blocks());
    let logp = log_prob_node(&mut g, &heads, action);
    -g.value(logp).item() as f64
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, LearnError> {
        cfg.validate().map_err(LearnError::Config)?;
        let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut init_rng = ChaCha8Rng::seed_from_u64(master.gen());
        let params = Params::init(cfg.net, &mut init_rng);
        Self::with_params(cfg, params, master)
    }

    pub fn from_checkpoint(cfg: TrainConfig, params: Params) -> Result<Self, LearnError> {
        cfg.validate().map_err(LearnError::Config)?;
        let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
        let _discard_init: u64 = master.gen();
        Self::with_params(cfg, params, master)
    }

    fn with_params(
        cfg: TrainConfig,
        params: Params,
        mut master: ChaCha8Rng,
    ) -> Result<Self, LearnError> {
        let mut rng_env = ChaCha8Rng::seed_from_u64(master.gen());
        let rng_action = ChaCha8Rng::seed_from_u64(master.gen());
        let rng_reset = ChaCha8Rng::seed_from_u64(master.gen());
        let rng_shuffle = ChaCha8Rng::seed_from_u64(master.gen());
        let rng_eval = ChaCha8Rng::seed_from_u64(master.gen());
        let cur = sample_initial_state(&cfg.env, &mut rng_env)?;
        Ok(Trainer {
            adam: Adam::new(cfg.learning_rate),
            store: ResetStore::new(cfg.store_capacity),
            cur,
            cur_value: None,
            carried_return: 0.0,
            rng_env,
            rng_action,
            rng_reset,
            rng_shuffle,
            rng_eval,
            env_steps: 0,
            last_eval: 0.0,
            pops_total: 0,
            cfg,
            params,
        })
    }

    fn exec_step(
        &mut self,
        action: &DesignerAction,
    ) -> Result<(StepResult, bool), LearnError> {
        let use_planner = match self.cfg.executor {
            Executor::Teleport => false,
            Executor::Planner => true,
            Executor::Mixed => self.rng_env.gen::<f64>() < self.last_eval,
        };
        if use_planner {
            let r = step_planner(&self.cur, action, &self.cfg.ranges, &self.cfg.env, &self.cfg.gripper)?;
            Ok((r.step, r.executed))
        } else {
            Ok((step_teleport(&self.cur, action, &self.cfg.ranges, &self.cfg.env)?, true))
        }
    }

    fn store_priority(&self, t: &Transition) -> f64 {
        match self.cfg.priority_metric {
            PriorityMetric::Td => {
                let terminal = t.terminal && !self.cfg.bootstrap_timeout_with_value;
                compute_priority(
                    t.reward,
                    t.value as f64,
                    t.next_value as f64,
                    terminal,
                    self.cfg.gamma,
                )
            }
            PriorityMetric::InvDyn => {
                aux_cross_entropy(&self.params, &t.obs, &t.next_obs, &t.action)
            }
        }
    }

    fn collect_rollout(&mut self) -> Result<Rollout, LearnError> {
        let mut transitions = Vec::with_capacity(self.cfg.n_steps as usize);
        let mut episodes_done = 0u32;
        let mut episode_returns = 0.0f64;
        let mut resets_from_store = 0u32;

        for _ in 0..self.cfg.n_steps {
            let (obs, value) = match self.cur_value.take() {
                Some(cached) => cached,
                None => {
                    let obs = encode_observation(&self.cur);
                    let v = value_of(&self.params, &obs);
                    (obs, v)
                }
            };
            let dist = policy_dist(&self.params, &obs);
            let (action, logp) = dist.sample(&mut self.rng_action);
            let snap_s = snapshot(&self.cur);
            let (result, executed) = self.exec_step(&action)?;
            self.env_steps += 1;

            let next_obs = encode_observation(&result.next_state);
            let next_value = value_of(&self.params, &next_obs);
            let snap_next = snapshot(&result.next_state);

            let t = Transition {
                obs,
                next_obs: next_obs.clone(),
                action,
                logp_old: logp,
                reward: result.reward,
                terminal: result.terminal,
                executed,
                value,
                next_value,
                advantage: 0.0,
                value_target: 0.0,
            };
            let key = hash_key(
                &skyline(&self.cur, self.cfg.skyline_bin_width),
                self.cfg.skyline_height_quantum,
            );
            let priority = self.store_priority(&t);
            self.store.insert(make_entry(
                key,
                snap_s,
                t.reward,
                snap_next,
                t.terminal,
                t.action,
                priority,
            ));

            self.carried_return += result.reward;
            if result.terminal {
                episodes_done += 1;
                episode_returns += self.carried_return;
                self.carried_return = 0.0;
                let store = &mut self.store;
                let env_cfg = self.cfg.env;
                let env_rng = &mut self.rng_env;
                let (next, from_store) =
                    choose_reset(store, &mut self.rng_reset, self.cfg.p_restart, |_| {
                        sample_initial_state(&env_cfg, env_rng).expect("valid env config")
                    });
                if from_store {
                    resets_from_store += 1;
                    self.pops_total += 1;
                }
                self.cur = next;
                self.cur_value = None;
            } else {
                self.cur = result.next_state;
                self.cur_value = Some((next_obs, next_value));
            }
            transitions.push(t);
        }
        Ok(Rollout { transitions, episodes_done, episode_returns, resets_from_store })
    }

    fn fill_advantages(&self, transitions: &mut [Transition]) {
        let steps: Vec<GaeStep> = transitions
            .iter()
            .map(|t| GaeStep {
                reward: t.reward,
                value: t.value as f64,
                next_value: t.next_value as f64,
                terminal: t.terminal,
            })
            .collect();
        let (mut adv, targets) = compute_gae(
            &steps,
            self.cfg.gamma,
            self.cfg.gae_lambda,
            self.cfg.bootstrap_timeout_with_value,
        );
        for (t, targ) in transitions.iter_mut().zip(targets.iter()) {
            t.value_target = *targ as f32;
        }
        normalize(&mut adv);
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-6, "advantage mean {mean} after normalization");
        assert!((std - 1.0).abs() < 1e-3 || n < 2.0, "advantage std {std} after normalization");
        for (t, a) in transitions.iter_mut().zip(adv.iter()) {
            t.advantage = *a as f32;
        }
    }

    fn minibatch_order(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.rng_shuffle.gen_range(0..=i);
            idx.swap(i, j);
        }
        idx
    }

    fn policy_phase(&mut self, transitions: &[Transition], iter: u32) -> Result<f64, LearnError> {
        let n = transitions.len();
        let chunks = self.cfg.n_minibatch as usize;
        let mut loss_sum = 0.0f64;
        let mut loss_count = 0u32;
        for _ in 0..self.cfg.policy_epochs {
            let order = self.minibatch_order(n);
            for chunk in order.chunks(n.div_ceil(chunks)) {
                let mut g = Graph::new();
                let mut b = Binder::new(&self.params, true);
                let samples: Vec<PolicySample> = chunk
                    .iter()
                    .map(|&i| PolicySample {
                        obs: &transitions[i].obs,
                        action: transitions[i].action,
                        logp_old: transitions[i].logp_old,
                        advantage: transitions[i].advantage,
                    })
                    .collect();
                let loss = crate::losses::policy_loss(
                    &mut g,
                    &mut b,
                    &samples,
                    self.cfg.clip_epsilon,
                    self.cfg.entropy_coef,
                );
                let loss_val = g.value(loss).item() as f64;
                if !loss_val.is_finite() {
                    return Err(LearnError::NonFinite { phase: "policy", iter });
                }
                g.backward(loss);
                let grads = b.grads(&mut g);
                self.adam.step(&mut self.params, &grads);
                loss_sum += loss_val;
                loss_count += 1;
            }
        }
        Ok(loss_sum / loss_count as f64)
    }

    fn value_phase(
        &mut self,
        transitions: &[Transition],
        iter: u32,
    ) -> Result<(f64, f64, f64), LearnError> {
        // Snapshot the current policy's distributions as the clone targets.
        let frozen: Vec<FrozenDist> = transitions
            .iter()
            .map(|t| FrozenDist::from_dist(&policy_dist(&self.params, &t.obs)))
            .collect();

        let use_aux = self.cfg.beta_aux != 0.0;
        let n = transitions.len();
        let chunks = self.cfg.n_minibatch as usize;
        let (mut sums, mut count) = ([0.0f64; 3], 0u32);
        for _ in 0..self.cfg.value_epochs {
            let order = self.minibatch_order(n);
            for chunk in order.chunks(n.div_ceil(chunks)) {
                let mut g = Graph::new();
                let mut b = Binder::new(&self.params, true);
                let mut v_terms = Vec::with_capacity(chunk.len());
                let mut clone_terms = Vec::with_capacity(chunk.len());
                let mut aux_terms = Vec::new();
                for &i in chunk {
                    let t = &transitions[i];
                    let h_t = encode(&mut g, &mut b, &t.obs);
                    let v = value_head(&mut g, &mut b, h_t);
                    let targ = g.scalar_const(t.value_target);
                    let resid = g.sub(v, targ);
                    let sq = g.mul(resid, resid);
                    v_terms.push(g.scale(sq, 0.5));

                    let heads = policy_heads(&mut g, &mut b, h_t, t.obs.n_blocks());
                    clone_terms.push(clone_loss_sample(
                        &mut g,
                        &heads,
                        &frozen[i],
                        t.obs.n_blocks(),
                    ));

                    if use_aux && (t.executed || !self.cfg.aux_skip_reverted) {
                        let h_t1 = encode(&mut g, &mut b, &t.next_obs);
                        let aux = aux_heads(&mut g, &mut b, h_t, h_t1, t.obs.n_blocks());
                        let logp = log_prob_node(&mut g, &aux, &t.action);
                        aux_terms.push(g.neg(logp));
                    }
                }
                let l_v = g.mean_of(&v_terms);
                let l_clone = g.mean_of(&clone_terms);
                let clone_scaled = g.scale(l_clone, self.cfg.beta_clone);
                let mut loss = g.add(l_v, clone_scaled);
                let l_aux = if !aux_terms.is_empty() {
                    let m = g.mean_of(&aux_terms);
                    let scaled = g.scale(m, self.cfg.beta_aux);
                    loss = g.add(loss, scaled);
                    g.value(m).item() as f64
                } else {
                    0.0
                };
                let parts = (
                    g.value(l_v).item() as f64,
                    g.value(l_clone).item() as f64,
                    l_aux,
                );
                let total = g.value(loss).item();
                if !total.is_finite() {
                    return Err(LearnError::NonFinite { phase: "value", iter });
                }
                g.backward(loss);
                let grads = b.grads(&mut g);
                self.adam.step(&mut self.params, &grads);
                sums[0] += parts.0;
                sums[1] += parts.1;
                sums[2] += parts.2;
                count += 1;
            }
        }
        let c = count as f64;
        Ok((sums[0] / c, sums[1] / c, sums[2] / c))
    }

    fn recompute_store(&mut self) {
        let params = &self.params;
        let cfg = &self.cfg;
        match cfg.priority_metric {
            PriorityMetric::Td => {
                self.store.recompute_all(|e| {
                    let s = bridge_sim::restore(&e.snapshot).expect("stored snapshot decodes");
                    let s1 =
                        bridge_sim::restore(&e.next_snapshot).expect("stored snapshot decodes");
                    let v_s = value_of(params, &encode_observation(&s)) as f64;
                    let v_n = value_of(params, &encode_observation(&s1)) as f64;
                    let terminal = e.terminal_next && !cfg.bootstrap_timeout_with_value;
                    compute_priority(e.reward, v_s, v_n, terminal, cfg.gamma)
                });
            }
            PriorityMetric::InvDyn => {
                self.store.recompute_all(|e| {
                    let s = bridge_sim::restore(&e.snapshot).expect("stored snapshot decodes");
                    let s1 =
                        bridge_sim::restore(&e.next_snapshot).expect("stored snapshot decodes");
                    aux_cross_entropy(
                        params,
                        &encode_observation(&s),
                        &encode_observation(&s1),
                        &e.action,
                    )
                });
            }
        }
    }

    fn eval_executor(&self) -> EvalExecutor {
        match self.cfg.executor {
            Executor::Teleport => EvalExecutor::Teleport,
            Executor::Planner | Executor::Mixed => EvalExecutor::Planner,
        }
    }

    /// One full iteration: rollout, advantages, both phases, priority
    /// recomputation, optional evaluation.
    pub fn run_iteration(&mut self, iter: u32) -> Result<IterationMetrics, LearnError> {
        let mut rollout = self.collect_rollout()?;
        self.fill_advantages(&mut rollout.transitions);
        let loss_pi = self.policy_phase(&rollout.transitions, iter)?;
        let (loss_v, loss_clone, loss_aux) = self.value_phase(&rollout.transitions, iter)?;
        self.recompute_store();
        // The rollout cache was computed under pre-update parameters.
        self.cur_value = None;

        if iter % self.cfg.eval_interval == 0 || iter == self.cfg.n_iters {
            let (rate, _) = evaluate(
                &self.params,
                &self.cfg,
                self.cfg.eval_episodes,
                self.eval_executor(),
                &mut self.rng_eval,
            )?;
            self.last_eval = rate;
        }

        Ok(IterationMetrics {
            iter,
            env_steps: self.env_steps,
            eval_success_rate: self.last_eval,
            mean_episode_return: if rollout.episodes_done > 0 {
                rollout.episode_returns / rollout.episodes_done as f64
            } else {
                0.0
            },
            loss_pi,
            loss_v,
            loss_clone,
            loss_aux,
            store_size: self.store.len(),
            max_priority: self.store.max_priority().unwrap_or(0.0),
            reset_from_store_fraction: if rollout.episodes_done > 0 {
                rollout.resets_from_store as f64 / rollout.episodes_done as f64
            } else {
                0.0
            },
        })
    }

    pub fn pops_total(&self) -> u64 {
        self.pops_total
    }

    pub fn last_eval(&self) -> f64 {
        self.last_eval
    }
}

/// Greedy evaluation: fresh episodes from the initial distribution with the
/// evaluation gap range; an episode succeeds if the bridge stands at any
/// step.
pub fn evaluate(
    params: &Params,
    cfg: &TrainConfig,
    episodes: u32,
    executor: EvalExecutor,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<EpisodeTrace>), LearnError> {
    let env_cfg = bridge_sim::EnvConfig { gap_range: cfg.eval_gap_range, ..cfg.env };
    let mut traces = Vec::with_capacity(episodes as usize);
    let mut successes = 0u32;
    for _ in 0..episodes {
        let env_seed = rng.gen::<u64>();
        let trace = rollout_episode(params, cfg, &env_cfg, env_seed, executor)?;
        successes += trace.success as u32;
        traces.push(trace);
    }
    Ok((successes as f64 / episodes as f64, traces))
}

/// Replay one greedy episode from an environment seed. Used by evaluation
/// and by trace replays; deterministic given (params, cfg, seed, executor).
pub fn rollout_episode(
    params: &Params,
    cfg: &TrainConfig,
    env_cfg: &bridge_sim::EnvConfig,
    env_seed: u64,
    executor: EvalExecutor,
) -> Result<EpisodeTrace, LearnError> {
    let mut env_rng = ChaCha8Rng::seed_from_u64(env_seed);
    let mut state = sample_initial_state(env_cfg, &mut env_rng)?;
    let mut actions = Vec::with_capacity(env_cfg.horizon as usize);
    let mut success = false;
    let mut episode_return = 0.0;
    for _ in 0..env_cfg.horizon {
        let obs = encode_observation(&state);
        let action = policy_dist(params, &obs).greedy();
        actions.push(action);
        let result = match executor {
            EvalExecutor::Teleport => step_teleport(&state, &action, &cfg.ranges, env_cfg)?,
            EvalExecutor::Planner => {
                step_planner(&state, &action, &cfg.ranges, env_cfg, &cfg.gripper)?.step
            }
        };
        success |= result.success;
        episode_return += result.reward;
        state = result.next_state;
    }
    Ok(EpisodeTrace { env_seed, actions, success, episode_return })
}

fn dump_path(dir: &Path, prefix: &str, iter: u32, ext: &str) -> std::path::PathBuf {
    dir.join(format!("{prefix}_{iter:04}.{ext}"))
}

/// Run the full training loop. When `out_dir` is given, writes metrics.csv
/// incrementally plus checkpoints and store dumps at the checkpoint cadence.
pub fn train(cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutput, LearnError> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(CsvWriter::create(&dir.join("metrics.csv"))?)
        }
        None => None,
    };
    let hash = cfg.config_hash();
    let mut metrics = Vec::with_capacity(cfg.n_iters as usize);
    for iter in 1..=cfg.n_iters {
        let row = trainer.run_iteration(iter)?;
        assert!(row.all_finite(), "non-finite metric at iteration {iter}");
        if let Some(w) = writer.as_mut() {
            w.write_row(&row)?;
        }
        if let Some(dir) = out_dir {
            if iter % cfg.checkpoint_interval == 0 || iter == cfg.n_iters {
                checkpoint::save(&trainer.params, &hash, &dump_path(dir, "ckpt", iter, "json"))?;
                std::fs::write(
                    dump_path(dir, "store", iter, "bin"),
                    crate::pmr::dump_store(&trainer.store),
                )?;
            }
        }
        metrics.push(row);
    }
    if cfg.p_restart == 0.0 {
        assert_eq!(trainer.pops_total(), 0, "store pops must never happen at p_restart = 0");
    }
    if cfg.beta_aux == 0.0 {
        assert!(
            metrics.iter().all(|m| m.loss_aux == 0.0),
            "auxiliary loss must stay zero at beta_aux = 0"
        );
    }
    Ok(TrainOutput { params: trainer.params, metrics, store: trainer.store })
}

/// Resume a pretrained designer under the planner executor: empty store,
/// zero-shot evaluation under both executors before the first update, then
/// the regular loop with planner transitions.
pub fn finetune(
    params: Params,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<FinetuneOutput, LearnError> {
    if cfg.executor != Executor::Planner {
        return Err(LearnError::Config(
            "finetune requires the planner executor".into(),
        ));
    }
    let mut trainer = Trainer::from_checkpoint(cfg.clone(), params)?;
    let mut writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(CsvWriter::create(&dir.join("metrics.csv"))?)
        }
        None => None,
    };
    let hash = cfg.config_hash();
    let mut eval_rows = Vec::new();
    let eval_both = |trainer: &mut Trainer, iter: u32| -> Result<FinetuneEvalRow, LearnError> {
        let (tele, _) = evaluate(
            &trainer.params,
            &trainer.cfg,
            trainer.cfg.eval_episodes,
            EvalExecutor::Teleport,
            &mut trainer.rng_eval,
        )?;
        let (plan, _) = evaluate(
            &trainer.params,
            &trainer.cfg,
            trainer.cfg.eval_episodes,
            EvalExecutor::Planner,
            &mut trainer.rng_eval,
        )?;
        Ok(FinetuneEvalRow { iter, success_teleport: tele, success_planner: plan })
    };

    let zero_shot = eval_both(&mut trainer, 0)?;
    trainer.last_eval = zero_shot.success_planner;
    eval_rows.push(zero_shot);

    let mut metrics = Vec::with_capacity(cfg.n_iters as usize);
    for iter in 1..=cfg.n_iters {
        let row = trainer.run_iteration(iter)?;
        assert!(row.all_finite(), "non-finite metric at iteration {iter}");
        if let Some(w) = writer.as_mut() {
            w.write_row(&row)?;
        }
        if iter % cfg.eval_interval == 0 || iter == cfg.n_iters {
            eval_rows.push(eval_both(&mut trainer, iter)?);
        }
        if let Some(dir) = out_dir {
            if iter % cfg.checkpoint_interval == 0 || iter == cfg.n_iters {
                checkpoint::save(&trainer.params, &hash, &dump_path(dir, "ckpt", iter, "json"))?;
                std::fs::write(
                    dump_path(dir, "store", iter, "bin"),
                    crate::pmr::dump_store(&trainer.store),
                )?;
            }
        }
        metrics.push(row);
    }
    if let Some(dir) = out_dir {
        let mut csv = String::from("iter,success_teleport,success_planner\n");
        for r in &eval_rows {
            csv.push_str(&format!("{},{},{}\n", r.iter, r.success_teleport, r.success_planner));
        }
        std::fs::write(dir.join("finetune_eval.csv"), csv)?;
    }
    Ok(FinetuneOutput {
        train: TrainOutput { params: trainer.params, metrics, store: trainer.store },
        eval_rows,
    })
}
