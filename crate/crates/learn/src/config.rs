//! Training configuration. Defaults follow the published hyperparameter
//! table: p_restart 0.5, gamma 0.97, clip 0.2, beta_aux 0.1, beta_clone 1,
//! 300 iterations of 1024 steps split into 32 minibatches.

use bridge_sim::{ActionRanges, EnvConfig, GripperModel};
use crate::nn::NetConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Executor {
    Teleport,
    Planner,
    /// Planner with probability equal to the latest evaluation success rate,
    /// teleporter otherwise.
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorityMetric {
    /// Absolute TD error under the current value function.
    Td,
    /// Inverse-dynamics prediction loss of the stored transition.
    InvDyn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub net: NetConfig,
    pub ranges: ActionRanges,
    pub gripper: GripperModel,

    pub p_restart: f64,
    pub gamma: f64,
    pub clip_epsilon: f32,
    pub beta_aux: f32,
    pub beta_clone: f32,
    pub n_iters: u32,
    pub n_steps: u32,
    pub n_minibatch: u32,

    pub gae_lambda: f64,
    pub policy_epochs: u32,
    pub value_epochs: u32,
    pub entropy_coef: f32,
    pub learning_rate: f32,

    pub executor: Executor,
    pub priority_metric: PriorityMetric,
    pub store_capacity: usize,
    /// Time-limit terminals bootstrap gamma * V(s') when set (the horizon is
    /// a pure time limit, not an MDP terminal).
    pub bootstrap_timeout_with_value: bool,
    /// Skip reverted planner steps when forming inverse-dynamics labels.
    pub aux_skip_reverted: bool,

    pub seed: u64,
    pub eval_episodes: u32,
    /// Evaluate every this many iterations (the final iteration always
    /// evaluates); rows in between carry the latest value forward.
    pub eval_interval: u32,
    /// Gap range used for evaluation episodes, in multiples of L.
    pub eval_gap_range: (f64, f64),
    /// Checkpoint and store-dump cadence, in iterations.
    pub checkpoint_interval: u32,

    /// Skyline discretization for state hashing.
    pub skyline_bin_width: f64,
    pub skyline_height_quantum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: EnvConfig::default(),
            net: NetConfig::default(),
            ranges: ActionRanges::default(),
            gripper: GripperModel::default(),
            p_restart: 0.5,
            gamma: 0.97,
            clip_epsilon: 0.2,
            beta_aux: 0.1,
            beta_clone: 1.0,
            n_iters: 300,
            n_steps: 1024,
            n_minibatch: 32,
            gae_lambda: 0.95,
            policy_epochs: 1,
            value_epochs: 4,
            entropy_coef: 0.01,
            learning_rate: 3e-4,
            executor: Executor::Teleport,
            priority_metric: PriorityMetric::Td,
            store_capacity: 2000,
            bootstrap_timeout_with_value: true,
            aux_skip_reverted: false,
            seed: 0,
            eval_episodes: 500,
            eval_interval: 10,
            eval_gap_range: (2.75, 3.75),
            checkpoint_interval: 50,
            skyline_bin_width: 0.025,
            skyline_height_quantum: 0.025,
        }
    }
}

impl TrainConfig {
    /// Desk-scale preset: 3 blocks, narrow gaps, 256-step iterations. Small
    /// enough to train on a laptop in minutes.
    pub fn desk() -> Self {
        TrainConfig {
            env: EnvConfig { n_blocks: 3, gap_range: (0.75, 1.5), ..EnvConfig::default() },
            n_iters: 150,
            n_steps: 256,
            eval_episodes: 120,
            eval_interval: 10,
            eval_gap_range: (0.75, 1.5),
            checkpoint_interval: 10,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.env.validate().map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&self.p_restart) {
            return Err(format!("p_restart {} must lie in [0, 1]", self.p_restart));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma {} must lie in (0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(format!("gae_lambda {} must lie in [0, 1]", self.gae_lambda));
        }
        if self.clip_epsilon <= 0.0 {
            return Err("clip_epsilon must be positive".into());
        }
        if self.n_iters == 0 || self.n_steps == 0 || self.n_minibatch == 0 {
            return Err("n_iters, n_steps, n_minibatch must be positive".into());
        }
        if self.n_minibatch > self.n_steps {
            return Err(format!(
                "n_minibatch {} exceeds n_steps {}",
                self.n_minibatch, self.n_steps
            ));
        }
        if self.policy_epochs == 0 || self.value_epochs == 0 {
            return Err("policy_epochs and value_epochs must be positive".into());
        }
        if self.learning_rate <= 0.0 {
            return Err("learning_rate must be positive".into());
        }
        if self.store_capacity == 0 {
            return Err("store_capacity must be positive".into());
        }
        if self.eval_episodes == 0 || self.eval_interval == 0 {
            return Err("eval_episodes and eval_interval must be positive".into());
        }
        if self.checkpoint_interval == 0 {
            return Err("checkpoint_interval must be positive".into());
        }
        if self.skyline_bin_width <= 0.0 || self.skyline_height_quantum <= 0.0 {
            return Err("skyline discretization must be positive".into());
        }
        if self.eval_gap_range.0 > self.eval_gap_range.1
            || self.eval_gap_range.0 < 0.75 - 1e-12
            || self.eval_gap_range.1 > 3.75 + 1e-12
        {
            return Err(format!(
                "eval_gap_range {:?} must lie within [0.75, 3.75]",
                self.eval_gap_range
            ));
        }
        if self.beta_aux < 0.0 || self.beta_clone < 0.0 || self.entropy_coef < 0.0 {
            return Err("loss coefficients must be non-negative".into());
        }
        Ok(())
    }

    /// FNV-1a hash of the canonical JSON form, hex-encoded; embedded in
    /// checkpoints to flag config drift on resume.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", bridge_sim::fnv1a64(json.as_bytes()))
    }
}

/// Named ablation variants: config deltas relative to a base configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// PMR + inverse-dynamics auxiliary loss (the full method).
    Full,
    /// Auxiliary loss only.
    NoPmr,
    /// PMR only.
    NoAux,
    /// Plain phasic policy gradient.
    Plain,
    /// Full method with the inverse-dynamics-error priority metric.
    InvdynPriority,
    /// Trained from scratch under the mixed executor.
    ScratchMixed,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoPmr,
        Variant::NoAux,
        Variant::Plain,
        Variant::InvdynPriority,
        Variant::ScratchMixed,
    ];

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "full" => Some(Variant::Full),
            "no-pmr" => Some(Variant::NoPmr),
            "no-aux" => Some(Variant::NoAux),
            "plain" => Some(Variant::Plain),
            "invdyn-priority" => Some(Variant::InvdynPriority),
            "scratch-mixed" => Some(Variant::ScratchMixed),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoPmr => "no-pmr",
            Variant::NoAux => "no-aux",
            Variant::Plain => "plain",
            Variant::InvdynPriority => "invdyn-priority",
            Variant::ScratchMixed => "scratch-mixed",
        }
    }

    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoPmr => cfg.p_restart = 0.0,
            Variant::NoAux => cfg.beta_aux = 0.0,
            Variant::Plain => {
                cfg.p_restart = 0.0;
                cfg.beta_aux = 0.0;
            }
            Variant::InvdynPriority => cfg.priority_metric = PriorityMetric::InvDyn,
            Variant::ScratchMixed => cfg.executor = Executor::Mixed,
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_hyperparameter_table() {
        let c = TrainConfig::default();
        assert_eq!(c.p_restart, 0.5);
        assert_eq!(c.gamma, 0.97);
        assert_eq!(c.clip_epsilon, 0.2);
        assert_eq!(c.beta_aux, 0.1);
        assert_eq!(c.beta_clone, 1.0);
        assert_eq!(c.n_iters, 300);
        assert_eq!(c.n_steps, 1024);
        assert_eq!(c.n_minibatch, 32);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn empty_json_resolves_to_defaults() {
        let c: TrainConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, TrainConfig::default());
        assert_eq!(c.gamma, 0.97);
    }

    #[test]
    fn config_round_trips_identically() {
        let c = TrainConfig::desk();
        let json = serde_json::to_string_pretty(&c).unwrap();
        let back: TrainConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.config_hash(), back.config_hash());
    }

    #[test]
    fn plain_variant_resolves_to_both_deltas() {
        let cfg = Variant::Plain.apply(&TrainConfig::default());
        assert_eq!(cfg.p_restart, 0.0);
        assert_eq!(cfg.beta_aux, 0.0);
        let inv = Variant::InvdynPriority.apply(&TrainConfig::default());
        assert_eq!(inv.priority_metric, PriorityMetric::InvDyn);
        assert_eq!(inv.p_restart, 0.5);
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut c = TrainConfig::default();
        c.p_restart = 1.5;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.n_minibatch = 4096;
        assert!(c.validate().is_err());
    }
}
