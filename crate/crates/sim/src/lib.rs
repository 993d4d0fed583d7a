//! 2D quasi-static block construction environment.
//!
//! A desk-scale stand-in for a physics-simulated bridge-building task:
//! varying-sized blocks on two cliff-top tables, a valley to span, teleport
//! and pick-and-place executors, deterministic settling, ray-cast success
//! detection, and versioned scene snapshots.

pub mod env;
pub mod geometry;
pub mod planner;
pub mod scene;
pub mod snapshot;

pub use env::{
    check_success, is_statically_stable, max_penetration, sample_initial_state, settle,
    step_teleport, success_ray_heights, EnvConfig, StepResult,
};
pub use planner::{
    grasp_feasible, plan_pick_place, step_planner, FailureReason, GripperModel, PlanPhase,
    PlanResult, PlannerStepResult,
};
pub use scene::{
    decode_action, encode_observation, hash_key, skyline, ActionRanges, BlockCategory, BlockSpec,
    BlockState, DesignerAction, EncodedObs, Pose2, SceneState, SkylineKey, BLOCK_SIDE,
    OBS_FEATURES, POSE_BINS,
};
pub use snapshot::{restore, snapshot};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no-op has no pose")]
    NoOpHasNoPose,
    #[error("invalid action: block id {0} does not exist")]
    InvalidAction(u32),
    #[error("episode already reached its horizon")]
    EpisodeOver,
    #[error("settle did not reach a fixed point within the iteration cap")]
    Unsettled,
    #[error("snapshot decode failed: {0}")]
    SnapshotDecode(String),
}

/// FNV-1a over bytes; used to derive deterministic per-call seeds.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
