//! Pick-and-place feasibility proxy for a planar gripper.
//!
//! An instruction is executable when the gripper can grasp the block where it
//! stands, carry it collision-free to the decoded pose, and fit around it at
//! the release point. Feasible instructions produce exactly the teleport
//! executor's outcome; infeasible ones revert the scene and waste the step.

use crate::env::{step_teleport, EnvConfig, StepResult};
use crate::geometry::{
    convex_hull, intersects_strictly, penetration_depth, Rect, Vec2,
};
use crate::scene::{decode_action, ActionRanges, DesignerAction, Pose2, SceneState};
use crate::{fnv1a64, snapshot, SimError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Collision tolerance for the planner: touching contacts are allowed.
const PLAN_TOL: f64 = 1e-7;
/// RRT-Connect parameters.
const RRT_STEP: f64 = 0.01;
const RRT_GOAL_BIAS: f64 = 0.1;
const RRT_SAMPLE_BUDGET: usize = 5000;
/// Interpolation step for rotation sweeps, radians.
const ROT_SWEEP_STEP: f64 = 0.02;

/// Planar gripper: two fingers flanking the grasped block's ends plus a body
/// riding on its top face. The grasp is always at the block's center of mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperModel {
    /// Free strip required on each side of the grasped block.
    pub finger_clearance: f64,
    /// Carry height margin above the tallest obstacle.
    pub transit_height: f64,
    /// Closed-gripper body dimensions (width along the block, height above it).
    pub footprint: (f64, f64),
}

impl Default for GripperModel {
    fn default() -> Self {
        GripperModel { finger_clearance: 0.02, transit_height: 0.05, footprint: (0.06, 0.04) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    GraspBlocked,
    PlaceCollision,
    PathBlocked,
    PlannerTimeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanPhase {
    Pick,
    Lift,
    Rotate,
    Transit,
    Place,
}

impl PlanPhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlanPhase::Pick => "pick",
            PlanPhase::Lift => "lift",
            PlanPhase::Rotate => "rotate",
            PlanPhase::Transit => "transit",
            PlanPhase::Place => "place",
        }
    }
}

/// Outcome of planning one pick-and-place instruction.
#[derive(Clone, Debug)]
pub struct PlanResult {
    pub feasible: bool,
    /// Waypoints of the grasped block, pick pose through place pose.
    pub waypoints: Vec<(PlanPhase, Pose2)>,
    pub failure_reason: Option<FailureReason>,
}

impl PlanResult {
    fn failed(reason: FailureReason) -> Self {
        PlanResult { feasible: false, waypoints: Vec::new(), failure_reason: Some(reason) }
    }

    /// CSV rows `phase,y,z,angle` for rendering or inspection.
    pub fn waypoints_csv(&self) -> String {
        let mut out = String::from("phase,y,z,angle\n");
        for (phase, p) in &self.waypoints {
            out.push_str(&format!("{},{},{},{}\n", phase.as_str(), p.y, p.z, p.angle));
        }
        out
    }
}

/// Result of one planner-executor step: the environment step plus whether the
/// instruction was executed or reverted.
#[derive(Clone, Debug)]
pub struct PlannerStepResult {
    pub step: StepResult,
    pub executed: bool,
    pub failure_reason: Option<FailureReason>,
}

/// Rigid bodies swept along the path: the block, two fingers gripping the
/// upper half of its end faces, and the gripper body on its top face. All are
/// expressed in the block's frame and move with it.
fn composite_parts(half_len: f64, half_thick: f64, pose: &Pose2, g: &GripperModel) -> Vec<Vec<Vec2>> {
    let block = Rect::new(Vec2::new(pose.y, pose.z), half_len, half_thick, pose.angle);
    let local = |lx: f64, lz: f64, hw: f64, hh: f64| {
        let (s, c) = pose.angle.sin_cos();
        Rect::new(
            Vec2::new(pose.y + c * lx - s * lz, pose.z + s * lx + c * lz),
            hw,
            hh,
            pose.angle,
        )
    };
    let fc = g.finger_clearance / 2.0;
    let fh = half_thick / 2.0;
    let finger_r = local(half_len + fc, half_thick - fh, fc, fh);
    let finger_l = local(-(half_len + fc), half_thick - fh, fc, fh);
    let (bw, bh) = g.footprint;
    let body = local(0.0, half_thick + bh / 2.0, bw / 2.0, bh / 2.0);
    vec![block.to_poly(), finger_r.to_poly(), finger_l.to_poly(), body.to_poly()]
}

fn scene_obstacles(state: &SceneState, skip_id: u32) -> Vec<Vec<Vec2>> {
    let mut obs: Vec<Vec<Vec2>> = state
        .blocks
        .iter()
        .filter(|b| b.spec.id != skip_id)
        .map(|b| b.rect().to_poly())
        .collect();
    obs.push(state.left_cliff().to_poly());
    obs.push(state.right_cliff().to_poly());
    obs
}

fn parts_collide(parts: &[Vec<Vec2>], obstacles: &[Vec<Vec2>]) -> bool {
    for p in parts {
        if p.iter().any(|v| v.z < -PLAN_TOL) {
            return true;
        }
        for o in obstacles {
            if penetration_depth(p, o) > PLAN_TOL {
                return true;
            }
        }
    }
    false
}

fn pose_collides(
    half_len: f64,
    half_thick: f64,
    pose: &Pose2,
    g: &GripperModel,
    obstacles: &[Vec<Vec2>],
) -> bool {
    parts_collide(&composite_parts(half_len, half_thick, pose, g), obstacles)
}

/// Swept check for a straight translation: per part, the convex hull of the
/// endpoints' polygons.
fn translation_collides(
    half_len: f64,
    half_thick: f64,
    from: &Pose2,
    to: &Pose2,
    g: &GripperModel,
    obstacles: &[Vec<Vec2>],
) -> bool {
    debug_assert!((from.angle - to.angle).abs() < 1e-12);
    let a = composite_parts(half_len, half_thick, from, g);
    let b = composite_parts(half_len, half_thick, to, g);
    for (pa, pb) in a.iter().zip(b.iter()) {
        let pts: Vec<Vec2> = pa.iter().chain(pb.iter()).copied().collect();
        let hull = convex_hull(&pts);
        if hull.iter().any(|v| v.z < -PLAN_TOL) {
            return true;
        }
        for o in obstacles {
            if penetration_depth(&hull, o) > PLAN_TOL {
                return true;
            }
        }
    }
    false
}

/// Stepped sweep for an in-place rotation.
fn rotation_collides(
    half_len: f64,
    half_thick: f64,
    at: Vec2,
    from_angle: f64,
    to_angle: f64,
    g: &GripperModel,
    obstacles: &[Vec<Vec2>],
) -> bool {
    let delta = to_angle - from_angle;
    let steps = ((delta.abs() / ROT_SWEEP_STEP).ceil() as usize).max(1);
    for i in 0..=steps {
        let angle = from_angle + delta * i as f64 / steps as f64;
        let pose = Pose2 { y: at.y, z: at.z, angle };
        if pose_collides(half_len, half_thick, &pose, g, obstacles) {
            return true;
        }
    }
    false
}

/// True when the finger zones beside the block are free. The zones are the
/// clearance-wide strips flanking its ends, extended straight up to the
/// transit plane (the descending arm must fit through); overlap is strict,
/// so a neighbor exactly at clearance distance stays feasible.
pub fn grasp_feasible(state: &SceneState, block_id: u32, g: &GripperModel) -> bool {
    let Some(block) = state.block_by_id(block_id) else {
        return false;
    };
    let obstacles = scene_obstacles(state, block_id);
    let transit_z = transit_plane(state, block_id, g);
    let parts = composite_parts(
        block.spec.length / 2.0,
        block.spec.thickness / 2.0,
        &block.pose,
        g,
    );
    // parts[1], parts[2] are the finger rectangles.
    for finger in &parts[1..3] {
        let mut pts = finger.clone();
        for v in finger {
            pts.push(Vec2::new(v.y, transit_z.max(v.z)));
        }
        let zone = convex_hull(&pts);
        for o in &obstacles {
            if intersects_strictly(&zone, o, PLAN_TOL) {
                return false;
            }
        }
    }
    true
}

/// Height of the carry plane: the tallest obstacle top plus the transit margin.
fn transit_plane(state: &SceneState, skip_id: u32, g: &GripperModel) -> f64 {
    let mut top = state.cliff_height;
    for b in &state.blocks {
        if b.spec.id != skip_id {
            top = top.max(b.rect().max_z());
        }
    }
    top + g.transit_height
}

/// Lift height for the block center so the whole composite clears the plane
/// even mid-rotation.
fn carry_z(half_len: f64, half_thick: f64, g: &GripperModel, plane: f64) -> f64 {
    let radius = (half_len + g.finger_clearance).hypot(half_thick + g.footprint.1);
    plane + radius
}

/// Plan one pick-and-place: canonical lift path first, then RRT-Connect in
/// (y, z) with one in-air rotation between the two orientation legs.
pub fn plan_pick_place(
    state: &SceneState,
    action: &DesignerAction,
    ranges: &ActionRanges,
    g: &GripperModel,
) -> Result<PlanResult, SimError> {
    let target = decode_action(action, ranges)?;
    let block = state
        .block_by_id(action.id)
        .ok_or(SimError::InvalidAction(action.id))?;
    let (hl, ht) = (block.spec.length / 2.0, block.spec.thickness / 2.0);
    let start = block.pose;
    let obstacles = scene_obstacles(state, action.id);

    if !grasp_feasible(state, action.id, g) {
        return Ok(PlanResult::failed(FailureReason::GraspBlocked));
    }
    // The decoded pose itself must not collide: the executor cannot push a
    // block into occupied space (the teleporter forgives this; the planner
    // must not).
    let block_at_target = Rect::new(Vec2::new(target.y, target.z), hl, ht, target.angle);
    if block_at_target.min_z() < -PLAN_TOL
        || obstacles
            .iter()
            .any(|o| penetration_depth(&block_at_target.to_poly(), o) > PLAN_TOL)
    {
        return Ok(PlanResult::failed(FailureReason::PlaceCollision));
    }
    // The gripper must also fit around the block at the release pose.
    if pose_collides(hl, ht, &target, g, &obstacles) {
        return Ok(PlanResult::failed(FailureReason::PlaceCollision));
    }
    if pose_collides(hl, ht, &start, g, &obstacles) {
        return Ok(PlanResult::failed(FailureReason::PathBlocked));
    }

    let plane = transit_plane(state, action.id, g);
    let lift = carry_z(hl, ht, g, plane);
    let p_lift = Pose2 { y: start.y, z: lift, angle: start.angle };
    let p_rot = Pose2 { y: start.y, z: lift, angle: target.angle };
    let p_transit = Pose2 { y: target.y, z: lift, angle: target.angle };
    let canonical_ok = !translation_collides(hl, ht, &start, &p_lift, g, &obstacles)
        && !translation_collides(hl, ht, &p_transit, &target, g, &obstacles);
    if canonical_ok {
        return Ok(PlanResult {
            feasible: true,
            waypoints: vec![
                (PlanPhase::Pick, start),
                (PlanPhase::Lift, p_lift),
                (PlanPhase::Rotate, p_rot),
                (PlanPhase::Transit, p_transit),
                (PlanPhase::Place, target),
            ],
            failure_reason: None,
        });
    }

    rrt_connect(state, action, hl, ht, &start, &target, g, &obstacles, lift)
}

struct Tree {
    nodes: Vec<Vec2>,
    parent: Vec<usize>,
}

impl Tree {
    fn new(root: Vec2) -> Self {
        Tree { nodes: vec![root], parent: vec![usize::MAX] }
    }

    fn nearest(&self, q: Vec2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n.y - q.y).powi(2) + (n.z - q.z).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn path_to_root(&self, mut i: usize) -> Vec<Vec2> {
        let mut out = Vec::new();
        while i != usize::MAX {
            out.push(self.nodes[i]);
            i = self.parent[i];
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
fn rrt_connect(
    state: &SceneState,
    action: &DesignerAction,
    hl: f64,
    ht: f64,
    start: &Pose2,
    target: &Pose2,
    g: &GripperModel,
    obstacles: &[Vec<Vec2>],
    lift: f64,
) -> Result<PlanResult, SimError> {
    // Deterministic per-(state, action) seed.
    let mut seed_bytes = snapshot(state);
    seed_bytes.extend_from_slice(&[action.id as u8, action.y_bin, action.z_bin, action.angle_bin]);
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(&seed_bytes));

    let free_at = |q: Vec2, angle: f64| -> bool {
        !pose_collides(hl, ht, &Pose2 { y: q.y, z: q.z, angle }, g, obstacles)
    };
    let edge_free = |a: Vec2, b: Vec2, angle: f64| -> bool {
        let fa = Pose2 { y: a.y, z: a.z, angle };
        let fb = Pose2 { y: b.y, z: b.z, angle };
        !translation_collides(hl, ht, &fa, &fb, g, obstacles)
    };
    let rotation_free = |q: Vec2| -> bool {
        !rotation_collides(hl, ht, q, start.angle, target.angle, g, obstacles)
    };

    let y_lo = start.y.min(target.y) - 0.5;
    let y_hi = start.y.max(target.y) + 0.5;
    let z_hi = lift + 0.2;

    let q_start = Vec2::new(start.y, start.z);
    let q_goal = Vec2::new(target.y, target.z);
    let mut tree_a = Tree::new(q_start); // grows at the start orientation
    let mut tree_b = Tree::new(q_goal); // grows at the target orientation
    let same_angle = (start.angle - target.angle).abs() < 1e-12;

    // Immediate connection: straight line plus one rotation at the start.
    if rotation_free(q_start) && edge_free(q_start, q_goal, target.angle) {
        return Ok(PlanResult {
            feasible: true,
            waypoints: vec![
                (PlanPhase::Pick, *start),
                (PlanPhase::Rotate, Pose2 { y: start.y, z: start.z, angle: target.angle }),
                (PlanPhase::Place, *target),
            ],
            failure_reason: None,
        });
    }

    for it in 0..RRT_SAMPLE_BUDGET {
        let sample = if rng.gen::<f64>() < RRT_GOAL_BIAS {
            if it % 2 == 0 {
                q_goal
            } else {
                q_start
            }
        } else {
            Vec2::new(rng.gen_range(y_lo..y_hi), rng.gen_range(0.0..z_hi))
        };
        let (grow_a, angle) = if it % 2 == 0 {
            (true, start.angle)
        } else {
            (false, target.angle)
        };
        let tree = if grow_a { &mut tree_a } else { &mut tree_b };
        let near = tree.nearest(sample);
        let from = tree.nodes[near];
        let dy = sample.y - from.y;
        let dz = sample.z - from.z;
        let dist = dy.hypot(dz);
        if dist < 1e-9 {
            continue;
        }
        let scale = (RRT_STEP / dist).min(1.0);
        let new = Vec2::new(from.y + dy * scale, from.z + dz * scale);
        if !free_at(new, angle) || !edge_free(from, new, angle) {
            continue;
        }
        tree.nodes.push(new);
        tree.parent.push(near);
        let new_idx = tree.nodes.len() - 1;

        // Try to connect to the other tree at this node. The in-air rotation
        // always happens at `new`; the bridging edge runs at the angle that
        // keeps each leg within its own tree's orientation.
        let other = if grow_a { &tree_b } else { &tree_a };
        let near_other = other.nearest(new);
        let q_other = other.nodes[near_other];
        let close = (q_other.y - new.y).hypot(q_other.z - new.z) <= 4.0 * RRT_STEP;
        let bridge_angle = if grow_a { target.angle } else { start.angle };
        if close
            && (same_angle || rotation_free(new))
            && edge_free(new, q_other, bridge_angle)
        {
            let (a_idx, b_idx) = if grow_a { (new_idx, near_other) } else { (near_other, new_idx) };
            let mut a_path = tree_a.path_to_root(a_idx);
            a_path.reverse();
            let b_path = tree_b.path_to_root(b_idx);

            let mut waypoints = Vec::new();
            waypoints.push((PlanPhase::Pick, *start));
            for q in a_path.iter().skip(1) {
                waypoints.push((
                    PlanPhase::Transit,
                    Pose2 { y: q.y, z: q.z, angle: start.angle },
                ));
            }
            if grow_a {
                // ... -> new (theta0), rotate at new, bridge to q_other (theta1).
                waypoints.push((
                    PlanPhase::Rotate,
                    Pose2 { y: new.y, z: new.z, angle: target.angle },
                ));
            } else {
                // ... -> q_other (theta0), bridge at theta0, rotate at new.
                waypoints.push((
                    PlanPhase::Transit,
                    Pose2 { y: new.y, z: new.z, angle: start.angle },
                ));
                waypoints.push((
                    PlanPhase::Rotate,
                    Pose2 { y: new.y, z: new.z, angle: target.angle },
                ));
            }
            for q in b_path.iter() {
                waypoints.push((
                    PlanPhase::Transit,
                    Pose2 { y: q.y, z: q.z, angle: target.angle },
                ));
            }
            waypoints.push((PlanPhase::Place, *target));
            return Ok(PlanResult { feasible: true, waypoints, failure_reason: None });
        }
    }
    Ok(PlanResult::failed(FailureReason::PlannerTimeout))
}

/// The planner executor: execute the instruction when a plan exists
/// (identical outcome to the teleporter), otherwise revert the scene exactly
/// and waste the step.
pub fn step_planner(
    state: &SceneState,
    action: &DesignerAction,
    ranges: &ActionRanges,
    cfg: &EnvConfig,
    g: &GripperModel,
) -> Result<PlannerStepResult, SimError> {
    if state.step_index >= cfg.horizon {
        return Err(SimError::EpisodeOver);
    }
    if action.is_no_op() {
        let step = step_teleport(state, action, ranges, cfg)?;
        return Ok(PlannerStepResult { step, executed: true, failure_reason: None });
    }
    let plan = plan_pick_place(state, action, ranges, g)?;
    if plan.feasible {
        let step = step_teleport(state, action, ranges, cfg)?;
        Ok(PlannerStepResult { step, executed: true, failure_reason: None })
    } else {
        let mut next = state.clone();
        next.step_index = state.step_index + 1;
        Ok(PlannerStepResult {
            step: StepResult {
                terminal: next.step_index >= cfg.horizon,
                next_state: next,
                reward: 0.0,
                success: false,
            },
            executed: false,
            failure_reason: plan.failure_reason,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_initial_state, settle, EnvConfig};
    use crate::scene::{BlockCategory, BlockSpec, BlockState};
    use rand::SeedableRng;

    fn scene_with(blocks: &[(u32, f64, Pose2)]) -> SceneState {
        let mut s = SceneState { cliff_gap: 0.3, cliff_height: 0.2, blocks: vec![], step_index: 0 };
        for (id, len, pose) in blocks {
            s.blocks.push(BlockState {
                spec: BlockSpec::new(*id, *len, BlockCategory::Standard),
                pose: *pose,
                vel_y: 0.0,
                vel_z: 0.0,
                omega: 0.0,
            });
        }
        s.blocks.sort_by_key(|b| b.spec.id);
        s
    }

    #[test]
    fn isolated_block_is_graspable() {
        let s = scene_with(&[(1, 0.2, Pose2::new(-0.5, 0.225, 0.0))]);
        assert!(grasp_feasible(&s, 1, &GripperModel::default()));
    }

    #[test]
    fn side_contact_blocks_grasp() {
        // Two blocks touching end to end on the left table.
        let s = scene_with(&[
            (1, 0.2, Pose2::new(-0.5, 0.225, 0.0)),
            (2, 0.2, Pose2::new(-0.7, 0.225, 0.0)),
        ]);
        let g = GripperModel::default();
        assert!(!grasp_feasible(&s, 1, &g));
        assert!(!grasp_feasible(&s, 2, &g));
    }

    #[test]
    fn neighbor_exactly_at_clearance_is_feasible() {
        let g = GripperModel::default();
        // Gap between block ends exactly equal to the clearance.
        let s = scene_with(&[
            (1, 0.2, Pose2::new(-0.5, 0.225, 0.0)),
            (2, 0.2, Pose2::new(-0.5 - 0.2 - g.finger_clearance, 0.225, 0.0)),
        ]);
        assert!(grasp_feasible(&s, 1, &g));
    }

    #[test]
    fn lone_block_moves_via_canonical_lift_path() {
        let s = scene_with(&[(1, 0.4, Pose2::new(-0.5, 0.225, 0.0))]);
        let ranges = ActionRanges::default();
        let a = DesignerAction::place(
            1,
            ActionRanges::bin_of(ranges.y, 0.0) as u8,
            ActionRanges::bin_of(ranges.z, 0.3) as u8,
            0,
        );
        let plan = plan_pick_place(&s, &a, &ranges, &GripperModel::default()).unwrap();
        assert!(plan.feasible, "failure: {:?}", plan.failure_reason);
        assert_eq!(plan.waypoints.len(), 5);
        assert_eq!(plan.waypoints[0].0, PlanPhase::Pick);
        assert_eq!(plan.waypoints.last().unwrap().0, PlanPhase::Place);
        let csv = plan.waypoints_csv();
        assert!(csv.starts_with("phase,y,z,angle\n"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn target_overlapping_existing_block_is_place_collision() {
        let s = scene_with(&[
            (1, 0.2, Pose2::new(-0.5, 0.225, 0.0)),
            (2, 0.2, Pose2::new(0.0, 0.025, 0.0)),
        ]);
        let ranges = ActionRanges::default();
        // Decode bins straight at block 2's pose.
        let a = DesignerAction::place(
            1,
            ActionRanges::bin_of(ranges.y, 0.0) as u8,
            ActionRanges::bin_of(ranges.z, 0.025) as u8,
            0,
        );
        let plan = plan_pick_place(&s, &a, &ranges, &GripperModel::default()).unwrap();
        assert!(!plan.feasible);
        assert_eq!(plan.failure_reason, Some(FailureReason::PlaceCollision));
    }

    #[test]
    fn infeasible_step_reverts_geometry_exactly() {
        let s = scene_with(&[
            (1, 0.2, Pose2::new(-0.5, 0.225, 0.0)),
            (2, 0.2, Pose2::new(0.0, 0.025, 0.0)),
        ]);
        let cfg = EnvConfig { n_blocks: 2, ..EnvConfig::default() };
        let ranges = ActionRanges::default();
        let a = DesignerAction::place(
            1,
            ActionRanges::bin_of(ranges.y, 0.0) as u8,
            ActionRanges::bin_of(ranges.z, 0.025) as u8,
            0,
        );
        let r = step_planner(&s, &a, &ranges, &cfg, &GripperModel::default()).unwrap();
        assert!(!r.executed);
        assert_eq!(r.step.reward, 0.0);
        assert!(r.step.next_state.same_geometry(&s));
        assert_eq!(r.step.next_state.step_index, 1);
    }

    #[test]
    fn feasible_step_matches_teleport_exactly() {
        let cfg = EnvConfig { n_blocks: 3, ..EnvConfig::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let s = sample_initial_state(&cfg, &mut rng).unwrap();
        let ranges = ActionRanges::default();
        let a = DesignerAction::place(
            1,
            ActionRanges::bin_of(ranges.y, 0.0) as u8,
            ActionRanges::bin_of(ranges.z, 0.4) as u8,
            0,
        );
        let g = GripperModel::default();
        let plan = plan_pick_place(&s, &a, &ranges, &g).unwrap();
        assert!(plan.feasible);
        let via_planner = step_planner(&s, &a, &ranges, &cfg, &g).unwrap();
        let via_teleport = step_teleport(&s, &a, &ranges, &cfg).unwrap();
        assert!(via_planner.executed);
        assert!(via_planner.step.next_state.same_geometry(&via_teleport.next_state));
        assert_eq!(via_planner.step.reward, via_teleport.reward);
    }

    #[test]
    fn no_op_is_always_executed_and_moves_nothing() {
        let cfg = EnvConfig { n_blocks: 2, ..EnvConfig::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s = sample_initial_state(&cfg, &mut rng).unwrap();
        let r = step_planner(
            &s,
            &DesignerAction::no_op(),
            &ActionRanges::default(),
            &cfg,
            &GripperModel::default(),
        )
        .unwrap();
        assert!(r.executed);
        assert!(r.step.next_state.same_geometry(&s));
    }

    #[test]
    fn rrt_finds_detour_when_descent_is_blocked() {
        // A deck hangs over the left half of the gap. Placing a block on the
        // floor underneath it defeats the canonical straight descent, but a
        // path through the open right half of the gap exists.
        let s = scene_with(&[
            (1, 0.1, Pose2::new(0.5, 0.225, 0.0)),
            (2, 0.24, Pose2::new(-0.17, 0.225, 0.0)),
        ]);
        let s = settle(&s).unwrap();
        let deck = s.block_by_id(2).unwrap().pose;
        assert!((deck.z - 0.225).abs() < 1e-9, "setup: deck rests on the left cliff");
        let ranges = ActionRanges::default();
        let a = DesignerAction::place(
            1,
            ActionRanges::bin_of(ranges.y, -0.06) as u8,
            ActionRanges::bin_of(ranges.z, 0.03) as u8,
            0,
        );
        let g = GripperModel::default();
        let plan = plan_pick_place(&s, &a, &ranges, &g).unwrap();
        assert!(plan.feasible, "failure: {:?}", plan.failure_reason);
        assert!(plan.waypoints.len() > 5, "expected an RRT detour, got {:?}", plan.waypoints);
        // Validate the returned waypoints with a dense interpolation check.
        let obstacles = scene_obstacles(&s, 1);
        let (hl, ht) = (0.05, 0.025);
        for pair in plan.waypoints.windows(2) {
            let (pa, pb) = (pair[0].1, pair[1].1);
            let steps = 200;
            for k in 0..=steps {
                let t = k as f64 / steps as f64;
                let pose = Pose2 {
                    y: pa.y + t * (pb.y - pa.y),
                    z: pa.z + t * (pb.z - pa.z),
                    angle: pa.angle + t * (pb.angle - pa.angle),
                };
                assert!(
                    !pose_collides(hl, ht, &pose, &g, &obstacles),
                    "waypoint interpolation collides at {pose:?}"
                );
            }
        }
    }
}
