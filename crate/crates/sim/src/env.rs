//! Deterministic 2D quasi-static construction environment.
//!
//! The settle procedure replaces dynamic physics with a fixed-point loop:
//! drop every unsupported block straight down to first contact, then topple
//! any block whose center of mass hangs outside its support interval by
//! rotating it about the nearest support edge until the next contact. A
//! state is settled when nothing moves.

use crate::geometry::{
    drop_distance, intersects_strictly, penetration_depth, top_at, vertical_separation_down,
    vertical_separation_up, Rect, Vec2,
};
use crate::scene::{
    decode_action, ActionRanges, BlockCategory, BlockSpec, BlockState, DesignerAction, Pose2,
    SceneState, BLOCK_SIDE,
};
use crate::SimError;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Contact tolerance: boundary distances below this count as touching.
const CONTACT_TOL: f64 = 1e-7;
/// Minimum displacement worth applying; smaller moves are treated as none.
const MOVE_TOL: f64 = 1e-12;
/// Penetration depth above this counts as a collision during topple sweeps.
const PEN_TOL: f64 = 1e-9;
/// Angular step of the topple sweep before bisection refinement.
const SWEEP_STEP: f64 = 0.01;
/// Settle gives up (loudly) after this many passes.
const MAX_SETTLE_PASSES: usize = 1000;
/// Topple sweeps below this angle are jammed contacts, not motion. Must stay
/// above the angle-snap tolerance or snapping would turn micro-rotations
/// into perpetual center drift.
const JAM_TOL: f64 = 1e-5;
/// Spacing between staged blocks on the tables.
const STAGING_SPACING: f64 = 0.06;
/// Clearance between the cliff edge and the first staged block.
const STAGING_EDGE_MARGIN: f64 = 0.05;

/// Environment parameters. Defaults follow the task description: standard
/// length 0.2 m, 30-step horizon, gap sampled from [0.75, 3.75] cliff heights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub n_blocks: u32,
    /// Standard block length L; also the cliff height.
    pub length_std: f64,
    pub horizon: u32,
    /// Gap range in multiples of L.
    pub gap_range: (f64, f64),
    pub seed: u64,
    pub ray_count: u32,
    pub success_tolerance: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            n_blocks: 7,
            length_std: 0.2,
            horizon: 30,
            gap_range: (0.75, 3.75),
            seed: 0,
            ray_count: 64,
            success_tolerance: 1e-3,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_blocks == 0 {
            return Err(SimError::Config("n_blocks must be at least 1".into()));
        }
        if self.horizon < 1 {
            return Err(SimError::Config("horizon must be at least 1".into()));
        }
        if !(self.length_std > 0.0) {
            return Err(SimError::Config("length_std must be positive".into()));
        }
        let (lo, hi) = self.gap_range;
        if !(0.75 - 1e-12..=3.75 + 1e-12).contains(&lo)
            || !(0.75 - 1e-12..=3.75 + 1e-12).contains(&hi)
            || lo > hi
        {
            return Err(SimError::Config(format!(
                "gap_range {:?} must lie within [0.75, 3.75]",
                self.gap_range
            )));
        }
        if self.ray_count == 0 {
            return Err(SimError::Config("ray_count must be at least 1".into()));
        }
        if self.success_tolerance < 0.0 {
            return Err(SimError::Config("success_tolerance must be non-negative".into()));
        }
        Ok(())
    }

    /// Block multiset per the initial state distribution:
    /// floor(N/2) standard, ceil(N/4) long, the rest short.
    pub fn block_counts(&self) -> (u32, u32, u32) {
        let n = self.n_blocks;
        let standard = n / 2;
        let long = n.div_ceil(4);
        let short = n.div_ceil(2) - long;
        (standard, long, short)
    }
}

/// Result of one environment step.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub next_state: SceneState,
    pub reward: f64,
    pub success: bool,
    pub terminal: bool,
}

/// Sample an initial state: gap width, block multiset, and a flat staging
/// layout on the cliff-top tables (alternating sides, ids ascending).
pub fn sample_initial_state<R: Rng>(cfg: &EnvConfig, rng: &mut R) -> Result<SceneState, SimError> {
    cfg.validate()?;
    let l = cfg.length_std;
    let gap = rng.gen_range(cfg.gap_range.0..=cfg.gap_range.1) * l;
    let (n_std, n_long, n_short) = cfg.block_counts();

    let mut lengths: Vec<(f64, BlockCategory)> = Vec::with_capacity(cfg.n_blocks as usize);
    for _ in 0..n_std {
        lengths.push((l, BlockCategory::Standard));
    }
    for _ in 0..n_long {
        lengths.push((rng.gen_range(1.1 * l..=1.25 * l), BlockCategory::Long));
    }
    for _ in 0..n_short {
        lengths.push((rng.gen_range(0.5 * l..=0.9 * l), BlockCategory::Short));
    }

    let table = crate::scene::TABLE_EXTENT_FACTOR * l;
    let mut cursor = [gap / 2.0 + STAGING_EDGE_MARGIN; 2];
    let mut blocks = Vec::with_capacity(lengths.len());
    for (i, (length, category)) in lengths.iter().enumerate() {
        let side = i % 2; // 0 = left table, 1 = right table
        let sign = if side == 0 { -1.0 } else { 1.0 };
        let y = sign * (cursor[side] + length / 2.0);
        cursor[side] += length + STAGING_SPACING;
        if cursor[side] > gap / 2.0 + table - STAGING_EDGE_MARGIN {
            return Err(SimError::Config(format!(
                "cannot stage {} blocks on the tables without overlap",
                cfg.n_blocks
            )));
        }
        blocks.push(BlockState {
            spec: BlockSpec::new(i as u32 + 1, *length, *category),
            pose: Pose2::new(y, l + BLOCK_SIDE / 2.0, 0.0),
            vel_y: 0.0,
            vel_z: 0.0,
            omega: 0.0,
        });
    }
    Ok(SceneState { cliff_gap: gap, cliff_height: l, blocks, step_index: 0 })
}

/// Obstacles a block can rest on: every other block plus the two cliffs.
fn obstacle_polys(state: &SceneState, skip: usize) -> Vec<Vec<Vec2>> {
    let mut polys = Vec::with_capacity(state.blocks.len() + 1);
    for (j, b) in state.blocks.iter().enumerate() {
        if j != skip {
            polys.push(b.rect().to_poly());
        }
    }
    polys.push(state.left_cliff().to_poly());
    polys.push(state.right_cliff().to_poly());
    polys
}

/// Distance this rect can fall before touching an obstacle or the floor.
fn fall_distance(rect: &Rect, obstacles: &[Vec<Vec2>]) -> f64 {
    let poly = rect.to_poly();
    let mut d = rect.min_z(); // to the valley floor
    for obs in obstacles {
        if let Some(g) = drop_distance(&poly, obs) {
            d = d.min(g);
        }
    }
    d.max(0.0)
}

/// Contact points supporting the rect from below (within tolerance),
/// including the floor.
fn support_contacts(rect: &Rect, obstacles: &[Vec<Vec2>]) -> Vec<Vec2> {
    let poly = rect.to_poly();
    let mut contacts = Vec::new();
    for v in &poly {
        if v.z <= CONTACT_TOL {
            contacts.push(Vec2::new(v.y, 0.0));
        }
    }
    for obs in obstacles {
        for v in &poly {
            if let Some(top) = top_at(obs, v.y) {
                if (v.z - top).abs() <= CONTACT_TOL {
                    contacts.push(Vec2::new(v.y, top));
                }
            }
        }
        for v in obs {
            if let Some(bot) = crate::geometry::bottom_at(&poly, v.y) {
                if (bot - v.z).abs() <= CONTACT_TOL && v.z <= rect.center.z {
                    contacts.push(*v);
                }
            }
        }
    }
    contacts
}

fn collides_any(rect: &Rect, obstacles: &[Vec<Vec2>]) -> bool {
    if rect.min_z() < -PEN_TOL {
        return true;
    }
    let poly = rect.to_poly();
    obstacles.iter().any(|o| penetration_depth(&poly, o) > PEN_TOL)
}

/// Rotate `rect` about `pivot` in direction `dir` (+1 ccw, -1 cw) until the
/// first contact, the pendulum rest angle, or a quarter turn. Returns the
/// rotated rect and the swept angle magnitude.
fn topple_about(rect: &Rect, pivot: Vec2, dir: f64, obstacles: &[Vec<Vec2>]) -> (Rect, f64) {
    // Stop once the center of mass hangs straight below the pivot.
    let ry = rect.center.y - pivot.y;
    let rz = rect.center.z - pivot.z;
    let mut max_phi = std::f64::consts::FRAC_PI_2;
    let r = (ry * ry + rz * rz).sqrt();
    if r > 1e-12 {
        // Angle from the current center direction to straight-down, swept in `dir`.
        let cur = rz.atan2(ry);
        let down = -std::f64::consts::FRAC_PI_2;
        let mut delta = (down - cur) * dir;
        while delta < 0.0 {
            delta += 2.0 * std::f64::consts::PI;
        }
        max_phi = max_phi.min(delta);
    }

    let mut prev = 0.0f64;
    let mut phi = SWEEP_STEP;
    let mut hit = None;
    while phi <= max_phi + 1e-12 {
        let cand = rect.rotated_about(pivot, dir * phi);
        if collides_any(&cand, obstacles) {
            hit = Some((prev, phi));
            break;
        }
        prev = phi;
        phi += SWEEP_STEP;
    }
    let (mut lo, mut hi) = match hit {
        Some(range) => range,
        None => {
            let cand = rect.rotated_about(pivot, dir * max_phi);
            if collides_any(&cand, obstacles) {
                (prev, max_phi)
            } else {
                return (rect.rotated_about(pivot, dir * max_phi), max_phi);
            }
        }
    };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if collides_any(&rect.rotated_about(pivot, dir * mid), obstacles) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (rect.rotated_about(pivot, dir * lo), lo)
}

/// Snap angles that ended within tolerance of a flat orientation, then
/// normalize into [0, pi).
fn snap_angle(angle: f64) -> f64 {
    let quarter = std::f64::consts::FRAC_PI_2;
    let k = (angle / quarter).round();
    let snapped = if (angle - k * quarter).abs() < 1e-6 { k * quarter } else { angle };
    crate::scene::normalize_angle(snapped)
}

/// Settle the scene to a quasi-static fixed point. Deterministic: blocks are
/// processed lowest-first (ties by id) and every motion is resolved exactly.
pub fn settle(state: &SceneState) -> Result<SceneState, SimError> {
    let mut s = state.clone();
    for b in &mut s.blocks {
        b.vel_y = 0.0;
        b.vel_z = 0.0;
        b.omega = 0.0;
    }
    for _pass in 0..MAX_SETTLE_PASSES {
        let mut moved = false;
        let mut order: Vec<usize> = (0..s.blocks.len()).collect();
        order.sort_by(|&i, &j| {
            let zi = s.blocks[i].pose.z;
            let zj = s.blocks[j].pose.z;
            zi.partial_cmp(&zj)
                .unwrap()
                .then(s.blocks[i].spec.id.cmp(&s.blocks[j].spec.id))
        });
        for idx in order {
            let obstacles = obstacle_polys(&s, idx);
            let mut rect = s.blocks[idx].rect();

            // Deep overlap (only possible on malformed input) is pushed out
            // upward before anything else; keeps settle total.
            let lift = resolve_up(&rect, &obstacles);
            if lift > CONTACT_TOL {
                rect = rect.translated(0.0, lift);
                moved = true;
            }

            let d = fall_distance(&rect, &obstacles);
            if d > MOVE_TOL {
                rect = rect.translated(0.0, -d);
                moved = true;
            }

            let contacts = support_contacts(&rect, &obstacles);
            if !contacts.is_empty() {
                let min_y = contacts.iter().map(|c| c.y).fold(f64::INFINITY, f64::min);
                let max_y = contacts.iter().map(|c| c.y).fold(f64::NEG_INFINITY, f64::max);
                let com = rect.center.y;
                if com < min_y - CONTACT_TOL || com > max_y + CONTACT_TOL {
                    let (pivot, dir) = if com > max_y {
                        // Tipping over the rightmost support: clockwise.
                        (*contacts
                            .iter()
                            .max_by(|a, b| a.y.partial_cmp(&b.y).unwrap())
                            .unwrap(),
                        -1.0)
                    } else {
                        (*contacts
                            .iter()
                            .min_by(|a, b| a.y.partial_cmp(&b.y).unwrap())
                            .unwrap(),
                        1.0)
                    };
                    let (rotated, swept) = topple_about(&rect, pivot, dir, &obstacles);
                    if swept > JAM_TOL {
                        rect = rotated;
                        rect.angle = snap_angle(rect.angle);
                        // The sweep endpoint and the angle snap may leave a
                        // hair of penetration; lift it out.
                        let poly = rect.to_poly();
                        let mut up = (-rect.min_z()).max(0.0);
                        for obs in &obstacles {
                            up = up.max(vertical_separation_up(&poly, obs));
                        }
                        if up > 0.0 {
                            rect = rect.translated(0.0, up);
                        }
                        moved = true;
                    }
                }
            }

            let b = &mut s.blocks[idx];
            b.pose = Pose2 { y: rect.center.y, z: rect.center.z, angle: snap_angle(rect.angle) };
        }
        if !moved {
            return Ok(s);
        }
    }
    Err(SimError::Unsettled)
}

/// Heights of the structure's upper surface at the ray abscissas used by the
/// success check: `ray_count` rays evenly spaced strictly inside the gap.
pub fn success_ray_heights(state: &SceneState, ray_count: u32) -> Vec<(f64, f64)> {
    let gap = state.cliff_gap;
    let polys: Vec<Vec<Vec2>> = std::iter::once(state.left_cliff().to_poly())
        .chain(std::iter::once(state.right_cliff().to_poly()))
        .chain(state.blocks.iter().map(|b| b.rect().to_poly()))
        .collect();
    (0..ray_count)
        .map(|i| {
            let y = -gap / 2.0 + (i as f64 + 0.5) * gap / ray_count as f64;
            let h = polys.iter().filter_map(|p| top_at(p, y)).fold(0.0f64, f64::max);
            (y, h)
        })
        .collect()
}

/// A bridge stands when every ray cast down inside the gap first hits at or
/// above the cliff height plus one block thickness (minus the tolerance).
pub fn check_success(state: &SceneState, cfg: &EnvConfig) -> bool {
    let threshold = state.cliff_height + BLOCK_SIDE - cfg.success_tolerance;
    success_ray_heights(state, cfg.ray_count)
        .iter()
        .all(|(_, h)| *h >= threshold)
}

/// Minimal upward shift that frees the rect from every obstacle and the
/// floor; iterated because clearing one obstacle can enter another above.
fn resolve_up(rect: &Rect, obstacles: &[Vec<Vec2>]) -> f64 {
    let mut total = 0.0;
    let mut cur = *rect;
    for _ in 0..8 {
        let poly = cur.to_poly();
        let mut up = (-cur.min_z()).max(0.0);
        for obs in obstacles {
            up = up.max(vertical_separation_up(&poly, obs));
        }
        if up <= MOVE_TOL {
            return total;
        }
        total += up;
        cur = cur.translated(0.0, up);
    }
    // Fallback: hoist above everything in the overlapped column.
    let mut top = 0.0f64;
    for obs in obstacles {
        top = top.max(obs.iter().map(|v| v.z).fold(0.0, f64::max));
    }
    (top + (rect.half_len + rect.half_thick) - rect.min_z()).max(total)
}

/// Move a block to `pose`, resolving any initial penetration by the smaller
/// vertical shift (ties go up), without settling.
fn place_block(state: &mut SceneState, idx: usize, pose: Pose2) {
    state.blocks[idx].pose = pose;
    let obstacles = obstacle_polys(state, idx);
    let rect = state.blocks[idx].rect();
    let poly = rect.to_poly();

    let up = resolve_up(&rect, &obstacles);
    if up <= MOVE_TOL {
        return;
    }
    let mut down: f64 = 0.0;
    for obs in &obstacles {
        down = down.max(vertical_separation_down(&poly, obs));
    }
    // Moving down is only admissible if it actually clears everything
    // (something below, or the floor, may re-collide).
    let down_ok = down > MOVE_TOL && {
        let cand = rect.translated(0.0, -down);
        !collides_any(&cand, &obstacles)
    };
    let dz = if down_ok && down < up { -down } else { up };
    state.blocks[idx].pose.z += dz;
}

/// The teleport executor: reposition the selected block at the decoded pose,
/// settle the whole scene, and grant the per-step reward if the bridge stands.
pub fn step_teleport(
    state: &SceneState,
    action: &DesignerAction,
    ranges: &ActionRanges,
    cfg: &EnvConfig,
) -> Result<StepResult, SimError> {
    if state.step_index >= cfg.horizon {
        return Err(SimError::EpisodeOver);
    }
    let mut next = state.clone();
    if !action.is_no_op() {
        let idx = state
            .blocks
            .iter()
            .position(|b| b.spec.id == action.id)
            .ok_or(SimError::InvalidAction(action.id))?;
        let pose = decode_action(action, ranges)?;
        place_block(&mut next, idx, pose);
        next = settle(&next)?;
    }
    next.step_index = state.step_index + 1;
    let success = check_success(&next, cfg);
    Ok(StepResult {
        terminal: next.step_index >= cfg.horizon,
        reward: if success { 0.1 } else { 0.0 },
        success,
        next_state: next,
    })
}

/// Maximum pairwise penetration depth between blocks (and into cliffs).
/// Settled scenes keep this at numerical-noise level.
pub fn max_penetration(state: &SceneState) -> f64 {
    let mut worst = 0.0f64;
    let polys: Vec<Vec<Vec2>> = state.blocks.iter().map(|b| b.rect().to_poly()).collect();
    let cliffs = [state.left_cliff().to_poly(), state.right_cliff().to_poly()];
    for i in 0..polys.len() {
        for j in i + 1..polys.len() {
            worst = worst.max(penetration_depth(&polys[i], &polys[j]));
        }
        for c in &cliffs {
            worst = worst.max(penetration_depth(&polys[i], c));
        }
        worst = worst.max(-state.blocks[i].rect().min_z());
    }
    worst
}

/// Independent stability probe used by tests: every block must rest on the
/// floor, a cliff, or other blocks with its center of mass inside the
/// horizontal span of its support contacts.
pub fn is_statically_stable(state: &SceneState, tol: f64) -> bool {
    for (idx, b) in state.blocks.iter().enumerate() {
        let obstacles = obstacle_polys(state, idx);
        let rect = b.rect();
        if fall_distance(&rect, &obstacles) > tol {
            return false;
        }
        let contacts = support_contacts(&rect, &obstacles);
        if contacts.is_empty() {
            return false;
        }
        let min_y = contacts.iter().map(|c| c.y).fold(f64::INFINITY, f64::min);
        let max_y = contacts.iter().map(|c| c.y).fold(f64::NEG_INFINITY, f64::max);
        let com = rect.center.y;
        // Jammed blocks (wedged so they cannot rotate) also count as stable;
        // approximate by allowing contact with a side wall to widen support.
        if com < min_y - tol || com > max_y + tol {
            let dir = if com > max_y { -1.0 } else { 1.0 };
            let pivot = if com > max_y {
                *contacts.iter().max_by(|a, b| a.y.partial_cmp(&b.y).unwrap()).unwrap()
            } else {
                *contacts.iter().min_by(|a, b| a.y.partial_cmp(&b.y).unwrap()).unwrap()
            };
            let (_, swept) = topple_about(&rect, pivot, dir, &obstacles);
            if swept > JAM_TOL {
                return false;
            }
        }
    }
    true
}

/// True when the strict-overlap test finds no pair of blocks intersecting.
pub fn no_strict_overlap(state: &SceneState, eps: f64) -> bool {
    let polys: Vec<Vec<Vec2>> = state.blocks.iter().map(|b| b.rect().to_poly()).collect();
    for i in 0..polys.len() {
        for j in i + 1..polys.len() {
            if intersects_strictly(&polys[i], &polys[j], eps) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base_cfg(n: u32) -> EnvConfig {
        EnvConfig { n_blocks: n, ..EnvConfig::default() }
    }

    fn empty_scene(gap: f64) -> SceneState {
        SceneState { cliff_gap: gap, cliff_height: 0.2, blocks: vec![], step_index: 0 }
    }

    fn add_block(s: &mut SceneState, id: u32, len: f64, pose: Pose2) {
        s.blocks.push(BlockState {
            spec: BlockSpec::new(id, len, BlockCategory::Standard),
            pose,
            vel_y: 0.0,
            vel_z: 0.0,
            omega: 0.0,
        });
        s.blocks.sort_by_key(|b| b.spec.id);
    }

    #[test]
    fn block_counts_match_formula() {
        assert_eq!(base_cfg(7).block_counts(), (3, 2, 2));
        assert_eq!(base_cfg(1).block_counts(), (0, 1, 0));
        assert_eq!(base_cfg(3).block_counts(), (1, 1, 1));
    }

    #[test]
    fn initial_state_is_settled_and_disjoint() {
        let cfg = base_cfg(7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = sample_initial_state(&cfg, &mut rng).unwrap();
            assert_eq!(s.blocks.len(), 7);
            assert_eq!(s.step_index, 0);
            let settled = settle(&s).unwrap();
            assert!(settled.same_geometry(&s), "staging layout must already be settled");
            assert!(no_strict_overlap(&s, 1e-9));
        }
    }

    #[test]
    fn gap_sampling_is_uniform() {
        // Kolmogorov-Smirnov against U[0.15, 0.75] over 10k samples;
        // critical value for p > 0.01 is 1.628 / sqrt(n).
        let cfg = base_cfg(3);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mut gaps: Vec<f64> = (0..n)
            .map(|_| sample_initial_state(&cfg, &mut rng).unwrap().cliff_gap)
            .collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (lo, hi) = (0.75 * 0.2, 3.75 * 0.2);
        let mut d_stat = 0.0f64;
        for (i, g) in gaps.iter().enumerate() {
            assert!(*g >= lo && *g <= hi);
            let cdf = (g - lo) / (hi - lo);
            let e_lo = i as f64 / n as f64;
            let e_hi = (i + 1) as f64 / n as f64;
            d_stat = d_stat.max((cdf - e_lo).abs()).max((cdf - e_hi).abs());
        }
        assert!(d_stat < 1.628 / (n as f64).sqrt(), "KS statistic {d_stat} too large");
    }

    #[test]
    fn free_fall_to_floor() {
        let mut s = empty_scene(0.4);
        add_block(&mut s, 1, 0.2, Pose2::new(0.0, 0.3, 0.0));
        let settled = settle(&s).unwrap();
        assert!((settled.blocks[0].pose.z - 0.025).abs() < 1e-9);
        assert_eq!(settled.blocks[0].pose.y, 0.0);
        assert_eq!(settled.blocks[0].pose.angle, 0.0);
    }

    #[test]
    fn supported_block_unchanged() {
        let mut s = empty_scene(0.4);
        add_block(&mut s, 1, 0.3, Pose2::new(0.0, 0.025, 0.0));
        add_block(&mut s, 2, 0.1, Pose2::new(0.0, 0.075, 0.0));
        let settled = settle(&s).unwrap();
        assert!(settled.same_geometry(&s));
    }

    #[test]
    fn overhanging_block_topples() {
        let mut s = empty_scene(0.4);
        // Support column standing on the floor.
        add_block(&mut s, 1, 0.1, Pose2::new(0.0, 0.025, 0.0));
        // Block whose center of mass sits 0.01 m beyond the support's right edge.
        add_block(&mut s, 2, 0.1, Pose2::new(0.06, 0.075, 0.0));
        let settled = settle(&s).unwrap();
        assert!(!settled.same_geometry(&s), "unstable block must move");
        assert!(is_statically_stable(&settled, 1e-6));
        assert!(no_strict_overlap(&settled, 1e-6));
    }

    #[test]
    fn settle_is_idempotent_on_constructed_scene() {
        let mut s = empty_scene(0.35);
        add_block(&mut s, 1, 0.2, Pose2::new(-0.1, 0.4, 0.3));
        add_block(&mut s, 2, 0.24, Pose2::new(0.05, 0.3, 1.2));
        add_block(&mut s, 3, 0.14, Pose2::new(0.0, 0.5, 2.0));
        let once = settle(&s).unwrap();
        let twice = settle(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn success_examples() {
        let cfg = base_cfg(1);
        let empty = empty_scene(0.3);
        assert!(!check_success(&empty, &cfg));

        // Single block longer than the gap resting flat across both cliffs.
        let mut s = empty_scene(0.3);
        add_block(&mut s, 1, 0.4, Pose2::new(0.0, 0.225, 0.0));
        let s = settle(&s).unwrap();
        assert!((s.blocks[0].pose.z - 0.225).abs() < 1e-9);
        assert!(check_success(&s, &cfg));

        // Shift it so one ray position near the far edge is uncovered.
        let mut off = empty_scene(0.3);
        add_block(&mut off, 1, 0.4, Pose2::new(0.12, 0.225, 0.0));
        let off = settle(&off).unwrap();
        assert!(!check_success(&off, &cfg));
    }

    #[test]
    fn success_monotone_in_tolerance() {
        let mut s = empty_scene(0.3);
        add_block(&mut s, 1, 0.4, Pose2::new(0.0, 0.225, 0.0));
        let s = settle(&s).unwrap();
        let mut cfg = base_cfg(1);
        let mut prev = false;
        for tol in [0.0, 1e-4, 1e-3, 1e-2, 0.05] {
            cfg.success_tolerance = tol;
            let cur = check_success(&s, &cfg);
            assert!(cur >= prev, "increasing tolerance flipped success off");
            prev = cur;
        }
    }

    #[test]
    fn teleport_no_op_repeats_reward_in_success_state() {
        let cfg = base_cfg(1);
        let mut s = empty_scene(0.3);
        add_block(&mut s, 1, 0.4, Pose2::new(0.0, 0.225, 0.0));
        let s = settle(&s).unwrap();
        assert!(check_success(&s, &cfg));
        let r = step_teleport(&s, &DesignerAction::no_op(), &ActionRanges::default(), &cfg).unwrap();
        assert_eq!(r.reward, 0.1);
        assert!(r.success);
        assert!(r.next_state.same_geometry(&s));
    }

    #[test]
    fn step_at_horizon_minus_one_is_terminal() {
        let cfg = base_cfg(1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = sample_initial_state(&cfg, &mut rng).unwrap();
        s.step_index = 29;
        let r = step_teleport(&s, &DesignerAction::no_op(), &ActionRanges::default(), &cfg).unwrap();
        assert!(r.terminal);
        assert_eq!(r.next_state.step_index, 30);
        let done = step_teleport(&r.next_state, &DesignerAction::no_op(), &ActionRanges::default(), &cfg);
        assert!(matches!(done, Err(SimError::EpisodeOver)));
    }

    #[test]
    fn teleport_mid_air_block_falls_to_floor() {
        // Gap much wider than the block: placed over the middle with no
        // support, it must settle onto the valley floor.
        let cfg = base_cfg(1);
        let mut s = empty_scene(0.6);
        add_block(&mut s, 1, 0.2, Pose2::new(-0.8, 0.225, 0.0));
        let ranges = ActionRanges::default();
        let a = DesignerAction::place(
            1,
            ActionRanges::bin_of(ranges.y, 0.0) as u8,
            ActionRanges::bin_of(ranges.z, 0.45) as u8,
            0,
        );
        let r = step_teleport(&s, &a, &ranges, &cfg).unwrap();
        assert_eq!(r.reward, 0.0);
        let b = r.next_state.block_by_id(1).unwrap();
        assert!((b.pose.z - 0.025).abs() < 1e-6, "landed at z={}", b.pose.z);
        assert!(is_statically_stable(&r.next_state, 1e-6));
    }

    #[test]
    fn invalid_action_id_rejected() {
        let cfg = base_cfg(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample_initial_state(&cfg, &mut rng).unwrap();
        let a = DesignerAction::place(5, 0, 0, 0);
        assert!(matches!(
            step_teleport(&s, &a, &ActionRanges::default(), &cfg),
            Err(SimError::InvalidAction(5))
        ));
    }

    #[test]
    fn tilted_placement_settles_flat_across_cliffs() {
        let cfg = base_cfg(1);
        let mut s = empty_scene(0.2);
        // Slightly tilted long block above the gap: should topple flat onto
        // both cliff tops and count as a bridge.
        add_block(&mut s, 1, 0.3, Pose2::new(0.0, 0.3, 0.05));
        let settled = settle(&s).unwrap();
        assert!(settled.blocks[0].pose.angle.abs() < 1e-9, "angle {}", settled.blocks[0].pose.angle);
        assert!(check_success(&settled, &cfg));
    }
}
