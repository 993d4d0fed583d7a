//! Planner executor properties: consistency with the teleporter on feasible
//! actions, exact reverts, waypoint validity, and the feasibility-restriction
//! inequality.

use bridge_sim::planner::{plan_pick_place, step_planner};
use bridge_sim::{
    sample_initial_state, step_teleport, ActionRanges, DesignerAction, EnvConfig, GripperModel,
    Pose2, SceneState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_action(rng: &mut ChaCha8Rng, n: u32) -> DesignerAction {
    DesignerAction::place(
        rng.gen_range(1..=n),
        rng.gen_range(0..64) as u8,
        rng.gen_range(0..64) as u8,
        rng.gen_range(0..64) as u8,
    )
}

#[test]
fn executor_consistency_on_feasible_actions() {
    let cfg = EnvConfig { n_blocks: 3, ..EnvConfig::default() };
    let ranges = ActionRanges::default();
    let g = GripperModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAB);
    let mut feasible_seen = 0;
    let mut reverted_seen = 0;
    for _ in 0..120 {
        let mut s = sample_initial_state(&cfg, &mut rng).unwrap();
        for _ in 0..6 {
            let a = random_action(&mut rng, 3);
            let planned = step_planner(&s, &a, &ranges, &cfg, &g).unwrap();
            if planned.executed {
                feasible_seen += 1;
                let teleported = step_teleport(&s, &a, &ranges, &cfg).unwrap();
                assert!(
                    planned.step.next_state.same_geometry(&teleported.next_state),
                    "feasible action produced different geometry"
                );
                assert_eq!(planned.step.reward, teleported.reward);
                assert_eq!(planned.step.success, teleported.success);
            } else {
                reverted_seen += 1;
                assert!(planned.step.next_state.same_geometry(&s), "revert must be exact");
                assert_eq!(planned.step.reward, 0.0);
                assert_eq!(
                    planned.step.next_state.step_index,
                    s.step_index + 1,
                    "reverted step still consumes time"
                );
            }
            s = planned.step.next_state;
            if s.step_index >= cfg.horizon {
                break;
            }
        }
    }
    assert!(feasible_seen > 50, "only {feasible_seen} feasible actions sampled");
    assert!(reverted_seen > 50, "only {reverted_seen} reverted actions sampled");
}

#[test]
fn returned_waypoints_pass_dense_collision_check() {
    let cfg = EnvConfig { n_blocks: 3, ..EnvConfig::default() };
    let ranges = ActionRanges::default();
    let g = GripperModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xCD);
    let mut checked = 0;
    for _ in 0..60 {
        let s = sample_initial_state(&cfg, &mut rng).unwrap();
        let a = random_action(&mut rng, 3);
        let plan = plan_pick_place(&s, &a, &ranges, &g).unwrap();
        if !plan.feasible {
            continue;
        }
        checked += 1;
        let block = s.block_by_id(a.id).unwrap();
        let (hl, ht) = (block.spec.length / 2.0, block.spec.thickness / 2.0);
        let rest: SceneState = SceneState {
            blocks: s.blocks.iter().filter(|b| b.spec.id != a.id).cloned().collect(),
            ..s.clone()
        };
        for pair in plan.waypoints.windows(2) {
            let (pa, pb) = (pair[0].1, pair[1].1);
            let len = ((pb.y - pa.y).hypot(pb.z - pa.z)).max((pb.angle - pa.angle).abs() * 0.3);
            let steps = ((len / 0.001).ceil() as usize).clamp(1, 4000);
            for k in 0..=steps {
                let t = k as f64 / steps as f64;
                let pose = Pose2 {
                    y: pa.y + t * (pb.y - pa.y),
                    z: pa.z + t * (pb.z - pa.z),
                    angle: pa.angle + t * (pb.angle - pa.angle),
                };
                assert!(
                    !swept_block_collides(&rest, hl, ht, &pose, &g),
                    "dense check failed along {:?} -> {:?}",
                    pa,
                    pb
                );
            }
        }
    }
    assert!(checked > 20, "only {checked} feasible plans checked");
}

/// Independent static collision probe for the dense interpolation check:
/// block plus finger and body boxes against the remaining scene.
fn swept_block_collides(
    rest: &SceneState,
    hl: f64,
    ht: f64,
    pose: &Pose2,
    g: &GripperModel,
) -> bool {
    use bridge_sim::geometry::{penetration_depth, Rect, Vec2};
    let (s, c) = pose.angle.sin_cos();
    let local = |lx: f64, lz: f64, hw: f64, hh: f64| {
        Rect::new(
            Vec2::new(pose.y + c * lx - s * lz, pose.z + s * lx + c * lz),
            hw,
            hh,
            pose.angle,
        )
    };
    let fc = g.finger_clearance / 2.0;
    let fh = ht / 2.0;
    let parts = [
        local(0.0, 0.0, hl, ht),
        local(hl + fc, ht - fh, fc, fh),
        local(-(hl + fc), ht - fh, fc, fh),
        local(0.0, ht + g.footprint.1 / 2.0, g.footprint.0 / 2.0, g.footprint.1 / 2.0),
    ];
    let mut obstacles: Vec<Vec<Vec2>> =
        rest.blocks.iter().map(|b| b.rect().to_poly()).collect();
    obstacles.push(rest.left_cliff().to_poly());
    obstacles.push(rest.right_cliff().to_poly());
    for p in &parts {
        if p.min_z() < -1e-6 {
            return true;
        }
        let poly = p.to_poly();
        for o in &obstacles {
            if penetration_depth(&poly, o) > 1e-6 {
                return true;
            }
        }
    }
    false
}

#[test]
fn planner_success_rate_bounded_by_teleport_rate() {
    // Same random action stream, matched seeds: the feasibility layer can
    // only remove options.
    let cfg = EnvConfig { n_blocks: 3, gap_range: (0.75, 1.5), ..EnvConfig::default() };
    let ranges = ActionRanges::default();
    let g = GripperModel::default();
    let episodes = 200;
    let mut tele_successes = 0;
    let mut plan_successes = 0;
    for ep in 0..episodes {
        for planner in [false, true] {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + ep);
            let mut s = sample_initial_state(&cfg, &mut rng).unwrap();
            let mut succeeded = false;
            for _ in 0..cfg.horizon {
                let a = random_action(&mut rng, 3);
                let r = if planner {
                    step_planner(&s, &a, &ranges, &cfg, &g).unwrap().step
                } else {
                    step_teleport(&s, &a, &ranges, &cfg).unwrap()
                };
                succeeded |= r.success;
                s = r.next_state;
            }
            if succeeded {
                if planner {
                    plan_successes += 1;
                } else {
                    tele_successes += 1;
                }
            }
        }
    }
    assert!(
        plan_successes <= tele_successes,
        "planner rate {plan_successes}/{episodes} exceeds teleport rate {tele_successes}/{episodes}"
    );
}
