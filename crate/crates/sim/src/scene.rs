//! Scene domain types, observation encoding, action decoding, and skyline hashing.

use crate::geometry::{top_at, Rect, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Cross-section side length shared by every block (width and thickness).
pub const BLOCK_SIDE: f64 = 0.05;
/// Number of discretization bins per pose dimension.
pub const POSE_BINS: usize = 64;
/// Features per observation token.
pub const OBS_FEATURES: usize = 10;
/// How far each cliff-top table extends outward from the valley, in units of
/// the standard block length.
pub const TABLE_EXTENT_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockCategory {
    Short,
    Standard,
    Long,
}

impl BlockCategory {
    pub fn as_u8(self) -> u8 {
        match self {
            BlockCategory::Short => 0,
            BlockCategory::Standard => 1,
            BlockCategory::Long => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(BlockCategory::Short),
            1 => Some(BlockCategory::Standard),
            2 => Some(BlockCategory::Long),
            _ => None,
        }
    }
}

/// Static description of one building block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockSpec {
    /// 1-based block index; action ID 0 is reserved for no-op.
    pub id: u32,
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
    pub category: BlockCategory,
}

impl BlockSpec {
    pub fn new(id: u32, length: f64, category: BlockCategory) -> Self {
        BlockSpec { id, length, width: BLOCK_SIDE, thickness: BLOCK_SIDE, category }
    }
}

/// Pose of a block in the valley-centered frame. The rectangle has 2-fold
/// symmetry, so angles are normalized into `[0, pi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2 {
    pub y: f64,
    pub z: f64,
    pub angle: f64,
}

impl Pose2 {
    pub fn new(y: f64, z: f64, angle: f64) -> Self {
        Pose2 { y, z, angle: normalize_angle(angle) }
    }
}

/// Map an arbitrary angle into `[0, pi)`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % PI;
    if r < 0.0 {
        r += PI;
    }
    if r >= PI {
        r = 0.0;
    }
    r
}

/// One block with its kinematic state. Velocities are identically zero in
/// settled scenes; they are kept as observation features.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockState {
    pub spec: BlockSpec,
    pub pose: Pose2,
    pub vel_y: f64,
    pub vel_z: f64,
    pub omega: f64,
}

impl BlockState {
    pub fn rect(&self) -> Rect {
        Rect::new(
            Vec2::new(self.pose.y, self.pose.z),
            self.spec.length / 2.0,
            self.spec.thickness / 2.0,
            self.pose.angle,
        )
    }
}

/// Full simulator snapshot: the unit of restoration for memory resets.
///
/// The frame is valley-centered: y = 0 halfway between the cliffs, z = 0 at
/// the valley floor. Blocks are kept sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneState {
    pub cliff_gap: f64,
    pub cliff_height: f64,
    pub blocks: Vec<BlockState>,
    pub step_index: u32,
}

impl SceneState {
    /// Outward horizontal extent of each cliff-top table.
    pub fn table_extent(&self) -> f64 {
        TABLE_EXTENT_FACTOR * self.cliff_height
    }

    pub fn left_cliff(&self) -> Rect {
        let ext = self.table_extent();
        Rect::axis_aligned(-(self.cliff_gap / 2.0 + ext / 2.0), self.cliff_height / 2.0, ext, self.cliff_height)
    }

    pub fn right_cliff(&self) -> Rect {
        let ext = self.table_extent();
        Rect::axis_aligned(self.cliff_gap / 2.0 + ext / 2.0, self.cliff_height / 2.0, ext, self.cliff_height)
    }

    pub fn block_by_id(&self, id: u32) -> Option<&BlockState> {
        self.blocks.iter().find(|b| b.spec.id == id)
    }

    /// Identical geometry, ignoring the step counter.
    pub fn same_geometry(&self, other: &SceneState) -> bool {
        self.cliff_gap == other.cliff_gap
            && self.cliff_height == other.cliff_height
            && self.blocks == other.blocks
    }
}

/// Continuous ranges the 64-bin action heads decode into.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRanges {
    pub y: (f64, f64),
    pub z: (f64, f64),
    pub angle: (f64, f64),
}

impl Default for ActionRanges {
    fn default() -> Self {
        ActionRanges { y: (-0.6, 0.6), z: (0.0, 0.5), angle: (0.0, PI) }
    }
}

impl ActionRanges {
    /// Center of bin `bin` over `[lo, hi)`.
    pub fn decode_bin(range: (f64, f64), bin: usize) -> f64 {
        let (lo, hi) = range;
        lo + (bin as f64 + 0.5) * (hi - lo) / POSE_BINS as f64
    }

    /// Bin whose center is nearest to `value`, clamped into range.
    pub fn bin_of(range: (f64, f64), value: f64) -> usize {
        let (lo, hi) = range;
        let t = (value - lo) / (hi - lo) * POSE_BINS as f64;
        (t.floor() as i64).clamp(0, POSE_BINS as i64 - 1) as usize
    }
}

/// Factored discrete designer action. `id == 0` is the no-op class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignerAction {
    pub id: u32,
    pub y_bin: u8,
    pub z_bin: u8,
    pub angle_bin: u8,
}

impl DesignerAction {
    pub fn no_op() -> Self {
        DesignerAction { id: 0, y_bin: 0, z_bin: 0, angle_bin: 0 }
    }

    pub fn place(id: u32, y_bin: u8, z_bin: u8, angle_bin: u8) -> Self {
        DesignerAction { id, y_bin, z_bin, angle_bin }
    }

    pub fn is_no_op(&self) -> bool {
        self.id == 0
    }
}

/// Decode the action's bins to a continuous target pose.
///
/// Errors on the no-op action, which has no pose.
pub fn decode_action(a: &DesignerAction, ranges: &ActionRanges) -> Result<Pose2, crate::SimError> {
    if a.id == 0 {
        return Err(crate::SimError::NoOpHasNoPose);
    }
    Ok(Pose2 {
        y: ActionRanges::decode_bin(ranges.y, a.y_bin as usize),
        z: ActionRanges::decode_bin(ranges.z, a.z_bin as usize),
        angle: ActionRanges::decode_bin(ranges.angle, a.angle_bin as usize),
    })
}

/// Observation as a sequence of object tokens: N blocks (ids ascending)
/// followed by the left and right cliffs.
///
/// Token layout: `[y, z, sin angle, cos angle, vy, vz, omega, length,
/// thickness, is_cliff]`. Cliffs are encoded as a slab of length L adjacent
/// to the gap so the inner cliff edge is recoverable from (y, length).
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedObs {
    pub tokens: Vec<[f32; OBS_FEATURES]>,
}

impl EncodedObs {
    pub fn n_blocks(&self) -> usize {
        self.tokens.len() - 2
    }
}

pub fn encode_observation(state: &SceneState) -> EncodedObs {
    let mut tokens = Vec::with_capacity(state.blocks.len() + 2);
    for b in &state.blocks {
        tokens.push([
            b.pose.y as f32,
            b.pose.z as f32,
            b.pose.angle.sin() as f32,
            b.pose.angle.cos() as f32,
            b.vel_y as f32,
            b.vel_z as f32,
            b.omega as f32,
            b.spec.length as f32,
            b.spec.thickness as f32,
            0.0,
        ]);
    }
    let l = state.cliff_height;
    for side in [-1.0f64, 1.0] {
        tokens.push([
            (side * (state.cliff_gap / 2.0 + l / 2.0)) as f32,
            (state.cliff_height / 2.0) as f32,
            0.0,
            1.0,
            0.0,
            0.0,
            0.0,
            l as f32,
            state.cliff_height as f32,
            1.0,
        ]);
    }
    EncodedObs { tokens }
}

/// Per-bin maximum height of the structure's upper surface over the window
/// `[-gap/2 - L, gap/2 + L]`. Uncovered bins read 0 (the valley floor);
/// a function of block and cliff geometry only.
pub fn skyline(state: &SceneState, bin_width: f64) -> Vec<f64> {
    let l = state.cliff_height;
    let lo = -(state.cliff_gap / 2.0 + l);
    let hi = state.cliff_gap / 2.0 + l;
    let n = (((hi - lo) / bin_width).round() as usize).max(1);
    let polys: Vec<Vec<Vec2>> = std::iter::once(state.left_cliff())
        .chain(std::iter::once(state.right_cliff()))
        .map(|r| r.to_poly())
        .chain(state.blocks.iter().map(|b| b.rect().to_poly()))
        .collect();
    (0..n)
        .map(|i| {
            let y = lo + (i as f64 + 0.5) * bin_width;
            polys
                .iter()
                .filter_map(|p| top_at(p, y))
                .fold(0.0f64, f64::max)
        })
        .collect()
}

/// Hash key over quantized skyline heights. Equal keys iff equal quantized
/// vectors; a small epsilon nudges heights that land exactly on a cell
/// boundary into the upper cell consistently.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SkylineKey(pub Vec<i64>);

pub fn hash_key(skyline: &[f64], height_quantum: f64) -> SkylineKey {
    SkylineKey(
        skyline
            .iter()
            .map(|h| (h / height_quantum + 1e-7).floor() as i64)
            .collect(),
    )
}
