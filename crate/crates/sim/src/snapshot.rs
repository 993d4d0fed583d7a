//! Versioned binary scene snapshots.
//!
//! Layout (all multi-byte values little-endian):
//!
//! ```text
//! magic    7 bytes  "PMRSCN1"
//! version  u8       1
//! cliff_gap    f64
//! cliff_height f64
//! n_blocks     u32
//! per block (ids ascending):
//!   id        u32
//!   category  u8    (0 short, 1 standard, 2 long)
//!   length, width, thickness          f64 each
//!   y, z, angle                       f64 each
//!   vel_y, vel_z, omega               f64 each
//! ```
//!
//! The step counter is intentionally not stored: restored states always
//! start a fresh episode at step 0.

use crate::scene::{BlockCategory, BlockSpec, BlockState, Pose2, SceneState};
use crate::SimError;

pub const SNAPSHOT_MAGIC: &[u8; 7] = b"PMRSCN1";
pub const SNAPSHOT_VERSION: u8 = 1;

pub fn snapshot(state: &SceneState) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + state.blocks.len() * 77);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.push(SNAPSHOT_VERSION);
    out.extend_from_slice(&state.cliff_gap.to_le_bytes());
    out.extend_from_slice(&state.cliff_height.to_le_bytes());
    out.extend_from_slice(&(state.blocks.len() as u32).to_le_bytes());
    for b in &state.blocks {
        out.extend_from_slice(&b.spec.id.to_le_bytes());
        out.push(b.spec.category.as_u8());
        for v in [
            b.spec.length,
            b.spec.width,
            b.spec.thickness,
            b.pose.y,
            b.pose.z,
            b.pose.angle,
            b.vel_y,
            b.vel_z,
            b.omega,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SimError> {
        if self.pos + n > self.buf.len() {
            return Err(SimError::SnapshotDecode("truncated snapshot".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64, SimError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, SimError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, SimError> {
        Ok(self.take(1)?[0])
    }
}

pub fn restore(bytes: &[u8]) -> Result<SceneState, SimError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(7)? != SNAPSHOT_MAGIC {
        return Err(SimError::SnapshotDecode("bad magic".into()));
    }
    let version = r.u8()?;
    if version != SNAPSHOT_VERSION {
        return Err(SimError::SnapshotDecode(format!("unsupported version {version}")));
    }
    let cliff_gap = r.f64()?;
    let cliff_height = r.f64()?;
    let n = r.u32()? as usize;
    let mut blocks = Vec::with_capacity(n);
    for _ in 0..n {
        let id = r.u32()?;
        let category = BlockCategory::from_u8(r.u8()?)
            .ok_or_else(|| SimError::SnapshotDecode("bad category".into()))?;
        let length = r.f64()?;
        let width = r.f64()?;
        let thickness = r.f64()?;
        let y = r.f64()?;
        let z = r.f64()?;
        let angle = r.f64()?;
        let vel_y = r.f64()?;
        let vel_z = r.f64()?;
        let omega = r.f64()?;
        blocks.push(BlockState {
            spec: BlockSpec { id, length, width, thickness, category },
            pose: Pose2 { y, z, angle },
            vel_y,
            vel_z,
            omega,
        });
    }
    if r.pos != bytes.len() {
        return Err(SimError::SnapshotDecode("trailing bytes".into()));
    }
    Ok(SceneState { cliff_gap, cliff_height, blocks, step_index: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_initial_state, settle, step_teleport, EnvConfig};
    use crate::scene::{ActionRanges, DesignerAction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let mut s = sample_initial_state(&cfg, &mut rng).unwrap();
            // Scatter a few blocks to get non-trivial poses.
            for _ in 0..3 {
                let a = DesignerAction::place(
                    rng.gen_range(1..=7),
                    rng.gen_range(0..64) as u8,
                    rng.gen_range(0..64) as u8,
                    rng.gen_range(0..64) as u8,
                );
                s = step_teleport(&s, &a, &ActionRanges::default(), &cfg).unwrap().next_state;
            }
            let restored = restore(&snapshot(&s)).unwrap();
            assert!(restored.same_geometry(&s));
            assert_eq!(restored.step_index, 0);
        }
    }

    #[test]
    fn restore_resets_step_index() {
        let cfg = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = sample_initial_state(&cfg, &mut rng).unwrap();
        s.step_index = 17;
        let restored = restore(&snapshot(&s)).unwrap();
        assert_eq!(restored.step_index, 0);
        assert!(restored.same_geometry(&s));
        // Restored scenes are valid settled scenes.
        assert!(settle(&restored).unwrap().same_geometry(&restored));
    }

    #[test]
    fn format_header_is_stable() {
        let s = SceneState {
            cliff_gap: 0.4,
            cliff_height: 0.2,
            blocks: vec![],
            step_index: 0,
        };
        let bytes = snapshot(&s);
        assert_eq!(&bytes[..7], b"PMRSCN1");
        assert_eq!(bytes[7], 1);
        assert_eq!(bytes.len(), 7 + 1 + 8 + 8 + 4);
    }

    #[test]
    fn malformed_bytes_are_rejected() {
        assert!(restore(b"PMRSCNX\x01").is_err());
        assert!(restore(&[]).is_err());
        let s = SceneState { cliff_gap: 0.4, cliff_height: 0.2, blocks: vec![], step_index: 0 };
        let mut bytes = snapshot(&s);
        bytes.push(0);
        assert!(restore(&bytes).is_err());
    }
}
