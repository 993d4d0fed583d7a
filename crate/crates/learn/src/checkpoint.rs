//! JSON checkpoint envelope:
//! `{format_version, config_hash, tensors: {name: {shape, data}}}` with
//! tensor data as base64 little-endian f32.

use crate::nn::{NetConfig, Params};
use crate::tensor::Tensor;
use crate::LearnError;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: (usize, usize),
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    config_hash: String,
    net: NetConfig,
    tensors: BTreeMap<String, TensorRecord>,
}

pub fn to_json(params: &Params, config_hash: &str) -> String {
    let tensors = params
        .tensors
        .iter()
        .map(|(name, t)| {
            let mut bytes = Vec::with_capacity(t.data.len() * 4);
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            (
                name.clone(),
                TensorRecord { shape: t.shape(), data: B64.encode(&bytes) },
            )
        })
        .collect();
    let env = Envelope {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        net: params.cfg,
        tensors,
    };
    serde_json::to_string(&env).expect("checkpoint serializes")
}

pub fn save(params: &Params, config_hash: &str, path: &Path) -> Result<(), LearnError> {
    std::fs::write(path, to_json(params, config_hash))?;
    Ok(())
}

/// Returns the parameters and the config hash recorded at save time.
pub fn from_json(json: &str) -> Result<(Params, String), LearnError> {
    let env: Envelope =
        serde_json::from_str(json).map_err(|e| LearnError::Checkpoint(e.to_string()))?;
    if env.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(LearnError::Checkpoint(format!(
            "unsupported checkpoint format version {}",
            env.format_version
        )));
    }
    let mut tensors = BTreeMap::new();
    for (name, rec) in env.tensors {
        let bytes = B64
            .decode(rec.data.as_bytes())
            .map_err(|e| LearnError::Checkpoint(format!("{name}: {e}")))?;
        if bytes.len() != rec.shape.0 * rec.shape.1 * 4 {
            return Err(LearnError::Checkpoint(format!("{name}: length mismatch")));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.insert(name, Tensor::from_vec(rec.shape.0, rec.shape.1, data));
    }
    Ok((Params { cfg: env.net, tensors }, env.config_hash))
}

pub fn load(path: &Path) -> Result<(Params, String), LearnError> {
    let json = std::fs::read_to_string(path)?;
    from_json(&json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = Params::init(NetConfig::default(), &mut rng);
        let json = to_json(&params, "deadbeef00000000");
        let (back, hash) = from_json(&json).unwrap();
        assert_eq!(hash, "deadbeef00000000");
        assert_eq!(params, back);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(from_json("{").is_err());
        assert!(from_json("{\"format_version\":99,\"config_hash\":\"\",\"net\":{},\"tensors\":{}}").is_err());
    }
}
