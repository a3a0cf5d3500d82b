//! Binary policy checkpoints and learning-curve CSV files.
//!
//! Layout: `b"SCNVCKPT"`, `u32` format version, `u32` header length, a JSON
//! header with the network spec and free-form training metadata, `u64`
//! parameter count, then the parameters as little-endian `f32`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::{Policy, PolicySpec};
use super::train::CurvePoint;
use super::AgentError;

const MAGIC: &[u8; 8] = b"SCNVCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: PolicySpec,
    config: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub policy: Policy,
    /// Whatever the writer stored alongside the weights (training and
    /// memory configuration, typically).
    pub config: serde_json::Value,
}

pub fn save_checkpoint(
    path: &Path,
    policy: &Policy,
    config: &serde_json::Value,
) -> Result<(), AgentError> {
    let header = serde_json::to_vec(&Header {
        spec: policy.spec().clone(),
        config: config.clone(),
    })
    .map_err(|e| AgentError::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(24 + header.len() + 4 * policy.params().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(policy.params().len() as u64).to_le_bytes());
    for &p in policy.params() {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, AgentError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| AgentError::Checkpoint(m.to_owned());
    let mut cur = bytes.as_slice();
    let mut take = |n: usize| -> Result<&[u8], AgentError> {
        if cur.len() < n {
            return Err(bad("truncated file"));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(AgentError::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(header_len)?)
        .map_err(|e| AgentError::Checkpoint(e.to_string()))?;
    let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let block = take(n.checked_mul(4).ok_or_else(|| bad("parameter count overflow"))?)?;
    let params = block
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(Checkpoint {
        policy: Policy::from_params(header.spec, params)?,
        config: header.config,
    })
}

const CURVE_HEADER: &str = "update_idx,mean_return,success_rate,mean_steps";

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<(), AgentError> {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for p in curve {
        s.push_str(&format!(
            "{},{},{},{}\n",
            p.update, p.mean_return, p.success_rate, p.mean_steps
        ));
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>, AgentError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(AgentError::Checkpoint("unexpected curve header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |i: usize| -> Result<f64, AgentError> {
                f.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| AgentError::Checkpoint(format!("bad curve row {l:?}")))
            };
            Ok(CurvePoint {
                update: num(0)? as usize,
                mean_return: num(1)?,
                success_rate: num(2)?,
                mean_steps: num(3)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Activation;
    use rand::SeedableRng;

    #[test]
    fn round_trip_and_corruption() {
        let spec = PolicySpec {
            hidden: vec![3],
            activation: Activation::Relu,
            input_dim: 2,
            n_actions: 2,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut p = Policy::init(spec, &mut rng);
        p.round_to_f32();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        let meta = serde_json::json!({"gamma": 0.99});
        save_checkpoint(&path, &p, &meta).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.policy, p);
        assert_eq!(back.config, meta);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 2);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(AgentError::Checkpoint(_))));
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn curve_round_trip() {
        let curve = vec![
            CurvePoint { update: 0, mean_return: -0.5, success_rate: 0.25, mean_steps: 40.0 },
            CurvePoint { update: 1, mean_return: 3.125, success_rate: 0.5, mean_steps: 22.5 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        write_curve_csv(&path, &curve).unwrap();
        assert_eq!(read_curve_csv(&path).unwrap(), curve);
    }
}
