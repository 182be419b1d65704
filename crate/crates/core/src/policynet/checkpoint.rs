//! Binary checkpoint format.
//!
//! ```text
//! magic     8 bytes  "PNMCTSNT"
//! version   u32 LE
//! hdr_len   u32 LE
//! header    hdr_len bytes of JSON (config, metadata, counts)
//! theta     f64 LE x param_count
//! running   f64 LE x (2 x hidden_layers x hidden_width), mean then var per layer
//! adam      optional: f64 LE x 2 x param_count (m then v), step count in header
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetConfig, NetParams, NormStats, Optimizer, TrainConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PNMCTSNT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Policy iterations completed when the checkpoint was written.
    pub iteration: u64,
    /// Curriculum phase label, free-form.
    #[serde(default)]
    pub phase: String,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: NetConfig,
    meta: CheckpointMeta,
    param_count: usize,
    adam_steps: Option<u64>,
    train: Option<TrainConfig>,
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn take_f64s(buf: &[u8], pos: &mut usize, n: usize) -> Result<Vec<f64>> {
    let end = *pos + n * 8;
    if end > buf.len() {
        return Err(Error::Checkpoint("truncated checkpoint".into()));
    }
    let values = buf[*pos..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    *pos = end;
    Ok(values)
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &NetParams,
    meta: &CheckpointMeta,
    optimizer: Option<(&Optimizer, &TrainConfig)>,
) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        config: *params.config(),
        meta: meta.clone(),
        param_count: params.num_params(),
        adam_steps: optimizer.map(|(o, _)| o.state().2),
        train: optimizer.map(|(_, c)| *c),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    put_f64s(&mut out, params.theta());
    for s in params.running_stats() {
        put_f64s(&mut out, &s.mean);
        put_f64s(&mut out, &s.var);
    }
    if let Some((opt, _)) = optimizer {
        let (m, v, _) = opt.state();
        put_f64s(&mut out, m);
        put_f64s(&mut out, v);
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Loads parameters, metadata and (when present) optimizer state.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
) -> Result<(NetParams, CheckpointMeta, Option<(Optimizer, TrainConfig)>)> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    if buf.len() < 16 || &buf[..8] != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let hdr_len = u32::from_le_bytes(buf[12..16].try_into().expect("4 bytes")) as usize;
    let mut pos = 16 + hdr_len;
    if pos > buf.len() {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&buf[16..pos]).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let cfg = header.config;
    let theta = take_f64s(&buf, &mut pos, header.param_count)?;
    let layers = if cfg.batch_norm { cfg.hidden_layers } else { 0 };
    let mut running = Vec::with_capacity(layers);
    for _ in 0..layers {
        let mean = take_f64s(&buf, &mut pos, cfg.hidden_width)?;
        let var = take_f64s(&buf, &mut pos, cfg.hidden_width)?;
        running.push(NormStats { mean, var });
    }
    let params = NetParams::from_parts(cfg, theta, running)?;
    let optimizer = match (header.adam_steps, header.train) {
        (Some(t), Some(train)) => {
            let m = take_f64s(&buf, &mut pos, header.param_count)?;
            let v = take_f64s(&buf, &mut pos, header.param_count)?;
            let opt = Optimizer::restore(&params, &train, m, v, t)
                .ok_or_else(|| Error::Checkpoint("optimizer state does not match parameters".into()))?;
            Some((opt, train))
        }
        _ => None,
    };
    if pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes after checkpoint payload".into()));
    }
    Ok((params, header.meta, optimizer))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut params = NetParams::init(NetConfig::desk(), 17).unwrap();
        params.running_stats_mut()[1].mean[3] = 0.123456789;
        let meta = CheckpointMeta {
            iteration: 12,
            phase: "clear".into(),
            seed: 5,
        };
        let cfg = TrainConfig::default();
        let opt = Optimizer::new(&params, &cfg);
        save_checkpoint(&path, &params, &meta, Some((&opt, &cfg))).unwrap();
        let (back, back_meta, back_opt) = load_checkpoint(&path).unwrap();
        assert_eq!(back, params);
        assert_eq!(back_meta, meta);
        assert_eq!(back_opt.unwrap().0, opt);

        save_checkpoint(&path, &params, &meta, None).unwrap();
        let (again, _, none) = load_checkpoint(&path).unwrap();
        assert_eq!(again, params);
        assert!(none.is_none());
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
