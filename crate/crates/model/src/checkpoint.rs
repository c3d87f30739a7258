//! Checkpoint persistence: a versioned binary of named parameter (and
//! normalization-state) tensors, plus a JSON sidecar with every piece of
//! configuration inference needs. Save -> load -> predict is bit
//! identical to predicting in memory.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use forest_core::augment::AugmentConfig;
use forest_core::features::Standardizer;
use forest_core::raster::Band;

use crate::error::{ModelError, Result};
use crate::model::Aggregate;
use crate::segnet::SegNetConfig;
use crate::tensor::Tensor;
use crate::train::{BandStats, TrainConfig};

const MAGIC: &[u8; 4] = b"FDCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub segnet: SegNetConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub bands: Vec<Band>,
    pub band_stats: BandStats,
    pub aux_standardizer: Option<Standardizer>,
    pub aux_dim: Option<usize>,
    pub aggregate: Aggregate,
    /// FNV-1a hex of the auxiliary feature column names.
    pub feature_ordering_hash: String,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Sorted by name; includes trainable parameters and BN running
    /// statistics.
    pub tensors: Vec<(String, Tensor)>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, tensor) in &self.tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(tensor.shape.len() as u32).to_le_bytes());
            for &d in &tensor.shape {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &tensor.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        fs::write(
            sidecar_path(path),
            serde_json::to_vec_pretty(&self.meta)?,
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let meta: CheckpointMeta = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(ModelError::CorruptCheckpoint("truncated".into()));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        if take(&mut pos, 4)? != MAGIC.as_slice() {
            return Err(ModelError::CorruptCheckpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != VERSION {
            return Err(ModelError::CorruptCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let n_tensors = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
                .map_err(|_| ModelError::CorruptCheckpoint("bad tensor name".into()))?;
            let ndim = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = take(&mut pos, numel * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor::from_vec(&shape, data)));
        }
        Ok(Checkpoint { tensors, meta })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    PathBuf::from(os)
}

#[cfg(test)]
mod tests {
    use super::*;
    use forest_core::raster::Band;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            version: VERSION,
            segnet: SegNetConfig::default(),
            train: TrainConfig::default(),
            augment: AugmentConfig::default(),
            bands: vec![Band::Red, Band::Green, Band::Blue],
            band_stats: BandStats {
                means: vec![0.2, 0.3, 0.4],
                stds: vec![0.1, 0.1, 0.1],
            },
            aux_standardizer: None,
            aux_dim: None,
            aggregate: Aggregate::Logits,
            feature_ordering_hash: "abc123".into(),
            best_epoch: 3,
            best_val_macro_f1: 0.75,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ckpt = Checkpoint {
            tensors: vec![
                ("a.w".into(), Tensor::from_vec(&[2, 2], vec![1.5, -2.25, 0.0, 1e-300])),
                ("b.b".into(), Tensor::from_vec(&[3], vec![0.1, 0.2, 0.3])),
            ],
            meta: meta(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn identical_checkpoints_serialize_identically() {
        let ckpt = Checkpoint {
            tensors: vec![("x.w".into(), Tensor::from_vec(&[2], vec![0.5, -0.5]))],
            meta: meta(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        ckpt.save(&p1).unwrap();
        ckpt.save(&p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(
            fs::read(sidecar_path(&p1)).unwrap(),
            fs::read(sidecar_path(&p2)).unwrap()
        );
    }
}
