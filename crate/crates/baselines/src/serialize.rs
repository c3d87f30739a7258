//! Versioned binary persistence for fitted baselines, with a JSON
//! sidecar describing what was trained.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use forest_core::DriverClass;
use serde::{Deserialize, Serialize};

use crate::linear::{LogisticModel, RidgeModel};
use crate::tree::{DecisionTree, Node};
use crate::{
    BaselineError, BaselineKind, BaselineVariant, FittedModel, Hyperparams, KnnModel,
    RandomForest, Result,
};

const MAGIC: &[u8; 4] = b"FDBM";
const VERSION: u32 = 1;

/// Sidecar written next to the binary model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub kind: BaselineKind,
    pub variant: BaselineVariant,
    pub hyperparams: Hyperparams,
    /// FNV-1a of the feature column names the model was trained on.
    pub feature_ordering_hash: String,
    pub n_features: usize,
}

/// Writes `<path>` (binary weights) and `<path>.json` (sidecar).
pub fn save_model(model: &FittedModel, sidecar: &ModelSidecar, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    match model {
        FittedModel::Tree(t) => {
            buf.push(0);
            write_tree(&mut buf, t);
        }
        FittedModel::Forest(f) => {
            buf.push(1);
            buf.push(f.bootstrap as u8);
            buf.push(f.feature_subsample as u8);
            write_u64(&mut buf, f.trees.len() as u64);
            for t in &f.trees {
                write_tree(&mut buf, t);
            }
        }
        FittedModel::Logistic(m) => {
            buf.push(2);
            write_u64(&mut buf, m.n_features as u64);
            write_f64s(&mut buf, &m.weights);
        }
        FittedModel::Ridge(m) => {
            buf.push(3);
            write_u64(&mut buf, m.n_features as u64);
            buf.extend_from_slice(&m.strength.to_le_bytes());
            write_f64s(&mut buf, &m.weights);
        }
        FittedModel::Knn(m) => {
            buf.push(4);
            write_u64(&mut buf, m.k as u64);
            write_u64(&mut buf, m.exemplars.len() as u64);
            write_u64(&mut buf, m.exemplars.first().map(|r| r.len()).unwrap_or(0) as u64);
            for row in &m.exemplars {
                write_f64s_raw(&mut buf, row);
            }
            for &label in &m.labels {
                buf.push(label.index() as u8);
            }
        }
        FittedModel::Mlp(m) => {
            buf.push(5);
            let blob = m.to_bytes();
            write_u64(&mut buf, blob.len() as u64);
            buf.extend_from_slice(&blob);
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    let json = serde_json::to_vec_pretty(sidecar)?;
    fs::write(path.with_extension("json"), json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(FittedModel, ModelSidecar)> {
    let sidecar: ModelSidecar =
        serde_json::from_slice(&fs::read(path.with_extension("json"))?)?;
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC.as_slice() {
        return Err(BaselineError::CorruptModel("bad magic".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(BaselineError::CorruptModel(format!(
            "unsupported version {version}"
        )));
    }
    let tag = cur.take(1)?[0];
    let model = match tag {
        0 => FittedModel::Tree(read_tree(&mut cur)?),
        1 => {
            let bootstrap = cur.take(1)?[0] != 0;
            let feature_subsample = cur.take(1)?[0] != 0;
            let n = cur.read_u64()? as usize;
            let trees = (0..n)
                .map(|_| read_tree(&mut cur))
                .collect::<Result<Vec<_>>>()?;
            FittedModel::Forest(RandomForest {
                trees,
                bootstrap,
                feature_subsample,
            })
        }
        2 => {
            let n_features = cur.read_u64()? as usize;
            let weights = cur.read_f64s()?;
            FittedModel::Logistic(LogisticModel { weights, n_features })
        }
        3 => {
            let n_features = cur.read_u64()? as usize;
            let strength = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
            let weights = cur.read_f64s()?;
            FittedModel::Ridge(RidgeModel {
                weights,
                n_features,
                strength,
            })
        }
        4 => {
            let k = cur.read_u64()? as usize;
            let n = cur.read_u64()? as usize;
            let d = cur.read_u64()? as usize;
            let mut exemplars = Vec::with_capacity(n);
            for _ in 0..n {
                exemplars.push(cur.read_f64s_raw(d)?);
            }
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let idx = cur.take(1)?[0] as usize;
                labels.push(DriverClass::from_index(idx).ok_or_else(|| {
                    BaselineError::CorruptModel(format!("label index {idx}"))
                })?);
            }
            FittedModel::Knn(KnnModel { exemplars, labels, k })
        }
        5 => {
            let len = cur.read_u64()? as usize;
            let blob = cur.take(len)?;
            FittedModel::Mlp(crate::MlpModel::from_bytes(blob)?)
        }
        other => {
            return Err(BaselineError::CorruptModel(format!(
                "unknown model tag {other}"
            )))
        }
    };
    Ok((model, sidecar))
}

fn write_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn write_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    write_u64(buf, values.len() as u64);
    write_f64s_raw(buf, values);
}

fn write_f64s_raw(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_tree(buf: &mut Vec<u8>, tree: &DecisionTree) {
    write_u64(buf, tree.n_features as u64);
    write_node(buf, &tree.root);
}

fn write_node(buf: &mut Vec<u8>, node: &Node) {
    match node {
        Node::Leaf { class } => {
            buf.push(0);
            buf.push(*class);
        }
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            buf.push(1);
            buf.extend_from_slice(&feature.to_le_bytes());
            buf.extend_from_slice(&threshold.to_le_bytes());
            write_node(buf, left);
            write_node(buf, right);
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(BaselineError::CorruptModel("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn read_f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.read_u64()? as usize;
        self.read_f64s_raw(n)
    }

    fn read_f64s_raw(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn read_tree(cur: &mut Cursor<'_>) -> Result<DecisionTree> {
    let n_features = cur.read_u64()? as usize;
    let root = read_node(cur)?;
    Ok(DecisionTree { root, n_features })
}

fn read_node(cur: &mut Cursor<'_>) -> Result<Node> {
    match cur.take(1)?[0] {
        0 => Ok(Node::Leaf { class: cur.take(1)?[0] }),
        1 => {
            let feature = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
            let threshold = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
            let left = read_node(cur)?;
            let right = read_node(cur)?;
            Ok(Node::Split {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        other => Err(BaselineError::CorruptModel(format!("node tag {other}"))),
    }
}
