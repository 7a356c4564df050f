use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Param, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

/// Every trainable tensor of the model, in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: BTreeMap<String, usize>,
}

/// Tape handles of a [`ParamStore`], indexed like the store.
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn get(&self, idx: usize) -> Var {
        self.0[idx]
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointIndex {
    format: String,
    dtype: String,
    tensors: Vec<CheckpointEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

const CHECKPOINT_FORMAT: &str = "neuralps-params-v1";

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), index: BTreeMap::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Invalid(format!("parameter `{name}` registered twice")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param::new(name, tensor));
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn get(&self, idx: usize) -> &Param<T> {
        &self.params[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    /// Records every parameter as a gradient-tracking leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        Bound(self.params.iter().map(|p| tape.leaf(&p.tensor)).collect())
    }

    /// Records every parameter as a constant, for evaluation.
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Bound {
        Bound(
            self.params
                .iter()
                .map(|p| tape.constant(p.tensor.shape().to_vec(), p.tensor.data().to_vec()).expect("consistent shape"))
                .collect(),
        )
    }

    /// Copies gradients of the last backward pass into the gradient slots.
    pub fn pull_grads(&mut self, tape: &Tape<T>, bound: &Bound) -> Result<(), AutodiffError> {
        for (p, &v) in self.params.iter_mut().zip(&bound.0) {
            let g = tape.grad(v).ok_or_else(|| AutodiffError::MissingGrad(p.name.clone()))?;
            p.tensor.set_grad(g)?;
        }
        Ok(())
    }

    /// Converts the store to another storage precision.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let params = self
            .params
            .iter()
            .map(|p| {
                let data: Vec<U> = p.tensor.data().iter().map(|v| U::lit(v.widen())).collect();
                Param::new(p.name.clone(), Tensor::new(p.tensor.shape().to_vec(), data).expect("same shape"))
            })
            .collect();
        ParamStore { params, index: self.index.clone() }
    }

    /// Writes `<stem>.bin` (little-endian f32, tensors back to back) and
    /// `<stem>.json` (names, shapes, byte offsets, plus `meta`).
    pub fn save_checkpoint(&self, dir: &Path, stem: &str, meta: serde_json::Value) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.num_scalars() * 4);
        let mut tensors = Vec::with_capacity(self.params.len());
        for p in &self.params {
            tensors.push(CheckpointEntry {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                offset: bytes.len(),
                length: p.tensor.numel(),
            });
            for v in p.tensor.data() {
                bytes.extend_from_slice(&(v.widen() as f32).to_le_bytes());
            }
        }
        let index = CheckpointIndex { format: CHECKPOINT_FORMAT.into(), dtype: "f32le".into(), tensors, meta };
        let bin = dir.join(format!("{stem}.bin"));
        fs::File::create(&bin).and_then(|mut f| f.write_all(&bytes)).map_err(Error::io(&bin))?;
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, serde_json::to_string_pretty(&index)?).map_err(Error::io(&json))?;
        Ok(())
    }

    /// Overwrites parameter values from a checkpoint; names and shapes must match.
    /// Returns the stored `meta` value.
    pub fn load_checkpoint(&mut self, dir: &Path, stem: &str) -> Result<serde_json::Value> {
        let json = dir.join(format!("{stem}.json"));
        let index: CheckpointIndex =
            serde_json::from_str(&fs::read_to_string(&json).map_err(Error::io(&json))?)?;
        if index.format != CHECKPOINT_FORMAT || index.dtype != "f32le" {
            return Err(Error::Invalid(format!("{}: unsupported checkpoint format", json.display())));
        }
        let bin = dir.join(format!("{stem}.bin"));
        let bytes = fs::read(&bin).map_err(Error::io(&bin))?;
        if index.tensors.len() != self.params.len() {
            return Err(Error::Invalid(format!(
                "checkpoint has {} tensors, model has {}",
                index.tensors.len(),
                self.params.len()
            )));
        }
        for entry in &index.tensors {
            let &i = self
                .index
                .get(&entry.name)
                .ok_or_else(|| Error::Invalid(format!("unknown checkpoint tensor `{}`", entry.name)))?;
            let p = &mut self.params[i];
            if p.tensor.shape() != entry.shape.as_slice() || entry.offset + entry.length * 4 > bytes.len() {
                return Err(Error::Invalid(format!("checkpoint tensor `{}` does not match the model", entry.name)));
            }
            for (k, v) in p.tensor.data_mut().iter_mut().enumerate() {
                let at = entry.offset + k * 4;
                let raw = [bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]];
                *v = T::lit(f32::from_le_bytes(raw) as f64);
            }
        }
        Ok(index.meta)
    }
}
