use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Role of a parameter, used to exempt biases and norm affines from decay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    Norm,
    /// Circuit rotation angles.
    Angle,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight | ParamKind::Angle)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub path: String,
    pub kind: ParamKind,
    pub tensor: Tensor,
}

/// Ordered, path-addressed parameter registry.
///
/// Order is insertion order and is the checkpoint layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, path: impl Into<String>, kind: ParamKind, tensor: Tensor) -> usize {
        let path = path.into();
        debug_assert!(self.index_of(&path).is_none(), "duplicate parameter path {path}");
        self.entries.push(ParamEntry { path, kind, tensor });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn index_of(&self, path: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.path == path)
    }

    pub fn get(&self, path: &str) -> Option<&Tensor> {
        self.index_of(path).map(|i| &self.entries[i].tensor)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Tensor> {
        self.index_of(path).map(move |i| &mut self.entries[i].tensor)
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].tensor
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    /// Replaces a parameter's values, keeping its shape.
    pub fn set(&mut self, path: &str, data: Vec<f64>) -> Result<()> {
        let t = self
            .get_mut(path)
            .ok_or_else(|| Error::contract(format!("no parameter `{path}`")))?;
        if data.len() != t.numel() {
            return Err(Error::dim("ParamStore::set", t.shape(), &[data.len()]));
        }
        t.data_mut().copy_from_slice(&data);
        Ok(())
    }
}
