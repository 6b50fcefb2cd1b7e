//! Named parameter and buffer storage.

use std::collections::BTreeMap;

use ndarray::ArrayD;

/// Ordered map from layer path to weight array, plus non-trainable buffers
/// (batch-norm running statistics). `BTreeMap` keeps iteration order stable
/// so optimizer sweeps and serialized files are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, ArrayD<f64>>,
    buffers: BTreeMap<String, ArrayD<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<f64>) {
        let name = name.into();
        debug_assert!(!self.params.contains_key(&name), "duplicate param {name}");
        self.params.insert(name, value);
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, value: ArrayD<f64>) {
        self.buffers.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter '{name}'"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<f64> {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter '{name}'"))
    }

    pub fn buffer(&self, name: &str) -> &ArrayD<f64> {
        self.buffers
            .get(name)
            .unwrap_or_else(|| panic!("missing buffer '{name}'"))
    }

    pub fn set_buffer(&mut self, name: &str, value: ArrayD<f64>) {
        *self
            .buffers
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing buffer '{name}'")) = value;
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn params(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.params.iter()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&String, &mut ArrayD<f64>)> {
        self.params.iter_mut()
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.buffers.iter()
    }

    pub fn param_names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    /// Total element count over all trainable weight arrays.
    pub fn param_count(&self) -> usize {
        self.params.values().map(|a| a.len()).sum()
    }

    /// True when every parameter and buffer value is finite.
    pub fn all_finite(&self) -> bool {
        self.params
            .values()
            .chain(self.buffers.values())
            .all(|a| a.iter().all(|v| v.is_finite()))
    }
}
