//! Network construction, forward evaluation and weight persistence.
//!
//! Models are described by a [`ModelSpec`], built into a [`ModelParams`]
//! (spec plus named weight arrays), and evaluated with [`forward`].
//! Forward passes are deterministic: no noise is injected anywhere, so the
//! same parameters and batch always produce bitwise-identical outputs.

mod discriminator;
mod layers;
mod spec;
mod srnet;
mod unet;
mod weights;

use std::path::Path;

use ndarray::{Array2, Array4};

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::ParamStore;

pub use spec::{ModelKind, ModelSpec};
pub use srnet::{EDSR_RES_SCALE, WDSR_EXPANSION};

use discriminator::{PatchDiscArch, ResnetDiscArch};
use srnet::SrArch;
use unet::UnetArch;

/// Seed used when a builder is not given one explicitly.
pub const DEFAULT_INIT_SEED: u64 = 0x0a57_1209;

enum Arch {
    Unet(UnetArch),
    Sr(SrArch),
    Patch(PatchDiscArch),
    ResnetDisc(ResnetDiscArch),
}

impl Arch {
    fn from_spec(spec: &ModelSpec) -> Result<Arch> {
        spec.validate()?;
        Ok(match spec.kind {
            ModelKind::UnetColorizer => Arch::Unet(UnetArch::new(spec)),
            ModelKind::Srresnet | ModelKind::Edsr | ModelKind::Wdsr => {
                Arch::Sr(SrArch::new(spec))
            }
            ModelKind::PatchDiscriminator => Arch::Patch(PatchDiscArch::new(spec)),
            ModelKind::ResnetDiscriminator => Arch::ResnetDisc(ResnetDiscArch::new(spec)),
        })
    }

    fn init(&self, store: &mut ParamStore, seed: u64) {
        match self {
            Arch::Unet(a) => a.init(store, seed),
            Arch::Sr(a) => a.init(store, seed),
            Arch::Patch(a) => a.init(store, seed),
            Arch::ResnetDisc(a) => a.init(store, seed),
        }
    }

    fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var) -> Result<Var> {
        match self {
            Arch::Unet(a) => a.forward(g, store, x),
            Arch::Sr(a) => a.forward(g, store, x),
            Arch::Patch(a) => a.forward(g, store, x),
            Arch::ResnetDisc(a) => a.forward(g, store, x),
        }
    }
}

/// A built model: architecture description plus its weight arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    spec: ModelSpec,
    pub(crate) store: ParamStore,
}

impl ModelParams {
    pub(crate) fn from_parts(spec: ModelSpec, store: ParamStore) -> Self {
        ModelParams { spec, store }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Sum of element counts over all trainable weight arrays.
    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    /// True when every weight and buffer is finite.
    pub fn all_finite(&self) -> bool {
        self.store.all_finite()
    }

    /// Writes the weights container (spec record, named arrays, checksum).
    pub fn save(&self, path: &Path) -> Result<()> {
        let spec_json = serde_json::to_vec(&self.spec)?;
        let mut arrays: Vec<weights::RawArray> = self
            .store
            .params()
            .map(|(name, value)| weights::RawArray {
                kind: weights::KIND_PARAM,
                name: name.clone(),
                value: value.clone(),
            })
            .collect();
        arrays.extend(self.store.buffers().map(|(name, value)| weights::RawArray {
            kind: weights::KIND_BUFFER,
            name: name.clone(),
            value: value.clone(),
        }));
        weights::write_container(path, &spec_json, &arrays)
    }

    /// Reads a weights container, reconstructing the architecture from the
    /// embedded spec record.
    pub fn load(path: &Path) -> Result<ModelParams> {
        let (spec_json, arrays) = weights::read_container(path)?;
        let spec: ModelSpec = serde_json::from_slice(&spec_json)?;
        // Build a skeleton so names/shapes are validated against the spec.
        let mut model = build(&spec, DEFAULT_INIT_SEED)?;
        model.apply_arrays(path, arrays, None)?;
        Ok(model)
    }

    /// Loads weights from `path` into an existing model, rejecting the file
    /// if its embedded spec differs.
    pub fn load_into(&mut self, path: &Path) -> Result<()> {
        let (spec_json, arrays) = weights::read_container(path)?;
        let spec: ModelSpec = serde_json::from_slice(&spec_json)?;
        if spec != self.spec {
            return Err(Error::SpecMismatch {
                expected: self.spec.summary(),
                found: spec.summary(),
            });
        }
        self.apply_arrays(path, arrays, None)
    }

    fn apply_arrays(
        &mut self,
        path: &Path,
        arrays: Vec<weights::RawArray>,
        prefix: Option<&str>,
    ) -> Result<()> {
        let werr = |reason: String| Error::Weights {
            path: path.display().to_string(),
            reason,
        };
        for a in arrays {
            if let Some(p) = prefix {
                if !a.name.starts_with(p) {
                    continue;
                }
            }
            if a.kind == weights::KIND_PARAM {
                if !self.store.contains(&a.name) {
                    return Err(werr(format!("unknown parameter '{}'", a.name)));
                }
                let dst = self.store.get_mut(&a.name);
                if dst.shape() != a.value.shape() {
                    return Err(werr(format!(
                        "shape mismatch for '{}': {:?} vs {:?}",
                        a.name,
                        dst.shape(),
                        a.value.shape()
                    )));
                }
                *dst = a.value;
            } else {
                self.store.set_buffer(&a.name, a.value);
            }
        }
        Ok(())
    }
}

/// Writes auxiliary named arrays (e.g. optimizer moments) in the weights
/// container format, tagged with the model spec they belong to.
pub(crate) fn save_aux_arrays(
    path: &Path,
    spec: &ModelSpec,
    arrays: &std::collections::BTreeMap<String, ndarray::ArrayD<f64>>,
) -> Result<()> {
    let spec_json = serde_json::to_vec(spec)?;
    let raw: Vec<weights::RawArray> = arrays
        .iter()
        .map(|(name, value)| weights::RawArray {
            kind: weights::KIND_PARAM,
            name: name.clone(),
            value: value.clone(),
        })
        .collect();
    weights::write_container(path, &spec_json, &raw)
}

/// Counterpart of [`save_aux_arrays`].
pub(crate) fn load_aux_arrays(
    path: &Path,
) -> Result<(ModelSpec, std::collections::BTreeMap<String, ndarray::ArrayD<f64>>)> {
    let (spec_json, arrays) = weights::read_container(path)?;
    let spec: ModelSpec = serde_json::from_slice(&spec_json)?;
    Ok((
        spec,
        arrays.into_iter().map(|a| (a.name, a.value)).collect(),
    ))
}

/// Builds any architecture from its spec with seeded He initialization.
pub fn build(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    let arch = Arch::from_spec(spec)?;
    let mut store = ParamStore::new();
    arch.init(&mut store, seed);
    Ok(ModelParams {
        spec: spec.clone(),
        store,
    })
}

/// Builds the U-Net colorizer. With `pretrained_encoder` set, encoder
/// weights are loaded from `encoder_weights` (an error names the path if
/// the file is missing or unreadable).
pub fn build_unet_generator(
    spec: &ModelSpec,
    seed: u64,
    encoder_weights: Option<&Path>,
) -> Result<ModelParams> {
    if spec.kind != ModelKind::UnetColorizer {
        return Err(Error::contract(format!(
            "build_unet_generator requires kind unet_colorizer, got {:?}",
            spec.kind
        )));
    }
    let mut model = build(spec, seed)?;
    if spec.pretrained_encoder {
        let path = encoder_weights.ok_or_else(|| Error::Weights {
            path: "<none>".into(),
            reason: "pretrained_encoder set but no encoder weights file given".into(),
        })?;
        let (_, arrays) = weights::read_container(path)?;
        model.apply_arrays(path, arrays, Some("encoder."))?;
    }
    Ok(model)
}

/// Builds one of the SR generator families (srresnet / edsr / wdsr).
pub fn build_sr_generator(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    if !spec.kind.is_sr() {
        return Err(Error::contract(format!(
            "build_sr_generator requires an SR kind, got {:?}",
            spec.kind
        )));
    }
    build(spec, seed)
}

/// Builds a patch discriminator (conv or residual-network backbone).
pub fn build_patch_discriminator(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    if !spec.kind.is_discriminator() {
        return Err(Error::contract(format!(
            "build_patch_discriminator requires a discriminator kind, got {:?}",
            spec.kind
        )));
    }
    build(spec, seed)
}

fn check_batch(spec: &ModelSpec, batch: &Array4<f64>) -> Result<()> {
    let (_, c, h, w) = batch.dim();
    if c != spec.in_channels {
        return Err(Error::shape(
            format!("{} channels for {}", spec.in_channels, spec.summary()),
            format!("{c} channels"),
        ));
    }
    if h == 0 || w == 0 {
        return Err(Error::shape("non-empty spatial dims", format!("{h}x{w}")));
    }
    Ok(())
}

/// Appends the model to an existing tape (training path). Batch-norm uses
/// batch statistics iff `g.training`.
pub(crate) fn forward_on_graph(
    params: &mut ModelParams,
    g: &mut Graph,
    x: Var,
) -> Result<Var> {
    let arch = Arch::from_spec(&params.spec)?;
    arch.forward(g, &mut params.store, x)
}

/// Deterministic eval-mode forward pass. Generators return the predicted
/// image batch (SR families clamped into [0, 1]); discriminators return
/// the patch logit map.
pub fn forward(params: &ModelParams, batch: &Array4<f64>) -> Result<Array4<f64>> {
    check_batch(&params.spec, batch)?;
    let arch = Arch::from_spec(&params.spec)?;
    let mut g = Graph::new(false);
    let x = g.leaf4(batch.clone());
    // eval mode never mutates buffers; clone keeps the public API immutable
    let mut store = params.store.clone();
    let y = arch.forward(&mut g, &mut store, x)?;
    let mut out = g.value4(y);
    if params.spec.kind.is_sr() {
        out.mapv_inplace(|v| v.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Pooled deep features for FID-style evaluation: global average of the
/// activation map just before the logit head. Only discriminator kinds
/// expose features.
pub fn forward_features(params: &ModelParams, batch: &Array4<f64>) -> Result<Array2<f64>> {
    check_batch(&params.spec, batch)?;
    let arch = Arch::from_spec(&params.spec)?;
    let mut g = Graph::new(false);
    let x = g.leaf4(batch.clone());
    let mut store = params.store.clone();
    let feat = match &arch {
        Arch::Patch(a) => a.forward_penultimate(&mut g, &mut store, x)?,
        Arch::ResnetDisc(a) => a.forward_penultimate(&mut g, &mut store, x)?,
        _ => {
            return Err(Error::contract(
                "feature extraction requires a discriminator kind",
            ))
        }
    };
    let map = g.value4(feat);
    let (b, c, h, w) = map.dim();
    let mut out = Array2::zeros((b, c));
    for bi in 0..b {
        for ci in 0..c {
            out[(bi, ci)] = map
                .index_axis(ndarray::Axis(0), bi)
                .index_axis(ndarray::Axis(0), ci)
                .sum()
                / (h * w) as f64;
        }
    }
    Ok(out)
}

/// Patch logit map side length for a square input, computed from the
/// discriminator's layer configuration.
pub fn logit_map_size(spec: &ModelSpec, input_side: usize) -> Result<usize> {
    match Arch::from_spec(spec)? {
        Arch::Patch(a) => Ok(a.logit_map_size(input_side)),
        Arch::ResnetDisc(a) => Ok(a.logit_map_size(input_side)),
        _ => Err(Error::contract("logit map size applies to discriminators")),
    }
}

/// Encoder parameter-name prefix for pretrained-weight loading.
pub fn encoder_prefix(spec: &ModelSpec) -> Result<String> {
    match Arch::from_spec(spec)? {
        Arch::Unet(a) => Ok(format!("{}.", a.encoder_prefix())),
        Arch::ResnetDisc(a) => Ok(format!("{}.", a.encoder_prefix())),
        _ => Err(Error::contract("this architecture has no encoder")),
    }
}
