//! The three super-resolution generator families.
//!
//! All share one global topology: conv stem, a chain of residual blocks,
//! a post-conv added back onto the stem output (global skip), log2(scale)
//! pixel-shuffle x2 upsampling stages, and a final conv. The families
//! differ in block internals:
//!
//! - `srresnet`: conv-BN-PReLU-conv-BN blocks, 9x9 stem/tail, PReLU after
//!   each upsample.
//! - `edsr`: batch norm removed everywhere, plain ReLU blocks, residual
//!   scaling 0.1, 3x3 stem/tail.
//! - `wdsr`: as EDSR but every conv is weight-normalized and blocks widen
//!   channels 6x before the nonlinearity.
//!
//! Outputs are unbounded here; inference clamps into [0, 1].

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::ParamStore;

use super::layers::{BatchNorm2d, Conv2d, PRelu};
use super::spec::{ModelKind, ModelSpec};

/// WDSR channel expansion factor before the nonlinearity.
pub const WDSR_EXPANSION: usize = 6;
/// EDSR residual scaling.
pub const EDSR_RES_SCALE: f64 = 0.1;

#[derive(Debug, Clone)]
struct SrBlock {
    conv1: Conv2d,
    bn1: Option<BatchNorm2d>,
    prelu: Option<PRelu>,
    conv2: Conv2d,
    bn2: Option<BatchNorm2d>,
    res_scale: f64,
}

impl SrBlock {
    fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var) -> Var {
        let mut h = self.conv1.forward(g, store, x);
        if let Some(bn) = &self.bn1 {
            h = bn.forward(g, store, h);
        }
        h = match &self.prelu {
            Some(p) => p.forward(g, store, h),
            None => g.relu(h),
        };
        h = self.conv2.forward(g, store, h);
        if let Some(bn) = &self.bn2 {
            h = bn.forward(g, store, h);
        }
        if self.res_scale != 1.0 {
            h = g.scale(h, self.res_scale);
        }
        g.add(h, x)
    }
}

#[derive(Debug, Clone)]
struct UpStage {
    conv: Conv2d,
    prelu: Option<PRelu>,
}

#[derive(Debug, Clone)]
pub(crate) struct SrArch {
    spec: ModelSpec,
    stem: Conv2d,
    stem_prelu: Option<PRelu>,
    blocks: Vec<SrBlock>,
    post: Conv2d,
    post_bn: Option<BatchNorm2d>,
    ups: Vec<UpStage>,
    tail: Conv2d,
}

impl SrArch {
    pub fn new(spec: &ModelSpec) -> Self {
        let w = spec.base_width;
        let kind = spec.kind;
        let wn = kind == ModelKind::Wdsr;
        let use_bn = kind == ModelKind::Srresnet;
        let big_kernel = if kind == ModelKind::Srresnet { 9 } else { 3 };
        let mk = |c: Conv2d| if wn { c.weight_normed() } else { c };

        let blocks = (0..spec.n_res_blocks)
            .map(|i| {
                let name = format!("body.block{i}");
                let hidden = if kind == ModelKind::Wdsr { w * WDSR_EXPANSION } else { w };
                SrBlock {
                    conv1: mk(Conv2d::new(format!("{name}.conv1"), w, hidden, 3)),
                    bn1: use_bn.then(|| BatchNorm2d::new(format!("{name}.bn1"), hidden)),
                    prelu: (kind == ModelKind::Srresnet)
                        .then(|| PRelu::new(format!("{name}.prelu"), hidden)),
                    conv2: mk(Conv2d::new(format!("{name}.conv2"), hidden, w, 3)),
                    bn2: use_bn.then(|| BatchNorm2d::new(format!("{name}.bn2"), w)),
                    res_scale: if kind == ModelKind::Edsr { EDSR_RES_SCALE } else { 1.0 },
                }
            })
            .collect();

        let n_ups = spec.scale.trailing_zeros() as usize; // 2 -> 1 stage, 4 -> 2
        let ups = (0..n_ups)
            .map(|i| UpStage {
                conv: mk(Conv2d::new(format!("upsample{i}.conv"), w, 4 * w, 3)),
                prelu: (kind == ModelKind::Srresnet)
                    .then(|| PRelu::new(format!("upsample{i}.prelu"), w)),
            })
            .collect();

        SrArch {
            spec: spec.clone(),
            stem: mk(Conv2d::new("stem.conv", spec.in_channels, w, big_kernel)),
            stem_prelu: (kind == ModelKind::Srresnet).then(|| PRelu::new("stem.prelu", w)),
            blocks,
            post: mk(Conv2d::new("post.conv", w, w, 3)),
            post_bn: use_bn.then(|| BatchNorm2d::new("post.bn", w)),
            ups,
            tail: mk(Conv2d::new("tail.conv", w, spec.out_channels, big_kernel)),
        }
    }

    pub fn init(&self, store: &mut ParamStore, seed: u64) {
        self.stem.init(store, seed);
        if let Some(p) = &self.stem_prelu {
            p.init(store);
        }
        for b in &self.blocks {
            b.conv1.init(store, seed);
            if let Some(bn) = &b.bn1 {
                bn.init(store);
            }
            if let Some(p) = &b.prelu {
                p.init(store);
            }
            b.conv2.init(store, seed);
            if let Some(bn) = &b.bn2 {
                bn.init(store);
            }
        }
        self.post.init(store, seed);
        if let Some(bn) = &self.post_bn {
            bn.init(store);
        }
        for u in &self.ups {
            u.conv.init(store, seed);
            if let Some(p) = &u.prelu {
                p.init(store);
            }
        }
        self.tail.init(store, seed);
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var) -> Result<Var> {
        let c = g.value(x).shape()[1];
        if c != self.spec.in_channels {
            return Err(Error::shape(
                format!("{} input channels", self.spec.in_channels),
                format!("{c}"),
            ));
        }
        let mut h = self.stem.forward(g, store, x);
        if let Some(p) = &self.stem_prelu {
            h = p.forward(g, store, h);
        }
        let stem_out = h;
        for b in &self.blocks {
            h = b.forward(g, store, h);
        }
        h = self.post.forward(g, store, h);
        if let Some(bn) = &self.post_bn {
            h = bn.forward(g, store, h);
        }
        h = g.add(h, stem_out);
        for u in &self.ups {
            h = u.conv.forward(g, store, h);
            h = g.pixel_shuffle(h, 2);
            if let Some(p) = &u.prelu {
                h = p.forward(g, store, h);
            }
        }
        Ok(self.tail.forward(g, store, h))
    }
}
