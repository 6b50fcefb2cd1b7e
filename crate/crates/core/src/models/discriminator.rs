//! Patch discriminators: a spatial map of real/fake logits instead of a
//! single scalar, one logit per receptive field.

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::ops::conv_out_size;
use crate::nn::ParamStore;

use super::layers::{BatchNorm2d, Conv2d, LEAKY_SLOPE};
use super::spec::ModelSpec;
use super::unet::ResnetEncoder;

/// Markovian patch discriminator: `patch_layers` stride-2 4x4 convs (the
/// first without norm), then two stride-1 convs, the last producing the
/// 1-channel logit map. No sigmoid: the objectives work on logits.
#[derive(Debug, Clone)]
pub(crate) struct PatchDiscArch {
    spec: ModelSpec,
    downs: Vec<(Conv2d, Option<BatchNorm2d>)>,
    pre_head: Conv2d,
    pre_head_bn: BatchNorm2d,
    head: Conv2d,
}

/// Width of layer `i` (0-based) at base width `w`: doubles per layer,
/// capped at 8w.
fn layer_width(base: usize, i: usize) -> usize {
    base << i.min(3)
}

impl PatchDiscArch {
    pub fn new(spec: &ModelSpec) -> Self {
        let base = spec.base_width;
        let mut downs = Vec::with_capacity(spec.patch_layers);
        let mut prev = spec.in_channels;
        for i in 0..spec.patch_layers {
            let w = layer_width(base, i);
            let conv = Conv2d::new(format!("disc.down{i}.conv"), prev, w, 4)
                .stride(2)
                .pad(1);
            if i == 0 {
                downs.push((conv, None));
            } else {
                downs.push((conv.no_bias(), Some(BatchNorm2d::new(format!("disc.down{i}.bn"), w))));
            }
            prev = w;
        }
        let penult = layer_width(base, spec.patch_layers);
        PatchDiscArch {
            spec: spec.clone(),
            pre_head: Conv2d::new("disc.pre_head.conv", prev, penult, 4)
                .pad(1)
                .no_bias(),
            pre_head_bn: BatchNorm2d::new("disc.pre_head.bn", penult),
            head: Conv2d::new("disc.head.conv", penult, 1, 4).pad(1),
            downs,
        }
    }

    pub fn init(&self, store: &mut ParamStore, seed: u64) {
        for (c, bn) in &self.downs {
            c.init(store, seed);
            if let Some(bn) = bn {
                bn.init(store);
            }
        }
        self.pre_head.init(store, seed);
        self.pre_head_bn.init(store);
        self.head.init(store, seed);
    }

    /// Logit map size for an input side length, straight from the layer
    /// configuration (stride-2 stack, then two k=4, p=1, s=1 convs).
    pub fn logit_map_size(&self, mut n: usize) -> usize {
        for (c, _) in &self.downs {
            n = conv_out_size(n, c.kernel, c.stride, c.pad);
        }
        n = conv_out_size(n, self.pre_head.kernel, 1, self.pre_head.pad);
        conv_out_size(n, self.head.kernel, 1, self.head.pad)
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var) -> Result<Var> {
        self.check_input(g, x)?;
        let h = self.forward_trunk(g, store, x);
        Ok(self.head.forward(g, store, h))
    }

    /// Activations just before the logit conv (used as pooled features).
    pub fn forward_penultimate(
        &self,
        g: &mut Graph,
        store: &mut ParamStore,
        x: Var,
    ) -> Result<Var> {
        self.check_input(g, x)?;
        Ok(self.forward_trunk(g, store, x))
    }

    fn check_input(&self, g: &Graph, x: Var) -> Result<()> {
        let shape = g.value(x).shape().to_vec();
        if shape[1] != self.spec.in_channels {
            return Err(Error::shape(
                format!("{} input channels", self.spec.in_channels),
                format!("{}", shape[1]),
            ));
        }
        let min = 2usize.pow(self.spec.patch_layers as u32) * 4;
        if shape[2] < min || shape[3] < min {
            return Err(Error::shape(
                format!("input at least {min}x{min}"),
                format!("{}x{}", shape[2], shape[3]),
            ));
        }
        Ok(())
    }

    fn forward_trunk(&self, g: &mut Graph, store: &mut ParamStore, x: Var) -> Var {
        let mut h = x;
        for (c, bn) in &self.downs {
            h = c.forward(g, store, h);
            if let Some(bn) = bn {
                h = bn.forward(g, store, h);
            }
            h = g.leaky_relu(h, LEAKY_SLOPE);
        }
        h = self.pre_head.forward(g, store, h);
        h = self.pre_head_bn.forward(g, store, h);
        g.leaky_relu(h, LEAKY_SLOPE)
    }
}

/// Residual-network discriminator: the clipped encoder (stem plus
/// `encoder_stages` residual stages, classifier dropped) with a 1x1 conv
/// head emitting the patch logit map. Same interface and patch-map
/// contract as [`PatchDiscArch`], different backbone.
#[derive(Debug, Clone)]
pub(crate) struct ResnetDiscArch {
    spec: ModelSpec,
    encoder: ResnetEncoder,
    head: Conv2d,
}

impl ResnetDiscArch {
    pub fn new(spec: &ModelSpec) -> Self {
        let top = spec.base_width << (spec.encoder_stages - 1);
        ResnetDiscArch {
            spec: spec.clone(),
            encoder: ResnetEncoder::new(
                "disc.encoder",
                spec.in_channels,
                spec.base_width,
                spec.encoder_stages,
            ),
            head: Conv2d::new("disc.head.conv", top, 1, 1).pad(0),
        }
    }

    pub fn init(&self, store: &mut ParamStore, seed: u64) {
        self.encoder.init(store, seed);
        self.head.init(store, seed);
    }

    pub fn encoder_prefix(&self) -> &str {
        self.encoder.prefix_of()
    }

    /// Logit map side for an input side: stem and pool each halve (ceil),
    /// stages 2.. halve again, the 1x1 head preserves size.
    pub fn logit_map_size(&self, n: usize) -> usize {
        let mut m = conv_out_size(n, 7, 2, 3);
        m = conv_out_size(m, 3, 2, 1);
        for _ in 1..self.spec.encoder_stages {
            m = m.div_ceil(2);
        }
        m
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var) -> Result<Var> {
        let shape = g.value(x).shape().to_vec();
        if shape[1] != self.spec.in_channels {
            return Err(Error::shape(
                format!("{} input channels", self.spec.in_channels),
                format!("{}", shape[1]),
            ));
        }
        let feats = self.encoder.forward(g, store, x);
        let top = *feats.last().expect("encoder features");
        Ok(self.head.forward(g, store, top))
    }

    pub fn forward_penultimate(
        &self,
        g: &mut Graph,
        store: &mut ParamStore,
        x: Var,
    ) -> Result<Var> {
        let feats = self.encoder.forward(g, store, x);
        Ok(*feats.last().expect("encoder features"))
    }
}
