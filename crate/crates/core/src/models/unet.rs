//! U-Net generator with a clipped residual-network encoder.
//!
//! The encoder is the classifier-free front of an 18-layer residual net:
//! 7x7 stem, max pool, then up to four stages of two basic blocks at widths
//! w, 2w, 4w, 8w. Keeping the stem and the residual stages while dropping
//! the pooled classifier head is what clips the network down to a feature
//! pyramid. The decoder mirrors it with nearest-neighbour upsampling plus
//! a 3x3 conv at each level, concatenating the encoder feature (and, at
//! full resolution, the raw conditioning input). A 1x1 conv and tanh head
//! produce the 2-channel (ab) or 3-channel (RGB) prediction in (-1, 1).

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::ParamStore;

use super::layers::{BasicBlock, BatchNorm2d, Conv2d};
use super::spec::ModelSpec;

/// Stage widths of the encoder at a given base width.
pub(crate) fn stage_widths(base: usize, stages: usize) -> Vec<usize> {
    (0..stages).map(|i| base << i).collect()
}

/// Residual-network encoder shared by the U-Net generator and the
/// residual-network discriminator.
#[derive(Debug, Clone)]
pub(crate) struct ResnetEncoder {
    pub stem: Conv2d,
    pub stem_bn: BatchNorm2d,
    pub stages: Vec<[BasicBlock; 2]>,
}

impl ResnetEncoder {
    pub fn new(prefix: &str, in_c: usize, base: usize, stages: usize) -> Self {
        let widths = stage_widths(base, stages);
        let mut blocks = Vec::with_capacity(stages);
        let mut prev = base;
        for (i, &w) in widths.iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            blocks.push([
                BasicBlock::new(&format!("{prefix}.stage{}.block0", i + 1), prev, w, stride),
                BasicBlock::new(&format!("{prefix}.stage{}.block1", i + 1), w, w, 1),
            ]);
            prev = w;
        }
        ResnetEncoder {
            stem: Conv2d::new(format!("{prefix}.stem.conv"), in_c, base, 7)
                .stride(2)
                .pad(3)
                .no_bias(),
            stem_bn: BatchNorm2d::new(format!("{prefix}.stem.bn"), base),
            stages: blocks,
        }
    }

    pub fn init(&self, store: &mut ParamStore, seed: u64) {
        self.stem.init(store, seed);
        self.stem_bn.init(store);
        for stage in &self.stages {
            for block in stage {
                block.init(store, seed);
            }
        }
    }

    /// Returns the stem feature (at half resolution) followed by each stage
    /// output; the last entry is the bottleneck.
    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var) -> Vec<Var> {
        let mut feats = Vec::with_capacity(self.stages.len() + 1);
        let mut h = self.stem.forward(g, store, x);
        h = self.stem_bn.forward(g, store, h);
        h = g.relu(h);
        feats.push(h);
        h = g.maxpool(h, 3, 2, 1);
        for stage in &self.stages {
            for block in stage {
                h = block.forward(g, store, h);
            }
            feats.push(h);
        }
        feats
    }

    /// Parameter names belonging to the encoder (for pretrained loading).
    pub fn prefix_of(&self) -> &str {
        // stem name is "<prefix>.stem.conv"
        let name = &self.stem.name;
        &name[..name.len() - ".stem.conv".len()]
    }
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    conv: Conv2d,
    bn: BatchNorm2d,
}

impl DecoderBlock {
    fn new(name: &str, in_c: usize, out_c: usize) -> Self {
        DecoderBlock {
            conv: Conv2d::new(format!("{name}.conv"), in_c, out_c, 3).no_bias(),
            bn: BatchNorm2d::new(format!("{name}.bn"), out_c),
        }
    }

    fn init(&self, store: &mut ParamStore, seed: u64) {
        self.conv.init(store, seed);
        self.bn.init(store);
    }

    /// Upsample `x` 2x, concatenate the skip feature, then conv-BN-ReLU.
    fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, skip: Var) -> Var {
        let up = g.upsample2(x);
        let cat = g.concat(&[up, skip]);
        let mut h = self.conv.forward(g, store, cat);
        h = self.bn.forward(g, store, h);
        g.relu(h)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct UnetArch {
    spec: ModelSpec,
    encoder: ResnetEncoder,
    decoder: Vec<DecoderBlock>,
    head: Conv2d,
}

impl UnetArch {
    pub fn new(spec: &ModelSpec) -> Self {
        let base = spec.base_width;
        let stages = spec.encoder_stages;
        let widths = stage_widths(base, stages);
        // skips walked top-down: deepest stage is the bottleneck, then each
        // shallower stage, the stem, and finally the raw input.
        let mut decoder = Vec::new();
        let mut prev = *widths.last().expect("at least one stage");
        for i in (0..stages.saturating_sub(1)).rev() {
            let out = widths[i];
            decoder.push(DecoderBlock::new(
                &format!("decoder.up{}", stages - 1 - i),
                prev + widths[i],
                out,
            ));
            prev = out;
        }
        // stem-level skip (half resolution)
        decoder.push(DecoderBlock::new(
            &format!("decoder.up{stages}"),
            prev + base,
            base,
        ));
        // input-level skip (full resolution)
        let last_w = (base / 2).max(8);
        decoder.push(DecoderBlock::new(
            &format!("decoder.up{}", stages + 1),
            base + spec.in_channels,
            last_w,
        ));
        UnetArch {
            spec: spec.clone(),
            encoder: ResnetEncoder::new("encoder", spec.in_channels, base, stages),
            decoder,
            head: Conv2d::new("decoder.head", last_w, spec.out_channels, 1).pad(0),
        }
    }

    /// Spatial downsampling factor of the bottleneck; inputs must divide it.
    pub fn total_stride(&self) -> usize {
        1 << (self.spec.encoder_stages + 1)
    }

    pub fn init(&self, store: &mut ParamStore, seed: u64) {
        self.encoder.init(store, seed);
        for d in &self.decoder {
            d.init(store, seed);
        }
        self.head.init(store, seed);
    }

    pub fn encoder_prefix(&self) -> &str {
        self.encoder.prefix_of()
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var) -> Result<Var> {
        let dims = g.value(x).shape().to_vec();
        let (h, w) = (dims[2], dims[3]);
        let stride = self.total_stride();
        if h % stride != 0 || w % stride != 0 {
            return Err(Error::shape(
                format!("spatial dims divisible by {stride}"),
                format!("{h}x{w}"),
            ));
        }
        let feats = self.encoder.forward(g, store, x);
        // feats = [stem, stage1, .., stageN]; bottleneck is the last
        let mut cur = *feats.last().expect("encoder features");
        let mut decoder = self.decoder.iter();
        for skip in feats[..feats.len() - 1].iter().rev() {
            cur = decoder
                .next()
                .expect("decoder depth matches encoder")
                .forward(g, store, cur, *skip);
        }
        cur = decoder
            .next()
            .expect("input-level decoder block")
            .forward(g, store, cur, x);
        let logits = self.head.forward(g, store, cur);
        Ok(g.tanh(logits))
    }
}
