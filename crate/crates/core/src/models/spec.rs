//! Declarative architecture descriptions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// U-Net colorizer with a residual-network encoder.
    UnetColorizer,
    /// SRResNet generator (conv-BN-PReLU residual blocks, pixel shuffle).
    Srresnet,
    /// SRResNet topology with batch norm removed and 0.1 residual scaling.
    Edsr,
    /// Wide-activation blocks (6x expansion) with weight-normalized convs.
    Wdsr,
    /// Markovian patch discriminator (stride-2 conv stack, logit map head).
    PatchDiscriminator,
    /// Clipped residual-network discriminator with a patch logit head;
    /// alternative to the conv patch discriminator behind the same contract.
    ResnetDiscriminator,
}

impl ModelKind {
    pub fn is_generator(self) -> bool {
        matches!(
            self,
            ModelKind::UnetColorizer | ModelKind::Srresnet | ModelKind::Edsr | ModelKind::Wdsr
        )
    }

    pub fn is_sr(self) -> bool {
        matches!(self, ModelKind::Srresnet | ModelKind::Edsr | ModelKind::Wdsr)
    }

    pub fn is_discriminator(self) -> bool {
        matches!(
            self,
            ModelKind::PatchDiscriminator | ModelKind::ResnetDiscriminator
        )
    }
}

/// Declarative model description; embedded into weight files so a saved
/// model reconstructs its architecture without external information.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Residual stages kept from the encoder (U-Net / ResNet discriminator).
    #[serde(default = "default_encoder_stages")]
    pub encoder_stages: usize,
    #[serde(default = "default_base_width")]
    pub base_width: usize,
    /// Residual block count (SR generators).
    #[serde(default = "default_res_blocks")]
    pub n_res_blocks: usize,
    /// Upscaling factor (SR generators).
    #[serde(default = "default_scale")]
    pub scale: usize,
    /// Stride-2 block count (patch discriminator).
    #[serde(default = "default_patch_layers")]
    pub patch_layers: usize,
    /// Load encoder weights from a file instead of seeded init.
    #[serde(default)]
    pub pretrained_encoder: bool,
}

fn default_encoder_stages() -> usize {
    4
}
fn default_base_width() -> usize {
    64
}
fn default_res_blocks() -> usize {
    16
}
fn default_scale() -> usize {
    4
}
fn default_patch_layers() -> usize {
    3
}

impl ModelSpec {
    pub fn unet_colorizer(out_channels: usize) -> Self {
        ModelSpec {
            kind: ModelKind::UnetColorizer,
            in_channels: 1,
            out_channels,
            encoder_stages: 4,
            base_width: 64,
            n_res_blocks: 16,
            scale: 4,
            patch_layers: 3,
            pretrained_encoder: false,
        }
    }

    pub fn sr(kind: ModelKind, scale: usize) -> Self {
        ModelSpec {
            kind,
            in_channels: 3,
            out_channels: 3,
            scale,
            ..ModelSpec::unet_colorizer(3)
        }
    }

    pub fn patch_discriminator(in_channels: usize) -> Self {
        ModelSpec {
            kind: ModelKind::PatchDiscriminator,
            in_channels,
            out_channels: 1,
            ..ModelSpec::unet_colorizer(2)
        }
    }

    pub fn resnet_discriminator(in_channels: usize) -> Self {
        ModelSpec {
            kind: ModelKind::ResnetDiscriminator,
            in_channels,
            out_channels: 1,
            encoder_stages: 3,
            ..ModelSpec::unet_colorizer(2)
        }
    }

    pub fn with_width(mut self, base_width: usize) -> Self {
        self.base_width = base_width;
        self
    }

    pub fn with_res_blocks(mut self, n: usize) -> Self {
        self.n_res_blocks = n;
        self
    }

    pub fn with_patch_layers(mut self, n: usize) -> Self {
        self.patch_layers = n;
        self
    }

    pub fn with_pretrained_encoder(mut self) -> Self {
        self.pretrained_encoder = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::contract("in_channels must be positive"));
        }
        if self.base_width < 2 {
            return Err(Error::contract("base_width must be at least 2"));
        }
        if self.kind.is_generator() && !matches!(self.out_channels, 2 | 3) {
            return Err(Error::contract(format!(
                "generator out_channels must be 2 (Lab) or 3 (RGB), got {}",
                self.out_channels
            )));
        }
        if self.kind.is_sr() && !matches!(self.scale, 2 | 4) {
            return Err(Error::contract(format!(
                "scale must be 2 or 4, got {}",
                self.scale
            )));
        }
        if self.kind.is_sr() && self.n_res_blocks == 0 {
            return Err(Error::contract("n_res_blocks must be positive"));
        }
        if matches!(
            self.kind,
            ModelKind::UnetColorizer | ModelKind::ResnetDiscriminator
        ) && !(1..=4).contains(&self.encoder_stages)
        {
            return Err(Error::contract(format!(
                "encoder_stages must be in 1..=4, got {}",
                self.encoder_stages
            )));
        }
        if self.kind == ModelKind::PatchDiscriminator && !(1..=6).contains(&self.patch_layers) {
            return Err(Error::contract(format!(
                "patch_layers must be in 1..=6, got {}",
                self.patch_layers
            )));
        }
        Ok(())
    }

    /// Short human-readable summary used in mismatch errors.
    pub fn summary(&self) -> String {
        format!(
            "{:?}(in={}, out={}, width={}, stages={}, blocks={}, scale={}, patch_layers={})",
            self.kind,
            self.in_channels,
            self.out_channels,
            self.base_width,
            self.encoder_stages,
            self.n_res_blocks,
            self.scale,
            self.patch_layers
        )
    }
}
