//! The trainer's view of a sample: network-range input, target, and the
//! conditioning plane the discriminator sees next to a candidate.

use ndarray::{Array3, Array4};

use crate::colorspace::ColorSpace;
use crate::datapipe::resize::resize_bicubic;
use crate::datapipe::samples::{ColorizationSample, SrSample};
use crate::error::Result;

pub trait TrainSample {
    fn id(&self) -> &str;
    /// Generator input, CHW, in the model's input range.
    fn input_chw(&self) -> Array3<f64>;
    /// Ground truth, CHW, in the model's output range.
    fn target_chw(&self) -> Array3<f64>;
    /// Conditioning plane for the discriminator; must match the target's
    /// spatial dims.
    fn condition_chw(&self) -> Result<Array3<f64>>;
}

fn grid_chw(img: &crate::colorspace::ImageGrid) -> Array3<f64> {
    let (h, w, c) = img.pixels().dim();
    Array3::from_shape_fn((c, h, w), |(ch, y, x)| img.pixels()[(y, x, ch)])
}

impl TrainSample for ColorizationSample {
    fn id(&self) -> &str {
        &self.id
    }

    fn input_chw(&self) -> Array3<f64> {
        grid_chw(&self.input_l)
    }

    fn target_chw(&self) -> Array3<f64> {
        grid_chw(&self.target_ab)
    }

    fn condition_chw(&self) -> Result<Array3<f64>> {
        Ok(self.input_chw())
    }
}

impl TrainSample for SrSample {
    fn id(&self) -> &str {
        &self.id
    }

    fn input_chw(&self) -> Array3<f64> {
        grid_chw(&self.input_lr)
    }

    fn target_chw(&self) -> Array3<f64> {
        grid_chw(&self.target_hr)
    }

    /// The LR input upsampled bicubically to HR dims, so the discriminator
    /// can judge (condition, candidate) pairs at one resolution.
    fn condition_chw(&self) -> Result<Array3<f64>> {
        let up = resize_bicubic(
            self.input_lr.pixels(),
            self.target_hr.height(),
            self.target_hr.width(),
        );
        let clamped = crate::colorspace::ImageGrid::new(up, ColorSpace::SrgbUnit)?;
        Ok(grid_chw(&clamped))
    }
}

/// Synthetic sample over raw arrays, for desk-scale experiments and tests.
#[derive(Debug, Clone)]
pub struct RawSample {
    pub id: String,
    pub input: Array3<f64>,
    pub target: Array3<f64>,
    /// Discriminator conditioning plane; the input itself when `None`
    /// (which requires input and target to share spatial dims).
    pub condition: Option<Array3<f64>>,
}

impl RawSample {
    pub fn new(id: impl Into<String>, input: Array3<f64>, target: Array3<f64>) -> Self {
        RawSample {
            id: id.into(),
            input,
            target,
            condition: None,
        }
    }
}

impl TrainSample for RawSample {
    fn id(&self) -> &str {
        &self.id
    }

    fn input_chw(&self) -> Array3<f64> {
        self.input.clone()
    }

    fn target_chw(&self) -> Array3<f64> {
        self.target.clone()
    }

    fn condition_chw(&self) -> Result<Array3<f64>> {
        Ok(self
            .condition
            .clone()
            .unwrap_or_else(|| self.input.clone()))
    }
}

/// Stacks per-sample CHW arrays into an NCHW batch.
pub(crate) fn stack(parts: &[Array3<f64>]) -> Array4<f64> {
    let (c, h, w) = parts[0].dim();
    let mut out = Array4::zeros((parts.len(), c, h, w));
    for (i, p) in parts.iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), i).assign(p);
    }
    out
}

pub(crate) fn batch_of<S: TrainSample>(
    samples: &[S],
    idx: &[usize],
) -> Result<(Array4<f64>, Array4<f64>, Array4<f64>, Vec<String>)> {
    let inputs: Vec<_> = idx.iter().map(|&i| samples[i].input_chw()).collect();
    let targets: Vec<_> = idx.iter().map(|&i| samples[i].target_chw()).collect();
    let conds = idx
        .iter()
        .map(|&i| samples[i].condition_chw())
        .collect::<Result<Vec<_>>>()?;
    let ids = idx.iter().map(|&i| samples[i].id().to_string()).collect();
    Ok((stack(&inputs), stack(&targets), stack(&conds), ids))
}
