//! Per-channel L1 / L2 distances over image lists.
//!
//! L1 is the mean absolute difference per channel; L2 is the per-channel
//! root-mean-square difference. Both are reported in the units of the
//! lists' declared color space (8-bit steps for SRGB_8BIT, normalized Lab
//! units for LAB_NORM), so a constant per-channel offset c yields exactly
//! |c| under both metrics.

use std::collections::BTreeMap;

use crate::colorspace::{ColorSpace, ImageGrid};
use crate::error::{Error, Result};

/// Channel labels for a (space, channel-count) pair.
pub fn channel_names(space: ColorSpace, channels: usize) -> Vec<String> {
    let names: &[&str] = match (space, channels) {
        (ColorSpace::Srgb8 | ColorSpace::SrgbUnit, 3) => &["R", "G", "B"],
        (ColorSpace::LabRaw | ColorSpace::LabNorm, 3) => &["L", "a", "b"],
        (ColorSpace::LabNorm, 2) => &["a", "b"],
        (ColorSpace::LabNorm, 1) => &["L"],
        (ColorSpace::GrayUnit, 1) => &["gray"],
        _ => &[],
    };
    if names.is_empty() {
        (0..channels).map(|i| format!("c{i}")).collect()
    } else {
        names.iter().map(|s| s.to_string()).collect()
    }
}

fn validate_lists(preds: &[ImageGrid], targets: &[ImageGrid]) -> Result<(ColorSpace, usize)> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::contract(format!(
            "need equal-length non-empty lists, got {} and {}",
            preds.len(),
            targets.len()
        )));
    }
    let space = preds[0].space();
    let channels = preds[0].channels();
    for (i, (p, t)) in preds.iter().zip(targets).enumerate() {
        if p.space() != space || t.space() != space {
            return Err(Error::SpaceMismatch {
                expected: space,
                actual: if p.space() != space { p.space() } else { t.space() },
            });
        }
        if p.pixels().dim() != t.pixels().dim() || p.channels() != channels {
            return Err(Error::shape(
                format!("{:?}", p.pixels().dim()),
                format!("{:?} (pair {i})", t.pixels().dim()),
            ));
        }
    }
    Ok((space, channels))
}

fn accumulate<F: Fn(f64) -> f64>(
    preds: &[ImageGrid],
    targets: &[ImageGrid],
    channels: usize,
    f: F,
) -> (Vec<f64>, Vec<usize>) {
    let mut sums = vec![0.0; channels];
    let mut counts = vec![0usize; channels];
    for (p, t) in preds.iter().zip(targets) {
        for ((y, x, c), &pv) in p.pixels().indexed_iter() {
            sums[c] += f(pv - t.pixels()[(y, x, c)]);
            counts[c] += 1;
        }
    }
    (sums, counts)
}

/// Per-channel mean absolute difference across all images and pixels.
pub fn channel_l1(preds: &[ImageGrid], targets: &[ImageGrid]) -> Result<BTreeMap<String, f64>> {
    let (space, channels) = validate_lists(preds, targets)?;
    let (sums, counts) = accumulate(preds, targets, channels, f64::abs);
    let names = channel_names(space, channels);
    Ok(names
        .into_iter()
        .zip(sums.iter().zip(&counts))
        .map(|(name, (s, &n))| (name, s / n as f64))
        .collect())
}

/// Per-channel root-mean-square difference across all images and pixels.
pub fn channel_l2(preds: &[ImageGrid], targets: &[ImageGrid]) -> Result<BTreeMap<String, f64>> {
    let (space, channels) = validate_lists(preds, targets)?;
    let (sums, counts) = accumulate(preds, targets, channels, |d| d * d);
    let names = channel_names(space, channels);
    Ok(names
        .into_iter()
        .zip(sums.iter().zip(&counts))
        .map(|(name, (s, &n))| (name, (s / n as f64).sqrt()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn img(space: ColorSpace, data: Array3<f64>) -> ImageGrid {
        ImageGrid::new(data, space).unwrap()
    }

    #[test]
    fn identical_lists_are_zero() {
        let a = vec![ImageGrid::constant(4, 4, ColorSpace::Srgb8, &[1.0, 2.0, 3.0]).unwrap()];
        let l1 = channel_l1(&a, &a).unwrap();
        let l2 = channel_l2(&a, &a).unwrap();
        assert!(l1.values().all(|&v| v == 0.0));
        assert!(l2.values().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_offsets_are_exact_in_both_metrics() {
        let p = vec![ImageGrid::constant(8, 8, ColorSpace::Srgb8, &[100.0, 50.0, 25.0]).unwrap()];
        let t = vec![ImageGrid::constant(8, 8, ColorSpace::Srgb8, &[110.0, 50.0, 30.0]).unwrap()];
        let l1 = channel_l1(&p, &t).unwrap();
        let l2 = channel_l2(&p, &t).unwrap();
        assert_eq!(l1["R"], 10.0);
        assert_eq!(l1["G"], 0.0);
        assert_eq!(l1["B"], 5.0);
        assert!((l2["R"] - 10.0).abs() < 1e-9);
        assert!((l2["G"]).abs() < 1e-9);
        assert!((l2["B"] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn random_pairs_match_bruteforce_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(81);
        let mk = |rng: &mut ChaCha20Rng| {
            img(
                ColorSpace::SrgbUnit,
                Array3::from_shape_fn((4, 4, 3), |_| rng.random::<f64>()),
            )
        };
        let preds: Vec<_> = (0..3).map(|_| mk(&mut rng)).collect();
        let targets: Vec<_> = (0..3).map(|_| mk(&mut rng)).collect();
        let l1 = channel_l1(&preds, &targets).unwrap();
        let l2 = channel_l2(&preds, &targets).unwrap();
        for (ci, name) in ["R", "G", "B"].iter().enumerate() {
            let mut abs_sum = 0.0;
            let mut sq_sum = 0.0;
            let mut n = 0;
            for (p, t) in preds.iter().zip(&targets) {
                for y in 0..4 {
                    for x in 0..4 {
                        let d = p.pixels()[(y, x, ci)] - t.pixels()[(y, x, ci)];
                        abs_sum += d.abs();
                        sq_sum += d * d;
                        n += 1;
                    }
                }
            }
            assert!((l1[*name] - abs_sum / n as f64).abs() < 1e-12);
            assert!((l2[*name] - (sq_sum / n as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_invariance_and_l2_zero_implies_l1_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(82);
        let mk = |rng: &mut ChaCha20Rng| {
            img(
                ColorSpace::LabNorm,
                Array3::from_shape_fn((3, 3, 2), |_| rng.random::<f64>() * 2.0 - 1.0),
            )
        };
        let mut preds: Vec<_> = (0..4).map(|_| mk(&mut rng)).collect();
        let mut targets: Vec<_> = (0..4).map(|_| mk(&mut rng)).collect();
        let a1 = channel_l1(&preds, &targets).unwrap();
        preds.swap(0, 3);
        targets.swap(0, 3);
        preds.swap(1, 2);
        targets.swap(1, 2);
        let b1 = channel_l1(&preds, &targets).unwrap();
        for (k, v) in &a1 {
            assert!((v - b1[k]).abs() < 1e-12, "{k}: {v} vs {}", b1[k]);
        }
        // channel names for ab-only grids
        assert!(a1.contains_key("a") && a1.contains_key("b"));
    }

    #[test]
    fn mixed_spaces_rejected() {
        let p = vec![ImageGrid::constant(2, 2, ColorSpace::Srgb8, &[0.0; 3]).unwrap()];
        let t = vec![ImageGrid::constant(2, 2, ColorSpace::SrgbUnit, &[0.0; 3]).unwrap()];
        assert!(channel_l1(&p, &t).is_err());
    }
}
