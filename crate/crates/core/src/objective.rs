//! Conditional-GAN loss functions.
//!
//! The discriminator plays the standard minimax game on patch logit maps;
//! the generator minimizes the non-saturating -log D term plus a
//! lambda-weighted L1 content term. Everything is computed in logit space
//! (sigmoid and log are never materialized separately), so losses stay
//! finite for logits far into saturation.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{sigmoid, softplus};

/// Default content-term weight. The conditional image-to-image framework
/// this objective follows uses 100.
pub const DEFAULT_LAMBDA: f64 = 100.0;

/// Generator loss split into its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub adversarial: f64,
    pub content_l1: f64,
    pub lambda_weight: f64,
}

fn ensure_finite(name: &str, a: &ArrayD<f64>) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{name} contains NaN or Inf")));
    }
    Ok(())
}

/// Mean of -log sigma(x) over all patches, i.e. BCE against target 1.
fn mean_bce_target_one(logits: &ArrayD<f64>) -> f64 {
    logits.iter().map(|&x| softplus(-x)).sum::<f64>() / logits.len() as f64
}

/// Mean of -log(1 - sigma(x)) over all patches, i.e. BCE against target 0.
fn mean_bce_target_zero(logits: &ArrayD<f64>) -> f64 {
    logits.iter().map(|&x| softplus(x)).sum::<f64>() / logits.len() as f64
}

/// Discriminator objective: 0.5 * [BCE(real -> 1) + BCE(fake -> 0)],
/// averaged over patch positions.
pub fn discriminator_loss(real_logits: &ArrayD<f64>, fake_logits: &ArrayD<f64>) -> Result<f64> {
    if real_logits.shape() != fake_logits.shape() {
        return Err(Error::shape(
            format!("{:?}", real_logits.shape()),
            format!("{:?}", fake_logits.shape()),
        ));
    }
    ensure_finite("real logits", real_logits)?;
    ensure_finite("fake logits", fake_logits)?;
    Ok(0.5 * (mean_bce_target_one(real_logits) + mean_bce_target_zero(fake_logits)))
}

/// Non-saturating generator term: mean of -log sigma(fake logits).
pub fn generator_adversarial_loss(fake_logits: &ArrayD<f64>) -> Result<f64> {
    ensure_finite("fake logits", fake_logits)?;
    Ok(mean_bce_target_one(fake_logits))
}

/// Mean absolute difference over all elements.
pub fn content_l1(pred: &ArrayD<f64>, target: &ArrayD<f64>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            format!("{:?}", target.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    Ok(ndarray::Zip::from(pred)
        .and(target)
        .fold(0.0, |acc, &p, &t| acc + (p - t).abs())
        / pred.len() as f64)
}

/// Full generator objective: -log D + lambda * ||pred - target||_1.
pub fn generator_loss(
    fake_logits: &ArrayD<f64>,
    pred: &ArrayD<f64>,
    target: &ArrayD<f64>,
    lambda_weight: f64,
) -> Result<LossBreakdown> {
    if lambda_weight < 0.0 {
        return Err(Error::contract(format!(
            "lambda_weight must be non-negative, got {lambda_weight}"
        )));
    }
    let adversarial = generator_adversarial_loss(fake_logits)?;
    let content = content_l1(pred, target)?;
    Ok(LossBreakdown {
        total: adversarial + lambda_weight * content,
        adversarial,
        content_l1: content,
        lambda_weight,
    })
}

/// Probability map from a logit map (the p in D(x, y) = p).
pub fn logits_to_probs(logits: &ArrayD<f64>) -> ArrayD<f64> {
    logits.mapv(sigmoid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn zeros(shape: &[usize]) -> ArrayD<f64> {
        ArrayD::zeros(IxDyn(shape))
    }

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn zero_logits_give_ln2() {
        let z = zeros(&[1, 1, 4, 4]);
        let d = discriminator_loss(&z, &z).unwrap();
        assert!((d - LN2).abs() < 1e-9, "d = {d}");
        let g = generator_adversarial_loss(&z).unwrap();
        assert!((g - LN2).abs() < 1e-9);
    }

    #[test]
    fn perfect_discriminator_loss_tends_to_zero() {
        let real = ArrayD::from_elem(IxDyn(&[1, 1, 2, 2]), 1e4);
        let fake = ArrayD::from_elem(IxDyn(&[1, 1, 2, 2]), -1e4);
        let d = discriminator_loss(&real, &fake).unwrap();
        assert!(d.abs() < 1e-9, "d = {d}");
        let g = generator_adversarial_loss(&ArrayD::from_elem(IxDyn(&[2]), 1e4)).unwrap();
        assert!(g.abs() < 1e-9);
    }

    // Brute-force per-element oracle: materialize sigma then log with
    // slightly shifted clamping; independent of the softplus route.
    fn bce_oracle(logits: &ArrayD<f64>, target: f64) -> f64 {
        logits
            .iter()
            .map(|&x| {
                let p = 1.0 / (1.0 + (-x).exp());
                if target == 1.0 {
                    -(p.max(1e-300)).ln()
                } else {
                    -((1.0 - p).max(1e-300)).ln()
                }
            })
            .sum::<f64>()
            / logits.len() as f64
    }

    #[test]
    fn random_maps_match_elementwise_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..20 {
            let real =
                ArrayD::from_shape_fn(IxDyn(&[1, 1, 2, 2]), |_| rng.random::<f64>() * 8.0 - 4.0);
            let fake =
                ArrayD::from_shape_fn(IxDyn(&[1, 1, 2, 2]), |_| rng.random::<f64>() * 8.0 - 4.0);
            let want = 0.5 * (bce_oracle(&real, 1.0) + bce_oracle(&fake, 0.0));
            let got = discriminator_loss(&real, &fake).unwrap();
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            let want_g = bce_oracle(&fake, 1.0);
            let got_g = generator_adversarial_loss(&fake).unwrap();
            assert!((got_g - want_g).abs() < 1e-9);
        }
    }

    #[test]
    fn content_l1_basics_and_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let a = ArrayD::from_shape_fn(IxDyn(&[3, 4]), |_| rng.random::<f64>());
        assert_eq!(content_l1(&a, &a).unwrap(), 0.0);
        let b = a.mapv(|v| v + 0.1);
        assert!((content_l1(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        let c = ArrayD::from_shape_fn(IxDyn(&[3, 4]), |_| rng.random::<f64>());
        let oracle: f64 =
            a.iter().zip(c.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / 12.0;
        assert!((content_l1(&a, &c).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn generator_loss_analytic_sum() {
        let logits = zeros(&[1, 1, 3, 3]);
        let pred = zeros(&[4]);
        let target = ArrayD::from_elem(IxDyn(&[4]), 0.1);
        let lb = generator_loss(&logits, &pred, &target, 100.0).unwrap();
        assert!((lb.total - (LN2 + 10.0)).abs() < 1e-6, "total = {}", lb.total);
        assert!((lb.adversarial - LN2).abs() < 1e-9);
        assert!((lb.content_l1 - 0.1).abs() < 1e-12);
        // decomposition invariant
        assert!((lb.total - (lb.adversarial + lb.lambda_weight * lb.content_l1)).abs() < 1e-9);
    }

    #[test]
    fn lambda_zero_reduces_to_adversarial() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let logits = ArrayD::from_shape_fn(IxDyn(&[5]), |_| rng.random::<f64>() - 0.5);
        let pred = ArrayD::from_shape_fn(IxDyn(&[5]), |_| rng.random::<f64>());
        let target = ArrayD::from_shape_fn(IxDyn(&[5]), |_| rng.random::<f64>());
        let lb = generator_loss(&logits, &pred, &target, 0.0).unwrap();
        assert_eq!(lb.total, lb.adversarial);
    }

    #[test]
    fn negative_lambda_rejected() {
        let z = zeros(&[2]);
        assert!(generator_loss(&z, &z, &z, -1.0).is_err());
    }

    #[test]
    fn non_finite_logits_rejected() {
        let mut z = zeros(&[2]);
        z[IxDyn(&[0])] = f64::NAN;
        assert!(generator_adversarial_loss(&z).is_err());
        assert!(discriminator_loss(&z, &zeros(&[2])).is_err());
    }

    #[test]
    fn saturation_safety_at_1e4() {
        let big = ArrayD::from_elem(IxDyn(&[3]), 1e4);
        let small = ArrayD::from_elem(IxDyn(&[3]), -1e4);
        for (r, f) in [(&big, &small), (&small, &big), (&big, &big)] {
            let d = discriminator_loss(r, f).unwrap();
            assert!(d.is_finite() && d >= 0.0);
        }
        assert!(generator_adversarial_loss(&small).unwrap().is_finite());
    }

    #[test]
    fn losses_invariant_under_patch_permutation() {
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        let vals: Vec<f64> = (0..16).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let mut shuffled = vals.clone();
        shuffled.reverse();
        let a = ArrayD::from_shape_vec(IxDyn(&[1, 1, 4, 4]), vals).unwrap();
        let b = ArrayD::from_shape_vec(IxDyn(&[1, 1, 4, 4]), shuffled).unwrap();
        let ga = generator_adversarial_loss(&a).unwrap();
        let gb = generator_adversarial_loss(&b).unwrap();
        assert!((ga - gb).abs() < 1e-12);
    }
}
