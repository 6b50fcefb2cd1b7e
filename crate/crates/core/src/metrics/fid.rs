//! Frechet Inception Distance between two feature matrices.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

use super::linalg::{eigh, sqrtm_psd};

/// Ridge added to both covariance estimates for conditioning.
pub const COV_EPSILON: f64 = 1e-6;
/// Eigenvalues of the symmetrized product below this (negated) are errors.
pub const NEG_EIG_TOL: f64 = 1e-6;

fn mean_and_cov(features: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let (b, d) = features.dim();
    let mean = Array1::from_iter(
        (0..d).map(|j| features.column(j).sum() / b as f64),
    );
    let mut cov = Array2::<f64>::zeros((d, d));
    if b > 1 {
        let centered = features - &mean.view().insert_axis(ndarray::Axis(0));
        cov = centered.t().dot(&centered) / (b as f64 - 1.0);
    }
    for i in 0..d {
        cov[(i, i)] += COV_EPSILON;
    }
    (mean, cov)
}

/// FID = ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), with the matrix
/// square root evaluated through the symmetrized product
/// sqrt(S1)^T S2 sqrt(S1) so the eigendecomposition stays symmetric.
pub fn fid(features_a: &Array2<f64>, features_b: &Array2<f64>) -> Result<f64> {
    let (ba, da) = features_a.dim();
    let (bb, db) = features_b.dim();
    if da != db {
        return Err(Error::shape(format!("feature dim {da}"), format!("{db}")));
    }
    if da == 0 || ba == 0 || bb == 0 {
        return Err(Error::contract("fid needs non-empty feature matrices"));
    }
    if ba <= da || bb <= db {
        log::warn!(
            "fid: sample counts ({ba}, {bb}) do not exceed the feature dimension {da}; \
             covariance estimates will be rank-deficient"
        );
    }
    if features_a.iter().chain(features_b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix contains NaN or Inf".into()));
    }

    let (mu1, sigma1) = mean_and_cov(features_a);
    let (mu2, sigma2) = mean_and_cov(features_b);

    let diff = &mu1 - &mu2;
    let mean_term = diff.iter().map(|v| v * v).sum::<f64>();

    let root1 = sqrtm_psd(&sigma1, NEG_EIG_TOL)?;
    let product = root1.dot(&sigma2).dot(&root1);
    let sym = (&product + &product.t()) * 0.5;
    let (vals, _) = eigh(&sym);
    if let Some(worst) = vals.iter().copied().reduce(f64::min) {
        if worst < -NEG_EIG_TOL {
            return Err(Error::Numerical(format!(
                "covariance product has negative eigenvalue {worst:e}; eigenvalues {vals:?}"
            )));
        }
    }
    let tr_sqrt: f64 = vals.iter().map(|&v| v.max(0.0).sqrt()).sum();

    let tr1: f64 = (0..sigma1.nrows()).map(|i| sigma1[(i, i)]).sum();
    let tr2: f64 = (0..sigma2.nrows()).map(|i| sigma2[(i, i)]).sum();

    Ok((mean_term + tr1 + tr2 - 2.0 * tr_sqrt).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_samples(
        rng: &mut ChaCha20Rng,
        b: usize,
        mean: &[f64],
        std: f64,
    ) -> Array2<f64> {
        let d = mean.len();
        Array2::from_shape_fn((b, d), |(_, j)| {
            let z: f64 = StandardNormal.sample(rng);
            mean[j] + std * z
        })
    }

    #[test]
    fn identical_features_give_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(71);
        let a = gaussian_samples(&mut rng, 200, &[0.0; 6], 1.0);
        let f = fid(&a, &a).unwrap();
        assert!(f.abs() < 1e-6, "fid(A,A) = {f}");
    }

    #[test]
    fn symmetry() {
        let mut rng = ChaCha20Rng::seed_from_u64(72);
        let a = gaussian_samples(&mut rng, 300, &[0.0; 5], 1.0);
        let b = gaussian_samples(&mut rng, 250, &[0.5, 0.0, -0.2, 0.1, 0.0], 1.3);
        let ab = fid(&a, &b).unwrap();
        let ba = fid(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-9);
        assert!(ab >= 0.0);
    }

    #[test]
    fn gaussian_mean_shift_matches_closed_form() {
        let mut rng = ChaCha20Rng::seed_from_u64(73);
        let mu = [0.6, -0.4, 0.8, 0.0, 0.3, -0.7, 0.2, 0.5];
        let want: f64 = mu.iter().map(|v| v * v).sum();
        let a = gaussian_samples(&mut rng, 10_000, &[0.0; 8], 1.0);
        let b = gaussian_samples(&mut rng, 10_000, &mu, 1.0);
        let got = fid(&a, &b).unwrap();
        assert!(
            (got - want).abs() / want < 0.05,
            "fid {got} vs closed form {want}"
        );
    }

    #[test]
    fn commuting_covariances_closed_form() {
        // population FID for equal means, S1 = 4I, S2 = I is
        // Tr(4I + I - 2*2I) = d; check the estimator at large B.
        let mut rng = ChaCha20Rng::seed_from_u64(74);
        let d = 8;
        let a = gaussian_samples(&mut rng, 60_000, &[0.0; 8], 2.0);
        let b = gaussian_samples(&mut rng, 60_000, &[0.0; 8], 1.0);
        let got = fid(&a, &b).unwrap();
        assert!(
            (got - d as f64).abs() / (d as f64) < 0.01,
            "fid {got} vs closed form {d}"
        );
    }

    /// Brute-force reference for Tr sqrt(S1 S2): Denman-Beavers iteration
    /// on the (non-symmetric) product, an entirely different route from the
    /// eigendecomposition path.
    fn tr_sqrt_denman_beavers(s1: &Array2<f64>, s2: &Array2<f64>) -> f64 {
        let n = s1.nrows();
        let mut y = s1.dot(s2);
        let mut z = Array2::<f64>::eye(n);
        for _ in 0..100 {
            let y_inv = invert(&y);
            let z_inv = invert(&z);
            let y_next = (&y + &z_inv) * 0.5;
            let z_next = (&z + &y_inv) * 0.5;
            let delta: f64 = (&y_next - &y).iter().map(|v| v.abs()).sum();
            y = y_next;
            z = z_next;
            if delta < 1e-13 {
                break;
            }
        }
        (0..n).map(|i| y[(i, i)]).sum()
    }

    /// Gauss-Jordan inverse (test-only).
    fn invert(a: &Array2<f64>) -> Array2<f64> {
        let n = a.nrows();
        let mut aug = Array2::<f64>::zeros((n, 2 * n));
        for i in 0..n {
            for j in 0..n {
                aug[(i, j)] = a[(i, j)];
            }
            aug[(i, n + i)] = 1.0;
        }
        for col in 0..n {
            let mut pivot = col;
            for r in col + 1..n {
                if aug[(r, col)].abs() > aug[(pivot, col)].abs() {
                    pivot = r;
                }
            }
            if pivot != col {
                for j in 0..2 * n {
                    let tmp = aug[(col, j)];
                    aug[(col, j)] = aug[(pivot, j)];
                    aug[(pivot, j)] = tmp;
                }
            }
            let p = aug[(col, col)];
            for j in 0..2 * n {
                aug[(col, j)] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = aug[(r, col)];
                for j in 0..2 * n {
                    aug[(r, j)] -= f * aug[(col, j)];
                }
            }
        }
        Array2::from_shape_fn((n, n), |(i, j)| aug[(i, n + j)])
    }

    #[test]
    fn eigen_route_matches_brute_force_sqrt_on_random_spd() {
        let mut rng = ChaCha20Rng::seed_from_u64(75);
        for _ in 0..5 {
            let n = 4;
            let mk = |rng: &mut ChaCha20Rng| {
                let b = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() * 2.0 - 1.0);
                let mut m = b.t().dot(&b);
                for i in 0..n {
                    m[(i, i)] += 0.7;
                }
                m
            };
            let s1 = mk(&mut rng);
            let s2 = mk(&mut rng);

            // eigen route (the production path)
            let r1 = sqrtm_psd(&s1, 1e-9).unwrap();
            let sym = r1.dot(&s2).dot(&r1);
            let sym = (&sym + &sym.t()) * 0.5;
            let (vals, _) = eigh(&sym);
            let tr_eigen: f64 = vals.iter().map(|&v| v.max(0.0).sqrt()).sum();

            let tr_ref = tr_sqrt_denman_beavers(&s1, &s2);
            assert!(
                (tr_eigen - tr_ref).abs() < 1e-8,
                "eigen {tr_eigen} vs denman-beavers {tr_ref}"
            );
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = Array2::<f64>::zeros((10, 3));
        let b = Array2::<f64>::zeros((10, 4));
        assert!(fid(&a, &b).is_err());
    }
}
