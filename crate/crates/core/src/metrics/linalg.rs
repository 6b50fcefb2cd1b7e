//! Small dense symmetric linear algebra: cyclic Jacobi eigendecomposition
//! and the PSD matrix square root built on it. Sizes here are feature
//! dimensions (tens to a few hundred), where Jacobi is plenty fast and has
//! no external dependencies.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix: returns (eigenvalues,
/// eigenvectors as columns), unordered.
pub fn eigh(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigh needs a square matrix");
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let tol = 1e-14 * frob;

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)].abs();
            }
        }
        if off < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (Array1::from_iter((0..n).map(|i| m[(i, i)])), v)
}

/// Square root of a symmetric PSD matrix via eigendecomposition.
/// Eigenvalues below `-neg_tol` are an error; small negatives clamp to 0.
pub fn sqrtm_psd(a: &Array2<f64>, neg_tol: f64) -> Result<Array2<f64>> {
    let (vals, vecs) = eigh(a);
    if let Some(worst) = vals.iter().copied().fold(None::<f64>, |acc, v| {
        Some(acc.map_or(v, |a| a.min(v)))
    }) {
        if worst < -neg_tol {
            return Err(Error::Numerical(format!(
                "matrix is not PSD: smallest eigenvalue {worst:e} (tolerance -{neg_tol:e}); \
                 eigenvalues {vals:?}"
            )));
        }
    }
    let n = a.nrows();
    let mut out = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        let lam = vals[k].max(0.0).sqrt();
        if lam == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += lam * vecs[(i, k)] * vecs[(j, k)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn random_spd(rng: &mut ChaCha20Rng, n: usize) -> Array2<f64> {
        let b = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() * 2.0 - 1.0);
        let mut a = b.t().dot(&b);
        for i in 0..n {
            a[(i, i)] += 0.5;
        }
        a
    }

    #[test]
    fn eigh_reconstructs_matrix() {
        let mut rng = ChaCha20Rng::seed_from_u64(61);
        for n in [2usize, 4, 8, 16] {
            let a = random_spd(&mut rng, n);
            let (vals, vecs) = eigh(&a);
            let mut recon = Array2::<f64>::zeros((n, n));
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        recon[(i, j)] += vals[k] * vecs[(i, k)] * vecs[(j, k)];
                    }
                }
            }
            for (x, y) in a.iter().zip(recon.iter()) {
                assert!((x - y).abs() < 1e-9, "n={n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn sqrtm_squares_back() {
        let mut rng = ChaCha20Rng::seed_from_u64(62);
        for n in [2usize, 5, 9] {
            let a = random_spd(&mut rng, n);
            let r = sqrtm_psd(&a, 1e-6).unwrap();
            let rr = r.dot(&r);
            for (x, y) in a.iter().zip(rr.iter()) {
                assert!((x - y).abs() < 1e-8, "n={n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn sqrtm_rejects_indefinite() {
        let mut a = Array2::<f64>::eye(3);
        a[(2, 2)] = -0.5;
        match sqrtm_psd(&a, 1e-6) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("eigenvalue")),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }
}
