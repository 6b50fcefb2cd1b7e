//! Pure array-level forward and backward implementations of the layer
//! operations, in NCHW layout and 64-bit floats.
//!
//! The tape in [`crate::nn::graph`] wires these together; keeping them as
//! free functions makes each one unit-testable against finite differences
//! in isolation.

use ndarray::{s, Array1, Array2, Array4, ArrayView4, Axis};

/// Output spatial size of a convolution: floor((n + 2p - k) / s) + 1.
///
/// This closed form is the "stride arithmetic" the patch-discriminator
/// geometry contract is checked against.
pub fn conv_out_size(n: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - kernel) / stride + 1
}

/// Unfolds x[B,C,H,W] into a [C*KH*KW, B*OH*OW] matrix for GEMM convolution.
fn im2col(x: &ArrayView4<f64>, kernel: usize, stride: usize, pad: usize) -> Array2<f64> {
    let (bs, c, h, w) = x.dim();
    let oh = conv_out_size(h, kernel, stride, pad);
    let ow = conv_out_size(w, kernel, stride, pad);
    let mut col = Array2::<f64>::zeros((c * kernel * kernel, bs * oh * ow));
    for ci in 0..c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ci * kernel + ky) * kernel + kx;
                let mut lane = col.row_mut(row);
                for b in 0..bs {
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            lane[(b * oh + oy) * ow + ox] = x[(b, ci, iy as usize, ix as usize)];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add inverse of [`im2col`].
fn col2im(
    col: &Array2<f64>,
    dims: (usize, usize, usize, usize),
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Array4<f64> {
    let (bs, c, h, w) = dims;
    let oh = conv_out_size(h, kernel, stride, pad);
    let ow = conv_out_size(w, kernel, stride, pad);
    let mut x = Array4::<f64>::zeros(dims);
    for ci in 0..c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ci * kernel + ky) * kernel + kx;
                let lane = col.row(row);
                for b in 0..bs {
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            x[(b, ci, iy as usize, ix as usize)] += lane[(b * oh + oy) * ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// GEMM convolution. `w` is [OC, IC, K, K], bias per output channel.
pub fn conv2d(
    x: &ArrayView4<f64>,
    w: &ArrayView4<f64>,
    bias: Option<&Array1<f64>>,
    stride: usize,
    pad: usize,
) -> Array4<f64> {
    let (bs, _, h, wdt) = x.dim();
    let (oc, ic, k, _) = w.dim();
    debug_assert_eq!(ic, x.dim().1, "conv in-channel mismatch");
    let oh = conv_out_size(h, k, stride, pad);
    let ow = conv_out_size(wdt, k, stride, pad);
    let col = im2col(x, k, stride, pad);
    let w_mat = w
        .to_shape((oc, ic * k * k))
        .expect("conv weight reshape")
        .to_owned();
    let y_mat = w_mat.dot(&col); // [OC, B*OH*OW]
    let y = y_mat
        .into_shape_with_order((oc, bs, oh, ow))
        .expect("conv output reshape")
        .permuted_axes([1, 0, 2, 3])
        .as_standard_layout()
        .to_owned();
    let mut y = y;
    if let Some(b) = bias {
        for (ci, mut lane) in y.axis_iter_mut(Axis(1)).enumerate() {
            lane += b[ci];
        }
    }
    y
}

/// Gradients of [`conv2d`] w.r.t. input, weights and bias.
pub fn conv2d_backward(
    x: &ArrayView4<f64>,
    w: &ArrayView4<f64>,
    grad_y: &ArrayView4<f64>,
    stride: usize,
    pad: usize,
) -> (Array4<f64>, Array4<f64>, Array1<f64>) {
    let (bs, _c, h, wdt) = x.dim();
    let (oc, ic, k, _) = w.dim();
    let (gb_b, gc, goh, gow) = grad_y.dim();
    debug_assert_eq!((gb_b, gc), (bs, oc));

    let gy_mat = grad_y
        .permuted_axes([1, 0, 2, 3])
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((oc, bs * goh * gow))
        .expect("grad reshape");

    let col = im2col(x, k, stride, pad);
    let gw = gy_mat
        .dot(&col.t())
        .into_shape_with_order((oc, ic, k, k))
        .expect("grad_w reshape");

    let gb = Array1::from_iter(grad_y.axis_iter(Axis(1)).map(|lane| lane.sum()));

    let w_mat = w
        .to_shape((oc, ic * k * k))
        .expect("conv weight reshape")
        .to_owned();
    let gcol = w_mat.t().dot(&gy_mat);
    let gx = col2im(&gcol, (bs, ic, h, wdt), k, stride, pad);

    (gx, gw, gb)
}

/// Per-channel batch statistics over (B, H, W). Returns (mean, biased var).
pub fn batch_stats(x: &ArrayView4<f64>) -> (Array1<f64>, Array1<f64>) {
    let (bs, c, h, w) = x.dim();
    let n = (bs * h * w) as f64;
    let mut mean = Array1::zeros(c);
    let mut var = Array1::zeros(c);
    for ci in 0..c {
        let lane = x.slice(s![.., ci, .., ..]);
        let m = lane.sum() / n;
        mean[ci] = m;
        var[ci] = lane.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    }
    (mean, var)
}

/// Normalizes x with the given per-channel statistics and affine params.
pub fn batchnorm_apply(
    x: &ArrayView4<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
    mean: &Array1<f64>,
    inv_std: &Array1<f64>,
) -> Array4<f64> {
    let mut y = x.to_owned();
    for (ci, mut lane) in y.axis_iter_mut(Axis(1)).enumerate() {
        let (m, s, g, b) = (mean[ci], inv_std[ci], gamma[ci], beta[ci]);
        lane.mapv_inplace(|v| (v - m) * s * g + b);
    }
    y
}

/// Backward of train-mode batch norm (statistics depend on the batch).
pub fn batchnorm_train_backward(
    x: &ArrayView4<f64>,
    gamma: &Array1<f64>,
    mean: &Array1<f64>,
    inv_std: &Array1<f64>,
    grad_y: &ArrayView4<f64>,
) -> (Array4<f64>, Array1<f64>, Array1<f64>) {
    let (bs, c, h, w) = x.dim();
    let n = (bs * h * w) as f64;
    let mut gx = Array4::zeros(x.dim());
    let mut dgamma = Array1::zeros(c);
    let mut dbeta = Array1::zeros(c);
    for ci in 0..c {
        let xl = x.slice(s![.., ci, .., ..]);
        let gyl = grad_y.slice(s![.., ci, .., ..]);
        let (m, is) = (mean[ci], inv_std[ci]);
        let mut sum_gy = 0.0;
        let mut sum_gy_xhat = 0.0;
        ndarray::Zip::from(&xl).and(&gyl).for_each(|&xv, &gv| {
            sum_gy += gv;
            sum_gy_xhat += gv * (xv - m) * is;
        });
        dbeta[ci] = sum_gy;
        dgamma[ci] = sum_gy_xhat;
        let scale = gamma[ci] * is / n;
        let mut gxl = gx.slice_mut(s![.., ci, .., ..]);
        ndarray::Zip::from(&mut gxl)
            .and(&xl)
            .and(&gyl)
            .for_each(|g, &xv, &gv| {
                let xhat = (xv - m) * is;
                *g = scale * (n * gv - sum_gy - xhat * sum_gy_xhat);
            });
    }
    (gx, dgamma, dbeta)
}

/// Backward of eval-mode batch norm (statistics are constants).
pub fn batchnorm_eval_backward(
    x: &ArrayView4<f64>,
    gamma: &Array1<f64>,
    mean: &Array1<f64>,
    inv_std: &Array1<f64>,
    grad_y: &ArrayView4<f64>,
) -> (Array4<f64>, Array1<f64>, Array1<f64>) {
    let c = x.dim().1;
    let mut gx = Array4::zeros(x.dim());
    let mut dgamma = Array1::zeros(c);
    let mut dbeta = Array1::zeros(c);
    for ci in 0..c {
        let xl = x.slice(s![.., ci, .., ..]);
        let gyl = grad_y.slice(s![.., ci, .., ..]);
        let (m, is, g) = (mean[ci], inv_std[ci], gamma[ci]);
        let mut gxl = gx.slice_mut(s![.., ci, .., ..]);
        ndarray::Zip::from(&mut gxl)
            .and(&xl)
            .and(&gyl)
            .for_each(|gx_v, &xv, &gv| {
                *gx_v = gv * g * is;
                dgamma[ci] += gv * (xv - m) * is;
                dbeta[ci] += gv;
            });
    }
    (gx, dgamma, dbeta)
}

/// Max pooling; returns the output and the flat spatial argmax per output
/// cell (needed for the backward scatter).
pub fn maxpool2d(
    x: &ArrayView4<f64>,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> (Array4<f64>, Array4<usize>) {
    let (bs, c, h, w) = x.dim();
    let oh = conv_out_size(h, kernel, stride, pad);
    let ow = conv_out_size(w, kernel, stride, pad);
    let mut y = Array4::zeros((bs, c, oh, ow));
    let mut idx = Array4::zeros((bs, c, oh, ow));
    for b in 0..bs {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = 0usize;
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let v = x[(b, ci, iy as usize, ix as usize)];
                            if v > best {
                                best = v;
                                best_at = iy as usize * w + ix as usize;
                            }
                        }
                    }
                    y[(b, ci, oy, ox)] = best;
                    idx[(b, ci, oy, ox)] = best_at;
                }
            }
        }
    }
    (y, idx)
}

pub fn maxpool2d_backward(
    input_dims: (usize, usize, usize, usize),
    argmax: &Array4<usize>,
    grad_y: &ArrayView4<f64>,
) -> Array4<f64> {
    let mut gx = Array4::zeros(input_dims);
    let w = input_dims.3;
    for ((b, c, oy, ox), &flat) in argmax.indexed_iter() {
        gx[(b, c, flat / w, flat % w)] += grad_y[(b, c, oy, ox)];
    }
    gx
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample_nearest2(x: &ArrayView4<f64>) -> Array4<f64> {
    let (bs, c, h, w) = x.dim();
    let mut y = Array4::zeros((bs, c, h * 2, w * 2));
    for ((b, ci, i, j), &v) in x.indexed_iter() {
        y[(b, ci, 2 * i, 2 * j)] = v;
        y[(b, ci, 2 * i, 2 * j + 1)] = v;
        y[(b, ci, 2 * i + 1, 2 * j)] = v;
        y[(b, ci, 2 * i + 1, 2 * j + 1)] = v;
    }
    y
}

pub fn upsample_nearest2_backward(grad_y: &ArrayView4<f64>) -> Array4<f64> {
    let (bs, c, h2, w2) = grad_y.dim();
    let mut gx = Array4::zeros((bs, c, h2 / 2, w2 / 2));
    for ((b, ci, i, j), &v) in grad_y.indexed_iter() {
        gx[(b, ci, i / 2, j / 2)] += v;
    }
    gx
}

/// Pixel shuffle: [B, C*r^2, H, W] -> [B, C, H*r, W*r], channel-major
/// sub-pixel ordering.
pub fn pixel_shuffle(x: &ArrayView4<f64>, r: usize) -> Array4<f64> {
    let (bs, cr2, h, w) = x.dim();
    let c = cr2 / (r * r);
    debug_assert_eq!(c * r * r, cr2, "pixel_shuffle channel count");
    let mut y = Array4::zeros((bs, c, h * r, w * r));
    for ((b, ci_in, i, j), &v) in x.indexed_iter() {
        let ci = ci_in / (r * r);
        let dy = (ci_in % (r * r)) / r;
        let dx = ci_in % r;
        y[(b, ci, i * r + dy, j * r + dx)] = v;
    }
    y
}

pub fn pixel_shuffle_backward(grad_y: &ArrayView4<f64>, r: usize) -> Array4<f64> {
    let (bs, c, hr, wr) = grad_y.dim();
    let (h, w) = (hr / r, wr / r);
    let mut gx = Array4::zeros((bs, c * r * r, h, w));
    for ((b, ci, yy, xx), &v) in grad_y.indexed_iter() {
        let (i, dy) = (yy / r, yy % r);
        let (j, dx) = (xx / r, xx % r);
        gx[(b, ci * r * r + dy * r + dx, i, j)] = v;
    }
    gx
}

/// Numerically stable softplus: ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn randn4(rng: &mut ChaCha20Rng, dims: (usize, usize, usize, usize)) -> Array4<f64> {
        Array4::from_shape_fn(dims, |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    /// Central finite difference of a scalar function of one array entry.
    fn fd<F: FnMut(&Array4<f64>) -> f64>(
        x: &Array4<f64>,
        at: (usize, usize, usize, usize),
        mut f: F,
    ) -> f64 {
        let h = 1e-6;
        let mut xp = x.clone();
        xp[at] += h;
        let mut xm = x.clone();
        xm[at] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    }

    #[test]
    fn conv_matches_hand_computed_values() {
        // 1x1x3x3 input, 1x1x2x2 kernel, stride 1, no pad.
        let x = Array4::from_shape_vec(
            (1, 1, 3, 3),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap();
        let w = Array4::from_shape_vec((1, 1, 2, 2), vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        let y = conv2d(&x.view(), &w.view(), None, 1, 0);
        // each output = top-left - bottom-right = -4
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert!(y.iter().all(|&v| (v + 4.0).abs() < 1e-12));
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let x = randn4(&mut rng, (2, 3, 5, 5));
        let w = randn4(&mut rng, (4, 3, 3, 3));
        let b = Array1::from_shape_fn(4, |_| rng.random::<f64>() - 0.5);
        let stride = 2;
        let pad = 1;

        // scalar objective: sum of outputs
        let loss = |xx: &Array4<f64>, ww: &Array4<f64>, bb: &Array1<f64>| {
            conv2d(&xx.view(), &ww.view(), Some(bb), stride, pad).sum()
        };
        let y = conv2d(&x.view(), &w.view(), Some(&b), stride, pad);
        let gy = Array4::ones(y.dim());
        let (gx, gw, gb) = conv2d_backward(&x.view(), &w.view(), &gy.view(), stride, pad);

        for &at in &[(0, 0, 0, 0), (1, 2, 4, 4), (0, 1, 2, 3)] {
            let n = fd(&x, at, |xx| loss(xx, &w, &b));
            assert!((gx[at] - n).abs() < 1e-6, "gx {} vs fd {}", gx[at], n);
        }
        for &at in &[(0, 0, 0, 0), (3, 2, 2, 2), (1, 1, 0, 2)] {
            let n = fd(&w, at, |ww| loss(&x, ww, &b));
            assert!((gw[at] - n).abs() < 1e-6, "gw {} vs fd {}", gw[at], n);
        }
        let mut bp = b.clone();
        bp[1] += 1e-6;
        let mut bm = b.clone();
        bm[1] -= 1e-6;
        let n = (loss(&x, &w, &bp) - loss(&x, &w, &bm)) / 2e-6;
        assert!((gb[1] - n).abs() < 1e-5);
    }

    #[test]
    fn batchnorm_train_gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let x = randn4(&mut rng, (3, 2, 4, 4));
        let gamma = Array1::from_vec(vec![1.3, 0.7]);
        let beta = Array1::from_vec(vec![0.1, -0.2]);
        let eps = 1e-5;

        // weighted sum output so the gradient is non-trivial
        let wsum = randn4(&mut rng, (3, 2, 4, 4));
        let loss = |xx: &Array4<f64>, g: &Array1<f64>, b: &Array1<f64>| {
            let (mean, var) = batch_stats(&xx.view());
            let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
            (batchnorm_apply(&xx.view(), g, b, &mean, &inv_std) * &wsum).sum()
        };

        let (mean, var) = batch_stats(&x.view());
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let (gx, dgamma, dbeta) =
            batchnorm_train_backward(&x.view(), &gamma, &mean, &inv_std, &wsum.view());

        for &at in &[(0, 0, 0, 0), (2, 1, 3, 3), (1, 0, 2, 1)] {
            let n = fd(&x, at, |xx| loss(xx, &gamma, &beta));
            assert!((gx[at] - n).abs() < 1e-5, "gx {} vs fd {}", gx[at], n);
        }
        for ci in 0..2 {
            let mut gp = gamma.clone();
            gp[ci] += 1e-6;
            let mut gm = gamma.clone();
            gm[ci] -= 1e-6;
            let n = (loss(&x, &gp, &beta) - loss(&x, &gm, &beta)) / 2e-6;
            assert!((dgamma[ci] - n).abs() < 1e-5);
            let mut bp = beta.clone();
            bp[ci] += 1e-6;
            let mut bm = beta.clone();
            bm[ci] -= 1e-6;
            let n = (loss(&x, &gamma, &bp) - loss(&x, &gamma, &bm)) / 2e-6;
            assert!((dbeta[ci] - n).abs() < 1e-5);
        }
    }

    #[test]
    fn maxpool_roundtrip_gradient() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = randn4(&mut rng, (1, 2, 5, 5));
        let (y, idx) = maxpool2d(&x.view(), 3, 2, 1);
        assert_eq!(y.shape(), &[1, 2, 3, 3]);
        let gy = Array4::ones(y.dim());
        let gx = maxpool2d_backward(x.dim(), &idx, &gy.view());
        // gradient mass is conserved
        assert!((gx.sum() - gy.sum()).abs() < 1e-12);
        for &at in &[(0, 0, 0, 0), (0, 1, 4, 4)] {
            let n = fd(&x, at, |xx| maxpool2d(&xx.view(), 3, 2, 1).0.sum());
            assert!((gx[at] - n).abs() < 1e-6);
        }
    }

    #[test]
    fn pixel_shuffle_is_a_permutation() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = randn4(&mut rng, (2, 8, 3, 3));
        let y = pixel_shuffle(&x.view(), 2);
        assert_eq!(y.shape(), &[2, 2, 6, 6]);
        let back = pixel_shuffle_backward(&y.view(), 2);
        assert_eq!(back, x);
        // explicit placement check
        assert_eq!(y[(0, 0, 0, 0)], x[(0, 0, 0, 0)]);
        assert_eq!(y[(0, 0, 0, 1)], x[(0, 1, 0, 0)]);
        assert_eq!(y[(0, 0, 1, 0)], x[(0, 2, 0, 0)]);
        assert_eq!(y[(0, 1, 1, 1)], x[(0, 7, 0, 0)]);
    }

    #[test]
    fn upsample_then_sum_backward() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let x = randn4(&mut rng, (1, 3, 4, 4));
        let y = upsample_nearest2(&x.view());
        assert_eq!(y.shape(), &[1, 3, 8, 8]);
        let gy = randn4(&mut rng, (1, 3, 8, 8));
        let gx = upsample_nearest2_backward(&gy.view());
        for &at in &[(0, 0, 0, 0), (0, 2, 3, 3)] {
            let n = fd(&x, at, |xx| (upsample_nearest2(&xx.view()) * &gy).sum());
            assert!((gx[at] - n).abs() < 1e-6);
        }
    }

    #[test]
    fn stable_sigmoid_softplus_extremes() {
        assert_eq!(softplus(-1e5), 0.0);
        assert!((softplus(1e5) - 1e5).abs() < 1e-9);
        assert!(sigmoid(-1e5) >= 0.0 && sigmoid(-1e5) < 1e-300);
        assert!((sigmoid(1e5) - 1.0).abs() < 1e-12);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        // no NaNs anywhere on a wide sweep
        for i in -100..=100 {
            let x = i as f64 * 100.0;
            assert!(softplus(x).is_finite());
            assert!(sigmoid(x).is_finite());
        }
    }

    #[test]
    fn dyn_roundtrip_sanity() {
        // 0-dim arrays carry scalars through the tape
        let s = ArrayD::from_elem(IxDyn(&[]), 3.5);
        assert_eq!(s.sum(), 3.5);
    }
}
