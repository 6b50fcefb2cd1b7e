//! Seeded weight initialization.

use ndarray::{Array1, Array4, ArrayD};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

/// Deterministic RNG for a (seed, layer-path) pair so adding or reordering
/// layers does not shift the streams of unrelated layers.
pub fn layer_rng(seed: u64, name: &str) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let bytes = name.as_bytes();
    for (i, b) in bytes.iter().enumerate() {
        key[8 + (i % 24)] ^= b.rotate_left((i / 24) as u32 % 8);
    }
    ChaCha20Rng::from_seed(key)
}

/// He-normal init for a conv weight [OC, IC, K, K]: N(0, sqrt(2 / fan_in)).
pub fn he_conv(rng: &mut ChaCha20Rng, oc: usize, ic: usize, k: usize) -> ArrayD<f64> {
    let fan_in = (ic * k * k) as f64;
    let dist = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid normal");
    Array4::from_shape_fn((oc, ic, k, k), |_| dist.sample(rng)).into_dyn()
}

pub fn zeros1(n: usize) -> ArrayD<f64> {
    Array1::<f64>::zeros(n).into_dyn()
}

pub fn ones1(n: usize) -> ArrayD<f64> {
    Array1::<f64>::ones(n).into_dyn()
}

pub fn full1(n: usize, v: f64) -> ArrayD<f64> {
    Array1::<f64>::from_elem(n, v).into_dyn()
}
