//! Adam optimizer over a named parameter store.

use std::collections::BTreeMap;

use ndarray::ArrayD;

use super::store::ParamStore;

/// Adaptive moment estimation with bias correction. Moments are keyed by
/// parameter name so an optimizer can be checkpointed and restored next to
/// its model.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, ArrayD<f64>>,
    v: BTreeMap<String, ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update to every parameter that has a gradient. Parameters
    /// without gradients (and gradients without parameters) are ignored, so
    /// one store can hold several sub-networks.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, ArrayD<f64>>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, param) in store.params_mut() {
            let Some(grad) = grads.get(name) else {
                continue;
            };
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(grad.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(grad.raw_dim()));
            ndarray::Zip::from(param)
                .and(m)
                .and(v)
                .and(grad)
                .for_each(|p, mv, vv, &g| {
                    *mv = self.beta1 * *mv + (1.0 - self.beta1) * g;
                    *vv = self.beta2 * *vv + (1.0 - self.beta2) * g * g;
                    let m_hat = *mv / bc1;
                    let v_hat = *vv / bc2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                });
        }
    }

    /// Moment arrays flattened into a single named map for checkpointing.
    pub fn export_state(&self) -> (u64, BTreeMap<String, ArrayD<f64>>) {
        let mut out = BTreeMap::new();
        for (k, v) in &self.m {
            out.insert(format!("m.{k}"), v.clone());
        }
        for (k, v) in &self.v {
            out.insert(format!("v.{k}"), v.clone());
        }
        (self.t, out)
    }

    pub fn import_state(&mut self, t: u64, state: BTreeMap<String, ArrayD<f64>>) {
        self.t = t;
        self.m.clear();
        self.v.clear();
        for (k, v) in state {
            if let Some(rest) = k.strip_prefix("m.") {
                self.m.insert(rest.to_string(), v);
            } else if let Some(rest) = k.strip_prefix("v.") {
                self.v.insert(rest.to_string(), v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    /// Minimizes (x - 3)^2 elementwise; Adam should converge close to 3.
    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::new();
        store.insert("x", arr1(&[0.0, 10.0]).into_dyn());
        let mut opt = Adam::new(0.1, 0.9, 0.999);
        for _ in 0..500 {
            let x = store.get("x").clone();
            let grad = x.mapv(|v| 2.0 * (v - 3.0));
            let mut grads = BTreeMap::new();
            grads.insert("x".to_string(), grad);
            opt.step(&mut store, &grads);
        }
        for &v in store.get("x").iter() {
            assert!((v - 3.0).abs() < 1e-2, "x = {v}");
        }
    }

    #[test]
    fn state_roundtrip_preserves_trajectory() {
        let run = |split: bool| -> ArrayD<f64> {
            let mut store = ParamStore::new();
            store.insert("x", arr1(&[1.0, -2.0]).into_dyn());
            let mut opt = Adam::new(0.05, 0.5, 0.999);
            for step in 0..40 {
                if split && step == 20 {
                    let (t, state) = opt.export_state();
                    let mut fresh = Adam::new(0.05, 0.5, 0.999);
                    fresh.import_state(t, state);
                    opt = fresh;
                }
                let x = store.get("x").clone();
                let grad = x.mapv(|v| v.cos());
                let mut grads = BTreeMap::new();
                grads.insert("x".to_string(), grad);
                opt.step(&mut store, &grads);
            }
            store.get("x").clone()
        };
        assert_eq!(run(false), run(true));
    }
}
