//! Layer building blocks: thin configs that know how to register their
//! parameters in a [`ParamStore`] and how to append themselves to a tape.

use crate::nn::graph::{Graph, Var};
use crate::nn::{init, ParamStore};

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;
pub(crate) const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone)]
pub(crate) struct Conv2d {
    pub name: String,
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub bias: bool,
    pub weight_norm: bool,
}

impl Conv2d {
    pub fn new(name: impl Into<String>, in_c: usize, out_c: usize, kernel: usize) -> Self {
        Conv2d {
            name: name.into(),
            in_c,
            out_c,
            kernel,
            stride: 1,
            pad: kernel / 2,
            bias: true,
            weight_norm: false,
        }
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn pad(mut self, p: usize) -> Self {
        self.pad = p;
        self
    }

    pub fn no_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn weight_normed(mut self) -> Self {
        self.weight_norm = true;
        self
    }

    pub fn init(&self, store: &mut ParamStore, seed: u64) {
        let mut rng = init::layer_rng(seed, &self.name);
        let w = init::he_conv(&mut rng, self.out_c, self.in_c, self.kernel);
        if self.weight_norm {
            // v carries the direction, g the per-filter norm; initialized so
            // the effective weight equals the He draw.
            let mut g = Vec::with_capacity(self.out_c);
            for oc in 0..self.out_c {
                let filt = w.index_axis(ndarray::Axis(0), oc);
                g.push(filt.iter().map(|t| t * t).sum::<f64>().sqrt());
            }
            store.insert(format!("{}.v", self.name), w);
            store.insert(
                format!("{}.g", self.name),
                ndarray::Array1::from_vec(g).into_dyn(),
            );
        } else {
            store.insert(format!("{}.w", self.name), w);
        }
        if self.bias {
            store.insert(format!("{}.b", self.name), init::zeros1(self.out_c));
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let b = self
            .bias
            .then(|| g.param(store, &format!("{}.b", self.name)));
        if self.weight_norm {
            let v = g.param(store, &format!("{}.v", self.name));
            let gn = g.param(store, &format!("{}.g", self.name));
            g.wn_conv(x, v, gn, b, self.stride, self.pad)
        } else {
            let w = g.param(store, &format!("{}.w", self.name));
            g.conv(x, w, b, self.stride, self.pad)
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BatchNorm2d {
    pub name: String,
    pub channels: usize,
}

impl BatchNorm2d {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        BatchNorm2d {
            name: name.into(),
            channels,
        }
    }

    pub fn init(&self, store: &mut ParamStore) {
        store.insert(format!("{}.gamma", self.name), init::ones1(self.channels));
        store.insert(format!("{}.beta", self.name), init::zeros1(self.channels));
        store.insert_buffer(format!("{}.running_mean", self.name), init::zeros1(self.channels));
        store.insert_buffer(format!("{}.running_var", self.name), init::ones1(self.channels));
    }

    /// Train mode uses batch statistics and updates the running buffers;
    /// eval mode normalizes with the stored running statistics.
    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var) -> Var {
        let gamma = g.param(store, &format!("{}.gamma", self.name));
        let beta = g.param(store, &format!("{}.beta", self.name));
        if g.training {
            let (y, mean, var) = g.batchnorm_train(x, gamma, beta, BN_EPS);
            let rm_name = format!("{}.running_mean", self.name);
            let rv_name = format!("{}.running_var", self.name);
            let rm = store.buffer(&rm_name).clone();
            let rv = store.buffer(&rv_name).clone();
            store.set_buffer(
                &rm_name,
                (&rm * (1.0 - BN_MOMENTUM)) + &(mean.into_dyn() * BN_MOMENTUM),
            );
            store.set_buffer(
                &rv_name,
                (&rv * (1.0 - BN_MOMENTUM)) + &(var.into_dyn() * BN_MOMENTUM),
            );
            y
        } else {
            let rm = store.buffer(&format!("{}.running_mean", self.name)).clone();
            let rv = store.buffer(&format!("{}.running_var", self.name)).clone();
            g.batchnorm_eval(x, gamma, beta, &rm, &rv, BN_EPS)
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PRelu {
    pub name: String,
    pub channels: usize,
}

impl PRelu {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        PRelu {
            name: name.into(),
            channels,
        }
    }

    pub fn init(&self, store: &mut ParamStore) {
        store.insert(format!("{}.alpha", self.name), init::full1(self.channels, 0.25));
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let alpha = g.param(store, &format!("{}.alpha", self.name));
        g.prelu(x, alpha)
    }
}

/// Residual basic block: two 3x3 convs with batch norm, identity or
/// strided-projection skip.
#[derive(Debug, Clone)]
pub(crate) struct BasicBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub down: Option<(Conv2d, BatchNorm2d)>,
}

impl BasicBlock {
    pub fn new(name: &str, in_c: usize, out_c: usize, stride: usize) -> Self {
        let down = (stride != 1 || in_c != out_c).then(|| {
            (
                Conv2d::new(format!("{name}.down.conv"), in_c, out_c, 1)
                    .stride(stride)
                    .pad(0)
                    .no_bias(),
                BatchNorm2d::new(format!("{name}.down.bn"), out_c),
            )
        });
        BasicBlock {
            conv1: Conv2d::new(format!("{name}.conv1"), in_c, out_c, 3)
                .stride(stride)
                .no_bias(),
            bn1: BatchNorm2d::new(format!("{name}.bn1"), out_c),
            conv2: Conv2d::new(format!("{name}.conv2"), out_c, out_c, 3).no_bias(),
            bn2: BatchNorm2d::new(format!("{name}.bn2"), out_c),
            down,
        }
    }

    pub fn init(&self, store: &mut ParamStore, seed: u64) {
        self.conv1.init(store, seed);
        self.bn1.init(store);
        self.conv2.init(store, seed);
        self.bn2.init(store);
        if let Some((c, b)) = &self.down {
            c.init(store, seed);
            b.init(store);
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var) -> Var {
        let mut h = self.conv1.forward(g, store, x);
        h = self.bn1.forward(g, store, h);
        h = g.relu(h);
        h = self.conv2.forward(g, store, h);
        h = self.bn2.forward(g, store, h);
        let skip = match &self.down {
            Some((c, b)) => {
                let s = c.forward(g, store, x);
                b.forward(g, store, s)
            }
            None => x,
        };
        let sum = g.add(h, skip);
        g.relu(sum)
    }
}
