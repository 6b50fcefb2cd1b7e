//! Define-by-run autodiff tape.
//!
//! Values are computed eagerly as nodes are pushed; `backward` walks the
//! tape in reverse creation order (which is a valid topological order) and
//! accumulates gradients into parents. Leaf nodes keep their gradients so
//! parameter updates can read them back by name.

use std::collections::BTreeMap;

use ndarray::{Array1, Array4, ArrayD, ArrayView4, Ix4, IxDyn};

use super::ops;
use super::store::ParamStore;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

struct Node {
    value: ArrayD<f64>,
    grad: Option<ArrayD<f64>>,
    op: Op,
}

enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    /// Weight-normalized convolution: w = g * v / ||v|| per output channel.
    WnConv {
        x: Var,
        v: Var,
        g: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        w: Array4<f64>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Array1<f64>,
        inv_std: Array1<f64>,
        batch_stats: bool,
    },
    Relu {
        x: Var,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    PRelu {
        x: Var,
        alpha: Var,
    },
    Tanh {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: f64,
    },
    Concat {
        xs: Vec<Var>,
    },
    MaxPool {
        x: Var,
        argmax: ndarray::Array4<usize>,
    },
    Upsample2 {
        x: Var,
    },
    PixelShuffle {
        x: Var,
        r: usize,
    },
    /// Mean absolute difference against a constant target; scalar output.
    L1Loss {
        pred: Var,
        target: ArrayD<f64>,
    },
    /// Mean binary cross-entropy of logits against a constant 0/1 target,
    /// computed entirely in logit space; scalar output.
    BceLogits {
        logits: Var,
        target_one: bool,
    },
    /// ca * a + cb * b on scalars.
    Axpy {
        a: Var,
        b: Var,
        ca: f64,
        cb: f64,
    },
}

pub struct Graph {
    nodes: Vec<Node>,
    param_vars: BTreeMap<String, Var>,
    pub training: bool,
}

fn view4(a: &ArrayD<f64>) -> ArrayView4<'_, f64> {
    a.view().into_dimensionality::<Ix4>().expect("4-D value")
}

fn arr1(a: &ArrayD<f64>) -> Array1<f64> {
    a.view()
        .into_dimensionality::<ndarray::Ix1>()
        .expect("1-D value")
        .to_owned()
}

impl Graph {
    pub fn new(training: bool) -> Self {
        Graph {
            nodes: Vec::new(),
            param_vars: BTreeMap::new(),
            training,
        }
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn leaf4(&mut self, value: Array4<f64>) -> Var {
        self.push(value.into_dyn(), Op::Leaf)
    }

    /// Leaf holding a named parameter; memoized so repeated lookups share
    /// one node. Models must use globally distinct names (the discriminator
    /// namespaces its parameters) when two stores feed one graph.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        if let Some(&v) = self.param_vars.get(name) {
            return v;
        }
        let v = self.push(store.get(name).clone(), Op::Leaf);
        self.param_vars.insert(name.to_string(), v);
        v
    }

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    pub fn value4(&self, v: Var) -> Array4<f64> {
        view4(&self.nodes[v.0].value).to_owned()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        *self.nodes[v.0]
            .value
            .iter()
            .next()
            .expect("scalar node is empty")
    }

    pub fn grad(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradients of every named parameter used in this graph.
    pub fn param_grads(&self) -> BTreeMap<String, ArrayD<f64>> {
        self.param_vars
            .iter()
            .filter_map(|(name, &var)| {
                self.nodes[var.0]
                    .grad
                    .as_ref()
                    .map(|g| (name.clone(), g.clone()))
            })
            .collect()
    }

    // ---- ops ---------------------------------------------------------

    pub fn conv(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let y = ops::conv2d(
            &view4(&self.nodes[x.0].value),
            &view4(&self.nodes[w.0].value),
            b.map(|bv| arr1(&self.nodes[bv.0].value)).as_ref(),
            stride,
            pad,
        );
        self.push(y.into_dyn(), Op::Conv { x, w, b, stride, pad })
    }

    pub fn wn_conv(
        &mut self,
        x: Var,
        v: Var,
        g: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Var {
        let vv = view4(&self.nodes[v.0].value).to_owned();
        let gv = arr1(&self.nodes[g.0].value);
        let mut w = vv;
        for (oc, mut filt) in w.outer_iter_mut().enumerate() {
            let norm = filt.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
            let scale = gv[oc] / norm;
            filt.mapv_inplace(|t| t * scale);
        }
        let y = ops::conv2d(
            &view4(&self.nodes[x.0].value),
            &w.view(),
            b.map(|bv| arr1(&self.nodes[bv.0].value)).as_ref(),
            stride,
            pad,
        );
        self.push(
            y.into_dyn(),
            Op::WnConv {
                x,
                v,
                g,
                b,
                stride,
                pad,
                w,
            },
        )
    }

    /// Batch norm with batch statistics; returns the output together with
    /// the batch mean and (biased) variance so callers can maintain running
    /// statistics.
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> (Var, Array1<f64>, Array1<f64>) {
        let (mean, var) = ops::batch_stats(&view4(&self.nodes[x.0].value));
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let y = ops::batchnorm_apply(
            &view4(&self.nodes[x.0].value),
            &arr1(&self.nodes[gamma.0].value),
            &arr1(&self.nodes[beta.0].value),
            &mean,
            &inv_std,
        );
        let out = self.push(
            y.into_dyn(),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean: mean.clone(),
                inv_std,
                batch_stats: true,
            },
        );
        (out, mean, var)
    }

    /// Batch norm with fixed (running) statistics.
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &ArrayD<f64>,
        var: &ArrayD<f64>,
        eps: f64,
    ) -> Var {
        let mean = arr1(mean);
        let inv_std = arr1(var).mapv(|v| 1.0 / (v + eps).sqrt());
        let y = ops::batchnorm_apply(
            &view4(&self.nodes[x.0].value),
            &arr1(&self.nodes[gamma.0].value),
            &arr1(&self.nodes[beta.0].value),
            &mean,
            &inv_std,
        );
        self.push(
            y.into_dyn(),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                batch_stats: false,
            },
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.nodes[x.0].value.mapv(|v| v.max(0.0));
        self.push(y, Op::Relu { x })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let y = self.nodes[x.0].value.mapv(|v| if v > 0.0 { v } else { slope * v });
        self.push(y, Op::LeakyRelu { x, slope })
    }

    pub fn prelu(&mut self, x: Var, alpha: Var) -> Var {
        let a = arr1(&self.nodes[alpha.0].value);
        let xv = view4(&self.nodes[x.0].value).to_owned();
        let mut y = xv;
        for (ci, mut lane) in y.axis_iter_mut(ndarray::Axis(1)).enumerate() {
            let s = a[ci];
            lane.mapv_inplace(|v| if v > 0.0 { v } else { s * v });
        }
        self.push(y.into_dyn(), Op::PRelu { x, alpha })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.nodes[x.0].value.mapv(f64::tanh);
        self.push(y, Op::Tanh { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(y, Op::Add { a, b })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let y = self.nodes[x.0].value.mapv(|v| v * c);
        self.push(y, Op::Scale { x, c })
    }

    pub fn concat(&mut self, xs: &[Var]) -> Var {
        let views: Vec<_> = xs.iter().map(|v| view4(&self.nodes[v.0].value)).collect();
        let y = ndarray::concatenate(
            ndarray::Axis(1),
            &views.iter().map(|v| v.view()).collect::<Vec<_>>(),
        )
        .expect("concat shapes");
        self.push(y.into_dyn(), Op::Concat { xs: xs.to_vec() })
    }

    pub fn maxpool(&mut self, x: Var, kernel: usize, stride: usize, pad: usize) -> Var {
        let (y, argmax) = ops::maxpool2d(&view4(&self.nodes[x.0].value), kernel, stride, pad);
        self.push(y.into_dyn(), Op::MaxPool { x, argmax })
    }

    pub fn upsample2(&mut self, x: Var) -> Var {
        let y = ops::upsample_nearest2(&view4(&self.nodes[x.0].value));
        self.push(y.into_dyn(), Op::Upsample2 { x })
    }

    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Var {
        let y = ops::pixel_shuffle(&view4(&self.nodes[x.0].value), r);
        self.push(y.into_dyn(), Op::PixelShuffle { x, r })
    }

    pub fn l1_loss(&mut self, pred: Var, target: &ArrayD<f64>) -> Var {
        let diff = &self.nodes[pred.0].value - target;
        let loss = diff.mapv(f64::abs).mean().unwrap_or(0.0);
        self.push(
            ArrayD::from_elem(IxDyn(&[]), loss),
            Op::L1Loss {
                pred,
                target: target.clone(),
            },
        )
    }

    pub fn bce_with_logits(&mut self, logits: Var, target_one: bool) -> Var {
        let lv = &self.nodes[logits.0].value;
        let loss = lv
            .iter()
            .map(|&x| if target_one { ops::softplus(-x) } else { ops::softplus(x) })
            .sum::<f64>()
            / lv.len() as f64;
        self.push(
            ArrayD::from_elem(IxDyn(&[]), loss),
            Op::BceLogits { logits, target_one },
        )
    }

    pub fn axpy(&mut self, ca: f64, a: Var, cb: f64, b: Var) -> Var {
        let y = ca * self.scalar(a) + cb * self.scalar(b);
        self.push(ArrayD::from_elem(IxDyn(&[]), y), Op::Axpy { a, b, ca, cb })
    }

    // ---- backward ----------------------------------------------------

    /// Back-propagates from a scalar root. Leaf gradients survive; interior
    /// gradients are consumed as the walk passes them.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(
            self.nodes[root.0].value.len(),
            1,
            "backward root must be scalar"
        );
        self.nodes[root.0].grad = Some(ArrayD::from_elem(IxDyn(&[]), 1.0));
        for i in (0..self.nodes.len()).rev() {
            let Some(gy) = self.nodes[i].grad.take() else {
                continue;
            };
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.nodes[i].grad = Some(gy);
                continue;
            }
            let contribs = backward_step(&self.nodes, i, &gy);
            for (j, g) in contribs {
                match &mut self.nodes[j].grad {
                    Some(acc) => *acc += &g,
                    slot => *slot = Some(g),
                }
            }
        }
    }
}

/// Gradient contributions of node `i` to its parents.
fn backward_step(nodes: &[Node], i: usize, gy: &ArrayD<f64>) -> Vec<(usize, ArrayD<f64>)> {
    let node = &nodes[i];
    match &node.op {
        Op::Leaf => Vec::new(),
        Op::Conv { x, w, b, stride, pad } => {
            let (gx, gw, gb) = ops::conv2d_backward(
                &view4(&nodes[x.0].value),
                &view4(&nodes[w.0].value),
                &view4(gy),
                *stride,
                *pad,
            );
            let mut out = vec![(x.0, gx.into_dyn()), (w.0, gw.into_dyn())];
            if let Some(bv) = b {
                out.push((bv.0, gb.into_dyn()));
            }
            out
        }
        Op::WnConv {
            x,
            v,
            g,
            b,
            stride,
            pad,
            w,
        } => {
            let (gx, gw, gb) = ops::conv2d_backward(
                &view4(&nodes[x.0].value),
                &w.view(),
                &view4(gy),
                *stride,
                *pad,
            );
            let vv = view4(&nodes[v.0].value);
            let gvals = arr1(&nodes[g.0].value);
            let mut gv = Array4::<f64>::zeros(vv.dim());
            let mut gg = Array1::<f64>::zeros(gvals.len());
            for oc in 0..vv.dim().0 {
                let filt = vv.index_axis(ndarray::Axis(0), oc);
                let gw_oc = gw.index_axis(ndarray::Axis(0), oc);
                let norm = filt.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
                let dot = ndarray::Zip::from(&gw_oc)
                    .and(&filt)
                    .fold(0.0, |acc, &a, &b| acc + a * b / norm);
                gg[oc] = dot;
                let scale = gvals[oc] / norm;
                let mut gv_oc = gv.index_axis_mut(ndarray::Axis(0), oc);
                ndarray::Zip::from(&mut gv_oc)
                    .and(&gw_oc)
                    .and(&filt)
                    .for_each(|o, &gwv, &fv| {
                        *o = scale * (gwv - dot * fv / norm);
                    });
            }
            let mut out = vec![(x.0, gx.into_dyn()), (v.0, gv.into_dyn()), (g.0, gg.into_dyn())];
            if let Some(bv) = b {
                out.push((bv.0, gb.into_dyn()));
            }
            out
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            mean,
            inv_std,
            batch_stats,
        } => {
            let gamma_v = arr1(&nodes[gamma.0].value);
            let (gx, dgamma, dbeta) = if *batch_stats {
                ops::batchnorm_train_backward(
                    &view4(&nodes[x.0].value),
                    &gamma_v,
                    mean,
                    inv_std,
                    &view4(gy),
                )
            } else {
                ops::batchnorm_eval_backward(
                    &view4(&nodes[x.0].value),
                    &gamma_v,
                    mean,
                    inv_std,
                    &view4(gy),
                )
            };
            vec![
                (x.0, gx.into_dyn()),
                (gamma.0, dgamma.into_dyn()),
                (beta.0, dbeta.into_dyn()),
            ]
        }
        Op::Relu { x } => {
            let gx = ndarray::Zip::from(gy)
                .and(&nodes[x.0].value)
                .map_collect(|&g, &v| if v > 0.0 { g } else { 0.0 });
            vec![(x.0, gx)]
        }
        Op::LeakyRelu { x, slope } => {
            let gx = ndarray::Zip::from(gy)
                .and(&nodes[x.0].value)
                .map_collect(|&g, &v| if v > 0.0 { g } else { slope * g });
            vec![(x.0, gx)]
        }
        Op::PRelu { x, alpha } => {
            let a = arr1(&nodes[alpha.0].value);
            let xv = view4(&nodes[x.0].value);
            let gyv = view4(gy);
            let mut gx = Array4::zeros(xv.dim());
            let mut ga = Array1::zeros(a.len());
            for ci in 0..xv.dim().1 {
                let s = a[ci];
                let xl = xv.slice(ndarray::s![.., ci, .., ..]);
                let gl = gyv.slice(ndarray::s![.., ci, .., ..]);
                let mut gxl = gx.slice_mut(ndarray::s![.., ci, .., ..]);
                ndarray::Zip::from(&mut gxl)
                    .and(&xl)
                    .and(&gl)
                    .for_each(|o, &xvv, &gvv| {
                        if xvv > 0.0 {
                            *o = gvv;
                        } else {
                            *o = s * gvv;
                            ga[ci] += gvv * xvv;
                        }
                    });
            }
            vec![(x.0, gx.into_dyn()), (alpha.0, ga.into_dyn())]
        }
        Op::Tanh { x } => {
            let gx = ndarray::Zip::from(gy)
                .and(&node.value)
                .map_collect(|&g, &y| g * (1.0 - y * y));
            vec![(x.0, gx)]
        }
        Op::Add { a, b } => vec![(a.0, gy.clone()), (b.0, gy.clone())],
        Op::Scale { x, c } => vec![(x.0, gy.mapv(|g| g * c))],
        Op::Concat { xs } => {
            let gyv = view4(gy);
            let mut out = Vec::with_capacity(xs.len());
            let mut start = 0;
            for xv in xs {
                let c = view4(&nodes[xv.0].value).dim().1;
                let slice = gyv
                    .slice(ndarray::s![.., start..start + c, .., ..])
                    .to_owned();
                out.push((xv.0, slice.into_dyn()));
                start += c;
            }
            out
        }
        Op::MaxPool { x, argmax } => {
            let dims = view4(&nodes[x.0].value).dim();
            let gx = ops::maxpool2d_backward(dims, argmax, &view4(gy));
            vec![(x.0, gx.into_dyn())]
        }
        Op::Upsample2 { x } => {
            let gx = ops::upsample_nearest2_backward(&view4(gy));
            vec![(x.0, gx.into_dyn())]
        }
        Op::PixelShuffle { x, r } => {
            let gx = ops::pixel_shuffle_backward(&view4(gy), *r);
            vec![(x.0, gx.into_dyn())]
        }
        Op::L1Loss { pred, target } => {
            let g = gy.iter().next().copied().unwrap_or(1.0);
            let n = target.len() as f64;
            let gp = ndarray::Zip::from(&nodes[pred.0].value)
                .and(target)
                .map_collect(|&p, &t| {
                    let d = p - t;
                    if d > 0.0 {
                        g / n
                    } else if d < 0.0 {
                        -g / n
                    } else {
                        0.0
                    }
                });
            vec![(pred.0, gp)]
        }
        Op::BceLogits { logits, target_one } => {
            let g = gy.iter().next().copied().unwrap_or(1.0);
            let lv = &nodes[logits.0].value;
            let n = lv.len() as f64;
            let t = if *target_one { 1.0 } else { 0.0 };
            let gl = lv.mapv(|x| g * (ops::sigmoid(x) - t) / n);
            vec![(logits.0, gl)]
        }
        Op::Axpy { a, b, ca, cb } => {
            let g = gy.iter().next().copied().unwrap_or(1.0);
            vec![
                (a.0, ArrayD::from_elem(IxDyn(&[]), ca * g)),
                (b.0, ArrayD::from_elem(IxDyn(&[]), cb * g)),
            ]
        }
    }
}
