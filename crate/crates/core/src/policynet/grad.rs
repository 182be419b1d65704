//! Training objective and its analytic gradient.
//!
//! Per sample the objective is the cross-entropy between the search's visit
//! distribution and the predicted policy, plus the squared value error,
//! minus `beta` times the policy entropy. The batch loss is the mean.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{elu, masked_softmax, NetParams, NormStats, TrainConfig, BN_EPS};
use crate::error::{Error, Result};

/// One training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub mask: Vec<bool>,
    /// Target policy; zero wherever `mask` is false.
    pub policy: Vec<f64>,
    /// Target value.
    pub value: f64,
}

pub type Batch = [Sample];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics (and report them).
    Train,
    /// Normalize with the stored running statistics.
    Infer,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub cross_entropy: f64,
    pub value_mse: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: LossBreakdown,
    /// d loss / d theta, same layout as [`NetParams::theta`].
    pub theta: Vec<f64>,
    /// Batch normalization statistics seen in train mode (unbiased variance).
    pub batch_stats: Vec<NormStats>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.theta.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.loss.total.is_finite() && self.theta.iter().all(|g| g.is_finite())
    }
}

struct LayerCache {
    input: Array2<f64>,
    pre_activation: Array2<f64>,
    normalized: Option<Array2<f64>>,
    inv_std: Option<Array1<f64>>,
}

fn elu_grad(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else {
        y.exp()
    }
}

/// Objective value and gradient over `batch`.
pub fn loss(params: &NetParams, batch: &Batch, cfg: &TrainConfig, mode: Mode) -> Result<Gradient> {
    let net = params.config();
    let b = batch.len();
    if b == 0 {
        return Err(Error::Dimension("empty batch".into()));
    }
    for s in batch {
        if s.features.len() != net.input_dim || s.mask.len() != net.action_dim || s.policy.len() != net.action_dim {
            return Err(Error::Dimension("sample does not match network dimensions".into()));
        }
    }
    let layout = &params.layout;
    let bf = b as f64;

    let mut h = Array2::from_shape_fn((b, net.input_dim), |(i, j)| batch[i].features[j]);
    let mut caches = Vec::with_capacity(layout.hidden.len());
    let mut batch_stats = Vec::new();

    for (l, seg) in layout.hidden.iter().enumerate() {
        let z = h.dot(&params.matrix(seg.weight));
        let shift = params.vector(seg.shift);
        let (y, normalized, inv_std) = if net.batch_norm {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                    let centered = &z - &mean;
                    let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
                    let unbiased = if b > 1 { &var * (bf / (bf - 1.0)) } else { var.clone() };
                    batch_stats.push(NormStats {
                        mean: mean.to_vec(),
                        var: unbiased.to_vec(),
                    });
                    (mean, var)
                }
                Mode::Infer => {
                    let s = &params.running_stats()[l];
                    (Array1::from(s.mean.clone()), Array1::from(s.var.clone()))
                }
            };
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let zhat = (&z - &mean) * &inv_std;
            let y = &zhat * &params.vector(seg.scale) + &shift;
            (y, Some(zhat), Some(inv_std))
        } else {
            (&z + &shift, None, None)
        };
        let a = y.mapv(elu);
        caches.push(LayerCache {
            input: std::mem::replace(&mut h, a),
            pre_activation: y,
            normalized,
            inv_std,
        });
    }

    let wp = params.matrix(layout.policy_w);
    let wv = params.matrix(layout.value_w);
    let logits = h.dot(&wp) + &params.vector(layout.policy_b);
    let u = h.dot(&wv).column(0).to_owned() + params.theta[layout.value_b.offset];

    let mut dlogits = Array2::<f64>::zeros((b, net.action_dim));
    let mut du = Array1::<f64>::zeros(b);
    let mut breakdown = LossBreakdown::default();

    for (i, s) in batch.iter().enumerate() {
        let row = logits.row(i);
        let probs = masked_softmax(row.as_slice().expect("contiguous"), &s.mask)?;
        let mut ce = 0.0;
        let mut entropy = 0.0;
        let mut target_mass = 0.0;
        for k in 0..net.action_dim {
            if !s.mask[k] {
                continue;
            }
            let p = probs[k];
            let logp = p.ln();
            ce -= s.policy[k] * logp;
            if p > 0.0 {
                entropy -= p * logp;
            }
            target_mass += s.policy[k];
        }
        let v = u[i].tanh();
        let err = v - s.value;
        breakdown.cross_entropy += ce / bf;
        breakdown.entropy += entropy / bf;
        breakdown.value_mse += err * err / bf;

        let mut drow = dlogits.row_mut(i);
        for k in 0..net.action_dim {
            if !s.mask[k] {
                continue;
            }
            let p = probs[k];
            let d_ce = p * target_mass - s.policy[k];
            let d_ent = if p > 0.0 {
                cfg.beta * p * (p.ln() + entropy)
            } else {
                0.0
            };
            drow[k] = (d_ce + d_ent) / bf;
        }
        du[i] = 2.0 * err * (1.0 - v * v) / bf;
    }
    breakdown.total = breakdown.cross_entropy + breakdown.value_mse - cfg.beta * breakdown.entropy;

    let mut grad = vec![0.0; params.num_params()];
    let mut put = |seg: super::Segment, values: ArrayView2<f64>| {
        let dst = &mut grad[seg.range()];
        for (d, v) in dst.iter_mut().zip(values.iter()) {
            *d = *v;
        }
    };

    let du_col = du.view().insert_axis(Axis(1));
    put(layout.policy_w, h.t().dot(&dlogits).view());
    put(layout.policy_b, dlogits.sum_axis(Axis(0)).insert_axis(Axis(0)).view());
    put(layout.value_w, h.t().dot(&du_col).view());
    put(layout.value_b, Array2::from_elem((1, 1), du.sum()).view());

    let mut da = dlogits.dot(&wp.t()) + du_col.dot(&wv.t());
    for (l, seg) in layout.hidden.iter().enumerate().rev() {
        let cache = &caches[l];
        let dy = &da * &cache.pre_activation.mapv(elu_grad);
        let dz = if net.batch_norm {
            let zhat = cache.normalized.as_ref().expect("bn cache");
            let inv_std = cache.inv_std.as_ref().expect("bn cache");
            put(seg.scale, (&dy * zhat).sum_axis(Axis(0)).insert_axis(Axis(0)).view());
            put(seg.shift, dy.sum_axis(Axis(0)).insert_axis(Axis(0)).view());
            let dzhat = &dy * &params.vector(seg.scale);
            match mode {
                Mode::Train => {
                    let sum = dzhat.sum_axis(Axis(0));
                    let sum_x = (&dzhat * zhat).sum_axis(Axis(0));
                    let inner = &dzhat * bf - &sum - &(zhat * &sum_x);
                    inner * &(inv_std / bf)
                }
                Mode::Infer => dzhat * inv_std,
            }
        } else {
            put(seg.shift, dy.sum_axis(Axis(0)).insert_axis(Axis(0)).view());
            dy
        };
        put(seg.weight, cache.input.t().dot(&dz).view());
        if l > 0 {
            da = dz.dot(&params.matrix(seg.weight).t());
        }
    }

    Ok(Gradient {
        loss: breakdown,
        theta: grad,
        batch_stats,
    })
}
