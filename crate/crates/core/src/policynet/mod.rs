//! Dual-head policy/value network over encoded boards.
//!
//! A stack of fully connected layers, each followed by 1-D batch
//! normalization and ELU, feeds a policy head (masked softmax over the flat
//! action space) and a value head squashed to (-1, 1). All trainable
//! parameters live in one flat vector so the optimizer, gradient clipping and
//! finite-difference checks treat them uniformly.

mod checkpoint;
mod grad;
mod optim;

use ndarray::{ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::board::ACTION_DIM;
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use grad::{loss, Batch, Gradient, LossBreakdown, Mode, Sample};
pub use optim::{Optimizer, StepReport};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub action_dim: usize,
    pub batch_norm: bool,
}

impl NetConfig {
    /// Ten layers of 512 units, as deployed at full scale.
    pub fn paper() -> Self {
        Self {
            input_dim: 272,
            hidden_layers: 10,
            hidden_width: 512,
            action_dim: ACTION_DIM,
            batch_norm: true,
        }
    }

    /// Small trunk that trains in minutes on one CPU core.
    pub fn desk() -> Self {
        Self {
            input_dim: 272,
            hidden_layers: 3,
            hidden_width: 128,
            action_dim: ACTION_DIM,
            batch_norm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_layers == 0 || self.hidden_width == 0 || self.action_dim == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        ParamLayout::new(self).total
    }
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::paper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Gradient norms are clipped to at most `1 + epsilon`.
    pub epsilon: f64,
    /// Entropy bonus weight.
    pub beta: f64,
    pub batch_size: usize,
    pub accumulation_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epsilon: 0.1,
            beta: 0.01,
            batch_size: 64,
            accumulation_steps: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon must be in (0,1), got {}", self.epsilon)));
        }
        if self.beta < 0.0 {
            return Err(Error::Config("beta must be nonnegative".into()));
        }
        if self.batch_size == 0 || self.accumulation_steps == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config(
                "batch size, accumulation steps and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Segment {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Segment {
    fn len(&self) -> usize {
        self.rows * self.cols
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HiddenSegments {
    weight: Segment,
    // Linear bias when batch norm is off; BN shift otherwise.
    shift: Segment,
    // BN scale; zero-length without batch norm.
    scale: Segment,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ParamLayout {
    hidden: Vec<HiddenSegments>,
    policy_w: Segment,
    policy_b: Segment,
    value_w: Segment,
    value_b: Segment,
    total: usize,
}

impl ParamLayout {
    fn new(cfg: &NetConfig) -> Self {
        let mut offset = 0;
        let mut seg = |rows: usize, cols: usize| {
            let s = Segment { offset, rows, cols };
            offset += rows * cols;
            s
        };
        let mut hidden = Vec::with_capacity(cfg.hidden_layers);
        for i in 0..cfg.hidden_layers {
            let fan_in = if i == 0 { cfg.input_dim } else { cfg.hidden_width };
            let weight = seg(fan_in, cfg.hidden_width);
            let shift = seg(1, cfg.hidden_width);
            let scale = seg(1, if cfg.batch_norm { cfg.hidden_width } else { 0 });
            hidden.push(HiddenSegments { weight, shift, scale });
        }
        let policy_w = seg(cfg.hidden_width, cfg.action_dim);
        let policy_b = seg(1, cfg.action_dim);
        let value_w = seg(cfg.hidden_width, 1);
        let value_b = seg(1, 1);
        ParamLayout {
            hidden,
            policy_w,
            policy_b,
            value_w,
            value_b,
            total: offset,
        }
    }
}

/// Batch-norm running statistics of one hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    config: NetConfig,
    layout: ParamLayout,
    theta: Vec<f64>,
    running: Vec<NormStats>,
}

/// Policy and value for one board.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub policy: Vec<f64>,
    pub value: f64,
}

/// `out = x W` for a row-major `W` with `cols` columns.
fn vec_mat(x: &[f64], w: &[f64], cols: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(cols, 0.0);
    let mut xs = x.chunks_exact(4);
    let mut ws = w.chunks_exact(4 * cols);
    for (xq, wq) in (&mut xs).zip(&mut ws) {
        let (w0, rest) = wq.split_at(cols);
        let (w1, rest) = rest.split_at(cols);
        let (w2, w3) = rest.split_at(cols);
        for j in 0..cols {
            out[j] += xq[0] * w0[j] + xq[1] * w1[j] + xq[2] * w2[j] + xq[3] * w3[j];
        }
    }
    for (xi, row) in xs.remainder().iter().zip(ws.remainder().chunks_exact(cols)) {
        for (o, wv) in out.iter_mut().zip(row) {
            *o += xi * wv;
        }
    }
}

#[inline]
pub(crate) fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Softmax over `mask`-true entries; masked entries get exactly zero.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NoLegalAction);
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    Ok(out)
}

impl NetParams {
    /// Fresh parameters: LeCun-normal weights, small heads so the initial
    /// policy is close to uniform over legal actions.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut theta = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |seg: Segment, std: f64, theta: &mut [f64]| {
            let normal = Normal::new(0.0, std).expect("positive std");
            for v in &mut theta[seg.range()] {
                *v = normal.sample(&mut rng);
            }
        };
        for h in &layout.hidden {
            fill(h.weight, (1.0 / h.weight.rows as f64).sqrt(), &mut theta);
            for v in &mut theta[h.scale.range()] {
                *v = 1.0;
            }
        }
        fill(layout.policy_w, 0.01, &mut theta);
        fill(layout.value_w, 0.01, &mut theta);
        let running = (0..if config.batch_norm { config.hidden_layers } else { 0 })
            .map(|_| NormStats {
                mean: vec![0.0; config.hidden_width],
                var: vec![1.0; config.hidden_width],
            })
            .collect();
        Ok(Self {
            config,
            layout,
            theta,
            running,
        })
    }

    pub(crate) fn from_parts(config: NetConfig, theta: Vec<f64>, running: Vec<NormStats>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if theta.len() != layout.total {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                layout.total,
                theta.len()
            )));
        }
        let want_layers = if config.batch_norm { config.hidden_layers } else { 0 };
        if running.len() != want_layers
            || running
                .iter()
                .any(|s| s.mean.len() != config.hidden_width || s.var.len() != config.hidden_width)
        {
            return Err(Error::Dimension(
                "normalization statistics do not match the config".into(),
            ));
        }
        Ok(Self {
            config,
            layout,
            theta,
            running,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn running_stats(&self) -> &[NormStats] {
        &self.running
    }

    pub(crate) fn running_stats_mut(&mut self) -> &mut [NormStats] {
        &mut self.running
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    fn matrix(&self, seg: Segment) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((seg.rows, seg.cols), &self.theta[seg.range()]).expect("segment shape")
    }

    fn vector(&self, seg: Segment) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.theta[seg.range()])
    }

    /// Inference-mode pass (running normalization statistics).
    pub fn forward(&self, features: &[f64], mask: &[bool]) -> Result<Prediction> {
        if features.len() != self.config.input_dim {
            return Err(Error::Dimension(format!(
                "feature length {} != input_dim {}",
                features.len(),
                self.config.input_dim
            )));
        }
        if mask.len() != self.config.action_dim {
            return Err(Error::Dimension(format!(
                "mask length {} != action_dim {}",
                mask.len(),
                self.config.action_dim
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::NoLegalAction);
        }
        let mut h = features.to_vec();
        let mut z = Vec::with_capacity(self.config.hidden_width);
        for (i, seg) in self.layout.hidden.iter().enumerate() {
            vec_mat(&h, &self.theta[seg.weight.range()], seg.weight.cols, &mut z);
            let shift = &self.theta[seg.shift.range()];
            if self.config.batch_norm {
                let scale = &self.theta[seg.scale.range()];
                let stats = &self.running[i];
                for (k, zk) in z.iter_mut().enumerate() {
                    *zk = scale[k] * (*zk - stats.mean[k]) / (stats.var[k] + BN_EPS).sqrt() + shift[k];
                }
            } else {
                for (zk, b) in z.iter_mut().zip(shift) {
                    *zk += b;
                }
            }
            z.iter_mut().for_each(|v| *v = elu(*v));
            std::mem::swap(&mut h, &mut z);
        }
        let mut logits = Vec::with_capacity(self.config.action_dim);
        vec_mat(
            &h,
            &self.theta[self.layout.policy_w.range()],
            self.layout.policy_w.cols,
            &mut logits,
        );
        for (l, b) in logits.iter_mut().zip(&self.theta[self.layout.policy_b.range()]) {
            *l += b;
        }
        let value_w = &self.theta[self.layout.value_w.range()];
        let u = h.iter().zip(value_w).map(|(a, b)| a * b).sum::<f64>() + self.theta[self.layout.value_b.offset];
        let policy = masked_softmax(&logits, mask)?;
        Ok(Prediction {
            policy,
            value: u.tanh(),
        })
    }
}
