use log::warn;

use super::{Gradient, NetParams, TrainConfig, BN_MOMENTUM};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// What one accumulate-and-step call did.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub used: usize,
    pub discarded: usize,
    pub norm_before_clip: f64,
    pub norm_after_clip: f64,
    pub stepped: bool,
}

/// Adam with gradient accumulation and global-norm clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    learning_rate: f64,
    max_norm: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(params: &NetParams, cfg: &TrainConfig) -> Self {
        Self {
            learning_rate: cfg.learning_rate,
            max_norm: 1.0 + cfg.epsilon,
            m: vec![0.0; params.num_params()],
            v: vec![0.0; params.num_params()],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    /// Averages the finite gradients, clips the average to norm `1 + epsilon`,
    /// and applies one Adam step. Batch-norm running statistics are moved
    /// toward the statistics of every batch that was used.
    pub fn accumulate_and_step(&mut self, params: &mut NetParams, batches: &[Gradient]) -> StepReport {
        let n = params.num_params();
        let mut avg = vec![0.0; n];
        let mut report = StepReport::default();
        let mut used = Vec::with_capacity(batches.len());
        for (i, g) in batches.iter().enumerate() {
            if g.theta.len() != n {
                warn!(
                    "gradient batch {i} has {} entries, expected {n}; discarded",
                    g.theta.len()
                );
                report.discarded += 1;
                continue;
            }
            if !g.is_finite() {
                warn!("gradient batch {i} is not finite; discarded");
                report.discarded += 1;
                continue;
            }
            for (a, x) in avg.iter_mut().zip(&g.theta) {
                *a += x;
            }
            used.push(g);
        }
        report.used = used.len();
        if used.is_empty() {
            return report;
        }
        let inv = 1.0 / used.len() as f64;
        avg.iter_mut().for_each(|a| *a *= inv);

        let norm = avg.iter().map(|g| g * g).sum::<f64>().sqrt();
        report.norm_before_clip = norm;
        if norm > self.max_norm {
            let scale = self.max_norm / norm;
            avg.iter_mut().for_each(|g| *g *= scale);
        }
        report.norm_after_clip = norm.min(self.max_norm);

        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let theta = params.theta_mut();
        for i in 0..n {
            let g = avg[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }

        for g in &used {
            for (running, batch) in params.running_stats_mut().iter_mut().zip(&g.batch_stats) {
                for (r, b) in running.mean.iter_mut().zip(&batch.mean) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
                }
                for (r, b) in running.var.iter_mut().zip(&batch.var) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
                }
            }
        }
        report.stepped = true;
        report
    }

    pub(crate) fn state(&self) -> (&[f64], &[f64], u64) {
        (&self.m, &self.v, self.t)
    }

    pub(crate) fn restore(params: &NetParams, cfg: &TrainConfig, m: Vec<f64>, v: Vec<f64>, t: u64) -> Option<Self> {
        if m.len() != params.num_params() || v.len() != params.num_params() {
            return None;
        }
        Some(Self {
            learning_rate: cfg.learning_rate,
            max_norm: 1.0 + cfg.epsilon,
            m,
            v,
            t,
        })
    }
}
