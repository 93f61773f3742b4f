//! Per-feature batch normalization applied to pre-activations.

use ndarray::{Array1, Array2, Axis};

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the old running statistic in each update.
pub const BN_RUNNING_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

/// What the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    /// `(h - mean) / sqrt(var + eps)`
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
    /// Statistics came from the batch (training) rather than running averages.
    pub batch_stats: bool,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }

    /// Normalize with mini-batch statistics (`train`) or running ones.
    pub fn forward(&self, h: &Array2<f64>, train: bool) -> (Array2<f64>, BnCache) {
        let (mean, var) = if train {
            let mean = h.mean_axis(Axis(0)).expect("non-empty batch");
            let var = h.var_axis(Axis(0), 0.0);
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
        let normalized = (h - &mean) * &inv_std;
        let out = &normalized * &self.gamma + &self.beta;
        (
            out,
            BnCache {
                normalized,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                batch_stats: train,
            },
        )
    }

    /// Returns `(dE/dh, dE/dgamma, dE/dbeta)`.
    pub fn backward(
        &self,
        g_out: &Array2<f64>,
        cache: &BnCache,
    ) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let g_gamma = (g_out * &cache.normalized).sum_axis(Axis(0));
        let g_beta = g_out.sum_axis(Axis(0));
        let g_norm = g_out * &self.gamma;
        let g_h = if cache.batch_stats {
            let n = g_out.nrows() as f64;
            let sum_g = g_norm.sum_axis(Axis(0));
            let sum_gx = (&g_norm * &cache.normalized).sum_axis(Axis(0));
            let mut g = &g_norm * n - &sum_g - &(&cache.normalized * &sum_gx);
            g *= &(&cache.inv_std / n);
            g
        } else {
            g_norm * &cache.inv_std
        };
        (g_h, g_gamma, g_beta)
    }

    /// Fold a training batch's statistics into the running averages.
    pub fn update_running(&mut self, cache: &BnCache) {
        let m = BN_RUNNING_MOMENTUM;
        self.running_mean = &self.running_mean * m + &cache.batch_mean * (1.0 - m);
        self.running_var = &self.running_var * m + &cache.batch_var * (1.0 - m);
    }
}
