//! Mini-batch SGD training of a classifier with gradient telemetry.

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::network::loss::{argmax_rows, softmax_cross_entropy};
use crate::network::{init_network, GradientMode, Mode, Network, NetworkConfig, SgdMomentum};
use crate::rng::SeedStream;
use crate::{Error, Result};

/// A hidden-layer gradient below this Frobenius norm counts as vanished.
pub const VANISHED_THRESHOLD: f64 = 1e-12;

const EVAL_CHUNK: usize = 1000;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub network: NetworkConfig,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(network: NetworkConfig, epochs: usize, seed: u64) -> Self {
        Self {
            network,
            epochs,
            lr: 1e-4,
            momentum: 0.5,
            batch_size: 64,
            seed,
        }
    }
}

/// One logged measurement: per update, or an epoch summary (accuracies set).
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub update: usize,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub loss: Option<f64>,
    /// `max_l |dE/dV^(l)|_F / min_l |dE/dV^(l)|_F`.
    pub grad_ratio: Option<f64>,
    pub vanished: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    /// Why training stopped early, e.g. a non-finite forward pass.
    pub aborted: Option<String>,
    pub vanished_updates: usize,
}

impl TrainingLog {
    /// Epoch summaries, starting with the untrained network at epoch 0.
    pub fn epochs(&self) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(|r| r.train_acc.is_some())
    }

    pub fn best_train_acc(&self) -> f64 {
        self.epochs()
            .filter_map(|r| r.train_acc)
            .fold(0.0, f64::max)
    }

    pub fn max_train_acc_after_start(&self) -> f64 {
        self.epochs()
            .filter(|r| r.epoch > 0)
            .filter_map(|r| r.train_acc)
            .fold(0.0, f64::max)
    }

    pub fn final_row(&self) -> Option<&LogRow> {
        self.epochs().last()
    }
}

/// Accuracy of `net` in evaluation mode.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let idx: Vec<usize> = (start..end).collect();
        let (x, y) = data.batch(&idx);
        let out = net.forward_norms(&x, Mode::Eval)?.output;
        correct += argmax_rows(&out)
            .iter()
            .zip(&y)
            .filter(|(p, t)| p == t)
            .count();
        start = end;
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Train with softmax cross-entropy. Non-finite forward passes or gradients
/// end the run and are recorded in [`TrainingLog::aborted`].
pub fn train_classifier(
    cfg: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<(Network, TrainingLog)> {
    let seeds = SeedStream::new(cfg.seed);
    let net = init_network(&cfg.network, &mut seeds.derive("weights", 0))?;
    train_network(net, cfg, train, test)
}

/// [`train_classifier`] starting from an existing network.
pub fn train_network(
    mut net: Network,
    cfg: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<(Network, TrainingLog)> {
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let out_dim = net.config().output_width();
    if train.classes > out_dim || test.classes > out_dim {
        return Err(Error::DimensionMismatch {
            what: "output classes",
            expected: train.classes,
            got: out_dim,
        });
    }
    let seeds = SeedStream::new(cfg.seed);
    let mut opt = SgdMomentum::new(cfg.lr, cfg.momentum)?;
    let mut log = TrainingLog {
        rows: Vec::new(),
        aborted: None,
        vanished_updates: 0,
    };
    let summary = |net: &Network, epoch, update| -> Result<LogRow> {
        Ok(LogRow {
            epoch,
            update,
            train_acc: Some(accuracy(net, train)?),
            test_acc: Some(accuracy(net, test)?),
            loss: None,
            grad_ratio: None,
            vanished: false,
        })
    };
    match summary(&net, 0, 0) {
        Ok(row) => log.rows.push(row),
        Err(e @ Error::Overflow { .. }) => {
            log.aborted = Some(format!("evaluation before training: {e}"));
            return Ok((net, log));
        }
        Err(e) => return Err(e),
    }
    let mut update = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut seeds.derive("shuffle", epoch as u64));
        for idx in order.chunks(cfg.batch_size) {
            let (x, y) = train.batch(idx);
            match step(&mut net, &mut opt, &x, &y) {
                Ok((loss, grad_ratio, max_norm)) => {
                    update += 1;
                    let vanished = max_norm < VANISHED_THRESHOLD;
                    log.vanished_updates += usize::from(vanished);
                    log.rows.push(LogRow {
                        epoch,
                        update,
                        train_acc: None,
                        test_acc: None,
                        loss: Some(loss),
                        grad_ratio: Some(grad_ratio),
                        vanished,
                    });
                }
                Err(e @ (Error::Overflow { .. } | Error::NonFiniteGradient { .. })) => {
                    log.aborted = Some(format!("update {}: {e}", update + 1));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        match summary(&net, epoch, update) {
            Ok(row) => log.rows.push(row),
            Err(e @ Error::Overflow { .. }) => {
                log.aborted = Some(format!("evaluation after epoch {epoch}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((net, log))
}

/// One SGD update; returns `(loss, gradient ratio, max layer gradient)`.
fn step(
    net: &mut Network,
    opt: &mut SgdMomentum,
    x: &Array2<f64>,
    y: &[usize],
) -> Result<(f64, f64, f64)> {
    let trace = net.forward(x, Mode::Train)?;
    let (loss, g) = softmax_cross_entropy(&trace.output, y)?;
    let back = net.backward(&trace, &g, GradientMode::Full)?;
    let grads = back.gradients()?;
    let norms: Vec<f64> = grads.layers.iter().map(crate::network::frobenius).collect();
    let ratio = super::synthetic::ratio(norms.iter().copied());
    let max = norms.iter().copied().fold(0.0, f64::max);
    opt.step(net, &grads)?;
    net.update_running_stats(&trace);
    Ok((loss, ratio, max))
}
