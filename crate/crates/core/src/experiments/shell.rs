//! Empirical thin-shell concentration.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::synthetic::ArmConfig;
use crate::network::Mode;
use crate::ortho::sample_sphere;
use crate::rng::SeedStream;
use crate::{Error, Result};

const CHUNK: usize = 100;

/// Where the vectors come from.
#[derive(Debug, Clone)]
pub enum ShellSource {
    Gaussian,
    Sphere,
    /// Outputs of one fixed untrained network of depth `arm.depth` fed
    /// Gaussian inputs; `arm.width` is overridden by the requested `d`.
    Layer(ArmConfig),
}

impl ShellSource {
    pub fn label(&self) -> String {
        match self {
            ShellSource::Gaussian => "gaussian".into(),
            ShellSource::Sphere => "sphere".into(),
            ShellSource::Layer(arm) => format!("{}-layer{}", arm.label(), arm.depth),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceTable {
    pub source: String,
    pub dim: usize,
    pub trials: usize,
    pub epsilons: Vec<f64>,
    /// `P{ | |x|^2/d - 1 | >= eps }` estimated per epsilon.
    pub exceedance: Vec<f64>,
    /// `|x|^2 / d` per trial.
    pub values: Vec<f64>,
}

/// Estimate the exceedance probability of `| |x|^2/d - 1 |` per epsilon.
pub fn verify_thin_shell(
    source: &ShellSource,
    d: usize,
    epsilons: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ExceedanceTable> {
    if trials < 100 {
        return Err(Error::invalid(format!(
            "need at least 100 trials, got {trials}"
        )));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let seeds = SeedStream::new(seed);
    let inv_d = 1.0 / d as f64;
    let values: Vec<f64> = match source {
        ShellSource::Gaussian => (0..trials)
            .map(|t| {
                let mut rng = seeds.derive("shell", t as u64);
                (0..d)
                    .map(|_| rng.sample::<f64, _>(StandardNormal).powi(2))
                    .sum::<f64>()
                    * inv_d
            })
            .collect(),
        ShellSource::Sphere => (0..trials)
            .map(|t| {
                let x = sample_sphere(d, &mut seeds.derive("shell", t as u64))?;
                Ok(x.iter().map(|v| v * v).sum::<f64>() * inv_d)
            })
            .collect::<Result<_>>()?,
        ShellSource::Layer(arm) => {
            let arm = ArmConfig {
                width: d,
                ..arm.clone()
            };
            let net = arm.build(&seeds)?;
            let mut out = Vec::with_capacity(trials);
            let mut start = 0;
            while start < trials {
                let end = (start + CHUNK).min(trials);
                let mut x = Array2::zeros((end - start, d));
                for (mut row, t) in x.rows_mut().into_iter().zip(start..end) {
                    let mut rng = seeds.derive("shell", t as u64);
                    row.mapv_inplace(|_| rng.sample(StandardNormal));
                }
                let trace = net.forward_norms(&x, Mode::Train)?;
                out.extend_from_slice(trace.norms.last().expect("depth >= 1"));
                start = end;
            }
            out
        }
    };
    Ok(ExceedanceTable {
        source: source.label(),
        dim: d,
        trials,
        epsilons: epsilons.to_vec(),
        exceedance: super::synthetic::exceedance(&values, epsilons),
        values,
    })
}

/// Upper bound `2 exp(-d delta^2)` on `P{ | |z|/sqrt(d) - 1 | > delta }` for
/// standard Gaussian `z`.
pub fn gaussian_radius_bound(d: usize, delta: f64) -> f64 {
    (2.0 * (-(d as f64) * delta * delta).exp()).min(1.0)
}

/// Radius deviation implied by a squared-norm deviation: `| r^2 - 1 | >= eps`
/// forces `| r - 1 | >= sqrt(1 + eps) - 1`.
pub fn radius_delta(eps: f64) -> f64 {
    (1.0 + eps).sqrt() - 1.0
}

/// Bound on `P{ | |z|^2/d - 1 | >= eps }` via [`radius_delta`].
pub fn gaussian_shell_bound(d: usize, eps: f64) -> f64 {
    gaussian_radius_bound(d, radius_delta(eps))
}

/// Fraction of squared-norm ratios whose radius deviates from 1 by at
/// least `delta`.
pub fn radius_exceedance(values: &[f64], delta: f64) -> f64 {
    values
        .iter()
        .filter(|v| (v.sqrt() - 1.0).abs() >= delta)
        .count() as f64
        / values.len() as f64
}
