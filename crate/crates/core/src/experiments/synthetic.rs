//! Untrained-network experiments: norm concentration, derivative
//! histograms and gradient-norm ratios across widths.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::par_map;
use crate::activations::Activation;
use crate::gpn::{gpn_constants, RootSelection};
use crate::network::{init_network, GradientMode, Mode, Network, NetworkConfig, Storage};
use crate::ortho::sample_sphere;
use crate::quadrature::default_rule;
use crate::rng::SeedStream;
use crate::stats::mean_std;
use crate::{Error, Result};

/// Samples propagated together.
const CHUNK: usize = 100;

pub const DEFAULT_EPSILONS: [f64; 4] = [0.05, 0.1, 0.2, 0.5];
pub const DEFAULT_HIST_RANGE: (f64, f64) = (-0.5, 2.5);
pub const DEFAULT_HIST_BINS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    /// Standard Gaussian vectors.
    Gaussian,
    /// Uniform on the sphere of radius `sqrt(d)`.
    Sphere,
}

/// A Haar-weight network with the activation either raw or normalized.
#[derive(Debug, Clone)]
pub struct ArmConfig {
    pub activation: Activation,
    pub use_gpn: bool,
    pub width: usize,
    pub depth: usize,
}

impl ArmConfig {
    pub fn new(activation: Activation, use_gpn: bool, width: usize, depth: usize) -> Self {
        Self {
            activation,
            use_gpn,
            width,
            depth,
        }
    }

    pub fn label(&self) -> String {
        if self.use_gpn {
            format!("{}-gpn", self.activation.name())
        } else {
            self.activation.name().to_string()
        }
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        let gpn = if self.use_gpn {
            Some(gpn_constants(
                &self.activation,
                &default_rule(),
                RootSelection::MatchTable,
            )?)
        } else {
            None
        };
        Ok(
            NetworkConfig::new(self.width, self.depth, self.activation.clone())
                .with_gpn(gpn)
                .with_storage(Storage::Factored),
        )
    }

    /// Weights depend only on `(seeds, width, depth)`, so arms that differ
    /// only in activation share them.
    pub fn build(&self, seeds: &SeedStream) -> Result<Network> {
        init_network(&self.network_config()?, &mut seeds.derive("weights", 0))
    }
}

fn input_sample(seeds: &SeedStream, kind: InputKind, d: usize, s: usize) -> Result<Vec<f64>> {
    let mut rng = seeds.derive("input", s as u64);
    match kind {
        InputKind::Gaussian => Ok((0..d).map(|_| rng.sample(StandardNormal)).collect()),
        InputKind::Sphere => sample_sphere(d, &mut rng),
    }
}

fn gaussian_rows(
    seeds: &SeedStream,
    tag: &str,
    range: std::ops::Range<usize>,
    d: usize,
) -> Array2<f64> {
    let n = range.len();
    let mut out = Array2::zeros((n, d));
    for (mut row, s) in out.axis_iter_mut(Axis(0)).zip(range) {
        let mut rng = seeds.derive(tag, s as u64);
        row.mapv_inplace(|_| rng.sample(StandardNormal));
    }
    out
}

fn input_rows(
    seeds: &SeedStream,
    kind: InputKind,
    range: std::ops::Range<usize>,
    d: usize,
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((range.len(), d));
    for (mut row, s) in out.axis_iter_mut(Axis(0)).zip(range) {
        row.assign(&ndarray::Array1::from(input_sample(seeds, kind, d, s)?));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub arm: ArmConfig,
    pub samples: usize,
    pub seed: u64,
    pub input: InputKind,
    /// Also inject a Gaussian top gradient and record gradient norms.
    pub gradients: bool,
    /// Propagate each sample alone and take `|G|_F` from the dense gradient
    /// rather than from `|x| |y|`.
    pub batch_one: bool,
    pub epsilons: Vec<f64>,
}

impl SyntheticConfig {
    pub fn new(arm: ArmConfig, samples: usize, seed: u64) -> Self {
        Self {
            arm,
            samples,
            seed,
            input: InputKind::Gaussian,
            gradients: true,
            batch_one: false,
            epsilons: DEFAULT_EPSILONS.to_vec(),
        }
    }
}

/// Statistics for `x^(l)` and `G^(l)`, `l = 1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormStats {
    pub layer: usize,
    /// Mean and population std of `|x_s^(l)|^2 / d` over samples.
    pub norm_mean: f64,
    pub norm_std: f64,
    /// Same for the single-sample `|G^(l)|_F`, when gradients were recorded.
    pub grad_mean: Option<f64>,
    pub grad_std: Option<f64>,
    /// Fraction of samples with `| |x|^2/d - 1 | >= eps`, per epsilon.
    pub exceedance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub label: String,
    pub width: usize,
    pub depth: usize,
    pub samples: usize,
    pub epsilons: Vec<f64>,
    pub layers: Vec<LayerNormStats>,
    /// `|x^(L+1)|^2 / d` mean and std.
    pub output_mean: f64,
    pub output_std: f64,
    /// First layer whose activations became non-finite; `layers` is empty then.
    pub overflow_layer: Option<usize>,
    /// Per-sample `max_l |G^(l)|_F / min_l |G^(l)|_F`.
    pub grad_ratios: Vec<f64>,
}

/// Propagate Gaussian (or sphere) inputs through an untrained Haar network
/// and summarize per-layer norms.
pub fn run_synthetic_norms(cfg: &SyntheticConfig) -> Result<ConcentrationReport> {
    let seeds = SeedStream::new(cfg.seed);
    let net = cfg.arm.build(&seeds)?;
    synthetic_norms_on(&net, cfg)
}

/// [`run_synthetic_norms`] on an already built network.
pub fn synthetic_norms_on(net: &Network, cfg: &SyntheticConfig) -> Result<ConcentrationReport> {
    if cfg.samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let seeds = SeedStream::new(cfg.seed);
    let d = net.width();
    let depth = net.depth();
    // norms[l][s] for l = 0..=L; grads[l][s] for l = 0..L
    let mut norms: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.samples); depth + 1];
    let mut grads: Vec<Vec<f64>> = vec![Vec::new(); depth];
    let chunk = if cfg.batch_one { 1 } else { CHUNK };
    let mut start = 0;
    let empty = |overflow| ConcentrationReport {
        label: cfg.arm.label(),
        width: d,
        depth,
        samples: cfg.samples,
        epsilons: cfg.epsilons.clone(),
        layers: Vec::new(),
        output_mean: f64::NAN,
        output_std: f64::NAN,
        overflow_layer: Some(overflow),
        grad_ratios: Vec::new(),
    };
    while start < cfg.samples {
        let end = (start + chunk).min(cfg.samples);
        let x = input_rows(&seeds, cfg.input, start..end, d)?;
        let trace = match if cfg.gradients {
            net.forward(&x, Mode::Train)
        } else {
            net.forward_norms(&x, Mode::Train)
        } {
            Ok(t) => t,
            Err(Error::Overflow { layer }) => return Ok(empty(layer)),
            Err(e) => return Err(e),
        };
        for (acc, n) in norms.iter_mut().zip(&trace.norms) {
            acc.extend_from_slice(n);
        }
        if cfg.gradients {
            let g_top = gaussian_rows(&seeds, "g_top", start..end, d);
            let mode = if cfg.batch_one {
                GradientMode::Full
            } else {
                GradientMode::NormsOnly
            };
            let back = match net.backward(&trace, &g_top, mode) {
                Ok(b) => b,
                Err(Error::NonFiniteGradient { .. }) => return Ok(empty(depth + 1)),
                Err(e) => return Err(e),
            };
            for (l, layer) in back.layers.iter().enumerate() {
                if cfg.batch_one {
                    grads[l].push(layer.grad_fro);
                } else {
                    let xn = &trace.norms[l];
                    grads[l].extend(
                        xn.iter()
                            .zip(&layer.y_norms)
                            .map(|(n, y)| (n * d as f64).sqrt() * y),
                    );
                }
            }
        }
        start = end;
    }
    let layers = (0..depth)
        .map(|l| {
            let (norm_mean, norm_std) = mean_std(&norms[l]);
            let (grad_mean, grad_std) = if cfg.gradients {
                let (m, s) = mean_std(&grads[l]);
                (Some(m), Some(s))
            } else {
                (None, None)
            };
            LayerNormStats {
                layer: l + 1,
                norm_mean,
                norm_std,
                grad_mean,
                grad_std,
                exceedance: exceedance(&norms[l], &cfg.epsilons),
            }
        })
        .collect();
    let (output_mean, output_std) = mean_std(&norms[depth]);
    let grad_ratios = if cfg.gradients {
        (0..cfg.samples)
            .map(|s| ratio((0..depth).map(|l| grads[l][s])))
            .collect()
    } else {
        Vec::new()
    };
    Ok(ConcentrationReport {
        label: cfg.arm.label(),
        width: d,
        depth,
        samples: cfg.samples,
        epsilons: cfg.epsilons.clone(),
        layers,
        output_mean,
        output_std,
        overflow_layer: None,
        grad_ratios,
    })
}

/// Fraction of `values` (squared norms over `d`) at least `eps` from 1.
pub fn exceedance(values: &[f64], epsilons: &[f64]) -> Vec<f64> {
    epsilons
        .iter()
        .map(|&eps| {
            values.iter().filter(|&&v| (v - 1.0).abs() >= eps).count() as f64 / values.len() as f64
        })
        .collect()
}

/// `max / min` of positive values; infinite if the minimum is zero.
pub fn ratio(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Fixed-width histogram; values outside the range are counted separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins < 10 {
            return Err(Error::invalid(format!("need at least 10 bins, got {bins}")));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("bad histogram range [{lo}, {hi}]")));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bins],
            below: 0,
            above: 0,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn add(&mut self, v: f64) {
        if v < self.lo {
            self.below += 1;
        } else if v >= self.hi {
            self.above += 1;
        } else {
            let last = self.bins() - 1;
            let i = ((v - self.lo) / self.bin_width()) as usize;
            self.counts[i.min(last)] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.below + self.above
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.bin_width()
    }

    /// Fraction of all values in bins whose center is within `radius` of `x`.
    pub fn mass_near(&self, x: f64, radius: f64) -> f64 {
        let near: u64 = self
            .counts
            .iter()
            .enumerate()
            .filter(|(i, _)| (self.center(*i) - x).abs() <= radius + 1e-12)
            .map(|(_, c)| c)
            .sum();
        near as f64 / self.total() as f64
    }

    /// Mean and std of the in-range values, at bin-center resolution.
    pub fn binned_mean_std(&self) -> (f64, f64) {
        let n: u64 = self.counts.iter().sum();
        if n == 0 {
            return (f64::NAN, f64::NAN);
        }
        let n = n as f64;
        let mean = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * self.center(i))
            .sum::<f64>()
            / n;
        let var = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * (self.center(i) - mean).powi(2))
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct HistogramConfig {
    pub arm: ArmConfig,
    pub samples: usize,
    pub bins: usize,
    pub range: (f64, f64),
    pub seed: u64,
}

impl HistogramConfig {
    pub fn new(arm: ArmConfig, samples: usize, seed: u64) -> Self {
        Self {
            arm,
            samples,
            bins: DEFAULT_HIST_BINS,
            range: DEFAULT_HIST_RANGE,
            seed,
        }
    }
}

/// Accumulate `phi'(h_i^(l))` over all units, layers and samples, where
/// `phi` is the layer activation (including any normalization).
pub fn run_deriv_histogram(cfg: &HistogramConfig) -> Result<Histogram> {
    let mut hist = Histogram::new(cfg.range.0, cfg.range.1, cfg.bins)?;
    let seeds = SeedStream::new(cfg.seed);
    let net = cfg.arm.build(&seeds)?;
    let d = net.width();
    let act = net.activation();
    let mut start = 0;
    while start < cfg.samples {
        let end = (start + CHUNK).min(cfg.samples);
        let x = input_rows(&seeds, InputKind::Gaussian, start..end, d)?;
        let trace = net.forward(&x, Mode::Train)?;
        for h in &trace.hs {
            for &v in h.iter() {
                hist.add(act.derivative(v));
            }
        }
        start = end;
    }
    Ok(hist)
}

#[derive(Debug, Clone)]
pub struct WidthSweepConfig {
    pub activation: Activation,
    pub use_gpn: bool,
    pub widths: Vec<usize>,
    pub depth: usize,
    pub seeds_per_width: usize,
    pub seed: u64,
    /// Threads used for the `(width, seed)` cells; results do not depend on it.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioCell {
    pub width: usize,
    pub seed_index: usize,
    pub ratio: f64,
    pub overflow_layer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidthSummary {
    pub width: usize,
    pub mean: f64,
    pub std: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub label: String,
    pub depth: usize,
    pub cells: Vec<RatioCell>,
    pub per_width: Vec<WidthSummary>,
}

/// Seed space of one `(width, seed)` cell.
pub fn cell_seeds(master: u64, width: usize, seed_index: usize) -> SeedStream {
    SeedStream::new(master).child(&format!("width-{width}"), seed_index as u64)
}

/// One single-sample synthetic pass per `(width, seed)` cell, reporting
/// `max_l |G^(l)|_F / min_l |G^(l)|_F`.
pub fn run_width_sweep(cfg: &WidthSweepConfig) -> Result<RatioReport> {
    if cfg.widths.is_empty() || cfg.seeds_per_width == 0 {
        return Err(Error::invalid("width sweep needs widths and seeds"));
    }
    let cells: Vec<(usize, usize)> = cfg
        .widths
        .iter()
        .flat_map(|&w| (0..cfg.seeds_per_width).map(move |s| (w, s)))
        .collect();
    let results = par_map(cells, cfg.workers, |(width, s)| -> Result<RatioCell> {
        let arm = ArmConfig::new(cfg.activation.clone(), cfg.use_gpn, width, cfg.depth);
        let seeds = cell_seeds(cfg.seed, width, s);
        let net = arm.build(&seeds)?;
        let x = input_rows(&seeds, InputKind::Gaussian, 0..1, width)?;
        let (ratio, overflow_layer) = match net.forward(&x, Mode::Train) {
            Ok(trace) => {
                let g = gaussian_rows(&seeds, "g_top", 0..1, width);
                match net.backward(&trace, &g, GradientMode::NormsOnly) {
                    Ok(back) => (ratio(back.layers.iter().map(|l| l.grad_fro)), None),
                    Err(Error::NonFiniteGradient { .. }) => (f64::INFINITY, Some(cfg.depth + 1)),
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Overflow { layer }) => (f64::INFINITY, Some(layer)),
            Err(e) => return Err(e),
        };
        Ok(RatioCell {
            width,
            seed_index: s,
            ratio,
            overflow_layer,
        })
    });
    let cells = results.into_iter().collect::<Result<Vec<_>>>()?;
    let per_width = cfg
        .widths
        .iter()
        .map(|&w| {
            let r: Vec<f64> = cells
                .iter()
                .filter(|c| c.width == w)
                .map(|c| c.ratio)
                .collect();
            let (mean, std) = mean_std(&r);
            WidthSummary {
                width: w,
                mean,
                std,
                cells: r.len(),
            }
        })
        .collect();
    Ok(RatioReport {
        label: ArmConfig::new(cfg.activation.clone(), cfg.use_gpn, 0, 0).label(),
        depth: cfg.depth,
        cells,
        per_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm(act: Activation, gpn: bool, d: usize, l: usize) -> ArmConfig {
        ArmConfig::new(act, gpn, d, l)
    }

    #[test]
    fn identity_keeps_every_norm() {
        let cfg = SyntheticConfig::new(arm(Activation::Identity, false, 60, 25), 30, 1);
        let r = run_synthetic_norms(&cfg).unwrap();
        assert_eq!(r.layers.len(), 25);
        let first = r.layers[0].norm_mean;
        for l in &r.layers {
            assert!((l.norm_mean - first).abs() < 1e-8 * first);
        }
        assert!((r.output_mean - first).abs() < 1e-8 * first);
        for ratio in &r.grad_ratios {
            assert!((ratio - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn batch_one_gradients_match_norm_products() {
        let a = arm(Activation::selu(), true, 30, 12);
        let mut cfg = SyntheticConfig::new(a, 12, 3);
        let fast = run_synthetic_norms(&cfg).unwrap();
        cfg.batch_one = true;
        let slow = run_synthetic_norms(&cfg).unwrap();
        for (f, s) in fast.layers.iter().zip(&slow.layers) {
            let (fm, sm) = (f.grad_mean.unwrap(), s.grad_mean.unwrap());
            assert!((fm - sm).abs() <= 1e-10 * sm, "{fm} vs {sm}");
            assert!((f.norm_mean - s.norm_mean).abs() <= 1e-12 * s.norm_mean);
        }
        assert_eq!(fast.grad_ratios.len(), 12);
    }

    #[test]
    fn reports_are_reproducible() {
        let cfg = SyntheticConfig::new(arm(Activation::Tanh, true, 40, 10), 150, 9);
        assert_eq!(
            run_synthetic_norms(&cfg).unwrap(),
            run_synthetic_norms(&cfg).unwrap()
        );
    }

    #[test]
    fn raw_relu_collapses() {
        let mut cfg = SyntheticConfig::new(arm(Activation::Relu, false, 100, 100), 20, 2);
        cfg.gradients = false;
        let r = run_synthetic_norms(&cfg).unwrap();
        assert!(r.output_mean < 1e-20, "{}", r.output_mean);
    }

    #[test]
    fn exceedance_is_a_frequency() {
        let e = exceedance(&[1.0, 1.3, 0.95, 0.5], &[0.1, 0.4]);
        assert_eq!(e, vec![0.5, 0.25]);
    }

    #[test]
    fn ratio_of_values() {
        assert_eq!(ratio([2.0, 8.0, 4.0]), 4.0);
        assert!(ratio([0.0, 1.0]).is_infinite());
    }

    #[test]
    fn histogram_bins() {
        assert!(Histogram::new(0.0, 1.0, 9).is_err());
        let mut h = Histogram::new(-0.5, 2.5, 300).unwrap();
        for v in [1.0, 1.0, 0.999, 3.0, -1.0] {
            h.add(v);
        }
        assert_eq!(h.total(), 5);
        assert_eq!((h.below, h.above), (1, 1));
        assert!((h.mass_near(1.0, 0.1) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn identity_histogram_is_a_spike_at_one() {
        let cfg = HistogramConfig::new(arm(Activation::Identity, false, 20, 5), 10, 1);
        let h = run_deriv_histogram(&cfg).unwrap();
        let i = h.counts.iter().position(|&c| c > 0).unwrap();
        assert_eq!(h.counts[i], h.total());
        assert!((h.center(i) - 1.0).abs() <= h.bin_width());
    }

    #[test]
    fn width_sweep_is_worker_independent() {
        let cfg = WidthSweepConfig {
            activation: Activation::Tanh,
            use_gpn: true,
            widths: vec![20, 40],
            depth: 15,
            seeds_per_width: 3,
            seed: 5,
            workers: 1,
        };
        let a = run_width_sweep(&cfg).unwrap();
        let b = run_width_sweep(&WidthSweepConfig {
            workers: 4,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 6);
        assert!(a.cells.iter().all(|c| c.ratio >= 1.0));
        let id = run_width_sweep(&WidthSweepConfig {
            activation: Activation::Identity,
            use_gpn: false,
            ..cfg
        })
        .unwrap();
        assert!(id.cells.iter().all(|c| (c.ratio - 1.0).abs() < 1e-8));
    }
}
