use std::path::PathBuf;

use bsnn::data::{cifar10_paths, load_cifar10, load_mnist, mnist_paths, Dataset};
use bsnn::experiments::shell::{gaussian_shell_bound, verify_thin_shell, ShellSource};
use bsnn::experiments::synthetic::{
    run_deriv_histogram, run_synthetic_norms, run_width_sweep, ArmConfig, HistogramConfig,
    InputKind, SyntheticConfig, WidthSweepConfig, DEFAULT_EPSILONS, DEFAULT_HIST_BINS,
    DEFAULT_HIST_RANGE,
};
use bsnn::experiments::training::{train_network, TrainConfig};
use bsnn::gpn::{gpn_constants, poincare_gap, verify_gpn, RootSelection};
use bsnn::network::checkpoint::{load_checkpoint, save_checkpoint};
use bsnn::network::init_network;
use bsnn::quadrature::{gauss_hermite_rule, DEFAULT_ORDER};
use bsnn::{Activation, Error, NetworkConfig, SeedStream, WeightMode};
use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::output::{Csv, Field};

pub const DEFAULT_SEED: u64 = 0;

/// Desk-scale training defaults.
pub const DESK_WIDTH: usize = 128;
pub const DESK_DEPTH: usize = 32;
pub const DESK_EPOCHS: usize = 3;
pub const DESK_LR: f64 = 0.005;

pub const FULL_WIDTH: usize = 500;
pub const FULL_DEPTH: usize = 200;
pub const FULL_LR: f64 = 1e-4;
pub const FULL_MOMENTUM: f64 = 0.5;
pub const FULL_BATCH: usize = 64;

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", content = "config", rename_all = "kebab-case")]
pub enum Command {
    /// Normalization constants (a, b) per activation.
    GpnTable(GpnTableArgs),
    /// Per-layer forward norms and weight-gradient norms of untrained networks.
    Synth(SynthArgs),
    /// Histogram of the activation derivative over all units and layers.
    Hist(HistArgs),
    /// Gradient-norm ratio across widths and seeds.
    WidthSweep(SweepArgs),
    /// Train a classifier on MNIST or CIFAR-10.
    Train(TrainArgs),
    /// Exceedance probabilities of the squared norm around d.
    ThinShell(ShellArgs),
}

impl Command {
    pub fn out(&self) -> Option<&PathBuf> {
        match self {
            Command::GpnTable(a) => a.out.as_ref(),
            Command::Synth(a) => Some(&a.out),
            Command::Hist(a) => Some(&a.out),
            Command::WidthSweep(a) => Some(&a.out),
            Command::Train(a) => Some(&a.out),
            Command::ThinShell(a) => Some(&a.out),
        }
    }

    pub fn set_out(&mut self, path: PathBuf) {
        match self {
            Command::GpnTable(a) => a.out = Some(path),
            Command::Synth(a) => a.out = path,
            Command::Hist(a) => a.out = path,
            Command::WidthSweep(a) => a.out = path,
            Command::Train(a) => a.out = path,
            Command::ThinShell(a) => a.out = path,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::GpnTable(_) => None,
            Command::Synth(a) => a.seed,
            Command::Hist(a) => a.seed,
            Command::WidthSweep(a) => a.seed,
            Command::Train(a) => a.seed,
            Command::ThinShell(a) => a.seed,
        }
    }

    /// Fill every unset option with the value the run will use.
    pub fn materialize(&mut self) -> Result<(), Failure> {
        let seed = |s: &mut Option<u64>| {
            s.get_or_insert(DEFAULT_SEED);
        };
        match self {
            Command::GpnTable(a) => {
                a.activations.get_or_insert_with(|| {
                    Activation::builtins()
                        .iter()
                        .map(|x| x.name().to_string())
                        .collect()
                });
            }
            Command::Synth(a) => seed(&mut a.seed),
            Command::Hist(a) => seed(&mut a.seed),
            Command::WidthSweep(a) => {
                seed(&mut a.seed);
                if a.workers == 0 {
                    a.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
                }
            }
            Command::ThinShell(a) => {
                seed(&mut a.seed);
                a.epsilons.get_or_insert_with(|| DEFAULT_EPSILONS.to_vec());
            }
            Command::Train(a) => {
                seed(&mut a.seed);
                if a.full_paper_scale {
                    a.width = Some(FULL_WIDTH);
                    a.depth = Some(FULL_DEPTH);
                    a.epochs = Some(match a.dataset {
                        DatasetKind::Mnist => 50,
                        DatasetKind::Cifar10 => 100,
                    });
                    a.lr = Some(FULL_LR);
                    a.momentum = Some(FULL_MOMENTUM);
                    a.batch_size = Some(FULL_BATCH);
                } else {
                    a.width.get_or_insert(DESK_WIDTH);
                    a.depth.get_or_insert(DESK_DEPTH);
                    a.epochs.get_or_insert(DESK_EPOCHS);
                    a.lr.get_or_insert(DESK_LR);
                    a.momentum.get_or_insert(FULL_MOMENTUM);
                    a.batch_size.get_or_insert(FULL_BATCH);
                }
            }
        }
        Ok(())
    }

    pub fn run(&self) -> Result<Outcome, Failure> {
        match self {
            Command::GpnTable(a) => gpn_table(a),
            Command::Synth(a) => synth(a),
            Command::Hist(a) => hist(a),
            Command::WidthSweep(a) => width_sweep(a),
            Command::Train(a) => train(a),
            Command::ThinShell(a) => thin_shell(a),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GpnTableArgs {
    /// Comma-separated activation names [default: all six built-ins]
    #[arg(long, value_delimiter = ',', value_parser = parse_activation)]
    pub activations: Option<Vec<String>>,
    /// Gauss-Hermite order
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    pub order: usize,
    /// CSV destination; stdout if omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, value_parser = parse_activation)]
    pub activation: String,
    /// Use the normalized activation
    #[arg(long)]
    pub gpn: bool,
    #[arg(long, default_value_t = 500)]
    pub width: usize,
    #[arg(long, default_value_t = 200)]
    pub depth: usize,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = InputArg::Gaussian)]
    pub input: InputArg,
    /// Propagate samples one at a time and read gradients from the full matrix
    #[arg(long)]
    pub batch_one: bool,
    #[arg(long, env = "BSNN_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct HistArgs {
    #[arg(long, value_parser = parse_activation)]
    pub activation: String,
    #[arg(long)]
    pub gpn: bool,
    #[arg(long, default_value_t = 500)]
    pub width: usize,
    #[arg(long, default_value_t = 200)]
    pub depth: usize,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_HIST_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = DEFAULT_HIST_RANGE.0, allow_negative_numbers = true)]
    pub lo: f64,
    #[arg(long, default_value_t = DEFAULT_HIST_RANGE.1, allow_negative_numbers = true)]
    pub hi: f64,
    #[arg(long, env = "BSNN_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long, value_parser = parse_activation)]
    pub activation: String,
    #[arg(long)]
    pub gpn: bool,
    #[arg(long, value_delimiter = ',', required = true)]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub depth: usize,
    /// Seeds per width
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// Worker threads; 0 uses every available core. Output does not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, env = "BSNN_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetKind,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, value_parser = parse_activation)]
    pub activation: String,
    #[arg(long)]
    pub gpn: bool,
    /// Batch normalization before each activation
    #[arg(long)]
    pub batchnorm: bool,
    #[arg(long, value_enum, default_value_t = WeightArg::RowNormalized)]
    pub weights: WeightArg,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Use only the first N training samples
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Use only the first N test samples
    #[arg(long)]
    pub test_limit: Option<usize>,
    /// Width 500, depth 200, 50 (MNIST) or 100 (CIFAR-10) epochs, lr 1e-4,
    /// momentum 0.5, batch 64
    #[arg(
        long,
        conflicts_with_all = ["depth", "width", "epochs", "lr", "momentum", "batch_size"]
    )]
    pub full_paper_scale: bool,
    #[arg(long)]
    pub save_checkpoint: Option<PathBuf>,
    /// Continue from a saved network instead of a fresh draw
    #[arg(long)]
    pub load_checkpoint: Option<PathBuf>,
    #[arg(long, env = "BSNN_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ShellArgs {
    #[arg(long, value_enum)]
    pub dist: DistArg,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// Activation of the network for `--dist layer`
    #[arg(long, value_parser = parse_activation, default_value = "tanh")]
    pub activation: String,
    #[arg(long)]
    pub gpn: bool,
    /// Depth of the network for `--dist layer`
    #[arg(long, default_value_t = 10)]
    pub depth: usize,
    #[arg(long, env = "BSNN_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputArg {
    Gaussian,
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistArg {
    Gaussian,
    Sphere,
    Layer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightArg {
    RowNormalized,
    Haar,
}

fn parse_activation(s: &str) -> Result<String, String> {
    Activation::from_name(s)
        .map(|a| a.name().to_string())
        .map_err(|e| e.to_string())
}

fn activation(name: &str) -> Result<Activation, Failure> {
    Activation::from_name(name).map_err(Failure::from)
}

/// Why a command failed, by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidArgument(_)
            | Error::QuadratureOrder { .. }
            | Error::GradCheckCap { .. } => Failure::Usage(msg),
            Error::Format { .. }
            | Error::Checkpoint(_)
            | Error::Io { .. }
            | Error::LabelOutOfRange { .. }
            | Error::ZeroVarianceRow { .. }
            | Error::DimensionMismatch { .. } => Failure::Data(msg),
            _ => Failure::Numerical(msg),
        }
    }
}

/// A finished run: the CSV plus a few headline numbers for the manifest.
pub struct Outcome {
    pub csv: Csv,
    pub summary: Map<String, Value>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn new(csv: Csv) -> Self {
        Self {
            csv,
            summary: Map::new(),
            warnings: Vec::new(),
        }
    }

    fn note(&mut self, key: &str, value: Value) {
        self.summary.insert(key.to_string(), value);
    }
}

/// An overflow is a finding for raw activations and a failure for
/// normalized ones.
fn overflow(gpn: bool, what: String, out: &mut Outcome) -> Result<(), Failure> {
    if gpn {
        Err(Failure::Numerical(what))
    } else {
        out.warnings.push(what);
        Ok(())
    }
}

fn gpn_table(a: &GpnTableArgs) -> Result<Outcome, Failure> {
    let rule = gauss_hermite_rule(a.order)?;
    let mut csv = Csv::new(&["activation", "a", "b", "m2_check", "d2_check", "gap"]);
    for name in a.activations.as_deref().unwrap_or_default() {
        let act = activation(name)?;
        let c = gpn_constants(&act, &rule, RootSelection::MatchTable)?;
        let check = verify_gpn(&act, c.a, c.b, &rule, 1e-6)?;
        let gap = poincare_gap(&act, &rule)?;
        csv.row(&[
            act.name().into(),
            c.a.into(),
            c.b.into(),
            check.moments.m2.into(),
            check.moments.d2.into(),
            gap.into(),
        ]);
    }
    Ok(Outcome::new(csv))
}

fn synth(a: &SynthArgs) -> Result<Outcome, Failure> {
    let arm = ArmConfig::new(activation(&a.activation)?, a.gpn, a.width, a.depth);
    let mut cfg = SyntheticConfig::new(arm, a.samples, a.seed.unwrap_or(DEFAULT_SEED));
    cfg.input = match a.input {
        InputArg::Gaussian => InputKind::Gaussian,
        InputArg::Sphere => InputKind::Sphere,
    };
    cfg.batch_one = a.batch_one;
    let r = run_synthetic_norms(&cfg)?;
    let mut out = Outcome::new(Csv::new(&[
        "layer",
        "x_norm_mean",
        "x_norm_std",
        "grad_fro_mean",
        "grad_fro_std",
    ]));
    if let Some(layer) = r.overflow_layer {
        out.note("overflow_layer", json!(layer));
        overflow(
            a.gpn,
            format!("{}: non-finite values at layer {layer}", r.label),
            &mut out,
        )?;
        return Ok(out);
    }
    // Row l pairs x^(l) with the gradient of the weights producing it.
    for l in 0..=r.depth {
        let (mean, std) = match r.layers.get(l) {
            Some(s) => (s.norm_mean, s.norm_std),
            None => (r.output_mean, r.output_std),
        };
        let grad = l.checked_sub(1).map(|k| &r.layers[k]);
        out.csv.row(&[
            l.into(),
            mean.into(),
            std.into(),
            Field::opt(grad.and_then(|g| g.grad_mean)),
            Field::opt(grad.and_then(|g| g.grad_std)),
        ]);
    }
    out.note("final_norm_mean", json!(r.output_mean));
    Ok(out)
}

fn hist(a: &HistArgs) -> Result<Outcome, Failure> {
    let arm = ArmConfig::new(activation(&a.activation)?, a.gpn, a.width, a.depth);
    let mut cfg = HistogramConfig::new(arm.clone(), a.samples, a.seed.unwrap_or(DEFAULT_SEED));
    cfg.bins = a.bins;
    cfg.range = (a.lo, a.hi);
    let mut out = Outcome::new(Csv::new(&["bin_left", "bin_right", "count"]));
    let h = match run_deriv_histogram(&cfg) {
        Ok(h) => h,
        Err(Error::Overflow { layer }) => {
            out.note("overflow_layer", json!(layer));
            overflow(
                a.gpn,
                format!("{}: non-finite values at layer {layer}", arm.label()),
                &mut out,
            )?;
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    let w = h.bin_width();
    for (i, &c) in h.counts.iter().enumerate() {
        out.csv.row(&[
            (h.lo + i as f64 * w).into(),
            (h.lo + (i + 1) as f64 * w).into(),
            Field::Int(c),
        ]);
    }
    let (mean, std) = h.binned_mean_std();
    out.note("below_range", json!(h.below));
    out.note("above_range", json!(h.above));
    out.note("mass_within_0.1_of_1", json!(h.mass_near(1.0, 0.1)));
    out.note("mean", json!(mean));
    out.note("std", json!(std));
    Ok(out)
}

fn width_sweep(a: &SweepArgs) -> Result<Outcome, Failure> {
    let cfg = WidthSweepConfig {
        activation: activation(&a.activation)?,
        use_gpn: a.gpn,
        widths: a.widths.clone(),
        depth: a.depth,
        seeds_per_width: a.seeds,
        seed: a.seed.unwrap_or(DEFAULT_SEED),
        workers: a.workers,
    };
    let r = run_width_sweep(&cfg)?;
    let mut out = Outcome::new(Csv::new(&["width", "seed", "ratio"]));
    for c in &r.cells {
        out.csv
            .row(&[c.width.into(), c.seed_index.into(), c.ratio.into()]);
    }
    if let Some(c) = r.cells.iter().find(|c| c.overflow_layer.is_some()) {
        overflow(
            a.gpn,
            format!(
                "{}: width {} seed {} overflowed at layer {}",
                r.label,
                c.width,
                c.seed_index,
                c.overflow_layer.unwrap_or_default()
            ),
            &mut out,
        )?;
    }
    let per_width: Vec<Value> = r
        .per_width
        .iter()
        .map(|w| json!({"width": w.width, "mean": w.mean, "std": w.std}))
        .collect();
    out.note("per_width", Value::Array(per_width));
    Ok(out)
}

fn load_split(a: &TrainArgs, train: bool) -> Result<Dataset, Failure> {
    let data = match a.dataset {
        DatasetKind::Mnist => {
            let (images, labels) = mnist_paths(&a.data_dir, train);
            load_mnist(&images, &labels)?
        }
        DatasetKind::Cifar10 => load_cifar10(&cifar10_paths(&a.data_dir, train))?,
    };
    let limit = if train { a.train_limit } else { a.test_limit };
    Ok(match limit {
        Some(n) => data.truncated(n),
        None => data,
    })
}

fn train(a: &TrainArgs) -> Result<Outcome, Failure> {
    let missing = || Failure::Usage("train options were not materialized".into());
    let act = activation(&a.activation)?;
    let train_set = load_split(a, true)?;
    let test_set = load_split(a, false)?;
    let gpn = if a.gpn {
        Some(gpn_constants(
            &act,
            &bsnn::quadrature::default_rule(),
            RootSelection::MatchTable,
        )?)
    } else {
        None
    };
    let width = a.width.ok_or_else(missing)?;
    let depth = a.depth.ok_or_else(missing)?;
    let network = NetworkConfig::new(width, depth, act)
        .with_gpn(gpn)
        .with_weight_mode(match a.weights {
            WeightArg::RowNormalized => WeightMode::RowNormalized,
            WeightArg::Haar => WeightMode::HaarOrthogonal,
        })
        .with_batchnorm(a.batchnorm)
        .with_adapters(Some(train_set.dim()), Some(train_set.classes));
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let cfg = TrainConfig {
        network: network.clone(),
        epochs: a.epochs.ok_or_else(missing)?,
        lr: a.lr.ok_or_else(missing)?,
        momentum: a.momentum.ok_or_else(missing)?,
        batch_size: a.batch_size.ok_or_else(missing)?,
        seed,
    };
    let net = match &a.load_checkpoint {
        Some(path) => {
            let net = load_checkpoint(path)?;
            let c = net.config();
            if c.width != width
                || c.depth != depth
                || c.activation.name() != a.activation
                || c.gpn.is_some() != a.gpn
            {
                return Err(Failure::Usage(format!(
                    "checkpoint {} holds a {}x{} {} network{}, which does not match the requested one",
                    path.display(),
                    c.depth,
                    c.width,
                    c.activation.name(),
                    if c.gpn.is_some() { " (normalized)" } else { "" },
                )));
            }
            net
        }
        None => init_network(&network, &mut SeedStream::new(seed).derive("weights", 0))?,
    };
    let (net, log) = train_network(net, &cfg, &train_set, &test_set)?;
    if let Some(path) = &a.save_checkpoint {
        save_checkpoint(&net, path)?;
    }
    let mut out = Outcome::new(Csv::new(&[
        "epoch",
        "update",
        "train_acc",
        "test_acc",
        "grad_ratio",
        "vanished_flag",
    ]));
    for r in &log.rows {
        out.csv.row(&[
            r.epoch.into(),
            r.update.into(),
            Field::opt(r.train_acc),
            Field::opt(r.test_acc),
            Field::opt(r.grad_ratio),
            usize::from(r.vanished).into(),
        ]);
    }
    let last = log.final_row();
    out.note("train_samples", json!(train_set.len()));
    out.note("test_samples", json!(test_set.len()));
    out.note("final_train_acc", json!(last.and_then(|r| r.train_acc)));
    out.note("final_test_acc", json!(last.and_then(|r| r.test_acc)));
    out.note("best_train_acc", json!(log.best_train_acc()));
    out.note("vanished_updates", json!(log.vanished_updates));
    out.note("aborted", json!(log.aborted));
    if let Some(why) = &log.aborted {
        overflow(a.gpn, format!("training stopped early, {why}"), &mut out)?;
    }
    Ok(out)
}

fn thin_shell(a: &ShellArgs) -> Result<Outcome, Failure> {
    let source = match a.dist {
        DistArg::Gaussian => ShellSource::Gaussian,
        DistArg::Sphere => ShellSource::Sphere,
        DistArg::Layer => ShellSource::Layer(ArmConfig::new(
            activation(&a.activation)?,
            a.gpn,
            a.dim,
            a.depth,
        )),
    };
    let eps = a
        .epsilons
        .clone()
        .unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
    let t = verify_thin_shell(
        &source,
        a.dim,
        &eps,
        a.trials,
        a.seed.unwrap_or(DEFAULT_SEED),
    )?;
    let mut out = Outcome::new(Csv::new(&["epsilon", "exceedance"]));
    for (e, p) in t.epsilons.iter().zip(&t.exceedance) {
        out.csv.row(&[(*e).into(), (*p).into()]);
    }
    out.note("source", json!(t.source));
    if matches!(a.dist, DistArg::Gaussian) {
        let bounds: Vec<f64> = eps
            .iter()
            .map(|&e| gaussian_shell_bound(a.dim, e))
            .collect();
        out.note("gaussian_bound", json!(bounds));
    }
    Ok(out)
}
