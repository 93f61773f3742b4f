//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use bsnn::experiments::shell::{
    gaussian_radius_bound, radius_exceedance, verify_thin_shell, ShellSource,
};
use bsnn::experiments::synthetic::{
    run_deriv_histogram, run_synthetic_norms, run_width_sweep, ArmConfig, HistogramConfig,
    SyntheticConfig, WidthSweepConfig,
};
use bsnn::gpn::{gpn_constants, verify_gpn, RootSelection};
use bsnn::network::loss::softmax_cross_entropy;
use bsnn::network::{finite_difference_grad, frobenius, init_network, GradientMode, Mode};
use bsnn::ortho::{orthogonality_defect, sample_haar_orthogonal, sample_haar_reflectors};
use bsnn::quadrature::default_rule;
use bsnn::{Activation, NetworkConfig, SeedStream, WeightMode};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

type Check = (bool, String);
type Criterion = (&'static str, fn() -> Check);

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bsnn")
}

fn bsnn(args: &[&str]) -> std::process::Output {
    Command::new(bin())
        .args(args)
        .env_remove("BSNN_SEED")
        .output()
        .expect("run bsnn")
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap_or_default()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = SeedStream::new(seed).derive("acceptance", 0);
    Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal))
}

fn gpn_config(act: &Activation, width: usize, depth: usize) -> NetworkConfig {
    let c = gpn_constants(act, &default_rule(), RootSelection::MatchTable).expect("constants");
    NetworkConfig::new(width, depth, act.clone()).with_gpn(Some(c))
}

#[allow(clippy::approx_constant)]
fn table_reproduction() -> Check {
    let published = [
        ("tanh", 1.4674, 0.3885),
        ("relu", 1.4142, 0.0),
        ("leakyrelu", 1.4141, 0.0),
        ("elu", 1.2234, 0.0742),
        ("selu", 0.9660, 0.2585),
        ("gelu", 1.4915, -0.9097),
    ];
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().join("table.csv");
    let start = Instant::now();
    let run = bsnn(&["gpn-table", "--out", out.to_str().unwrap()]);
    let secs = start.elapsed().as_secs_f64();
    let rows = read_csv(&out);
    let mut worst = 0.0f64;
    let mut found = 0;
    for (name, a, b) in published {
        if let Some(r) = rows.iter().find(|r| r[0] == name) {
            found += 1;
            let da = (r[1].parse::<f64>().unwrap() - a).abs();
            let db = (r[2].parse::<f64>().unwrap() - b).abs();
            worst = worst.max(da).max(db);
        }
    }
    let ok = run.status.success() && found == 6 && worst <= 1e-3 && secs < 1.0;
    (
        ok,
        format!("max |diff| {worst:.2e} (tol 1e-3), {found}/6 rows, {secs:.2}s (limit 1s)"),
    )
}

fn gpn_self_consistency() -> Check {
    let rule = default_rule();
    let mut failed = Vec::new();
    let mut worst = 0.0f64;
    for act in Activation::builtins() {
        let c = gpn_constants(&act, &rule, RootSelection::MatchTable).expect("constants");
        let v = verify_gpn(&act, c.a, c.b, &rule, 1e-6).expect("verify");
        worst = worst
            .max((v.moments.m2 - 1.0).abs())
            .max((v.moments.d2 - 1.0).abs());
        if !v.passed {
            failed.push(act.name().to_string());
        }
    }
    (
        failed.is_empty(),
        format!("max moment error {worst:.2e} (tol 1e-6), failures: {failed:?}"),
    )
}

fn gradient_factorization() -> Check {
    let mut rng = SeedStream::new(2024).derive("configs", 0);
    let acts = Activation::builtins();
    let mut worst = 0.0f64;
    let mut layers = 0;
    for case in 0..100u64 {
        let d = rng.random_range(2..=64);
        let depth = rng.random_range(1..=8);
        let act = &acts[case as usize % acts.len()];
        let mode = if case % 2 == 0 {
            WeightMode::HaarOrthogonal
        } else {
            WeightMode::RowNormalized
        };
        let cfg = gpn_config(act, d, depth).with_weight_mode(mode);
        let net =
            init_network(&cfg, &mut SeedStream::new(case).derive("weights", 0)).expect("init");
        let x = gaussian(1, d, 1000 + case);
        let g = gaussian(1, d, 2000 + case);
        let trace = net.forward(&x, Mode::Train).expect("forward");
        let back = net
            .backward(&trace, &g, GradientMode::Full)
            .expect("backward");
        for (l, layer) in back.layers.iter().enumerate() {
            let fro = frobenius(layer.grad_w.as_ref().expect("full gradient"));
            let xn = trace.xs[l].row(0).dot(&trace.xs[l].row(0)).sqrt();
            let y = layer.y.as_ref().expect("error signal");
            let yn = y.row(0).dot(&y.row(0)).sqrt();
            worst = worst.max((fro - xn * yn).abs() / (xn * yn));
            layers += 1;
        }
    }
    (
        worst <= 1e-10,
        format!("max relative gap {worst:.2e} over {layers} layers (tol 1e-10)"),
    )
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let labels = [0, 3, 5, 7, 1];
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for act in Activation::builtins() {
        // redraw until no pre-activation sits within 1e-3 of a kink
        let mut checked = false;
        for seed in 0..100u64 {
            let cfg = gpn_config(&act, 8, 3);
            let net =
                init_network(&cfg, &mut SeedStream::new(seed).derive("weights", 0)).expect("init");
            let x = gaussian(5, 8, 500 + seed);
            let trace = net.forward(&x, Mode::Train).expect("forward");
            if act.kinked() && trace.hs.iter().any(|h| h.iter().any(|v| v.abs() <= 1e-3)) {
                continue;
            }
            let (_, g) = softmax_cross_entropy(&trace.output, &labels).expect("loss");
            let analytic = net
                .backward(&trace, &g, GradientMode::Full)
                .and_then(|b| b.gradients())
                .expect("backward")
                .layers;
            let fd = finite_difference_grad(
                &net,
                &x,
                |t| Ok(softmax_cross_entropy(&t.output, &labels)?.0),
                1e-5,
            )
            .expect("finite differences");
            let err = analytic
                .iter()
                .zip(&fd)
                .map(|(a, f)| frobenius(&(a - f)) / frobenius(a))
                .fold(0.0, f64::max);
            worst = worst.max(err);
            detail.push(format!("{} {err:.1e}", act.name()));
            checked = true;
            break;
        }
        if !checked {
            return (
                false,
                format!("{}: no kink-free draw in 100 seeds", act.name()),
            );
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst < 1e-4 && secs < 60.0,
        format!(
            "max relative error {worst:.2e} (tol 1e-4) [{}], {secs:.1}s",
            detail.join(", ")
        ),
    )
}

fn haar_statistics() -> Check {
    let seeds = SeedStream::new(55);
    let mut defect = 0.0f64;
    for (i, d) in [1usize, 2, 3, 10, 64, 100, 257].into_iter().enumerate() {
        for k in 0..5 {
            let q = sample_haar_orthogonal(d, &mut seeds.derive(&format!("dense-{i}"), k))
                .expect("sample");
            defect = defect.max(orthogonality_defect(q.entries().view()));
        }
    }
    let d = 100;
    let n = 2000;
    let firsts: Vec<f64> = (0..n)
        .map(|k| {
            let q = sample_haar_reflectors(d, &mut seeds.derive("column", k)).expect("sample");
            let mut e1 = vec![0.0; d];
            e1[0] = 1.0;
            q.apply(&mut e1);
            e1[0]
        })
        .collect();
    let mean = firsts.iter().sum::<f64>() / n as f64;
    let var = firsts.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let var_rel = (var * d as f64 - 1.0).abs();
    let mut bound_ok = true;
    let mut cells = Vec::new();
    for dim in [100, 400] {
        let trials = 2000;
        let t = verify_thin_shell(&ShellSource::Gaussian, dim, &[], trials, 77).expect("shell");
        for delta in [0.1, 0.2] {
            let p = radius_exceedance(&t.values, delta);
            let b = gaussian_radius_bound(dim, delta);
            let slack = 3.0 * (b * (1.0 - b) / trials as f64).sqrt();
            bound_ok &= p <= b + slack;
            cells.push(format!(
                "d={dim} delta={delta}: {p:.4} <= {b:.4}+{slack:.4}"
            ));
        }
    }
    (
        defect < 1e-10 && var_rel <= 0.2 && bound_ok,
        format!(
            "max defect {defect:.1e} (tol 1e-10); d*var(Q11) = {:.3} (1 +- 0.2); {}",
            var * d as f64,
            cells.join("; ")
        ),
    )
}

/// Mean `|x^(l)|^2 / d` per layer `l = 0..=L`, averaged over seeds.
fn norm_profile(act: &Activation, gpn: bool, seeds: u64, samples: usize) -> Vec<f64> {
    let arm = ArmConfig::new(act.clone(), gpn, 500, 200);
    let mut acc = vec![0.0; 201];
    for s in 0..seeds {
        let mut cfg = SyntheticConfig::new(arm.clone(), samples, 900 + s);
        cfg.gradients = false;
        let r = run_synthetic_norms(&cfg).expect("synthetic run");
        assert!(r.overflow_layer.is_none(), "{} overflowed", r.label);
        for (a, v) in acc
            .iter_mut()
            .zip(r.layers.iter().map(|l| l.norm_mean).chain([r.output_mean]))
        {
            *a += v / seeds as f64;
        }
    }
    acc
}

fn forward_norms() -> Check {
    let start = Instant::now();
    let seeds = 20;
    let samples = 10;
    let mut ok = true;
    let mut parts = Vec::new();
    for act in [Activation::Tanh, Activation::selu()] {
        let p = norm_profile(&act, true, seeds, samples);
        let (lo, hi) = p[1..]
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        ok &= lo >= 0.8 && hi <= 1.2;
        parts.push(format!("gpn-{} in [{lo:.3}, {hi:.3}]", act.name()));
    }
    let relu = norm_profile(&Activation::Relu, false, seeds, samples);
    let last = relu[200];
    ok &= last < 1e-20;
    parts.push(format!("relu final {last:.2e} (< 1e-20)"));
    let tanh = norm_profile(&Activation::Tanh, false, seeds, samples);
    let monotone = tanh.windows(2).skip(1).all(|w| w[1] <= w[0]);
    let plateau = (tanh[180] - tanh[200]) / tanh[180];
    ok &= monotone && tanh[200] < 0.05 && plateau < 0.15;
    parts.push(format!(
        "tanh monotone={monotone}, final {:.4} (< 0.05), change over last 20 layers {:.1}% (< 15%)",
        tanh[200],
        100.0 * plateau
    ));
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 120.0;
    parts.push(format!(
        "{seeds} seeds x {samples} samples, {secs:.0}s (limit 120s)"
    ));
    (ok, parts.join("; "))
}

fn width_sweep() -> Check {
    let widths = vec![100, 250, 500, 1000];
    let mut ok = true;
    let mut parts = Vec::new();
    for act in [Activation::Tanh, Activation::selu()] {
        let r = run_width_sweep(&WidthSweepConfig {
            activation: act.clone(),
            use_gpn: true,
            widths: widths.clone(),
            depth: 200,
            seeds_per_width: 10,
            seed: 31,
            workers: 1,
        })
        .expect("sweep");
        let w = &r.per_width;
        let decreasing = w.windows(2).all(|p| p[1].mean < p[0].mean);
        let shrink = w.last().unwrap().std < w[0].std;
        ok &= decreasing && shrink;
        let cells: Vec<String> = w
            .iter()
            .map(|s| format!("{}:{:.3}+-{:.3}", s.width, s.mean, s.std))
            .collect();
        parts.push(format!(
            "gpn-{} [{}] decreasing={decreasing} std-shrinks={shrink}",
            act.name(),
            cells.join(" ")
        ));
    }
    (ok, parts.join("; "))
}

fn pseudo_linearity() -> Check {
    let hist = |gpn| {
        let cfg = HistogramConfig::new(ArmConfig::new(Activation::Tanh, gpn, 500, 200), 20, 8);
        run_deriv_histogram(&cfg).expect("histogram")
    };
    let raw = hist(false);
    let gpn = hist(true);
    let raw_near = raw.mass_near(1.0, 0.1);
    let gpn_near = gpn.mass_near(1.0, 0.1);
    let (_, gpn_std) = gpn.binned_mean_std();
    (
        raw_near >= 0.9 && gpn_near < 0.5 && gpn_std > 0.1,
        format!(
            "raw tanh mass within 0.1 of 1: {raw_near:.3} (>= 0.9); gpn tanh {gpn_near:.3} (< 0.5), std {gpn_std:.3} (> 0.1)"
        ),
    )
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
}

/// Per-epoch train accuracies of one desk-scale run.
fn train_run(dir: &Path, act: &str, gpn: bool, seed: u64) -> Vec<f64> {
    let out = dir.join(format!("{act}-{gpn}-{seed}.csv"));
    let seed = seed.to_string();
    let data = data_dir();
    let mut args = vec![
        "train",
        "--dataset",
        "mnist",
        "--data-dir",
        data.to_str().unwrap(),
        "--activation",
        act,
        "--seed",
        &seed,
        "--out",
        out.to_str().unwrap(),
    ];
    if gpn {
        args.push("--gpn");
    }
    let run = bsnn(&args);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    read_csv(&out)
        .iter()
        .filter(|r| !r[2].is_empty())
        .map(|r| r[2].parse().unwrap())
        .collect()
}

fn trainability() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    let seeds = [0u64, 1, 2];
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    // per seed: highest accuracy after training starts, and the final one
    let arm = |act: &str, gpn: bool| -> (f64, f64, Vec<f64>) {
        let runs: Vec<Vec<f64>> = seeds
            .iter()
            .map(|&s| train_run(dir.path(), act, gpn, s))
            .collect();
        let peak: Vec<f64> = runs
            .iter()
            .map(|r| r[1..].iter().copied().fold(0.0, f64::max))
            .collect();
        let last: Vec<f64> = runs.iter().map(|r| *r.last().unwrap()).collect();
        (mean(&peak), mean(&last), last)
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for act in ["relu", "gelu"] {
        let (raw_peak, _, raw_each) = arm(act, false);
        let (_, gpn_last, gpn_each) = arm(act, true);
        ok &= (raw_peak - 0.1).abs() <= 0.05 && gpn_last > 0.8;
        parts.push(format!(
            "{act}: raw peak {raw_peak:.3} (0.10 +- 0.05) {raw_each:.3?}, gpn final {gpn_last:.3} (> 0.8) {gpn_each:.3?}"
        ));
    }
    let (_, raw_tanh, _) = arm("tanh", false);
    let (_, gpn_tanh, _) = arm("tanh", true);
    ok &= gpn_tanh > raw_tanh;
    parts.push(format!(
        "tanh: gpn final {gpn_tanh:.3} > raw final {raw_tanh:.3}"
    ));
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 900.0;
    parts.push(format!(
        "mean over seeds {seeds:?}, {secs:.0}s (limit 900s)"
    ));
    (ok, parts.join("; "))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().expect("tempdir");
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let data = data_dir();
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("gpn-table", vec!["gpn-table".into(), "--activations".into(), "tanh,gelu".into()]),
        (
            "synth",
            "synth --activation tanh --gpn --width 500 --depth 200 --seed 7"
                .split(' ')
                .map(String::from)
                .collect(),
        ),
        (
            "hist",
            "hist --activation selu --gpn --width 64 --depth 20 --samples 10 --seed 3"
                .split(' ')
                .map(String::from)
                .collect(),
        ),
        (
            "width-sweep",
            "width-sweep --activation tanh --gpn --widths 16,32,64 --depth 30 --seeds 4 --workers 1 --seed 5"
                .split(' ')
                .map(String::from)
                .collect(),
        ),
        (
            "train",
            format!(
                "train --dataset mnist --data-dir {} --activation tanh --gpn --width 32 --depth 4 --epochs 1 --train-limit 512 --test-limit 128 --seed 9",
                data.display()
            )
            .split(' ')
            .map(String::from)
            .collect(),
        ),
        (
            "thin-shell",
            "thin-shell --dist layer --activation selu --gpn --dim 64 --depth 5 --trials 200 --seed 2"
                .split(' ')
                .map(String::from)
                .collect(),
        ),
    ];
    let mut failures = Vec::new();
    for (name, mut args) in runs {
        let (a, b, c) = (
            p(&format!("{name}-a.csv")),
            p(&format!("{name}-b.csv")),
            p(&format!("{name}-c.csv")),
        );
        args.extend(["--out".to_string(), a.clone()]);
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = bsnn(&argv);
        let once = std::fs::read(&a).ok();
        let second = bsnn(&argv);
        let rerun = std::fs::read(&a).ok();
        let mut replay = vec![
            "replay".to_string(),
            format!("{a}.manifest.json"),
            "--out".into(),
            b.clone(),
        ];
        if name == "width-sweep" {
            replay.extend(["--workers".into(), "4".into()]);
        }
        let replayed = bsnn(&replay.iter().map(String::as_str).collect::<Vec<_>>());
        let _ = bsnn(&["replay", &format!("{b}.manifest.json"), "--out", &c]);
        let bytes = |f: &str| std::fs::read(f).ok();
        let ok = first.status.success()
            && second.status.success()
            && once == rerun
            && replayed.status.success()
            && bytes(&b).is_some()
            && rerun == bytes(&b)
            && bytes(&b) == bytes(&c);
        if !ok {
            failures.push(name);
        }
    }
    (
        failures.is_empty(),
        format!("rerun, replay and replay-of-replay byte-identical for all 6 subcommands (width-sweep replayed with 4 workers); failures: {failures:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 table reproduction", table_reproduction),
        ("2 gpn self-consistency", gpn_self_consistency),
        ("3 gradient norm factorization", gradient_factorization),
        ("4 gradient correctness", gradient_correctness),
        ("5 orthogonality and haar statistics", haar_statistics),
        ("6 forward norm preservation", forward_norms),
        ("7 width sweep", width_sweep),
        ("8 pseudo-linearity contrast", pseudo_linearity),
        ("9 desk-scale trainability", trainability),
        ("10 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let (ok, detail) = check();
        failed += usize::from(!ok);
        println!(
            "criterion {name}: {} ({:.1}s) {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
