use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bsnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsnn"))
        .args(args)
        .env_remove("BSNN_SEED")
        .output()
        .unwrap()
}

fn mnist() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
}

fn manifest(out: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(format!("{}.manifest.json", out.display())).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn gpn_table_prints_to_stdout_without_out() {
    let run = bsnn(&["gpn-table", "--activations", "relu"]);
    assert!(run.status.success());
    let text = String::from_utf8(run.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("activation,a,b,m2_check,d2_check,gap"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "relu");
    assert!((row[1].parse::<f64>().unwrap() - std::f64::consts::SQRT_2).abs() < 1e-3);
    assert!(row[2].parse::<f64>().unwrap().abs() < 1e-3);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(bsnn(&["gpn-table", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        bsnn(&["synth", "--activation", "swish", "--out", "x.csv"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        bsnn(&["synth", "--activation", "tanh"]).status.code(),
        Some(1)
    );
    assert_eq!(bsnn(&["frobnicate"]).status.code(), Some(1));
    let both = bsnn(&[
        "train",
        "--dataset",
        "mnist",
        "--data-dir",
        "x",
        "--activation",
        "relu",
        "--full-paper-scale",
        "--depth",
        "3",
        "--out",
        "x.csv",
    ]);
    assert_eq!(both.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&both.stderr).contains("Usage"));
    assert_eq!(bsnn(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let run = bsnn(&[
        "train",
        "--dataset",
        "mnist",
        "--data-dir",
        "missing/",
        "--activation",
        "relu",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(2));
    assert!(!out.exists());
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{}").unwrap();
    assert_eq!(
        bsnn(&["replay", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn full_scale_warns() {
    let run = bsnn(&[
        "train",
        "--dataset",
        "cifar10",
        "--data-dir",
        "missing/",
        "--activation",
        "tanh",
        "--full-paper-scale",
        "--out",
        "never.csv",
    ]);
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(
        err.contains("warning") && err.contains("100 epochs"),
        "{err}"
    );
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn seed_from_env_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, env: Option<&str>, flag: Option<&str>| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_bsnn"));
        cmd.args([
            "thin-shell",
            "--dist",
            "gaussian",
            "--dim",
            "20",
            "--trials",
            "100",
        ]);
        cmd.args(["--out", out.to_str().unwrap()])
            .env_remove("BSNN_SEED");
        if let Some(e) = env {
            cmd.env("BSNN_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        assert!(cmd.status().unwrap().success());
        manifest(&out)["seed"].as_u64()
    };
    assert_eq!(run("a.csv", None, None), Some(0));
    assert_eq!(run("b.csv", Some("41"), None), Some(41));
    assert_eq!(run("c.csv", Some("41"), Some("5")), Some(5));
}

#[test]
fn manifest_materializes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    let run = bsnn(&[
        "hist",
        "--activation",
        "tanh",
        "--width",
        "16",
        "--depth",
        "3",
        "--samples",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    let m = manifest(&out);
    assert_eq!(m["subcommand"], "hist");
    assert_eq!(m["config"]["bins"], 300);
    assert_eq!(m["config"]["lo"], -0.5);
    assert_eq!(m["config"]["seed"], 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("bin_left,bin_right,count\n"));
    assert_eq!(text.lines().count(), 301);
    let total: u64 = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    let outside = m["summary"]["below_range"].as_u64().unwrap()
        + m["summary"]["above_range"].as_u64().unwrap();
    assert_eq!(total + outside, 5 * 3 * 16);
}

#[test]
fn synth_rows_cover_every_layer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let run = bsnn(&[
        "synth",
        "--activation",
        "selu",
        "--gpn",
        "--width",
        "32",
        "--depth",
        "6",
        "--samples",
        "8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0][3], "");
    assert!(rows[1..].iter().all(|r| r[3].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn checkpoints_resume_training() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("net.bsnn");
    let data = mnist();
    let base = [
        "train",
        "--dataset",
        "mnist",
        "--data-dir",
        data.to_str().unwrap(),
        "--activation",
        "tanh",
        "--gpn",
        "--width",
        "16",
        "--depth",
        "3",
        "--epochs",
        "1",
        "--train-limit",
        "256",
        "--test-limit",
        "64",
    ];
    let first = dir.path().join("a.csv");
    let mut args = base.to_vec();
    args.extend([
        "--save-checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(bsnn(&args).status.success());
    assert!(ckpt.exists());
    let trained_acc = std::fs::read_to_string(&first)
        .unwrap()
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .to_string();

    let second = dir.path().join("b.csv");
    let mut args = base.to_vec();
    args.extend([
        "--load-checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(bsnn(&args).status.success());
    let resumed = std::fs::read_to_string(&second).unwrap();
    // epoch 0 of the resumed run evaluates the saved network
    assert_eq!(
        resumed.lines().nth(1).unwrap().split(',').nth(2).unwrap(),
        trained_acc
    );

    let mut args = base.to_vec();
    args[11] = "32";
    args.extend([
        "--load-checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(bsnn(&args).status.code(), Some(1));
}
