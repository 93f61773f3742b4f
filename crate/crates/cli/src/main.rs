//! `bsnn`: reproducible experiment drivers writing CSV reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error,
//! 3 numerical abort.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{Command, Failure};
use output::{read_manifest, write_file, write_manifest, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "bsnn", version, about = "Self-normalizing network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Top,
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
enum Top {
    #[command(flatten)]
    Run(Command),
    /// Rerun the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Write here instead of the recorded output path
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the recorded worker count of a width sweep
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Top::Run(cmd) => execute(cmd),
        Top::Replay {
            manifest,
            out,
            workers,
        } => replay(&manifest, out, workers),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code() as u8)
        }
    }
}

fn replay(
    path: &std::path::Path,
    out: Option<PathBuf>,
    workers: Option<usize>,
) -> Result<(), Failure> {
    let manifest = read_manifest(path).map_err(Failure::Data)?;
    let mut cmd = manifest.command;
    if let Some(out) = out {
        cmd.set_out(out);
    }
    if let (Some(w), Command::WidthSweep(a)) = (workers, &mut cmd) {
        a.workers = w.max(1);
    }
    execute(cmd)
}

fn execute(mut cmd: Command) -> Result<(), Failure> {
    cmd.materialize()?;
    if let Command::Train(a) = &cmd {
        if a.full_paper_scale {
            eprintln!(
                "warning: --full-paper-scale trains a width-500, depth-200 network for {} epochs; \
                 this is days of CPU time, not a desk-scale run",
                a.epochs.unwrap_or_default()
            );
        }
    }
    let outcome = cmd.run()?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let Some(out) = cmd.out().cloned() else {
        print!("{}", outcome.csv.as_str());
        return Ok(());
    };
    let io =
        |e: std::io::Error, p: &std::path::Path| Failure::Data(format!("{}: {e}", p.display()));
    write_file(&out, outcome.csv.as_str().as_bytes()).map_err(|e| io(e, &out))?;
    let mut outputs = vec![out.clone()];
    if let Command::Train(a) = &cmd {
        outputs.extend(a.save_checkpoint.iter().cloned());
    }
    let manifest = RunManifest {
        tool: "bsnn".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cmd.seed(),
        command: cmd,
        outputs,
        summary: outcome.summary,
    };
    write_manifest(&out, &manifest).map_err(|e| io(e, &out))?;
    Ok(())
}
