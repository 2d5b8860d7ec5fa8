use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use firma::sweep::{dry_run, run_sweep, ExperimentManifest, SweepOptions};

/// Run a federated-learning experiment sweep described by a TOML manifest.
#[derive(Debug, Parser)]
#[command(name = "firma", version)]
struct Args {
    /// Path to the experiment manifest.
    manifest: PathBuf,
    /// Number of runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Print the planned runs and exit without writing anything.
    #[arg(long)]
    dry_run: bool,
    /// Single-threaded execution for bit-reproducible output.
    #[arg(long)]
    deterministic: bool,
    /// Override the manifest's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> anyhow::Result<usize> {
    let mut manifest = ExperimentManifest::load(&args.manifest)
        .with_context(|| format!("loading manifest {}", args.manifest.display()))?;
    if let Some(out) = args.out {
        manifest.output_dir = out;
    }
    if args.dry_run {
        for line in dry_run(&manifest) {
            println!("{line}");
        }
        return Ok(0);
    }
    let opts = SweepOptions {
        jobs: args.jobs,
        deterministic: args.deterministic,
    };
    let report = run_sweep(&manifest, opts)?;
    for r in &report.runs {
        match (&r.summary, &r.error) {
            (_, Some(err)) => eprintln!("{:<8} {:<8} FAILED: {err}", r.method, r.scenario),
            (Some(s), None) => println!(
                "{:<8} {:<8} acc {:.4}  gini {:.4}",
                r.method,
                r.scenario,
                s.final_mean_accuracy.unwrap_or(f64::NAN),
                s.final_gini.unwrap_or(f64::NAN)
            ),
            (None, None) => {}
        }
    }
    Ok(report.failures())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} run(s) failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
