use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use raas::aggregate::{gaps_at, median};
use raas::constants::constants;
use raas::emit::emit;
use raas::experiment::{run_with_noise, ExperimentResult};
use raas::verify::verify;
use raas::{load_config, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "raas", version, about = "Robust accelerated adaptive search experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; all cores by default.
    #[arg(long, env = "RAAS_JOBS")]
    jobs: Option<usize>,
}

#[derive(Args)]
struct Output {
    /// Output directory; overrides the config.
    #[arg(long, env = "RAAS_OUT_DIR")]
    out: Option<PathBuf>,
    /// Comma-separated subset of csv,svg.
    #[arg(long, value_delimiter = ',')]
    formats: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method on every seed and write CSV, SVG and a manifest.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
    },
    /// Run and check the Lyapunov, envelope and quasi-descent properties.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Repeat the run for every noise setting in the config's `sweep` list.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
    },
    /// Print the theory constants for the config's RAAS settings.
    Constants {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path, output: Option<&Output>) -> Result<ExperimentConfig> {
    let mut cfg = load_config(path)?;
    if let Some(o) = output {
        if let Some(f) = &o.formats {
            cfg.formats = f.clone();
        }
        if let Some(d) = &o.out {
            cfg.out_dir = Some(d.clone());
        }
        cfg.validate()?;
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| {
        let name = if cfg.name.is_empty() { "experiment" } else { &cfg.name };
        PathBuf::from("out").join(name)
    })
}

fn summarize(result: &ExperimentResult) {
    let horizon = result.config.horizon;
    for label in result.labels() {
        let runs: Vec<_> = result.runs_for(label).collect();
        let med = median(&gaps_at(runs.iter().copied(), horizon));
        let secs: f64 = runs.iter().map(|r| r.duration.as_secs_f64()).sum();
        match med {
            Some(m) => println!(
                "{label:>14}  runs {:>2}  median gap at T {m:.4e}  ({secs:.2}s)",
                runs.len()
            ),
            None => println!("{label:>14}  runs {:>2}  no complete runs", runs.len()),
        }
    }
    for f in &result.failures {
        eprintln!("run {}/{} failed: {}", f.label, f.seed, f.error);
    }
}

fn run(common: &Common, output: &Output) -> Result<ExitCode> {
    let cfg = load(&common.config, Some(output))?;
    let start = Instant::now();
    let result = run_with_noise(&cfg, cfg.noise, common.jobs)?;
    let dir = out_dir(&cfg);
    let emitted = emit(&result, &dir).with_context(|| format!("writing {}", dir.display()))?;
    summarize(&result);
    println!(
        "wrote {} files to {} in {:.2}s",
        emitted.files.len(),
        dir.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(if result.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn sweep(common: &Common, output: &Output) -> Result<ExitCode> {
    let cfg = load(&common.config, Some(output))?;
    let grid = if cfg.sweep.is_empty() {
        vec![cfg.noise]
    } else {
        cfg.sweep.clone()
    };
    let base = out_dir(&cfg);
    let mut failed = false;
    for (i, noise) in grid.into_iter().enumerate() {
        let result = run_with_noise(&cfg, noise, common.jobs)?;
        let dir = base.join(format!("sweep_{i:03}"));
        emit(&result, &dir).with_context(|| format!("writing {}", dir.display()))?;
        println!(
            "sweep {i}: sigma_g {} sigma_f {} bias {} -> {}",
            noise.sigma_g,
            noise.sigma_f,
            noise.bias_rel,
            dir.display()
        );
        summarize(&result);
        failed |= !result.failures.is_empty();
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn verify_cmd(common: &Common) -> Result<ExitCode> {
    let cfg = load(&common.config, None)?;
    let result = run_with_noise(&cfg, cfg.noise, common.jobs)?;
    let report = verify(&result);
    println!("{}", serde_json::to_string_pretty(&report)?);
    for v in report.verdicts.iter().filter(|v| !v.passed()) {
        eprintln!("violation in {}/{}", v.label, v.seed);
    }
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn constants_cmd(config: &Path) -> Result<ExitCode> {
    let cfg = load(config, None)?;
    let (method, c) = constants(&cfg)?;
    let out = serde_json::json!({ "method": method, "constants": c });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { common, output } => run(common, output),
        Command::Verify { common } => verify_cmd(common),
        Command::Sweep { common, output } => sweep(common, output),
        Command::Constants { config } => constants_cmd(config),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<HarnessError>()
                .is_some_and(|h| matches!(h, HarnessError::Parse(_) | HarnessError::Invalid(_)))
            {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
