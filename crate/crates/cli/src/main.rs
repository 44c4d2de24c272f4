use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use delayed_cmab::harness::config::ExperimentConfig;
use delayed_cmab::harness::metrics::{aggregate, Summary};
use delayed_cmab::harness::output::write_outputs;
use delayed_cmab::harness::runner::run;
use delayed_cmab::harness::suites::{self, blocking_config, hard_class_config, thm3_config};

#[derive(Parser)]
#[command(
    name = "cmab",
    about = "Contextual bandits with delayed feedback",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write runs.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's `output`, then `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a config once per value of a parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `name=v1,v2,...` with a dotted JSON path, e.g. `learner.eta=0.1,0.2`.
        #[arg(long)]
        param: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in verification suite.
    Check {
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Run one of the lower-bound instances and report regret.
    LowerBound {
        #[arg(long, value_enum)]
        instance: Instance,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Instance {
    Thm3,
    Blocking,
    Hardclass,
}

fn output_dir(explicit: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    explicit
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run_and_write(config: &ExperimentConfig, dir: &Path) -> Result<Summary> {
    let runs = run(config)?;
    let summary = aggregate(config, &runs);
    let (csv, json) = write_outputs(dir, &runs, &summary)?;
    println!(
        "{} seeds, mean regret {:.3} (std {:.3}); wrote {} and {}",
        runs.len(),
        summary.regret.mean,
        summary.regret.std,
        csv.display(),
        json.display()
    );
    if let Some(b) = &summary.bound {
        println!(
            "bound {} = {:.3} with C = {}: {}",
            b.formula,
            b.bound,
            b.constant,
            if b.holds { "holds" } else { "violated" }
        );
    }
    Ok(summary)
}

fn parse_param(param: &str) -> Result<(&str, Vec<&str>)> {
    let Some((name, values)) = param.split_once('=') else {
        bail!("--param must look like name=v1,v2,...");
    };
    let values: Vec<&str> = values.split(',').filter(|v| !v.is_empty()).collect();
    if name.is_empty() || values.is_empty() {
        bail!("--param needs a name and at least one value");
    }
    Ok((name, values))
}

fn sanitize(value: &str) -> String {
    value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn lower_bound(instance: Instance, horizon: usize, seeds: u64, out: Option<PathBuf>) -> Result<()> {
    if horizon == 0 || seeds == 0 {
        bail!("--T and --seeds must be positive");
    }
    let config = match instance {
        Instance::Thm3 => thm3_config(horizon, seeds),
        Instance::Blocking => blocking_config(20, 16, horizon, seeds),
        Instance::Hardclass => hard_class_config(20, horizon, seeds),
    };
    let mut config = config;
    config.keep_rounds = out.is_some();
    let runs = run(&config)?;
    let summary = aggregate(&config, &runs);
    if let Some(dir) = &out {
        write_outputs(dir, &runs, &summary)?;
    }
    let m = summary.regret.mean;
    println!(
        "mean regret {m:.3} (std {:.3}) over {seeds} seeds",
        summary.regret.std
    );
    match instance {
        Instance::Thm3 => {
            let worst = summary
                .oracle_square_loss_regret
                .map_or(f64::NAN, |s| s.max);
            println!(
                "oracle square-loss regret (max over seeds) {worst}; regret / T = {:.3}",
                m / horizon as f64
            );
        }
        Instance::Blocking => {
            let d = summary.total_delay.mean;
            let reference = (d * 16f64.ln()).sqrt();
            println!(
                "sqrt(D ln N) = {reference:.3} (D = {d}); regret / sqrt(D ln N) = {:.3}",
                m / reference
            );
        }
        Instance::Hardclass => {
            let reference = (2.0 * horizon as f64 * 16f64.ln()).sqrt();
            println!(
                "sqrt(K T ln|F|) = {reference:.3}; regret / sqrt(K T ln|F|) = {:.3}",
                m / reference
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let dir = output_dir(out, &cfg);
            run_and_write(&cfg, &dir)?;
        }
        Command::Sweep { config, param, out } => {
            let base = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let (name, values) = parse_param(&param)?;
            let root = output_dir(out, &base);
            for v in values {
                let cfg = base.with_param(name, v)?;
                let dir = root.join(format!("{}={}", sanitize(name), sanitize(v)));
                print!("{name}={v}: ");
                run_and_write(&cfg, &dir)?;
            }
        }
        Command::Check { suite } => {
            let outcomes = suites::run_suite(&suite)?;
            for o in &outcomes {
                println!("{o}");
            }
            if outcomes.iter().any(|o| !o.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::LowerBound {
            instance,
            horizon,
            seeds,
            out,
        } => lower_bound(instance, horizon, seeds, out)?,
    }
    Ok(ExitCode::SUCCESS)
}
