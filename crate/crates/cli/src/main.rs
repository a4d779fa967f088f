//! `forler`: dataset generation, training, ablations and bound checks.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use forler_core::harness::{self, parse_seeds, ExperimentConfig, Study};
use forler_core::Error;

#[derive(Parser)]
#[command(name = "forler", version, about = "Federated offline RL experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seeds; defaults to the config's `seeds`.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write device and server datasets as .ford files plus CSV copies.
    GenData(Common),
    /// Train one algorithm per seed; writes logs and checkpoints.
    Train(Common),
    /// Run a paired study and write summary CSVs.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// delta_sweep, rectification_onoff, pollution, alpha_grid or device_count.
        /// Overrides `ablation.study` in the config.
        #[arg(long)]
        study: Option<String>,
    },
    /// Evaluate the safe-improvement bound over an (alpha, eta) grid.
    Verify(Common),
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, Vec<u64>), Failure> {
    let cfg = ExperimentConfig::load(&common.config).map_err(|e| Failure::Config(e.to_string()))?;
    let seeds = match &common.seeds {
        Some(list) => parse_seeds(list).map_err(|e| Failure::Config(e.to_string()))?,
        None => cfg.seeds.clone(),
    };
    Ok((cfg, seeds))
}

fn run(cli: Cli) -> Result<(), Failure> {
    harness::init_threads_from_env().map_err(|e| Failure::Config(e.to_string()))?;
    match cli.command {
        Command::GenData(common) => {
            let (cfg, seeds) = load(&common)?;
            let files = harness::gen_data(&cfg, &common.out, &seeds).map_err(Failure::runtime)?;
            println!("wrote {} datasets to {}", files.len(), common.out.display());
        }
        Command::Train(common) => {
            let (cfg, seeds) = load(&common)?;
            let runs = harness::train(&cfg, &common.out, &seeds).map_err(Failure::runtime)?;
            for r in runs {
                println!(
                    "{} seed {}: final global return {:.4} ({})",
                    r.algorithm,
                    r.seed,
                    r.final_global_return,
                    r.log_path.display()
                );
            }
        }
        Command::Ablate { common, study } => {
            let (cfg, seeds) = load(&common)?;
            let study: Study = match study {
                Some(name) => name.parse().map_err(|e: Error| Failure::Config(e.to_string()))?,
                None => cfg
                    .ablation
                    .study
                    .ok_or_else(|| Failure::Config("no study given (use --study or ablation.study)".into()))?,
            };
            let arms = harness::ablate(&cfg, study, &common.out, &seeds).map_err(Failure::runtime)?;
            for arm in arms {
                let (mean, std) = arm.mean_std_final();
                println!("{} {}: {mean:.4} ± {std:.4}", study.as_str(), arm.arm);
            }
            println!("summary: {}", common.out.join(harness::SUMMARY_FILE).display());
        }
        Command::Verify(common) => {
            let (cfg, seeds) = load(&common)?;
            let tables = harness::verify(&cfg, &common.out, &seeds).map_err(Failure::runtime)?;
            for t in tables {
                let holds = t.cells.iter().filter(|c| c.outcome.report().is_some_and(|r| r.holds)).count();
                println!(
                    "seed {}: {} cells, bound holds in {holds} ({})",
                    t.seed,
                    t.cells.len(),
                    Path::new(&common.out).join(harness::bound_file_name(t.seed)).display()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
