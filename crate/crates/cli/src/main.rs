use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use prmf_cli::commands;
use prmf_cli::report::summary_text;
use prmf_cli::config::{Method, Overrides, RunConfig};
use prmf_cli::CliError;
use prmf_core::ingest::RatingFormat;

#[derive(Parser)]
#[command(name = "prmf", version, about = "Train and evaluate probabilistic relational matrix factorization models")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "prmf.toml")]
    config: PathBuf,

    /// Ratings file format, overriding the config.
    #[arg(long, global = true, value_parser = parse_format)]
    dataset_format: Option<RatingFormat>,

    #[arg(long, global = true)]
    method: Option<Method>,

    /// Sparsity weight; repeat to give a sweep grid.
    #[arg(long, global = true)]
    gamma: Vec<f64>,

    /// Seed; repeat to run several seeds.
    #[arg(long, global = true)]
    seed: Vec<u64>,

    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the ratings per seed and build cached priors.
    Prepare,
    /// Train every seed and write checkpoints and reports.
    Train,
    /// Score saved checkpoints on the prepared test splits.
    Evaluate,
    /// Train one model per gamma and report sparsity against error.
    Sweep,
}

fn parse_format(s: &str) -> Result<RatingFormat, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        method: cli.method,
        dataset_format: cli.dataset_format,
        gamma: cli.gamma,
        seed: cli.seed,
        jobs: cli.jobs,
        output_dir: cli.output_dir,
    };
    let cfg = RunConfig::load(&cli.config, &overrides)?;
    match cli.command {
        Command::Prepare => {
            for p in commands::cmd_prepare(&cfg)? {
                println!("seed {}: train={} validation={} test={}", p.seed, p.sizes[0], p.sizes[1], p.sizes[2]);
            }
        }
        Command::Train => print!("{}", summary_text(&commands::cmd_train(&cfg)?)),
        Command::Evaluate => print!("{}", summary_text(&commands::cmd_evaluate(&cfg)?)),
        Command::Sweep => {
            for (seed, points) in commands::cmd_sweep(&cfg)? {
                for p in points {
                    match p.outcome {
                        Ok(m) => println!("seed {seed} gamma {}: sparsity {:.4} rmse {:.4} mae {:.4}", p.gamma, m.sparsity, m.rmse, m.mae),
                        Err(e) => println!("seed {seed} gamma {}: failed: {e}", p.gamma),
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
