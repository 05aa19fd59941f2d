use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cited_cli::commands::{cmd_attack, cmd_bounds, cmd_gen_data, cmd_pipeline, cmd_train, cmd_verify};
use cited_cli::{CliError, ExperimentConfig, Layout};

#[derive(Parser)]
#[command(name = "cited", version, about = "Boundary-signature ownership verification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output_dir` from the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed; the CITED_SEED environment variable takes precedence
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate (or copy in) the dataset
    GenData,
    /// Train the target, build and freeze its signature
    Train,
    /// Train surrogate and independent model pools
    Attack,
    /// Score the pools and write reports, curves and the summary
    Verify,
    /// Run the perturbation bound checks
    Bounds,
    /// All of the above in order
    Pipeline,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config {
        field: "--config".into(),
        message: "a config file is required".into(),
    })?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Ok(s) = std::env::var("CITED_SEED") {
        cfg.master_seed = s.trim().parse().map_err(|_| CliError::Config {
            field: "CITED_SEED".into(),
            message: format!("not an unsigned integer: {s}"),
        })?;
    }
    let layout = Layout::new(cli.out.unwrap_or_else(|| cfg.output_dir.clone()));
    match cli.command {
        Command::GenData => cmd_gen_data(&cfg, &layout),
        Command::Train => cmd_train(&cfg, &layout),
        Command::Attack => cmd_attack(&cfg, &layout),
        Command::Verify => cmd_verify(&cfg, &layout).map(|outcomes| {
            for o in outcomes {
                println!(
                    "{} {}: aruc {:.4} auc {:.4}",
                    o.level,
                    o.kind.as_str(),
                    o.report.aruc,
                    o.report.auc
                );
            }
        }),
        Command::Bounds => cmd_bounds(&cfg, &layout).map(|b| {
            let p = &b.perturbation;
            println!(
                "max deviation {:.6} vs bound {:.6} ({} violations in {} trials)",
                p.max_observed_deviation, p.delta_g, p.violations, p.trials
            );
        }),
        Command::Pipeline => cmd_pipeline(&cfg, &layout),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
