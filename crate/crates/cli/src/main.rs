use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use umab::experiment::{load_config, run_experiment};
use umab::simulator::regret_ratio;
use umab::{BernoulliEnvironment, EnsembleSummary};

/// Unimodal bandit experiments on graphs.
#[derive(Parser)]
#[command(name = "umab", version)]
struct Cli {
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config or a previous manifest.json
    Run {
        config: PathBuf,
        /// Output directory; overrides `output` in the config
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Final-round regret ratio of two summary CSVs
    Ratio {
        numerator: PathBuf,
        denominator: PathBuf,
    },
    /// Asymptotic lower-bound constant of an environment file
    Bound { environment: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        anyhow::ensure!(threads > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Run { config, output } => {
            let cfg = load_config(&config)?;
            let dir = output.or_else(|| cfg.output.clone()).unwrap_or_else(|| {
                PathBuf::from("results").join(cfg.name.as_deref().unwrap_or("experiment"))
            });
            let report = run_experiment(&cfg, &dir)?;
            print!("{}", std::fs::read_to_string(dir.join("table.csv"))?);
            eprintln!(
                "wrote {} summaries to {}",
                report.results.len(),
                dir.display()
            );
        }
        Command::Ratio {
            numerator,
            denominator,
        } => {
            let a = EnsembleSummary::read_csv(&numerator)?;
            let b = EnsembleSummary::read_csv(&denominator)?;
            let r = regret_ratio(&a, &b)
                .with_context(|| format!("{} / {}", numerator.display(), denominator.display()))?;
            println!("{:.4} +/- {:.4}", r.ratio, r.half_width_95);
        }
        Command::Bound { environment } => {
            let env = BernoulliEnvironment::load(&environment)?;
            let best = env.optimal_index();
            println!("lower_bound_constant {}", env.lower_bound_constant());
            println!("optimal_arm {}", best + 1);
            println!("optimal_neighbors {}", env.graph().degree(best));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
