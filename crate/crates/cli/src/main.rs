use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diresa::config::{self, RunConfig};
use diresa::pipeline;
use diresa::{CliError, Result};

/// Distance-regularized Siamese twin autoencoder benchmark pipeline.
#[derive(Parser, Debug)]
#[command(name = "diresa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "DIRESA_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the configured dataset as a binary dataset file.
    Generate(Common),
    /// Train every configured method and write checkpoints and histories.
    Train(Common),
    /// Compute KPI reports and p-values for trained methods.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoints to evaluate; defaults to the configured methods.
        checkpoints: Vec<PathBuf>,
    },
    /// Order latent components and export scatter data.
    Analyze {
        #[command(flatten)]
        common: Common,
        checkpoints: Vec<PathBuf>,
    },
    /// Generate, train, evaluate and analyze; write the summary table.
    Bench(Common),
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => config::load(p)?,
        None => config::parse("")?,
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Generate(c) | Command::Train(c) | Command::Bench(c) => c,
        Command::Evaluate { common, .. } | Command::Analyze { common, .. } => common,
    };
    let cfg = resolve(common)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::config("--threads", "must be positive"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::config("--threads", e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Generate(_) => {
            let o = pipeline::cmd_generate(&cfg)?;
            println!("{} ({}×{}) sha256 {}", o.path.display(), o.rows, o.cols, o.sha256);
            Ok(())
        }
        Command::Train(_) => {
            let o = pipeline::cmd_train(&cfg)?;
            for r in &o.runs {
                println!("{}: trained in {:.1} s", r.method, r.seconds);
            }
            Ok(())
        }
        Command::Evaluate { checkpoints, .. } => {
            let o = pipeline::cmd_evaluate(&cfg, checkpoints)?;
            for e in &o.evaluations {
                let corr = e.report.get(diresa_core::metrics::Kpi::Corr);
                println!("{}: mse {:.3e}, mean Corr {:.4}", e.label, e.mse, corr.mean);
            }
            Ok(())
        }
        Command::Analyze { checkpoints, .. } => {
            let o = pipeline::cmd_analyze(&cfg, checkpoints)?;
            for a in &o.analyses {
                println!(
                    "{}: component order {:?}, unexplained {:.4}",
                    a.label, a.ordering.permutation, a.ordering.unexplained_fraction
                );
            }
            Ok(())
        }
        Command::Bench(_) => {
            let o = pipeline::cmd_bench(&cfg)?;
            for r in &o.rows {
                println!("{}: {}", r.label, r.status);
            }
            println!("summary sha256 {}", o.summary_sha256);
            Ok(())
        }
    })
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
