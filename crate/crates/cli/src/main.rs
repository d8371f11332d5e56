//! `mddx` — batch pipeline driver.
//!
//! Subcommands run one stage each against a working directory; stages read
//! their predecessors' artifacts and refuse to mix configurations. Exit
//! codes: 0 ok, 1 usage/config, 2 runtime.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CohortMode, RunConfig};
use stages::{DirLock, StageError};

#[derive(Parser)]
#[command(name = "mddx", version, about = "Synthetic MDD-diagnosis research pipeline")]
struct Cli {
    /// TOML run configuration; missing fields use built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Working directory override.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Force the deterministic mock oracles regardless of the config file.
    #[arg(long, global = true)]
    mock_oracle: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the cohort, apply the missingness filter, and emit QA pairs.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        prevalence: Option<f64>,
        /// `table1` or `separable`.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Re-apply the missingness filter to an existing cohort CSV.
    Filter {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Consensus-filter QA pairs and construct reasoning paths.
    Reason,
    /// Supervised training of the toy policy on the reasoning corpus.
    TrainSft {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// GRPO training from the SFT checkpoint (or the base with --from-base).
    TrainRl {
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        updates: Option<usize>,
        #[arg(long)]
        from_base: bool,
    },
    /// Evaluate trained variants and emit the report artifacts.
    Eval {
        #[arg(long)]
        n_eval: Option<usize>,
    },
    /// Verify artifacts and write the bundle manifest.
    Report,
}

fn effective_config(cli: &Cli) -> Result<RunConfig, StageError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(StageError::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out_dir) = &cli.out_dir {
        cfg.out_dir = out_dir.clone();
    }
    if cli.mock_oracle {
        cfg.oracle.mock = true;
    }
    // per-command flag precedence
    match &cli.command {
        Command::Synth { n, prevalence, mode } => {
            if let Some(n) = n {
                cfg.cohort.n = *n;
            }
            if let Some(p) = prevalence {
                cfg.cohort.prevalence = *p;
            }
            if let Some(mode) = mode {
                cfg.cohort.mode = match mode.as_str() {
                    "table1" => CohortMode::Table1,
                    "separable" => CohortMode::Separable,
                    other => {
                        return Err(StageError::Usage(format!(
                            "cohort.mode: unknown mode `{other}` (expected table1|separable)"
                        )))
                    }
                };
            }
        }
        Command::TrainSft { epochs, lr } => {
            if let Some(e) = epochs {
                cfg.sft.epochs = *e;
            }
            if let Some(lr) = lr {
                cfg.sft.lr = *lr;
            }
        }
        Command::TrainRl {
            beta,
            epsilon,
            lr,
            updates,
            ..
        } => {
            if let Some(b) = beta {
                cfg.grpo.kl_beta = *b;
            }
            if let Some(e) = epsilon {
                cfg.grpo.clip_eps = *e;
            }
            if let Some(lr) = lr {
                cfg.grpo.lr = *lr;
            }
            if let Some(u) = updates {
                cfg.grpo.updates = Some(*u);
            }
        }
        Command::Eval { n_eval } => {
            if let Some(n) = n_eval {
                cfg.eval.n_eval = *n;
            }
        }
        Command::Filter { .. } | Command::Reason | Command::Report => {}
    }
    cfg.validate().map_err(StageError::Usage)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), StageError> {
    let cfg = effective_config(cli)?;
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    match &cli.command {
        Command::Synth { .. } => stages::cmd_synth(&cfg),
        Command::Filter { input, threshold } => {
            stages::cmd_filter(&cfg, input.as_deref(), *threshold)
        }
        Command::Reason => stages::cmd_reason(&cfg),
        Command::TrainSft { .. } => stages::cmd_train_sft(&cfg),
        Command::TrainRl { from_base, .. } => stages::cmd_train_rl(&cfg, *from_base),
        Command::Eval { .. } => stages::cmd_eval(&cfg),
        Command::Report => stages::cmd_report(&cfg).map(|_| ()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(StageError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(StageError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
