//! `ruie` — operator surface for the multi-scenario recommendation lab:
//! synthetic data generation, log ingestion, training (with ablation
//! switches), full-ranking evaluation, the ablation suite and gradient
//! verification.
//!
//! Exit codes: 0 success, 1 verification failure (gradient check, training
//! abort), 2 usage/config error, 3 data error.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ruie_core::Error;

#[derive(Parser)]
#[command(name = "ruie", version, about = "Multi-scenario recommendation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct TrainOverrides {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of training epochs.
    #[arg(long)]
    epochs: Option<u32>,
    /// Ablation: replace multi-head attention by mean pooling.
    #[arg(long)]
    no_mha: bool,
    /// Ablation: disable the confidence gate.
    #[arg(long)]
    no_gate: bool,
    /// Ablation: disable the scenario-aware user intent module.
    #[arg(long)]
    no_suim: bool,
    /// Sequence encoder: nextitnet or gru.
    #[arg(long)]
    encoder: Option<String>,
    /// ReLU on the intent head output layer (paper-literal mode).
    #[arg(long)]
    strict_relu: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-scenario interaction log.
    Synth {
        /// Config file with a [synth] section.
        #[arg(long)]
        config: PathBuf,
        /// Output records file (CSV).
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse a log, densify ids, build windows and write the splits.
    Ingest {
        /// Input records file (CSV with header).
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Optional config file providing [train] history_len.
        #[arg(long)]
        config: Option<PathBuf>,
        /// History window length (overrides config).
        #[arg(long)]
        history_len: Option<usize>,
    },
    /// Train a model on a records file.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Config file with a [train] section (defaults apply if omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint instead of initializing.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Evaluate a checkpoint with full-ranking NDCG@K.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated K values.
        #[arg(long, default_value = "5,10,15,20")]
        k: String,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        /// Config file with a [train] section (tiny default if omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Fault injection: corrupt this parameter group's analytic
        /// gradient by 10% and expect the harness to flag it.
        #[arg(long)]
        inject_fault: Option<String>,
    },
    /// Train and evaluate the four ablation variants and print the
    /// comparison table.
    Ablation {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Schema(_) => 2,
        Error::Verification(_) | Error::Training(_) => 1,
        Error::Data(_)
        | Error::Shape(_)
        | Error::Index(_)
        | Error::Sampling(_)
        | Error::Checkpoint(_)
        | Error::Io { .. } => 3,
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("RUIE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { config, out, seed } => run::cmd_synth(&config, &out, seed),
        Command::Ingest {
            data,
            out,
            config,
            history_len,
        } => run::cmd_ingest(&data, &out, config.as_deref(), history_len),
        Command::Train {
            data,
            config,
            out,
            resume,
            overrides,
        } => run::cmd_train(&data, config.as_deref(), &out, resume.as_deref(), &overrides),
        Command::Eval {
            checkpoint,
            data,
            out,
            k,
        } => run::cmd_eval(&checkpoint, &data, &out, &k),
        Command::Gradcheck {
            config,
            tolerance,
            inject_fault,
        } => run::cmd_gradcheck(config.as_deref(), tolerance, inject_fault.as_deref()),
        Command::Ablation {
            data,
            config,
            out,
            seed,
        } => run::cmd_ablation(&data, config.as_deref(), &out, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
