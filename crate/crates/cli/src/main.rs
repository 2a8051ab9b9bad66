//! `pclprompt`: split, augment, train, predict and evaluate from a config.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 training failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcl_prompt::pipeline::{self, RunConfig};
use pcl_prompt::Error;

#[derive(Parser)]
#[command(name = "pclprompt", version, about = "Prompt-based paragraph classification")]
struct Cli {
    /// Flat `key = value` config file; `PCLP_<KEY>` variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `cls|prompt[,ensemble][,rdrop][,eda]`
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Extra `key=value` override, applied last. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the fold manifest.
    Split,
    /// Write the dataset plus EDA copies.
    Augment,
    /// Train one model per fold (fold 0 only without the ensemble).
    Train,
    /// Predict with the fold ensemble.
    Predict {
        /// Dataset to predict; defaults to the configured dataset.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Defaults to `<out>/predictions.tsv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a predictions file.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        /// `id<TAB>label` file; defaults to the configured dataset's labels.
        #[arg(long)]
        gold: Option<PathBuf>,
    },
}

const USAGE: u8 = 1;
const DATA: u8 = 2;
const TRAINING: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::OutOfRange { .. } | Error::Template { .. } => USAGE,
        Error::Training(_) => TRAINING,
        _ => DATA,
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::resolve(cli.config.as_deref(), std::env::vars())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(k) = cli.folds {
        cfg.folds = k;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = &cli.strategy {
        cfg.strategy = s.parse()?;
    }
    for kv in &cli.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<(), Error> {
    match &cli.command {
        Command::Split => println!("{}", pipeline::cmd_split(cfg)?.display()),
        Command::Augment => println!("{}", pipeline::cmd_augment(cfg)?.display()),
        Command::Train => println!("{}", serde_json::to_string_pretty(&pipeline::cmd_train(cfg)?)?),
        Command::Predict { input, output } => {
            println!("{}", pipeline::cmd_predict(cfg, input.as_deref(), output.as_deref())?.display())
        }
        Command::Evaluate { pred, gold } => {
            println!("{}", pipeline::cmd_evaluate(cfg, pred, gold.as_deref())?.to_json()?)
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(USAGE);
        }
    };
    match run(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
