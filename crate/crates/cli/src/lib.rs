//! Command-line pipeline around `ctc_rescore`: synthetic data, LM
//! training, decoding, rescoring, tuning, task generation and evaluation.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error,
//! 3 scorer error.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use ctc_rescore::scorer::ScorerError;

pub mod commands;
pub mod config;
pub mod manifest;
pub mod stages;

use config::{Config, ConfigErrors};
use stages::Ctx;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SCORER: i32 = 3;

/// A mistake in how the tool was invoked, as opposed to bad data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "ctc-rescore",
    version,
    about = "CTC beam search, N-best rescoring and evaluation"
)]
pub struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads (0: one per core). Overrides `workers`.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic corpus, its logits and vocabulary.
    Synth,
    /// Train the fusion LM and the reference scorer LM on the train split.
    TrainLm,
    /// Random search over the fusion weights on the eval split.
    TuneBeam,
    /// Beam search over a split, writing N-best lists.
    Decode {
        #[arg(long, default_value = "eval")]
        split: String,
    },
    /// Oracle candidates of decoded N-best lists.
    Oracle {
        #[arg(long, default_value = "eval")]
        split: String,
    },
    /// Grid search for the interpolation weight on the eval split.
    TuneGamma,
    /// Rerank decoded N-best lists with the scorer.
    Rescore {
        #[arg(long, default_value = "eval")]
        split: String,
    },
    /// Fine-tuning and evaluation data for external scorers.
    GenTasks,
    /// Baseline, rescored and oracle WER; `--split test` uses eval-tuned
    /// settings and never tunes.
    Eval {
        #[arg(long, default_value = "eval")]
        split: String,
        /// Also score a pairwise task file with the scorer.
        #[arg(long)]
        pairwise: Option<PathBuf>,
    },
    /// Results table, WER-versus-gamma curve and length-binned WER.
    Report {
        #[arg(long, default_value = "eval")]
        split: String,
    },
    /// Validate the configuration and print its effective values.
    CheckConfig,
    /// Print a configuration template listing every key.
    Template,
    /// Answer scorer protocol requests on stdin with an ARPA model.
    Serve {
        #[arg(long)]
        lm: PathBuf,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| UsageError("this command needs --config".into()))?;
    let mut cfg = Config::load(path)?;
    let mut errors = Vec::new();
    for kv in &cli.overrides {
        if let Err(e) = cfg.apply_override(kv) {
            errors.push(format!("--set: {e}"));
        }
    }
    if let Some(w) = cli.workers {
        cfg.set("workers", &w.to_string()).expect("known key");
    }
    cfg.apply_env();
    if let Err(e) = cfg.validate() {
        errors.extend(e.0);
    }
    if !errors.is_empty() {
        return Err(ConfigErrors(errors).into());
    }
    Ok(cfg)
}

fn init_workers(n: usize) {
    if n > 0 {
        // Fails only if the pool already exists, e.g. in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Template => {
            print!("{}", config::template());
            return Ok(());
        }
        Command::Serve { lm } => return commands::serve(lm),
        _ => {}
    }
    let cfg = load_config(cli)?;
    init_workers(cfg.workers());
    let mut ctx = Ctx::new(cfg);
    match &cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::TrainLm => commands::train_lm(&ctx),
        Command::TuneBeam => commands::tune_beam(&ctx),
        Command::Decode { split } => commands::decode_cmd(&ctx, split),
        Command::Oracle { split } => commands::oracle_cmd(&ctx, split),
        Command::TuneGamma => commands::tune_gamma(&ctx),
        Command::Rescore { split } => commands::rescore_cmd(&ctx, split),
        Command::GenTasks => commands::gen_tasks(&ctx),
        Command::Eval { split, pairwise } => commands::eval_cmd(&mut ctx, split, pairwise.as_deref()),
        Command::Report { split } => commands::report(&mut ctx, split),
        Command::CheckConfig => {
            for (k, v) in ctx.cfg.effective() {
                println!("{k} = {v}");
            }
            println!("# hash {}", ctx.cfg.hash());
            Ok(())
        }
        Command::Template | Command::Serve { .. } => unreachable!(),
    }
}

/// Exit status for an error, from the first recognised cause.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<ConfigErrors>() {
            return EXIT_USAGE;
        }
        if cause.is::<ScorerError>() {
            return EXIT_SCORER;
        }
    }
    EXIT_DATA
}

/// Parses arguments, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
