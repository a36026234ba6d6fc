//! `purge`: build a base model, build a forget corpus, unlearn, evaluate and
//! verify the theoretical bounds, all from one run configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use purge_core::ErrorClass;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(purge_core::Error),
    Verification(String),
}

impl From<purge_core::Error> for CliError {
    fn from(e: purge_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            },
            CliError::Verification(_) => 5,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "purge", version, about = "Unlearning as a verifiable reward on a toy policy")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration field, e.g. `--set train.mix_alpha=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Root seed (same as `--set seed=N`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (same as `--set paths.out_dir=DIR`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Dataset file (same as `--set paths.dataset=FILE`).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Purge,
    Ga,
    Dpo,
    Npo,
    Rt,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Purge => "purge",
            Method::Ga => "ga",
            Method::Dpo => "dpo",
            Method::Npo => "npo",
            Method::Rt => "rt",
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the standard toy-world dataset.
    MakeFixture,
    /// Train the base model on the dataset's training split.
    BuildBase,
    /// Probe the base model and extract the forget corpus for the target.
    BuildForget {
        /// Unlearning target (defaults to the configured one).
        #[arg(long)]
        target: Option<String>,
    },
    /// Unlearn the target with PURGE or a baseline.
    Unlearn {
        #[arg(long, value_enum)]
        method: Method,
    },
    /// Score checkpoints against the base model.
    Evaluate {
        /// Checkpoints to evaluate; the base model is always included first.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Also score the base model behind the in-context guardrail prompt.
        #[arg(long)]
        icu: bool,
    },
    /// Check a run against the suppression, Pinsker, Hoeffding and regret bounds.
    Verify {
        /// Training trace of the run.
        #[arg(long)]
        trace: PathBuf,
        /// Checkpoints to check with the Pinsker bound.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Also run the regret-to-retraining experiment.
        #[arg(long)]
        regret: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(dir) = &cli.out_dir {
        overrides.push(format!("paths.out_dir={}", toml::Value::String(dir.display().to_string())));
    }
    if let Some(ds) = &cli.dataset {
        overrides.push(format!("paths.dataset={}", toml::Value::String(ds.display().to_string())));
    }
    let cfg = config::RunConfig::load(cli.config.as_deref(), &overrides)?;
    std::fs::create_dir_all(&cfg.paths.out_dir).map_err(purge_core::Error::from)?;
    match cli.command {
        Command::MakeFixture => commands::make_fixture(&cfg),
        Command::BuildBase => commands::build_base(&cfg),
        Command::BuildForget { target } => {
            let mut cfg = cfg;
            if let Some(t) = target {
                cfg.target = t;
            }
            commands::build_forget(&cfg)
        }
        Command::Unlearn { method } => commands::unlearn(&cfg, method),
        Command::Evaluate { checkpoints, icu } => commands::evaluate_cmd(&cfg, &checkpoints, icu),
        Command::Verify { trace, checkpoints, regret } => commands::verify(&cfg, &trace, &checkpoints, regret),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
