//! `riskbench`: runs the risk modelling pipeline from a JSON run configuration.

mod artifacts;
mod config;
mod pipeline;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use riskbench_core::Learner;

use crate::artifacts::MissingArtifact;
use crate::config::{GridChoice, Loaded};
use crate::pipeline::Pipeline;

/// A problem with the configuration or the pipeline state, reported with exit code 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Debug, Parser)]
#[command(name = "riskbench", version, about = "Interpretable mortality risk modelling pipeline")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(short, long, global = true, default_value = "riskbench.json")]
    config: PathBuf,
    /// Worker threads for tuning and attribution.
    #[arg(long, global = true, env = "RISKBENCH_THREADS")]
    threads: Option<usize>,
    /// Log JSON lines to stderr.
    #[arg(long, global = true)]
    json: bool,
    /// Log only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw the synthetic cohort.
    Synth {
        /// Overrides `seeds.synth`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank a hyperparameter grid by repeated cross-validation.
    Tune {
        /// Use the published grid of a learner (lr, svm, rf, gbt).
        #[arg(long, value_name = "LEARNER")]
        paper_grid: Option<Learner>,
        /// List the grid without fitting anything.
        #[arg(long)]
        enumerate_only: bool,
    },
    /// Fit the configured (or best tuned) model on the training split.
    Train,
    /// Held-out discrimination, intervals and the GRACE comparison.
    Evaluate,
    /// Shapley attributions, plots and subgroup importances.
    Explain,
    /// SHAP versus Cox marker grid per subgroup.
    Compare,
    /// Every enabled stage in order.
    Run,
}

fn init_logging(json: bool, quiet: bool) {
    let level = if quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    let mut builder = env_logger::Builder::new();
    builder.filter_level(level).parse_env("RISKBENCH_LOG");
    if json {
        builder.format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().as_str(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    } else {
        builder.format(|buf, record| writeln!(buf, "[{}] {}", record.level(), record.args()));
    }
    builder.init();
}

/// Exit code 1 for bad configuration, input or pipeline state, 2 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    use riskbench_core::Error as E;
    for cause in err.chain() {
        if cause.is::<Invalid>() || cause.is::<MissingArtifact>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Malformed { .. }
                | E::DuplicateEpisode(_)
                | E::MissingColumn(_)
                | E::InvalidSpec(_)
                | E::InvalidConfig(_)
                | E::ColumnMismatch(_)
                | E::Grace(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = Loaded::read(&cli.config).map_err(|e| Invalid(format!("{e:#}")))?;
    match &cli.command {
        Command::Synth { seed: Some(s) } => cfg.config.seeds.synth = *s,
        Command::Tune { paper_grid: Some(l), .. } => cfg.config.grid = Some(GridChoice::Paper(*l)),
        _ => {}
    }
    cfg.validate().map_err(|e| Invalid(format!("{e:#}")))?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let pipeline = Pipeline::new(cfg);
    log::info!("config hash {}", pipeline.out.stamp.config_hash);
    match cli.command {
        Command::Synth { .. } => pipeline.synth(),
        Command::Tune { enumerate_only, .. } => pipeline.tune(enumerate_only),
        Command::Train => pipeline.train(),
        Command::Evaluate => pipeline.evaluate(),
        Command::Explain => pipeline.explain(),
        Command::Compare => pipeline.compare(),
        Command::Run => pipeline.run(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging(cli.json, cli.quiet);
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
