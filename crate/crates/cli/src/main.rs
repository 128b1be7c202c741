use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use trafficmetric::mining::NegativeStrategy;
use trafficmetric_cli::{cmd_eval, cmd_gen, cmd_mine, cmd_project, cmd_train, metrics_path, say, CliError, RunConfig};

/// Metric learning for traffic scenarios.
///
/// Exit codes: 0 success, 1 usage or config error, 2 runtime error.
#[derive(Parser)]
#[command(name = "trafficmetric", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Random,
    Group,
    RandomExcl,
}

impl From<Strategy> for NegativeStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Random => NegativeStrategy::Random,
            Strategy::Group => NegativeStrategy::Group,
            Strategy::RandomExcl => NegativeStrategy::RandomExcl,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// TOML run config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the global seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self, strategy: Option<Strategy>) -> Result<RunConfig, CliError> {
        RunConfig::load_or_default(self.config.as_deref())?.resolve(self.seed, strategy.map(Into::into))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the network; writes a checkpoint and a metrics CSV next to it.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
    },
    /// Evaluate a checkpoint and write the JSON report.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a 2-D PCA projection of the embeddings as CSV.
    Project {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump one mining pass of quadruplets as CSV.
    Mine {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { common, out } => {
            let config = common.resolve(None)?;
            for (level, n) in cmd_gen(&config, &out)? {
                say(format!("{}: {n} groups", level.tag()));
            }
            say(format!("dataset written to {}", out.display()));
        }
        Command::Train {
            common,
            dataset,
            out,
            strategy,
        } => {
            let config = common.resolve(strategy)?;
            cmd_train(&config, &dataset, &out, |m| {
                say(format!(
                    "epoch {:>3}  total {:.4}  ordering {:.3}",
                    m.epoch, m.total, m.ordering
                ))
            })?;
            say(format!(
                "checkpoint {} metrics {}",
                out.display(),
                metrics_path(&out).display()
            ));
        }
        Command::Eval {
            common,
            checkpoint,
            dataset,
            out,
        } => {
            let config = common.resolve(None)?;
            let report = cmd_eval(&config, &checkpoint, &dataset, &out)?;
            say(serde_json::to_string(&report).map_err(|e| CliError::Runtime(e.to_string()))?);
        }
        Command::Project { checkpoint, dataset, out } => {
            if cmd_project(&checkpoint, &dataset, &out)? {
                say("warning: embeddings have no variance; all coordinates are zero");
            }
            say(format!("projection written to {}", out.display()));
        }
        Command::Mine {
            common,
            dataset,
            out,
            strategy,
        } => {
            let config = common.resolve(strategy)?;
            let (quads, skipped) = cmd_mine(&config, &dataset, &out)?;
            say(format!("{} quadruplets, {} anchors skipped", quads.len(), skipped.len()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
