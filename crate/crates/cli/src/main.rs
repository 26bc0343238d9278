//! `reidbias`: generate synthetic data, train bias-reducing or
//! bias-enhancing branches, embed, and audit the embeddings.

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use settings::{keys_help, Overrides, Settings};

#[derive(Parser)]
#[command(name = "reidbias", version, about = "Bias-controlled metric learning for re-identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Key-value config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed for every random stream of the run.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with query/gallery split.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Generator preset: default, preset-pose2, preset-cam6, preset-part3.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Train one branch and write its checkpoint and log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = ["reduce", "enhance"])]
        mode: Option<String>,
        /// Bias channel of the bias loss.
        #[arg(long)]
        channel: Option<String>,
    },
    /// Embed query and gallery rows; several checkpoints are concatenated.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
    },
    /// Ranking metrics, bias curves and probes of an embedding CSV.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = ["standard", "nobias"])]
        protocol: Option<String>,
        /// Channel excluded by nobias and reported on.
        #[arg(long)]
        channel: Option<String>,
    },
    /// Bias probe accuracy of an embedding CSV.
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        channel: Option<String>,
    },
    /// Same-bias rank curves and their nauc.
    Stats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        channel: Option<String>,
        #[arg(long, value_parser = ["standard", "nobias"])]
        protocol: Option<String>,
    },
    /// Train, embed and evaluate one branch per bias weight.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated bias weights.
        #[arg(long, value_delimiter = ',', default_value = "0.005,0.01,0.05,0.1")]
        lambdas: Vec<f64>,
        #[arg(long, value_parser = ["reduce", "enhance"])]
        mode: Option<String>,
        #[arg(long)]
        channel: Option<String>,
    },
}

fn overrides(common: &Common) -> Overrides {
    Overrides {
        seed: common.seed,
        ..Overrides::default()
    }
}

fn run(cmd: Command) -> reidbias::Result<()> {
    let resolve = |c: &Common, ov: Overrides| Settings::resolve(c.config.as_deref(), &ov);
    match cmd {
        Command::Gen { common, preset } => {
            let s = resolve(&common, Overrides { preset, ..overrides(&common) })?;
            commands::gen(&s, &common.out)?;
        }
        Command::Train { common, data, mode, channel } => {
            let s = resolve(&common, Overrides { mode, channel, ..overrides(&common) })?;
            commands::train(&s, &data, &common.out)?;
        }
        Command::Embed { common, data, checkpoints } => {
            let s = resolve(&common, overrides(&common))?;
            commands::embed(&s, &checkpoints, &data, &common.out)?;
        }
        Command::Eval { common, data, protocol, channel } => {
            let s = resolve(&common, Overrides { protocol, channel, ..overrides(&common) })?;
            commands::eval(&s, &data, &common.out)?;
        }
        Command::Probe { common, data, channel } => {
            let s = resolve(&common, Overrides { channel, ..overrides(&common) })?;
            commands::probe(&s, &data, &common.out)?;
        }
        Command::Stats { common, data, channel, protocol } => {
            let s = resolve(&common, Overrides { protocol, channel, ..overrides(&common) })?;
            commands::stats(&s, &data, &common.out)?;
        }
        Command::Sweep { common, data, lambdas, mode, channel } => {
            let s = resolve(&common, Overrides { mode, channel, ..overrides(&common) })?;
            commands::sweep(&s, &lambdas, &data, &common.out)?;
        }
    }
    Ok(())
}

/// `error kind=<tag> message=<json string>` on one line.
fn error_line(kind: &str, message: &str) -> String {
    let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("error kind={kind} message={}", serde_json::to_string(&flat).expect("string"))
}

fn main() -> ExitCode {
    let keys = keys_help();
    let mut cmd = Cli::command().after_long_help(keys.clone());
    for name in ["gen", "train", "embed", "eval", "probe", "stats", "sweep"] {
        let keys = keys.clone();
        cmd = cmd.mut_subcommand(name, move |s| s.after_help(keys));
    }
    let matches = match cmd.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", error_line("usage", &e.to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
