use std::path::PathBuf;
use std::process::ExitCode;

use bonsai_cli::commands::{cmd_bank, cmd_mcq, cmd_score};
use bonsai_cli::serve::{serve, AppState, BackendSource};
use bonsai_cli::setup::Setup;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bonsai", version, about = "Entailment-tree reasoning over grounded evidence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Mock script for the backend named `mock`.
    #[arg(long, global = true)]
    backend_script: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract an evidence bank from the sources in a manifest.
    Bank {
        manifest: PathBuf,
        /// Question guiding extraction; overrides the manifest's.
        #[arg(long)]
        question: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Decompose and score one hypothesis against a bank.
    Score {
        hypothesis: String,
        #[arg(long)]
        bank: PathBuf,
        /// Task question used as the anchor description.
        #[arg(long)]
        question: Option<String>,
        /// Where to write the run document.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Answer a multiple-choice question file.
    Mcq {
        file: PathBuf,
        /// Where to write the run document.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Serve the run documents in a directory over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        state_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn setup(common: &Common) -> bonsai_core::Result<Setup> {
    Setup::load(common.config.as_deref(), common.backend_script.as_deref())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("BONSAI_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let result: anyhow::Result<String> = match Cli::parse().command {
        Command::Bank { manifest, question, out, common } => setup(&common)
            .and_then(|s| cmd_bank(&s, &manifest, question.as_deref(), &out))
            .map_err(Into::into),
        Command::Score { hypothesis, bank, question, out, common } => setup(&common)
            .and_then(|s| cmd_score(&s, &hypothesis, &bank, question.as_deref(), out.as_deref()))
            .map_err(Into::into),
        Command::Mcq { file, out, common } => setup(&common)
            .and_then(|s| cmd_mcq(&s, &file, out.as_deref()))
            .map_err(Into::into),
        Command::Serve { addr, state_dir, common } => match setup(&common) {
            Ok(s) if state_dir.is_dir() => serve(&addr, AppState::new(state_dir, BackendSource::Registry(Box::new(s))))
                .await
                .map(|()| String::new())
                .map_err(Into::into),
            Ok(_) => Err(anyhow::anyhow!("state directory {} does not exist", state_dir.display())),
            Err(e) => Err(e.into()),
        },
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
