//! `tunelab`: pretrain, personalize, generate, transfer, evaluate and report.
//!
//! Exit codes: 0 success, 1 failure or partial failure, 2 configuration
//! error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;

/// A configuration or usage error; exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Parser)]
#[command(name = "tunelab", version, about = "Desk-scale text-to-music personalization lab")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set pretrain.steps=500`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Root seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the diffusion model and the text tower on the synthetic corpus.
    Pretrain(commands::PretrainArgs),
    /// Personalize a pretrained model on one manifest concept.
    Personalize(commands::PersonalizeArgs),
    /// Sample clips from a prompt.
    Generate(commands::GenerateArgs),
    /// Shallow-reverse style transfer of a WAV toward a prompt.
    Transfer(commands::TransferArgs),
    /// Run the (concept x config) experiment over a manifest and write a report.
    Evaluate(commands::EvaluateArgs),
    /// Summarize or convert a JSON report.
    Report(commands::ReportArgs),
    /// Render a manifest's fixture concepts to WAV files.
    Fixtures(commands::FixturesArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<tunelab::Error>() {
            if matches!(e, tunelab::Error::Config(_) | tunelab::Error::Load { .. }) {
                return 2;
            }
        }
    }
    1
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let mut cfg = config::load_config(cli.config.as_deref(), &cli.set).map_err(|e| ConfigError(format!("{e:#}")))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Pretrain(a) => commands::pretrain(&cfg, a),
        Command::Personalize(a) => commands::personalize_cmd(&cfg, a),
        Command::Generate(a) => commands::generate(&cfg, a),
        Command::Transfer(a) => commands::transfer(&cfg, a),
        Command::Evaluate(a) => commands::evaluate(&cfg, a),
        Command::Report(a) => commands::report(&cfg, a),
        Command::Fixtures(a) => commands::fixtures(&cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(n)) => {
            eprintln!("error: {n} cell(s) failed; the report is partial");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
