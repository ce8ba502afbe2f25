use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pumpscope::config::PipelineConfig;
use pumpscope::pipeline::{self, MarketSource, PipelineError};

/// Pump-event measurement pipeline over exchange OHLCV data.
#[derive(Parser)]
#[command(name = "pumpscope", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON document)
    #[arg(long)]
    config: PathBuf,
    /// Override the replay manifest declared in the config
    #[arg(long, value_name = "MANIFEST")]
    replay: Option<PathBuf>,
    /// Use the configured live REST endpoints instead of the replay manifest
    #[arg(long)]
    live: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Extract pump events from the message logs
    Parse(Common),
    /// Clean events against listed pairs and discover listing dates
    Listings(Common),
    /// Fetch candle windows for every cleaned event into the store
    Fetch(Common),
    /// Compute impact statistics from the store
    Analyze(Common),
    /// Render the analysis results into the report bundle
    Report(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Parse(c)
            | Command::Listings(c)
            | Command::Fetch(c)
            | Command::Analyze(c)
            | Command::Report(c) => c,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = u8::try_from(err.exit_code()).unwrap_or(1);
            eprintln!("error: {:#}", anyhow::Error::new(err));
            ExitCode::from(code)
        }
    }
}

fn run(command: &Command) -> Result<(), PipelineError> {
    let common = command.common();
    let mut config = PipelineConfig::load(&common.config)?;
    if let Some(manifest) = &common.replay {
        config.replay_manifest = Some(manifest.clone());
    }
    match command {
        Command::Parse(_) => {
            let s = pipeline::cmd_parse(&config)?;
            println!(
                "parsed {} messages: {} matched, {} unmatched, {} without an exchange",
                s.messages, s.matched, s.skipped_unmatched, s.skipped_no_exchange
            );
            println!("{} events -> {}", s.events, s.out.display());
        }
        Command::Listings(common) => {
            let source = MarketSource::open(&config, common.live)?;
            let s = pipeline::cmd_listings(&config, &source)?;
            println!(
                "kept {} of {} events ({} removed)",
                s.events_kept, s.events_in, s.events_removed
            );
            println!("{} listing dates found in {} requests", s.listings, s.requests);
        }
        Command::Fetch(common) => {
            let source = MarketSource::open(&config, common.live)?;
            let s = pipeline::cmd_fetch(&config, &source)?;
            println!(
                "fetched {} events ({} already complete) and {} auxiliary series in {} requests",
                s.events_fetched, s.events_reused, s.aux_series_fetched, s.requests
            );
            if s.gaps > 0 {
                println!("{} bar range(s) have no data; see the gap log", s.gaps);
            }
        }
        Command::Analyze(_) => {
            let s = pipeline::cmd_analyze(&config)?;
            println!("analyzed {} of {} events ({} skipped)", s.analyzed, s.events, s.skipped);
            if s.warnings > 0 {
                println!("{} warning(s) recorded in {}", s.warnings, s.out.display());
            } else {
                println!("results -> {}", s.out.display());
            }
        }
        Command::Report(_) => {
            let s = pipeline::cmd_report(&config)?;
            println!("report bundle ({} files):", s.files.len());
            for file in &s.files {
                println!("  {}", file.display());
            }
        }
    }
    Ok(())
}
