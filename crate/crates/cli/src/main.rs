use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mmfl_core::harness::{self, preset, PRESET_NAMES};
use mmfl_core::{BidMatrix, Mechanism, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "mmfl",
    version,
    about = "Multi-task federated learning simulator and recruitment auctions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a JSON config or a built-in preset.
    Simulate {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
        preset: Option<String>,
        /// Root directory for results; a run writes to `<out>/<name>/`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the config's seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Run one mechanism on a bid matrix and print the outcome as JSON.
    Auction {
        #[arg(long)]
        mechanism: Mechanism,
        /// JSON file holding either a matrix `[[b00, b01], ...]` or `{"bids": ..., "costs": ...}`.
        #[arg(long)]
        bids: PathBuf,
        #[arg(long)]
        budget: f64,
        /// Include the per-round event log.
        #[arg(long)]
        trace: bool,
    },
    /// Summarize a finished run directory.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn read_bids(path: &PathBuf) -> Result<BidMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let matrix = if value.is_array() {
        BidMatrix::new(serde_json::from_value(value)?)?
    } else {
        let m: BidMatrix = serde_json::from_value(value)?;
        m.validate()?;
        m
    };
    Ok(matrix)
}

/// Prints one line to stdout. A closed pipe (`mmfl analyze ... | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            preset: preset_name,
            out,
            seeds,
        } => {
            let mut cfg = match (config, preset_name) {
                (Some(path), _) => ScenarioConfig::from_file(&path)?,
                (None, Some(name)) => {
                    preset(&name).ok_or(harness::HarnessError::UnknownPreset(name))?
                }
                (None, None) => bail!("either --config or --preset is required"),
            };
            if let Some(seeds) = seeds {
                cfg.seeds = seeds;
            }
            let root = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            let dir = harness::run_scenario(&cfg, &root)?;
            emit(&dir.display().to_string())?;
        }
        Command::Auction {
            mechanism,
            bids,
            budget,
            trace,
        } => {
            let matrix = read_bids(&bids)?;
            let mut outcome = mechanism.run(&matrix, budget)?;
            if !trace {
                outcome.trace.clear();
            }
            emit(&serde_json::to_string_pretty(&outcome)?)?;
        }
        Command::Analyze { input } => {
            let summary = harness::analyze(&input)?;
            emit(&serde_json::to_string_pretty(&summary)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
