use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use raincast_cli::{commands, CliError, RunConfig};

/// Water-level forecasting from radar precipitation.
#[derive(Parser)]
#[command(name = "raincast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Forecast horizon in level steps; repeat for several
    #[arg(long = "horizon", global = true)]
    horizons: Vec<usize>,
    /// absolute | residual
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Output directory for checkpoints and reports
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Data directory holding radar.rpgs and levels.csv
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Override any configuration key
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic catchment into the data directory
    Synth,
    /// Report frame quality and rain/level correlations
    Ingest,
    /// Train a model per horizon
    Train,
    /// Score the baseline and trained models on the test split
    Evaluate,
    /// Issue forecasts at one point in time
    Forecast {
        /// Epoch seconds; defaults to the last radar frame
        #[arg(long)]
        issue_time: Option<i64>,
    },
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        cfg.apply_text(&text)?;
    }
    for kv in &cli.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set {kv}: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if !cli.horizons.is_empty() {
        cfg.set_horizons(&cli.horizons);
    }
    if let Some(mode) = &cli.mode {
        cfg.set("mode", mode)?;
    }
    if let Some(out) = &cli.out {
        cfg.set("out_dir", &out.to_string_lossy())?;
    }
    if let Some(data) = &cli.data {
        cfg.set("data_dir", &data.to_string_lossy())?;
    }
    cfg.mode()?;
    cfg.horizons()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Ingest => commands::ingest(&cfg),
        Command::Train => commands::train_cmd(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Forecast { issue_time } => commands::forecast(&cfg, *issue_time),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
