use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use keyscroll::{bench, gen, server, verify, AppConfig};
use keyscroll_core::synth::Distribution;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(version, about = "Scroll very large ordered tables without counting rows")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for generated data and random probes.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the JSON API.
    Serve {
        /// Overrides `listen` from the config.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Check the table and engine against brute-force oracles.
    Verify {
        /// Random anchors per sampled suite.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        json: bool,
    },
    /// Replay a scroll script and report estimate errors.
    Bench {
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic CSV table.
    Gen {
        #[arg(long, default_value = "uniform")]
        distribution: Distribution,
        #[arg(long, default_value_t = 10_000)]
        rows: usize,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write a config that serves the output.
        #[arg(long)]
        emit_config: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<AppConfig> {
    AppConfig::load(path.as_ref().context("--config is required for this command")?)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Serve { listen } => {
            let mut config = load_config(&cli.config)?;
            if let Some(listen) = listen {
                config.listen = listen;
            }
            server::run(&config, cli.seed)?;
        }
        Command::Verify { samples, json } => {
            let config = load_config(&cli.config)?;
            let table = match config.load_table(cli.seed) {
                Ok(table) => table,
                Err(e) => {
                    println!("ingest: FAILED: {e:#}");
                    println!("result: FAIL");
                    return Ok(ExitCode::FAILURE);
                }
            };
            let report = verify::run(Arc::new(table), &config.engine_config(), samples, cli.seed);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{report}");
            }
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bench { script, json } => {
            let config = load_config(&cli.config)?;
            let text = match &script {
                Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
                None => bench::DEFAULT_SCRIPT.to_owned(),
            };
            let commands = bench::parse_script(&text)?;
            let table = Arc::new(config.load_table(cli.seed)?);
            let report = bench::run(table, config.engine_config(), &commands, cli.seed)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{report}");
            }
        }
        Command::Gen {
            distribution,
            rows,
            output,
            emit_config,
        } => {
            match &output {
                Some(path) => gen::write_csv(BufWriter::new(File::create(path)?), distribution, rows, cli.seed)?,
                None => gen::write_csv(io::stdout().lock(), distribution, rows, cli.seed)?,
            }
            if let Some(config_path) = emit_config {
                let dataset = output.context("--emit-config needs --output")?;
                let dataset = std::path::absolute(&dataset)?;
                let config = gen::config_for(distribution, &dataset);
                std::fs::write(&config_path, toml::to_string(&config)?)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
