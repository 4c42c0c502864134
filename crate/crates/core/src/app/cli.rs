//! Command-line front end.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crate::app::commands::{self, ReplayInputs};
use crate::app::config::AppConfig;

#[derive(Debug, Parser)]
#[command(name = "hyperlocal", version, about = "Geotag news articles and serve them by location")]
pub struct Cli {
    /// TOML configuration file; `HYPERLOCAL_*` variables override it.
    #[arg(long, global = true, env = "HYPERLOCAL_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stamp every article of a corpus with geohash cells.
    Stamp {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the publisher-to-location affinity map.
    Affinity {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        publishers: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP feed service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Compare ensemble stamps with the publisher-to-DMA baseline.
    Eval(EvalArgs),
    /// Generate the seeded synthetic benchmark.
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "synth")]
        out_dir: PathBuf,
        /// Only write the generated files; skip affinity and stamping.
        #[arg(long)]
        no_pipeline: bool,
    },
    /// Load and check gazetteer files.
    GazetteerValidate {
        /// Files to check instead of the configured ones.
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    stamps: Option<PathBuf>,
    #[arg(long)]
    impressions: Option<PathBuf>,
    #[arg(long)]
    dma: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Serve the request log from both arms' indexes and score the served
    /// articles against ground truth instead of using fixed impressions.
    #[arg(long)]
    replay: bool,
    #[arg(long)]
    requests: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Print the machine-readable report instead of the table.
    #[arg(long)]
    json: bool,
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = AppConfig::load(cli.config.as_deref()).context("loading configuration")?;
    eprintln!("# effective configuration\n{}", config.summary());
    let p = &config.paths;
    match cli.command {
        Command::Stamp { corpus, out } => {
            let run = commands::cmd_stamp(&config, corpus.as_ref().unwrap_or(&p.corpus), out.as_ref().unwrap_or(&p.stamps))?;
            println!(
                "stamped {} articles; {}; geocoder failures {}; oversized locations {}",
                run.stamps.len(),
                run.histogram,
                run.geocoder_failures,
                run.oversized_locations
            );
        }
        Command::Affinity { corpus, publishers, out } => {
            let map = commands::cmd_affinity(
                &config,
                corpus.as_ref().unwrap_or(&p.corpus),
                publishers.as_ref().unwrap_or(&p.publishers),
                out.as_ref().unwrap_or(&p.affinity),
            )?;
            for entry in map.values() {
                let locs: Vec<&str> = entry.locations.iter().map(String::as_str).collect();
                println!("{}\t{}\t{} cells", entry.publisher, locs.join(","), entry.geohashes.len());
            }
        }
        Command::Serve { addr } => {
            let state = commands::service_state(&config)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::app::service::run(state, &addr))?;
        }
        Command::Eval(args) => {
            if args.replay {
                let mut inputs = ReplayInputs::from_config(&config);
                inputs.stamps = args.stamps.unwrap_or(inputs.stamps);
                inputs.corpus = args.corpus.unwrap_or(inputs.corpus);
                inputs.dma = args.dma.unwrap_or(inputs.dma);
                inputs.requests = args.requests.unwrap_or(inputs.requests);
                inputs.truth = args.truth.unwrap_or(inputs.truth);
                let report = commands::cmd_replay(&config, &inputs)?;
                if args.json {
                    print_json(&report)?;
                } else {
                    print!("{}", report.table());
                }
            } else {
                let ev = commands::cmd_eval(
                    &config,
                    args.stamps.as_ref().unwrap_or(&p.stamps),
                    args.impressions.as_ref().unwrap_or(&p.impressions),
                    args.dma.as_ref().unwrap_or(&p.dma),
                    args.corpus.as_ref().unwrap_or(&p.corpus),
                )?;
                if args.json {
                    print_json(&ev)?;
                } else {
                    print!("{}", ev.table());
                }
            }
        }
        Command::Synth { seed, out_dir, no_pipeline } => {
            let (_, summary) = commands::cmd_synth(&config, seed, &out_dir, !no_pipeline)?;
            println!(
                "wrote {} articles, {} requests, {} impressions to {}",
                summary.articles,
                summary.requests,
                summary.impressions,
                out_dir.display()
            );
            if let Some(h) = summary.histogram {
                println!("affinity entries {}; rules {h}", summary.affinity_entries);
            }
        }
        Command::GazetteerValidate { files } => {
            let report = commands::cmd_gazetteer_validate(&config, &files)?;
            print_json(&report)?;
        }
    }
    Ok(())
}

/// Entry point for the binary.
pub fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
