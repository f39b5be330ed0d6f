//! `ldm`: runs scheduling and beamforming sweeps and exposes the scheduler
//! and metric stages on their own.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ldm_core::channel::{draw_channel_set, read_channel_dump, write_channel_dump};
use ldm_core::harness::{aggregate, parse_config, run_experiment, write_outputs, RunOptions};
use ldm_core::metrics::{discordance_matrix, DiscordanceMatrix, MetricKind, MetricTag};
use ldm_core::scheduler::{enumerate_schedule, solve_schedule};

#[derive(Parser)]
#[command(name = "ldm", version, about = "Superimposed multicast/unicast mmWave scheduling and beamforming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full sweep and write results.csv, aggregate.csv and config.toml.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Write zero runtimes so repeated runs give identical bytes.
        #[arg(long)]
        no_timing: bool,
        /// Report progress every this many seeds (0 = silent).
        #[arg(long, default_value_t = 0)]
        progress: usize,
    },
    /// Pick the dual-layer devices from a discordance matrix CSV.
    Schedule {
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        k_prime: usize,
        /// Enumerate every subset instead of branch and bound.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Compute the discordance matrix of a channel dump.
    Metrics {
        #[arg(long)]
        channels: PathBuf,
        /// CORR, PAWN, ROOK or KING.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 0.5)]
        omega: f64,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the channels a config draws for one seed.
    Channels {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_config(path: &PathBuf) -> Result<(ldm_core::SystemConfig, ldm_core::SweepSpec)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let (mut cfg, sweep) = parse_config(&text).with_context(|| format!("invalid config {}", path.display()))?;
    cfg.apply_env_overrides()?;
    Ok((cfg, sweep))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            workers,
            no_timing,
            progress,
        } => {
            let (cfg, sweep) = load_config(&config)?;
            let opts = RunOptions {
                workers,
                record_timing: !no_timing,
                progress_every: progress,
            };
            let table = run_experiment(&cfg, &sweep, &opts)?;
            write_outputs(&out, &cfg, &sweep, &table).with_context(|| format!("cannot write to {}", out.display()))?;
            for fault in table.faults() {
                eprintln!(
                    "warning: {} seed {} {}: {}",
                    fault.scenario_id,
                    fault.seed,
                    fault.scheme,
                    fault.error.as_deref().unwrap_or("")
                );
            }
            let agg = aggregate(&table);
            eprintln!(
                "{} rows, {} aggregate rows written to {}",
                table.rows.len(),
                agg.len(),
                out.display()
            );
        }
        Command::Schedule {
            theta,
            k_prime,
            exhaustive,
        } => {
            let file = File::open(&theta).with_context(|| format!("cannot open {}", theta.display()))?;
            let theta = DiscordanceMatrix::read_csv(BufReader::new(file))?;
            let decision = if exhaustive {
                enumerate_schedule(&theta, k_prime)?
            } else {
                solve_schedule(&theta, k_prime)?
            };
            let sel: Vec<String> = decision.selected.iter().map(|i| i.to_string()).collect();
            println!("selected: {}", sel.join(","));
            println!("objective: {:.14e}", decision.objective);
        }
        Command::Metrics {
            channels,
            kind,
            omega,
            out,
        } => {
            let tag: MetricTag = kind.parse()?;
            let file = File::open(&channels).with_context(|| format!("cannot open {}", channels.display()))?;
            let (_, _, chans) = read_channel_dump(BufReader::new(file))?;
            if chans.len() < 2 {
                bail!("need at least two devices, dump has {}", chans.len());
            }
            let theta = discordance_matrix(&chans, MetricKind::new(tag, omega)?)?;
            let mut w = output(out.as_ref())?;
            theta.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Channels { config, seed, out } => {
            let (cfg, _) = load_config(&config)?;
            let geom = cfg.geometry()?;
            let chans = draw_channel_set(cfg.master_seed, seed, cfg.k, &geom, cfg.paths, &cfg.angle_ranges())?;
            let mut w = output(out.as_ref())?;
            write_channel_dump(&mut w, seed, &geom, &chans)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
