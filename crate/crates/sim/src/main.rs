use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use nov_core::fixed_point::QuantConfig;
use nov_sim::bench::{bench_point, write_csv, BenchSettings};
use nov_sim::{reference_model, run_scenario, synth_updates, ClientUpdate, ScenarioConfig};

#[derive(Parser)]
#[command(name = "nov", version, about = "Byzantine-robust secure aggregation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate benign client updates aligned with the seed's reference model.
    Synth {
        #[arg(long)]
        seed: u64,
        /// JSON array of layer lengths.
        #[arg(long)]
        shape: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        clients: usize,
        /// Upper bound on every update's norm.
        #[arg(long, default_value_t = 0.9)]
        norm: f64,
    },
    /// Execute one round and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        updates: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time a round, and attacker identification, for several parameter counts.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        params: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        clients: usize,
        #[arg(long, default_value_t = 2)]
        threshold: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Rounds per point; the fastest is reported.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth {
            seed,
            shape,
            out,
            clients,
            norm,
        } => {
            let shape: Vec<usize> = read_json(&shape)?;
            if shape.is_empty() || shape.contains(&0) {
                bail!("shape must list positive layer lengths");
            }
            let reference = reference_model(seed, &shape);
            let updates: Vec<ClientUpdate> =
                synth_updates(seed, &shape, clients, &reference, norm, &QuantConfig::default())
                    .into_iter()
                    .map(|layers| ClientUpdate { layers })
                    .collect();
            write_json(&out, &updates)?;
        }
        Command::Run {
            config,
            updates,
            out,
        } => {
            let cfg: ScenarioConfig = read_json(&config)?;
            let updates: Vec<ClientUpdate> = read_json(&updates)?;
            let layers: Vec<_> = updates.into_iter().map(|u| u.layers).collect();
            let report = run_scenario(&cfg, &layers)?;
            write_json(&out, &report)?;
            eprintln!(
                "{:?}: benign {:?}, removed {:?}",
                report.status,
                report.benign,
                report.removals.iter().map(|r| r.client).collect::<Vec<_>>()
            );
        }
        Command::Bench {
            params,
            out,
            clients,
            threshold,
            seed,
            repeats,
        } => {
            let settings = BenchSettings {
                clients,
                threshold,
                seed,
                repeats,
            };
            let mut rows = Vec::new();
            for p in params {
                let row = bench_point(p, &settings)?;
                eprintln!(
                    "p={:>6}  round {:>10.1} ms  {:>12} bytes  identification {:>9.1} ms",
                    row.params, row.round_ms, row.round_bytes, row.step_x_ms
                );
                rows.push(row);
            }
            write_csv(&rows, File::create(&out)?)?;
        }
    }
    Ok(())
}
