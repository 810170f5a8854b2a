//! Timing and bandwidth sweep over parameter counts.

use serde::{Deserialize, Serialize};

use nov_core::{Error, Result};

use crate::run::{run_scenario, RoundStatus};
use crate::scenario::{AdversaryBehavior, ScenarioConfig};
use crate::synth::{reference_model, synth_updates};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub params: usize,
    pub clients: usize,
    pub threshold: usize,
    /// Registration, distribution and aggregation.
    pub round_ms: f64,
    pub round_bytes: u64,
    pub round_messages: u64,
    /// Extra time spent identifying and removing one attacker.
    pub step_x_ms: f64,
    pub step_x_bytes: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub clients: usize,
    pub threshold: usize,
    pub seed: u64,
    /// Rounds per point; timings keep the fastest.
    pub repeats: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            clients: 3,
            threshold: 2,
            seed: 1,
            repeats: 3,
        }
    }
}

fn merge_fastest(a: BenchRow, b: BenchRow) -> BenchRow {
    BenchRow {
        round_ms: a.round_ms.min(b.round_ms),
        step_x_ms: a.step_x_ms.min(b.step_x_ms),
        ..a
    }
}

/// One round at the given parameter count, with client 2 sending a corrupted share to
/// client 1 so that the same run also measures attacker identification.
fn bench_once(params: usize, settings: &BenchSettings) -> Result<BenchRow> {
    if settings.clients < 2 {
        return Err(Error::InvalidConfig("bench needs at least two clients".into()));
    }
    let cfg = ScenarioConfig::new(settings.clients, settings.threshold, vec![params], settings.seed)
        .with_adversary(2, AdversaryBehavior::WrongShareToVictim { victim: 1, chunk: 0 });
    let reference = reference_model(cfg.seed, &cfg.shape);
    let updates = synth_updates(cfg.seed, &cfg.shape, cfg.n, &reference, 0.9 * cfg.t_m, &cfg.quant);
    let report = run_scenario(&cfg, &updates)?;
    if report.status != RoundStatus::Completed {
        return Err(Error::Protocol(format!("bench round aborted: {:?}", report.abort)));
    }
    let base = report.stages.base();
    Ok(BenchRow {
        params,
        clients: settings.clients,
        threshold: settings.threshold,
        round_ms: base.millis,
        round_bytes: base.bytes,
        round_messages: base.messages,
        step_x_ms: report.stages.identification.millis,
        step_x_bytes: report.stages.identification.bytes,
    })
}

pub fn bench_point(params: usize, settings: &BenchSettings) -> Result<BenchRow> {
    let mut best = bench_once(params, settings)?;
    for _ in 1..settings.repeats {
        best = merge_fastest(best, bench_once(params, settings)?);
    }
    Ok(best)
}

/// Repeats sweep the whole list in turn so that slow drift in machine load hits every
/// point alike.
pub fn bench(params: &[usize], settings: &BenchSettings) -> Result<Vec<BenchRow>> {
    let mut rows = params
        .iter()
        .map(|&p| bench_once(p, settings))
        .collect::<Result<Vec<_>>>()?;
    for _ in 1..settings.repeats {
        for row in rows.iter_mut() {
            *row = merge_fastest(*row, bench_once(row.params, settings)?);
        }
    }
    Ok(rows)
}

pub fn write_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
