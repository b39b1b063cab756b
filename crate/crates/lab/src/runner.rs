//! Paired runs and CSV output.

use std::io::Write;

use rayon::prelude::*;
use srpic_core::tcp::{run_transfer, TransferMetrics, TransferOutcome};

use crate::config::ScenarioConfig;
use crate::format::fmt_g;

pub const COLUMNS: &[&str] = &[
    "scenario",
    "seed",
    "stream_id",
    "srpic",
    "goodput_proxy",
    "pkts_retrans",
    "dup_acks_in",
    "sack_blocks_rcvd",
    "reorder_pre_count",
    "reorder_pre_ratio",
    "reorder_pre_max_extent",
    "reorder_post_count",
    "reorder_post_ratio",
    "reorder_post_max_extent",
    "mean_block_size",
    "max_hold_delay_us",
    "pkts_retrans_per_mbps",
    "dup_acks_per_mbps",
    "sack_blocks_per_mbps",
];

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("scenario `{scenario}`, seed {seed}: {source}")]
    Sim {
        scenario: String,
        seed: u64,
        #[source]
        source: srpic_core::Error,
    },
    #[error(
        "scenario `{scenario}`, seed {seed}: SRPIC hold bound violated \
         (block bound {block}, ring bound {ring}, per-flow count {flow})"
    )]
    HoldBound { scenario: String, seed: u64, block: u64, ring: u64, flow: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One arm of one seed of one scenario.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub scenario: usize,
    pub seed: u64,
    pub srpic: bool,
    pub outcome: TransferOutcome,
}

/// Runs every (scenario, seed, arm) job, in parallel. The result order is
/// scenario order, then ascending seed, then baseline before SRPIC, whatever
/// order the jobs finish in. Any hold-bound violation is an error.
pub fn run_all(scenarios: &[ScenarioConfig]) -> Result<Vec<ArmResult>, RunError> {
    let mut jobs: Vec<(usize, u64, bool)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.seeds.iter().flat_map(move |&seed| s.arms().iter().map(move |&arm| (i, seed, arm))))
        .collect();
    jobs.sort_unstable();
    jobs.dedup();
    jobs.into_par_iter()
        .map(|(i, seed, arm)| {
            let s = &scenarios[i];
            let outcome = run_transfer(&s.transfer(seed, arm)).map_err(|source| RunError::Sim {
                scenario: s.name.clone(),
                seed,
                source,
            })?;
            let h = &outcome.hold;
            if h.block_bound_violations + h.ring_bound_violations + h.flow_count_violations > 0 {
                return Err(RunError::HoldBound {
                    scenario: s.name.clone(),
                    seed,
                    block: h.block_bound_violations,
                    ring: h.ring_bound_violations,
                    flow: h.flow_count_violations,
                });
            }
            Ok(ArmResult { scenario: i, seed, srpic: arm, outcome })
        })
        .collect()
}

fn per_mbps(count: u64, goodput_bytes_per_s: f64) -> f64 {
    let mbps = goodput_bytes_per_s * 8e-6;
    if count == 0 {
        0.0
    } else {
        count as f64 / mbps
    }
}

fn metrics_row(
    scenario: &str,
    seed: u64,
    stream: usize,
    srpic: bool,
    m: &TransferMetrics,
    mean_block: f64,
) -> Vec<String> {
    vec![
        scenario.to_string(),
        seed.to_string(),
        stream.to_string(),
        if srpic { "on" } else { "off" }.to_string(),
        fmt_g(m.goodput_proxy),
        m.pkts_retrans.to_string(),
        m.dup_acks_in.to_string(),
        m.sack_blocks_rcvd.to_string(),
        m.reorder_pre.reordered_count.to_string(),
        fmt_g(m.reorder_pre.ratio),
        m.reorder_pre.max_extent.to_string(),
        m.reorder_post.reordered_count.to_string(),
        fmt_g(m.reorder_post.ratio),
        m.reorder_post.max_extent.to_string(),
        fmt_g(mean_block),
        fmt_g(m.max_hold_delay_us),
        fmt_g(per_mbps(m.pkts_retrans, m.goodput_proxy)),
        fmt_g(per_mbps(m.dup_acks_in, m.goodput_proxy)),
        fmt_g(per_mbps(m.sack_blocks_rcvd, m.goodput_proxy)),
    ]
}

/// CSV records, one per stream per arm per seed, already formatted.
pub fn rows(scenarios: &[ScenarioConfig], results: &[ArmResult]) -> Vec<Vec<String>> {
    results
        .iter()
        .flat_map(|r| {
            let name = &scenarios[r.scenario].name;
            r.outcome
                .streams
                .iter()
                .enumerate()
                .map(move |(k, m)| metrics_row(name, r.seed, k, r.srpic, m, r.outcome.mean_block_size))
        })
        .collect()
}

pub fn write_csv<W: Write>(records: &[Vec<String>], out: W) -> Result<(), RunError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs everything and writes the CSV.
pub fn run_to_csv<W: Write>(scenarios: &[ScenarioConfig], out: W) -> Result<Vec<ArmResult>, RunError> {
    let results = run_all(scenarios)?;
    write_csv(&rows(scenarios, &results), out)?;
    Ok(results)
}
