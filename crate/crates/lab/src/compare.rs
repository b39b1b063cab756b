//! Paired SRPIC-vs-baseline summaries from a run CSV.
//!
//! Streams are summed per (scenario, seed, arm). For each metric the paired
//! differences `on - off` across seeds give a Student-t 95% interval; the
//! ratio of means gets the interval `1 + CI(diff) / mean(off)`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Deserialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::format::fmt_g;

pub const METRICS: &[&str] = &[
    "goodput_proxy",
    "pkts_retrans",
    "dup_acks_in",
    "sack_blocks_rcvd",
    "reorder_post_count",
    "pkts_retrans_per_mbps",
    "dup_acks_per_mbps",
    "sack_blocks_per_mbps",
];

pub const SUMMARY_COLUMNS: &[&str] = &[
    "scenario",
    "metric",
    "n",
    "mean_off",
    "mean_on",
    "ratio",
    "ratio_ci_low",
    "ratio_ci_high",
    "diff_mean",
    "diff_ci_low",
    "diff_ci_high",
    "on_lower",
    "on_higher",
];

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: srpic must be `on` or `off`, got `{value}`")]
    BadArm { line: u64, value: String },
    #[error("scenario `{scenario}`, seed {seed}: {what}")]
    Unpaired { scenario: String, seed: u64, what: String },
}

#[derive(Debug, Deserialize)]
struct Record {
    scenario: String,
    seed: u64,
    stream_id: u64,
    srpic: String,
    goodput_proxy: f64,
    pkts_retrans: u64,
    dup_acks_in: u64,
    sack_blocks_rcvd: u64,
    reorder_post_count: u64,
}

#[derive(Debug, Clone, Default)]
struct Totals {
    streams: Vec<u64>,
    goodput: f64,
    retrans: u64,
    dup_acks: u64,
    sack_blocks: u64,
    post: u64,
}

impl Totals {
    fn metric(&self, name: &str) -> f64 {
        let mbps = self.goodput * 8e-6;
        let norm = |c: u64| if c == 0 { 0.0 } else { c as f64 / mbps };
        match name {
            "goodput_proxy" => self.goodput,
            "pkts_retrans" => self.retrans as f64,
            "dup_acks_in" => self.dup_acks as f64,
            "sack_blocks_rcvd" => self.sack_blocks as f64,
            "reorder_post_count" => self.post as f64,
            "pkts_retrans_per_mbps" => norm(self.retrans),
            "dup_acks_per_mbps" => norm(self.dup_acks),
            "sack_blocks_per_mbps" => norm(self.sack_blocks),
            _ => f64::NAN,
        }
    }
}

/// One row of the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSummary {
    pub scenario: String,
    pub metric: String,
    pub n: usize,
    pub mean_off: f64,
    pub mean_on: f64,
    pub ratio: f64,
    pub ratio_ci: (f64, f64),
    pub diff_mean: f64,
    pub diff_ci: (f64, f64),
    pub on_lower: usize,
    pub on_higher: usize,
}

/// Mean and two-sided 95% Student-t interval of `xs`. The interval is NaN
/// with fewer than two values.
pub fn mean_ci95(xs: &[f64]) -> (f64, (f64, f64)) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, (f64::NAN, f64::NAN));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("degrees of freedom positive").inverse_cdf(0.975);
    (mean, (mean - t * se, mean + t * se))
}

pub fn summarize<R: Read>(input: R) -> Result<Vec<PairedSummary>, CompareError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut scenario_order: Vec<String> = Vec::new();
    // (scenario index, seed) -> [off, on]
    let mut groups: BTreeMap<(usize, u64), [Option<Totals>; 2]> = BTreeMap::new();
    let headers = rdr.headers()?.clone();
    for raw in rdr.records() {
        let raw = raw?;
        let line = raw.position().map_or(0, |p| p.line());
        let rec: Record = raw.deserialize(Some(&headers))?;
        let arm = match rec.srpic.as_str() {
            "off" => 0,
            "on" => 1,
            other => {
                return Err(CompareError::BadArm { line, value: other.to_string() });
            }
        };
        let si = match scenario_order.iter().position(|s| *s == rec.scenario) {
            Some(i) => i,
            None => {
                scenario_order.push(rec.scenario.clone());
                scenario_order.len() - 1
            }
        };
        let slot = &mut groups.entry((si, rec.seed)).or_default()[arm];
        let t = slot.get_or_insert_with(Totals::default);
        if t.streams.contains(&rec.stream_id) {
            return Err(CompareError::Unpaired {
                scenario: rec.scenario,
                seed: rec.seed,
                what: format!("stream {} appears twice in one arm", rec.stream_id),
            });
        }
        t.streams.push(rec.stream_id);
        t.goodput += rec.goodput_proxy;
        t.retrans += rec.pkts_retrans;
        t.dup_acks += rec.dup_acks_in;
        t.sack_blocks += rec.sack_blocks_rcvd;
        t.post += rec.reorder_post_count;
    }
    let mut pairs: BTreeMap<usize, Vec<(Totals, Totals)>> = BTreeMap::new();
    for ((si, seed), arms) in groups {
        let [off, on] = arms;
        let (off, on) = match (off, on) {
            (Some(a), Some(b)) => (a, b),
            (a, _) => {
                return Err(CompareError::Unpaired {
                    scenario: scenario_order[si].clone(),
                    seed,
                    what: format!("missing the {} arm", if a.is_none() { "off" } else { "on" }),
                })
            }
        };
        let mut so = off.streams.clone();
        let mut sn = on.streams.clone();
        so.sort_unstable();
        sn.sort_unstable();
        if so != sn {
            return Err(CompareError::Unpaired {
                scenario: scenario_order[si].clone(),
                seed,
                what: "arms cover different streams".into(),
            });
        }
        pairs.entry(si).or_default().push((off, on));
    }

    let mut out = Vec::new();
    for (si, ps) in pairs {
        for &metric in METRICS {
            let off: Vec<f64> = ps.iter().map(|(a, _)| a.metric(metric)).collect();
            let on: Vec<f64> = ps.iter().map(|(_, b)| b.metric(metric)).collect();
            let diffs: Vec<f64> = on.iter().zip(&off).map(|(b, a)| b - a).collect();
            let (mean_off, _) = mean_ci95(&off);
            let (mean_on, _) = mean_ci95(&on);
            let (diff_mean, diff_ci) = mean_ci95(&diffs);
            let ratio = mean_on / mean_off;
            let ratio_ci = (1.0 + diff_ci.0 / mean_off, 1.0 + diff_ci.1 / mean_off);
            out.push(PairedSummary {
                scenario: scenario_order[si].clone(),
                metric: metric.to_string(),
                n: ps.len(),
                mean_off,
                mean_on,
                ratio,
                ratio_ci,
                diff_mean,
                diff_ci,
                on_lower: diffs.iter().filter(|d| **d < 0.0).count(),
                on_higher: diffs.iter().filter(|d| **d > 0.0).count(),
            });
        }
    }
    Ok(out)
}

pub fn write_summary<W: Write>(rows: &[PairedSummary], out: W) -> Result<(), CompareError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.metric.clone(),
            r.n.to_string(),
            fmt_g(r.mean_off),
            fmt_g(r.mean_on),
            fmt_g(r.ratio),
            fmt_g(r.ratio_ci.0),
            fmt_g(r.ratio_ci.1),
            fmt_g(r.diff_mean),
            fmt_g(r.diff_ci.0),
            fmt_g(r.diff_ci.1),
            r.on_lower.to_string(),
            r.on_higher.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "scenario,seed,stream_id,srpic,goodput_proxy,pkts_retrans,dup_acks_in,sack_blocks_rcvd,reorder_post_count\n";

    #[test]
    fn ci_of_known_sample() {
        // mean 3, sd 1.5811, n 5, t(0.975, 4) = 2.776445
        let (m, (lo, hi)) = mean_ci95(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, 3.0);
        let half = 2.776445 * (2.5f64 / 5.0).sqrt();
        assert!((lo - (3.0 - half)).abs() < 1e-5);
        assert!((hi - (3.0 + half)).abs() < 1e-5);
        assert!(mean_ci95(&[1.0]).1 .0.is_nan());
    }

    #[test]
    fn sums_streams_and_pairs_seeds() {
        let csv = format!(
            "{HEADER}s,1,0,off,100,4,10,0,5\ns,1,1,off,100,4,10,0,5\ns,1,0,on,100,2,5,0,1\ns,1,1,on,100,2,5,0,1\n\
             s,2,0,off,100,3,8,0,4\ns,2,1,off,100,3,8,0,4\ns,2,0,on,100,1,4,0,0\ns,2,1,on,100,1,4,0,0\n"
        );
        let rows = summarize(csv.as_bytes()).unwrap();
        let dup = rows.iter().find(|r| r.metric == "dup_acks_in").unwrap();
        assert_eq!(dup.n, 2);
        assert_eq!(dup.mean_off, 18.0);
        assert_eq!(dup.mean_on, 9.0);
        assert_eq!(dup.ratio, 0.5);
        assert_eq!(dup.on_lower, 2);
        let gp = rows.iter().find(|r| r.metric == "goodput_proxy").unwrap();
        assert_eq!(gp.diff_mean, 0.0);
    }

    #[test]
    fn rejects_missing_arm() {
        let csv = format!("{HEADER}s,1,0,off,100,4,10,0,5\n");
        assert!(matches!(summarize(csv.as_bytes()), Err(CompareError::Unpaired { .. })));
    }

    #[test]
    fn rejects_mismatched_streams() {
        let csv = format!("{HEADER}s,1,0,off,100,4,10,0,5\ns,1,1,on,100,4,10,0,5\n");
        assert!(matches!(summarize(csv.as_bytes()), Err(CompareError::Unpaired { .. })));
    }

    #[test]
    fn bad_arm_rejected_empty_accepted() {
        let csv = format!("{HEADER}s,1,0,maybe,100,4,10,0,5\n");
        assert!(matches!(summarize(csv.as_bytes()), Err(CompareError::BadArm { line: 2, .. })));
        assert!(summarize(HEADER.as_bytes()).unwrap().is_empty());
        assert!(summarize(&b""[..]).unwrap().is_empty());
    }
}
