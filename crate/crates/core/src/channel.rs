//! Netem-style one-way path: i.i.d. normal delay and uniform random drop.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Error;
use crate::packet::Packet;

const DROP_STREAM: u64 = 0xD50;
const DELAY_STREAM: u64 = 0xDE1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    /// Mean one-way delay, milliseconds.
    pub alpha: f64,
    /// Relative delay variation; the standard deviation is `beta * alpha`.
    pub beta: f64,
    /// Per-packet drop probability.
    pub drop_rate: f64,
    pub seed: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig { alpha: 2.5, beta: 0.0, drop_rate: 0.0, seed: 1 }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config("path alpha must be a non-negative number"));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config("path beta must be a non-negative number"));
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(Error::Config("path drop_rate must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Streaming form of [`apply_path`]: one drop draw and one delay draw per
/// packet, from independent streams, in send order.
#[derive(Debug, Clone)]
pub struct PathEmulator {
    cfg: PathConfig,
    drop_rng: ChaCha8Rng,
    delay_rng: ChaCha8Rng,
    sent: u64,
    dropped: u64,
}

impl PathEmulator {
    pub fn new(cfg: PathConfig) -> Self {
        let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        drop_rng.set_stream(DROP_STREAM);
        let mut delay_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        delay_rng.set_stream(DELAY_STREAM);
        PathEmulator { cfg, drop_rng, delay_rng, sent: 0, dropped: 0 }
    }

    pub fn config(&self) -> &PathConfig {
        &self.cfg
    }

    /// Arrival time in microseconds for a packet sent at `send_time`, or
    /// `None` if the path drops it. The delay draw is consumed either way.
    pub fn transit(&mut self, send_time: f64) -> Option<f64> {
        self.sent += 1;
        let dropped = self.cfg.drop_rate > 0.0 && self.drop_rng.random::<f64>() < self.cfg.drop_rate;
        let z: f64 = StandardNormal.sample(&mut self.delay_rng);
        if dropped {
            self.dropped += 1;
            return None;
        }
        let mean_us = self.cfg.alpha * 1e3;
        let delay = (mean_us + self.cfg.beta * mean_us * z).max(0.0);
        Some(send_time + delay)
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

/// Pushes a send-ordered trace through the path. Survivors come back sorted
/// by arrival time, ties in send order.
pub fn apply_path(trace: &[Packet], cfg: &PathConfig) -> Vec<Packet> {
    let mut path = PathEmulator::new(*cfg);
    let mut out: Vec<(usize, Packet)> = trace
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            path.transit(p.send_time).map(|t| {
                let mut q = *p;
                q.arrival_time = t;
                (i, q)
            })
        })
        .collect();
    out.sort_by(|(ia, a), (ib, b)| {
        a.arrival_time.total_cmp(&b.arrival_time).then(a.send_index.cmp(&b.send_index)).then(ia.cmp(ib))
    });
    out.into_iter().map(|(_, p)| p).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::reordered_count;
    use crate::packet::FlowKey;

    const FLOW: FlowKey = FlowKey::new(1, 2, 1000, 80);

    fn cbr(n: usize, spacing_us: f64, len: u32) -> Vec<Packet> {
        (0..n)
            .map(|i| {
                let mut p = Packet::data(FLOW, i as u32 * len, len).with_send_index(i as u64);
                p.send_time = i as f64 * spacing_us;
                p
            })
            .collect()
    }

    #[test]
    fn constant_delay_preserves_order() {
        let trace = cbr(1000, 1.0, 100);
        let cfg = PathConfig { alpha: 2.5, beta: 0.0, drop_rate: 0.0, seed: 9 };
        let out = apply_path(&trace, &cfg);
        assert_eq!(out.len(), trace.len());
        for (a, b) in trace.iter().zip(&out) {
            assert_eq!(a.send_index, b.send_index);
            assert_eq!(b.arrival_time, a.send_time + 2500.0);
        }
    }

    #[test]
    fn full_drop_empties_trace() {
        let trace = cbr(100, 1.0, 100);
        let cfg = PathConfig { drop_rate: 1.0, ..PathConfig::default() };
        assert!(apply_path(&trace, &cfg).is_empty());
    }

    #[test]
    fn jitter_reorders_closely_spaced_packets() {
        // two packets 1 us apart; search for a seed whose draws invert them
        let trace = cbr(2, 1.0, 100);
        let found = (0..200u64).find_map(|seed| {
            let cfg = PathConfig { alpha: 2.5, beta: 0.01, drop_rate: 0.0, seed };
            let out = apply_path(&trace, &cfg);
            (out[0].send_index == 1).then_some(out)
        });
        let out = found.expect("some seed reorders the pair");
        assert_eq!(reordered_count(&out).unwrap().0, 1);
    }

    #[test]
    fn drop_count_is_binomial() {
        let trace = cbr(10_000, 1.0, 100);
        let cfg = PathConfig { drop_rate: 0.01, seed: 42, ..PathConfig::default() };
        let kept = apply_path(&trace, &cfg).len() as f64;
        let sd = (10_000.0f64 * 0.01 * 0.99).sqrt();
        assert!((kept - 9_900.0).abs() <= 3.0 * sd, "kept {kept}");
    }

    #[test]
    fn delay_draws_do_not_depend_on_drops() {
        let trace = cbr(500, 10.0, 100);
        let lossless = PathConfig { alpha: 2.5, beta: 0.05, drop_rate: 0.0, seed: 5 };
        let lossy = PathConfig { drop_rate: 0.2, ..lossless };
        let a = apply_path(&trace, &lossless);
        let b = apply_path(&trace, &lossy);
        assert!(b.len() < a.len());
        for p in &b {
            let q = a.iter().find(|q| q.send_index == p.send_index).unwrap();
            assert_eq!(p.arrival_time, q.arrival_time);
        }
    }

    #[test]
    fn negative_draws_clamp_to_zero() {
        let trace = cbr(2000, 1.0, 100);
        let cfg = PathConfig { alpha: 1.0, beta: 2.0, drop_rate: 0.0, seed: 3 };
        let out = apply_path(&trace, &cfg);
        assert!(out.iter().all(|p| p.arrival_time >= p.send_time));
        assert!(out.iter().any(|p| p.arrival_time == p.send_time));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(PathConfig { drop_rate: 1.5, ..PathConfig::default() }.validate().is_err());
        assert!(PathConfig { beta: -0.1, ..PathConfig::default() }.validate().is_err());
        assert!(PathConfig { alpha: f64::NAN, ..PathConfig::default() }.validate().is_err());
        assert!(PathConfig::default().validate().is_ok());
    }

    proptest::proptest! {
        #[test]
        fn deterministic_and_never_duplicates(seed: u64, beta in 0.0f64..0.5, drop in 0.0f64..0.5) {
            let trace = cbr(200, 3.0, 10);
            let cfg = PathConfig { alpha: 1.0, beta, drop_rate: drop, seed };
            let a = apply_path(&trace, &cfg);
            let b = apply_path(&trace, &cfg);
            proptest::prop_assert_eq!(&a, &b);
            let mut idx: Vec<u64> = a.iter().map(|p| p.send_index).collect();
            idx.sort_unstable();
            idx.dedup();
            proptest::prop_assert_eq!(idx.len(), a.len());
        }
    }
}
