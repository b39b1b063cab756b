//! Interrupt-coalescing receive path.
//!
//! A cycle starts when a packet lands in an empty ring. After the hardware
//! interrupt delay `t_intr` the softirq drains the ring at `r_sn` packets per
//! second, one packet per service quantum. Packets arriving while the drain is
//! in progress join the same cycle; the cycle ends at the first service
//! completion that leaves the ring empty. An arrival at exactly that instant
//! opens the next cycle.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoalescingParams {
    /// Hardware interrupt dispatch and service delay, microseconds.
    pub t_intr_us: f64,
    /// Softirq packet service rate, packets per second.
    pub r_sn: f64,
    pub ringbuffer_size: usize,
}

impl Default for CoalescingParams {
    fn default() -> Self {
        CoalescingParams { t_intr_us: 30.0, r_sn: 1.2e6, ringbuffer_size: 512 }
    }
}

impl CoalescingParams {
    /// Duration of one service quantum in microseconds.
    pub fn quantum_us(&self) -> f64 {
        1e6 / self.r_sn
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.r_sn > 0.0) || !self.r_sn.is_finite() {
            return Err(Error::Config("coalescing.r_sn must be positive"));
        }
        if !(self.t_intr_us >= 0.0) || !self.t_intr_us.is_finite() {
            return Err(Error::Config("coalescing.t_intr_us must be non-negative"));
        }
        if self.ringbuffer_size == 0 {
            return Err(Error::Config("coalescing.ringbuffer_size must be positive"));
        }
        Ok(())
    }
}

/// One drain of the ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRecord {
    pub cycle_index: u64,
    /// Arrival time of the packet that raised the interrupt, microseconds.
    pub start_time: f64,
    /// Time the softirq spent emptying the ring, microseconds.
    pub emptying_duration: f64,
    pub block_packets: u64,
}

/// Steady-state packets per cycle at arrival rate `p_rate` (pps).
pub fn block_size_closed_form(p_rate: f64, params: &CoalescingParams) -> Result<u64, Error> {
    let r = params.r_sn;
    if p_rate >= r {
        return Err(Error::Saturated { p_rate, r_sn: r });
    }
    let p = p_rate.max(0.0);
    let t_intr = params.t_intr_us * 1e-6;
    let exact = (1.0 + t_intr * p) * r / (r - p);
    // Values that are integral up to rounding noise must not be bumped up.
    let nearest = libm::round(exact);
    let blocks = if libm::fabs(exact - nearest) <= 1e-9 * exact.max(1.0) { nearest } else { libm::ceil(exact) };
    Ok(blocks as u64)
}

/// Longest extra delay, in microseconds, a block of `block_size` packets can
/// add when served at `r_sn_prime` packets per second.
pub fn hold_delay_bound(block_size: usize, r_sn_prime: f64) -> f64 {
    block_size as f64 / r_sn_prime * 1e6
}

#[derive(Debug, Clone, Copy)]
struct ActiveCycle {
    index: u64,
    start: f64,
    drain_start: f64,
    served: u64,
}

/// What one service quantum produced.
#[derive(Debug)]
pub struct Service<T> {
    pub item: T,
    /// When the next service completes, if the ring is still non-empty.
    pub next_service: Option<f64>,
    /// Set when this service emptied the ring.
    pub finished: Option<CycleRecord>,
}

/// Event-driven receive ring. The caller owns the clock: [`ReceiveRing::arrive`]
/// and [`ReceiveRing::service`] return the time of the next service completion,
/// which the caller must schedule ahead of any arrival at the same instant.
#[derive(Debug, Clone)]
pub struct ReceiveRing<T> {
    params: CoalescingParams,
    queue: VecDeque<T>,
    cycle: Option<ActiveCycle>,
    cycles: u64,
}

impl<T> ReceiveRing<T> {
    pub fn new(params: CoalescingParams) -> Self {
        ReceiveRing { params, queue: VecDeque::new(), cycle: None, cycles: 0 }
    }

    pub fn params(&self) -> &CoalescingParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn in_cycle(&self) -> bool {
        self.cycle.is_some()
    }

    /// Queues an arrival. Returns the first service time if this arrival
    /// opened a new cycle.
    pub fn arrive(&mut self, now: f64, item: T) -> Option<f64> {
        self.queue.push_back(item);
        if self.cycle.is_some() {
            return None;
        }
        let drain_start = now + self.params.t_intr_us;
        self.cycle = Some(ActiveCycle { index: self.cycles, start: now, drain_start, served: 0 });
        self.cycles += 1;
        Some(drain_start + self.params.quantum_us())
    }

    /// Completes one service quantum. Returns `None` if no cycle is active.
    pub fn service(&mut self) -> Option<Service<T>> {
        let cycle = self.cycle.as_mut()?;
        let item = self.queue.pop_front()?;
        cycle.served += 1;
        let quantum = self.params.quantum_us();
        if self.queue.is_empty() {
            let c = *cycle;
            self.cycle = None;
            Some(Service {
                item,
                next_service: None,
                finished: Some(CycleRecord {
                    cycle_index: c.index,
                    start_time: c.start,
                    emptying_duration: c.served as f64 * quantum,
                    block_packets: c.served,
                }),
            })
        } else {
            let next = cycle.drain_start + (cycle.served + 1) as f64 * quantum;
            Some(Service { item, next_service: Some(next), finished: None })
        }
    }
}

/// Replays nondecreasing arrival times through the receive ring and reports
/// every cycle.
pub fn simulate_coalescing(arrival_times: &[f64], params: &CoalescingParams) -> Vec<CycleRecord> {
    let mut ring: ReceiveRing<()> = ReceiveRing::new(*params);
    let mut records = Vec::new();
    let mut next_service: Option<f64> = None;
    let mut i = 0;
    loop {
        let arrival = arrival_times.get(i).copied();
        match (next_service, arrival) {
            (None, None) => break,
            (Some(s), a) if a.is_none_or(|a| s <= a) => {
                let done = ring.service().expect("service scheduled without an active cycle");
                next_service = done.next_service;
                if let Some(rec) = done.finished {
                    records.push(rec);
                }
            }
            (_, Some(a)) => {
                if let Some(s) = ring.arrive(a, ()) {
                    next_service = Some(s);
                }
                i += 1;
            }
            (Some(_), None) => unreachable!(),
        }
    }
    records
}
