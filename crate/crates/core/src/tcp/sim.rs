use alloc::collections::{BTreeMap, BinaryHeap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::receiver::ReceiverState;
use super::sender::{DupthreshMode, SenderAction, SenderParams, SenderState};
use super::AckRecord;
use crate::channel::{PathConfig, PathEmulator};
use crate::coalescing::{hold_delay_bound, CoalescingParams, ReceiveRing};
use crate::error::Error;
use crate::metrics::{ReorderReport, ReorderTracker};
use crate::packet::{is_suitable, FlowKey, Packet, SeqNum};
use crate::srpic::{SrpicEngine, DEFAULT_BLOCK_SIZE, DEFAULT_RINGBUFFER_SIZE};

const SENDER_ADDR: u32 = 0x0a00_0001;
const RECEIVER_ADDR: u32 = 0x0a00_0002;
const BASE_PORT: u16 = 40_000;
const RECEIVER_PORT: u16 = 5001;
const HOLD_EPS_US: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SrpicSettings {
    pub enabled: bool,
    pub block_size: usize,
    pub ringbuffer_size: usize,
}

impl Default for SrpicSettings {
    fn default() -> Self {
        SrpicSettings { enabled: false, block_size: DEFAULT_BLOCK_SIZE, ringbuffer_size: DEFAULT_RINGBUFFER_SIZE }
    }
}

/// One transfer: `num_streams` bulk TCP connections from one sender host to
/// one receiver host for `duration_s` simulated seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferConfig {
    pub duration_s: f64,
    pub num_streams: usize,
    pub forward: PathConfig,
    pub reverse: PathConfig,
    pub sender_mode: DupthreshMode,
    pub sack_enabled: bool,
    pub srpic: SrpicSettings,
    pub coalescing: CoalescingParams,
    pub sender: SenderParams,
    /// Mixed with each path's own seed; also picks the initial sequence numbers.
    pub seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            duration_s: 1.0,
            num_streams: 1,
            forward: PathConfig::default(),
            reverse: PathConfig::default(),
            sender_mode: DupthreshMode::Static,
            sack_enabled: true,
            srpic: SrpicSettings::default(),
            coalescing: CoalescingParams::default(),
            sender: SenderParams::default(),
            seed: 1,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(Error::Config("duration must be positive"));
        }
        if self.num_streams == 0 {
            return Err(Error::Config("num_streams must be at least 1"));
        }
        if self.num_streams > (u16::MAX - BASE_PORT) as usize {
            return Err(Error::Config("num_streams too large"));
        }
        if self.srpic.block_size == 0 {
            return Err(Error::Config("srpic.block_size must be positive"));
        }
        if self.srpic.ringbuffer_size == 0 {
            return Err(Error::Config("srpic.ringbuffer_size must be positive"));
        }
        self.forward.validate()?;
        self.reverse.validate()?;
        self.coalescing.validate()?;
        self.sender.validate()?;
        let p_rate = self.sender.link_pps();
        if p_rate >= self.coalescing.r_sn {
            return Err(Error::Saturated { p_rate, r_sn: self.coalescing.r_sn });
        }
        Ok(())
    }

    pub fn flow(stream: usize) -> FlowKey {
        FlowKey::new(SENDER_ADDR, RECEIVER_ADDR, BASE_PORT + stream as u16, RECEIVER_PORT)
    }
}

/// Per-stream results. The aggregate row sums counters over streams.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMetrics {
    /// Acknowledged bytes per simulated second.
    pub goodput_proxy: f64,
    pub bytes_acked: u64,
    pub segments_sent: u64,
    pub pkts_retrans: u64,
    pub fast_retransmits: u64,
    pub timeouts: u64,
    pub spurious_retransmits: u64,
    pub dup_acks_in: u64,
    pub sack_blocks_rcvd: u64,
    pub max_dupthresh: u32,
    pub dup_acks_sent: u64,
    /// Duplicate ACKs dropped by the reverse path.
    pub dup_acks_lost: u64,
    /// Duplicate ACKs generated but not yet at the sender when the run ended.
    pub dup_acks_unarrived: u64,
    pub bytes_delivered: u64,
    pub reorder_pre: ReorderReport,
    pub reorder_post: ReorderReport,
    pub max_hold_delay_us: f64,
}

/// Hold-delay accounting for SRPIC runs. Packets are fetched one per service
/// quantum, so a packet held while `k` more packets of its flow are fetched
/// waits `k` quanta.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HoldStats {
    pub packets_held: u64,
    pub max_hold_us: f64,
    /// `block_size / r_sn`; binds every packet when one flow owns the ring.
    pub block_bound_us: f64,
    /// `ringbuffer_size / r_sn`; binds every packet.
    pub ring_bound_us: f64,
    /// Most same-flow fetches seen while one packet was held.
    pub max_flow_fetches_while_held: u64,
    pub max_fetches_while_held: u64,
    pub block_bound_violations: u64,
    pub ring_bound_violations: u64,
    pub flow_count_violations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub streams: Vec<TransferMetrics>,
    pub aggregate: TransferMetrics,
    pub cycles: u64,
    pub cycle_packets: u64,
    pub mean_block_size: f64,
    pub max_block_size: u64,
    pub hold: HoldStats,
    pub forward_dropped: u64,
    pub reverse_dropped: u64,
}

#[derive(Debug)]
enum Ev {
    Service,
    LinkDone,
    Data(Packet),
    Ack(usize, AckRecord),
    Rto(usize, u64),
}

#[derive(Debug)]
struct Event {
    time: f64,
    // ring service runs ahead of anything else at the same instant
    class: u8,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.class.cmp(&self.class)).then(other.seq.cmp(&self.seq))
    }
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.rotate_left(32) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct FetchInfo {
    time: f64,
    flow_ordinal: u64,
    ordinal: u64,
}

struct Stream {
    sender: SenderState,
    receiver: ReceiverState,
    pre: ReorderTracker,
    post: ReorderTracker,
    next_send_index: u64,
    scheduled_timer: u64,
    fetched: u64,
    dup_acks_lost: u64,
    dup_acks_in_flight: u64,
    max_hold: f64,
}

struct Sim<'a> {
    cfg: &'a TransferConfig,
    end_time: f64,
    events: BinaryHeap<Event>,
    event_seq: u64,
    streams: Vec<Stream>,
    forward: PathEmulator,
    reverse: PathEmulator,
    link_queue: VecDeque<Packet>,
    link_busy: Option<Packet>,
    ring: ReceiveRing<Packet>,
    engine: Option<SrpicEngine>,
    held: BTreeMap<(u16, u64), FetchInfo>,
    fetched: u64,
    pending_acks: Vec<(usize, AckRecord)>,
    delivered: Vec<Packet>,
    cycles: u64,
    cycle_packets: u64,
    max_block: u64,
    hold: HoldStats,
}

/// Runs one transfer to completion. Pure function of `cfg`.
pub fn run_transfer(cfg: &TransferConfig) -> Result<TransferOutcome, Error> {
    cfg.validate()?;
    let mut sim = Sim::new(cfg);
    sim.run();
    Ok(sim.finish())
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a TransferConfig) -> Self {
        let streams = (0..cfg.num_streams)
            .map(|i| {
                let isn = SeqNum(mix(cfg.seed, 0x15_0000 + i as u64) as u32);
                let flow = TransferConfig::flow(i);
                Stream {
                    sender: SenderState::new(cfg.sender, cfg.sender_mode, isn),
                    receiver: ReceiverState::new(flow, isn, cfg.sack_enabled),
                    pre: ReorderTracker::new(isn, cfg.sender.mss),
                    post: ReorderTracker::new(isn, cfg.sender.mss),
                    next_send_index: 0,
                    scheduled_timer: u64::MAX,
                    fetched: 0,
                    dup_acks_lost: 0,
                    dup_acks_in_flight: 0,
                    max_hold: 0.0,
                }
            })
            .collect();
        let forward = cfg.forward.with_seed(mix(cfg.seed, cfg.forward.seed ^ 0xF0));
        let reverse = cfg.reverse.with_seed(mix(cfg.seed, cfg.reverse.seed ^ 0x0F));
        let mut coalescing = cfg.coalescing;
        coalescing.ringbuffer_size = cfg.srpic.ringbuffer_size;
        let engine = cfg.srpic.enabled.then(|| SrpicEngine::new(cfg.srpic.block_size, cfg.srpic.ringbuffer_size));
        let hold = HoldStats {
            block_bound_us: hold_delay_bound(cfg.srpic.block_size, cfg.coalescing.r_sn),
            ring_bound_us: hold_delay_bound(cfg.srpic.ringbuffer_size, cfg.coalescing.r_sn),
            ..HoldStats::default()
        };
        Sim {
            cfg,
            end_time: cfg.duration_s * 1e6,
            events: BinaryHeap::new(),
            event_seq: 0,
            streams,
            forward: PathEmulator::new(forward),
            reverse: PathEmulator::new(reverse),
            link_queue: VecDeque::new(),
            link_busy: None,
            ring: ReceiveRing::new(coalescing),
            engine,
            held: BTreeMap::new(),
            fetched: 0,
            pending_acks: Vec::new(),
            delivered: Vec::new(),
            cycles: 0,
            cycle_packets: 0,
            max_block: 0,
            hold,
        }
    }

    fn push(&mut self, time: f64, class: u8, ev: Ev) {
        self.event_seq += 1;
        self.events.push(Event { time, class, seq: self.event_seq, ev });
    }

    fn run(&mut self) {
        for i in 0..self.streams.len() {
            let actions = self.streams[i].sender.start(0.0);
            self.apply_actions(i, actions, 0.0);
        }
        while let Some(e) = self.events.pop() {
            if e.time > self.end_time {
                break;
            }
            let now = e.time;
            match e.ev {
                Ev::Service => self.on_service(now),
                Ev::LinkDone => self.on_link_done(now),
                Ev::Data(p) => self.on_data(p, now),
                Ev::Ack(i, ack) => {
                    if ack.is_duplicate {
                        self.streams[i].dup_acks_in_flight -= 1;
                    }
                    let actions = self.streams[i].sender.on_ack(&ack, now);
                    self.apply_actions(i, actions, now);
                }
                Ev::Rto(i, gen) => {
                    if self.streams[i].sender.timer().1 == gen {
                        let actions = self.streams[i].sender.on_timeout(now);
                        self.apply_actions(i, actions, now);
                    }
                }
            }
        }
    }

    fn apply_actions(&mut self, i: usize, actions: Vec<SenderAction>, now: f64) {
        let flow = TransferConfig::flow(i);
        for a in actions {
            let (seq, len) = match a {
                SenderAction::Transmit { seq, len } | SenderAction::Retransmit { seq, len } => (seq, len),
                SenderAction::CwndUpdate => continue,
            };
            let s = &mut self.streams[i];
            let p = Packet::data(flow, seq.0, len).with_send_index(s.next_send_index);
            s.next_send_index += 1;
            self.link_queue.push_back(p);
        }
        if self.link_busy.is_none() {
            self.start_link(now);
        }
        let (deadline, gen) = self.streams[i].sender.timer();
        if let Some(t) = deadline {
            if self.streams[i].scheduled_timer != gen {
                self.streams[i].scheduled_timer = gen;
                self.push(t, 1, Ev::Rto(i, gen));
            }
        }
    }

    fn start_link(&mut self, now: f64) {
        if let Some(p) = self.link_queue.pop_front() {
            self.link_busy = Some(p);
            let t = now + self.cfg.sender.tx_time_us();
            self.push(t, 1, Ev::LinkDone);
        }
    }

    fn on_link_done(&mut self, now: f64) {
        if let Some(mut p) = self.link_busy.take() {
            p.send_time = now;
            if let Some(at) = self.forward.transit(now) {
                p.arrival_time = at;
                self.push(at, 1, Ev::Data(p));
            }
        }
        self.start_link(now);
    }

    fn stream_of(flow: &FlowKey) -> usize {
        (flow.src_port - BASE_PORT) as usize
    }

    fn on_data(&mut self, p: Packet, now: f64) {
        self.streams[Self::stream_of(&p.flow)].pre.observe(&p);
        if let Some(t) = self.ring.arrive(now, p) {
            self.push(t, 0, Ev::Service);
        }
    }

    fn on_service(&mut self, now: f64) {
        let Some(svc) = self.ring.service() else {
            return;
        };
        let p = svc.item;
        let mut out = core::mem::take(&mut self.delivered);
        match self.engine.as_mut() {
            Some(engine) => {
                if is_suitable(&p) {
                    let s = &mut self.streams[Self::stream_of(&p.flow)];
                    s.fetched += 1;
                    self.fetched += 1;
                    self.held.insert(
                        (p.flow.src_port, p.send_index),
                        FetchInfo { time: now, flow_ordinal: s.fetched, ordinal: self.fetched },
                    );
                }
                engine.process_into(p, &mut out);
                if svc.finished.is_some() {
                    engine.end_cycle_into(&mut out);
                }
            }
            None => out.push(p),
        }
        for q in out.drain(..) {
            self.deliver(q, now);
        }
        self.delivered = out;

        if let Some(rec) = svc.finished {
            self.cycles += 1;
            self.cycle_packets += rec.block_packets;
            self.max_block = self.max_block.max(rec.block_packets);
            self.release_acks(now);
        }
        if let Some(t) = svc.next_service {
            self.push(t, 0, Ev::Service);
        }
    }

    fn deliver(&mut self, p: Packet, now: f64) {
        let i = Self::stream_of(&p.flow);
        if let Some(info) = self.held.remove(&(p.flow.src_port, p.send_index)) {
            let wait = now - info.time;
            let flow_fetches = self.streams[i].fetched - info.flow_ordinal;
            let fetches = self.fetched - info.ordinal;
            let h = &mut self.hold;
            h.packets_held += 1;
            h.max_hold_us = h.max_hold_us.max(wait);
            h.max_flow_fetches_while_held = h.max_flow_fetches_while_held.max(flow_fetches);
            h.max_fetches_while_held = h.max_fetches_while_held.max(fetches);
            if self.cfg.num_streams == 1 && wait > h.block_bound_us + HOLD_EPS_US {
                h.block_bound_violations += 1;
            }
            if wait > h.ring_bound_us + HOLD_EPS_US {
                h.ring_bound_violations += 1;
            }
            if flow_fetches >= self.cfg.srpic.block_size as u64 {
                h.flow_count_violations += 1;
            }
            let s = &mut self.streams[i];
            s.max_hold = s.max_hold.max(wait);
        }
        let s = &mut self.streams[i];
        s.post.observe(&p);
        let ack = s.receiver.on_segment(&p, now);
        self.pending_acks.push((i, ack));
    }

    /// ACKs generated while the softirq drained the ring leave the host once
    /// the drain is over, grouped by connection. Both arms do this, so an
    /// in-order arrival trace yields identical ACK streams with SRPIC on or off.
    fn release_acks(&mut self, now: f64) {
        let mut acks = core::mem::take(&mut self.pending_acks);
        acks.sort_by_key(|(i, _)| *i);
        for (i, mut ack) in acks.drain(..) {
            ack.send_time = now;
            match self.reverse.transit(now) {
                Some(at) => {
                    ack.arrival_time = at;
                    if ack.is_duplicate {
                        self.streams[i].dup_acks_in_flight += 1;
                    }
                    self.push(at, 1, Ev::Ack(i, ack));
                }
                None => {
                    if ack.is_duplicate {
                        self.streams[i].dup_acks_lost += 1;
                    }
                }
            }
        }
        self.pending_acks = acks;
    }

    fn finish(self) -> TransferOutcome {
        let duration = self.cfg.duration_s;
        let unreleased: Vec<u64> = {
            let mut v = vec![0u64; self.streams.len()];
            for (i, a) in &self.pending_acks {
                if a.is_duplicate {
                    v[*i] += 1;
                }
            }
            v
        };
        let streams: Vec<TransferMetrics> = self
            .streams
            .iter()
            .zip(unreleased)
            .map(|(s, pending)| {
                let c = &s.sender.counters;
                let r = &s.receiver.counters;
                TransferMetrics {
                    goodput_proxy: c.bytes_acked as f64 / duration,
                    bytes_acked: c.bytes_acked,
                    segments_sent: c.segments_sent,
                    pkts_retrans: c.pkts_retrans,
                    fast_retransmits: c.fast_retransmits,
                    timeouts: c.timeouts,
                    spurious_retransmits: c.spurious_retransmits,
                    dup_acks_in: c.dup_acks_in,
                    sack_blocks_rcvd: c.sack_blocks_in,
                    max_dupthresh: c.max_dupthresh,
                    dup_acks_sent: r.dup_acks_sent,
                    dup_acks_lost: s.dup_acks_lost,
                    dup_acks_unarrived: s.dup_acks_in_flight + pending,
                    bytes_delivered: r.bytes_delivered,
                    reorder_pre: s.pre.report(),
                    reorder_post: s.post.report(),
                    max_hold_delay_us: s.max_hold,
                }
            })
            .collect();
        let aggregate = aggregate(&streams, duration);
        let mean_block_size = if self.cycles == 0 { 0.0 } else { self.cycle_packets as f64 / self.cycles as f64 };
        TransferOutcome {
            streams,
            aggregate,
            cycles: self.cycles,
            cycle_packets: self.cycle_packets,
            mean_block_size,
            max_block_size: self.max_block,
            hold: self.hold,
            forward_dropped: self.forward.dropped(),
            reverse_dropped: self.reverse.dropped(),
        }
    }
}

fn merge_reports(reports: impl Iterator<Item = ReorderReport>) -> ReorderReport {
    let mut total = 0;
    let mut reordered = 0;
    let mut max_extent = 0;
    for r in reports {
        total += r.total_packets;
        reordered += r.reordered_count;
        max_extent = max_extent.max(r.max_extent);
    }
    ReorderReport {
        total_packets: total,
        reordered_count: reordered,
        ratio: if total == 0 { 0.0 } else { reordered as f64 / total as f64 },
        max_extent,
        intra_block: None,
        inter_block: None,
    }
}

fn aggregate(streams: &[TransferMetrics], duration: f64) -> TransferMetrics {
    let sum = |f: fn(&TransferMetrics) -> u64| streams.iter().map(f).sum::<u64>();
    let bytes_acked = sum(|m| m.bytes_acked);
    TransferMetrics {
        goodput_proxy: bytes_acked as f64 / duration,
        bytes_acked,
        segments_sent: sum(|m| m.segments_sent),
        pkts_retrans: sum(|m| m.pkts_retrans),
        fast_retransmits: sum(|m| m.fast_retransmits),
        timeouts: sum(|m| m.timeouts),
        spurious_retransmits: sum(|m| m.spurious_retransmits),
        dup_acks_in: sum(|m| m.dup_acks_in),
        sack_blocks_rcvd: sum(|m| m.sack_blocks_rcvd),
        max_dupthresh: streams.iter().map(|m| m.max_dupthresh).max().unwrap_or(0),
        dup_acks_sent: sum(|m| m.dup_acks_sent),
        dup_acks_lost: sum(|m| m.dup_acks_lost),
        dup_acks_unarrived: sum(|m| m.dup_acks_unarrived),
        bytes_delivered: sum(|m| m.bytes_delivered),
        reorder_pre: merge_reports(streams.iter().map(|m| m.reorder_pre)),
        reorder_post: merge_reports(streams.iter().map(|m| m.reorder_post)),
        max_hold_delay_us: streams.iter().map(|m| m.max_hold_delay_us).fold(0.0, f64::max),
    }
}
