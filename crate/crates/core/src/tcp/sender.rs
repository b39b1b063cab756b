use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::AckRecord;
use crate::error::Error;
use crate::packet::SeqNum;

pub const MIN_DUPTHRESH: u32 = 3;
pub const MAX_DUPTHRESH: u32 = 127;
const MAX_BACKOFF: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DupthreshMode {
    /// Fast retransmit after three duplicate ACKs.
    #[default]
    Static,
    /// Raise the threshold to the observed reordering extent plus one, up to
    /// [`MAX_DUPTHRESH`], and relax it by one per quiet RTO interval.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SenderParams {
    pub mss: u32,
    /// Per-packet header overhead on the wire.
    pub header_bytes: u32,
    pub initial_cwnd: f64,
    /// Cap on cwnd and on segments outstanding, in segments.
    pub max_cwnd: f64,
    /// Rate of the sender's NIC, Mbit/s.
    pub link_rate_mbps: f64,
    pub min_rto_ms: f64,
    pub initial_rto_ms: f64,
}

impl Default for SenderParams {
    fn default() -> Self {
        SenderParams {
            mss: 1448,
            header_bytes: 52,
            initial_cwnd: 10.0,
            max_cwnd: 256.0,
            link_rate_mbps: 2_000.0,
            min_rto_ms: 200.0,
            initial_rto_ms: 1000.0,
        }
    }
}

impl SenderParams {
    pub fn wire_bytes(&self) -> u32 {
        self.mss + self.header_bytes
    }

    /// Serialization time of one full segment, microseconds.
    pub fn tx_time_us(&self) -> f64 {
        self.wire_bytes() as f64 * 8.0 / self.link_rate_mbps
    }

    /// Packets per second the link can emit.
    pub fn link_pps(&self) -> f64 {
        1e6 / self.tx_time_us()
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.mss == 0 {
            return Err(Error::Config("sender.mss must be positive"));
        }
        if !(self.link_rate_mbps > 0.0) || !self.link_rate_mbps.is_finite() {
            return Err(Error::Config("sender.link_rate_mbps must be positive"));
        }
        if !(self.initial_cwnd >= 1.0) || !(self.max_cwnd >= self.initial_cwnd) {
            return Err(Error::Config("sender cwnd bounds must satisfy 1 <= initial_cwnd <= max_cwnd"));
        }
        if !self.max_cwnd.is_finite() {
            return Err(Error::Config("sender.max_cwnd must be finite"));
        }
        if !(self.min_rto_ms > 0.0) || !(self.initial_rto_ms > 0.0) {
            return Err(Error::Config("sender RTO values must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenderAction {
    Transmit { seq: SeqNum, len: u32 },
    Retransmit { seq: SeqNum, len: u32 },
    CwndUpdate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SenderCounters {
    /// Every transmission, first copies and retransmissions alike.
    pub segments_sent: u64,
    pub pkts_retrans: u64,
    pub fast_retransmits: u64,
    pub timeouts: u64,
    /// ACKs that arrived flagged duplicate.
    pub dup_acks_in: u64,
    pub sack_blocks_in: u64,
    pub bytes_acked: u64,
    /// Fast retransmits later judged unnecessary.
    pub spurious_retransmits: u64,
    pub max_dupthresh: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentRecord {
    pub seq: SeqNum,
    pub len: u32,
    pub sacked: bool,
    pub lost: bool,
    pub retransmitted: bool,
    pub first_sent: f64,
    pub last_sent: f64,
}

impl SegmentRecord {
    fn end(&self) -> SeqNum {
        self.seq.add(self.len)
    }
}

/// Reno-style sender for an unlimited bulk source. Times are microseconds.
#[derive(Debug, Clone)]
pub struct SenderState {
    params: SenderParams,
    mode: DupthreshMode,
    snd_una: SeqNum,
    snd_nxt: SeqNum,
    cwnd: f64,
    ssthresh: f64,
    dupthresh: u32,
    dup_ack_count: u32,
    /// `snd_nxt` when fast recovery began.
    recover: Option<SeqNum>,
    queue: VecDeque<SegmentRecord>,
    sacked_count: usize,
    lost_count: usize,
    srtt: Option<f64>,
    min_rtt: f64,
    backoff: f64,
    rto_deadline: Option<f64>,
    timer_gen: u64,
    last_evidence: f64,
    last_decay: f64,
    pub counters: SenderCounters,
}

impl SenderState {
    pub fn new(params: SenderParams, mode: DupthreshMode, isn: SeqNum) -> Self {
        SenderState {
            params,
            mode,
            snd_una: isn,
            snd_nxt: isn,
            cwnd: params.initial_cwnd,
            ssthresh: params.max_cwnd,
            dupthresh: MIN_DUPTHRESH,
            dup_ack_count: 0,
            recover: None,
            queue: VecDeque::new(),
            sacked_count: 0,
            lost_count: 0,
            srtt: None,
            min_rtt: f64::INFINITY,
            backoff: 1.0,
            rto_deadline: None,
            timer_gen: 0,
            last_evidence: 0.0,
            last_decay: 0.0,
            counters: SenderCounters { max_dupthresh: MIN_DUPTHRESH, ..SenderCounters::default() },
        }
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn dupthresh(&self) -> u32 {
        self.dupthresh
    }

    pub fn snd_una(&self) -> SeqNum {
        self.snd_una
    }

    pub fn snd_nxt(&self) -> SeqNum {
        self.snd_nxt
    }

    pub fn in_recovery(&self) -> bool {
        self.recover.is_some()
    }

    pub fn outstanding(&self) -> &VecDeque<SegmentRecord> {
        &self.queue
    }

    pub fn srtt(&self) -> Option<f64> {
        self.srtt
    }

    /// Pending retransmission deadline and a generation number that changes
    /// whenever the deadline does.
    pub fn timer(&self) -> (Option<f64>, u64) {
        (self.rto_deadline, self.timer_gen)
    }

    /// Current retransmission timeout in microseconds, before backoff.
    pub fn rto(&self) -> f64 {
        match self.srtt {
            Some(s) => (2.0 * s).max(self.params.min_rto_ms * 1e3),
            None => self.params.initial_rto_ms * 1e3,
        }
    }

    fn pipe(&self) -> usize {
        let left = self.sacked_count.max(self.dup_ack_count as usize);
        self.queue.len().saturating_sub(left + self.lost_count)
    }

    fn set_timer(&mut self, deadline: Option<f64>) {
        if self.rto_deadline != deadline {
            self.rto_deadline = deadline;
            self.timer_gen += 1;
        }
    }

    /// Opens the connection: sends the initial window.
    pub fn start(&mut self, now: f64) -> Vec<SenderAction> {
        let mut actions = Vec::new();
        self.fill_window(now, &mut actions);
        actions
    }

    pub fn on_ack(&mut self, ack: &AckRecord, now: f64) -> Vec<SenderAction> {
        let mut actions = Vec::new();
        if ack.is_duplicate {
            self.counters.dup_acks_in += 1;
        }
        self.counters.sack_blocks_in += ack.sack_blocks.len() as u64;
        for b in &ack.sack_blocks {
            self.mark_sacked(b.start, b.end);
        }

        let advance = ack.ack_seq.diff(self.snd_una);
        if advance > 0 && ack.ack_seq.le(self.snd_nxt) {
            self.new_ack(ack.ack_seq, now, &mut actions);
        } else if advance == 0 && ack.is_duplicate && !self.queue.is_empty() {
            self.dup_ack_count += 1;
            if self.recover.is_none() && self.dup_ack_count == self.dupthresh {
                self.fast_retransmit(now, &mut actions);
            }
        }
        self.relax_dupthresh(now);
        self.fill_window(now, &mut actions);
        actions
    }

    pub fn on_timeout(&mut self, now: f64) -> Vec<SenderAction> {
        let mut actions = Vec::new();
        if self.queue.is_empty() {
            self.set_timer(None);
            return actions;
        }
        self.counters.timeouts += 1;
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.recover = None;
        self.dup_ack_count = 0;
        for s in self.queue.iter_mut() {
            if !s.sacked {
                s.lost = true;
            }
        }
        self.lost_count = self.queue.len() - self.sacked_count;
        self.backoff = (self.backoff * 2.0).min(MAX_BACKOFF);
        actions.push(SenderAction::CwndUpdate);
        self.relax_dupthresh(now);
        self.fill_window(now, &mut actions);
        self.set_timer(Some(now + self.rto() * self.backoff));
        actions
    }

    fn mark_sacked(&mut self, start: SeqNum, end: SeqNum) {
        let first = self.queue.partition_point(|s| s.seq.lt(start));
        for s in self.queue.iter_mut().skip(first) {
            if s.end().gt(end) {
                break;
            }
            if !s.sacked {
                s.sacked = true;
                self.sacked_count += 1;
                if s.lost {
                    s.lost = false;
                    self.lost_count -= 1;
                }
            }
        }
    }

    fn new_ack(&mut self, ack_seq: SeqNum, now: f64, actions: &mut Vec<SenderAction>) {
        let hole = self.queue.front().copied();
        let mut sacked_above = self.sacked_count;
        let mut extent = 0u32;
        let mut acked = 0u32;
        let mut rtt_sample = None;
        while let Some(front) = self.queue.front().copied() {
            if front.end().gt(ack_seq) {
                break;
            }
            self.queue.pop_front();
            acked += 1;
            if front.sacked {
                self.sacked_count -= 1;
                sacked_above -= 1;
            } else if !front.retransmitted && sacked_above > 0 {
                // filled by the original copy after later data was SACKed
                extent = extent.max(sacked_above as u32);
            }
            if front.lost {
                self.lost_count -= 1;
            }
            if !front.retransmitted {
                rtt_sample = Some(now - front.first_sent);
            }
        }
        self.counters.bytes_acked += ack_seq.diff(self.snd_una) as u64;
        self.snd_una = ack_seq;
        self.backoff = 1.0;

        if self.dup_ack_count > 0 {
            if let Some(h) = hole {
                if !h.retransmitted {
                    extent = extent.max(self.dup_ack_count);
                } else if self.min_rtt.is_finite() && now - h.last_sent < self.min_rtt / 2.0 {
                    self.counters.spurious_retransmits += 1;
                    extent = extent.max(self.dup_ack_count);
                }
            }
        }
        if extent > 0 {
            self.last_evidence = now;
            if self.mode == DupthreshMode::Adaptive {
                self.dupthresh = self.dupthresh.max(extent + 1).min(MAX_DUPTHRESH);
                self.counters.max_dupthresh = self.counters.max_dupthresh.max(self.dupthresh);
            }
        }

        if let Some(s) = rtt_sample {
            self.srtt = Some(match self.srtt {
                Some(old) => 0.875 * old + 0.125 * s,
                None => s,
            });
            self.min_rtt = self.min_rtt.min(s);
        }

        self.dup_ack_count = 0;
        match self.recover.take() {
            // any new ACK ends recovery; later holes need fresh dupACKs
            Some(_) => {
                self.cwnd = self.ssthresh;
                actions.push(SenderAction::CwndUpdate);
            }
            None => {
                let n = acked as f64;
                self.cwnd = if self.cwnd < self.ssthresh { self.cwnd + n } else { self.cwnd + n / self.cwnd };
                self.cwnd = self.cwnd.min(self.params.max_cwnd);
            }
        }

        let deadline = if self.queue.is_empty() { None } else { Some(now + self.rto()) };
        self.set_timer(deadline);
    }

    fn fast_retransmit(&mut self, now: f64, actions: &mut Vec<SenderAction>) {
        self.counters.fast_retransmits += 1;
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = self.ssthresh;
        self.recover = Some(self.snd_nxt);
        actions.push(SenderAction::CwndUpdate);
        self.retransmit_front(now, actions);
    }

    fn retransmit_front(&mut self, now: f64, actions: &mut Vec<SenderAction>) {
        let Some(front) = self.queue.front_mut() else {
            return;
        };
        if front.sacked {
            return;
        }
        if front.lost {
            front.lost = false;
            self.lost_count -= 1;
        }
        front.retransmitted = true;
        front.last_sent = now;
        let (seq, len) = (front.seq, front.len);
        self.counters.pkts_retrans += 1;
        self.counters.segments_sent += 1;
        actions.push(SenderAction::Retransmit { seq, len });
    }

    fn relax_dupthresh(&mut self, now: f64) {
        if self.mode != DupthreshMode::Adaptive || self.dupthresh <= MIN_DUPTHRESH {
            return;
        }
        let quiet = self.rto();
        if now - self.last_evidence >= quiet && now - self.last_decay >= quiet {
            self.dupthresh -= 1;
            self.last_decay = now;
        }
    }

    fn fill_window(&mut self, now: f64, actions: &mut Vec<SenderAction>) {
        let window = libm::floor(self.cwnd).max(1.0) as usize;
        let limit = self.params.max_cwnd as usize;
        while self.pipe() < window {
            if self.lost_count > 0 {
                let Some(s) = self.queue.iter_mut().find(|s| s.lost) else {
                    break;
                };
                s.lost = false;
                s.retransmitted = true;
                s.last_sent = now;
                let (seq, len) = (s.seq, s.len);
                self.lost_count -= 1;
                self.counters.pkts_retrans += 1;
                self.counters.segments_sent += 1;
                actions.push(SenderAction::Retransmit { seq, len });
                continue;
            }
            if self.queue.len() >= limit {
                break;
            }
            let seq = self.snd_nxt;
            let len = self.params.mss;
            self.queue.push_back(SegmentRecord {
                seq,
                len,
                sacked: false,
                lost: false,
                retransmitted: false,
                first_sent: now,
                last_sent: now,
            });
            self.snd_nxt = seq.add(len);
            self.counters.segments_sent += 1;
            actions.push(SenderAction::Transmit { seq, len });
        }
        if self.rto_deadline.is_none() && !self.queue.is_empty() {
            self.set_timer(Some(now + self.rto() * self.backoff));
        }
    }
}
