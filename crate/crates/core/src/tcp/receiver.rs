use alloc::vec::Vec;

use arrayvec::ArrayVec;

use super::{AckRecord, SackBlock, MAX_SACK_BLOCKS};
use crate::packet::{payload_end, FlowKey, Packet, SeqNum};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReceiverCounters {
    pub segments_received: u64,
    pub acks_sent: u64,
    pub dup_acks_sent: u64,
    pub sack_blocks_sent: u64,
    /// Bytes handed to the application in order.
    pub bytes_delivered: u64,
}

#[derive(Debug, Clone, Copy)]
struct OooRange {
    start: SeqNum,
    end: SeqNum,
    touched: u64,
}

/// Receive side of one connection. Every segment is acknowledged
/// immediately; there is no delayed ACK.
#[derive(Debug, Clone)]
pub struct ReceiverState {
    flow: FlowKey,
    rcv_nxt: SeqNum,
    /// Disjoint, non-adjacent, ascending, all above `rcv_nxt`.
    ooo: Vec<OooRange>,
    sack_enabled: bool,
    clock: u64,
    pub counters: ReceiverCounters,
}

impl ReceiverState {
    pub fn new(flow: FlowKey, isn: SeqNum, sack_enabled: bool) -> Self {
        ReceiverState {
            flow,
            rcv_nxt: isn,
            ooo: Vec::new(),
            sack_enabled,
            clock: 0,
            counters: ReceiverCounters::default(),
        }
    }

    pub fn rcv_nxt(&self) -> SeqNum {
        self.rcv_nxt
    }

    pub fn sack_enabled(&self) -> bool {
        self.sack_enabled
    }

    /// Out-of-order ranges held above `rcv_nxt`, ascending.
    pub fn out_of_order(&self) -> impl Iterator<Item = SackBlock> + '_ {
        self.ooo.iter().map(|r| SackBlock { start: r.start, end: r.end })
    }

    pub fn on_segment(&mut self, seg: &Packet, now: f64) -> AckRecord {
        self.counters.segments_received += 1;
        self.clock += 1;
        let start = seg.seq;
        let end = payload_end(seg);

        let advanced = if end.le(self.rcv_nxt) {
            false
        } else if start.le(self.rcv_nxt) {
            let before = self.rcv_nxt;
            self.rcv_nxt = end;
            while let Some(first) = self.ooo.first() {
                if first.start.gt(self.rcv_nxt) {
                    break;
                }
                self.rcv_nxt = self.rcv_nxt.max(first.end);
                self.ooo.remove(0);
            }
            self.counters.bytes_delivered += self.rcv_nxt.diff(before) as u64;
            true
        } else {
            self.insert_ooo(start, end);
            false
        };

        let mut sack_blocks = ArrayVec::new();
        if self.sack_enabled && !self.ooo.is_empty() {
            let mut recent: ArrayVec<OooRange, MAX_SACK_BLOCKS> = ArrayVec::new();
            for r in &self.ooo {
                if recent.len() < MAX_SACK_BLOCKS {
                    recent.push(*r);
                } else if let Some(oldest) =
                    recent.iter_mut().min_by_key(|x| x.touched).filter(|x| x.touched < r.touched)
                {
                    *oldest = *r;
                }
            }
            recent.sort_by_key(|r| core::cmp::Reverse(r.touched));
            for r in recent {
                sack_blocks.push(SackBlock { start: r.start, end: r.end });
            }
        }

        self.counters.acks_sent += 1;
        if !advanced {
            self.counters.dup_acks_sent += 1;
        }
        self.counters.sack_blocks_sent += sack_blocks.len() as u64;
        AckRecord {
            flow: self.flow,
            ack_seq: self.rcv_nxt,
            sack_blocks,
            is_duplicate: !advanced,
            send_time: now,
            arrival_time: now,
        }
    }

    fn insert_ooo(&mut self, start: SeqNum, end: SeqNum) {
        let touched = self.clock;
        // first range that ends at or after `start` (could merge)
        let lo = self.ooo.partition_point(|r| r.end.lt(start));
        let mut hi = lo;
        while hi < self.ooo.len() && self.ooo[hi].start.le(end) {
            hi += 1;
        }
        if lo == hi {
            self.ooo.insert(lo, OooRange { start, end, touched });
            return;
        }
        let contained = hi == lo + 1 && self.ooo[lo].start.le(start) && end.le(self.ooo[lo].end);
        if contained {
            return;
        }
        let merged = OooRange {
            start: if self.ooo[lo].start.lt(start) { self.ooo[lo].start } else { start },
            end: self.ooo[hi - 1].end.max(end),
            touched,
        };
        self.ooo.drain(lo..hi);
        self.ooo.insert(lo, merged);
    }
}
