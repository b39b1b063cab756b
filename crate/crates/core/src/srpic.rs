//! Per-flow sorting of the packets fetched in one interrupt-coalescing cycle.
//!
//! Each flow gets a [`SrpicManager`] holding three lists. The first packet of a
//! block seeds `curr`, which then grows with in-sequence packets; anything
//! below the expected sequence goes to `prev`, anything above it to `after`.
//! A flush delivers `prev ++ curr ++ after`, which is ascending for
//! duplicate-free input.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::packet::{is_suitable, payload_end, FlowKey, Packet, SeqNum};

pub const DEFAULT_BLOCK_SIZE: usize = 32;
pub const DEFAULT_RINGBUFFER_SIZE: usize = 512;

#[derive(Debug, Clone)]
pub struct SrpicManager {
    block_size: usize,
    packet_cnt: usize,
    next_exp: SeqNum,
    prev: Vec<Packet>,
    curr: Vec<Packet>,
    after: Vec<Packet>,
    idle_cycles: u32,
    active: bool,
}

impl SrpicManager {
    pub fn new(block_size: usize) -> Self {
        SrpicManager {
            block_size: block_size.max(1),
            packet_cnt: 0,
            next_exp: SeqNum(0),
            prev: Vec::new(),
            curr: Vec::new(),
            after: Vec::new(),
            idle_cycles: 0,
            active: false,
        }
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn packet_cnt(&self) -> usize {
        self.packet_cnt
    }

    pub fn next_exp(&self) -> SeqNum {
        self.next_exp
    }

    pub fn prev_list(&self) -> &[Packet] {
        &self.prev
    }

    pub fn curr_list(&self) -> &[Packet] {
        &self.curr
    }

    pub fn after_list(&self) -> &[Packet] {
        &self.after
    }

    pub fn is_empty(&self) -> bool {
        self.packet_cnt == 0
    }

    /// Routes `p` into one of the three lists without checking the block limit.
    pub fn insert(&mut self, p: Packet) {
        self.active = true;
        if self.packet_cnt == 0 {
            self.next_exp = payload_end(&p);
            self.curr.push(p);
            self.packet_cnt = 1;
            return;
        }
        match p.seq.cmp_serial(self.next_exp) {
            core::cmp::Ordering::Less => sorted_insert(&mut self.prev, p),
            core::cmp::Ordering::Equal => {
                self.next_exp = payload_end(&p);
                self.curr.push(p);
            }
            core::cmp::Ordering::Greater => sorted_insert(&mut self.after, p),
        }
        self.packet_cnt += 1;
    }

    /// Inserts `p` and flushes the block if it reached `block_size`.
    pub fn accept(&mut self, p: Packet) -> Option<Vec<Packet>> {
        self.insert(p);
        if self.packet_cnt >= self.block_size {
            Some(self.flush())
        } else {
            None
        }
    }

    /// Delivers `prev ++ curr ++ after` and reinitializes the manager.
    pub fn flush(&mut self) -> Vec<Packet> {
        let mut out = Vec::with_capacity(self.packet_cnt);
        self.flush_into(&mut out);
        out
    }

    pub fn flush_into(&mut self, out: &mut Vec<Packet>) {
        out.append(&mut self.prev);
        out.append(&mut self.curr);
        out.append(&mut self.after);
        self.packet_cnt = 0;
        self.next_exp = SeqNum(0);
    }
}

/// Stable insertion: equal sequence numbers keep arrival order.
fn sorted_insert(list: &mut Vec<Packet>, p: Packet) {
    // Fast path for the common ascending case.
    if list.last().is_none_or(|last| last.seq.le(p.seq)) {
        list.push(p);
        return;
    }
    let pos = list.partition_point(|q| q.seq.le(p.seq));
    list.insert(pos, p);
}

/// The driver-level sorter: one manager per flow plus the global hold counter.
#[derive(Debug, Clone)]
pub struct SrpicEngine {
    managers: Vec<(FlowKey, SrpicManager)>,
    index: BTreeMap<FlowKey, usize>,
    global_packet_cnt: usize,
    ringbuffer_size: usize,
    block_size: usize,
    idle_eviction: Option<u32>,
}

impl Default for SrpicEngine {
    fn default() -> Self {
        Self::new(DEFAULT_BLOCK_SIZE, DEFAULT_RINGBUFFER_SIZE)
    }
}

impl SrpicEngine {
    pub fn new(block_size: usize, ringbuffer_size: usize) -> Self {
        SrpicEngine {
            managers: Vec::new(),
            index: BTreeMap::new(),
            global_packet_cnt: 0,
            ringbuffer_size: ringbuffer_size.max(1),
            block_size: block_size.max(1),
            idle_eviction: None,
        }
    }

    /// Drop managers that saw no packet for `cycles` consecutive cycles.
    /// Off by default.
    pub fn with_idle_eviction(mut self, cycles: u32) -> Self {
        self.idle_eviction = Some(cycles.max(1));
        self
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn ringbuffer_size(&self) -> usize {
        self.ringbuffer_size
    }

    pub fn global_packet_cnt(&self) -> usize {
        self.global_packet_cnt
    }

    pub fn manager_count(&self) -> usize {
        self.managers.len()
    }

    /// Flow keys in manager creation order.
    pub fn manager_order(&self) -> impl Iterator<Item = &FlowKey> {
        self.managers.iter().map(|(k, _)| k)
    }

    pub fn manager(&self, key: &FlowKey) -> Option<&SrpicManager> {
        self.index.get(key).map(|&i| &self.managers[i].1)
    }

    /// Total packets currently held across all managers.
    pub fn held_packets(&self) -> usize {
        self.managers.iter().map(|(_, m)| m.packet_cnt).sum()
    }

    pub fn find_or_create_manager(&mut self, key: FlowKey) -> &mut SrpicManager {
        let idx = match self.index.get(&key) {
            Some(&i) => i,
            None => {
                let i = self.managers.len();
                self.managers.push((key, SrpicManager::new(self.block_size)));
                self.index.insert(key, i);
                i
            }
        };
        &mut self.managers[idx].1
    }

    /// Handles one fetched packet, appending anything delivered upward to `out`.
    pub fn process_into(&mut self, p: Packet, out: &mut Vec<Packet>) {
        if !is_suitable(&p) {
            out.push(p);
            return;
        }
        let m = self.find_or_create_manager(p.flow);
        m.insert(p);
        if m.packet_cnt >= m.block_size {
            m.flush_into(out);
        }
        self.global_packet_cnt += 1;
        if self.global_packet_cnt >= self.ringbuffer_size {
            self.flush_all_into(out);
        }
    }

    pub fn process_packet(&mut self, p: Packet) -> Vec<Packet> {
        let mut out = Vec::new();
        self.process_into(p, &mut out);
        out
    }

    /// Runs one whole coalescing cycle: every fetched packet in order, then the
    /// end-of-cycle flush.
    pub fn process_cycle<I>(&mut self, fetched: I) -> Vec<Packet>
    where
        I: IntoIterator<Item = Packet>,
    {
        let mut out = Vec::new();
        for p in fetched {
            self.process_into(p, &mut out);
        }
        self.end_cycle_into(&mut out);
        out
    }

    pub fn flush_all(&mut self) -> Vec<Packet> {
        let mut out = Vec::new();
        self.flush_all_into(&mut out);
        out
    }

    pub fn flush_all_into(&mut self, out: &mut Vec<Packet>) {
        for (_, m) in self.managers.iter_mut() {
            m.flush_into(out);
        }
        self.global_packet_cnt = 0;
    }

    /// End-of-coalescing flush plus idle-manager bookkeeping.
    pub fn end_cycle_into(&mut self, out: &mut Vec<Packet>) {
        self.flush_all_into(out);
        let Some(limit) = self.idle_eviction else {
            return;
        };
        let mut evicted = false;
        for (_, m) in self.managers.iter_mut() {
            if m.active {
                m.idle_cycles = 0;
                m.active = false;
            } else {
                m.idle_cycles += 1;
                evicted |= m.idle_cycles >= limit;
            }
        }
        if evicted {
            self.managers.retain(|(_, m)| m.idle_cycles < limit);
            self.index.clear();
            for (i, (k, _)) in self.managers.iter().enumerate() {
                self.index.insert(*k, i);
            }
        }
    }

    pub fn end_cycle(&mut self) -> Vec<Packet> {
        let mut out = Vec::new();
        self.end_cycle_into(&mut out);
        out
    }
}
