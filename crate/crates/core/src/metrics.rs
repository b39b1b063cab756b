//! Reordering metrics in the RFC 4737 style.
//!
//! A packet is *reordered* when its sequence number is below the receiver's
//! next expected sequence (the largest payload end seen so far). Its *extent*
//! is the number of earlier arrivals carrying a greater sequence number. Given
//! a partition of the arrival trace into sorting blocks, a reordered packet is
//! *intra-block* when all of those earlier, greater packets sit in its own
//! block, and *inter-block* otherwise.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::packet::{Packet, SeqNum};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReorderReport {
    pub total_packets: usize,
    pub reordered_count: usize,
    pub ratio: f64,
    pub max_extent: usize,
    /// Only set when a block partition was supplied.
    pub intra_block: Option<usize>,
    pub inter_block: Option<usize>,
}

impl ReorderReport {
    pub fn analyze(trace: &[Packet], partition: Option<&[usize]>) -> Result<Self, Error> {
        let offsets = checked_offsets(trace)?;
        let walk = walk(trace, &offsets);
        let (intra, inter) = match partition {
            Some(blocks) => {
                let (a, b) = classify(&offsets, &walk.reordered, blocks)?;
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        let count = walk.count();
        Ok(ReorderReport {
            total_packets: trace.len(),
            reordered_count: count,
            ratio: ratio(count, trace.len()),
            max_extent: max_extent_of(&offsets, &walk.reordered),
            intra_block: intra,
            inter_block: inter,
        })
    }
}

fn ratio(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

/// Number of reordered packets and their share of the trace.
pub fn reordered_count(trace: &[Packet]) -> Result<(usize, f64), Error> {
    let offsets = checked_offsets(trace)?;
    let n = walk(trace, &offsets).count();
    Ok((n, ratio(n, trace.len())))
}

/// Largest reordering extent over the trace, 0 when nothing is reordered.
pub fn max_reordering_extent(trace: &[Packet]) -> Result<usize, Error> {
    let offsets = checked_offsets(trace)?;
    let w = walk(trace, &offsets);
    Ok(max_extent_of(&offsets, &w.reordered))
}

/// Splits the reordered packets into (intra-block, inter-block). `blocks`
/// holds consecutive block lengths that must cover the trace exactly.
pub fn classify_block_reordering(trace: &[Packet], blocks: &[usize]) -> Result<(usize, usize), Error> {
    let offsets = checked_offsets(trace)?;
    let w = walk(trace, &offsets);
    classify(&offsets, &w.reordered, blocks)
}

/// Sequence offsets relative to the first packet, after rejecting traces
/// whose payload ranges overlap.
fn checked_offsets(trace: &[Packet]) -> Result<Vec<i64>, Error> {
    let Some(first) = trace.first() else {
        return Ok(Vec::new());
    };
    let offsets: Vec<i64> = trace.iter().map(|p| p.seq.diff(first.seq) as i64).collect();
    let mut order: Vec<usize> = (0..trace.len()).collect();
    order.sort_by_key(|&i| (offsets[i], trace[i].payload_len));
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        let a_end = offsets[a] + trace[a].payload_len as i64;
        let same_start = offsets[a] == offsets[b] && (trace[a].payload_len > 0 || trace[b].payload_len > 0);
        if a_end > offsets[b] || same_start {
            return Err(Error::OverlappingPayload { first: a.min(b), second: a.max(b) });
        }
    }
    Ok(offsets)
}

struct Walk {
    reordered: Vec<bool>,
}

impl Walk {
    fn count(&self) -> usize {
        self.reordered.iter().filter(|r| **r).count()
    }
}

fn walk(trace: &[Packet], offsets: &[i64]) -> Walk {
    let mut reordered = vec![false; trace.len()];
    let mut next_exp: Option<i64> = None;
    for (i, p) in trace.iter().enumerate() {
        let start = offsets[i];
        let end = start + p.payload_len as i64;
        match next_exp {
            Some(ne) if start < ne => reordered[i] = true,
            Some(ne) => next_exp = Some(ne.max(end)),
            None => next_exp = Some(end),
        }
    }
    Walk { reordered }
}

fn max_extent_of(offsets: &[i64], reordered: &[bool]) -> usize {
    if !reordered.iter().any(|r| *r) {
        return 0;
    }
    let mut ranks: Vec<i64> = offsets.to_vec();
    ranks.sort_unstable();
    ranks.dedup();
    let mut seen = Fenwick::new(ranks.len());
    let mut best = 0;
    for (i, off) in offsets.iter().enumerate() {
        let r = ranks.binary_search(off).unwrap();
        if reordered[i] {
            let greater = seen.total() - seen.prefix(r + 1);
            best = best.max(greater as usize);
        }
        seen.add(r, 1);
    }
    best
}

fn classify(offsets: &[i64], reordered: &[bool], blocks: &[usize]) -> Result<(usize, usize), Error> {
    if let Some(pos) = blocks.iter().position(|b| *b == 0) {
        return Err(Error::EmptyBlock(pos));
    }
    let covered: usize = blocks.iter().sum();
    if covered != offsets.len() {
        return Err(Error::PartitionMismatch { covered, len: offsets.len() });
    }
    let (mut intra, mut inter) = (0, 0);
    let mut start = 0;
    let mut max_before: Option<i64> = None;
    for &len in blocks {
        let block = start..start + len;
        for i in block.clone() {
            if reordered[i] {
                if max_before.is_none_or(|m| m <= offsets[i]) {
                    intra += 1;
                } else {
                    inter += 1;
                }
            }
        }
        let block_max = offsets[block].iter().copied().max();
        max_before = max_before.max(block_max);
        start += len;
    }
    Ok((intra, inter))
}

/// Binary indexed tree over `u32` counts.
#[derive(Debug, Clone)]
struct Fenwick {
    tree: Vec<u32>,
    total: u32,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0; n + 1], total: 0 }
    }

    fn len(&self) -> usize {
        self.tree.len() - 1
    }

    fn add(&mut self, idx: usize, v: u32) {
        self.total += v;
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over `[0, n)`.
    fn prefix(&self, n: usize) -> u32 {
        let mut s = 0;
        let mut i = n.min(self.len());
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    fn total(&self) -> u32 {
        self.total
    }
}

/// Incremental metrics for long simulated traces of fixed-size segments.
///
/// Segments are identified by `(seq - base) / unit`. Later copies of a
/// segment already seen are ignored, as RFC 4737 only considers the first
/// arrival of each packet.
#[derive(Debug, Clone)]
pub struct ReorderTracker {
    base: SeqNum,
    unit: u32,
    highest: u64,
    highest_seq: SeqNum,
    next_exp: u64,
    started: bool,
    seen: Vec<bool>,
    fenwick: Fenwick,
    total: usize,
    reordered: usize,
    max_extent: usize,
    duplicates: usize,
}

impl ReorderTracker {
    pub fn new(base: SeqNum, unit: u32) -> Self {
        ReorderTracker {
            base,
            unit: unit.max(1),
            highest: 0,
            highest_seq: base,
            next_exp: 0,
            started: false,
            seen: Vec::new(),
            fenwick: Fenwick::new(0),
            total: 0,
            reordered: 0,
            max_extent: 0,
            duplicates: 0,
        }
    }

    fn unwrap(&mut self, seq: SeqNum) -> u64 {
        let off = (self.highest as i64 + seq.diff(self.highest_seq) as i64).max(0) as u64;
        if off > self.highest {
            self.highest = off;
            self.highest_seq = seq;
        }
        off
    }

    fn ensure(&mut self, slot: usize) {
        if slot < self.seen.len() {
            return;
        }
        let cap = (slot + 1).next_power_of_two().max(1024);
        self.seen.resize(cap, false);
        let mut f = Fenwick::new(cap);
        for (i, s) in self.seen.iter().enumerate() {
            if *s {
                f.add(i, 1);
            }
        }
        self.fenwick = f;
    }

    pub fn observe(&mut self, p: &Packet) {
        let off = self.unwrap(p.seq);
        let slot = (off / self.unit as u64) as usize;
        self.ensure(slot);
        if self.seen[slot] {
            self.duplicates += 1;
            return;
        }
        self.seen[slot] = true;
        self.total += 1;
        let end = off + p.payload_len as u64;
        if self.started && off < self.next_exp {
            self.reordered += 1;
            let greater = self.fenwick.total() - self.fenwick.prefix(slot + 1);
            self.max_extent = self.max_extent.max(greater as usize);
        } else {
            self.next_exp = self.next_exp.max(end);
            self.started = true;
        }
        self.fenwick.add(slot, 1);
    }

    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn report(&self) -> ReorderReport {
        ReorderReport {
            total_packets: self.total,
            reordered_count: self.reordered,
            ratio: ratio(self.reordered, self.total),
            max_extent: self.max_extent,
            intra_block: None,
            inter_block: None,
        }
    }

    pub fn base(&self) -> SeqNum {
        self.base
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::FlowKey;

    const FLOW: FlowKey = FlowKey::new(1, 2, 1000, 80);

    fn units(seqs: &[u32]) -> Vec<Packet> {
        seqs.iter().map(|s| Packet::data(FLOW, *s, 1)).collect()
    }

    #[test]
    fn in_order_has_no_reordering() {
        let t = units(&[1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(reordered_count(&t).unwrap(), (0, 0.0));
        assert_eq!(max_reordering_extent(&t).unwrap(), 0);
    }

    #[test]
    fn two_three_one_arrival_order() {
        let t = units(&[2, 3, 1, 4, 6, 7, 5]);
        let (n, r) = reordered_count(&t).unwrap();
        assert_eq!(n, 2);
        assert!((r - 2.0 / 7.0).abs() < 1e-12);
        assert_eq!(max_reordering_extent(&t).unwrap(), 2);
    }

    #[test]
    fn extents() {
        assert_eq!(max_reordering_extent(&units(&[2, 1])).unwrap(), 1);
        assert_eq!(max_reordering_extent(&units(&[2, 3, 4, 1])).unwrap(), 3);
    }

    #[test]
    fn block_classification() {
        assert_eq!(classify_block_reordering(&units(&[2, 1, 3, 4]), &[2, 2]).unwrap(), (1, 0));
        assert_eq!(classify_block_reordering(&units(&[2, 3, 1, 4]), &[2, 2]).unwrap(), (0, 1));
        let t = units(&[5, 3, 1, 4, 2]);
        let (intra, inter) = classify_block_reordering(&t, &[5]).unwrap();
        assert_eq!(inter, 0);
        assert_eq!(intra, reordered_count(&t).unwrap().0);
    }

    #[test]
    fn bad_partitions_rejected() {
        let t = units(&[1, 2, 3]);
        assert!(matches!(classify_block_reordering(&t, &[1, 1]), Err(Error::PartitionMismatch { covered: 2, len: 3 })));
        assert!(matches!(classify_block_reordering(&t, &[3, 0]), Err(Error::EmptyBlock(1))));
    }

    #[test]
    fn overlapping_payloads_rejected() {
        let t = vec![Packet::data(FLOW, 0, 10), Packet::data(FLOW, 5, 10)];
        assert!(matches!(reordered_count(&t), Err(Error::OverlappingPayload { .. })));
        let dup = units(&[1, 2, 1]);
        assert!(reordered_count(&dup).is_err());
    }

    #[test]
    fn report_fields() {
        let t = units(&[2, 3, 1, 4]);
        let r = ReorderReport::analyze(&t, Some(&[2, 2])).unwrap();
        assert_eq!(r.total_packets, 4);
        assert_eq!(r.reordered_count, 1);
        assert_eq!(r.intra_block, Some(0));
        assert_eq!(r.inter_block, Some(1));
        let r = ReorderReport::analyze(&t, None).unwrap();
        assert_eq!(r.intra_block, None);
        assert_eq!(ReorderReport::analyze(&[], None).unwrap().ratio, 0.0);
    }

    #[test]
    fn byte_sequences_across_wrap() {
        let base = u32::MAX - 1000;
        let t: Vec<Packet> =
            [0u32, 1448, 4344, 2896].iter().map(|o| Packet::data(FLOW, base.wrapping_add(*o), 1448)).collect();
        assert_eq!(reordered_count(&t).unwrap().0, 1);
        assert_eq!(max_reordering_extent(&t).unwrap(), 1);
    }

    #[test]
    fn tracker_matches_batch_and_skips_duplicates() {
        let base = SeqNum(u32::MAX - 3000);
        let order = [0u32, 2, 1, 5, 3, 4, 9, 6, 7, 8];
        let trace: Vec<Packet> =
            order.iter().map(|i| Packet::data(FLOW, base.0.wrapping_add(i * 1448), 1448)).collect();
        let mut tr = ReorderTracker::new(base, 1448);
        for p in &trace {
            tr.observe(p);
        }
        tr.observe(&trace[3]);
        let batch = ReorderReport::analyze(&trace, None).unwrap();
        assert_eq!(tr.report(), batch);
        assert_eq!(tr.duplicates(), 1);
    }
}
