//! Simplified TCP: a cumulative/SACK receiver, a Reno-style sender with a
//! static or adaptive duplicate-ACK threshold, and the event loop that runs
//! them over emulated paths with the receive ring and SRPIC in between.

mod receiver;
mod sender;
mod sim;

use arrayvec::ArrayVec;

use crate::packet::{FlowKey, SeqNum};

pub use receiver::{ReceiverCounters, ReceiverState};
pub use sender::{
    DupthreshMode, SegmentRecord, SenderAction, SenderCounters, SenderParams, SenderState, MAX_DUPTHRESH, MIN_DUPTHRESH,
};
pub use sim::{run_transfer, HoldStats, SrpicSettings, TransferConfig, TransferMetrics, TransferOutcome};

/// Maximum SACK blocks carried by one ACK.
pub const MAX_SACK_BLOCKS: usize = 3;

/// Half-open received byte range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SackBlock {
    pub start: SeqNum,
    pub end: SeqNum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AckRecord {
    pub flow: FlowKey,
    /// Cumulative acknowledgement: next byte expected.
    pub ack_seq: SeqNum,
    /// Most recently changed block first.
    pub sack_blocks: ArrayVec<SackBlock, MAX_SACK_BLOCKS>,
    pub is_duplicate: bool,
    pub send_time: f64,
    pub arrival_time: f64,
}
