//! Receiver-side sorting of reordered TCP segments within interrupt-coalesced
//! blocks (SRPIC), plus the pieces needed to study it in simulation: an
//! interrupt-coalescing receive ring, a netem-like path emulator, RFC 4737
//! style reordering metrics and a simplified TCP sender/receiver pair.
//!
//! The crate is `no_std` and only needs `alloc`. All randomness comes from
//! seeded ChaCha streams and all float math goes through `libm`, so a run is a
//! pure function of its configuration.
#![no_std]
#![forbid(unsafe_code)]
// `!(x >= 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod channel;
pub mod coalescing;
pub mod error;
pub mod metrics;
pub mod packet;
pub mod srpic;
pub mod tcp;

pub use channel::{apply_path, PathConfig, PathEmulator};
pub use coalescing::{
    block_size_closed_form, hold_delay_bound, simulate_coalescing, CoalescingParams, CycleRecord, ReceiveRing,
};
pub use error::Error;
pub use metrics::{classify_block_reordering, max_reordering_extent, reordered_count, ReorderReport, ReorderTracker};
pub use packet::{is_suitable, payload_end, seq_cmp, FlowKey, Packet, SeqNum, TcpFlags, Trace};
pub use srpic::{SrpicEngine, SrpicManager};
pub use tcp::{
    run_transfer, AckRecord, DupthreshMode, ReceiverState, SenderAction, SenderParams, SenderState, SrpicSettings,
    TransferConfig, TransferMetrics, TransferOutcome,
};
