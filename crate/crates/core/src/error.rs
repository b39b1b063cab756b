use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Arrival rate at or above the softirq service rate; the ring never drains.
    #[error("arrival rate {p_rate} pps saturates service rate {r_sn} pps")]
    Saturated { p_rate: f64, r_sn: f64 },

    #[error("trace has overlapping payload ranges at packets {first} and {second}")]
    OverlappingPayload { first: usize, second: usize },

    #[error("block partition covers {covered} packets but trace has {len}")]
    PartitionMismatch { covered: usize, len: usize },

    #[error("block partition contains an empty block at index {0}")]
    EmptyBlock(usize),

    #[error("invalid configuration: {0}")]
    Config(&'static str),
}
