//! Simulated TCP segments and 32-bit sequence-space arithmetic.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

/// Identifies one TCP stream by its address/port 4-tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub src_addr: u32,
    pub dst_addr: u32,
    pub src_port: u16,
    pub dst_port: u16,
}

impl FlowKey {
    pub const fn new(src_addr: u32, dst_addr: u32, src_port: u16, dst_port: u16) -> Self {
        Self { src_addr, dst_addr, src_port, dst_port }
    }
}

/// A TCP sequence number. Comparison uses serial-number arithmetic, which is
/// only meaningful between numbers less than 2^31 apart, so `Ord` is
/// deliberately not implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SeqNum(pub u32);

impl SeqNum {
    #[inline]
    pub const fn add(self, len: u32) -> SeqNum {
        SeqNum(self.0.wrapping_add(len))
    }

    #[inline]
    pub fn cmp_serial(self, other: SeqNum) -> Ordering {
        seq_cmp(self.0, other.0)
    }

    #[inline]
    pub fn lt(self, other: SeqNum) -> bool {
        self.cmp_serial(other) == Ordering::Less
    }

    #[inline]
    pub fn le(self, other: SeqNum) -> bool {
        self.cmp_serial(other) != Ordering::Greater
    }

    #[inline]
    pub fn gt(self, other: SeqNum) -> bool {
        self.cmp_serial(other) == Ordering::Greater
    }

    /// Signed serial distance `self - other`.
    #[inline]
    pub const fn diff(self, other: SeqNum) -> i32 {
        self.0.wrapping_sub(other.0) as i32
    }

    pub fn max(self, other: SeqNum) -> SeqNum {
        if self.lt(other) {
            other
        } else {
            self
        }
    }
}

impl fmt::Display for SeqNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for SeqNum {
    fn from(v: u32) -> Self {
        SeqNum(v)
    }
}

/// TCP serial-number comparison: `a` is less than `b` iff `(a - b) mod 2^32`
/// lies in `(2^31, 2^32)`.
#[inline]
pub fn seq_cmp(a: u32, b: u32) -> Ordering {
    if a == b {
        Ordering::Equal
    } else if a.wrapping_sub(b) > 1 << 31 {
        Ordering::Less
    } else {
        Ordering::Greater
    }
}

/// Control bits carried in the TCP header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);
    pub const URG: TcpFlags = TcpFlags(0x20);
    pub const ECE: TcpFlags = TcpFlags(0x40);
    pub const CWR: TcpFlags = TcpFlags(0x80);

    /// Bits that need immediate delivery and disqualify a segment from sorting.
    pub const URGENT_CONTROL: TcpFlags = TcpFlags(0x01 | 0x02 | 0x04 | 0x20 | 0x40 | 0x80);

    pub const fn empty() -> Self {
        TcpFlags(0)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub const fn intersects(self, other: TcpFlags) -> bool {
        self.0 & other.0 != 0
    }
}

impl core::ops::BitOr for TcpFlags {
    type Output = TcpFlags;
    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | rhs.0)
    }
}

/// One simulated TCP segment. Times are in microseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub flow: FlowKey,
    /// Sequence number of the first payload byte.
    pub seq: SeqNum,
    pub payload_len: u32,
    pub flags: TcpFlags,
    pub is_fragment: bool,
    /// Any IP option, or any TCP option other than timestamps.
    pub has_disallowed_options: bool,
    /// Emission counter, unique and increasing per flow.
    pub send_index: u64,
    pub send_time: f64,
    pub arrival_time: f64,
}

impl Packet {
    /// A plain data segment (ACK|PSH, no options).
    pub fn data(flow: FlowKey, seq: u32, payload_len: u32) -> Self {
        Packet {
            flow,
            seq: SeqNum(seq),
            payload_len,
            flags: TcpFlags::ACK | TcpFlags::PSH,
            is_fragment: false,
            has_disallowed_options: false,
            send_index: 0,
            send_time: 0.0,
            arrival_time: 0.0,
        }
    }

    pub fn with_send_index(mut self, idx: u64) -> Self {
        self.send_index = idx;
        self
    }

    pub fn with_flags(mut self, flags: TcpFlags) -> Self {
        self.flags = flags;
        self
    }

    #[inline]
    pub fn end(&self) -> SeqNum {
        payload_end(self)
    }
}

/// Packets in send or arrival order.
pub type Trace = Vec<Packet>;

/// Whether a packet may be held back and sorted in the driver.
pub fn is_suitable(p: &Packet) -> bool {
    !p.is_fragment && !p.has_disallowed_options && !p.flags.intersects(TcpFlags::URGENT_CONTROL)
}

/// Sequence number one past the last payload byte.
#[inline]
pub fn payload_end(p: &Packet) -> SeqNum {
    p.seq.add(p.payload_len)
}
