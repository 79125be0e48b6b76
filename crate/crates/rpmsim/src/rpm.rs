//! Reverse-path congestion marking: the congestion state register and the
//! marking operations around it.
//!
//! On a CoDel signal for a forward packet, the cell addressed by the packet's
//! 5-tuple hash is incremented. Any TCP segment carrying the ACK flag is
//! looked up under its *swapped* 5-tuple on its way back; a non-zero cell sets
//! the ECE flag on that segment and decrements the cell. Only the TCP ECE bit
//! is ever touched on the reverse path; IP ECN is left alone.

use crate::packet::{Ecn, FlowKey, Packet, TcpFlags};

/// Default number of register cells.
pub const DEFAULT_REGISTER_SIZE: usize = 1 << 16;
/// Default per-cell saturation bound.
pub const DEFAULT_COUNTER_MAX: u32 = 255;

/// Deterministic 5-tuple hash: FNV-1a over the key fields in declaration
/// order, masked to the (power-of-two) register size. No per-run salting, so
/// traces are reproducible.
pub fn flow_hash(key: &FlowKey, register_size: usize) -> usize {
    debug_assert!(register_size.is_power_of_two());
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(&key.src_ip.to_be_bytes());
    eat(&key.dst_ip.to_be_bytes());
    eat(&[key.proto]);
    eat(&key.src_port.to_be_bytes());
    eat(&key.dst_port.to_be_bytes());
    (h as usize) & (register_size - 1)
}

/// Hash-indexed array of saturating counters holding pending congestion
/// signals per flow (or per port, in the aggregated variant).
#[derive(Clone, Debug)]
pub struct CongestionStateRegister {
    cells: Vec<u32>,
    counter_max: u32,
}

impl CongestionStateRegister {
    /// `size` must be a power of two; `counter_max` must be positive.
    pub fn new(size: usize, counter_max: u32) -> Self {
        assert!(size.is_power_of_two(), "register size must be a power of two");
        assert!(counter_max > 0, "counter_max must be positive");
        CongestionStateRegister {
            cells: vec![0; size],
            counter_max,
        }
    }

    pub fn size(&self) -> usize {
        self.cells.len()
    }

    pub fn counter_max(&self) -> u32 {
        self.counter_max
    }

    pub fn cell(&self, idx: usize) -> u32 {
        self.cells[idx]
    }

    pub fn sum(&self) -> u64 {
        self.cells.iter().map(|&c| c as u64).sum()
    }

    fn bump(&mut self, idx: usize) {
        let c = &mut self.cells[idx];
        if *c < self.counter_max {
            *c += 1;
        }
    }

    fn drain(&mut self, idx: usize) -> bool {
        let c = &mut self.cells[idx];
        if *c >= 1 {
            *c -= 1;
            true
        } else {
            false
        }
    }

    /// Records a CoDel signal attributed to the forward packet's flow.
    pub fn on_congestion_signal(&mut self, key: &FlowKey) {
        let idx = flow_hash(key, self.cells.len());
        self.bump(idx);
    }

    /// Checks an ACK-carrying segment against the register under its swapped
    /// 5-tuple; sets ECE and decrements on a hit. Returns true if marked.
    /// Non-ACK segments pass untouched.
    pub fn on_reverse_packet(&mut self, pkt: &mut Packet) -> bool {
        if !pkt.is_ack_carrier() {
            return false;
        }
        let idx = flow_hash(&pkt.key().swapped(), self.cells.len());
        if self.drain(idx) {
            pkt.tcp_flags |= TcpFlags::ECE;
            true
        } else {
            false
        }
    }

    /// Per-port variant: one cell per egress port of the congested switch.
    pub fn on_port_signal(&mut self, port: usize) {
        self.bump(port & (self.cells.len() - 1));
    }

    /// Per-port variant of the reverse check; `port` is the egress port the
    /// packet's forward direction would take at this switch.
    pub fn on_port_reverse(&mut self, port: usize, pkt: &mut Packet) -> bool {
        if !pkt.is_ack_carrier() {
            return false;
        }
        if self.drain(port & (self.cells.len() - 1)) {
            pkt.tcp_flags |= TcpFlags::ECE;
            true
        } else {
            false
        }
    }
}

/// Outcome of forward-path marking (the CoDel-FWD baseline).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ForwardMarkOutcome {
    /// ECN-capable packet: CE set, transmit.
    Marked,
    /// Not ECN-capable: drop instead of marking.
    Dropped,
}

/// CE-marks an ECT packet, or asks for a drop on a non-ECT one.
pub fn forward_mark(pkt: &mut Packet) -> ForwardMarkOutcome {
    match pkt.ecn {
        Ecn::Ect0 | Ecn::Ect1 | Ecn::Ce => {
            pkt.ecn = Ecn::Ce;
            ForwardMarkOutcome::Marked
        }
        Ecn::NotEct => ForwardMarkOutcome::Dropped,
    }
}
