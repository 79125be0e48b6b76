//! Simulated L3/L4 packets and flow identification.

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

use crate::time::SimTime;

/// Fixed L3+L4 header size in bytes; also the size of a pure ACK.
pub const HEADER_BYTES: u64 = 40;
/// Maximum segment size (payload bytes per full data segment).
pub const MSS_BYTES: u64 = 1460;

/// IP ECN codepoint.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Ecn {
    NotEct,
    Ect0,
    Ect1,
    Ce,
}

impl Ecn {
    /// True for packets that advertised ECN capability (or are already marked).
    pub fn is_ect(self) -> bool {
        !matches!(self, Ecn::NotEct)
    }
}

bitflags! {
    #[derive(Clone, Copy, PartialEq, Eq, Debug)]
    pub struct TcpFlags: u8 {
        const SYN = 0x01;
        const ACK = 0x02;
        const FIN = 0x04;
        const ECE = 0x08;
        const CWR = 0x10;
    }
}

/// 5-tuple identifying a unidirectional flow.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct FlowKey {
    pub src_ip: u32,
    pub dst_ip: u32,
    pub proto: u8,
    pub src_port: u16,
    pub dst_port: u16,
}

impl FlowKey {
    /// The same flow seen from the other direction: src/dst addresses and
    /// ports exchanged. `swapped` is an involution.
    pub fn swapped(self) -> FlowKey {
        FlowKey {
            src_ip: self.dst_ip,
            dst_ip: self.src_ip,
            proto: self.proto,
            src_port: self.dst_port,
            dst_port: self.src_port,
        }
    }
}

/// A simulated packet. `size` is the full on-wire size including the 40-byte
/// header floor; `enqueue_time` is overwritten at every hop for per-hop
/// sojourn measurement.
#[derive(Clone, Debug)]
pub struct Packet {
    pub src_ip: u32,
    pub dst_ip: u32,
    pub proto: u8,
    pub src_port: u16,
    pub dst_port: u16,
    pub ecn: Ecn,
    pub tcp_flags: TcpFlags,
    pub seq: u64,
    pub ack_no: u64,
    pub size: u64,
    pub enqueue_time: SimTime,
    pub created_at: SimTime,
    /// Simulator bookkeeping: index of the owning flow, for trace attribution.
    pub flow: usize,
}

impl Packet {
    pub fn key(&self) -> FlowKey {
        FlowKey {
            src_ip: self.src_ip,
            dst_ip: self.dst_ip,
            proto: self.proto,
            src_port: self.src_port,
            dst_port: self.dst_port,
        }
    }

    pub fn payload_bytes(&self) -> u64 {
        self.size - HEADER_BYTES
    }

    pub fn is_ack_carrier(&self) -> bool {
        self.tcp_flags.contains(TcpFlags::ACK)
    }
}
