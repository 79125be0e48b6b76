//! Transport endpoint state machines: ECN-capable AIMD TCP and DCTCP.
//!
//! Window arithmetic is done in real-valued MSS units. Delayed ACKs are
//! disabled: the receiver answers every data segment immediately, so the
//! DCTCP receiver reduces to the single-bit latch machine.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::Transport;
use crate::time::SimTime;

/// Fixed lower bound on the congestion window, in MSS.
pub const MIN_CWND: f64 = 1.0;
/// Initial window per modern TCP defaults.
pub const INITIAL_CWND: f64 = 10.0;
/// DCTCP gain for the alpha estimator.
pub const DCTCP_GAIN: f64 = 1.0 / 16.0;
/// srtt EWMA gain.
const SRTT_GAIN: f64 = 0.125;
/// Floor for the retransmission timeout.
const RTO_FLOOR: SimTime = SimTime::from_millis(200);

/// One step of the DCTCP alpha estimator.
pub fn dctcp_alpha_update(alpha: f64, gain: f64, frac_marked: f64) -> f64 {
    (1.0 - gain) * alpha + gain * frac_marked
}

/// Receiver-side state: cumulative ACK tracking plus the ECE latch.
///
/// The latch is set by CE data arrival and cleared only by CWR data arrival;
/// every ACK echoes the latch. The DCTCP receiver state (DCTCP.CE) follows
/// the same two-state machine in the immediate-ACK configuration.
#[derive(Clone, Debug)]
pub struct ReceiverState {
    pub expected: u64,
    out_of_order: BTreeSet<u64>,
    pub ece_latch: bool,
}

/// What the receiver wants acknowledged after a data segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckDescriptor {
    pub ack_no: u64,
    pub ece: bool,
    /// Segments newly delivered in order by this arrival.
    pub delivered_segments: u64,
}

impl ReceiverState {
    pub fn new() -> Self {
        ReceiverState {
            expected: 0,
            out_of_order: BTreeSet::new(),
            ece_latch: false,
        }
    }

    /// Processes one data segment. CWR clears the latch before CE can set it,
    /// so a packet carrying both leaves the latch set.
    pub fn on_data(&mut self, seq: u64, ce: bool, cwr: bool) -> AckDescriptor {
        if cwr {
            self.ece_latch = false;
        }
        if ce {
            self.ece_latch = true;
        }
        let before = self.expected;
        if seq == self.expected {
            self.expected += 1;
            while self.out_of_order.remove(&self.expected) {
                self.expected += 1;
            }
        } else if seq > self.expected {
            self.out_of_order.insert(seq);
        }
        AckDescriptor {
            ack_no: self.expected,
            ece: self.ece_latch,
            delivered_segments: self.expected - before,
        }
    }
}

impl Default for ReceiverState {
    fn default() -> Self {
        Self::new()
    }
}

/// Sender reaction to one ACK.
#[derive(Clone, Copy, Debug, Default)]
pub struct AckReaction {
    pub newly_acked: u64,
    pub reduced: bool,
    /// Segment to fast-retransmit, if the dupack threshold fired.
    pub retransmit: Option<u64>,
}

/// Sender-side congestion state machine (AIMD TCP or DCTCP).
#[derive(Clone, Debug)]
pub struct SenderState {
    pub transport: Transport,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub srtt: Option<SimTime>,
    pub last_reduction: Option<SimTime>,
    pub cwr_pending: bool,
    /// Additive increase parameter a.
    pub add_incr: f64,
    /// Multiplicative decrease factor b.
    pub mult_decr: f64,

    pub alpha: f64,
    pub gain: f64,
    bytes_acked: u64,
    bytes_marked: u64,
    alpha_window_end: u64,

    pub next_seq: u64,
    pub highest_acked: u64,
    pub size_segments: Option<u64>,
    dupacks: u32,
    recover_until: u64,
    send_times: BTreeMap<u64, SimTime>,
    pub established: bool,
    pub syn_time: Option<SimTime>,
    /// Lazy-cancellation generation for the RTO timer.
    pub rto_gen: u64,
}

impl SenderState {
    pub fn new(transport: Transport, size_segments: Option<u64>) -> Self {
        SenderState {
            transport,
            cwnd: INITIAL_CWND,
            ssthresh: f64::INFINITY,
            srtt: None,
            last_reduction: None,
            cwr_pending: false,
            add_incr: 1.0,
            mult_decr: 0.5,
            alpha: 0.0,
            gain: DCTCP_GAIN,
            bytes_acked: 0,
            bytes_marked: 0,
            alpha_window_end: 0,
            next_seq: 0,
            highest_acked: 0,
            size_segments,
            dupacks: 0,
            recover_until: 0,
            send_times: BTreeMap::new(),
            established: false,
            syn_time: None,
            rto_gen: 0,
        }
    }

    pub fn inflight(&self) -> u64 {
        self.next_seq - self.highest_acked
    }

    pub fn done(&self) -> bool {
        match self.size_segments {
            Some(n) => self.highest_acked >= n,
            None => false,
        }
    }

    pub fn has_more_data(&self) -> bool {
        match self.size_segments {
            Some(n) => self.next_seq < n,
            None => true,
        }
    }

    pub fn can_send(&self) -> bool {
        self.established && self.has_more_data() && self.inflight() < self.cwnd.floor() as u64
    }

    /// Takes the next new segment for transmission; returns its sequence
    /// number and whether it must carry CWR.
    pub fn take_next(&mut self, now: SimTime) -> (u64, bool) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.send_times.insert(seq, now);
        let cwr = self.cwr_pending;
        self.cwr_pending = false;
        (seq, cwr)
    }

    pub fn rto(&self) -> SimTime {
        match self.srtt {
            Some(s) => {
                let four = SimTime::from_nanos(s.as_nanos().saturating_mul(4));
                if four > RTO_FLOOR {
                    four
                } else {
                    RTO_FLOOR
                }
            }
            None => RTO_FLOOR,
        }
    }

    fn sample_rtt(&mut self, sample: SimTime) {
        self.srtt = Some(match self.srtt {
            None => sample,
            Some(prev) => {
                let ns = (1.0 - SRTT_GAIN) * prev.as_nanos() as f64
                    + SRTT_GAIN * sample.as_nanos() as f64;
                SimTime::from_nanos(ns as u64)
            }
        });
    }

    pub fn on_handshake_complete(&mut self, now: SimTime) {
        self.established = true;
        self.rto_gen += 1; // invalidate the SYN retry timer
        if let Some(t) = self.syn_time {
            self.sample_rtt(now - t);
        }
    }

    /// At most one multiplicative reduction per srtt.
    fn reduction_allowed(&self, now: SimTime) -> bool {
        match (self.last_reduction, self.srtt) {
            (Some(last), Some(srtt)) => now.saturating_sub(last) >= srtt,
            (Some(_), None) => false,
            (None, _) => true,
        }
    }

    fn reduce(&mut self, factor: f64, now: SimTime) {
        self.cwnd = (self.cwnd * factor).max(MIN_CWND);
        self.ssthresh = self.cwnd;
        self.last_reduction = Some(now);
        self.cwr_pending = true;
    }

    fn additive_increase(&mut self, segments: u64) {
        for _ in 0..segments {
            if self.cwnd < self.ssthresh {
                self.cwnd += 1.0; // slow start
            } else {
                self.cwnd += self.add_incr / self.cwnd;
            }
        }
    }

    /// Processes one cumulative ACK.
    pub fn on_ack(&mut self, ack_no: u64, ece: bool, now: SimTime) -> AckReaction {
        let mut reaction = AckReaction::default();
        if ack_no > self.highest_acked {
            let newly = ack_no - self.highest_acked;
            reaction.newly_acked = newly;
            // RTT sample from the highest newly acked segment, skipped for
            // retransmitted segments (their send_times entries are removed).
            if let Some(t) = self.send_times.get(&(ack_no - 1)).copied() {
                self.sample_rtt(now - t);
            }
            let keys: Vec<u64> = self.send_times.range(..ack_no).map(|(&k, _)| k).collect();
            for k in keys {
                self.send_times.remove(&k);
            }
            self.highest_acked = ack_no;
            // A straggler ACK can acknowledge data the timeout rewind walked
            // past; pull the send cursor forward so it never trails the
            // cumulative ACK point.
            if self.next_seq < ack_no {
                self.next_seq = ack_no;
            }
            self.dupacks = 0;
            self.rto_gen += 1;

            match self.transport {
                Transport::TcpAimd => {
                    if ece {
                        if self.reduction_allowed(now) {
                            self.reduce(1.0 - self.mult_decr, now);
                            reaction.reduced = true;
                        }
                        // no growth while congestion is being echoed
                    } else {
                        self.additive_increase(newly);
                    }
                }
                Transport::Dctcp => {
                    self.bytes_acked += newly * crate::packet::MSS_BYTES;
                    if ece {
                        self.bytes_marked += newly * crate::packet::MSS_BYTES;
                    }
                    if ack_no >= self.alpha_window_end {
                        if self.bytes_acked > 0 {
                            let frac = self.bytes_marked as f64 / self.bytes_acked as f64;
                            self.alpha = dctcp_alpha_update(self.alpha, self.gain, frac);
                            if self.bytes_marked > 0 && self.reduction_allowed(now) {
                                self.reduce(1.0 - self.alpha / 2.0, now);
                                reaction.reduced = true;
                            }
                        }
                        self.bytes_acked = 0;
                        self.bytes_marked = 0;
                        self.alpha_window_end = self.next_seq;
                    }
                    if !reaction.reduced {
                        self.additive_increase(newly);
                    }
                }
            }
        } else if self.established && self.inflight() > 0 {
            self.dupacks += 1;
            if self.dupacks == 3 && self.highest_acked >= self.recover_until {
                reaction.retransmit = Some(self.highest_acked);
                self.send_times.remove(&self.highest_acked);
                self.reduce(0.5, now);
                self.ssthresh = self.cwnd;
                self.recover_until = self.next_seq;
                reaction.reduced = true;
            }
        }
        reaction
    }

    /// Retransmission timeout: collapse to one segment and go back to the
    /// last cumulative ACK.
    pub fn on_timeout(&mut self, now: SimTime) {
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = MIN_CWND;
        self.next_seq = self.highest_acked;
        self.dupacks = 0;
        self.recover_until = self.next_seq;
        self.send_times.clear();
        self.last_reduction = Some(now);
        self.cwr_pending = true;
        self.rto_gen += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ca_sender() -> SenderState {
        let mut s = SenderState::new(Transport::TcpAimd, None);
        s.established = true;
        s.cwnd = 10.0;
        s.ssthresh = 1.0; // force congestion avoidance
        s.srtt = Some(SimTime::from_millis(10));
        s
    }

    #[test]
    fn plain_ack_grows_by_a_over_cwnd() {
        let mut s = ca_sender();
        for _ in 0..10 {
            s.take_next(SimTime::ZERO);
        }
        s.on_ack(1, false, SimTime::from_millis(1));
        assert!((s.cwnd - 10.1).abs() < 1e-12);
    }

    #[test]
    fn ece_halves_once_per_rtt() {
        let mut s = ca_sender();
        for _ in 0..10 {
            s.take_next(SimTime::ZERO);
        }
        let r = s.on_ack(1, true, SimTime::from_millis(1));
        assert!(r.reduced);
        assert_eq!(s.cwnd, 5.0);
        assert!(s.cwr_pending);
        // second ECE within the same srtt window: no further reduction
        let r = s.on_ack(2, true, SimTime::from_millis(2));
        assert!(!r.reduced);
        assert_eq!(s.cwnd, 5.0);
        // after a full srtt the next ECE reduces again
        let r = s.on_ack(3, true, SimTime::from_millis(12));
        assert!(r.reduced);
        assert_eq!(s.cwnd, 2.5);
    }

    #[test]
    fn receiver_latch_walk() {
        let mut r = ReceiverState::new();
        // CE data sets the latch
        let a = r.on_data(0, true, false);
        assert!(a.ece);
        assert!(r.ece_latch);
        // non-CE data keeps marking
        let a = r.on_data(1, false, false);
        assert!(a.ece);
        // CWR clears; this ACK is unmarked
        let a = r.on_data(2, false, true);
        assert!(!a.ece);
        assert!(!r.ece_latch);
        assert_eq!(a.ack_no, 3);
    }

    #[test]
    fn receiver_reorders() {
        let mut r = ReceiverState::new();
        assert_eq!(r.on_data(1, false, false).ack_no, 0);
        let a = r.on_data(0, false, false);
        assert_eq!(a.ack_no, 2);
        assert_eq!(a.delivered_segments, 2);
    }

    #[test]
    fn dctcp_alpha_examples() {
        // F = 0 for an RTT, alpha 0.5, g 1/16
        assert!((dctcp_alpha_update(0.5, 1.0 / 16.0, 0.0) - 0.46875).abs() < 1e-15);
        // F = 0.25, alpha 0, g 1/16
        assert!((dctcp_alpha_update(0.0, 1.0 / 16.0, 0.25) - 0.015625).abs() < 1e-15);
    }

    #[test]
    fn dctcp_window_scaling() {
        let mut s = SenderState::new(Transport::Dctcp, None);
        s.established = true;
        s.cwnd = 16.0;
        s.ssthresh = 1.0;
        s.srtt = Some(SimTime::from_millis(10));
        for _ in 0..16 {
            s.take_next(SimTime::ZERO);
        }
        s.alpha_window_end = 8;
        // four marked of eight acked in this window
        for i in 1..=4u64 {
            s.on_ack(i, true, SimTime::from_micros(i * 10));
        }
        for i in 5..=7u64 {
            s.on_ack(i, false, SimTime::from_micros(i * 10));
        }
        let cwnd_before = s.cwnd;
        let r = s.on_ack(8, false, SimTime::from_micros(80));
        assert!(r.reduced);
        let expect_alpha = dctcp_alpha_update(0.0, DCTCP_GAIN, 0.5);
        assert!((s.alpha - expect_alpha).abs() < 1e-12);
        assert!((s.cwnd - cwnd_before * (1.0 - expect_alpha / 2.0)).abs() < 1e-9);
    }

    #[test]
    fn fast_retransmit_and_rto() {
        let mut s = ca_sender();
        s.cwnd = 20.0;
        for _ in 0..20 {
            s.take_next(SimTime::ZERO);
        }
        s.on_ack(0, false, SimTime::from_millis(1));
        s.on_ack(0, false, SimTime::from_millis(1));
        let r = s.on_ack(0, false, SimTime::from_millis(1));
        assert_eq!(r.retransmit, Some(0));
        assert_eq!(s.cwnd, 10.0);
        s.on_timeout(SimTime::from_millis(300));
        assert_eq!(s.cwnd, 1.0);
        assert_eq!(s.next_seq, s.highest_acked);
    }

    #[test]
    fn no_marks_no_drops_monotone_cwnd() {
        let mut s = ca_sender();
        let mut prev = s.cwnd;
        for i in 0..1000u64 {
            s.take_next(SimTime::from_micros(i));
            s.on_ack(i + 1, false, SimTime::from_micros(i * 3));
            assert!(s.cwnd >= prev);
            prev = s.cwnd;
        }
    }
}
