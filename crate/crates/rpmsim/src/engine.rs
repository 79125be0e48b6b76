//! Deterministic discrete-event engine.
//!
//! Events are dispatched in (time, insertion-order) priority, so simultaneous
//! events resolve FIFO and a run is a pure function of its configuration.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use crate::codel::{CodelDecision, CodelParams, CodelState};
use crate::config::{AqmMode, ConfigError, ScenarioConfig};
use crate::endpoint::{ReceiverState, SenderState};
use crate::packet::{Ecn, FlowKey, Packet, TcpFlags, HEADER_BYTES, MSS_BYTES};
use crate::queue::{EnqueueOutcome, OutputQueue};
use crate::rpm::{forward_mark, CongestionStateRegister, ForwardMarkOutcome};
use crate::time::{serialization_time, SimTime};
use crate::topology::{build_topology, Network};
use crate::trace::{DropKind, MarkKind, SimTrace};

#[derive(Clone, Debug)]
enum EventKind {
    FlowStart(usize),
    TxDone(usize),
    Arrival { node: usize, pkt: Packet },
    Rto { flow: usize, gen: u64 },
}

#[derive(Clone, Debug)]
struct QueuedEvent {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time.cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

struct PortState {
    queue: OutputQueue,
    busy: bool,
    in_service: Option<Packet>,
    codel: Option<CodelState>,
}

struct FlowRt {
    src: usize,
    dst: usize,
    key: FlowKey,
    sender: SenderState,
    receiver: ReceiverState,
    start: SimTime,
    completed: bool,
}

/// A single simulation run. Strictly single-threaded; independent runs share
/// no state.
pub struct Simulator {
    net: Network,
    aqm_node: Option<usize>,
    mode: AqmMode,
    now: SimTime,
    events: BinaryHeap<Reverse<QueuedEvent>>,
    next_event_seq: u64,
    ports: Vec<PortState>,
    flows: Vec<FlowRt>,
    register: Option<CongestionStateRegister>,
    /// Flows failing the path-symmetry prerequisite fall back to forward
    /// marking.
    rpm_disabled: HashSet<FlowKey>,
    trace: SimTrace,
}

impl Simulator {
    pub fn from_config(config: &ScenarioConfig) -> Result<Simulator, ConfigError> {
        let net = build_topology(config)?;
        let buffer = config.effective_buffer_limit();
        let aqm_node = config
            .aqm
            .node
            .as_ref()
            .and_then(|name| config.node_index(name));
        let mode = config.aqm.mode;
        let codel_params = CodelParams {
            target: SimTime::from_nanos(config.aqm.codel_target_ns),
            interval: SimTime::from_nanos(config.aqm.codel_interval_ns),
        };
        let ports = net
            .ports
            .iter()
            .enumerate()
            .map(|(_, p)| PortState {
                queue: OutputQueue::new(buffer),
                busy: false,
                in_service: None,
                codel: (mode != AqmMode::None && Some(p.from) == aqm_node)
                    .then(|| CodelState::new(codel_params)),
            })
            .collect();

        let mut flows = Vec::new();
        let mut rpm_disabled = HashSet::new();
        for (i, f) in config.flows.iter().enumerate() {
            let src = config.node_index(&f.src).unwrap();
            let dst = config.node_index(&f.dst).unwrap();
            let key = FlowKey {
                src_ip: src as u32,
                dst_ip: dst as u32,
                proto: 6,
                src_port: 10_000 + i as u16,
                dst_port: 20_000 + i as u16,
            };
            if mode == AqmMode::RpmPerFlow {
                if let Some(aqm) = aqm_node {
                    let symmetric = net
                        .check_path_symmetry(&key, aqm)
                        .map_err(|e| ConfigError::Parse(e.to_string()))?;
                    if !symmetric {
                        rpm_disabled.insert(key);
                    }
                }
            }
            flows.push(FlowRt {
                src,
                dst,
                key,
                sender: SenderState::new(f.transport, f.size_mss),
                receiver: ReceiverState::new(),
                start: SimTime::from_nanos(f.start_ns),
                completed: false,
            });
        }

        let register = (matches!(mode, AqmMode::RpmPerFlow | AqmMode::RpmPerPort)
            && aqm_node.is_some())
        .then(|| CongestionStateRegister::new(config.aqm.register_size, config.aqm.counter_max));

        let n_flows = flows.len();
        Ok(Simulator {
            net,
            aqm_node,
            mode,
            now: SimTime::ZERO,
            events: BinaryHeap::new(),
            next_event_seq: 0,
            ports,
            flows,
            register,
            rpm_disabled,
            trace: SimTrace {
                sent_packets: vec![0; n_flows],
                delivered_packets: vec![0; n_flows],
                dropped_packets: vec![0; n_flows],
                inflight_at_horizon: vec![0; n_flows],
                ..SimTrace::default()
            },
        })
    }

    fn schedule(&mut self, time: SimTime, kind: EventKind) {
        assert!(time >= self.now, "event scheduled in the past (engine bug)");
        let seq = self.next_event_seq;
        self.next_event_seq += 1;
        self.events.push(Reverse(QueuedEvent { time, seq, kind }));
    }

    /// Executes to the horizon and returns the trace.
    pub fn run(mut self, until: SimTime) -> SimTrace {
        assert!(until > SimTime::ZERO, "horizon must be positive");
        for i in 0..self.flows.len() {
            let start = self.flows[i].start;
            self.schedule(start, EventKind::FlowStart(i));
        }
        while let Some(Reverse(ev)) = self.events.pop() {
            if ev.time > until {
                // count the packet still on the wire
                if let EventKind::Arrival { pkt, .. } = ev.kind {
                    self.trace.inflight_at_horizon[pkt.flow] += 1;
                }
                continue;
            }
            assert!(ev.time >= self.now, "time went backwards (engine bug)");
            self.now = ev.time;
            match ev.kind {
                EventKind::FlowStart(f) => self.on_flow_start(f),
                EventKind::TxDone(p) => self.on_tx_done(p),
                EventKind::Arrival { node, pkt } => self.on_arrival(node, pkt),
                EventKind::Rto { flow, gen } => self.on_rto(flow, gen),
            }
        }
        // whatever is still queued or in service counts as in flight
        for p in &self.ports {
            for pkt in p.queue.iter() {
                self.trace.inflight_at_horizon[pkt.flow] += 1;
            }
            if let Some(pkt) = &p.in_service {
                self.trace.inflight_at_horizon[pkt.flow] += 1;
            }
        }
        self.trace.until = until;
        self.trace
    }

    fn make_packet(
        &self,
        flow: usize,
        key: FlowKey,
        flags: TcpFlags,
        ecn: Ecn,
        seq: u64,
        ack_no: u64,
        size: u64,
    ) -> Packet {
        Packet {
            src_ip: key.src_ip,
            dst_ip: key.dst_ip,
            proto: key.proto,
            src_port: key.src_port,
            dst_port: key.dst_port,
            ecn,
            tcp_flags: flags,
            seq,
            ack_no,
            size,
            enqueue_time: self.now,
            created_at: self.now,
            flow,
        }
    }

    fn on_flow_start(&mut self, f: usize) {
        self.trace.completions.push((f, self.now, None));
        self.send_syn(f);
    }

    fn send_syn(&mut self, f: usize) {
        let flow = &mut self.flows[f];
        if flow.sender.syn_time.is_none() {
            flow.sender.syn_time = Some(self.now);
        }
        let key = flow.key;
        let src = flow.src;
        let pkt = self.make_packet(f, key, TcpFlags::SYN, Ecn::NotEct, 0, 0, HEADER_BYTES);
        self.inject(src, pkt);
        // SYN retry
        let gen = self.flows[f].sender.rto_gen;
        let rto = self.flows[f].sender.rto();
        self.schedule(self.now + rto, EventKind::Rto { flow: f, gen });
    }

    /// Host-originated packet: counted as sent, then routed.
    fn inject(&mut self, node: usize, pkt: Packet) {
        self.trace.sent_packets[pkt.flow] += 1;
        self.route_and_enqueue(node, pkt);
    }

    fn route_and_enqueue(&mut self, node: usize, pkt: Packet) {
        let dst = pkt.dst_ip as usize;
        match self.net.routes[node][dst] {
            Some(port) => self.enqueue_on_port(port, pkt),
            None => {
                // unroutable: counted as loss
                self.trace.dropped_packets[pkt.flow] += 1;
            }
        }
    }

    fn enqueue_on_port(&mut self, port: usize, pkt: Packet) {
        let flow = pkt.flow;
        let outcome = self.ports[port].queue.enqueue(pkt, self.now);
        match outcome {
            EnqueueOutcome::Accepted => {
                self.trace
                    .queue_samples
                    .push((self.now, port, self.ports[port].queue.occupancy()));
                if !self.ports[port].busy {
                    self.start_tx(port);
                }
            }
            EnqueueOutcome::TailDropped => {
                self.trace.drops.push((self.now, flow, DropKind::TailDrop));
                self.trace.dropped_packets[flow] += 1;
            }
        }
    }

    /// Pulls packets off the queue until one survives the AQM decision, then
    /// puts it on the wire.
    fn start_tx(&mut self, port: usize) {
        debug_assert!(!self.ports[port].busy);
        loop {
            if self.ports[port].queue.is_empty() {
                return;
            }
            let (mut pkt, sojourn) = self.ports[port].queue.dequeue(self.now);
            self.trace
                .queue_samples
                .push((self.now, port, self.ports[port].queue.occupancy()));
            let decision = match &mut self.ports[port].codel {
                Some(codel) => codel.evaluate(sojourn, self.now),
                None => CodelDecision::Forward,
            };
            if decision == CodelDecision::Signal {
                self.trace.signals.push((self.now, pkt.flow, port));
                let transmit = self.apply_signal(port, &mut pkt);
                if !transmit {
                    self.trace
                        .drops
                        .push((self.now, pkt.flow, DropKind::CodelDrop));
                    self.trace.dropped_packets[pkt.flow] += 1;
                    continue;
                }
            }
            let ser = serialization_time(pkt.size, self.net.ports[port].capacity_bps);
            self.ports[port].busy = true;
            self.ports[port].in_service = Some(pkt);
            self.schedule(self.now + ser, EventKind::TxDone(port));
            return;
        }
    }

    /// Applies a CoDel signal to the dequeued packet according to the marking
    /// mode. Returns false if the packet must be dropped instead.
    fn apply_signal(&mut self, port: usize, pkt: &mut Packet) -> bool {
        let fallback_fwd = match self.mode {
            AqmMode::Fwd => true,
            AqmMode::RpmPerFlow => {
                if self.rpm_disabled.contains(&pkt.key()) {
                    true
                } else {
                    let key = pkt.key();
                    self.register
                        .as_mut()
                        .expect("register present in rpm mode")
                        .on_congestion_signal(&key);
                    false
                }
            }
            AqmMode::RpmPerPort => {
                self.register
                    .as_mut()
                    .expect("register present in rpm mode")
                    .on_port_signal(port);
                false
            }
            AqmMode::None => false,
        };
        if fallback_fwd {
            match forward_mark(pkt) {
                ForwardMarkOutcome::Marked => {
                    self.trace.marks.push((self.now, pkt.flow, MarkKind::Ce));
                    true
                }
                ForwardMarkOutcome::Dropped => false,
            }
        } else {
            true
        }
    }

    fn on_tx_done(&mut self, port: usize) {
        let pkt = self.ports[port]
            .in_service
            .take()
            .expect("tx done without packet in service (engine bug)");
        self.ports[port].busy = false;
        let to = self.net.ports[port].to;
        let delay = self.net.ports[port].prop_delay;
        self.schedule(self.now + delay, EventKind::Arrival { node: to, pkt });
        self.start_tx(port);
    }

    fn on_arrival(&mut self, node: usize, mut pkt: Packet) {
        // data-plane processing at the marking switch
        if Some(node) == self.aqm_node {
            if pkt.tcp_flags.contains(TcpFlags::CWR) {
                self.trace.cwr_seen.push((self.now, pkt.flow));
            }
            if pkt.is_ack_carrier() {
                let marked = match self.mode {
                    AqmMode::RpmPerFlow => self
                        .register
                        .as_mut()
                        .map(|r| r.on_reverse_packet(&mut pkt))
                        .unwrap_or(false),
                    AqmMode::RpmPerPort => {
                        // egress port the packet's forward direction would
                        // take at this switch
                        let fwd_egress = self.net.routes[node][pkt.src_ip as usize];
                        match (fwd_egress, self.register.as_mut()) {
                            (Some(p), Some(r)) => r.on_port_reverse(p, &mut pkt),
                            _ => false,
                        }
                    }
                    _ => false,
                };
                if marked {
                    self.trace.marks.push((self.now, pkt.flow, MarkKind::Ece));
                }
            }
        }
        if pkt.dst_ip as usize == node {
            self.trace.delivered_packets[pkt.flow] += 1;
            self.deliver_local(node, pkt);
        } else {
            self.route_and_enqueue(node, pkt);
        }
    }

    fn deliver_local(&mut self, _node: usize, pkt: Packet) {
        let f = pkt.flow;
        if pkt.tcp_flags == TcpFlags::SYN {
            // receiver side: answer (and re-answer) the handshake
            let key = self.flows[f].key.swapped();
            let dst = self.flows[f].dst;
            let reply = self.make_packet(
                f,
                key,
                TcpFlags::SYN | TcpFlags::ACK,
                Ecn::NotEct,
                0,
                0,
                HEADER_BYTES,
            );
            self.inject(dst, reply);
        } else if pkt.tcp_flags.contains(TcpFlags::SYN) {
            // sender side: handshake complete
            if !self.flows[f].sender.established {
                self.flows[f].sender.on_handshake_complete(self.now);
                self.pump_sender(f);
            }
        } else if pkt.payload_bytes() > 0 {
            // data segment at the receiver
            let ce = pkt.ecn == Ecn::Ce;
            let cwr = pkt.tcp_flags.contains(TcpFlags::CWR);
            let desc = self.flows[f].receiver.on_data(pkt.seq, ce, cwr);
            if desc.delivered_segments > 0 {
                self.trace
                    .deliveries
                    .push((self.now, f, desc.delivered_segments * MSS_BYTES));
            }
            let mut flags = TcpFlags::ACK;
            if desc.ece {
                flags |= TcpFlags::ECE;
            }
            let key = self.flows[f].key.swapped();
            let dst = self.flows[f].dst;
            let ack = self.make_packet(f, key, flags, Ecn::NotEct, 0, desc.ack_no, HEADER_BYTES);
            self.inject(dst, ack);
        } else if pkt.is_ack_carrier() {
            // pure ACK at the sender
            let ece = pkt.tcp_flags.contains(TcpFlags::ECE);
            let reaction = self.flows[f].sender.on_ack(pkt.ack_no, ece, self.now);
            // Loss-triggered (dupack) reductions respond to drops, not to
            // congestion marks; only mark-driven reductions are recorded.
            if reaction.reduced && reaction.retransmit.is_none() {
                self.trace.reductions.push((self.now, f));
            }
            if let Some(seq) = reaction.retransmit {
                self.send_data_segment(f, seq, false);
            }
            if self.flows[f].sender.done() && !self.flows[f].completed {
                self.flows[f].completed = true;
                for c in &mut self.trace.completions {
                    if c.0 == f {
                        c.2 = Some(self.now);
                    }
                }
            } else {
                self.pump_sender(f);
            }
        }
    }

    fn send_data_segment(&mut self, f: usize, seq: u64, cwr: bool) {
        let key = self.flows[f].key;
        let src = self.flows[f].src;
        let mut flags = TcpFlags::ACK;
        if cwr {
            flags |= TcpFlags::CWR;
        }
        let pkt = self.make_packet(f, key, flags, Ecn::Ect0, seq, 0, HEADER_BYTES + MSS_BYTES);
        self.inject(src, pkt);
    }

    fn pump_sender(&mut self, f: usize) {
        while self.flows[f].sender.can_send() {
            let (seq, cwr) = self.flows[f].sender.take_next(self.now);
            self.send_data_segment(f, seq, cwr);
        }
        if self.flows[f].sender.inflight() > 0 {
            let gen = self.flows[f].sender.rto_gen;
            let rto = self.flows[f].sender.rto();
            self.schedule(self.now + rto, EventKind::Rto { flow: f, gen });
        }
    }

    fn on_rto(&mut self, f: usize, gen: u64) {
        if self.flows[f].completed {
            return;
        }
        if gen != self.flows[f].sender.rto_gen {
            return; // stale timer
        }
        if !self.flows[f].sender.established {
            self.send_syn(f);
            return;
        }
        if self.flows[f].sender.inflight() == 0 {
            return;
        }
        self.flows[f].sender.on_timeout(self.now);
        self.pump_sender(f);
    }
}

/// Builds and runs a scenario to its configured horizon.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimTrace, ConfigError> {
    let sim = Simulator::from_config(config)?;
    Ok(sim.run(SimTime::from_nanos(config.sim_duration_ns)))
}
