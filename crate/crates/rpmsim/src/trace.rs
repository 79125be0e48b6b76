//! Immutable run trace and metrics derived from it.

use std::io::Write;

use crate::time::SimTime;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MarkKind {
    /// CE set on a forward packet (forward-marking baseline).
    Ce,
    /// ECE set on a reverse ACK by the switch register.
    Ece,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DropKind {
    TailDrop,
    /// CoDel signal on a non-ECT packet in forward mode.
    CodelDrop,
}

/// Everything a finished run exposes. Immutable after `run` returns; safe to
/// hand across threads.
#[derive(Clone, Debug, Default)]
pub struct SimTrace {
    /// In-order payload deliveries at the receiving host: (time, flow, bytes).
    pub deliveries: Vec<(SimTime, usize, u64)>,
    /// Queue occupancy after each enqueue/dequeue: (time, port, bytes).
    pub queue_samples: Vec<(SimTime, usize, u64)>,
    /// CoDel signals at the AQM node: (time, flow, port).
    pub signals: Vec<(SimTime, usize, usize)>,
    /// Marks applied by the switch: (time, flow, kind).
    pub marks: Vec<(SimTime, usize, MarkKind)>,
    /// Packet losses: (time, flow, kind).
    pub drops: Vec<(SimTime, usize, DropKind)>,
    /// CWR-flagged packets observed passing the AQM node: (time, flow).
    pub cwr_seen: Vec<(SimTime, usize)>,
    /// Multiplicative window reductions performed at the senders: (time, flow).
    pub reductions: Vec<(SimTime, usize)>,
    /// Flow lifetimes: (flow, start, last-byte-acknowledged). End is `None`
    /// for flows that did not finish before the horizon.
    pub completions: Vec<(usize, SimTime, Option<SimTime>)>,
    /// Per-flow conservation counters at the horizon.
    pub sent_packets: Vec<u64>,
    pub delivered_packets: Vec<u64>,
    pub dropped_packets: Vec<u64>,
    pub inflight_at_horizon: Vec<u64>,
    /// Horizon the run was executed to.
    pub until: SimTime,
}

/// One matched congestion event: time from the first CoDel signal of a
/// reduction cycle until the sender's CWR packet passes the bottleneck.
#[derive(Clone, Copy, Debug)]
pub struct ReactionSample {
    pub flow: usize,
    pub signal_time: SimTime,
    pub reaction: SimTime,
}

impl SimTrace {
    /// Mean delivered throughput (bit/s) per flow over `[from, to]`.
    pub fn throughput_bps(&self, flows: usize, from: SimTime, to: SimTime) -> Vec<f64> {
        let mut bytes = vec![0u64; flows];
        for &(t, f, b) in &self.deliveries {
            if t >= from && t <= to && f < flows {
                bytes[f] += b;
            }
        }
        let dt = (to - from).as_secs_f64();
        bytes.iter().map(|&b| b as f64 * 8.0 / dt).collect()
    }

    /// Flow completion time in seconds, `None` if censored.
    pub fn fct_seconds(&self, flow: usize) -> Option<f64> {
        self.completions.iter().find_map(|&(f, start, end)| {
            if f == flow {
                end.map(|e| (e - start).as_secs_f64())
            } else {
                None
            }
        })
    }

    /// Matches congestion signals to the resulting CWR observations, per
    /// flow: the signals between two consecutive CWR sightings form one
    /// reduction cycle and the cycle's reaction time is measured from its
    /// first signal. Returns matched samples and the count of censored
    /// signals (no CWR followed before the horizon).
    pub fn reaction_times(&self) -> (Vec<ReactionSample>, usize) {
        let responses: Vec<(SimTime, usize)> = self.cwr_seen.clone();
        self.match_cycles(&responses)
    }

    /// Reaction measured to the *sender's* window reduction instead of the
    /// CWR sighting at the bottleneck. The CWR rides the next data packet,
    /// which a freshly reduced (cwnd-limited) sender may hold back for a
    /// large fraction of its RTT; the sender-side event isolates the signal
    /// propagation latency itself.
    pub fn reaction_times_at_sender(&self) -> (Vec<ReactionSample>, usize) {
        self.match_cycles(&self.reductions)
    }

    /// Latency from the congestion mark to the sender's window reduction:
    /// each reduction is paired with the latest mark on the same flow that
    /// precedes it. This is the propagation latency of the marking
    /// mechanism itself, independent of how long the queue had been
    /// building before the mark was applied. Reductions with no preceding
    /// mark are skipped.
    pub fn mark_to_reduction_times(&self) -> Vec<ReactionSample> {
        let mut samples = Vec::new();
        for &(rt, f) in &self.reductions {
            let latest_mark = self
                .marks
                .iter()
                .filter(|&&(mt, mf, _)| mf == f && mt <= rt)
                .map(|&(mt, _, _)| mt)
                .max();
            if let Some(mt) = latest_mark {
                samples.push(ReactionSample {
                    flow: f,
                    signal_time: mt,
                    reaction: rt - mt,
                });
            }
        }
        samples
    }

    fn match_cycles(&self, responses: &[(SimTime, usize)]) -> (Vec<ReactionSample>, usize) {
        let mut samples = Vec::new();
        let mut censored = 0;
        let flows: std::collections::BTreeSet<usize> =
            self.signals.iter().map(|&(_, f, _)| f).collect();
        for flow in flows {
            let mut sig_times: Vec<SimTime> = self
                .signals
                .iter()
                .filter(|&&(_, f, _)| f == flow)
                .map(|&(t, _, _)| t)
                .collect();
            sig_times.sort_unstable();
            let mut cwr_times: Vec<SimTime> = responses
                .iter()
                .filter(|&&(_, f)| f == flow)
                .map(|&(t, _)| t)
                .collect();
            cwr_times.sort_unstable();
            let mut cwr_iter = cwr_times.into_iter().peekable();
            let mut cycle_first: Option<SimTime> = None;
            for st in sig_times {
                // close out cycles whose CWR precedes this signal
                while let Some(&cw) = cwr_iter.peek() {
                    if cw <= st {
                        if let Some(first) = cycle_first.take() {
                            samples.push(ReactionSample {
                                flow,
                                signal_time: first,
                                reaction: cw - first,
                            });
                        }
                        cwr_iter.next();
                    } else {
                        break;
                    }
                }
                // later signals in the same cycle fold into the open one
                if cycle_first.is_none() {
                    cycle_first = Some(st);
                }
            }
            if let Some(first) = cycle_first {
                match cwr_iter.next() {
                    Some(cw) => samples.push(ReactionSample {
                        flow,
                        signal_time: first,
                        reaction: cw - first,
                    }),
                    None => censored += 1,
                }
            }
        }
        (samples, censored)
    }

    /// Writes the raw event log as CSV: `time_ns,event,flow,detail`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "time_ns,event,flow,detail")?;
        let mut rows: Vec<(SimTime, String)> = Vec::new();
        for &(t, f, b) in &self.deliveries {
            rows.push((t, format!("{t},deliver,{f},{b}")));
        }
        for &(t, f, p) in &self.signals {
            rows.push((t, format!("{t},signal,{f},port{p}")));
        }
        for &(t, f, kind) in &self.marks {
            let k = match kind {
                MarkKind::Ce => "ce",
                MarkKind::Ece => "ece",
            };
            rows.push((t, format!("{t},mark,{f},{k}")));
        }
        for &(t, f, kind) in &self.drops {
            let k = match kind {
                DropKind::TailDrop => "taildrop",
                DropKind::CodelDrop => "codel",
            };
            rows.push((t, format!("{t},drop,{f},{k}")));
        }
        for &(f, start, end) in &self.completions {
            if let Some(e) = end {
                rows.push((e, format!("{e},complete,{f},start={start}")));
            }
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        for (_, row) in rows {
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}
