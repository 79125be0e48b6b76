//! Experiment harness: fairness, flow-completion-time and reaction-time
//! studies on the dumbbell testbed at desk scale, with CSV emission.
//!
//! Capacities are the testbed's 100/10 Gbps scaled down (default factor
//! 0.001, i.e. 100/10 Mbps); CoDel's time constants are widened accordingly
//! (target 5 ms, interval 100 ms) so the controller still operates above the
//! per-packet serialization time. All comparisons between marking modes are
//! directional or ratio-based, never absolute-throughput.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{AqmMode, ConfigError, FlowSpec, ScenarioConfig, Transport};
use crate::engine::run_scenario;
use crate::metrics::{jain_index, mean_sd};
use crate::time::SimTime;
use crate::trace::SimTrace;

/// Receiver-side link delays per experiment row, applied pairwise to
/// H11/H12 .. H19/H20.
pub fn receiver_delays(experiment: u8) -> [SimTime; 5] {
    match experiment {
        1 => [SimTime::from_millis(10); 5],
        2 => [10, 20, 30, 40, 50].map(SimTime::from_millis),
        3 => [20, 40, 60, 80, 100].map(SimTime::from_millis),
        _ => panic!("fairness experiment id must be 1..=3"),
    }
}

fn mode_name(mode: AqmMode) -> &'static str {
    match mode {
        AqmMode::Fwd => "fwd",
        AqmMode::RpmPerFlow => "rpm",
        AqmMode::RpmPerPort => "rpm-port",
        AqmMode::None => "none",
    }
}

/// Desk-scale CoDel settings used by all experiments.
fn apply_desk_scale_aqm(cfg: &mut ScenarioConfig, mode: AqmMode) {
    cfg.aqm.mode = mode;
    cfg.aqm.codel_target_ns = SimTime::from_millis(5).as_nanos();
    cfg.aqm.codel_interval_ns = SimTime::from_millis(50).as_nanos();
    cfg.buffer_limit = Some(200_000);
}

/// Dumbbell scenario for a fairness row: 10 long flows H_i -> H_{i+10},
/// sender links at 10 ms, receiver links per the experiment row, AQM at R1.
pub fn fairness_scenario(
    experiment: u8,
    mode: AqmMode,
    scale: f64,
    duration: SimTime,
    seed: u64,
) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::dumbbell(
        scale,
        SimTime::from_millis(10),
        receiver_delays(experiment),
    );
    apply_desk_scale_aqm(&mut cfg, mode);
    cfg.sim_duration_ns = duration.as_nanos();
    cfg.rng_seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 1..=10 {
        cfg.flows.push(FlowSpec {
            src: format!("H{i}"),
            dst: format!("H{}", i + 10),
            size_mss: None,
            start_ns: rng.gen_range(0..100_000_000),
            transport: Transport::TcpAimd,
        });
    }
    cfg
}

#[derive(Clone, Debug)]
pub struct FairnessResult {
    pub experiment: u8,
    pub mode: AqmMode,
    /// Steady-state throughput per flow, per repetition (bps).
    pub per_flow_thr: Vec<Vec<f64>>,
    /// Jain index per repetition.
    pub jain: Vec<f64>,
}

impl FairnessResult {
    pub fn mean_jain(&self) -> (f64, f64) {
        mean_sd(&self.jain)
    }
}

/// Runs one fairness row for `reps` seeds. Throughput is measured after a
/// 25% warm-up cut.
pub fn run_fairness(
    experiment: u8,
    mode: AqmMode,
    scale: f64,
    reps: usize,
    base_seed: u64,
) -> Result<FairnessResult, ConfigError> {
    // Long horizon: per-repetition Jain variance shrinks roughly with run
    // length, and the steady-state sawtooth needs many of the longest RTTs.
    let duration = SimTime::from_secs(480);
    let mut per_flow_thr = Vec::new();
    let mut jain = Vec::new();
    for rep in 0..reps {
        let cfg = fairness_scenario(experiment, mode, scale, duration, base_seed + rep as u64);
        let trace = run_scenario(&cfg)?;
        let from = SimTime::from_nanos(duration.as_nanos() / 4);
        let thr = trace.throughput_bps(10, from, duration);
        jain.push(jain_index(&thr).unwrap_or(0.0));
        per_flow_thr.push(thr);
    }
    Ok(FairnessResult {
        experiment,
        mode,
        per_flow_thr,
        jain,
    })
}

/// CSV: per-flow mean throughput rows, then a trailing Jain row.
pub fn write_fairness_csv<W: Write>(w: &mut W, res: &FairnessResult) -> std::io::Result<()> {
    writeln!(w, "exp,mode,flow,thr_bps")?;
    let reps = res.per_flow_thr.len();
    for flow in 0..10 {
        let mean: f64 = res
            .per_flow_thr
            .iter()
            .map(|rep| rep[flow])
            .sum::<f64>()
            / reps as f64;
        writeln!(
            w,
            "{},{},{},{:.0}",
            res.experiment,
            mode_name(res.mode),
            flow + 1,
            mean
        )?;
    }
    let (jm, _) = res.mean_jain();
    writeln!(w, "{},{},J,{:.4}", res.experiment, mode_name(res.mode), jm)?;
    Ok(())
}

/// Default short-flow size ladder, in MSS.
pub const FCT_SIZES: [u64; 5] = [2, 8, 32, 128, 512];
const FCT_FLOWS_PER_SIZE: usize = 40;

/// FCT scenario: every link at the host rate (no 100 Gbps core), AQM on S1
/// where the senders merge, 2 long-lived background flows, and a seeded
/// schedule of short flows cycling through the size ladder.
pub fn fct_scenario(mode: AqmMode, scale: f64, seed: u64, sizes: &[u64]) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::dumbbell(
        scale,
        SimTime::from_millis(1),
        [SimTime::from_millis(10); 5],
    );
    // all links at the host rate: congestion at S1 where the senders merge
    let host_rate = (10e9 * scale) as u64;
    for l in &mut cfg.links {
        l.capacity_bps = host_rate;
    }
    apply_desk_scale_aqm(&mut cfg, mode);
    cfg.aqm.node = Some("S1".into());
    // Tighter regime than the fairness rows: the short-flow benefit comes
    // from the standing queue the slower forward-marked loop leaves behind,
    // so the controller runs at a quarter of the fairness interval and the
    // buffer is sized to keep short flows out of retransmission timeouts.
    cfg.aqm.codel_interval_ns = SimTime::from_millis(25).as_nanos();
    cfg.buffer_limit = Some(75_000);
    cfg.rng_seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // background load
    for i in 1..=2 {
        cfg.flows.push(FlowSpec {
            src: format!("H{i}"),
            dst: format!("H{}", i + 10),
            size_mss: None,
            start_ns: rng.gen_range(0..10_000_000),
            transport: Transport::Dctcp,
        });
    }
    // short flows: one every 250 ms after a 2 s warm-up, cycling sizes and
    // sender/receiver pairs H3..H10 -> H13..H20
    let mut t = SimTime::from_secs(2);
    let spacing = SimTime::from_millis(250);
    let mut host = 3usize;
    for round in 0..FCT_FLOWS_PER_SIZE {
        for &size in sizes {
            let jitter = rng.gen_range(0..50_000_000u64);
            cfg.flows.push(FlowSpec {
                src: format!("H{host}"),
                dst: format!("H{}", host + 10),
                size_mss: Some(size),
                start_ns: (t + SimTime::from_nanos(jitter)).as_nanos(),
                transport: Transport::Dctcp,
            });
            t += spacing;
            host += 1;
            if host > 10 {
                host = 3;
            }
            let _ = round;
        }
    }
    cfg.sim_duration_ns = (t + SimTime::from_secs(4)).as_nanos();
    cfg
}

#[derive(Clone, Debug)]
pub struct FctRow {
    pub size_mss: u64,
    pub mode: AqmMode,
    /// Per-repetition mean FCT over the completed short flows of this size.
    pub rep_means: Vec<f64>,
    pub n: usize,
    pub censored: usize,
}

impl FctRow {
    pub fn mean_sd(&self) -> (f64, f64) {
        mean_sd(&self.rep_means)
    }
}

/// Runs the FCT study for `reps` seeds; one row per size class.
pub fn run_fct(
    mode: AqmMode,
    scale: f64,
    reps: usize,
    base_seed: u64,
    sizes: &[u64],
) -> Result<Vec<FctRow>, ConfigError> {
    let mut rows: Vec<FctRow> = sizes
        .iter()
        .map(|&s| FctRow {
            size_mss: s,
            mode,
            rep_means: Vec::new(),
            n: 0,
            censored: 0,
        })
        .collect();
    for rep in 0..reps {
        let cfg = fct_scenario(mode, scale, base_seed + rep as u64, sizes);
        let trace = run_scenario(&cfg)?;
        for row in rows.iter_mut() {
            let mut fcts = Vec::new();
            for (fi, f) in cfg.flows.iter().enumerate() {
                if f.size_mss != Some(row.size_mss) {
                    continue;
                }
                match trace.fct_seconds(fi) {
                    Some(fct) => fcts.push(fct),
                    None => row.censored += 1,
                }
            }
            row.n += fcts.len();
            if !fcts.is_empty() {
                let (m, _) = mean_sd(&fcts);
                row.rep_means.push(m);
            }
        }
    }
    Ok(rows)
}

pub fn write_fct_csv<W: Write>(w: &mut W, rows: &[FctRow]) -> std::io::Result<()> {
    writeln!(w, "size_mss,mode,mean_fct_s,sd,n,censored")?;
    for r in rows {
        let (m, sd) = r.mean_sd();
        writeln!(
            w,
            "{},{},{:.6},{:.6},{},{}",
            r.size_mss,
            mode_name(r.mode),
            m,
            sd,
            r.n,
            r.censored
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ReactionResult {
    pub mode: AqmMode,
    /// (flow, signal time, reaction seconds), one row per congestion event:
    /// first queue signal of a reduction cycle to the CWR sighting at the
    /// bottleneck.
    pub samples: Vec<(usize, f64, f64)>,
    /// (flow, mark time, latency seconds): latest congestion mark preceding
    /// each sender window reduction. This isolates the propagation latency
    /// of the marking mechanism from queue build-up and send-pause effects.
    pub mark_samples: Vec<(usize, f64, f64)>,
    pub censored: usize,
}

fn per_flow_mean_of(samples: &[(usize, f64, f64)]) -> Vec<(usize, f64)> {
    let flows: std::collections::BTreeSet<usize> = samples.iter().map(|&(f, _, _)| f).collect();
    flows
        .into_iter()
        .map(|f| {
            let xs: Vec<f64> = samples
                .iter()
                .filter(|&&(g, _, _)| g == f)
                .map(|&(_, _, r)| r)
                .collect();
            (f, mean_sd(&xs).0)
        })
        .collect()
}

impl ReactionResult {
    /// Mean signal-to-CWR reaction time per flow id.
    pub fn per_flow_mean(&self) -> Vec<(usize, f64)> {
        per_flow_mean_of(&self.samples)
    }

    /// Mean mark-to-reduction latency per flow id.
    pub fn per_flow_mark_mean(&self) -> Vec<(usize, f64)> {
        per_flow_mean_of(&self.mark_samples)
    }
}

/// Reaction-time study on the fairness-2 topology.
pub fn run_reaction(
    mode: AqmMode,
    scale: f64,
    seed: u64,
) -> Result<ReactionResult, ConfigError> {
    let cfg = fairness_scenario(2, mode, scale, SimTime::from_secs(20), seed);
    let trace = run_scenario(&cfg)?;
    Ok(reaction_from_trace(mode, &trace))
}

pub fn reaction_from_trace(mode: AqmMode, trace: &SimTrace) -> ReactionResult {
    let (samples, censored) = trace.reaction_times();
    let flatten = |xs: &[crate::trace::ReactionSample]| {
        xs.iter()
            .map(|s| {
                (
                    s.flow,
                    s.signal_time.as_secs_f64(),
                    s.reaction.as_secs_f64(),
                )
            })
            .collect::<Vec<_>>()
    };
    ReactionResult {
        mode,
        samples: flatten(&samples),
        mark_samples: flatten(&trace.mark_to_reduction_times()),
        censored,
    }
}

pub fn write_reaction_csv<W: Write>(w: &mut W, res: &ReactionResult) -> std::io::Result<()> {
    writeln!(w, "mode,flow,signal_t,reaction_s")?;
    for &(flow, t, r) in &res.samples {
        writeln!(w, "{},{},{:.6},{:.6}", mode_name(res.mode), flow, t, r)?;
    }
    Ok(())
}
