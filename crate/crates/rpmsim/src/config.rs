//! Scenario configuration: file schema, validation and built-in topologies.
//!
//! Configs are TOML. Schema:
//!
//! ```toml
//! sim_duration_ns = 10_000_000_000
//! rng_seed = 1
//! buffer_limit = 25_000            # optional; per-port byte budget
//!
//! [[nodes]]
//! name = "H1"
//! kind = "host"                    # "host" | "switch"
//!
//! [[links]]
//! a = "H1"
//! b = "S1"
//! capacity_bps = 10_000_000
//! delay_ns = 10_000_000
//!
//! [[flows]]
//! src = "H1"
//! dst = "H11"
//! size_mss = 100                   # omit for a long-lived flow
//! start_ns = 0
//! transport = "tcp_aimd"           # "tcp_aimd" | "dctcp"
//!
//! [aqm]
//! node = "R1"
//! mode = "rpm_per_flow"            # "fwd" | "rpm_per_flow" | "rpm_per_port" | "none"
//! codel_target_ns = 1_000_000
//! codel_interval_ns = 20_000_000
//! register_size = 65536
//! counter_max = 255
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::MSS_BYTES;
use crate::rpm::{DEFAULT_COUNTER_MAX, DEFAULT_REGISTER_SIZE};
use crate::time::SimTime;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Host,
    Switch,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AqmMode {
    Fwd,
    RpmPerFlow,
    RpmPerPort,
    None,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    TcpAimd,
    Dctcp,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub capacity_bps: u64,
    #[serde(default)]
    pub delay_ns: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowSpec {
    pub src: String,
    pub dst: String,
    /// Number of full-MSS segments; `None` means long-lived (runs until the
    /// horizon).
    #[serde(default)]
    pub size_mss: Option<u64>,
    #[serde(default)]
    pub start_ns: u64,
    #[serde(default = "default_transport")]
    pub transport: Transport,
}

fn default_transport() -> Transport {
    Transport::TcpAimd
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AqmConfig {
    /// Name of the switch the AQM (and register) is deployed on.
    #[serde(default)]
    pub node: Option<String>,
    pub mode: AqmMode,
    #[serde(default = "default_target")]
    pub codel_target_ns: u64,
    #[serde(default = "default_interval")]
    pub codel_interval_ns: u64,
    #[serde(default = "default_register_size")]
    pub register_size: usize,
    #[serde(default = "default_counter_max")]
    pub counter_max: u32,
}

fn default_target() -> u64 {
    1_000_000
}
fn default_interval() -> u64 {
    20_000_000
}
fn default_register_size() -> usize {
    DEFAULT_REGISTER_SIZE
}
fn default_counter_max() -> u32 {
    DEFAULT_COUNTER_MAX
}

impl Default for AqmConfig {
    fn default() -> Self {
        AqmConfig {
            node: None,
            mode: AqmMode::None,
            codel_target_ns: default_target(),
            codel_interval_ns: default_interval(),
            register_size: default_register_size(),
            counter_max: default_counter_max(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
    #[serde(default)]
    pub aqm: AqmConfig,
    /// Per-port byte budget. When absent it defaults to a budget giving at
    /// most 2 ms of queueing at the slowest link rate, floored at 4 full
    /// packets so the queue stays functional at desk-scale rates.
    #[serde(default)]
    pub buffer_limit: Option<u64>,
    pub sim_duration_ns: u64,
    #[serde(default)]
    pub rng_seed: u64,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("no nodes")]
    NoNodes,
    #[error("duplicate node name {0:?}")]
    DuplicateNode(String),
    #[error("dangling node reference {0:?}")]
    DanglingReference(String),
    #[error("non-positive capacity on link {0:?}-{1:?}")]
    NonPositiveCapacity(String, String),
    #[error("sim_duration_ns must be positive")]
    NonPositiveDuration,
    #[error("register_size must be a power of two, got {0}")]
    BadRegisterSize(usize),
    #[error("flow size_mss must be >= 1 when bounded")]
    ZeroFlowSize,
    #[error("flow endpoints must be hosts: {0:?}")]
    FlowEndpointNotHost(String),
    #[error("aqm node {0:?} is not a switch")]
    AqmNodeNotSwitch(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.nodes.is_empty() {
            return Err(ConfigError::NoNodes);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if self.nodes[..i].iter().any(|m| m.name == n.name) {
                return Err(ConfigError::DuplicateNode(n.name.clone()));
            }
        }
        for l in &self.links {
            for end in [&l.a, &l.b] {
                if self.node_index(end).is_none() {
                    return Err(ConfigError::DanglingReference(end.clone()));
                }
            }
            if l.capacity_bps == 0 {
                return Err(ConfigError::NonPositiveCapacity(l.a.clone(), l.b.clone()));
            }
        }
        for f in &self.flows {
            for end in [&f.src, &f.dst] {
                match self.node_index(end) {
                    None => return Err(ConfigError::DanglingReference(end.clone())),
                    Some(i) => {
                        if self.nodes[i].kind != NodeKind::Host {
                            return Err(ConfigError::FlowEndpointNotHost(end.clone()));
                        }
                    }
                }
            }
            if f.size_mss == Some(0) {
                return Err(ConfigError::ZeroFlowSize);
            }
        }
        if self.sim_duration_ns == 0 {
            return Err(ConfigError::NonPositiveDuration);
        }
        if !self.aqm.register_size.is_power_of_two() {
            return Err(ConfigError::BadRegisterSize(self.aqm.register_size));
        }
        if let Some(name) = &self.aqm.node {
            match self.node_index(name) {
                None => return Err(ConfigError::DanglingReference(name.clone())),
                Some(i) => {
                    if self.nodes[i].kind != NodeKind::Switch {
                        return Err(ConfigError::AqmNodeNotSwitch(name.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Effective per-port buffer budget; see the field doc for the default.
    pub fn effective_buffer_limit(&self) -> u64 {
        if let Some(b) = self.buffer_limit {
            return b;
        }
        let min_cap = self
            .links
            .iter()
            .map(|l| l.capacity_bps)
            .min()
            .unwrap_or(10_000_000);
        // 2 ms worth of bytes at the slowest rate
        let budget = min_cap / 8 * 2 / 1000;
        budget.max(4 * (MSS_BYTES + 40))
    }

    /// The dumbbell testbed topology: senders H1..H10 behind S1, receivers
    /// H11..H20 behind S2, bottleneck switch R1 in the middle with the R1-S2
    /// link at one tenth of the S1-R1 rate. `scale` multiplies the 100/10 Gbps
    /// reference rates; `recv_delays[k]` applies to the receiver pair
    /// H(11+2k)/H(12+2k).
    pub fn dumbbell(
        scale: f64,
        sender_delay: SimTime,
        recv_delays: [SimTime; 5],
    ) -> ScenarioConfig {
        let host_rate = (10e9 * scale) as u64;
        let core_rate = (100e9 * scale) as u64;
        let mut nodes = Vec::new();
        for i in 1..=20 {
            nodes.push(NodeSpec {
                name: format!("H{i}"),
                kind: NodeKind::Host,
            });
        }
        for s in ["S1", "R1", "S2"] {
            nodes.push(NodeSpec {
                name: s.to_string(),
                kind: NodeKind::Switch,
            });
        }
        let mut links = Vec::new();
        for i in 1..=10 {
            links.push(LinkSpec {
                a: format!("H{i}"),
                b: "S1".into(),
                capacity_bps: host_rate,
                delay_ns: sender_delay.as_nanos(),
            });
        }
        links.push(LinkSpec {
            a: "S1".into(),
            b: "R1".into(),
            capacity_bps: core_rate,
            delay_ns: 0,
        });
        links.push(LinkSpec {
            a: "R1".into(),
            b: "S2".into(),
            capacity_bps: host_rate,
            delay_ns: 0,
        });
        for j in 11..=20 {
            links.push(LinkSpec {
                a: "S2".into(),
                b: format!("H{j}"),
                capacity_bps: host_rate,
                delay_ns: recv_delays[(j - 11) / 2].as_nanos(),
            });
        }
        ScenarioConfig {
            nodes,
            links,
            flows: Vec::new(),
            aqm: AqmConfig {
                node: Some("R1".into()),
                mode: AqmMode::None,
                ..AqmConfig::default()
            },
            buffer_limit: None,
            sim_duration_ns: 10_000_000_000,
            rng_seed: 0,
        }
    }
}
