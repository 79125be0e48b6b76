//! Discrete-event network simulator and numerical analysis toolkit for
//! reverse-path congestion marking: a bottleneck switch that converts AQM
//! congestion signals into ECE marks on in-flight reverse-path ACKs, the
//! forward-marking baseline it is compared against, TCP/DCTCP endpoint
//! models, and the fluid-model stability analysis of the resulting
//! multi-delay control loop.

pub mod codel;
pub mod config;
pub mod endpoint;
pub mod engine;
pub mod experiments;
pub mod metrics;
pub mod packet;
pub mod queue;
pub mod rpm;
pub mod stability;
pub mod time;
pub mod topology;
pub mod trace;

pub use config::{AqmMode, ScenarioConfig, Transport};
pub use engine::{run_scenario, Simulator};
pub use time::SimTime;
pub use trace::SimTrace;
