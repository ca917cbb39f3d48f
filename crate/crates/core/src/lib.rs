//! Deterministic discrete-event simulation and analysis of idle waves in
//! bulk-synchronous message-passing programs.
//!
//! The crate is organised bottom-up:
//!
//! * [`comm`]: topology, eager/rendezvous selection, Hockney cost and the
//!   analytic propagation speed,
//! * [`perturbation`]: seeded exponential noise and injected delays,
//! * [`sim`]: the event-driven engine producing a [`sim::Trace`],
//! * [`analysis`]: idle extraction, wave fronts, speed/decay fits,
//!   cancellation and excess runtime,
//! * [`perf_model`]: the execution + communication strong-scaling model,
//! * [`config`], [`presets`], [`report`], [`sweep`]: configuration files,
//!   canned scenarios, trace/summary serialization and parameter sweeps.

pub mod analysis;
pub mod comm;
pub mod config;
pub mod error;
pub mod perf_model;
pub mod perturbation;
pub mod presets;
pub mod report;
pub mod sim;
pub mod stats;
pub mod sweep;

pub use comm::{
    classify_protocol, message_cost, propagation_speed_model, sigma, Boundary, CostModel,
    Direction, Protocol, ProtocolConfig, ProtocolOverride, Topology,
};
pub use error::{Error, Result};
pub use perturbation::{injected_delay, sample_noise, DelaySpec, NoiseSpec, SimRng};
pub use sim::{resolve_message, simulate, MessageCompletion, PhaseKind, PhaseRecord, Scenario, Trace};
