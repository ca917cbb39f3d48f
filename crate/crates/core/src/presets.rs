//! Named scenarios mirroring the experiments of the idle-wave study.
//!
//! All use `t_exec_us = 3000` (1500 for `fig8*`) and the default cost
//! model. Message sizes pick the protocol: 8192 and 16384 bytes go eager,
//! 31080 bytes goes rendezvous.

use crate::comm::{Boundary, Direction, ProtocolConfig, Topology};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::perturbation::{DelaySpec, NoiseSpec, SimRng};
use crate::sim::Scenario;

pub const PRESET_NAMES: &[&str] = &[
    "fig2", "fig3a", "fig3b", "fig3c", "fig3d", "fig3e", "fig3f", "fig3g", "fig3h", "fig4a",
    "fig4b", "fig4c", "fig6", "fig7a", "fig7b", "fig8a", "fig8b", "fig8c",
];

pub const EAGER_SIZE: u64 = 16384;
pub const RENDEZVOUS_SIZE: u64 = 31080;

const T_EXEC: f64 = 3000.0;
/// 4.5 execution phases.
const LONG_DELAY: f64 = 13_500.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub config: ExperimentConfig,
}

fn scenario(
    n_ranks: usize,
    n_steps: usize,
    direction: Direction,
    boundary: Boundary,
    distance: usize,
    message_size: u64,
) -> Scenario {
    let mut s = Scenario::new(
        n_ranks,
        n_steps,
        T_EXEC,
        Topology::new(direction, boundary, distance),
    );
    s.protocol = ProtocolConfig::with_message_size(message_size);
    s
}

/// One of the eight single-delay panels: 18 ranks, delay at rank 5.
pub fn single_delay(direction: Direction, boundary: Boundary, distance: usize, size: u64) -> Scenario {
    let mut s = scenario(18, 25, direction, boundary, distance, size);
    s.delays.push(DelaySpec::new(5, 1, LONG_DELAY));
    s
}

/// 100 ranks as ten sockets of ten, one delay per socket at local rank 5.
fn sockets(durations: impl Fn(usize) -> f64, n_steps: usize) -> Scenario {
    let mut s = scenario(
        100,
        n_steps,
        Direction::Bidirectional,
        Boundary::Periodic,
        1,
        EAGER_SIZE,
    );
    s.delays = (0..10)
        .map(|socket| DelaySpec::new(10 * socket + 5, 1, durations(socket)))
        .collect();
    s
}

/// 36 ranks, 6 ms delay at rank 1, noise `e`.
pub fn damping(e: f64) -> Scenario {
    let mut s = Scenario::new(
        36,
        30,
        1500.0,
        Topology::new(Direction::Bidirectional, Boundary::Open, 1),
    );
    s.noise = NoiseSpec::exponential(e);
    s.delays.push(DelaySpec::new(1, 1, 6000.0));
    s
}

/// Single long delay on a ring wide enough to watch it decay under noise `e`.
pub fn decay(e: f64) -> Scenario {
    let mut s = scenario(
        64,
        45,
        Direction::Bidirectional,
        Boundary::Periodic,
        1,
        EAGER_SIZE,
    );
    s.noise = NoiseSpec::exponential(e);
    s.delays.push(DelaySpec::new(0, 1, 90_000.0));
    s
}

pub fn preset(name: &str) -> Result<Preset> {
    use Boundary::*;
    use Direction::*;
    let (name, description, s): (&'static str, &'static str, Scenario) = match name {
        "fig2" => {
            let mut s = single_delay(Unidirectional, Open, 1, 8192);
            s.protocol = ProtocolConfig::default();
            ("fig2", "single delay on an open eager chain", s)
        }
        "fig3a" => ("fig3a", "unidirectional open eager", single_delay(Unidirectional, Open, 1, EAGER_SIZE)),
        "fig3b" => ("fig3b", "unidirectional periodic eager", single_delay(Unidirectional, Periodic, 1, EAGER_SIZE)),
        "fig3c" => ("fig3c", "bidirectional open eager", single_delay(Bidirectional, Open, 1, EAGER_SIZE)),
        "fig3d" => ("fig3d", "bidirectional periodic eager", single_delay(Bidirectional, Periodic, 1, EAGER_SIZE)),
        "fig3e" => ("fig3e", "unidirectional open rendezvous", single_delay(Unidirectional, Open, 1, RENDEZVOUS_SIZE)),
        "fig3f" => ("fig3f", "unidirectional periodic rendezvous", single_delay(Unidirectional, Periodic, 1, RENDEZVOUS_SIZE)),
        "fig3g" => ("fig3g", "bidirectional open rendezvous", single_delay(Bidirectional, Open, 1, RENDEZVOUS_SIZE)),
        "fig3h" => ("fig3h", "bidirectional periodic rendezvous", single_delay(Bidirectional, Periodic, 1, RENDEZVOUS_SIZE)),
        "fig4a" => ("fig4a", "ten equal delays on a ring", sockets(|_| LONG_DELAY, 35)),
        "fig4b" => (
            "fig4b",
            "ten delays on a ring, odd sockets halved",
            sockets(|k| if k % 2 == 1 { LONG_DELAY / 2.0 } else { LONG_DELAY }, 35),
        ),
        "fig4c" => {
            let mut rng = SimRng::new(0x0F16_4C);
            let draws: Vec<f64> = (0..10).map(|_| rng.next_open01()).collect();
            (
                "fig4c",
                "ten random delays on a ring",
                sockets(move |k| T_EXEC * (0.5 + 4.0 * draws[k]), 20),
            )
        }
        "fig6" => ("fig6", "long delay decaying under 10% noise", decay(0.10)),
        "fig7a" => {
            let mut s = single_delay(Unidirectional, Open, 2, RENDEZVOUS_SIZE);
            s.n_steps = 24;
            ("fig7a", "unidirectional rendezvous, distance 2", s)
        }
        "fig7b" => {
            let mut s = single_delay(Bidirectional, Open, 2, RENDEZVOUS_SIZE);
            s.n_steps = 24;
            ("fig7b", "bidirectional rendezvous, distance 2", s)
        }
        "fig8a" => ("fig8a", "6 ms delay, no noise", damping(0.0)),
        "fig8b" => ("fig8b", "6 ms delay, 20% noise", damping(0.20)),
        "fig8c" => ("fig8c", "6 ms delay, 25% noise", damping(0.25)),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(Preset {
        name,
        description,
        config: ExperimentConfig::from_scenario(&s),
    })
}
