//! Communication model: process topology, eager/rendezvous protocol
//! selection, Hockney message cost and the analytic idle-wave speed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Rank `i` sends to `i+1..=i+d` and receives from `i-d..=i-1`.
    Unidirectional,
    /// Rank `i` exchanges with every rank within distance `d`.
    Bidirectional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// Next-neighbor process topology.
///
/// `distance` is the largest neighbor offset; a rank talks to every offset
/// `1..=distance` in each active direction. On an open chain, partners that
/// fall off either end are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    #[serde(default = "Topology::default_direction")]
    pub direction: Direction,
    #[serde(default = "Topology::default_boundary")]
    pub boundary: Boundary,
    #[serde(default = "Topology::default_distance")]
    pub distance: usize,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            direction: Self::default_direction(),
            boundary: Self::default_boundary(),
            distance: Self::default_distance(),
        }
    }
}

impl Topology {
    pub fn new(direction: Direction, boundary: Boundary, distance: usize) -> Self {
        Self {
            direction,
            boundary,
            distance,
        }
    }

    fn default_direction() -> Direction {
        Direction::Unidirectional
    }

    fn default_boundary() -> Boundary {
        Boundary::Open
    }

    fn default_distance() -> usize {
        1
    }

    pub fn validate(&self, n_ranks: usize) -> Result<()> {
        if self.distance == 0 {
            return Err(Error::InvalidScenario(
                "topology.distance must be >= 1".into(),
            ));
        }
        if self.distance >= n_ranks {
            return Err(Error::IllPosedTopology {
                distance: self.distance,
                n_ranks,
            });
        }
        Ok(())
    }

    fn offset(&self, n_ranks: usize, rank: usize, delta: isize) -> Option<usize> {
        let target = rank as isize + delta;
        match self.boundary {
            Boundary::Periodic => Some(target.rem_euclid(n_ranks as isize) as usize),
            Boundary::Open if (0..n_ranks as isize).contains(&target) => Some(target as usize),
            Boundary::Open => None,
        }
    }

    /// Destinations of `rank`'s sends in one step, in posting order.
    pub fn send_targets(&self, n_ranks: usize, rank: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for o in 1..=self.distance as isize {
            out.extend(self.offset(n_ranks, rank, o));
            if self.direction == Direction::Bidirectional {
                out.extend(self.offset(n_ranks, rank, -o));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Eager,
    Rendezvous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolOverride {
    ForceEager,
    ForceRendezvous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    #[serde(default = "ProtocolConfig::default_message_size")]
    pub message_size_bytes: u64,
    #[serde(default = "ProtocolConfig::default_eager_limit")]
    pub eager_limit_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "override")]
    pub override_mode: Option<ProtocolOverride>,
    /// Max outstanding unreceived eager messages per sender. Sends beyond
    /// the cap fall back to rendezvous semantics. `None` is unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eager_buffer_cap: Option<usize>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            message_size_bytes: Self::default_message_size(),
            eager_limit_bytes: Self::default_eager_limit(),
            override_mode: None,
            eager_buffer_cap: None,
        }
    }
}

impl ProtocolConfig {
    fn default_message_size() -> u64 {
        8192
    }

    fn default_eager_limit() -> u64 {
        16384
    }

    pub fn with_message_size(message_size_bytes: u64) -> Self {
        Self {
            message_size_bytes,
            ..Self::default()
        }
    }

    /// Protocol used for this config's own message size.
    pub fn protocol(&self) -> Protocol {
        classify_protocol(self.message_size_bytes, self)
    }
}

/// Hockney cost model: `latency + size / bandwidth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    #[serde(default = "CostModel::default_latency")]
    pub latency_us: f64,
    #[serde(default = "CostModel::default_bandwidth")]
    pub bandwidth_bytes_per_us: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            latency_us: Self::default_latency(),
            bandwidth_bytes_per_us: Self::default_bandwidth(),
        }
    }
}

impl CostModel {
    fn default_latency() -> f64 {
        3.0
    }

    // 3 GB/s
    fn default_bandwidth() -> f64 {
        3000.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.latency_us.is_finite() && self.latency_us >= 0.0) {
            return Err(Error::InvalidScenario(
                "cost.latency_us must be finite and >= 0".into(),
            ));
        }
        if !(self.bandwidth_bytes_per_us.is_finite() && self.bandwidth_bytes_per_us > 0.0) {
            return Err(Error::InvalidScenario(
                "cost.bandwidth_bytes_per_us must be finite and > 0".into(),
            ));
        }
        Ok(())
    }
}

/// An override wins; otherwise messages up to and including the eager
/// limit go eager.
pub fn classify_protocol(size_bytes: u64, cfg: &ProtocolConfig) -> Protocol {
    match cfg.override_mode {
        Some(ProtocolOverride::ForceEager) => Protocol::Eager,
        Some(ProtocolOverride::ForceRendezvous) => Protocol::Rendezvous,
        None if size_bytes <= cfg.eager_limit_bytes => Protocol::Eager,
        None => Protocol::Rendezvous,
    }
}

/// Message transfer time in µs.
pub fn message_cost(size_bytes: u64, cm: &CostModel) -> f64 {
    cm.latency_us + size_bytes as f64 / cm.bandwidth_bytes_per_us
}

/// Speed multiplier: two neighbors on each side of a delayed rank block
/// at once only under bidirectional rendezvous.
pub fn sigma(direction: Direction, protocol: Protocol) -> u32 {
    match (direction, protocol) {
        (Direction::Bidirectional, Protocol::Rendezvous) => 2,
        _ => 1,
    }
}

/// Noise-free idle-wave speed `σ·d / (T_exec + T_comm)` in ranks per second.
pub fn propagation_speed_model(
    t_exec_us: f64,
    t_comm_us: f64,
    d: usize,
    direction: Direction,
    protocol: Protocol,
) -> Result<f64> {
    let period_us = t_exec_us + t_comm_us;
    if period_us <= 0.0 || !period_us.is_finite() {
        return Err(Error::ZeroDenominator);
    }
    Ok(sigma(direction, protocol) as f64 * d as f64 / period_us * 1e6)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_examples() {
        let cfg = ProtocolConfig::default();
        assert_eq!(classify_protocol(8192, &cfg), Protocol::Eager);
        assert_eq!(classify_protocol(31080, &cfg), Protocol::Rendezvous);
        assert_eq!(classify_protocol(16384, &cfg), Protocol::Eager);
        let forced = ProtocolConfig {
            override_mode: Some(ProtocolOverride::ForceRendezvous),
            ..cfg
        };
        assert_eq!(classify_protocol(1, &forced), Protocol::Rendezvous);
        let forced = ProtocolConfig {
            override_mode: Some(ProtocolOverride::ForceEager),
            ..cfg
        };
        assert_eq!(classify_protocol(1 << 30, &forced), Protocol::Eager);
    }

    #[test]
    fn cost_examples() {
        let cm = CostModel {
            latency_us: 1.0,
            bandwidth_bytes_per_us: 3000.0,
        };
        assert_eq!(message_cost(0, &cm), 1.0);
        assert!((message_cost(2_000_000, &cm) - 667.6667).abs() < 1e-3);
        let unit = CostModel {
            latency_us: 0.0,
            bandwidth_bytes_per_us: 1.0,
        };
        assert_eq!(message_cost(100, &unit), 100.0);
    }

    #[test]
    fn sigma_table() {
        assert_eq!(sigma(Direction::Bidirectional, Protocol::Rendezvous), 2);
        assert_eq!(sigma(Direction::Unidirectional, Protocol::Rendezvous), 1);
        assert_eq!(sigma(Direction::Bidirectional, Protocol::Eager), 1);
        assert_eq!(sigma(Direction::Unidirectional, Protocol::Eager), 1);
    }

    #[test]
    fn speed_model_examples() {
        let v = propagation_speed_model(3000.0, 0.0, 1, Direction::Unidirectional, Protocol::Eager)
            .unwrap();
        assert!((v - 333.333).abs() < 1e-2);
        let v4 =
            propagation_speed_model(3000.0, 0.0, 2, Direction::Bidirectional, Protocol::Rendezvous)
                .unwrap();
        assert!((v4 / v - 4.0).abs() < 1e-12);
        let one = propagation_speed_model(1e6, 0.0, 1, Direction::Unidirectional, Protocol::Eager)
            .unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        assert!(matches!(
            propagation_speed_model(0.0, 0.0, 1, Direction::Unidirectional, Protocol::Eager),
            Err(Error::ZeroDenominator)
        ));
    }

    #[test]
    fn open_chain_drops_edge_partners() {
        let t = Topology::new(Direction::Bidirectional, Boundary::Open, 2);
        assert_eq!(t.send_targets(5, 0), vec![1, 2]);
        assert_eq!(t.send_targets(5, 4), vec![3, 2]);
        assert_eq!(t.send_targets(5, 2), vec![3, 1, 4, 0]);
        let ring = Topology::new(Direction::Unidirectional, Boundary::Periodic, 1);
        assert_eq!(ring.send_targets(5, 4), vec![0]);
    }

    #[test]
    fn distance_must_fit_ring() {
        let t = Topology::new(Direction::Unidirectional, Boundary::Periodic, 4);
        assert!(matches!(
            t.validate(4),
            Err(Error::IllPosedTopology { .. })
        ));
        assert!(t.validate(5).is_ok());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn larger_messages_never_go_back_to_eager(limit in 0u64..100_000, a in 0u64..200_000, b in 0u64..200_000) {
                let cfg = ProtocolConfig { eager_limit_bytes: limit, ..ProtocolConfig::default() };
                let (lo, hi) = (a.min(b), a.max(b));
                if classify_protocol(lo, &cfg) == Protocol::Rendezvous {
                    prop_assert_eq!(classify_protocol(hi, &cfg), Protocol::Rendezvous);
                }
            }

            #[test]
            fn hockney_is_monotone_and_subadditive(
                lat in 0.001f64..100.0, bw in 0.1f64..1e5, a in 0u64..10_000_000, b in 0u64..10_000_000
            ) {
                let cm = CostModel { latency_us: lat, bandwidth_bytes_per_us: bw };
                prop_assert!(message_cost(a.max(b), &cm) >= message_cost(a.min(b), &cm));
                prop_assert!(message_cost(a + b, &cm) <= message_cost(a, &cm) + message_cost(b, &cm));
            }
        }
    }
}
