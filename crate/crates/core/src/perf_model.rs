//! Optimistic strong-scaling model for a memory-bound triad with a halo
//! exchange: `T(n) = f·V_mem / (n·b_mem) + 2·V_net / b_net`.
//!
//! `f` scales the memory traffic for write-allocate transfers on stores;
//! `f = 1` gives the plain model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriadModelParams {
    /// Working set of the three arrays.
    pub v_mem_bytes: f64,
    /// Memory bandwidth of one socket.
    pub b_mem_bytes_per_s: f64,
    /// Volume sent to each of the two neighbors.
    pub v_net_bytes: f64,
    pub b_net_bytes_per_s: f64,
    /// Flops per sweep over the arrays.
    pub flops_total: f64,
    pub write_allocate_factor: f64,
}

impl Default for TriadModelParams {
    /// 1.2 GB working set, 40 GB/s per socket, 2 MB halos over 3 GB/s,
    /// 10^8 flops, write-allocate factor 4/3.
    fn default() -> Self {
        Self {
            v_mem_bytes: 1.2e9,
            b_mem_bytes_per_s: 40e9,
            v_net_bytes: 2e6,
            b_net_bytes_per_s: 3e9,
            flops_total: 1e8,
            write_allocate_factor: 4.0 / 3.0,
        }
    }
}

impl TriadModelParams {
    pub fn without_write_allocate(self) -> Self {
        Self {
            write_allocate_factor: 1.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_mem_bytes", self.v_mem_bytes),
            ("b_mem_bytes_per_s", self.b_mem_bytes_per_s),
            ("b_net_bytes_per_s", self.b_net_bytes_per_s),
            ("flops_total", self.flops_total),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidScenario(format!("{name} must be > 0")));
            }
        }
        if !(self.v_net_bytes.is_finite() && self.v_net_bytes >= 0.0) {
            return Err(Error::InvalidScenario("v_net_bytes must be >= 0".into()));
        }
        if !(self.write_allocate_factor >= 1.0) {
            return Err(Error::InvalidScenario(
                "write_allocate_factor must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_sockets(n_sockets: u32) {
    assert!(n_sockets >= 1, "n_sockets must be >= 1");
}

/// Memory part only, in seconds.
pub fn exec_runtime(n_sockets: u32, p: &TriadModelParams) -> f64 {
    check_sockets(n_sockets);
    p.write_allocate_factor * p.v_mem_bytes / (n_sockets as f64 * p.b_mem_bytes_per_s)
}

/// Seconds per sweep on `n_sockets` sockets.
pub fn triad_runtime(n_sockets: u32, p: &TriadModelParams) -> f64 {
    exec_runtime(n_sockets, p) + 2.0 * p.v_net_bytes / p.b_net_bytes_per_s
}

/// Flop/s.
pub fn triad_performance(n_sockets: u32, p: &TriadModelParams) -> f64 {
    p.flops_total / triad_runtime(n_sockets, p)
}

pub fn exec_performance(n_sockets: u32, p: &TriadModelParams) -> f64 {
    p.flops_total / exec_runtime(n_sockets, p)
}

/// Upper bound as `n` grows: the halo exchange alone.
pub fn network_bound(p: &TriadModelParams) -> f64 {
    p.flops_total * p.b_net_bytes_per_s / (2.0 * p.v_net_bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub n_sockets: u32,
    pub runtime_s: f64,
    pub exec_runtime_s: f64,
    pub gflops: f64,
    pub exec_gflops: f64,
}

pub fn model_table(sockets: std::ops::RangeInclusive<u32>, p: &TriadModelParams) -> Result<Vec<ModelRow>> {
    p.validate()?;
    if *sockets.start() == 0 || sockets.is_empty() {
        return Err(Error::InvalidScenario(
            "socket range must be non-empty and start at >= 1".into(),
        ));
    }
    Ok(sockets
        .map(|n| ModelRow {
            n_sockets: n,
            runtime_s: triad_runtime(n, p),
            exec_runtime_s: exec_runtime(n, p),
            gflops: triad_performance(n, p) / 1e9,
            exec_gflops: exec_performance(n, p) / 1e9,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_socket_by_hand() {
        let p = TriadModelParams::default();
        let t = triad_runtime(1, &p);
        assert!((t - (0.04 + 0.004 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn plain_model_by_hand() {
        // 1.2e9 / 40e9 = 0.03 s, 2 * 2e6 / 3e9 = 1.3333e-3 s.
        let p = TriadModelParams::default().without_write_allocate();
        assert!((triad_runtime(1, &p) - 0.031_333_333_333).abs() < 1e-12);
        assert!((triad_runtime(3, &p) - 0.011_333_333_333).abs() < 1e-12);
    }

    #[test]
    fn no_halo_scales_linearly() {
        let p = TriadModelParams {
            v_net_bytes: 0.0,
            ..TriadModelParams::default()
        };
        for n in 1..20 {
            let ratio = triad_performance(n, &p) / triad_performance(1, &p);
            assert!((ratio - n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn approaches_network_bound() {
        let p = TriadModelParams::default();
        let far = triad_performance(1_000_000, &p);
        assert!(far < network_bound(&p));
        assert!((far / network_bound(&p) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_params() {
        let p = TriadModelParams {
            write_allocate_factor: 0.5,
            ..TriadModelParams::default()
        };
        assert!(p.validate().is_err());
        assert!(model_table(0..=3, &TriadModelParams::default()).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_concave_bounded(
                v_mem in 1e6f64..1e10, b_mem in 1e9f64..1e11, v_net in 1.0f64..1e8,
                b_net in 1e8f64..1e10, f in 1.0f64..2.0, n in 1u32..500
            ) {
                let p = TriadModelParams {
                    v_mem_bytes: v_mem, b_mem_bytes_per_s: b_mem, v_net_bytes: v_net,
                    b_net_bytes_per_s: b_net, flops_total: 1e8, write_allocate_factor: f,
                };
                let (a, b, c) = (
                    triad_performance(n, &p),
                    triad_performance(n + 1, &p),
                    triad_performance(n + 2, &p),
                );
                prop_assert!(b > a);
                prop_assert!(b - a >= c - b - 1e-9 * c);
                prop_assert!(c < network_bound(&p));
            }
        }
    }
}
