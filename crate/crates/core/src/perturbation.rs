//! Seeded execution noise and long injected delays.
//!
//! Noise is drawn from a small portable generator so that traces are
//! reproducible across platforms and easy to replicate in other languages:
//!
//! * per-rank stream state = `splitmix64(seed + (rank + 1) * 0x9E3779B97F4A7C15)`
//!   (remapped to `0x9E3779B97F4A7C15` if zero),
//! * generator = xorshift64* (shifts 12, 25, 27; multiplier `0x2545F4914F6CDD1D`),
//! * uniform `u = ((x >> 11) + 1) * 2^-53`, which lies in `(0, 1]`,
//! * exponential sample `-E * ln(u)` scaled by the execution phase length.
//!
//! Each rank consumes exactly one draw per step, whatever `E` is, so runs
//! that differ only in `E` share the same underlying uniforms.

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Mean noise per execution phase as a fraction of the phase length
    /// (the inverse rate of the exponential distribution).
    #[serde(default)]
    pub mean_relative_delay: f64,
    #[serde(default = "enabled_by_default")]
    pub enabled: bool,
}

fn enabled_by_default() -> bool {
    true
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::off()
    }
}

impl NoiseSpec {
    pub fn off() -> Self {
        Self {
            mean_relative_delay: 0.0,
            enabled: true,
        }
    }

    pub fn exponential(mean_relative_delay: f64) -> Self {
        Self {
            mean_relative_delay,
            enabled: true,
        }
    }

    pub fn is_silent(&self) -> bool {
        !self.enabled || self.mean_relative_delay == 0.0
    }
}

/// A long one-off execution delay added to `rank`'s compute phase of `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    pub rank: usize,
    pub step: usize,
    pub duration_us: f64,
}

impl DelaySpec {
    pub fn new(rank: usize, step: usize, duration_us: f64) -> Self {
        Self {
            rank,
            step,
            duration_us,
        }
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xorshift64* generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimRng {
    state: u64,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        let state = if seed == 0 { GOLDEN } else { seed };
        Self { state }
    }

    /// Independent substream for one rank.
    pub fn for_rank(seed: u64, rank: usize) -> Self {
        Self::new(splitmix64(
            seed.wrapping_add((rank as u64 + 1).wrapping_mul(GOLDEN)),
        ))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform draw in `(0, 1]`; zero is unreachable.
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// One noise sample in µs. Always advances `rng` by exactly one draw.
pub fn sample_noise(spec: &NoiseSpec, t_exec_us: f64, rng: &mut SimRng) -> f64 {
    let u = rng.next_open01();
    if spec.is_silent() {
        return 0.0;
    }
    t_exec_us * (-spec.mean_relative_delay * u.ln())
}

/// Sum of all injected delays hitting `(rank, step)`.
pub fn injected_delay(rank: usize, step: usize, delays: &[DelaySpec]) -> f64 {
    delays
        .iter()
        .filter(|d| d.rank == rank && d.step == step)
        .map(|d| d.duration_us)
        .sum()
}

/// Noise for every `(rank, step)`, indexed `[rank][step - 1]`, drawn
/// rank-major, step-minor from per-rank substreams.
pub fn noise_table(
    spec: &NoiseSpec,
    t_exec_us: f64,
    seed: u64,
    n_ranks: usize,
    n_steps: usize,
) -> Vec<Vec<f64>> {
    (0..n_ranks)
        .map(|rank| {
            let mut rng = SimRng::for_rank(seed, rank);
            (0..n_steps)
                .map(|_| sample_noise(spec, t_exec_us, &mut rng))
                .collect()
        })
        .collect()
}
