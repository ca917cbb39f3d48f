//! Trace analyses: idle matrix, wave fronts, speed and decay fits,
//! cancellation and excess runtime.
//!
//! A front is followed as one *wing* per heading (towards higher or lower
//! ranks) starting at an injection. A wing moves one rank per hop and
//! accepts the next rank only if that rank idles for at least
//! `theta * t_exec_us` within the step of the previous hop or the one after
//! it. This keeps a wing on its own wave even when several waves or noise
//! make other ranks idle at the same time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::comm::{Boundary, Direction, Protocol, Topology};
use crate::error::{Error, Result};
use crate::perturbation::DelaySpec;
use crate::sim::{PhaseKind, Scenario, Trace};
use crate::stats::{linear_fit, median};

pub const DEFAULT_THETA: f64 = 0.05;
pub const DEFAULT_WINDOW: usize = 3;

/// Idle time per rank and step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdleMatrix {
    pub n_ranks: usize,
    pub n_steps: usize,
    /// `idle_us[rank][step - 1]`.
    pub idle_us: Vec<Vec<f64>>,
    /// Start of the step's idle period, if it had one.
    pub idle_start_us: Vec<Vec<Option<f64>>>,
    /// Noise-free message cost that the engine books as communication.
    pub baseline_comm_us: f64,
    pub t_exec_us: f64,
    pub topology: Topology,
    pub protocol: Protocol,
}

impl IdleMatrix {
    pub fn idle(&self, rank: usize, step: usize) -> f64 {
        self.idle_us[rank][step - 1]
    }

    pub fn total_idle_us(&self) -> f64 {
        self.idle_us.iter().flatten().sum()
    }

    /// Neighbor one hop away, `None` past an open end.
    fn neighbor(&self, rank: usize, heading: Heading) -> Option<usize> {
        let n = self.n_ranks;
        match (heading, self.topology.boundary) {
            (Heading::Up, Boundary::Periodic) => Some((rank + 1) % n),
            (Heading::Down, Boundary::Periodic) => Some((rank + n - 1) % n),
            (Heading::Up, Boundary::Open) => (rank + 1 < n).then_some(rank + 1),
            (Heading::Down, Boundary::Open) => rank.checked_sub(1),
        }
    }

    /// Eager traffic in one direction never holds a sender back, so waves
    /// only travel downstream.
    fn headings(&self) -> &'static [Heading] {
        match (self.topology.direction, self.protocol) {
            (Direction::Unidirectional, Protocol::Eager) => &[Heading::Up],
            _ => &[Heading::Up, Heading::Down],
        }
    }
}

pub fn idle_matrix(trace: &Trace, scenario: &Scenario) -> Result<IdleMatrix> {
    let (n, k) = (scenario.n_ranks, scenario.n_steps);
    if trace.n_ranks != n || trace.n_steps != k {
        return Err(Error::DimensionMismatch(format!(
            "trace is {}x{}, scenario is {n}x{k}",
            trace.n_ranks, trace.n_steps
        )));
    }
    let mut idle_us = vec![vec![0.0; k]; n];
    let mut idle_start_us = vec![vec![None; k]; n];
    for r in &trace.records {
        if r.rank >= n || r.step == 0 || r.step > k {
            return Err(Error::DimensionMismatch(format!(
                "record for rank {} step {} outside {n}x{k}",
                r.rank, r.step
            )));
        }
        if r.kind == PhaseKind::Idle {
            idle_us[r.rank][r.step - 1] += r.duration_us();
            let start = idle_start_us[r.rank][r.step - 1].get_or_insert(r.t_start_us);
            *start = start.min(r.t_start_us);
        }
    }
    Ok(IdleMatrix {
        n_ranks: n,
        n_steps: k,
        idle_us,
        idle_start_us,
        baseline_comm_us: scenario.message_cost(),
        t_exec_us: scenario.t_exec_us,
        topology: scenario.topology,
        protocol: scenario.base_protocol(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Injection {
    pub rank: usize,
    pub step: usize,
}

impl From<&DelaySpec> for Injection {
    fn from(d: &DelaySpec) -> Self {
        Self {
            rank: d.rank,
            step: d.step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heading {
    /// Towards higher ranks.
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub rank: usize,
    pub step: usize,
    pub t_arrival_us: f64,
    pub hop_distance: usize,
    pub idle_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WingEnd {
    /// Ran off an open end.
    Boundary,
    /// Came back around the ring to the injecting rank.
    Source,
    /// Met the other wing of the same injection.
    Sibling,
    /// Next rank did not idle in time.
    Faded,
    /// Steps ran out.
    RunEnded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wing {
    pub heading: Heading,
    pub path: Vec<Arrival>,
    pub end: WingEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveFronts {
    pub injection: Injection,
    pub threshold_theta: f64,
    /// Earliest arrival per rank over both wings; never set for the
    /// injecting rank.
    pub arrivals: Vec<Option<Arrival>>,
    pub wings: Vec<Wing>,
}

impl WaveFronts {
    pub fn reached(&self) -> usize {
        self.arrivals.iter().flatten().count()
    }

    pub fn wing(&self, heading: Heading) -> Option<&Wing> {
        self.wings.iter().find(|w| w.heading == heading)
    }
}

fn track_wing(idle: &IdleMatrix, inj: Injection, heading: Heading, threshold: f64) -> Wing {
    let mut path = Vec::new();
    let (mut rank, mut prev_step) = (inj.rank, inj.step);
    let end = loop {
        let Some(next) = idle.neighbor(rank, heading) else {
            break WingEnd::Boundary;
        };
        if next == inj.rank {
            break WingEnd::Source;
        }
        let last = (prev_step + 1).min(idle.n_steps);
        let mut best: Option<usize> = None;
        for k in prev_step..=last {
            let x = idle.idle(next, k);
            if x >= threshold && best.map_or(true, |b| x > idle.idle(next, b)) {
                best = Some(k);
            }
        }
        let Some(k) = best else {
            break if prev_step + 1 > idle.n_steps {
                WingEnd::RunEnded
            } else {
                WingEnd::Faded
            };
        };
        path.push(Arrival {
            rank: next,
            step: k,
            t_arrival_us: idle.idle_start_us[next][k - 1].expect("idle implies a start"),
            hop_distance: path.len() + 1,
            idle_us: idle.idle(next, k),
        });
        rank = next;
        prev_step = k;
    };
    Wing { heading, path, end }
}

/// Where an upward and a downward wing run into each other: a shared rank
/// reached by both within one step, else neighboring ranks reached within
/// one step. Among candidates the one with the fewest combined hops wins,
/// then the smaller step gap. Returns path indices.
fn meeting(up: &Wing, down: &Wing, idle: &IdleMatrix) -> Option<(usize, usize)> {
    let best = |same_rank: bool| {
        let mut found: Option<(usize, usize, usize, usize)> = None;
        for (i, a) in up.path.iter().enumerate() {
            let target = if same_rank {
                Some(a.rank)
            } else {
                idle.neighbor(a.rank, Heading::Up)
            };
            for (j, b) in down.path.iter().enumerate() {
                let gap = a.step.abs_diff(b.step);
                if Some(b.rank) != target || gap > 1 {
                    continue;
                }
                let key = (i + j, gap, i, j);
                if found.map_or(true, |f| key < f) {
                    found = Some(key);
                }
            }
        }
        found.map(|(_, _, i, j)| (i, j))
    };
    best(true).or_else(|| best(false))
}

pub fn detect_fronts(idle: &IdleMatrix, injection: Injection, theta: f64) -> Result<WaveFronts> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidScenario(format!(
            "theta must lie in (0, 1), got {theta}"
        )));
    }
    if injection.rank >= idle.n_ranks || injection.step == 0 || injection.step > idle.n_steps {
        return Err(Error::DimensionMismatch(format!(
            "injection at rank {} step {} outside {}x{}",
            injection.rank, injection.step, idle.n_ranks, idle.n_steps
        )));
    }
    let threshold = theta * idle.t_exec_us;
    let mut wings: Vec<Wing> = idle
        .headings()
        .iter()
        .map(|&h| track_wing(idle, injection, h, threshold))
        .collect();

    if let [up, down] = wings.as_mut_slice() {
        if let Some((i, j)) = meeting(up, down, idle) {
            for (w, keep) in [(up, i + 1), (down, j + 1)] {
                if w.path.len() > keep {
                    w.path.truncate(keep);
                }
                w.end = WingEnd::Sibling;
            }
        }
    }

    let mut arrivals: Vec<Option<Arrival>> = vec![None; idle.n_ranks];
    for a in wings.iter().flat_map(|w| &w.path) {
        let slot = &mut arrivals[a.rank];
        let earlier = slot.map_or(true, |b| {
            (a.t_arrival_us, a.hop_distance) < (b.t_arrival_us, b.hop_distance)
        });
        if earlier {
            *slot = Some(*a);
        }
    }
    Ok(WaveFronts {
        injection,
        threshold_theta: theta,
        arrivals,
        wings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub v_ranks_per_s: f64,
    pub fit_r2: f64,
    pub n_points: usize,
}

/// Leading edge of a front: per step, the farthest hop reached, kept only
/// while it advances. A last point whose advance differs from the typical
/// increment (the wave clipped by a boundary, or two colliding wings) is
/// dropped.
pub fn leading_edge(fronts: &WaveFronts) -> Vec<(usize, f64)> {
    let mut per_step: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for a in fronts.wings.iter().flat_map(|w| &w.path) {
        let e = per_step.entry(a.step).or_insert((a.hop_distance, a.t_arrival_us));
        if a.hop_distance > e.0 || (a.hop_distance == e.0 && a.t_arrival_us < e.1) {
            *e = (a.hop_distance, a.t_arrival_us);
        }
    }
    let mut edge: Vec<(usize, f64)> = Vec::new();
    for (_, (hop, t)) in per_step {
        if edge.last().map_or(true, |&(h, _)| hop > h) {
            edge.push((hop, t));
        }
    }
    if edge.len() >= 2 {
        let incs: Vec<f64> = edge
            .iter()
            .scan(0, |prev, &(h, _)| {
                let inc = h - *prev;
                *prev = h;
                Some(inc as f64)
            })
            .collect();
        let typical = median(&incs).expect("non-empty");
        if *incs.last().expect("non-empty") != typical {
            edge.pop();
        }
    }
    edge
}

pub fn estimate_speed(fronts: &WaveFronts) -> Result<SpeedEstimate> {
    let edge = leading_edge(fronts);
    if edge.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: edge.len(),
        });
    }
    let xs: Vec<f64> = edge.iter().map(|&(h, _)| h as f64).collect();
    let ys: Vec<f64> = edge.iter().map(|&(_, t)| t).collect();
    let fit = linear_fit(&xs, &ys).expect("distinct hops");
    Ok(SpeedEstimate {
        v_ranks_per_s: 1e6 / fit.slope,
        fit_r2: fit.r2,
        n_points: edge.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankAmplitude {
    pub rank: usize,
    pub hop_distance: usize,
    pub amplitude_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub beta_us_per_rank: f64,
    pub per_rank_amplitude_us: Vec<RankAmplitude>,
    pub fit_r2: f64,
}

/// Amplitude of each reached rank is its largest idle period within
/// `window` steps from the front's arrival; `beta` is the negated slope of
/// amplitude over hop distance.
pub fn estimate_decay(idle: &IdleMatrix, fronts: &WaveFronts, window: usize) -> Result<DecayEstimate> {
    if window == 0 {
        return Err(Error::InvalidScenario("decay window must be >= 1".into()));
    }
    let mut amps: Vec<RankAmplitude> = fronts
        .arrivals
        .iter()
        .flatten()
        .map(|a| {
            let last = (a.step + window - 1).min(idle.n_steps);
            let amplitude_us = (a.step..=last).map(|k| idle.idle(a.rank, k)).fold(0.0, f64::max);
            RankAmplitude {
                rank: a.rank,
                hop_distance: a.hop_distance,
                amplitude_us,
            }
        })
        .collect();
    amps.sort_by_key(|a| (a.hop_distance, a.rank));
    decay_from_amplitudes(amps)
}

pub fn decay_from_amplitudes(amps: Vec<RankAmplitude>) -> Result<DecayEstimate> {
    let xs: Vec<f64> = amps.iter().map(|a| a.hop_distance as f64).collect();
    let ys: Vec<f64> = amps.iter().map(|a| a.amplitude_us).collect();
    let fit = (amps.len() >= 3).then(|| linear_fit(&xs, &ys)).flatten();
    let Some(fit) = fit else {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: amps.len(),
        });
    };
    Ok(DecayEstimate {
        beta_us_per_rank: -fit.slope,
        per_rank_amplitude_us: amps,
        fit_r2: fit.r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WingRef {
    pub injection: Injection,
    pub heading: Heading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CancellationKind {
    Full,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CancellationEvent {
    pub kind: CancellationKind,
    /// Last rank reached by the upward wing of the pair.
    pub rank: usize,
    pub step: usize,
    pub up: WingRef,
    pub down: WingRef,
    /// Hops each wing had travelled when they met.
    pub hops: [usize; 2],
    pub survivor: Option<WingRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CancellationReport {
    pub events: Vec<CancellationEvent>,
}

impl CancellationReport {
    pub fn count(&self, kind: CancellationKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// Every upward wing is paired with every downward wing. A pair that meets
/// is a full cancellation if neither goes on, partial if exactly one does;
/// pairs that cross and both go on are not reported.
pub fn detect_cancellation(
    fronts_list: &[WaveFronts],
    topology: &Topology,
    idle: &IdleMatrix,
) -> CancellationReport {
    let idle = IdleMatrix {
        topology: *topology,
        ..idle.clone()
    };
    let wings: Vec<(Injection, &Wing)> = fronts_list
        .iter()
        .flat_map(|f| f.wings.iter().map(move |w| (f.injection, w)))
        .collect();
    let mut events = Vec::new();
    for &(ia, a) in wings.iter().filter(|(_, w)| w.heading == Heading::Up) {
        for &(ib, b) in wings.iter().filter(|(_, w)| w.heading == Heading::Down) {
            let Some((i, j)) = meeting(a, b, &idle) else {
                continue;
            };
            let up = WingRef {
                injection: ia,
                heading: Heading::Up,
            };
            let down = WingRef {
                injection: ib,
                heading: Heading::Down,
            };
            let step = a.path[i].step.max(b.path[j].step);
            let beyond = |w: &Wing| w.path.iter().any(|x| x.step > step);
            let (a_on, b_on) = (beyond(a), beyond(b));
            let (kind, survivor) = match (a_on, b_on) {
                (false, false) => (CancellationKind::Full, None),
                (true, false) => (CancellationKind::Partial, Some(up)),
                (false, true) => (CancellationKind::Partial, Some(down)),
                (true, true) => continue,
            };
            events.push(CancellationEvent {
                kind,
                rank: a.path[i].rank,
                step,
                up,
                down,
                hops: [a.path[i].hop_distance, b.path[j].hop_distance],
                survivor,
            });
        }
    }
    events.sort_by_key(|e| (e.step, e.rank));
    CancellationReport { events }
}

/// Extra wallclock time: makespan with the delay minus makespan without.
pub fn excess_runtime(trace_with_delay: &Trace, trace_baseline: &Trace) -> Result<f64> {
    if trace_with_delay.n_ranks != trace_baseline.n_ranks
        || trace_with_delay.n_steps != trace_baseline.n_steps
    {
        return Err(Error::MismatchedScenarios(format!(
            "{}x{} vs {}x{}",
            trace_with_delay.n_ranks,
            trace_with_delay.n_steps,
            trace_baseline.n_ranks,
            trace_baseline.n_steps
        )));
    }
    Ok(trace_with_delay.makespan_us() - trace_baseline.makespan_us())
}

/// Per-rank difference of final times.
pub fn excess_per_rank(trace_with_delay: &Trace, trace_baseline: &Trace) -> Result<Vec<f64>> {
    excess_runtime(trace_with_delay, trace_baseline)?;
    Ok(trace_with_delay
        .final_time_us
        .iter()
        .zip(&trace_baseline.final_time_us)
        .map(|(a, b)| a - b)
        .collect())
}

/// A baseline must be the same experiment minus its delays.
pub fn check_baseline(with_delay: &Scenario, baseline: &Scenario) -> Result<()> {
    if !baseline.delays.is_empty() {
        return Err(Error::MismatchedScenarios(
            "baseline has injected delays".into(),
        ));
    }
    if with_delay.without_delays() != *baseline {
        return Err(Error::MismatchedScenarios(
            "baseline differs in more than its delays (size, seed or noise)".into(),
        ));
    }
    Ok(())
}
