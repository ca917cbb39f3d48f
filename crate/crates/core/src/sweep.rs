//! Parameter sweeps with repeated seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{detect_fronts, estimate_decay, estimate_speed, idle_matrix, Injection};
use crate::config::{ExperimentConfig, SweepParameter, SweepSpec};
use crate::error::{Error, Result};
use crate::sim::simulate;
use crate::stats::Spread;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub value: f64,
    pub seed: u64,
    pub beta_us_per_rank: f64,
    pub v_ranks_per_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: f64,
    pub beta: Spread,
    pub speed: Spread,
}

/// The base config with `parameter` set to `value`.
pub fn apply(base: &ExperimentConfig, parameter: SweepParameter, value: f64) -> ExperimentConfig {
    let mut cfg = base.clone();
    match parameter {
        SweepParameter::Noise => cfg.noise.mean_relative_delay = value,
        SweepParameter::Distance => cfg.topology.distance = value as usize,
        SweepParameter::MessageSize => cfg.protocol.message_size_bytes = value as u64,
        SweepParameter::NRanks => cfg.n_ranks = value as usize,
    }
    cfg.sweep = None;
    cfg
}

fn one_run(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    let scenario = cfg.scenario();
    let inj = scenario
        .delays
        .first()
        .map(Injection::from)
        .ok_or_else(|| Error::InvalidScenario("a sweep needs at least one injected delay".into()))?;
    let trace = simulate(&scenario)?;
    let idle = idle_matrix(&trace, &scenario)?;
    let fronts = detect_fronts(&idle, inj, cfg.analysis.theta)?;
    let beta = estimate_decay(&idle, &fronts, cfg.analysis.window)?.beta_us_per_rank;
    let v = estimate_speed(&fronts)?.v_ranks_per_s;
    Ok((beta, v))
}

/// Every run of the sweep, sorted by value then seed. Runs execute in
/// parallel; the first failure aborts with its value and seed.
pub fn sweep_runs(base: &ExperimentConfig, spec: &SweepSpec) -> Result<Vec<SweepRun>> {
    spec.validate()?;
    let seeds = base.seeds(spec.repetitions);
    let jobs: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let mut runs = jobs
        .par_iter()
        .map(|&(value, seed)| {
            let mut cfg = apply(base, spec.parameter, value);
            cfg.seed = seed;
            one_run(&cfg)
                .map(|(beta_us_per_rank, v_ranks_per_s)| SweepRun {
                    value,
                    seed,
                    beta_us_per_rank,
                    v_ranks_per_s,
                })
                .map_err(|e| Error::SweepRun {
                    value: value.to_string(),
                    seed,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.seed.cmp(&b.seed)));
    Ok(runs)
}

/// Median, minimum and maximum of decay rate and speed per swept value.
pub fn run_sweep(base: &ExperimentConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let runs = sweep_runs(base, spec)?;
    Ok(spec
        .values
        .iter()
        .map(|&value| {
            let of = |f: fn(&SweepRun) -> f64| {
                let xs: Vec<f64> = runs.iter().filter(|r| r.value == value).map(f).collect();
                Spread::of(&xs).expect("at least one seed")
            };
            SweepRow {
                parameter: spec.parameter,
                value,
                beta: of(|r| r.beta_us_per_rank),
                speed: of(|r| r.v_ranks_per_s),
            }
        })
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "parameter",
        "value",
        "runs",
        "beta_median_us_per_rank",
        "beta_min_us_per_rank",
        "beta_max_us_per_rank",
        "v_median_ranks_per_s",
        "v_min_ranks_per_s",
        "v_max_ranks_per_s",
    ])
    .expect("in-memory write");
    for r in rows {
        let name = serde_json::to_value(r.parameter).expect("enum serializes");
        w.write_record([
            name.as_str().unwrap_or_default().to_string(),
            r.value.to_string(),
            r.beta.count.to_string(),
            format!("{:.3}", r.beta.median),
            format!("{:.3}", r.beta.min),
            format!("{:.3}", r.beta.max),
            format!("{:.3}", r.speed.median),
            format!("{:.3}", r.speed.min),
            format!("{:.3}", r.speed.max),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}
