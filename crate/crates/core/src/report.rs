//! Trace CSV, summary JSON and the run/analyze pipeline behind the CLI.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_baseline, detect_cancellation, detect_fronts, estimate_decay, estimate_speed,
    excess_per_rank, excess_runtime, idle_matrix, CancellationReport, DecayEstimate, Heading,
    Injection, SpeedEstimate, WaveFronts, WingEnd,
};
use crate::comm::propagation_speed_model;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::sim::{simulate, PhaseKind, PhaseRecord, Scenario, Trace};

pub const TRACE_HEADER: [&str; 5] = ["rank", "step", "kind", "t_start_us", "t_end_us"];
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn trace_csv(trace: &Trace) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).expect("in-memory write");
    for r in &trace.records {
        w.write_record([
            r.rank.to_string(),
            r.step.to_string(),
            r.kind.label().to_string(),
            format!("{:.3}", r.t_start_us),
            format!("{:.3}", r.t_end_us),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn malformed(line: u64, msg: impl std::fmt::Display) -> Error {
    Error::MalformedTrace(format!("line {line}: {msg}"))
}

/// Rebuilds a trace from its CSV form. Final and step-end times are taken
/// from the last record of each rank and step.
pub fn parse_trace_csv(data: &[u8], n_ranks: usize, n_steps: usize) -> Result<Trace> {
    let mut rdr = csv::Reader::from_reader(data);
    let header = rdr
        .headers()
        .map_err(|e| malformed(1, e))?
        .iter()
        .collect::<Vec<_>>();
    if header != TRACE_HEADER {
        return Err(malformed(1, format!("expected header {}", TRACE_HEADER.join(","))));
    }
    let mut records = Vec::new();
    let mut step_end = vec![vec![f64::NAN; n_steps]; n_ranks];
    for row in rdr.records() {
        let row = row.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e))?;
        let line = row.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<&str> { row.get(i).ok_or_else(|| malformed(line, "missing field")) };
        let rank: usize = num(0)?.parse().map_err(|e| malformed(line, e))?;
        let step: usize = num(1)?.parse().map_err(|e| malformed(line, e))?;
        let kind = PhaseKind::from_label(num(2)?)
            .ok_or_else(|| malformed(line, format!("unknown kind `{}`", &row[2])))?;
        let t_start_us: f64 = num(3)?.parse().map_err(|e| malformed(line, e))?;
        let t_end_us: f64 = num(4)?.parse().map_err(|e| malformed(line, e))?;
        if rank >= n_ranks || step == 0 || step > n_steps {
            return Err(Error::DimensionMismatch(format!(
                "line {line}: rank {rank} step {step} outside {n_ranks}x{n_steps}"
            )));
        }
        if !(t_end_us >= t_start_us) {
            return Err(malformed(line, "record ends before it starts"));
        }
        let end = &mut step_end[rank][step - 1];
        *end = if end.is_nan() { t_end_us } else { end.max(t_end_us) };
        records.push(PhaseRecord {
            rank,
            step,
            kind,
            t_start_us,
            t_end_us,
        });
    }
    for (rank, ends) in step_end.iter().enumerate() {
        if let Some(k) = ends.iter().position(|x| x.is_nan()) {
            return Err(Error::MalformedTrace(format!(
                "rank {rank} has no records for step {}",
                k + 1
            )));
        }
    }
    Ok(Trace {
        scenario_digest: String::new(),
        n_ranks,
        n_steps,
        records,
        final_time_us: step_end.iter().map(|e| e[n_steps - 1]).collect(),
        step_end_us: step_end,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WingSummary {
    pub heading: Heading,
    pub hops: usize,
    pub end: WingEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontSummary {
    pub injection: Injection,
    pub reached: usize,
    pub wings: Vec<WingSummary>,
    pub speed: Option<SpeedEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_error: Option<String>,
    pub decay: Option<DecayEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_error: Option<String>,
    pub fronts: WaveFronts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub theta: f64,
    pub window: usize,
    pub idle_per_rank_us: Vec<f64>,
    pub total_idle_us: f64,
    pub model_speed_ranks_per_s: Option<f64>,
    pub fronts: Vec<FrontSummary>,
    pub cancellation: CancellationReport,
    pub excess_runtime_us: Option<f64>,
    pub excess_per_rank_us: Option<Vec<f64>>,
}

impl AnalysisReport {
    pub fn front(&self, rank: usize) -> Option<&FrontSummary> {
        self.fronts.iter().find(|f| f.injection.rank == rank)
    }
}

/// All analyses of one run. `baseline` is the same run without delays.
pub fn analyze(
    scenario: &Scenario,
    trace: &Trace,
    baseline: Option<(&Scenario, &Trace)>,
    theta: f64,
    window: usize,
) -> Result<AnalysisReport> {
    let idle = idle_matrix(trace, scenario)?;
    let mut injections: Vec<Injection> = scenario.delays.iter().map(Injection::from).collect();
    injections.sort();
    injections.dedup();

    let mut fronts = Vec::new();
    for inj in injections {
        let f = detect_fronts(&idle, inj, theta)?;
        let (speed, speed_error) = split(estimate_speed(&f));
        let (decay, decay_error) = split(estimate_decay(&idle, &f, window));
        fronts.push(FrontSummary {
            injection: inj,
            reached: f.reached(),
            wings: f
                .wings
                .iter()
                .map(|w| WingSummary {
                    heading: w.heading,
                    hops: w.path.len(),
                    end: w.end,
                })
                .collect(),
            speed,
            speed_error,
            decay,
            decay_error,
            fronts: f,
        });
    }
    let all: Vec<WaveFronts> = fronts.iter().map(|f| f.fronts.clone()).collect();
    let cancellation = detect_cancellation(&all, &scenario.topology, &idle);

    let (excess_runtime_us, excess_per_rank_us) = match baseline {
        Some((bs, bt)) => {
            check_baseline(scenario, bs)?;
            (Some(excess_runtime(trace, bt)?), Some(excess_per_rank(trace, bt)?))
        }
        None => (None, None),
    };

    Ok(AnalysisReport {
        theta,
        window,
        idle_per_rank_us: idle.idle_us.iter().map(|r| r.iter().sum()).collect(),
        total_idle_us: idle.total_idle_us(),
        model_speed_ranks_per_s: propagation_speed_model(
            scenario.t_exec_us,
            scenario.message_cost(),
            scenario.topology.distance,
            scenario.topology.direction,
            scenario.base_protocol(),
        )
        .ok(),
        fronts,
        cancellation,
        excess_runtime_us,
        excess_per_rank_us,
    })
}

fn split<T>(r: Result<T>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub preset: Option<String>,
    pub config: ExperimentConfig,
    pub scenario_digest: String,
    pub final_time_us: Vec<f64>,
    pub makespan_us: f64,
    pub analysis: AnalysisReport,
}

/// Simulates the config (plus its delay-free twin if it has delays) and
/// analyzes the result.
pub fn run_experiment(config: &ExperimentConfig, preset: Option<&str>) -> Result<(Trace, Summary)> {
    config.validate()?;
    let scenario = config.scenario();
    let trace = simulate(&scenario)?;
    let base_scenario = scenario.without_delays();
    let baseline = if scenario.delays.is_empty() {
        None
    } else {
        Some(simulate(&base_scenario)?)
    };
    let analysis = analyze(
        &scenario,
        &trace,
        baseline.as_ref().map(|t| (&base_scenario, t)),
        config.analysis.theta,
        config.analysis.window,
    )?;
    let summary = Summary {
        preset: preset.map(str::to_string),
        config: config.clone(),
        scenario_digest: trace.scenario_digest.clone(),
        final_time_us: trace.final_time_us.clone(),
        makespan_us: trace.makespan_us(),
        analysis,
    };
    Ok((trace, summary))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: Summary,
}

pub fn summary_json(summary: &Summary) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(summary)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Runs and writes `trace.csv` and `summary.json` into `out_dir`.
pub fn run_scenario(config: &ExperimentConfig, preset: Option<&str>, out_dir: &Path) -> Result<Artifacts> {
    let (trace, summary) = run_experiment(config, preset)?;
    let trace_path = out_dir.join(TRACE_FILE);
    let summary_path = out_dir.join(SUMMARY_FILE);
    write_atomic(&trace_path, &trace_csv(&trace))?;
    write_atomic(&summary_path, &summary_json(&summary)?)?;
    Ok(Artifacts {
        trace_path,
        summary_path,
        summary,
    })
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Re-analyzes a trace CSV written for `config`. The delay-free baseline is
/// simulated again from the config.
pub fn analyze_trace_file(path: &Path, config: &ExperimentConfig) -> Result<AnalysisReport> {
    config.validate()?;
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let scenario = config.scenario();
    let trace = parse_trace_csv(&data, scenario.n_ranks, scenario.n_steps)?;
    let base_scenario = scenario.without_delays();
    let baseline = if scenario.delays.is_empty() {
        None
    } else {
        Some(simulate(&base_scenario)?)
    };
    analyze(
        &scenario,
        &trace,
        baseline.as_ref().map(|t| (&base_scenario, t)),
        config.analysis.theta,
        config.analysis.window,
    )
}
