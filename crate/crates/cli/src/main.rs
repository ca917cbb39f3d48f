//! `idlewave` command line.
//!
//! Every failure ends with exit code 2 and one JSON line on stderr:
//! `{"error":"<kind>","message":"..."}`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use idlewave::config::{load_config, ExperimentConfig, SweepParameter, SweepSpec};
use idlewave::perf_model::{model_table, TriadModelParams};
use idlewave::presets::{preset, PRESET_NAMES};
use idlewave::report::{analyze_trace_file, read_summary, run_scenario, write_atomic, SUMMARY_FILE};
use idlewave::sweep::{run_sweep, sweep_csv};
use idlewave::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "idlewave", version, about = "Simulate and analyze idle waves in bulk-synchronous programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Noise seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Front threshold as a fraction of the execution phase
    #[arg(long)]
    theta: Option<f64>,
    /// Steps after arrival searched for a rank's wave amplitude
    #[arg(long)]
    window: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(theta) = self.theta {
            cfg.analysis.theta = theta;
        }
        if let Some(window) = self.window {
            cfg.analysis.window = window;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario from a config file
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Simulate a named preset
    Scenario {
        #[arg(long, required_unless_present = "list")]
        preset: Option<String>,
        /// Print the preset names and exit
        #[arg(long)]
        list: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Sweep one parameter over repeated seeds
    Sweep {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// noise | distance | message_size | n_ranks
        #[arg(long, value_parser = parse_parameter)]
        parameter: Option<SweepParameter>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Re-analyze a trace CSV
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        /// Config the trace was produced with (default: summary.json next to the trace)
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Strong-scaling model table
    Model {
        #[arg(long, default_value_t = 1)]
        from: u32,
        #[arg(long, default_value_t = 10)]
        to: u32,
        /// Drop the write-allocate correction
        #[arg(long)]
        no_write_allocate: bool,
    },
}

fn parse_parameter(s: &str) -> Result<SweepParameter, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown sweep parameter `{s}`"))
}

fn preset_config(name: &str) -> Result<ExperimentConfig, Error> {
    let mut cfg = preset(name)?.config;
    cfg.output.dir = Path::new("out").join(name);
    Ok(cfg)
}

fn simulate_and_write(cfg: &ExperimentConfig, name: Option<&str>) -> Result<(), Error> {
    let a = run_scenario(cfg, name, &cfg.output.dir)?;
    let a_s = &a.summary.analysis;
    println!(
        "{}",
        json!({
            "trace": a.trace_path,
            "summary": a.summary_path,
            "makespan_us": a.summary.makespan_us,
            "excess_runtime_us": a_s.excess_runtime_us,
            "speed": a_s.fronts.first().and_then(|f| f.speed),
            "cancellations": a_s.cancellation.events.len(),
        })
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, overrides } => {
            let mut cfg = load_config(&config)?;
            overrides.apply(&mut cfg);
            cfg.validate()?;
            simulate_and_write(&cfg, None)
        }
        Command::Scenario {
            list: true,
            ..
        } => {
            for name in PRESET_NAMES {
                println!("{name}\t{}", preset(name)?.description);
            }
            Ok(())
        }
        Command::Scenario {
            preset: name,
            overrides,
            ..
        } => {
            let name = name.expect("clap requires --preset");
            let mut cfg = preset_config(&name)?;
            overrides.apply(&mut cfg);
            cfg.validate()?;
            simulate_and_write(&cfg, Some(&name))
        }
        Command::Sweep {
            config,
            preset: name,
            parameter,
            values,
            repetitions,
            overrides,
        } => {
            let mut cfg = match (&config, &name) {
                (Some(path), _) => load_config(path)?,
                (None, Some(name)) => preset_config(name)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            overrides.apply(&mut cfg);
            let mut spec = cfg.sweep.clone().unwrap_or(SweepSpec {
                parameter: SweepParameter::Noise,
                values: Vec::new(),
                repetitions: 15,
            });
            if let Some(p) = parameter {
                spec.parameter = p;
            }
            if let Some(v) = values {
                spec.values = v;
            }
            if let Some(r) = repetitions {
                spec.repetitions = r;
            }
            let rows = run_sweep(&cfg, &spec)?;
            let bytes = sweep_csv(&rows);
            write_atomic(&cfg.output.dir.join("sweep.csv"), &bytes)?;
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
        Command::Analyze {
            trace,
            config,
            preset: name,
            overrides,
        } => {
            let mut cfg = match (config, name) {
                (Some(path), _) => load_config(&path)?,
                (None, Some(name)) => preset_config(&name)?,
                (None, None) => {
                    let dir = trace.parent().unwrap_or(Path::new("."));
                    read_summary(&dir.join(SUMMARY_FILE))?.config
                }
            };
            overrides.apply(&mut cfg);
            let report = analyze_trace_file(&trace, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Model {
            from,
            to,
            no_write_allocate,
        } => {
            let mut p = TriadModelParams::default();
            if no_write_allocate {
                p = p.without_write_allocate();
            }
            let rows = model_table(from..=to, &p)?;
            println!("n_sockets,runtime_s,exec_runtime_s,gflops,exec_gflops");
            for r in rows {
                println!(
                    "{},{:.7},{:.7},{:.4},{:.4}",
                    r.n_sockets, r.runtime_s, r.exec_runtime_s, r.gflops, r.exec_gflops
                );
            }
            Ok(())
        }
    }
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let line = json!({ "error": kind, "message": message.trim().replace('\n', " ") });
    eprintln!("{line}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail("usage", first.trim_start_matches("error: "));
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
