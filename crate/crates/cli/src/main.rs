use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use cineswarm_core::sim::{self, read_metrics, write_outputs, Metrics, Scenario, SimConfig};
use cineswarm_core::Error;
use cineswarm_director::{Service, ServiceOptions};

/// Exit codes.
const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 2;
const EXIT_BRAKING: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "cineswarm", version, about = "Camera and lighting UAV team simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write frames, events and metrics.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        /// Disable the shooting-angle term of the camera objective.
        #[arg(long)]
        no_cinematography: bool,
    },
    /// Compare two run directories side by side. Deltas are `a - b`.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario live behind the director HTTP API.
    Serve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Frames per second streamed to subscribers.
        #[arg(long, default_value_t = 10.0)]
        tick_rate: f64,
        /// Simulated seconds per wall-clock second; 0 runs as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long)]
        start_paused: bool,
    },
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print every simulation default as JSON.
    Dump,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario duration, seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// `path.to.field=json`, e.g. `config.cine.alpha1=0`; repeatable.
    #[arg(long = "config-override")]
    overrides: Vec<String>,
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn input(e: impl ToString) -> Self {
        Self { code: EXIT_INPUT, kind: "input", message: e.to_string() }
    }

    fn runtime(e: impl ToString) -> Self {
        Self { code: EXIT_RUNTIME, kind: "runtime", message: e.to_string() }
    }
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario, Failure> {
        let mut s = Scenario::load(&self.scenario).map_err(Failure::input)?;
        for o in &self.overrides {
            s.apply_override(o).map_err(Failure::input)?;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(d) = self.duration {
            s.duration = d;
        }
        s.validate().map_err(Failure::input)?;
        Ok(s)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CINESWARM_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match execute(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
            f.code
        }
    };
    ExitCode::from(code)
}

fn execute(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Run { scenario, out, no_cinematography } => {
            let mut s = scenario.load()?;
            if no_cinematography {
                s.config.cine.alpha1 = 0.0;
            }
            let m = run_one(s, &out)?;
            print_summary(&m);
            Ok(if m.braking_events > 0 { EXIT_BRAKING } else { EXIT_OK })
        }
        Command::Compare { run_a, run_b, out } => {
            let a = RunSummary::load(&run_a)?;
            let b = RunSummary::load(&run_b)?;
            let text = serde_json::to_string_pretty(&comparison(&a, &b)).map_err(Failure::runtime)?;
            if let Some(path) = out {
                std::fs::write(&path, &text).map_err(Failure::runtime)?;
            }
            emit(&text);
            Ok(EXIT_OK)
        }
        Command::Serve { scenario, addr, tick_rate, speed, start_paused } => {
            let s = scenario.load()?;
            serve(s, &addr, ServiceOptions { tick_rate, speed, start_paused })?;
            Ok(EXIT_OK)
        }
        Command::Config { action: ConfigAction::Dump } => {
            emit(&serde_json::to_string_pretty(&SimConfig::default()).map_err(Failure::runtime)?);
            Ok(EXIT_OK)
        }
    }
}

fn run_one(s: Scenario, out: &Path) -> Result<Metrics, Failure> {
    info!("running {} for {} s (seed {})", s.name, s.duration, s.seed);
    let (log, metrics) = sim::run(s).map_err(|e| match e {
        Error::Scenario(_) | Error::InvalidArgument(_) => Failure::input(e),
        _ => Failure::runtime(e),
    })?;
    let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    write_outputs(out, &log, &metrics, &stamp).map_err(Failure::runtime)?;
    Ok(metrics)
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

/// The parts of a run directory that `compare` reports on.
struct RunSummary {
    metrics: Metrics,
    leader_timing: Option<serde_json::Value>,
}

impl RunSummary {
    fn load(dir: &Path) -> Result<Self, Failure> {
        let metrics = read_metrics(&dir.join("metrics.json")).map_err(Failure::input)?;
        let leader_timing = match std::fs::read_to_string(dir.join("timings.json")) {
            Ok(text) => {
                let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
                    Failure::input(format!("{}: {e}", dir.join("timings.json").display()))
                })?;
                doc.get("leader").cloned()
            }
            Err(_) => None,
        };
        Ok(Self { metrics, leader_timing })
    }
}

fn relative_change(new: f64, old: f64) -> f64 {
    if old.abs() > 0.0 {
        (new - old) / old
    } else {
        0.0
    }
}

fn side_by_side(a: f64, b: f64) -> serde_json::Value {
    json!({ "a": a, "b": b, "delta": a - b, "relative": relative_change(a, b) })
}

fn comparison(a: &RunSummary, b: &RunSummary) -> serde_json::Value {
    let (ma, mb) = (&a.metrics, &b.metrics);
    let timing = |key: &str| {
        let get = |r: &RunSummary| r.leader_timing.as_ref().and_then(|t| t.get(key)).and_then(|v| v.as_f64());
        match (get(a), get(b)) {
            (Some(x), Some(y)) => side_by_side(x, y),
            _ => serde_json::Value::Null,
        }
    };
    json!({
        "a": { "scenario": ma.scenario, "seed": ma.seed, "alpha1": ma.alpha1 },
        "b": { "scenario": mb.scenario, "seed": mb.seed, "alpha1": mb.alpha1 },
        "rms_jerk_heading": side_by_side(ma.rms_jerk_heading, mb.rms_jerk_heading),
        "rms_jerk_pitch": side_by_side(ma.rms_jerk_pitch, mb.rms_jerk_pitch),
        "min_clearance": side_by_side(ma.min_clearance, mb.min_clearance),
        "min_separation": side_by_side(ma.min_separation, mb.min_separation),
        "leader_replan_mean": timing("mean"),
        "leader_itg_share": timing("itg_share"),
        "leader_scg_share": timing("scg_share"),
        "leader_fto_share": timing("fto_share"),
    })
}

fn print_summary(m: &Metrics) {
    println!(
        "{}: {} frames, rms jerk heading {:.5} rad/s^3, pitch {:.5} rad/s^3, min clearance {:.2} m, \
         min separation {:.2} m, collision ticks {}, braking {}, slack {}",
        m.scenario,
        m.frames,
        m.rms_jerk_heading,
        m.rms_jerk_pitch,
        m.min_clearance,
        m.min_separation,
        m.collision_ticks,
        m.braking_events,
        m.slack_events
    );
}

fn serve(s: Scenario, addr: &str, opts: ServiceOptions) -> Result<(), Failure> {
    let rt = tokio::runtime::Runtime::new().map_err(Failure::runtime)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::runtime(format!("cannot bind {addr}: {e}")))?;
        let service = Service::start(s, opts).map_err(Failure::input)?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        cineswarm_director::serve(listener, &service, shutdown).await.map_err(Failure::runtime)
    })
}
