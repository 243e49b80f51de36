//! `ferry`: batch front end to the planning core.
//!
//! Exit codes: 0 when the requested artifact was written, 1 for domain
//! errors (one JSON object on stderr), 2 for usage errors.

use std::fs;
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use ferry_core::field::{fit_env_report, parse_samples, EnvFitReport, EnvModel, FieldError};
use ferry_core::identify::{identify, parse_telemetry, Identification};
use ferry_core::model::{FerryParams, State};
use ferry_core::ocp::Weight;
use ferry_core::planner::{pareto_sweep, plan_session, update_state, LiveSession, PlanError};
use ferry_core::scenario::Scenario;
use ferry_service::ServiceConfig;

const OUTPUT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "ferry", version, about = "Energy-optimal ferry crossings: fit, identify, plan, replay, sweep, serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit quadratic wind and current fields to gridded samples.
    FitEnv {
        /// CSV with columns x_l,y_l,vx_wind,vy_wind,vx_current,vy_current.
        csv: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print residual statistics to stdout.
        #[arg(long)]
        stats: bool,
    },
    /// Re-identify surge damping and the power coefficient from telemetry.
    Identify {
        /// CSV with columns surge_speed,thrust_total,power_total.
        telemetry: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Parameters kept where the telemetry says nothing; defaults to the built-in vessel.
        #[arg(long)]
        base: Option<PathBuf>,
    },
    /// Solve one dock-to-dock problem from the scenario's start state.
    Plan {
        scenario: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Velocity and input weight files (diagonal `[a, b, c]` or full 3×3).
        #[arg(long, num_args = 2, value_names = ["Q_JSON", "R_JSON"])]
        weights: Option<Vec<PathBuf>>,
    },
    /// Replay scripted state updates through shrink-and-replan.
    Simulate {
        scenario: PathBuf,
        /// `{"updates": [{"t": .., "state": [6]} | {"t": .., "deviation": [6]}]}`;
        /// a deviation is added to the state the active plan predicts at `t`.
        #[arg(long)]
        updates: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Energy over a grid of arrival durations and disturbance scalings.
    Pareto {
        scenario: PathBuf,
        /// Seconds, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        durations: Vec<f64>,
        /// Field multipliers, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        scalings: Vec<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the HTTP planning service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Directory for scenario and session JSON; in memory when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize)]
struct Failure {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<Value>,
}

impl Failure {
    fn new(error: &'static str, message: impl Into<String>) -> Self {
        Failure { error, message: message.into(), details: None }
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        let message = e.to_string();
        match e {
            PlanError::PlanFailed(d) => Failure { details: serde_json::to_value(d).ok(), ..Failure::new("plan_failed", message) },
            PlanError::Build(_) => Failure::new("build_error", message),
            PlanError::Scenario(_) => Failure::new("invalid_scenario", message),
            PlanError::SessionComplete { .. } => Failure::new("session_complete", message),
            PlanError::TimeReversal { .. } => Failure::new("time_reversal", message),
            PlanError::NoActivePlan => Failure::new("no_active_plan", message),
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::new("invalid_input", format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let sc = Scenario::load(path).map_err(|e| Failure::new("invalid_scenario", e.to_string()))?;
    sc.validate().map_err(|e| Failure::new("invalid_scenario", e.to_string()))?;
    Ok(sc)
}

/// Writes through a temporary file so a failed run leaves no partial output.
fn emit(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    let io_err = |e: io::Error| Failure::new("io", e.to_string());
    match output {
        None => io::stdout().write_all(text.as_bytes()).map_err(io_err),
        Some(path) => {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, text).map_err(|e| Failure::new("io", format!("{}: {e}", tmp.display())))?;
            fs::rename(&tmp, path).map_err(io_err)
        }
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

fn stats_table(r: &EnvFitReport) -> String {
    let mut out = format!("samples {}\n", r.sample_count);
    out.push_str(&format!("{:<8} {:>11} {:>11} {:>11}", "field", "condition", "max_abs", "rmse"));
    for [t, _] in &r.wind.fraction_below {
        out.push_str(&format!(" {:>7}", format!("<{t}")));
    }
    out.push('\n');
    for (name, s) in [("wind", &r.wind), ("current", &r.current)] {
        out.push_str(&format!("{name:<8} {:>11.3e} {:>11.3e} {:>11.3e}", s.condition_number, s.max_abs_error, s.rmse));
        for [_, f] in &s.fraction_below {
            out.push_str(&format!(" {f:>7.3}"));
        }
        out.push('\n');
    }
    out
}

fn fit_env(csv: &Path, output: Option<&Path>, stats: bool) -> Result<(), Failure> {
    let text = read_text(csv)?;
    let samples = parse_samples(text.as_bytes()).map_err(|e| Failure::new("invalid_input", e.to_string()))?;
    let (model, report) = fit_env_report(&samples).map_err(|e| match e {
        FieldError::InsufficientData { .. } => Failure::new("insufficient_data", e.to_string()),
        _ => Failure::new("fit_failed", e.to_string()),
    })?;
    if stats {
        print!("{}", stats_table(&report));
    }
    let body: &EnvModel = &model;
    emit(output, &pretty(&Versioned { schema_version: OUTPUT_SCHEMA_VERSION, body }))
}

fn identify_cmd(telemetry: &Path, output: Option<&Path>, base: Option<&Path>) -> Result<(), Failure> {
    let base: FerryParams = match base {
        Some(p) => read_json(p)?,
        None => FerryParams::default(),
    };
    let text = read_text(telemetry)?;
    let samples = parse_telemetry(text.as_bytes()).map_err(|e| Failure::new("invalid_input", e.to_string()))?;
    let id: Identification = identify(&samples, &base).map_err(|e| Failure::new("identification_failed", e.to_string()))?;
    emit(output, &pretty(&Versioned { schema_version: OUTPUT_SCHEMA_VERSION, body: &id }))
}

fn plan_cmd(scenario: &Path, output: Option<&Path>, weights: Option<&[PathBuf]>) -> Result<(), Failure> {
    let mut sc = load_scenario(scenario)?;
    if let Some([q, r]) = weights {
        sc.q = read_json::<Weight>(q)?;
        sc.r = read_json::<Weight>(r)?;
    }
    let mut session = LiveSession::new("plan", sc.id.clone().unwrap_or_default(), sc.t_now, sc.x_hat);
    let plan = plan_session(&mut session, &sc)?;
    emit(output, &pretty(&plan))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UpdateScript {
    #[serde(default)]
    #[allow(dead_code)]
    schema_version: Option<u32>,
    updates: Vec<Update>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Update {
    t: f64,
    #[serde(default)]
    state: Option<State>,
    #[serde(default)]
    deviation: Option<[f64; 6]>,
}

fn simulate(scenario: &Path, updates: &Path, output: Option<&Path>) -> Result<(), Failure> {
    let sc = load_scenario(scenario)?;
    let script: UpdateScript = read_json(updates)?;
    let mut session = LiveSession::new("simulate", sc.id.clone().unwrap_or_default(), sc.t_now, sc.x_hat);
    report_step(plan_session(&mut session, &sc))?;
    for (i, u) in script.updates.iter().enumerate() {
        let x = match (u.state, u.deviation) {
            (Some(x), None) => x,
            (None, Some(d)) => {
                let plan = session.active.as_ref().ok_or_else(|| Failure::new("no_active_plan", format!("update {i}: a deviation needs an active plan")))?;
                let base: [f64; 6] = plan.state_at(u.t).into();
                State::from(std::array::from_fn(|k| base[k] + d[k]))
            }
            _ => return Err(Failure::new("invalid_input", format!("update {i}: give exactly one of state and deviation"))),
        };
        report_step(update_state(&mut session, &sc, u.t, x))?;
    }
    emit(output, &pretty(&session))
}

/// Solver failures are part of the recorded history; anything else stops the run.
fn report_step<T>(outcome: Result<T, PlanError>) -> Result<(), Failure> {
    match outcome {
        Ok(_) => Ok(()),
        Err(e @ (PlanError::PlanFailed(_) | PlanError::Build(_))) => {
            eprintln!("warning: {e}");
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

fn pareto_cmd(scenario: &Path, durations: &[f64], scalings: &[f64], output: Option<&Path>) -> Result<(), Failure> {
    if let Some(d) = durations.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Failure::new("invalid_input", format!("duration {d} must be positive")));
    }
    if let Some(s) = scalings.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Failure::new("invalid_input", format!("scaling {s} must be non-negative")));
    }
    let sc = load_scenario(scenario)?;
    let result = pareto_sweep(&sc, durations, scalings);
    emit(output, &result.to_csv())
}

fn serve(host: IpAddr, port: u16, data: Option<PathBuf>) -> Result<(), Failure> {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new("io", e.to_string()))?;
    let config = ServiceConfig { data_dir: data, ..Default::default() };
    runtime.block_on(ferry_service::serve(SocketAddr::new(host, port), config)).map_err(|e| Failure::new("startup_error", e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::FitEnv { csv, output, stats } => fit_env(&csv, output.as_deref(), stats),
        Command::Identify { telemetry, output, base } => identify_cmd(&telemetry, output.as_deref(), base.as_deref()),
        Command::Plan { scenario, output, weights } => plan_cmd(&scenario, output.as_deref(), weights.as_deref()),
        Command::Simulate { scenario, updates, output } => simulate(&scenario, &updates, output.as_deref()),
        Command::Pareto { scenario, durations, scalings, output } => pareto_cmd(&scenario, &durations, &scalings, output.as_deref()),
        Command::Serve { port, host, data } => serve(host, port, data),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", serde_json::to_string(&f).expect("failure serializes"));
            ExitCode::from(1)
        }
    }
}
