//! Command-line front end: validate models, inspect their runtime form,
//! predict QoS, and run scenarios to a trace and a report.
//!
//! Exit codes: 0 success, 1 model validation error, 2 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reflex_core::model::{from_json, AdaptiveProcessModel, ProcessNode};
use reflex_core::planner::{span_estimate, Environment, PlannerConfig};
use reflex_core::qos::{structural_qos, QosVector};
use reflex_core::sim::ProviderState;
use reflex_core::transform::{mirror_context, transform};
use reflex_core::{Engine, EngineConfig};

mod dump;

#[derive(Parser)]
#[command(name = "reflex", version, about = "Self-adaptive workflow engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and report the first problem found
    Validate {
        /// Path to a process model (JSON)
        model: PathBuf,
    },
    /// Execute the model's scenario and write a trace and a report
    Run {
        model: PathBuf,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario horizon, in simulated milliseconds
        #[arg(long = "horizon-ms")]
        horizon_ms: Option<u64>,
        /// Write the event trace to this file, one JSON object per line
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the run report to this file instead of stdout
        #[arg(long)]
        report: Option<PathBuf>,
        /// Observe and classify but never enact a plan
        #[arg(long = "no-adaptation")]
        no_adaptation: bool,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Predict QoS per labeled block without running the scenario
    Qos {
        model: PathBuf,
        /// Estimate over the transformed runtime graph instead of the
        /// workflow tree
        #[arg(long)]
        analytic: bool,
    },
    /// Print the runtime element graph derived from the model
    DumpRuntimeModel { model: PathBuf },
    /// Print the knowledge-base facts mirrored from the runtime model
    DumpContext { model: PathBuf },
    /// List the reusable adaptation tactics and their arguments
    DumpTactics,
}

/// Control-loop settings, from a config file or individual flags.
/// Flags win over the file; the file wins over defaults.
#[derive(Args)]
struct Tuning {
    /// TOML file with keys tradeoff.lambda, chain.max_depth, mape.period_ms
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight of collateral damage in plan scoring
    #[arg(long = "tradeoff-lambda")]
    tradeoff_lambda: Option<f64>,
    /// Longest falsification chain the planner will follow
    #[arg(long = "chain-max-depth")]
    chain_max_depth: Option<usize>,
    /// Simulated time between control-loop ticks
    #[arg(long = "mape-period-ms")]
    mape_period_ms: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CmdError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

enum CmdError {
    /// The model itself is unusable; exit 1.
    Validation(String),
    /// Everything else (I/O, config, missing scenario); exit 2.
    Runtime(String),
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Runtime(e.to_string())
    }
}

fn dispatch(command: Command) -> Result<(), CmdError> {
    match command {
        Command::Validate { model } => {
            load_model(&model)?;
            emit("ok")
        }
        Command::Run {
            model,
            seed,
            horizon_ms,
            trace,
            report,
            no_adaptation,
            tuning,
        } => cmd_run(&model, seed, horizon_ms, trace, report, no_adaptation, tuning),
        Command::Qos { model, analytic } => cmd_qos(&model, analytic),
        Command::DumpRuntimeModel { model } => {
            let m = load_model(&model)?;
            let rt = transform(&m)
                .map_err(|e| CmdError::Validation(e.to_string()))?;
            emit(&serde_json::to_string_pretty(&rt).map_err(runtime_err)?)
        }
        Command::DumpContext { model } => {
            let m = load_model(&model)?;
            let rt = transform(&m)
                .map_err(|e| CmdError::Validation(e.to_string()))?;
            let ctx = mirror_context(&rt);
            emit(&dump::context_json(&ctx))
        }
        Command::DumpTactics => emit(&dump::tactics_json()),
    }
}

fn runtime_err<E: std::fmt::Display>(e: E) -> CmdError {
    CmdError::Runtime(e.to_string())
}

/// Print to stdout, treating a closed pipe as a clean stop rather than an
/// error (the reader saw everything it wanted).
fn emit(text: &str) -> Result<(), CmdError> {
    use std::io::Write;
    match writeln!(std::io::stdout(), "{text}") {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(CmdError::Runtime(e.to_string())),
    }
}

/// Read, parse, and validate a model; all three failures are validation
/// failures except unreadable files.
fn load_model(path: &Path) -> Result<AdaptiveProcessModel, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::Runtime(format!("{}: {e}", path.display())))?;
    let model = from_json(&text).map_err(|e| CmdError::Validation(e.to_string()))?;
    Ok(model)
}

fn planner_config(tuning: &Tuning) -> Result<(PlannerConfig, u64), CmdError> {
    let mut planner = PlannerConfig::default();
    let mut period_ms = 1000;
    if let Some(path) = &tuning.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CmdError::Runtime(format!("{}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CmdError::Runtime(format!("{}: {e}", path.display())))?;
        if let Some(v) = lookup_f64(&table, "tradeoff", "lambda") {
            planner.lambda = v;
        }
        if let Some(v) = lookup_f64(&table, "chain", "max_depth") {
            planner.max_chain_depth = v as usize;
        }
        if let Some(v) = lookup_f64(&table, "mape", "period_ms") {
            period_ms = v as u64;
        }
    }
    if let Some(v) = tuning.tradeoff_lambda {
        planner.lambda = v;
    }
    if let Some(v) = tuning.chain_max_depth {
        planner.max_chain_depth = v;
    }
    if let Some(v) = tuning.mape_period_ms {
        period_ms = v;
    }
    Ok((planner, period_ms))
}

fn lookup_f64(table: &toml::Table, section: &str, key: &str) -> Option<f64> {
    let value = table.get(section)?.as_table()?.get(key)?;
    value.as_float().or_else(|| value.as_integer().map(|i| i as f64))
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    model: &Path,
    seed: Option<u64>,
    horizon_ms: Option<u64>,
    trace_path: Option<PathBuf>,
    report_path: Option<PathBuf>,
    no_adaptation: bool,
    tuning: Tuning,
) -> Result<(), CmdError> {
    let m = load_model(model)?;
    if m.scenario.is_none() && horizon_ms.is_none() {
        return Err(CmdError::Runtime(
            "the model has no scenario; pass --horizon-ms to run anyway".to_owned(),
        ));
    }
    let (planner, period_ms) = planner_config(&tuning)?;
    let config = EngineConfig {
        seed,
        horizon_ms,
        period_ms,
        adaptation: !no_adaptation,
        planner,
    };
    let mut engine = Engine::new(m, config).map_err(|e| CmdError::Validation(e.to_string()))?;
    let (trace, report) = engine.run();

    if let Some(path) = trace_path {
        let mut out = Vec::new();
        reflex_core::trace::write_jsonl(&trace, &mut out).map_err(runtime_err)?;
        fs::write(&path, out)?;
    }
    let report_json = serde_json::to_string_pretty(&report).map_err(runtime_err)?;
    match report_path {
        Some(path) => {
            fs::write(&path, report_json + "\n")?;
            Ok(())
        }
        None => emit(&report_json),
    }
}

fn cmd_qos(model: &Path, analytic: bool) -> Result<(), CmdError> {
    let m = load_model(model)?;
    let out = if analytic {
        analytic_qos(&m)?
    } else {
        tree_qos(&m)
    };
    emit(&serde_json::to_string_pretty(&out).map_err(runtime_err)?)
}

/// Table-driven aggregation over the workflow tree, for the whole process
/// and every labeled block.
fn tree_qos(m: &AdaptiveProcessModel) -> serde_json::Value {
    let leaf = |service: &str| -> QosVector {
        let p = &m
            .service(service)
            .expect("validation checked service names")
            .providers[0];
        QosVector {
            time_ms: p.latency_mean_ms,
            cost: p.cost,
            availability: 1.0 - p.failure_probability,
            reliability: 1.0 - p.failure_probability,
        }
    };
    let mut blocks = serde_json::Map::new();
    let mut stack: Vec<&ProcessNode> = vec![&m.workflow];
    blocks.insert("root".to_owned(), qos_json(structural_qos(&m.workflow, &leaf)));
    while let Some(node) = stack.pop() {
        if let Some(label) = node.label() {
            blocks.insert(label.to_owned(), qos_json(structural_qos(node, &leaf)));
        }
        stack.extend(node.children());
    }
    serde_json::Value::Object(blocks)
}

/// Graph-walk estimates over the transformed runtime model, per region.
fn analytic_qos(m: &AdaptiveProcessModel) -> Result<serde_json::Value, CmdError> {
    let rt = transform(m).map_err(|e| CmdError::Validation(e.to_string()))?;
    let providers = m
        .services
        .iter()
        .flat_map(|s| &s.providers)
        .map(|p| (p.provider_id.clone(), ProviderState::from(p)))
        .collect();
    let env = Environment {
        providers: &providers,
        bandwidth_bytes_per_ms: f64::INFINITY,
    };
    let mut blocks = serde_json::Map::new();
    for (name, region) in &rt.regions {
        let est = span_estimate(&rt, &env, region);
        blocks.insert(
            name.clone(),
            serde_json::json!({
                "time_ms": est.time_ms,
                "cost": est.cost,
                "availability": est.avail,
                "payload_bytes": est.payload,
            }),
        );
    }
    Ok(serde_json::Value::Object(blocks))
}

fn qos_json(q: QosVector) -> serde_json::Value {
    serde_json::json!({
        "time_ms": q.time_ms,
        "cost": q.cost,
        "availability": q.availability,
        "reliability": q.reliability,
    })
}
