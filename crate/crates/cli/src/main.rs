use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use sea_core::scenario::{
    load_document, parse_value, preset_document, run_scenario, run_sweep, set_path, PresetId, RunSummary,
    ScenarioError,
};
use serde_json::Value;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "sea-dyn", version, about = "Steepest-entropy-ascent master equation runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one scenario and write its CSV and metadata.
    Run(RunArgs),
    /// Run one scenario per value of a numeric parameter.
    Sweep(SweepArgs),
    /// Check the stationarity and conservation invariants.
    Verify,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["config", "preset"])))]
struct Source {
    /// Scenario document (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario, e.g. fig1a_g025 or fig4.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run the unitary reference and the fidelity difference.
    #[arg(long = "compare-unitary")]
    compare_unitary: bool,
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    /// Dotted path of the swept value, e.g. gamma or integrator.dt.
    #[arg(long)]
    param: String,
    /// Comma-separated values; may be empty.
    #[arg(long, allow_hyphen_values = true)]
    values: String,
    /// Base output CSV path; member and summary files are derived from it.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match &e {
            ScenarioError::Config(_) => EXIT_CONFIG,
            ScenarioError::Aborted { .. } => EXIT_ABORT,
            ScenarioError::Io { .. } | ScenarioError::Numerical(_) => EXIT_RUNTIME,
        };
        let message = match &e {
            ScenarioError::Config(diags) => {
                let lines: Vec<String> = diags.iter().map(|d| format!("  {d}")).collect();
                format!("invalid configuration:\n{}", lines.join("\n"))
            }
            other => other.to_string(),
        };
        Self { code, message }
    }
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn load_source(source: &Source) -> Result<Value, Failure> {
    match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| config_failure(format!("{}: {e}", path.display())))?;
            Ok(load_document(&text)?)
        }
        (None, Some(name)) => {
            let id: PresetId = name.parse().map_err(config_failure)?;
            Ok(preset_document(id))
        }
        (None, None) => Err(config_failure("one of --config or --preset is required")),
    }
}

fn set(doc: &mut Value, path: &str, value: Value) -> Result<(), Failure> {
    set_path(doc, path, value).map_err(config_failure)
}

fn number(x: f64) -> Result<Value, Failure> {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .ok_or_else(|| config_failure(format!("{x} is not a finite number")))
}

fn path_value(p: &Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

fn print_summary(s: &RunSummary) {
    println!("wrote {} ({} rows)", s.csv_path.display(), s.rows_written);
    println!("metadata {}", s.meta_path.display());
    println!("final time {}", s.final_time);
    if let Some(t) = s.threshold_time {
        println!("coherence threshold reached at t = {t}");
    }
    if let Some(b) = s.beta_eff {
        println!("effective beta {b}");
    }
    if let Some(u) = &s.unitary {
        println!("unitary reference {}", u.csv_path.display());
        println!("max |F_sea - F_unitary| = {:.6e} ({})", u.max_fidelity_deviation, u.diff_path.display());
    }
    println!(
        "monitor: trace drift {:.3e}, energy drift {:.3e}, min eigenvalue {:.3e}, entropy dips {}, clamps {}",
        s.report.trace_drift,
        s.report.energy_drift,
        s.report.min_eigenvalue_seen,
        s.report.entropy_dips,
        s.report.clamp_events
    );
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut doc = load_source(&args.source)?;
    if let Some(g) = args.gamma {
        set(&mut doc, "gamma", number(g)?)?;
    }
    if let Some(l) = args.lambda {
        set(&mut doc, "lambda", number(l)?)?;
    }
    if let Some(dt) = args.dt {
        set(&mut doc, "integrator.dt", number(dt)?)?;
    }
    if let Some(t) = args.t_final {
        set(&mut doc, "t_span.1", number(t)?)?;
    }
    if let Some(out) = &args.out {
        set(&mut doc, "output.path", path_value(out))?;
    }
    if args.compare_unitary {
        set(&mut doc, "compare_unitary", Value::Bool(true))?;
    }
    if let Some(stride) = args.stride {
        set(&mut doc, "output.stride", Value::from(stride))?;
    }
    let cfg = parse_value(doc)?;
    let summary = run_scenario(&cfg)?;
    print_summary(&summary);
    Ok(())
}

fn parse_values(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| config_failure(format!("--values: `{s}`: {e}"))))
        .collect()
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let mut doc = load_source(&args.source)?;
    if let Some(out) = &args.out {
        set(&mut doc, "output.path", path_value(out))?;
    }
    let values = parse_values(&args.values)?;
    let result = run_sweep(&doc, &args.param, &values)?;
    println!("summary {} ({} runs)", result.summary_path.display(), result.entries.len());
    for e in &result.entries {
        let threshold = e.summary.threshold_time.map_or("-".to_string(), |t| t.to_string());
        println!("  {} = {}: {} rows, threshold time {threshold}", result.param, e.value, e.summary.rows_written);
    }
    Ok(())
}

fn verify() -> Result<(), Failure> {
    let checks = sea_core::verify::run_suite();
    let mut failures = 0;
    for c in &checks {
        println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failures += usize::from(!c.passed);
    }
    if failures == 0 {
        println!("all {} checks passed", checks.len());
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: format!("{failures} of {} checks failed", checks.len()),
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Verify => verify(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
