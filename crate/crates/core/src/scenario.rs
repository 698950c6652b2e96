//! Scenario documents, figure presets, trajectory runs and sweeps.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "model": {"kind": "static_tss", "epsilon": 1.0},
//!   "psi0": [[0.8366600265340756, 0.0], [0.5477225575051661, 0.0]],
//!   "lambda": 1e-4,
//!   "gamma": 0.25,
//!   "t_span": [0.0, 10000.0],
//!   "stop_coherence": 1e-3,
//!   "integrator": {"method": "rk45_adaptive", "dt": 0.005},
//!   "output": {"path": "fig1a.csv", "stride": 10},
//!   "compare_unitary": false
//! }
//! ```
//!
//! A document may instead start from a preset, `{"preset": "fig4", ...}`,
//! with the remaining keys merged over the expanded preset.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::algebra::{CMatrix, DensityMatrix};
use crate::error::SeaError;
use crate::evolution::{
    evolve, evolve_with, EvolutionError, IntegrationAbort, IntegratorConfig, MonitorReport, TrajectoryRecord,
};
use crate::models::HamiltonianModel;
use crate::thermo::{effective_beta, ObservableRow};

/// Largest tolerated deviation of `|psi0|` from 1; smaller deviations are
/// normalized away.
pub const PSI0_NORM_TOL: f64 = 1e-6;
/// Coherence threshold used for `threshold_time` when no stop is configured.
pub const DEFAULT_COHERENCE_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    StaticTss { epsilon: f64 },
    RotatingField { coupling: f64, frequency: f64 },
    LandauZener { kappa: f64, xi: f64, half_window: f64 },
    CustomTable { samples: Vec<TableSample> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSample {
    pub t: f64,
    /// Rows of `[re, im]` pairs.
    pub h: Vec<Vec<[f64; 2]>>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<HamiltonianModel, SeaError> {
        match self {
            Self::StaticTss { epsilon } => HamiltonianModel::static_tss(*epsilon),
            Self::RotatingField { coupling, frequency } => HamiltonianModel::rotating_field(*coupling, *frequency),
            Self::LandauZener { kappa, xi, half_window } => HamiltonianModel::landau_zener(*kappa, *xi, *half_window),
            Self::CustomTable { samples } => {
                let mut parsed = Vec::with_capacity(samples.len());
                for s in samples {
                    let n = s.h.len();
                    if n == 0 || s.h.iter().any(|row| row.len() != n) {
                        return Err(SeaError::InvalidModel(format!("sample at t = {} is not square", s.t)));
                    }
                    let m = CMatrix::from_fn(n, n, |i, j| Complex64::new(s.h[i][j][0], s.h[i][j][1]));
                    parsed.push((s.t, m));
                }
                HamiltonianModel::custom_table(parsed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    pub stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            path: PathBuf::from("trajectory.csv"),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelSpec,
    /// Amplitudes as `[re, im]` pairs; index 0 is the upper bare level.
    pub psi0: Vec<[f64; 2]>,
    #[serde(default)]
    pub lambda: f64,
    pub gamma: f64,
    pub t_span: [f64; 2],
    /// Stop at the first grid point where the eigenbasis coherence drops below this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_coherence: Option<f64>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub compare_unitary: bool,
}

impl ScenarioConfig {
    pub fn psi0_complex(&self) -> Vec<Complex64> {
        self.psi0.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
    }

    /// `(1 - lambda)|psi0><psi0| + (lambda / dim) I`, with `psi0` normalized.
    pub fn initial_state(&self) -> Result<DensityMatrix, SeaError> {
        DensityMatrix::perturbed_pure(&normalized(&self.psi0_complex()), self.lambda)
    }

    fn validate(&mut self) -> Result<HamiltonianModel, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        let model = match self.model.build() {
            Ok(m) => Some(m),
            Err(e) => {
                diags.push(Diagnostic::new("model", e.to_string()));
                None
            }
        };

        let norm = self.psi0.iter().map(|[re, im]| re * re + im * im).sum::<f64>().sqrt();
        if self.psi0.is_empty() {
            diags.push(Diagnostic::new("psi0", "must not be empty"));
        } else if !norm.is_finite() || (norm - 1.0).abs() > PSI0_NORM_TOL {
            diags.push(Diagnostic::new(
                "psi0",
                format!("norm {norm} differs from 1 by more than {PSI0_NORM_TOL:e}"),
            ));
        } else if norm != 1.0 {
            for a in &mut self.psi0 {
                a[0] /= norm;
                a[1] /= norm;
            }
        }
        if let Some(m) = &model {
            if !self.psi0.is_empty() && self.psi0.len() != m.dim() {
                diags.push(Diagnostic::new(
                    "psi0",
                    format!("has {} amplitudes but the model has dimension {}", self.psi0.len(), m.dim()),
                ));
            }
        }
        if !(0.0..1.0).contains(&self.lambda) {
            diags.push(Diagnostic::new("lambda", format!("{} is outside [0, 1)", self.lambda)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            diags.push(Diagnostic::new("gamma", format!("{} must be finite and non-negative", self.gamma)));
        }
        let [t0, t1] = self.t_span;
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            diags.push(Diagnostic::new("t_span", format!("[{t0}, {t1}] is not an increasing finite interval")));
        } else if let Some(m) = &model {
            for (k, t) in [t0, t1].into_iter().enumerate() {
                if let Err(e) = m.check_time(t) {
                    diags.push(Diagnostic::new(format!("t_span[{k}]"), e.to_string()));
                }
            }
        }
        if let Some(thr) = self.stop_coherence {
            if !(thr.is_finite() && thr > 0.0) {
                diags.push(Diagnostic::new("stop_coherence", format!("{thr} must be positive")));
            }
        }
        if self.output.stride == 0 {
            diags.push(Diagnostic::new("output.stride", "must be at least 1"));
        }
        if let Err(e) = self.integrator.validate() {
            diags.push(Diagnostic::new("integrator", e));
        }
        match model {
            Some(m) if diags.is_empty() => Ok(m),
            _ => Err(diags),
        }
    }
}

fn normalized(psi: &[Complex64]) -> Vec<Complex64> {
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    psi.iter().map(|z| z / norm).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {}", join_diagnostics(.0))]
    Config(Vec<Diagnostic>),
    #[error("integration aborted at t = {}: {}; report written to {}", .abort.t, .abort.reason, .meta_path.display())]
    Aborted {
        abort: Box<IntegrationAbort>,
        meta_path: PathBuf,
    },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Numerical(#[from] SeaError),
}

impl ScenarioError {
    fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config(vec![Diagnostic::new(field, message)])
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetId {
    Fig1aG025,
    Fig1aG05,
    Fig1aG25,
    Fig1cL2,
    Fig1cL4,
    Fig1cL6,
    Fig2a,
    Fig2b,
    Fig3a,
    Fig3b,
    Fig4,
}

impl PresetId {
    pub const ALL: [PresetId; 11] = [
        Self::Fig1aG025,
        Self::Fig1aG05,
        Self::Fig1aG25,
        Self::Fig1cL2,
        Self::Fig1cL4,
        Self::Fig1cL6,
        Self::Fig2a,
        Self::Fig2b,
        Self::Fig3a,
        Self::Fig3b,
        Self::Fig4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fig1aG025 => "fig1a_g025",
            Self::Fig1aG05 => "fig1a_g05",
            Self::Fig1aG25 => "fig1a_g25",
            Self::Fig1cL2 => "fig1c_l2",
            Self::Fig1cL4 => "fig1c_l4",
            Self::Fig1cL6 => "fig1c_l6",
            Self::Fig2a => "fig2a",
            Self::Fig2b => "fig2b",
            Self::Fig3a => "fig3a",
            Self::Fig3b => "fig3b",
            Self::Fig4 => "fig4",
        }
    }

    pub fn config(self) -> ScenarioConfig {
        use std::f64::consts::{FRAC_1_SQRT_2, PI};
        let two_level_mix = vec![[0.7_f64.sqrt(), 0.0], [0.3_f64.sqrt(), 0.0]];
        let plus = vec![[FRAC_1_SQRT_2, 0.0], [FRAC_1_SQRT_2, 0.0]];
        let output = |stride| OutputSpec {
            path: PathBuf::from(format!("{}.csv", self.name())),
            stride,
        };
        let relaxation = |gamma: f64, lambda: f64| ScenarioConfig {
            model: ModelSpec::StaticTss { epsilon: 1.0 },
            psi0: two_level_mix.clone(),
            lambda,
            gamma,
            t_span: [0.0, 1e4],
            stop_coherence: Some(1e-3),
            integrator: IntegratorConfig::adaptive(0.005),
            output: output(10),
            compare_unitary: false,
        };
        let rotating = |frequency: f64, psi0: Vec<[f64; 2]>, t_final: f64, dt: f64| ScenarioConfig {
            model: ModelSpec::RotatingField { coupling: 1.0, frequency },
            psi0,
            lambda: 1e-2,
            gamma: 0.5,
            t_span: [0.0, t_final],
            stop_coherence: None,
            integrator: IntegratorConfig::adaptive(dt),
            output: output(1),
            compare_unitary: true,
        };
        match self {
            Self::Fig1aG025 | Self::Fig1cL4 => relaxation(0.25, 1e-4),
            Self::Fig1aG05 => relaxation(0.5, 1e-4),
            Self::Fig1aG25 => relaxation(2.5, 1e-4),
            Self::Fig1cL2 => relaxation(0.25, 1e-2),
            Self::Fig1cL6 => relaxation(0.25, 1e-6),
            Self::Fig2a => rotating(2.0 * PI / 100.0, plus, 100.0, 0.05),
            Self::Fig2b => rotating(2.0 * PI / 1000.0, plus, 1000.0, 0.1),
            Self::Fig3a => rotating(2.0 * PI / 10.0, plus, 100.0, 0.05),
            Self::Fig3b => rotating(2.0 * PI / 100.0, vec![[1.0, 0.0], [0.0, 0.0]], 100.0, 0.05),
            Self::Fig4 => ScenarioConfig {
                model: ModelSpec::LandauZener {
                    kappa: 0.1,
                    xi: 1.0,
                    half_window: 500.0,
                },
                psi0: vec![[0.0, 0.0], [1.0, 0.0]],
                lambda: 1e-2,
                gamma: 1.0,
                t_span: [-500.0, 500.0],
                stop_coherence: None,
                integrator: IntegratorConfig::adaptive(0.05),
                output: output(10),
                compare_unitary: true,
            },
        }
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
            format!("unknown preset `{s}`, expected one of {}", names.join(", "))
        })
    }
}

/// Recursively merges `overlay` into `base`; non-object values replace.
pub fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses JSON text and expands a `preset` key, without validating the schema.
pub fn load_document(text: &str) -> Result<Value, ScenarioError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ScenarioError::config("<document>", e.to_string()))?;
    expand_preset(value)
}

pub fn preset_document(id: PresetId) -> Value {
    serde_json::to_value(id.config()).expect("preset configs serialize")
}

fn expand_preset(mut value: Value) -> Result<Value, ScenarioError> {
    let Some(obj) = value.as_object_mut() else {
        return Err(ScenarioError::config("<document>", "top level must be an object"));
    };
    let Some(preset) = obj.remove("preset") else {
        return Ok(value);
    };
    let name = preset
        .as_str()
        .ok_or_else(|| ScenarioError::config("preset", "must be a string"))?;
    let id = PresetId::from_str(name).map_err(|e| ScenarioError::config("preset", e))?;
    let mut base = preset_document(id);
    merge(&mut base, value);
    Ok(base)
}

/// Schema-checks and validates an expanded document.
pub fn parse_value(value: Value) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        let field = match message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            Some(missing) if path == "." => missing.to_string(),
            Some(missing) => format!("{path}.{missing}"),
            None if path == "." => "<document>".to_string(),
            None => path,
        };
        ScenarioError::config(field, message)
    })?;
    cfg.validate().map_err(ScenarioError::Config)?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    parse_value(load_document(text)?)
}

/// Sets the value at a dotted path such as `integrator.dt` or `t_span.1`,
/// creating intermediate objects.
pub fn set_path(doc: &mut Value, path: &str, new: Value) -> Result<(), String> {
    let mut slot = doc;
    for key in path.split('.') {
        slot = match slot {
            Value::Object(map) => map.entry(key.to_string()).or_insert(Value::Null),
            Value::Array(items) => {
                let idx: usize = key.parse().map_err(|_| format!("`{key}` in `{path}` is not an index"))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| format!("index {idx} in `{path}` is out of range ({len} items)"))?
            }
            Value::Null => {
                *slot = Value::Object(Default::default());
                let Value::Object(map) = slot else { unreachable!() };
                map.entry(key.to_string()).or_insert(Value::Null)
            }
            _ => return Err(format!("`{path}` descends into a scalar")),
        };
    }
    *slot = new;
    Ok(())
}

fn numeric_at<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    let mut slot = doc;
    for key in path.split('.') {
        slot = match slot {
            Value::Object(map) => map.get(key)?,
            Value::Array(items) => items.get(key.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    slot.is_number().then_some(slot)
}

/// Time series written next to the main CSV.
pub fn companion_path(path: &Path, suffix: &str, extension: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{extension}"))
}

pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), ScenarioError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| ScenarioError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| ScenarioError::io(path, e))
}

fn write_rows(w: &mut impl Write, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> std::io::Result<()> {
    w.write_all(header.as_bytes())?;
    w.write_all(b"\n")?;
    for row in rows {
        let line: Vec<String> = row.into_iter().map(format_value).collect();
        w.write_all(line.join(",").as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_observables(path: &Path, rows: &[ObservableRow]) -> Result<(), ScenarioError> {
    write_file(path, |w| write_rows(w, ObservableRow::CSV_HEADER, rows.iter().map(|r| r.values().to_vec())))
}

pub const FIDELITY_DIFF_HEADER: &str = "t,fidelity_sea,fidelity_unitary,abs_diff";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitaryComparison {
    pub csv_path: PathBuf,
    pub diff_path: PathBuf,
    /// `max_t |F_sea(t) - F_unitary(t)|` over every grid point.
    pub max_fidelity_deviation: f64,
    pub report: MonitorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub csv_path: PathBuf,
    pub meta_path: PathBuf,
    pub rows_written: usize,
    pub final_time: f64,
    pub final_row: ObservableRow,
    /// First recorded time the eigenbasis coherence falls below the threshold.
    pub threshold_time: Option<f64>,
    pub beta_eff: Option<f64>,
    pub report: MonitorReport,
    pub unitary: Option<UnitaryComparison>,
    pub wall_time_s: f64,
}

/// Every recorded observable row plus the trajectory they came from.
#[derive(Debug, Clone)]
pub struct ScenarioTrajectory {
    pub record: TrajectoryRecord,
    pub rows: Vec<ObservableRow>,
    pub report: MonitorReport,
}

fn eigenbasis_coherence(model: &HamiltonianModel, t: f64, rho: &DensityMatrix) -> f64 {
    match model.instantaneous_eigensystem(t) {
        Ok(basis) => {
            let v = &basis.vectors;
            let n = v.ncols();
            (v.column(0).adjoint() * rho.matrix() * v.column(n - 1))[(0, 0)].norm()
        }
        Err(_) => f64::INFINITY,
    }
}

/// Integrates one scenario at the given rate without writing anything.
pub fn simulate(
    cfg: &ScenarioConfig,
    model: &HamiltonianModel,
    gamma: f64,
    t_final: f64,
) -> Result<ScenarioTrajectory, EvolutionError> {
    let rho0 = cfg.initial_state()?;
    let psi0 = normalized(&cfg.psi0_complex());
    let span = (cfg.t_span[0], t_final);
    let (record, report) = match cfg.stop_coherence {
        Some(thr) => evolve_with(&rho0, model, gamma, span, &cfg.integrator, |t, rho| {
            eigenbasis_coherence(model, t, rho) < thr
        })?,
        None => evolve(&rho0, model, gamma, span, &cfg.integrator)?,
    };
    let rows = record.observables(model, &psi0, 1)?;
    Ok(ScenarioTrajectory { record, rows, report })
}

fn strided(rows: &[ObservableRow], stride: usize) -> Vec<ObservableRow> {
    rows.iter().step_by(stride.max(1)).copied().collect()
}

/// Runs a validated scenario and writes its CSV files and metadata.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunSummary, ScenarioError> {
    let started = Instant::now();
    let mut cfg = cfg.clone();
    let model = cfg.validate().map_err(ScenarioError::Config)?;
    let csv_path = cfg.output.path.clone();
    let meta_path = companion_path(&csv_path, "", "meta.json");
    let config_echo = serde_json::to_value(&cfg).expect("configs serialize");

    let sea = match simulate(&cfg, &model, cfg.gamma, cfg.t_span[1]) {
        Ok(run) => run,
        Err(EvolutionError::Aborted(abort)) => {
            let psi0 = normalized(&cfg.psi0_complex());
            if let Ok(rows) = abort.record.observables(&model, &psi0, cfg.output.stride) {
                write_observables(&csv_path, &rows)?;
            }
            let meta = json!({
                "config": config_echo,
                "status": "aborted",
                "abort": {
                    "reason": abort.reason,
                    "t": abort.t,
                    "history": abort.history,
                },
                "monitor": abort.report,
                "wall_time_s": started.elapsed().as_secs_f64(),
            });
            write_json(&meta_path, &meta)?;
            return Err(ScenarioError::Aborted { abort, meta_path });
        }
        Err(EvolutionError::Input(e)) => return Err(e.into()),
        Err(EvolutionError::Config(e)) => return Err(ScenarioError::config("integrator", e)),
    };

    let rows = strided(&sea.rows, cfg.output.stride);
    write_observables(&csv_path, &rows)?;
    let final_row = *sea.rows.last().expect("a trajectory has its initial point");
    let threshold = cfg.stop_coherence.unwrap_or(DEFAULT_COHERENCE_THRESHOLD);
    // a run that starts below the threshold never crosses it
    let threshold_time = sea
        .rows
        .iter()
        .position(|r| r.abs_rho01 >= threshold)
        .and_then(|start| sea.rows[start..].iter().find(|r| r.abs_rho01 < threshold))
        .map(|r| r.t);
    let beta_eff = if model.is_static() {
        let h = model.evaluate(cfg.t_span[0])?;
        effective_beta(&h, sea.rows[0].energy).ok()
    } else {
        None
    };

    let unitary = if cfg.compare_unitary {
        Some(compare_unitary(&cfg, &model, &sea, &csv_path)?)
    } else {
        None
    };

    let summary = RunSummary {
        csv_path,
        meta_path: meta_path.clone(),
        rows_written: rows.len(),
        final_time: final_row.t,
        final_row,
        threshold_time,
        beta_eff,
        report: sea.report,
        unitary,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let meta = json!({
        "config": config_echo,
        "status": "completed",
        "monitor": summary.report,
        "beta_eff": summary.beta_eff,
        "threshold_time": summary.threshold_time,
        "final_time": summary.final_time,
        "rows_written": summary.rows_written,
        "time_unit": model.time_unit_label(),
        "unitary": summary.unitary,
        "wall_time_s": summary.wall_time_s,
    });
    write_json(&meta_path, &meta)?;
    Ok(summary)
}

fn compare_unitary(
    cfg: &ScenarioConfig,
    model: &HamiltonianModel,
    sea: &ScenarioTrajectory,
    csv_path: &Path,
) -> Result<UnitaryComparison, ScenarioError> {
    let t_final = sea.record.times.last().copied().unwrap_or(cfg.t_span[1]);
    let reference = ScenarioConfig {
        stop_coherence: None,
        ..cfg.clone()
    };
    let unitary = match simulate(&reference, model, 0.0, t_final) {
        Ok(run) => run,
        Err(EvolutionError::Aborted(abort)) => {
            let meta_path = companion_path(csv_path, "_unitary", "meta.json");
            write_json(&meta_path, &json!({"status": "aborted", "abort": {"reason": abort.reason, "t": abort.t}, "monitor": abort.report}))?;
            return Err(ScenarioError::Aborted { abort, meta_path });
        }
        Err(EvolutionError::Input(e)) => return Err(e.into()),
        Err(EvolutionError::Config(e)) => return Err(ScenarioError::config("integrator", e)),
    };
    let unitary_path = companion_path(csv_path, "_unitary", "csv");
    write_observables(&unitary_path, &strided(&unitary.rows, cfg.output.stride))?;

    let pairs: Vec<(f64, f64, f64)> = sea
        .rows
        .iter()
        .zip(&unitary.rows)
        .map(|(s, u)| (s.t, s.fidelity, u.fidelity))
        .collect();
    let max_fidelity_deviation = pairs.iter().map(|(_, s, u)| (s - u).abs()).fold(0.0, f64::max);
    let diff_path = companion_path(csv_path, "_fidelity_diff", "csv");
    write_file(&diff_path, |w| {
        write_rows(
            w,
            FIDELITY_DIFF_HEADER,
            pairs
                .iter()
                .step_by(cfg.output.stride.max(1))
                .map(|&(t, s, u)| vec![t, s, u, (s - u).abs()]),
        )
    })?;
    Ok(UnitaryComparison {
        csv_path: unitary_path,
        diff_path,
        max_fidelity_deviation,
        report: unitary.report,
    })
}

fn write_json(path: &Path, value: &Value) -> Result<(), ScenarioError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::from)?;
        w.write_all(b"\n")
    })
}

pub const SWEEP_HEADER_PREFIX: &str = "value,threshold_time,beta_eff,max_fidelity_deviation,";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub param: String,
    pub entries: Vec<SweepEntry>,
    pub summary_path: PathBuf,
}

/// Runs one scenario per value of the numeric parameter at `param`.
///
/// Member outputs are suffixed `_<param>_<index>`; the summary of final
/// observables goes to `<stem>_sweep.csv`, rows in value order.
pub fn run_sweep(base: &Value, param: &str, values: &[f64]) -> Result<SweepSummary, ScenarioError> {
    let base = expand_preset(base.clone())?;
    if numeric_at(&base, param).is_none() {
        return Err(ScenarioError::config(param, "sweep parameter must address a numeric value"));
    }
    let base_cfg = parse_value(base.clone())?;
    let base_path = base_cfg.output.path.clone();
    let label = param.replace('.', "_");

    let configs = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut doc = base.clone();
            let number = serde_json::Number::from_f64(v)
                .ok_or_else(|| ScenarioError::config(param, format!("{v} is not a finite number")))?;
            set_path(&mut doc, param, Value::Number(number)).map_err(|e| ScenarioError::config(param, e))?;
            let member_path = companion_path(&base_path, &format!("_{label}_{k}"), "csv");
            let member_path = member_path.to_string_lossy().into_owned();
            set_path(&mut doc, "output.path", Value::String(member_path)).map_err(|e| ScenarioError::config("output.path", e))?;
            parse_value(doc)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let results: Vec<_> = configs.par_iter().map(run_scenario).collect();
    let mut entries = Vec::with_capacity(values.len());
    for (&value, result) in values.iter().zip(results) {
        entries.push(SweepEntry { value, summary: result? });
    }

    let summary_path = companion_path(&base_path, "_sweep", "csv");
    let header = format!("{SWEEP_HEADER_PREFIX}{}", ObservableRow::CSV_HEADER);
    write_file(&summary_path, |w| {
        write_rows(
            w,
            &header,
            entries.iter().map(|e| {
                let s = &e.summary;
                let mut row = vec![
                    e.value,
                    s.threshold_time.unwrap_or(f64::NAN),
                    s.beta_eff.unwrap_or(f64::NAN),
                    s.unitary.as_ref().map_or(f64::NAN, |u| u.max_fidelity_deviation),
                ];
                row.extend(s.final_row.values());
                row
            }),
        )
    })?;
    Ok(SweepSummary {
        param: param.to_string(),
        entries,
        summary_path,
    })
}
