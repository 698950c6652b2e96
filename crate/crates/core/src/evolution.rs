//! Time integration of `drho/dt = -i[H(t), rho] + D(rho)`.
//!
//! Both methods advance on a uniform output grid `t0 + k dt` (the last
//! interval may be shorter). The adaptive Dormand-Prince 5(4) pair takes as
//! many internal steps as its max-norm error control needs inside each grid
//! interval; fixed RK4 takes exactly one.
//!
//! After every accepted step the state is Hermitized and diagonalized.
//! Eigenvalues in `(-1e-6, 0)` are clamped to zero, and eigenvalues that
//! were numerically zero at the start of the step and are still below
//! `1e-9` are sent back to zero, so a rank-deficient state does not acquire a
//! spurious positive tail that the logarithm in the dissipator would amplify.
//! Only the mass removed this way is given back through the trace; any other
//! trace drift is left in place for the monitor to see.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{hermitian_part, jacobi_eigen, trace_product, xlogx, CMatrix, DensityMatrix, EIG_FLOOR};
use crate::dissipator::{dissipator_on_support, unitary_raw};
use crate::error::SeaError;
use crate::models::HamiltonianModel;
use crate::thermo::{observables_raw, ObservableRow};

/// Eigenvalues below this abort the run.
pub const POSITIVITY_ABORT: f64 = -1e-6;
/// Upper bound for eigenvalues returned to zero by rank restoration.
pub const RESTORE_TOL: f64 = 1e-9;
/// A step whose entropy falls by more than this counts as a dip.
pub const ENTROPY_DIP_TOL: f64 = 1e-9;
/// Smallest participating eigenvalue below which the step is capped at `0.1 / gamma`.
pub const STIFF_EIGENVALUE: f64 = 1e-10;
const HISTORY_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step, and the output grid spacing for the adaptive method.
    pub dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_dt: f64,
    pub min_dt: f64,
    pub resym_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive,
            dt: 0.01,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_dt: 1.0,
            min_dt: 1e-12,
            resym_every: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64) -> Self {
        Self {
            method: Method::Rk4Fixed,
            dt,
            ..Self::default()
        }
    }

    pub fn adaptive(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be positive and finite, got {v}"))
            }
        };
        positive("dt", self.dt)?;
        positive("rel_tol", self.rel_tol)?;
        positive("abs_tol", self.abs_tol)?;
        positive("max_dt", self.max_dt)?;
        positive("min_dt", self.min_dt)?;
        if self.min_dt > self.max_dt {
            return Err(format!("min_dt {} exceeds max_dt {}", self.min_dt, self.max_dt));
        }
        if self.resym_every == 0 {
            return Err("resym_every must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    /// `max |tr rho - 1|` over accepted steps.
    pub trace_drift: f64,
    /// `max |<H>(t) - <H>(t0)|`; zero for time-dependent Hamiltonians.
    pub energy_drift: f64,
    pub min_eigenvalue_seen: f64,
    pub entropy_dips: usize,
    pub max_entropy_dip: f64,
    pub clamp_events: usize,
    pub rank_restorations: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
}

impl MonitorReport {
    fn new(min_eig: f64) -> Self {
        Self {
            trace_drift: 0.0,
            energy_drift: 0.0,
            min_eigenvalue_seen: min_eig,
            entropy_dips: 0,
            max_entropy_dip: 0.0,
            clamp_events: 0,
            rank_restorations: 0,
            accepted_steps: 0,
            rejected_steps: 0,
            rhs_evaluations: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&DensityMatrix> {
        self.states.last()
    }

    /// Observable rows at every `stride`-th recorded point.
    pub fn observables(
        &self,
        model: &HamiltonianModel,
        psi0: &[num_complex::Complex64],
        stride: usize,
    ) -> crate::error::Result<Vec<ObservableRow>> {
        let stride = stride.max(1);
        self.times
            .iter()
            .zip(&self.states)
            .step_by(stride)
            .map(|(&t, rho)| observables_raw(rho.matrix(), model, t, psi0))
            .collect()
    }

    /// `<psi0| rho(t) |psi0>` at every recorded point.
    pub fn fidelities(&self, psi0: &[num_complex::Complex64]) -> Vec<f64> {
        self.states.iter().map(|rho| rho.expectation_in(psi0)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub min_eig: f64,
    pub trace: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbortReason {
    PositivityViolation { value: f64 },
    StepUnderflow { dt: f64 },
    NonFinite,
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::PositivityViolation { value } => {
                write!(f, "eigenvalue {value:.3e} below {POSITIVITY_ABORT:e}")
            }
            Self::StepUnderflow { dt } => write!(f, "step size {dt:.3e} below min_dt"),
            Self::NonFinite => write!(f, "non-finite state"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationAbort {
    pub reason: AbortReason,
    pub t: f64,
    /// The most recent accepted steps, oldest first.
    pub history: Vec<StepRecord>,
    pub report: MonitorReport,
    /// Everything recorded before the abort.
    pub record: TrajectoryRecord,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvolutionError {
    #[error(transparent)]
    Input(#[from] SeaError),
    #[error("invalid integrator configuration: {0}")]
    Config(String),
    #[error("integration aborted at t = {}: {}", .0.t, .0.reason)]
    Aborted(Box<IntegrationAbort>),
}

pub type EvolutionResult<T> = std::result::Result<T, EvolutionError>;

pub fn evolve(
    rho0: &DensityMatrix,
    model: &HamiltonianModel,
    gamma: f64,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> EvolutionResult<(TrajectoryRecord, MonitorReport)> {
    evolve_with(rho0, model, gamma, t_span, cfg, |_, _| false)
}

/// `evolve` that stops at the first grid point where `stop(t, rho)` holds.
pub fn evolve_with(
    rho0: &DensityMatrix,
    model: &HamiltonianModel,
    gamma: f64,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    mut stop: impl FnMut(f64, &DensityMatrix) -> bool,
) -> EvolutionResult<(TrajectoryRecord, MonitorReport)> {
    cfg.validate().map_err(EvolutionError::Config)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(SeaError::NegativeRate(gamma).into());
    }
    if rho0.dim() != model.dim() {
        return Err(SeaError::DimensionMismatch {
            left: rho0.dim(),
            right: model.dim(),
        }
        .into());
    }
    let (t0, t1) = t_span;
    model.check_time(t0)?;
    model.check_time(t1)?;
    if !(t1 > t0) {
        return Err(EvolutionError::Config(format!("t_span ({t0}, {t1}) is empty")));
    }

    let mut engine = Engine::new(model, gamma, cfg, rho0, t0);
    let grid = output_grid(t0, t1, cfg.dt);
    let mut record = TrajectoryRecord::default();
    record.times.push(t0);
    record.states.push(rho0.clone());
    if stop(t0, rho0) {
        return Ok((record, engine.report));
    }
    for &target in &grid[1..] {
        if let Err(reason) = engine.advance_to(target) {
            let abort = IntegrationAbort {
                reason,
                t: engine.t,
                history: engine.history.iter().copied().collect(),
                report: engine.report.clone(),
                record,
            };
            return Err(EvolutionError::Aborted(Box::new(abort)));
        }
        let state = DensityMatrix::from_restored(engine.y.clone());
        let halt = stop(target, &state);
        record.times.push(target);
        record.states.push(state);
        if halt {
            break;
        }
    }
    Ok((record, engine.report))
}

/// The `gamma = 0` reference evolution.
pub fn evolve_unitary(
    rho0: &DensityMatrix,
    model: &HamiltonianModel,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> EvolutionResult<TrajectoryRecord> {
    evolve(rho0, model, 0.0, t_span, cfg).map(|(record, _)| record)
}

/// `t0, t0 + dt, ...` up to `t1`, with a shorter final interval when `dt`
/// does not divide the span.
pub fn output_grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let span = t1 - t0;
    let steps = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut grid: Vec<f64> = (0..steps).map(|k| t0 + k as f64 * dt).collect();
    grid.push(t1);
    grid
}

const A21: f64 = 1.0 / 5.0;
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E5: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const C5: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];

fn combine(y: &CMatrix, h: f64, terms: &[(f64, &CMatrix)]) -> CMatrix {
    let mut out = y.clone();
    for &(w, k) in terms {
        if w == 0.0 {
            continue;
        }
        let f = h * w;
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += v * f;
        }
    }
    out
}

fn null_count(values: &[f64]) -> usize {
    values.iter().filter(|&&x| x <= EIG_FLOOR).count()
}

struct Engine<'a> {
    model: &'a HamiltonianModel,
    gamma: f64,
    cfg: &'a IntegratorConfig,
    h_static: Option<CMatrix>,
    t: f64,
    y: CMatrix,
    eigenvalues: Vec<f64>,
    /// Number of numerically zero eigenvalues at the current step start.
    null: usize,
    entropy: f64,
    energy0: f64,
    /// Derivative at `(t, y)` when still valid for the next step.
    k1: Option<CMatrix>,
    h_next: f64,
    steps_since_resym: usize,
    history: VecDeque<StepRecord>,
    report: MonitorReport,
}

impl<'a> Engine<'a> {
    fn new(model: &'a HamiltonianModel, gamma: f64, cfg: &'a IntegratorConfig, rho0: &DensityMatrix, t0: f64) -> Self {
        let y = rho0.matrix().clone();
        let eig = jacobi_eigen(&y);
        let entropy = -eig.values.iter().map(|&x| xlogx(x)).sum::<f64>();
        let h_static = model.is_static().then(|| model.matrix_at(t0));
        let energy0 = h_static.as_ref().map_or(0.0, |h| trace_product(&y, h));
        Self {
            model,
            gamma,
            cfg,
            h_static,
            t: t0,
            y,
            report: MonitorReport::new(eig.values[0]),
            null: null_count(&eig.values),
            eigenvalues: eig.values,
            entropy,
            energy0,
            k1: None,
            h_next: cfg.dt.min(cfg.max_dt),
            steps_since_resym: 0,
            history: VecDeque::with_capacity(HISTORY_LEN),
        }
    }

    fn rhs(&mut self, t: f64, y: &CMatrix) -> CMatrix {
        self.report.rhs_evaluations += 1;
        let owned;
        let h = match &self.h_static {
            Some(h) => h,
            None => {
                owned = self.model.matrix_at(t);
                &owned
            }
        };
        let mut out = unitary_raw(y, h);
        // a rank-one state stays rank one and the dissipator vanishes on it
        if self.gamma > 0.0 && self.null + 1 < y.nrows() {
            out += dissipator_on_support(y, h, self.gamma, self.null).value;
        }
        out
    }

    fn stiffness_cap(&self) -> f64 {
        if self.gamma == 0.0 {
            return f64::INFINITY;
        }
        let participating = self.eigenvalues.iter().copied().filter(|&x| x > EIG_FLOOR).fold(f64::INFINITY, f64::min);
        if participating < STIFF_EIGENVALUE {
            0.1 / self.gamma
        } else {
            f64::INFINITY
        }
    }

    fn advance_to(&mut self, target: f64) -> Result<(), AbortReason> {
        match self.cfg.method {
            Method::Rk4Fixed => {
                let h = target - self.t;
                let y_new = self.rk4_step(h);
                self.accept(target, h, y_new).map(|_| ())
            }
            Method::Rk45Adaptive => self.adaptive_to(target),
        }
    }

    fn rk4_step(&mut self, h: f64) -> CMatrix {
        let (t, y) = (self.t, self.y.clone());
        let k1 = self.k1.take().unwrap_or_else(|| self.rhs(t, &y));
        let k2 = self.rhs(t + 0.5 * h, &combine(&y, h, &[(0.5, &k1)]));
        let k3 = self.rhs(t + 0.5 * h, &combine(&y, h, &[(0.5, &k2)]));
        let k4 = self.rhs(t + h, &combine(&y, h, &[(1.0, &k3)]));
        combine(&y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)])
    }

    fn adaptive_to(&mut self, target: f64) -> Result<(), AbortReason> {
        let snap = 1e-12 * target.abs().max(1.0);
        let mut just_rejected = false;
        while self.t < target {
            let mut h = self.h_next.min(self.cfg.max_dt).min(self.stiffness_cap());
            if h < self.cfg.min_dt {
                return Err(AbortReason::StepUnderflow { dt: h });
            }
            let remaining = target - self.t;
            let last = h >= remaining - snap;
            if last {
                h = remaining;
            }

            let (t, y) = (self.t, self.y.clone());
            let k1 = self.k1.take().unwrap_or_else(|| self.rhs(t, &y));
            let k2 = self.rhs(t + C5[1] * h, &combine(&y, h, &[(A21, &k1)]));
            let k3 = self.rhs(t + C5[2] * h, &combine(&y, h, &[(A3[0], &k1), (A3[1], &k2)]));
            let k4 = self.rhs(t + C5[3] * h, &combine(&y, h, &[(A4[0], &k1), (A4[1], &k2), (A4[2], &k3)]));
            let k5 = self.rhs(
                t + C5[4] * h,
                &combine(&y, h, &[(A5[0], &k1), (A5[1], &k2), (A5[2], &k3), (A5[3], &k4)]),
            );
            let k6 = self.rhs(
                t + C5[5] * h,
                &combine(&y, h, &[(A6[0], &k1), (A6[1], &k2), (A6[2], &k3), (A6[3], &k4), (A6[4], &k5)]),
            );
            let y_new = combine(
                &y,
                h,
                &[(B5[0], &k1), (B5[2], &k3), (B5[3], &k4), (B5[4], &k5), (B5[5], &k6)],
            );
            let t_new = if last { target } else { t + h };
            let k7 = self.rhs(t_new, &y_new);
            let err_m = combine(
                &CMatrix::zeros(y.nrows(), y.ncols()),
                h,
                &[(E5[0], &k1), (E5[2], &k3), (E5[3], &k4), (E5[4], &k5), (E5[5], &k6), (E5[6], &k7)],
            );
            let mut err = 0.0_f64;
            for ((e, a), b) in err_m.iter().zip(y.iter()).zip(y_new.iter()) {
                let scale = self.cfg.abs_tol + self.cfg.rel_tol * a.norm().max(b.norm());
                err = err.max(e.norm() / scale);
            }
            if !err.is_finite() {
                return Err(AbortReason::NonFinite);
            }

            if err <= 1.0 {
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                let grow = if just_rejected { grow.min(1.0) } else { grow };
                // keep the controller's step when the grid forced a shorter one
                let base = if last { self.h_next.max(h) } else { h };
                self.h_next = base * grow;
                let modified = self.accept(t_new, h, y_new)?;
                if !modified {
                    self.k1 = Some(k7);
                }
                just_rejected = false;
            } else {
                self.report.rejected_steps += 1;
                self.h_next = h * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                self.k1 = Some(k1);
                just_rejected = true;
            }
        }
        Ok(())
    }

    /// Restores and monitors an accepted state; returns whether the state
    /// was changed beyond Hermitization or its rank changed, either of which
    /// invalidates the derivative computed at the end of the step.
    fn accept(&mut self, t_new: f64, h: f64, y_new: CMatrix) -> Result<bool, AbortReason> {
        if y_new.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(AbortReason::NonFinite);
        }
        let eig = jacobi_eigen(&y_new);
        let raw_min = eig.values[0];
        if raw_min < POSITIVITY_ABORT {
            self.t = t_new;
            return Err(AbortReason::PositivityViolation { value: raw_min });
        }
        self.report.min_eigenvalue_seen = self.report.min_eigenvalue_seen.min(raw_min);

        let null_before = self.null;
        let mut values = eig.values.clone();
        let mut changed = false;
        for (k, v) in values.iter_mut().enumerate() {
            if *v < 0.0 {
                *v = 0.0;
                self.report.clamp_events += 1;
                changed = true;
            } else if k < null_before && *v > 0.0 && *v < RESTORE_TOL {
                *v = 0.0;
                self.report.rank_restorations += 1;
                changed = true;
            }
        }

        self.steps_since_resym += 1;
        let y = if changed {
            let raw_trace: f64 = eig.values.iter().sum();
            let kept: f64 = values.iter().sum();
            let factor = raw_trace / kept;
            values.iter_mut().for_each(|v| *v *= factor);
            self.steps_since_resym = 0;
            let vectors = eig.vectors;
            hermitian_part(&crate::algebra::EigenSystem { values: values.clone(), vectors }.reconstruct())
        } else if self.steps_since_resym >= self.cfg.resym_every {
            self.steps_since_resym = 0;
            hermitian_part(&y_new)
        } else {
            y_new
        };

        let trace: f64 = values.iter().sum();
        let entropy = -values.iter().map(|&x| xlogx(x)).sum::<f64>();
        let dip = self.entropy - entropy;
        if dip > ENTROPY_DIP_TOL {
            self.report.entropy_dips += 1;
            log::debug!("entropy dip {dip:.3e} at t = {t_new}");
        }
        self.report.max_entropy_dip = self.report.max_entropy_dip.max(dip);
        self.report.trace_drift = self.report.trace_drift.max((trace - 1.0).abs());
        if let Some(hs) = &self.h_static {
            let drift = (trace_product(&y, hs) - self.energy0).abs();
            self.report.energy_drift = self.report.energy_drift.max(drift);
        }
        self.report.accepted_steps += 1;

        if self.history.len() == HISTORY_LEN {
            self.history.pop_front();
        }
        self.history.push_back(StepRecord {
            t: t_new,
            dt: h,
            min_eig: raw_min,
            trace,
            entropy,
        });

        self.t = t_new;
        self.y = y;
        self.null = null_count(&values);
        self.eigenvalues = values;
        self.entropy = entropy;
        Ok(changed || self.null != null_before)
    }
}
