//! Hamiltonian families with analytic derivatives and eigensystems, plus the
//! adiabaticity diagnostics.
//!
//! Two-level matrices are written in the bare basis `{|1>, |0>}`: row/column
//! 0 is `|1>`, row/column 1 is `|0>`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::algebra::{
    c, identity, jacobi_eigen, pauli_x, pauli_z, CMatrix, EigenSystem,
    HermitianOperator, HERMITIAN_TOL,
};
use crate::error::{Result, SeaError};

/// Relative gap below which two instantaneous levels count as degenerate.
pub const DEGENERATE_GAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianModel {
    /// `diag(epsilon, 0)`.
    StaticTss { epsilon: f64 },
    /// `coupling * [[0, e^{i w t}], [e^{-i w t}, 0]]`.
    RotatingField { coupling: f64, frequency: f64 },
    /// `[[kappa t, xi], [xi, -kappa t]]` on `t in [-half_window, half_window]`.
    LandauZener { kappa: f64, xi: f64, half_window: f64 },
    /// Piecewise-linear interpolation of sampled Hermitian matrices.
    CustomTable(HamiltonianTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTable {
    times: Vec<f64>,
    matrices: Vec<CMatrix>,
}

impl HamiltonianTable {
    /// Samples must have strictly increasing times and equal dimensions. A
    /// single sample describes a constant Hamiltonian valid for all times.
    pub fn new(samples: Vec<(f64, CMatrix)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(SeaError::InvalidModel("custom table has no samples".into()));
        }
        let dim = samples[0].1.nrows();
        let mut times = Vec::with_capacity(samples.len());
        let mut matrices = Vec::with_capacity(samples.len());
        for (i, (t, m)) in samples.into_iter().enumerate() {
            if !t.is_finite() {
                return Err(SeaError::InvalidModel(format!("sample {i}: non-finite time")));
            }
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(SeaError::InvalidModel(format!(
                        "sample {i}: times must be strictly increasing ({t} after {prev})"
                    )));
                }
            }
            if m.nrows() != dim {
                return Err(SeaError::DimensionMismatch {
                    left: dim,
                    right: m.nrows(),
                });
            }
            let h = HermitianOperator::new(m)?;
            times.push(t);
            matrices.push(h.into_matrix());
        }
        Ok(Self { times, matrices })
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, &CMatrix)> {
        self.times.iter().copied().zip(self.matrices.iter())
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.times.len();
        let idx = self.times.partition_point(|&x| x <= t);
        idx.saturating_sub(1).min(n - 2)
    }

    fn value(&self, t: f64) -> CMatrix {
        if self.times.len() == 1 {
            return self.matrices[0].clone();
        }
        let k = self.segment(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        self.matrices[k].scale(1.0 - w) + self.matrices[k + 1].scale(w)
    }

    fn slope(&self, t: f64) -> CMatrix {
        if self.times.len() == 1 {
            let d = self.dim();
            return CMatrix::zeros(d, d);
        }
        let k = self.segment(t);
        (&self.matrices[k + 1] - &self.matrices[k]).unscale(self.times[k + 1] - self.times[k])
    }
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(SeaError::InvalidModel(msg.to_string()))
    }
}

impl HamiltonianModel {
    pub fn static_tss(epsilon: f64) -> Result<Self> {
        require(epsilon.is_finite() && epsilon != 0.0, "epsilon must be finite and non-zero")?;
        Ok(Self::StaticTss { epsilon })
    }

    pub fn rotating_field(coupling: f64, frequency: f64) -> Result<Self> {
        require(coupling.is_finite() && coupling > 0.0, "coupling must be positive")?;
        require(frequency.is_finite() && frequency >= 0.0, "frequency must be non-negative")?;
        Ok(Self::RotatingField { coupling, frequency })
    }

    pub fn landau_zener(kappa: f64, xi: f64, half_window: f64) -> Result<Self> {
        require(kappa.is_finite() && kappa > 0.0, "kappa must be positive")?;
        require(xi.is_finite() && xi > 0.0, "xi must be positive")?;
        require(half_window.is_finite() && half_window > 0.0, "half_window must be positive")?;
        Ok(Self::LandauZener { kappa, xi, half_window })
    }

    pub fn custom_table(samples: Vec<(f64, CMatrix)>) -> Result<Self> {
        HamiltonianTable::new(samples).map(Self::CustomTable)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::StaticTss { .. } => "static_tss",
            Self::RotatingField { .. } => "rotating_field",
            Self::LandauZener { .. } => "landau_zener",
            Self::CustomTable(_) => "custom_table",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::CustomTable(table) => table.dim(),
            _ => 2,
        }
    }

    /// Closed time interval on which the model is defined.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Self::LandauZener { half_window, .. } => (-half_window, *half_window),
            Self::CustomTable(table) if table.times.len() > 1 => {
                (table.times[0], *table.times.last().unwrap())
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// True when `H(t)` does not depend on `t`.
    pub fn is_static(&self) -> bool {
        match self {
            Self::StaticTss { .. } => true,
            Self::RotatingField { frequency, .. } => *frequency == 0.0,
            Self::LandauZener { .. } => false,
            Self::CustomTable(table) => table.times.len() == 1,
        }
    }

    /// Energy scale that sets the model's natural time unit.
    pub fn energy_unit(&self) -> f64 {
        match self {
            Self::StaticTss { epsilon } => epsilon.abs(),
            Self::RotatingField { coupling, .. } => *coupling,
            Self::LandauZener { xi, .. } => *xi,
            Self::CustomTable(table) => {
                let e = jacobi_eigen(&table.matrices[0]).values;
                (e[e.len() - 1] - e[0]).max(f64::MIN_POSITIVE)
            }
        }
    }

    pub fn time_unit_label(&self) -> &'static str {
        match self {
            Self::StaticTss { .. } => "1/epsilon",
            Self::RotatingField { .. } => "1/Omega",
            Self::LandauZener { .. } => "1/xi",
            Self::CustomTable(_) => "1/spread",
        }
    }

    /// Matrix period `2 pi / w` of the rotating field, when it moves.
    pub fn revival_time(&self) -> Option<f64> {
        match self {
            Self::RotatingField { frequency, .. } if *frequency > 0.0 => Some(2.0 * PI / frequency),
            _ => None,
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        let slack = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
        if !t.is_finite() || t < lo - slack || t > hi + slack {
            return Err(SeaError::OutOfDomain { t, lo, hi });
        }
        Ok(())
    }

    /// `H(t)` without the domain check.
    pub(crate) fn matrix_at(&self, t: f64) -> CMatrix {
        match self {
            Self::StaticTss { epsilon } => {
                CMatrix::from_row_slice(2, 2, &[c(*epsilon, 0.), c(0., 0.), c(0., 0.), c(0., 0.)])
            }
            Self::RotatingField { coupling, frequency } => {
                let ph = Complex64::from_polar(*coupling, frequency * t);
                CMatrix::from_row_slice(2, 2, &[c(0., 0.), ph, ph.conj(), c(0., 0.)])
            }
            Self::LandauZener { kappa, xi, .. } => {
                let d = kappa * t;
                CMatrix::from_row_slice(2, 2, &[c(d, 0.), c(*xi, 0.), c(*xi, 0.), c(-d, 0.)])
            }
            Self::CustomTable(table) => table.value(t),
        }
    }

    fn derivative_at(&self, t: f64) -> CMatrix {
        match self {
            Self::StaticTss { .. } => CMatrix::zeros(2, 2),
            Self::RotatingField { coupling, frequency } => {
                let up = Complex64::from_polar(*coupling, frequency * t) * c(0.0, *frequency);
                let down = Complex64::from_polar(*coupling, -frequency * t) * c(0.0, -*frequency);
                CMatrix::from_row_slice(2, 2, &[c(0., 0.), up, down, c(0., 0.)])
            }
            Self::LandauZener { kappa, .. } => pauli_z().scale(*kappa),
            Self::CustomTable(table) => table.slope(t),
        }
    }

    pub fn evaluate(&self, t: f64) -> Result<HermitianOperator> {
        self.check_time(t)?;
        Ok(HermitianOperator::from_matrix_unchecked(self.matrix_at(t)))
    }

    /// Analytic `dH/dt`.
    pub fn derivative(&self, t: f64) -> Result<HermitianOperator> {
        self.check_time(t)?;
        Ok(HermitianOperator::from_matrix_unchecked(self.derivative_at(t)))
    }

    /// Closed-form eigensystem, ascending and phase-fixed, where one exists.
    pub fn analytic_eigensystem(&self, t: f64) -> Option<EigenSystem> {
        let (values, vectors) = match self {
            Self::StaticTss { epsilon } => {
                let e1 = c(1., 0.);
                let z = c(0., 0.);
                if *epsilon > 0.0 {
                    (vec![0.0, *epsilon], CMatrix::from_row_slice(2, 2, &[z, e1, e1, z]))
                } else {
                    (vec![*epsilon, 0.0], identity(2))
                }
            }
            Self::RotatingField { coupling, frequency } => {
                // |+-> = (|1> +- e^{-i w t}|0>) / sqrt 2
                let a = c(FRAC_1_SQRT_2, 0.0);
                let b = Complex64::from_polar(FRAC_1_SQRT_2, -frequency * t);
                (
                    vec![-coupling, *coupling],
                    CMatrix::from_row_slice(2, 2, &[a, a, -b, b]),
                )
            }
            Self::LandauZener { kappa, xi, .. } => {
                let d = kappa * t;
                let e = xi.hypot(d);
                // theta = -atan((kt - E)/xi) = atan(xi / (kt + E))
                let theta = (xi / (d + e)).atan();
                let (s, co) = theta.sin_cos();
                // |+> = cos|1> + sin|0>;  |-> = -sin|1> + cos|0>, sign-flipped
                (
                    vec![-e, e],
                    CMatrix::from_row_slice(2, 2, &[c(s, 0.), c(co, 0.), c(-co, 0.), c(s, 0.)]),
                )
            }
            Self::CustomTable(_) => return None,
        };
        Some(EigenSystem { values, vectors })
    }

    /// Numeric eigensystem of `H(t)`, phase-fixed.
    pub fn numeric_eigensystem(&self, t: f64) -> Result<EigenSystem> {
        self.check_time(t)?;
        Ok(jacobi_eigen(&self.matrix_at(t)))
    }

    /// Analytic eigensystem when available, numeric otherwise.
    pub fn instantaneous_eigensystem(&self, t: f64) -> Result<EigenSystem> {
        self.check_time(t)?;
        Ok(self
            .analytic_eigensystem(t)
            .unwrap_or_else(|| jacobi_eigen(&self.matrix_at(t))))
    }

    fn check_gaps(&self, t: f64, eig: &EigenSystem) -> Result<()> {
        let scale = eig
            .values
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for w in eig.values.windows(2) {
            let gap = w[1] - w[0];
            if gap < DEGENERATE_GAP_TOL * scale {
                return Err(SeaError::DegenerateSpectrum { t, gap });
            }
        }
        Ok(())
    }

    /// `|<phi_n| dH/dt |phi_m>| / (e_n - e_m)^2` for every pair `n < m`.
    pub fn adiabaticity_metric(&self, t: f64) -> Result<AdiabaticDiagnostics> {
        let eig = self.instantaneous_eigensystem(t)?;
        self.check_gaps(t, &eig)?;
        let hdot = self.derivative_at(t);
        let couplings = eig.vectors.adjoint() * &hdot * &eig.vectors;
        let n = eig.dim();
        let mut metric_per_pair = Vec::with_capacity(n * (n - 1) / 2);
        let mut max_metric: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let gap = eig.values[i] - eig.values[j];
                let value = couplings[(i, j)].norm() / (gap * gap);
                max_metric = max_metric.max(value);
                metric_per_pair.push(PairMetric { n: i, m: j, value });
            }
        }
        Ok(AdiabaticDiagnostics {
            metric_per_pair,
            max_metric,
            coeffs: Vec::new(),
        })
    }

    /// Propagates the instantaneous-eigenbasis amplitudes by `dt`.
    ///
    /// The amplitudes obey
    ///
    /// ```text
    /// da_n/dt = -a_n <phi_n|dphi_n/dt>
    ///           + sum_{k != n} a_k e^{-i int (e_k - e_n)} <phi_n|dH/dt|phi_k> / (e_n - e_k)
    /// ```
    ///
    /// The generator is anti-Hermitian, so the step uses the fourth-order
    /// Magnus exponential at the two Gauss points and conserves the norm to
    /// rounding. The dynamical phases `int e_k ds` are integrated alongside by
    /// Gauss-Legendre quadrature; the Berry term is a centred difference of
    /// the phase-fixed eigenvectors, projected onto the imaginary axis.
    pub fn adiabatic_coefficient_step(&self, state: &AdiabaticState, dt: f64) -> Result<AdiabaticState> {
        let t = state.t;
        self.check_time(t)?;
        self.check_time(t + dt)?;
        let n = state.amplitudes.len();
        if n != self.dim() {
            return Err(SeaError::DimensionMismatch {
                left: self.dim(),
                right: n,
            });
        }
        let r3 = 3.0_f64.sqrt();
        let nodes = [0.5 - r3 / 6.0, 0.5 + r3 / 6.0];

        let mut gens = Vec::with_capacity(2);
        for &cg in &nodes {
            let tc = t + cg * dt;
            let phases = self.advance_phases(&state.phases, t, cg * dt)?;
            gens.push(self.coefficient_generator(tc, &phases)?);
        }
        let (a1, a2) = (&gens[0], &gens[1]);
        let omega = (a1 + a2).scale(dt / 2.0) + (a2 * a1 - a1 * a2).scale(r3 * dt * dt / 12.0);
        let prop = exp_anti_hermitian(&omega);
        let amps: Vec<Complex64> = (0..n)
            .map(|i| (0..n).map(|k| prop[(i, k)] * state.amplitudes[k]).sum())
            .collect();
        Ok(AdiabaticState {
            t: t + dt,
            amplitudes: amps,
            phases: self.advance_phases(&state.phases, t, dt)?,
        })
    }

    /// `phases + int_t^{t+h} e_k(s) ds` by three-point Gauss-Legendre.
    fn advance_phases(&self, phases: &[f64], t: f64, h: f64) -> Result<Vec<f64>> {
        let r = (0.6_f64).sqrt();
        let pts = [(0.5 - r / 2.0, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + r / 2.0, 5.0 / 18.0)];
        let mut out = phases.to_vec();
        for (x, w) in pts {
            let e = self.instantaneous_eigensystem(t + x * h)?;
            for (o, v) in out.iter_mut().zip(&e.values) {
                *o += h * w * v;
            }
        }
        Ok(out)
    }

    fn coefficient_generator(&self, t: f64, phases: &[f64]) -> Result<CMatrix> {
        let eig = self.instantaneous_eigensystem(t)?;
        self.check_gaps(t, &eig)?;
        let n = eig.dim();
        let hdot = self.derivative_at(t);
        let couplings = eig.vectors.adjoint() * &hdot * &eig.vectors;
        let berry = self.berry_connection(t, &eig)?;
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = -berry[i];
            for k in 0..n {
                if k != i {
                    let phase = Complex64::from_polar(1.0, -(phases[k] - phases[i]));
                    m[(i, k)] = phase * couplings[(i, k)] / (eig.values[i] - eig.values[k]);
                }
            }
        }
        Ok(m)
    }

    /// `<phi_n|dphi_n/dt>` by finite differences of the phase-fixed vectors.
    fn berry_connection(&self, t: f64, eig: &EigenSystem) -> Result<Vec<Complex64>> {
        let h = (1e-5 / self.energy_unit()).clamp(1e-9, 1e-3);
        let (lo, hi) = self.domain();
        let (ta, tb) = if t - h < lo {
            (t, t + h)
        } else if t + h > hi {
            (t - h, t)
        } else {
            (t - h, t + h)
        };
        let ea = self.instantaneous_eigensystem(ta)?;
        let eb = self.instantaneous_eigensystem(tb)?;
        let n = eig.dim();
        Ok((0..n)
            .map(|k| {
                let v = eig.vectors.column(k);
                let d: Complex64 = (0..n)
                    .map(|i| v[i].conj() * (eb.vectors[(i, k)] - ea.vectors[(i, k)]))
                    .sum::<Complex64>()
                    / (tb - ta);
                c(0.0, d.im)
            })
            .collect())
    }
}

/// `exp(A)` for anti-Hermitian `A`, through the eigensystem of `iA`.
fn exp_anti_hermitian(a: &CMatrix) -> CMatrix {
    let k = a * c(0.0, 1.0);
    let eig = jacobi_eigen(&k);
    let n = eig.dim();
    let mut out = CMatrix::zeros(n, n);
    for j in 0..n {
        let w = Complex64::from_polar(1.0, -eig.values[j]);
        let v = eig.vectors.column(j);
        for r in 0..n {
            for s in 0..n {
                out[(r, s)] += v[r] * w * v[s].conj();
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairMetric {
    pub n: usize,
    pub m: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdiabaticDiagnostics {
    pub metric_per_pair: Vec<PairMetric>,
    pub max_metric: f64,
    pub coeffs: Vec<Complex64>,
}

/// Amplitudes in the instantaneous eigenbasis (ascending energy order)
/// together with the accumulated dynamical phases.
#[derive(Debug, Clone, PartialEq)]
pub struct AdiabaticState {
    pub t: f64,
    pub amplitudes: Vec<Complex64>,
    pub phases: Vec<f64>,
}

impl AdiabaticState {
    pub fn new(t: f64, amplitudes: Vec<Complex64>) -> Self {
        let phases = vec![0.0; amplitudes.len()];
        Self { t, amplitudes, phases }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn diagnostics(&self, model: &HamiltonianModel) -> Result<AdiabaticDiagnostics> {
        let mut d = model.adiabaticity_metric(self.t)?;
        d.coeffs = self.amplitudes.clone();
        Ok(d)
    }
}

/// `max|H - H^H|` check used by tests of generated matrices.
pub fn is_hermitian(m: &CMatrix) -> bool {
    let scale = m.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    (m - m.adjoint()).iter().all(|z| z.norm() <= HERMITIAN_TOL * scale)
}

/// `Omega sigma_x` as a constant single-sample table.
pub fn constant_sigma_x(coupling: f64) -> HamiltonianModel {
    HamiltonianModel::CustomTable(HamiltonianTable {
        times: vec![0.0],
        matrices: vec![pauli_x().scale(coupling)],
    })
}
