//! Observables along trajectories and canonical-state solvers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    commutator, hermitian_part, max_norm, trace, trace_product, xlogx, CMatrix, DensityMatrix,
    HermitianOperator,
};
use crate::dissipator::master_rhs;
use crate::error::{Result, SeaError};
use crate::models::HamiltonianModel;

/// Largest `|beta| * spread` for which canonical weights are formed.
pub const MAX_EXPONENT: f64 = 700.0;

/// One sample of the recorded observables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRow {
    pub t: f64,
    /// Population of the highest instantaneous level.
    pub p1: f64,
    /// Population of the lowest instantaneous level.
    pub p0: f64,
    pub re_rho01: f64,
    pub im_rho01: f64,
    pub abs_rho01: f64,
    /// Von Neumann entropy `-tr(rho ln rho)` in nats.
    pub entropy: f64,
    pub energy: f64,
    /// `<psi0| rho |psi0>`.
    pub fidelity: f64,
    /// `tr(rho sigma_x)` in the bare basis.
    pub sigma_x: f64,
    pub trace: f64,
    pub min_eig: f64,
    /// Largest pair adiabaticity metric; `NaN` on a degenerate spectrum.
    pub adiab_metric: f64,
}

impl ObservableRow {
    pub const CSV_HEADER: &'static str =
        "t,p1,p0,re_rho01,im_rho01,abs_rho01,entropy,energy,fidelity,sigma_x,trace,min_eig,adiab_metric";

    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.p1,
            self.p0,
            self.re_rho01,
            self.im_rho01,
            self.abs_rho01,
            self.entropy,
            self.energy,
            self.fidelity,
            self.sigma_x,
            self.trace,
            self.min_eig,
            self.adiab_metric,
        ]
    }
}

/// `S = -tr(rho ln rho)` with negative rounding noise clamped.
pub fn von_neumann_entropy(rho: &CMatrix) -> f64 {
    let eig = crate::algebra::jacobi_eigen(rho);
    -eig.values.iter().map(|&x| xlogx(x)).sum::<f64>()
}

/// Evaluated observables of `rho` at time `t` for the given model and
/// reference state `psi0`.
pub fn observables(
    rho: &DensityMatrix,
    model: &HamiltonianModel,
    t: f64,
    psi0: &[Complex64],
) -> Result<ObservableRow> {
    observables_raw(rho.matrix(), model, t, psi0)
}

pub(crate) fn observables_raw(
    rho: &CMatrix,
    model: &HamiltonianModel,
    t: f64,
    psi0: &[Complex64],
) -> Result<ObservableRow> {
    let n = rho.nrows();
    if psi0.len() != n || model.dim() != n {
        return Err(SeaError::DimensionMismatch {
            left: n,
            right: if psi0.len() != n { psi0.len() } else { model.dim() },
        });
    }
    let basis = model.instantaneous_eigensystem(t)?;
    let in_basis = basis.vectors.adjoint() * rho * &basis.vectors;
    let hi = n - 1;
    let rho01 = in_basis[(0, hi)];
    let own = crate::algebra::jacobi_eigen(rho);
    let entropy = -own.values.iter().map(|&x| xlogx(x)).sum::<f64>();
    let h = model.matrix_at(t);
    let mut fid = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            fid += psi0[i].conj() * rho[(i, j)] * psi0[j];
        }
    }
    let adiab_metric = if model.is_static() {
        0.0
    } else {
        model.adiabaticity_metric(t).map(|d| d.max_metric).unwrap_or(f64::NAN)
    };
    Ok(ObservableRow {
        t,
        p1: in_basis[(hi, hi)].re,
        p0: in_basis[(0, 0)].re,
        re_rho01: rho01.re,
        im_rho01: rho01.im,
        abs_rho01: rho01.norm(),
        entropy,
        energy: trace_product(rho, &h),
        fidelity: fid.re,
        sigma_x: 2.0 * rho[(0, 1)].re,
        trace: trace(rho).re,
        min_eig: own.values[0],
        adiab_metric,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalState {
    pub beta: f64,
    pub omega: DensityMatrix,
    /// Set for restrictions to a proper subspace.
    pub rank_deficient: bool,
}

/// Shifted Boltzmann weights `exp(-beta (e_k - e_ref))` with the largest
/// weight equal to 1.
fn boltzmann_weights(values: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !beta.is_finite() {
        return Err(SeaError::CanonicalOverflow { exponent: f64::INFINITY });
    }
    let spread = values[values.len() - 1] - values[0];
    let exponent = beta.abs() * spread;
    if exponent > MAX_EXPONENT {
        return Err(SeaError::CanonicalOverflow { exponent });
    }
    let top = values.iter().map(|e| -beta * e).fold(f64::NEG_INFINITY, f64::max);
    Ok(values.iter().map(|e| (-beta * e - top).exp()).collect())
}

/// `omega(beta) = e^{-beta H} / tr e^{-beta H}`; `beta` may be negative.
pub fn canonical_state(h: &HermitianOperator, beta: f64) -> Result<CanonicalState> {
    let eig = h.eigen();
    let w = boltzmann_weights(&eig.values, beta)?;
    let z: f64 = w.iter().sum();
    let omega = hermitian_part(&eig.map_indexed(|k| w[k] / z));
    Ok(CanonicalState {
        beta,
        omega: DensityMatrix::from_restored(omega),
        rank_deficient: false,
    })
}

/// `P e^{-beta H} / tr(P e^{-beta H})` for a projector `P` commuting with `H`.
pub fn restricted_canonical(h: &HermitianOperator, projector: &CMatrix, beta: f64) -> Result<CanonicalState> {
    let n = h.dim();
    if projector.nrows() != n || projector.ncols() != n {
        return Err(SeaError::DimensionMismatch {
            left: n,
            right: projector.nrows(),
        });
    }
    let p = HermitianOperator::new(projector.clone())
        .map_err(|e| SeaError::InvalidProjector(e.to_string()))?;
    let p = p.matrix();
    let idem = max_norm(&(p * p - p));
    if idem > 1e-10 {
        return Err(SeaError::InvalidProjector(format!("|P^2 - P| = {idem:.3e}")));
    }
    let comm = max_norm(&commutator(h.matrix(), p)?);
    if comm > 1e-10 {
        return Err(SeaError::InvalidProjector(format!("|[H, P]| = {comm:.3e}")));
    }
    let eig = h.eigen();
    let w = boltzmann_weights(&eig.values, beta)?;
    let gibbs = eig.map_indexed(|k| w[k]);
    let restricted = p * gibbs;
    let z = trace(&restricted).re;
    if !(z > f64::MIN_POSITIVE) {
        return Err(SeaError::InvalidProjector("tr(P e^{-beta H}) vanishes".into()));
    }
    let omega = hermitian_part(&restricted.unscale(z));
    let rank = trace(p).re.round() as usize;
    Ok(CanonicalState {
        beta,
        omega: DensityMatrix::from_restored(omega),
        rank_deficient: rank < n,
    })
}

fn canonical_energy(values: &[f64], beta: f64) -> f64 {
    let top = values.iter().map(|e| -beta * e).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut u) = (0.0, 0.0);
    for e in values {
        let w = (-beta * e - top).exp();
        z += w;
        u += w * e;
    }
    u / z
}

/// The unique `beta` with `tr(omega(beta) H) = energy`, by bisection on the
/// strictly decreasing canonical energy.
pub fn effective_beta(h: &HermitianOperator, energy: f64) -> Result<f64> {
    let values = h.eigen().values;
    let (lo, hi) = (values[0], values[values.len() - 1]);
    let spread = hi - lo;
    if !(energy > lo && energy < hi) || spread <= 0.0 {
        return Err(SeaError::NoFiniteBeta {
            energy,
            min: lo,
            max: hi,
        });
    }
    let tol = 1e-10 * spread;
    let excess = |beta: f64| canonical_energy(&values, beta) - energy;
    if excess(0.0).abs() <= tol {
        return Ok(0.0);
    }

    let limit = MAX_EXPONENT / spread;
    let mut b = 1.0 / spread;
    while !(excess(-b) > 0.0 && excess(b) < 0.0) {
        if b >= limit {
            return Err(SeaError::NoFiniteBeta {
                energy,
                min: lo,
                max: hi,
            });
        }
        b = (2.0 * b).min(limit);
    }
    let (mut left, mut right) = (-b, b);
    for _ in 0..300 {
        let mid = 0.5 * (left + right);
        if mid == left || mid == right {
            break;
        }
        if excess(mid) > 0.0 {
            left = mid;
        } else {
            right = mid;
        }
        if right - left <= 4.0 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(0.5 * (left + right))
}

/// `max|rhs(rho)|` of the full master equation.
pub fn stationarity_residual(rho: &DensityMatrix, h: &HermitianOperator, gamma: f64) -> Result<f64> {
    Ok(max_norm(master_rhs(rho, h, gamma)?.rhs.matrix()))
}

/// Projector onto the span of selected eigenvectors of `h`.
pub fn eigenprojector(h: &HermitianOperator, levels: &[usize]) -> CMatrix {
    let eig = h.eigen();
    let n = h.dim();
    let mut p = CMatrix::zeros(n, n);
    for &k in levels {
        let v = eig.vectors.column(k);
        p += &v * v.adjoint();
    }
    hermitian_part(&p)
}

/// `e_k`-th pure eigenstate of `h` as a density matrix.
pub fn eigenstate(h: &HermitianOperator, level: usize) -> DensityMatrix {
    let p = eigenprojector(h, &[level]);
    DensityMatrix::from_restored(p)
}
