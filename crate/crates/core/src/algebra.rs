//! Dense complex-matrix kernel.
//!
//! Everything here works on small dense `DMatrix<Complex64>` values: the
//! Hermitian eigensolver (cyclic complex Jacobi), spectral matrix functions,
//! commutators and the real scalar product `(A|B) = tr(A B^H + A^H B) / 2`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Result, SeaError};

pub type CMatrix = DMatrix<Complex64>;

/// Relative tolerance on `max|M - M^H|` for a matrix to count as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues of a density matrix in `(-CLAMP_TOL, 0)` are treated as zero.
pub const CLAMP_TOL: f64 = 1e-9;
/// Below this magnitude an eigenvalue of a unit-trace state is numerically zero.
pub const EIG_FLOOR: f64 = 64.0 * f64::EPSILON;

const JACOBI_MAX_SWEEPS: usize = 64;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Largest entry modulus.
pub fn max_norm(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Real part of `tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

pub fn diag_real(values: &[f64]) -> CMatrix {
    let n = values.len();
    let mut m = CMatrix::zeros(n, n);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = c(*v, 0.0);
    }
    m
}

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(SeaError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

fn check_same_dim(a: &CMatrix, b: &CMatrix) -> Result<()> {
    check_square(a)?;
    check_square(b)?;
    if a.nrows() != b.nrows() {
        return Err(SeaError::DimensionMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    Ok(())
}

/// A Hermitian matrix, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(CMatrix);

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SeaError::NonFinite);
        }
        let asymmetry = max_norm(&(&m - m.adjoint()));
        let scale = max_norm(&m);
        if asymmetry > HERMITIAN_TOL * scale {
            return Err(SeaError::NotHermitian {
                asymmetry,
                scale: HERMITIAN_TOL * scale,
            });
        }
        Ok(Self(m))
    }

    /// Hermitizes `m` instead of validating it. Used for results that are
    /// Hermitian by construction up to rounding.
    pub fn from_hermitian_part(m: &CMatrix) -> Self {
        Self(hermitian_part(m))
    }

    pub fn from_real_diagonal(values: &[f64]) -> Self {
        Self(diag_real(values))
    }

    /// Wraps a matrix that is exactly Hermitian by construction.
    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.scale(factor))
    }

    pub fn eigen(&self) -> EigenSystem {
        jacobi_eigen(&self.0)
    }
}

/// Hermitian, unit-trace, positive-semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        let h = HermitianOperator::new(m)?;
        let tr = trace(h.matrix()).re;
        if (tr - 1.0).abs() > CLAMP_TOL {
            return Err(SeaError::InvalidDensityMatrix(format!(
                "trace {tr} differs from 1 by more than 1e-9"
            )));
        }
        let min = h.eigen().values[0];
        if min < -CLAMP_TOL {
            return Err(SeaError::PositivityViolation { value: min });
        }
        Ok(Self(h.into_matrix()))
    }

    /// Wraps a matrix the caller has already restored to Hermitian, unit-trace,
    /// positive form.
    pub(crate) fn from_restored(m: CMatrix) -> Self {
        Self(m)
    }

    /// `|psi><psi|` for a normalized amplitude vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if psi.is_empty() || (norm - 1.0).abs() > 1e-10 {
            return Err(SeaError::InvalidStateVector(format!(
                "norm {norm} differs from 1 by more than 1e-10"
            )));
        }
        Ok(Self(outer(psi, psi)))
    }

    /// `(1 - lambda)|psi><psi| + (lambda / dim) I`.
    pub fn perturbed_pure(psi: &[Complex64], lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(SeaError::InvalidDensityMatrix(format!(
                "mixing weight {lambda} outside [0, 1)"
            )));
        }
        let pure = Self::pure(psi)?;
        let d = psi.len();
        let m = pure.0.scale(1.0 - lambda) + identity(d).scale(lambda / d as f64);
        Ok(Self(m))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(identity(dim).scale(1.0 / dim as f64))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_operator(&self) -> HermitianOperator {
        HermitianOperator(self.0.clone())
    }

    pub fn eigen(&self) -> EigenSystem {
        jacobi_eigen(&self.0)
    }

    /// `<psi| rho |psi>`.
    pub fn expectation_in(&self, psi: &[Complex64]) -> f64 {
        let n = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += psi[i].conj() * self.0[(i, j)] * psi[j];
            }
        }
        acc.re
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.0, &self.0)
    }
}

/// `|a><b|`.
pub fn outer(a: &[Complex64], b: &[Complex64]) -> CMatrix {
    CMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
}

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<Complex64> {
        self.vectors.column(k).iter().copied().collect()
    }

    /// `sum_k f(lambda_k) v_k v_k^H`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        self.map_indexed(|k| f(self.values[k]))
    }

    /// `sum_k w(k) v_k v_k^H`.
    pub fn map_indexed(&self, w: impl Fn(usize) -> f64) -> CMatrix {
        let n = self.dim();
        let mut out = CMatrix::zeros(n, n);
        for k in 0..n {
            let w = w(k);
            if w == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            for i in 0..n {
                let vi = v[i] * w;
                for j in 0..n {
                    out[(i, j)] += vi * v[j].conj();
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map(|x| x)
    }
}

/// Multiplies each column by a unit phase so that its first component with
/// modulus above `1e-12` is real and positive.
pub fn fix_phases(vectors: &mut CMatrix) {
    for k in 0..vectors.ncols() {
        let lead = vectors.column(k).iter().copied().find(|z| z.norm() > 1e-12);
        if let Some(z) = lead {
            let phase = z.conj() / z.norm();
            for i in 0..vectors.nrows() {
                vectors[(i, k)] *= phase;
            }
        }
    }
}

/// Hermitian eigendecomposition with the Hermiticity precondition enforced.
pub fn eig_hermitian(m: &HermitianOperator) -> EigenSystem {
    jacobi_eigen(m.matrix())
}

/// Validates `m` as Hermitian, then decomposes it.
pub fn eig_hermitian_checked(m: &CMatrix) -> Result<EigenSystem> {
    HermitianOperator::new(m.clone()).map(|h| eig_hermitian(&h))
}

fn off_diagonal_sq(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s
}

/// Cyclic complex Jacobi. The input is assumed Hermitian; only its Hermitian
/// part is used.
pub(crate) fn jacobi_eigen(m: &CMatrix) -> EigenSystem {
    let n = m.nrows();
    let mut a = hermitian_part(m);
    let mut w = identity(n);
    let total: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let target = (1e-15_f64).powi(2) * total;

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_sq(&a) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let b = a[(p, q)];
                let bn = b.norm();
                if bn == 0.0 {
                    continue;
                }
                let phase = b / bn;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * bn);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                // U = diag(1, conj(phase)) * [[c, s], [-s, c]]
                let u_pp = c(cs, 0.0);
                let u_pq = c(sn, 0.0);
                let u_qp = phase.conj() * (-sn);
                let u_qq = phase.conj() * cs;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * u_pp + akq * u_qp;
                    a[(k, q)] = akp * u_pq + akq * u_qq;
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = wkp * u_pp + wkq * u_qp;
                    w[(k, q)] = wkp * u_pq + wkq * u_qq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
                    a[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
                }
                a[(p, q)] = c(0.0, 0.0);
                a[(q, p)] = c(0.0, 0.0);
                a[(p, p)] = c(a[(p, p)].re, 0.0);
                a[(q, q)] = c(a[(q, q)].re, 0.0);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep their diagonal order
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::from_fn(n, n, |r, k| w[(r, order[k])]);
    fix_phases(&mut vectors);
    EigenSystem { values, vectors }
}

/// `x ln x` continuously extended by 0 for `x <= 0`.
pub fn xlogx(x: f64) -> f64 {
    if x > EIG_FLOOR {
        x * x.ln()
    } else {
        0.0
    }
}

/// Result of evaluating `rho ln rho` on a matrix that may carry small
/// negative eigenvalues from integration noise.
#[derive(Debug, Clone)]
pub struct RhoLogRho {
    pub value: CMatrix,
    pub eigen: EigenSystem,
    /// Number of eigenvalues below zero that were treated as zero.
    pub clamped: usize,
}

/// `rho ln rho` for any Hermitian matrix, clamping negative eigenvalues.
pub fn rho_log_rho_unchecked(m: &CMatrix) -> RhoLogRho {
    let eigen = jacobi_eigen(m);
    let clamped = eigen.values.iter().filter(|&&x| x < 0.0).count();
    if clamped > 0 {
        log::trace!(
            "rho ln rho: {clamped} negative eigenvalue(s) clamped, min {:.3e}",
            eigen.values[0]
        );
    }
    let value = eigen.map(xlogx);
    RhoLogRho {
        value,
        eigen,
        clamped,
    }
}

/// `rho ln rho` (natural log), never forming `ln rho` itself.
pub fn rho_log_rho(rho: &DensityMatrix) -> HermitianOperator {
    HermitianOperator(rho_log_rho_unchecked(rho.matrix()).value)
}

/// `(A | B) = tr(A B^H + A^H B) / 2`, i.e. `Re tr(A^H B)`.
pub fn real_scalar_product(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += (x.conj() * y).re;
    }
    Ok(acc)
}

/// `[A, B] = AB - BA`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    check_same_dim(a, b)?;
    Ok(a * b - b * a)
}

/// `{A, B} = AB + BA`.
pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    check_same_dim(a, b)?;
    Ok(a * b + b * a)
}

/// Random operators and states for property checks.
pub mod random {
    use super::*;
    use rand::Rng;

    pub fn random_matrix(rng: &mut impl Rng, n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
        hermitian_part(&random_matrix(rng, n))
    }

    pub fn random_unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
        // columns of a Gram-Schmidt orthonormalized random matrix
        let mut m = random_matrix(rng, n);
        for k in 0..n {
            for j in 0..k {
                let proj: Complex64 = (0..n).map(|i| m[(i, j)].conj() * m[(i, k)]).sum();
                for i in 0..n {
                    let v = m[(i, j)];
                    m[(i, k)] -= proj * v;
                }
            }
            let norm = (0..n).map(|i| m[(i, k)].norm_sqr()).sum::<f64>().sqrt();
            for i in 0..n {
                m[(i, k)] /= norm;
            }
        }
        m
    }

    /// `A A^H / tr(A A^H)` for a random complex `A`.
    pub fn random_full_rank_state(rng: &mut impl Rng, n: usize) -> CMatrix {
        let a = random_matrix(rng, n);
        let m = &a * a.adjoint();
        let tr = trace(&m).re;
        hermitian_part(&m.unscale(tr))
    }
}
