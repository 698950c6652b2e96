//! The steepest-entropy-ascent generator.
//!
//! For a state `rho` and Hamiltonian `H` the master equation reads
//!
//! ```text
//! d rho/dt = -i[H, rho] - gamma (rho ln rho - mu rho + nu {rho, H})
//! mu = (s <H^2> - <H> <ln rho H>) / sigma^2
//! nu = (s <H> - <ln rho H>) / (2 sigma^2)
//! ```
//!
//! with `s = tr(rho ln rho)`, `<X> = tr(rho X)` and `sigma^2 = <H^2> - <H>^2`.
//! Every trace is taken through `rho ln rho`, which stays finite on
//! rank-deficient states, so the main path never forms `ln rho`.
//!
//! The dissipator is assembled with the Hamiltonian centred at its mean,
//! `K = H - <H>`, which is algebraically identical (`mu - 2 nu <H> = s`) and
//! keeps the two conservation traces at rounding level even when the
//! spectrum carries a large offset.
//!
//! [`generator_via_gram`] rebuilds the same dissipator from the Gram
//! determinant projection of `-ln rho` onto the orthogonal complement of
//! `{I, H}` in the `rho`-weighted scalar product; it is kept as an
//! independent cross-check.

use num_complex::Complex64;

use crate::algebra::{
    hermitian_part, identity, jacobi_eigen, max_norm, real_scalar_product, rho_log_rho_unchecked,
    trace, trace_product, xlogx, CMatrix, DensityMatrix, HermitianOperator, EIG_FLOOR,
};
use crate::error::{Result, SeaError};

/// Relative threshold below which the energy variance counts as zero.
pub const DEGENERATE_VARIANCE_TOL: f64 = 1e-12;

/// Scalar functionals of the generator at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeaCoefficients {
    /// `tr(rho ln rho)`; the negative of the von Neumann entropy.
    pub s: f64,
    pub mu: f64,
    pub nu: f64,
    pub sigma2: f64,
    pub mean_h: f64,
    pub mean_h2: f64,
    pub mean_logrho_h: f64,
}

impl SeaCoefficients {
    /// True when `sigma^2 < 1e-12 * max(1, <H^2>)`: the state lives in a
    /// single energy eigenspace and the energy row of the projection is dropped.
    pub fn is_degenerate(&self) -> bool {
        self.sigma2 < DEGENERATE_VARIANCE_TOL * self.mean_h2.max(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    pub rhs: HermitianOperator,
    pub unitary_part: HermitianOperator,
    pub dissipator_part: HermitianOperator,
    pub coeffs: SeaCoefficients,
    pub degenerate_constraint_flag: bool,
}

fn check_dims(rho: &CMatrix, h: &CMatrix) -> Result<()> {
    if rho.nrows() != h.nrows() {
        return Err(SeaError::DimensionMismatch {
            left: rho.nrows(),
            right: h.nrows(),
        });
    }
    Ok(())
}

fn check_rate(gamma: f64) -> Result<()> {
    if gamma < 0.0 || gamma.is_nan() {
        return Err(SeaError::NegativeRate(gamma));
    }
    Ok(())
}

fn centred(h: &CMatrix, mean: f64) -> CMatrix {
    h - identity(h.nrows()).scale(mean)
}

/// Coefficients given a precomputed `G = rho ln rho`.
fn coefficients_from(rho: &CMatrix, h: &CMatrix, g: &CMatrix) -> SeaCoefficients {
    let s = trace(g).re;
    let mean_h = trace_product(rho, h);
    let h2 = h * h;
    let mean_h2 = trace_product(rho, &h2);
    let mean_logrho_h = trace_product(g, h);
    let k = centred(h, mean_h);
    let sigma2 = trace_product(rho, &(&k * &k)).max(0.0);

    let mut coeffs = SeaCoefficients {
        s,
        mu: s,
        nu: 0.0,
        sigma2,
        mean_h,
        mean_h2,
        mean_logrho_h,
    };
    if !coeffs.is_degenerate() {
        coeffs.mu = (s * mean_h2 - mean_h * mean_logrho_h) / sigma2;
        coeffs.nu = (s * mean_h - mean_logrho_h) / (2.0 * sigma2);
    }
    coeffs
}

/// The scalar functionals `s, mu, nu, sigma^2` and the expectations they
/// are built from. On a degenerate state `mu = s` and `nu = 0`, the values
/// used by the degenerate branch of [`dissipator`].
pub fn sea_coefficients(rho: &DensityMatrix, h: &HermitianOperator) -> Result<SeaCoefficients> {
    check_dims(rho.matrix(), h.matrix())?;
    let g = rho_log_rho_unchecked(rho.matrix()).value;
    Ok(coefficients_from(rho.matrix(), h.matrix(), &g))
}

/// Dissipator on a raw matrix; shared by the validated API and the
/// integrator, whose stage states are not revalidated.
#[derive(Debug, Clone)]
pub(crate) struct RawDissipator {
    pub value: CMatrix,
    pub coeffs: SeaCoefficients,
    pub degenerate: bool,
}

pub(crate) fn dissipator_raw(rho: &CMatrix, h: &CMatrix, gamma: f64) -> RawDissipator {
    dissipator_on_support(rho, h, gamma, 0)
}

/// Dissipator with the `null` lowest eigenvalues of `rho` treated as exact
/// zeros in `rho ln rho`.
///
/// The flow never lifts a zero eigenvalue, but Runge-Kutta stage states sit
/// off the rank-deficient manifold by O(h^2) and the infinite slope of
/// `x ln x` at zero would turn that offset into real drift.
pub(crate) fn dissipator_on_support(rho: &CMatrix, h: &CMatrix, gamma: f64, null: usize) -> RawDissipator {
    let eigen = jacobi_eigen(rho);
    let g = eigen.map_indexed(|k| if k < null { 0.0 } else { xlogx(eigen.values[k]) });
    let coeffs = coefficients_from(rho, h, &g);
    let degenerate = coeffs.is_degenerate();

    let mut inner = &g - rho.scale(coeffs.s);
    if !degenerate {
        let k = centred(h, coeffs.mean_h);
        let nu = -trace_product(&g, &k) / (2.0 * coeffs.sigma2);
        inner += (rho * &k + &k * rho).scale(nu);
    }
    let value = hermitian_part(&inner.scale(-gamma));
    RawDissipator {
        value,
        coeffs,
        degenerate,
    }
}

/// `D(rho) = -gamma (rho ln rho - mu rho + nu {rho, H})`.
///
/// When the energy variance is degenerate the energy constraint is dropped
/// and `D = -gamma (rho ln rho - s rho)`.
pub fn dissipator(rho: &DensityMatrix, h: &HermitianOperator, gamma: f64) -> Result<HermitianOperator> {
    check_dims(rho.matrix(), h.matrix())?;
    check_rate(gamma)?;
    Ok(HermitianOperator::from_hermitian_part(
        &dissipator_raw(rho.matrix(), h.matrix(), gamma).value,
    ))
}

/// `-i[H, rho]`.
pub(crate) fn unitary_raw(rho: &CMatrix, h: &CMatrix) -> CMatrix {
    (h * rho - rho * h) * Complex64::new(0.0, -1.0)
}

/// Full right-hand side `-i[H(t), rho] + D(rho)` for the instantaneous
/// Hamiltonian `h_t`.
pub fn master_rhs(rho: &DensityMatrix, h_t: &HermitianOperator, gamma: f64) -> Result<GeneratorOutput> {
    check_dims(rho.matrix(), h_t.matrix())?;
    check_rate(gamma)?;
    let unitary = hermitian_part(&unitary_raw(rho.matrix(), h_t.matrix()));
    let diss = dissipator_raw(rho.matrix(), h_t.matrix(), gamma);
    let rhs = &unitary + &diss.value;
    Ok(GeneratorOutput {
        rhs: HermitianOperator::from_hermitian_part(&rhs),
        unitary_part: HermitianOperator::from_hermitian_part(&unitary),
        dissipator_part: HermitianOperator::from_hermitian_part(&diss.value),
        coeffs: diss.coeffs,
        degenerate_constraint_flag: diss.degenerate,
    })
}

/// Dissipator rebuilt from the Gram-determinant projection.
///
/// The projected direction is
///
/// ```text
///       | -ln rho          I          H        |
/// E  =  | (I|-ln rho)_r    (I|I)_r    (I|H)_r  |  /  | (I|I)_r  (I|H)_r |
///       | (H|-ln rho)_r    (H|I)_r    (H|H)_r  |     | (H|I)_r  (H|H)_r |
/// ```
///
/// with `(X|Y)_r = (sqrt(rho) X | sqrt(rho) Y)`, expanded along the operator
/// row. The non-unitary generator is `E_D = (gamma / 2) E` and the returned
/// operator is `rho E_D + E_D^H rho`.
///
/// Requires a full-rank state (the bare logarithm appears) and a
/// non-degenerate energy variance.
pub fn generator_via_gram(rho: &DensityMatrix, h: &HermitianOperator, gamma: f64) -> Result<HermitianOperator> {
    check_dims(rho.matrix(), h.matrix())?;
    check_rate(gamma)?;
    let n = rho.dim();
    let eig = rho.eigen();
    let rank = eig.values.iter().filter(|&&x| x > EIG_FLOOR).count();
    if rank < n {
        return Err(SeaError::RankDeficient { rank, dim: n });
    }
    let sqrt_rho = eig.map(f64::sqrt);
    let neg_log = eig.map(|x| -x.ln());
    let id = identity(n);
    let hm = h.matrix();

    let weighted = |x: &CMatrix, y: &CMatrix| -> Result<f64> {
        real_scalar_product(&(&sqrt_rho * x), &(&sqrt_rho * y))
    };
    let g_ii = weighted(&id, &id)?;
    let g_ih = weighted(&id, hm)?;
    let g_hi = weighted(hm, &id)?;
    let g_hh = weighted(hm, hm)?;
    let y_i = weighted(&id, &neg_log)?;
    let y_h = weighted(hm, &neg_log)?;

    let m11 = g_ii * g_hh - g_ih * g_hi;
    if m11 < DEGENERATE_VARIANCE_TOL * g_hh.max(1.0) * g_ii {
        return Err(SeaError::DegenerateVariance { sigma2: m11 / g_ii });
    }
    let m12 = y_i * g_hh - g_ih * y_h;
    let m13 = y_i * g_hi - g_ii * y_h;

    let e = (neg_log.scale(m11) - id.scale(m12) + hm.scale(m13)).unscale(m11);
    let e_d = e.scale(gamma / 2.0);
    let out = rho.matrix() * &e_d + e_d.adjoint() * rho.matrix();
    Ok(HermitianOperator::from_hermitian_part(&out))
}

/// `max|D(rho, sigma H) - D(rho, H)|`.
pub fn rescaling_residual(rho: &DensityMatrix, h: &HermitianOperator, sigma: f64, gamma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(SeaError::NonPositiveScale(sigma));
    }
    let base = dissipator(rho, h, gamma)?;
    let scaled = dissipator(rho, &h.scaled(sigma), gamma)?;
    Ok(max_norm(&(scaled.matrix() - base.matrix())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::random::*;
    use crate::algebra::{c, diag_real, pauli_x};
    use crate::thermo::{canonical_state, restricted_canonical};
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::LN_2;

    fn h2(eps: f64) -> HermitianOperator {
        HermitianOperator::from_real_diagonal(&[eps, 0.0])
    }

    fn fig1_state(lambda: f64) -> DensityMatrix {
        DensityMatrix::perturbed_pure(&[c(0.7_f64.sqrt(), 0.0), c(0.3_f64.sqrt(), 0.0)], lambda).unwrap()
    }

    fn random_state(rng: &mut StdRng, n: usize) -> DensityMatrix {
        DensityMatrix::new(random_full_rank_state(rng, n)).unwrap()
    }

    #[test]
    fn pure_state_coefficients_vanish() {
        let rho = DensityMatrix::pure(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let k = sea_coefficients(&rho, &h2(1.3)).unwrap();
        assert!(k.sigma2 > 0.0);
        assert_abs_diff_eq!(k.s, 0.0);
        assert_abs_diff_eq!(k.mu, 0.0);
        assert_abs_diff_eq!(k.nu, 0.0);
    }

    #[test]
    fn maximally_mixed_coefficients() {
        let eps = 2.0;
        let k = sea_coefficients(&DensityMatrix::maximally_mixed(2), &h2(eps)).unwrap();
        assert_abs_diff_eq!(k.mu, -LN_2, epsilon = 1e-14);
        assert_abs_diff_eq!(k.nu, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.sigma2, eps * eps / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn diagonal_state_nu_is_half_inverse_temperature() {
        // symbolic: nu = (p1 ln p1 + p0 ln p0 - ln p1) / (2 eps p0) = ln(p0/p1) / (2 eps)
        for &(p1, eps) in &[(0.7, 1.0), (0.2, 3.0), (0.55, 0.4)] {
            let p0 = 1.0 - p1;
            let rho = DensityMatrix::new(diag_real(&[p1, p0])).unwrap();
            let k = sea_coefficients(&rho, &h2(eps)).unwrap();
            assert_abs_diff_eq!(k.nu, (p0 / p1).ln() / (2.0 * eps), epsilon = 1e-13);
            let invariant = k.mean_h2 - k.mean_h * k.mean_h;
            assert_abs_diff_eq!(k.sigma2, invariant, epsilon = 1e-12);
            assert!(k.s <= 0.0);
        }
    }

    #[test]
    fn canonical_states_are_fixed_points() {
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.gen_range(2..=4);
            let h = HermitianOperator::new(random_hermitian(&mut rng, n)).unwrap();
            let beta = rng.gen_range(-3.0..3.0);
            let omega = canonical_state(&h, beta).unwrap().omega;
            let d = dissipator(&omega, &h, 1.0).unwrap();
            assert!(max_norm(d.matrix()) < 1e-12, "{}", max_norm(d.matrix()));
        }
    }

    #[test]
    fn diagonal_two_level_states_are_fixed_points() {
        for &p1 in &[0.01, 0.3, 0.5, 0.9] {
            let rho = DensityMatrix::new(diag_real(&[p1, 1.0 - p1])).unwrap();
            let d = dissipator(&rho, &h2(1.0), 0.7).unwrap();
            assert!(max_norm(d.matrix()) < 1e-14);
        }
    }

    #[test]
    fn fig1_initial_state_only_moves_coherence() {
        let rho = fig1_state(1e-4);
        let d = dissipator(&rho, &h2(1.0), 0.25).unwrap();
        let m = d.matrix();
        let off = m[(0, 1)].norm();
        assert!(off > 1e-6);
        assert!(m[(0, 0)].norm() < 1e-12 * off);
        assert!(m[(1, 1)].norm() < 1e-12 * off);
    }

    #[test]
    fn negative_rate_rejected() {
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(matches!(dissipator(&rho, &h2(1.0), -0.1), Err(SeaError::NegativeRate(_))));
    }

    #[test]
    fn pure_state_rhs_is_unitary() {
        let rho = DensityMatrix::pure(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let h = HermitianOperator::new(pauli_x().scale(0.9) + diag_real(&[0.3, -0.1])).unwrap();
        let out = master_rhs(&rho, &h, 5.0).unwrap();
        let expected = unitary_raw(rho.matrix(), h.matrix());
        assert!(max_norm(&(out.rhs.matrix() - expected)) < 1e-15);
        assert!(max_norm(out.dissipator_part.matrix()) == 0.0);
    }

    #[test]
    fn rhs_splits_into_parts_and_is_hermitian() {
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..100 {
            let n = rng.gen_range(2..=4);
            let rho = random_state(&mut rng, n);
            let h = HermitianOperator::new(random_hermitian(&mut rng, n)).unwrap();
            let out = master_rhs(&rho, &h, 1.3).unwrap();
            let sum = out.unitary_part.matrix() + out.dissipator_part.matrix();
            let scale = max_norm(out.rhs.matrix()).max(1e-300);
            assert!(max_norm(&(sum - out.rhs.matrix())) <= 1e-14 * scale);
            let r = out.rhs.matrix();
            assert!(max_norm(&(r - r.adjoint())) <= 1e-13 * scale);
            let tr = trace(r).re.abs();
            let e = trace_product(r, h.matrix()).abs();
            let hs = max_norm(h.matrix());
            assert!(tr < 1e-12 * 1.3 * hs.max(1.0));
            assert!(e < 1e-12 * 1.3 * hs.max(1.0) * hs.max(1.0));
        }
    }

    #[test]
    fn conservation_and_entropy_ascent_on_random_corpus() {
        let mut rng = StdRng::seed_from_u64(1234);
        for _ in 0..1000 {
            let n = rng.gen_range(2..=4);
            let rho = random_state(&mut rng, n);
            let h = HermitianOperator::new(random_hermitian(&mut rng, n)).unwrap();
            let gamma = rng.gen_range(0.1..3.0);
            let d = dissipator(&rho, &h, gamma).unwrap();
            let hn = max_norm(h.matrix());
            let rn = max_norm(rho.matrix());
            assert!(trace(d.matrix()).re.abs() <= 1e-12 * gamma * rn.max(1.0));
            assert!(trace_product(d.matrix(), h.matrix()).abs() <= 1e-12 * gamma * hn * hn);
            let eig = rho.eigen();
            let log_plus_id = eig.map(|x| x.ln() + 1.0);
            assert!(trace_product(d.matrix(), &log_plus_id) <= 1e-12);
        }
    }

    #[test]
    fn gram_oracle_matches_dissipator() {
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..500 {
            let n = rng.gen_range(2..=4);
            let rho = random_state(&mut rng, n);
            let h = HermitianOperator::new(random_hermitian(&mut rng, n)).unwrap();
            let a = dissipator(&rho, &h, 0.8).unwrap();
            let b = generator_via_gram(&rho, &h, 0.8).unwrap();
            assert!(max_norm(&(a.matrix() - b.matrix())) < 1e-10);
        }
    }

    #[test]
    fn gram_oracle_vanishes_on_canonical_states() {
        let h = h2(1.0);
        let omega = canonical_state(&h, -0.6).unwrap().omega;
        let g = generator_via_gram(&omega, &h, 1.0).unwrap();
        assert!(max_norm(g.matrix()) < 1e-14);
        let g = generator_via_gram(&DensityMatrix::maximally_mixed(2), &h, 1.0).unwrap();
        assert!(max_norm(g.matrix()) < 1e-15);
    }

    #[test]
    fn gram_oracle_refuses_rank_deficient_and_degenerate() {
        let h = h2(1.0);
        let pure = DensityMatrix::pure(&[c(0.6, 0.0), c(0.8, 0.0)]).unwrap();
        assert!(matches!(
            generator_via_gram(&pure, &h, 1.0),
            Err(SeaError::RankDeficient { rank: 1, dim: 2 })
        ));
        let flat = HermitianOperator::from_real_diagonal(&[2.0, 2.0]);
        assert!(matches!(
            generator_via_gram(&fig1_state(1e-2), &flat, 1.0),
            Err(SeaError::DegenerateVariance { .. })
        ));
    }

    #[test]
    fn degenerate_branch_sets_flag_and_conserves_trace() {
        let flat = HermitianOperator::from_real_diagonal(&[2.0, 2.0]);
        let rho = fig1_state(1e-2);
        let out = master_rhs(&rho, &flat, 1.0).unwrap();
        assert!(out.degenerate_constraint_flag);
        assert!(trace(out.dissipator_part.matrix()).re.abs() < 1e-15);
        assert!(max_norm(out.dissipator_part.matrix()) > 1e-3);

        let eigenstate = DensityMatrix::new(diag_real(&[0.0, 1.0])).unwrap();
        let out = master_rhs(&eigenstate, &h2(1.0), 1.0).unwrap();
        assert!(out.degenerate_constraint_flag);
        assert!(max_norm(out.rhs.matrix()) < 1e-15);
    }

    #[test]
    fn two_level_populations_are_frozen() {
        let mut rng = StdRng::seed_from_u64(77);
        for _ in 0..200 {
            let rho = random_state(&mut rng, 2);
            let eps = rng.gen_range(0.1..5.0);
            let d = dissipator(&rho, &h2(eps), 1.0).unwrap();
            assert!(d.matrix()[(0, 0)].norm() <= 1e-12);
            assert!(d.matrix()[(1, 1)].norm() <= 1e-12);
        }
    }

    #[test]
    fn projected_canonical_states_are_stationary() {
        let mut rng = StdRng::seed_from_u64(5);
        for n in 3..=4 {
            for _ in 0..10 {
                let levels: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let u = random_unitary(&mut rng, n);
                let h = HermitianOperator::from_hermitian_part(&(&u * diag_real(&levels) * u.adjoint()));
                for mask in 1..(1u32 << n) {
                    let mut proj = CMatrix::zeros(n, n);
                    for k in 0..n {
                        if mask & (1 << k) != 0 {
                            let v = u.column(k);
                            proj += &v * v.adjoint();
                        }
                    }
                    let proj = hermitian_part(&proj);
                    let beta = rng.gen_range(-1.5..1.5);
                    let st = restricted_canonical(&h, &proj, beta).unwrap();
                    let out = master_rhs(&st.omega, &h, 1.0).unwrap();
                    assert!(max_norm(out.rhs.matrix()) < 1e-10, "mask {mask}");
                }
            }
        }
    }

    #[test]
    fn rescaling_invariance() {
        let rho = fig1_state(1e-4);
        let h = h2(1.0);
        assert_eq!(rescaling_residual(&rho, &h, 1.0, 0.25).unwrap(), 0.0);
        let base = max_norm(dissipator(&rho, &h, 0.25).unwrap().matrix());
        assert!(rescaling_residual(&rho, &h, 0.5, 0.25).unwrap() < 1e-10 * base);

        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..50 {
            let rho = random_state(&mut rng, 2);
            let h = HermitianOperator::new(random_hermitian(&mut rng, 2)).unwrap();
            let base = max_norm(dissipator(&rho, &h, 1.0).unwrap().matrix());
            assert!(rescaling_residual(&rho, &h, 3.0, 1.0).unwrap() < 1e-10 * base);
        }
        assert!(matches!(
            rescaling_residual(&rho, &h, 0.0, 1.0),
            Err(SeaError::NonPositiveScale(_))
        ));
    }
}
