//! Self-check of the generator and integrator invariants, run by `sea-dyn verify`.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::algebra::random::{random_full_rank_state, random_hermitian};
use crate::algebra::{c, max_norm, trace, trace_product, CMatrix, DensityMatrix, HermitianOperator};
use crate::dissipator::{dissipator, generator_via_gram, rescaling_residual};
use crate::evolution::{evolve, IntegratorConfig};
use crate::models::{constant_sigma_x, HamiltonianModel};
use crate::thermo::{canonical_state, eigenprojector, eigenstate, restricted_canonical, stationarity_residual};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, bound: f64) -> Check {
    Check {
        name,
        passed: worst.is_finite() && worst <= bound,
        detail: format!("worst {worst:.3e}, bound {bound:.1e}"),
    }
}

fn failed(name: &'static str, err: impl std::fmt::Display) -> Check {
    Check {
        name,
        passed: false,
        detail: err.to_string(),
    }
}

struct Sample {
    rho: DensityMatrix,
    h: HermitianOperator,
}

fn samples(rng: &mut StdRng, count: usize) -> Vec<Sample> {
    (0..count)
        .map(|_| {
            let n = rng.gen_range(2..=4);
            Sample {
                rho: DensityMatrix::new(random_full_rank_state(rng, n)).expect("random states are valid"),
                h: HermitianOperator::new(random_hermitian(rng, n)).expect("random Hermitian"),
            }
        })
        .collect()
}

fn conservation(corpus: &[Sample], gamma: f64) -> Check {
    let mut worst = 0.0_f64;
    for s in corpus {
        match dissipator(&s.rho, &s.h, gamma) {
            Ok(d) => {
                let scale = gamma * max_norm(s.h.matrix()).max(1.0);
                worst = worst.max(trace(d.matrix()).norm() / gamma);
                worst = worst.max(trace_product(d.matrix(), s.h.matrix()).abs() / scale);
            }
            Err(e) => return failed("dissipator conserves trace and energy", e),
        }
    }
    check("dissipator conserves trace and energy", worst, 1e-12)
}

fn entropy_production(corpus: &[Sample], gamma: f64) -> Check {
    let mut worst = 0.0_f64;
    for s in corpus {
        let d = match dissipator(&s.rho, &s.h, gamma) {
            Ok(d) => d,
            Err(e) => return failed("entropy production is non-negative", e),
        };
        let log_rho = s.rho.eigen().map(f64::ln);
        let rate = -trace_product(d.matrix(), &log_rho);
        worst = worst.max(-rate);
    }
    check("entropy production is non-negative", worst, 1e-12)
}

fn gram_agreement(corpus: &[Sample], gamma: f64) -> Check {
    let mut worst = 0.0_f64;
    for s in corpus {
        match (dissipator(&s.rho, &s.h, gamma), generator_via_gram(&s.rho, &s.h, gamma)) {
            (Ok(a), Ok(b)) => worst = worst.max(max_norm(&(a.matrix() - b.matrix()))),
            (Err(e), _) | (_, Err(e)) => return failed("Gram-determinant oracle agrees", e),
        }
    }
    check("Gram-determinant oracle agrees", worst, 1e-10)
}

fn rescaling(corpus: &[Sample], gamma: f64) -> Check {
    let mut worst = 0.0_f64;
    for s in corpus {
        let base = match dissipator(&s.rho, &s.h, gamma) {
            Ok(d) => max_norm(d.matrix()).max(f64::MIN_POSITIVE),
            Err(e) => return failed("dissipator is invariant under H -> sigma H", e),
        };
        for sigma in [0.5, 3.0] {
            match rescaling_residual(&s.rho, &s.h, sigma, gamma) {
                Ok(r) => worst = worst.max(r / base),
                Err(e) => return failed("dissipator is invariant under H -> sigma H", e),
            }
        }
    }
    check("dissipator is invariant under H -> sigma H", worst, 1e-10)
}

fn canonical_stationarity(rng: &mut StdRng, gamma: f64) -> Vec<Check> {
    let (mut full, mut restricted, mut pure) = (0.0_f64, 0.0_f64, 0.0_f64);
    for n in 2..=4 {
        let h = HermitianOperator::new(random_hermitian(rng, n)).expect("random Hermitian");
        let values = h.eigen().values;
        let spread = values[n - 1] - values[0];
        for b in [-1.0, -0.5, 0.0, 0.5, 2.0] {
            let beta = b / spread;
            let omega = match canonical_state(&h, beta) {
                Ok(s) => s.omega,
                Err(e) => return vec![failed("canonical states are stationary", e)],
            };
            match stationarity_residual(&omega, &h, gamma) {
                Ok(r) => full = full.max(r / gamma),
                Err(e) => return vec![failed("canonical states are stationary", e)],
            }
            if n >= 3 {
                for mask in 1..(1u32 << n) - 1 {
                    let levels: Vec<usize> = (0..n).filter(|k| mask & (1 << k) != 0).collect();
                    let p = eigenprojector(&h, &levels);
                    let state = restricted_canonical(&h, &p, beta)
                        .and_then(|s| stationarity_residual(&s.omega, &h, gamma));
                    match state {
                        Ok(r) => restricted = restricted.max(r / gamma),
                        Err(e) => return vec![failed("restricted canonical states are stationary", e)],
                    }
                }
            }
        }
        for level in 0..n {
            match stationarity_residual(&eigenstate(&h, level), &h, gamma) {
                Ok(r) => pure = pure.max(r),
                Err(e) => return vec![failed("energy eigenstates are stationary", e)],
            }
        }
    }
    vec![
        check("canonical states are stationary", full, 1e-10),
        check("restricted canonical states are stationary", restricted, 1e-10),
        check("energy eigenstates are stationary", pure, 1e-12),
    ]
}

fn relaxation_run() -> Vec<Check> {
    let model = HamiltonianModel::static_tss(1.0).expect("valid model");
    let psi = [c(0.7_f64.sqrt(), 0.0), c(0.3_f64.sqrt(), 0.0)];
    let rho0 = DensityMatrix::perturbed_pure(&psi, 1e-2).expect("valid state");
    match evolve(&rho0, &model, 1.0, (0.0, 50.0), &IntegratorConfig::adaptive(0.05)) {
        Ok((record, report)) => {
            let p1 = rho0.matrix()[(0, 0)].re;
            let frozen = record
                .states
                .iter()
                .map(|r| (r.matrix()[(0, 0)].re - p1).abs())
                .fold(0.0, f64::max);
            vec![
                check("static evolution conserves energy", report.energy_drift, 1e-7),
                check("static evolution conserves trace", report.trace_drift, 1e-9),
                check("entropy never decreases", report.entropy_dips as f64, 0.0),
                check("two-level populations stay frozen", frozen, 1e-6),
            ]
        }
        Err(e) => vec![failed("static relaxation run", e)],
    }
}

fn pure_state_run() -> Vec<Check> {
    let omega = 1.0;
    let model = constant_sigma_x(omega);
    let rho0 = DensityMatrix::pure(&[c(1.0, 0.0), c(0.0, 0.0)]).expect("valid state");
    let cfg = IntegratorConfig::adaptive(0.05);
    let sea = evolve(&rho0, &model, 2.0, (0.0, 10.0), &cfg);
    let unitary = evolve(&rho0, &model, 0.0, (0.0, 10.0), &cfg);
    match (sea, unitary) {
        (Ok((a, _)), Ok((b, _))) => {
            let gap = a
                .states
                .iter()
                .zip(&b.states)
                .map(|(x, y)| max_norm(&(x.matrix() - y.matrix())))
                .fold(0.0, f64::max);
            let rabi = b
                .times
                .iter()
                .zip(&b.states)
                .map(|(t, r)| (r.matrix()[(0, 0)].re - (omega * t).cos().powi(2)).abs())
                .fold(0.0, f64::max);
            vec![
                check("pure states evolve unitarily", gap, 1e-9),
                check("Rabi oscillation matches cos^2", rabi, 1e-6),
            ]
        }
        (Err(e), _) | (_, Err(e)) => vec![failed("pure-state runs", e)],
    }
}

fn canonical_run() -> Check {
    let h = HermitianOperator::from_real_diagonal(&[1.0, 0.0]);
    let model = HamiltonianModel::static_tss(1.0).expect("valid model");
    let omega = match canonical_state(&h, -0.8) {
        Ok(s) => s.omega,
        Err(e) => return failed("canonical state stays put under evolution", e),
    };
    match evolve(&omega, &model, 1.0, (0.0, 50.0), &IntegratorConfig::adaptive(0.5)) {
        Ok((record, _)) => {
            let reference: &CMatrix = omega.matrix();
            let worst = record
                .states
                .iter()
                .map(|r| max_norm(&(r.matrix() - reference)))
                .fold(0.0, f64::max);
            check("canonical state stays put under evolution", worst, 1e-8)
        }
        Err(e) => failed("canonical state stays put under evolution", e),
    }
}

/// Runs every check with a fixed seed.
pub fn run_suite() -> Vec<Check> {
    let mut rng = StdRng::seed_from_u64(0x5ea);
    let gamma = 0.7;
    let corpus = samples(&mut rng, 300);
    let mut checks = vec![
        conservation(&corpus, gamma),
        entropy_production(&corpus, gamma),
        gram_agreement(&corpus, gamma),
        rescaling(&corpus, gamma),
    ];
    checks.extend(canonical_stationarity(&mut rng, gamma));
    checks.extend(relaxation_run());
    checks.extend(pure_state_run());
    checks.push(canonical_run());
    checks
}
