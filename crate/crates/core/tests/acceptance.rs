//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use sea_core::algebra::random::{random_full_rank_state, random_hermitian};
use sea_core::algebra::{c, max_norm, trace, trace_product, DensityMatrix, HermitianOperator};
use sea_core::dissipator::{dissipator, generator_via_gram, rescaling_residual};
use sea_core::evolution::{evolve, evolve_unitary, IntegratorConfig};
use sea_core::models::{constant_sigma_x, AdiabaticState, HamiltonianModel};
use sea_core::scenario::{run_scenario, simulate, PresetId, ScenarioConfig, ScenarioTrajectory};
use sea_core::thermo::{
    canonical_state, effective_beta, eigenprojector, eigenstate, restricted_canonical, stationarity_residual,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

type Criterion = fn() -> Result<Outcome, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

struct Corpus {
    states: Vec<DensityMatrix>,
    hamiltonians: Vec<HermitianOperator>,
    rates: Vec<f64>,
}

fn corpus(seed: u64, count: usize, dims: std::ops::RangeInclusive<usize>) -> Corpus {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Corpus {
        states: Vec::with_capacity(count),
        hamiltonians: Vec::with_capacity(count),
        rates: Vec::with_capacity(count),
    };
    for _ in 0..count {
        let n = rng.gen_range(dims.clone());
        out.states.push(DensityMatrix::new(random_full_rank_state(&mut rng, n)).expect("valid state"));
        out.hamiltonians.push(HermitianOperator::new(random_hermitian(&mut rng, n)).expect("Hermitian"));
        out.rates.push(rng.gen_range(0.1..5.0));
    }
    out
}

fn constraint_projection() -> Result<Outcome, String> {
    let started = Instant::now();
    let set = corpus(101, 1000, 2..=4);
    let (mut worst_trace, mut worst_energy) = (0.0_f64, 0.0_f64);
    for ((rho, h), &gamma) in set.states.iter().zip(&set.hamiltonians).zip(&set.rates) {
        let d = dissipator(rho, h, gamma).map_err(err)?;
        let h_scale = max_norm(h.matrix());
        worst_trace = worst_trace.max(trace(d.matrix()).norm() / gamma);
        worst_energy = worst_energy.max(trace_product(d.matrix(), h.matrix()).abs() / (gamma * h_scale));
    }
    let elapsed = started.elapsed();
    Ok(outcome(
        worst_trace <= 1e-12 && worst_energy <= 1e-12 && elapsed < Duration::from_secs(5),
        format!("max |tr D|/gamma {worst_trace:.2e}, max |tr DH|/(gamma |H|) {worst_energy:.2e}, {elapsed:.2?}"),
    ))
}

fn oracle_equivalence() -> Result<Outcome, String> {
    let set = corpus(101, 1000, 2..=4);
    let mut worst = 0.0_f64;
    for ((rho, h), &gamma) in set.states.iter().zip(&set.hamiltonians).zip(&set.rates) {
        let a = dissipator(rho, h, gamma).map_err(err)?;
        let b = generator_via_gram(rho, h, gamma).map_err(err)?;
        worst = worst.max(max_norm(&(a.matrix() - b.matrix())));
    }
    Ok(outcome(worst < 1e-10, format!("max entrywise difference {worst:.2e} over 1000 states")))
}

fn stationarity() -> Result<Outcome, String> {
    let mut rng = StdRng::seed_from_u64(202);
    let (mut canonical, mut projected, mut pure) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut cases = 0;
    for n in 2..=4 {
        for _ in 0..5 {
            let h = HermitianOperator::new(random_hermitian(&mut rng, n)).map_err(err)?;
            let values = h.eigen().values;
            let spread = values[n - 1] - values[0];
            for &gamma in &[0.5, 2.0] {
                for b in [-1.0, -0.5, 0.0, 0.5, 2.0] {
                    let beta = b / spread;
                    let omega = canonical_state(&h, beta).map_err(err)?.omega;
                    let r = stationarity_residual(&omega, &h, gamma).map_err(err)?;
                    canonical = canonical.max(r / gamma);
                    cases += 1;
                    if n >= 3 {
                        for mask in 1..(1u32 << n) {
                            let levels: Vec<usize> = (0..n).filter(|k| mask & (1 << k) != 0).collect();
                            let p = eigenprojector(&h, &levels);
                            let state = restricted_canonical(&h, &p, beta).map_err(err)?.omega;
                            let r = stationarity_residual(&state, &h, gamma).map_err(err)?;
                            projected = projected.max(r / gamma);
                            cases += 1;
                        }
                    }
                }
                for level in 0..n {
                    let state = eigenstate(&h, level);
                    pure = pure.max(stationarity_residual(&state, &h, gamma).map_err(err)?);
                    cases += 1;
                }
            }
        }
    }
    Ok(outcome(
        canonical < 1e-10 && projected < 1e-10 && pure < 1e-12,
        format!("canonical {canonical:.2e}/gamma, projected {projected:.2e}/gamma, eigenstates {pure:.2e} ({cases} cases)"),
    ))
}

fn run_preset(id: PresetId, gamma: Option<f64>) -> Result<(ScenarioConfig, ScenarioTrajectory), String> {
    let mut cfg = id.config();
    if let Some(g) = gamma {
        cfg.gamma = g;
    }
    let model = cfg.model.build().map_err(err)?;
    let run = simulate(&cfg, &model, cfg.gamma, cfg.t_span[1]).map_err(err)?;
    Ok((cfg, run))
}

fn threshold_time(run: &ScenarioTrajectory) -> Option<f64> {
    run.rows.iter().find(|r| r.abs_rho01 < 1e-3).map(|r| r.t)
}

fn population_freezing() -> Result<Outcome, String> {
    let started = Instant::now();
    let (cfg, run) = run_preset(PresetId::Fig1aG025, None)?;
    let lambda = cfg.lambda;
    let p1 = 0.7 * (1.0 - lambda) + lambda / 2.0;
    let drift = run.rows.iter().map(|r| (r.p1 - p1).abs()).fold(0.0, f64::max);
    let reached = threshold_time(&run);

    let mut by_gamma = Vec::new();
    for id in [PresetId::Fig1aG025, PresetId::Fig1aG05, PresetId::Fig1aG25] {
        by_gamma.push(threshold_time(&run_preset(id, None)?.1));
    }
    let mut by_lambda = Vec::new();
    for id in [PresetId::Fig1cL2, PresetId::Fig1cL4, PresetId::Fig1cL6] {
        by_lambda.push(threshold_time(&run_preset(id, None)?.1));
    }
    let strictly = |v: &[Option<f64>], decreasing: bool| {
        v.iter().all(Option::is_some)
            && v.windows(2).all(|w| if decreasing { w[1] < w[0] } else { w[1] > w[0] })
    };
    let elapsed = started.elapsed();
    let passed = drift < 1e-6
        && reached.is_some()
        && strictly(&by_gamma, true)
        && strictly(&by_lambda, false)
        && elapsed < Duration::from_secs(60);
    Ok(outcome(
        passed,
        format!(
            "max |p1 - p1(0)| {drift:.2e}; thresholds vs gamma 0.25/0.5/2.5 {by_gamma:?}; vs lambda 1e-2/1e-4/1e-6 {by_lambda:?}; {elapsed:.2?}"
        ),
    ))
}

fn effective_temperature() -> Result<Outcome, String> {
    let (cfg, run) = run_preset(PresetId::Fig1aG025, None)?;
    let model = cfg.model.build().map_err(err)?;
    let h = model.evaluate(0.0).map_err(err)?;
    let epsilon = 1.0;
    let lambda = cfg.lambda;
    let p1 = 0.7 * (1.0 - lambda) + lambda / 2.0;
    let closed = ((1.0 - p1) / p1).ln() / epsilon;
    let beta = effective_beta(&h, run.rows[0].energy).map_err(err)?;
    let omega = canonical_state(&h, beta).map_err(err)?.omega;
    let last = run.record.final_state().ok_or("empty trajectory")?;
    let distance = max_norm(&(last.matrix() - omega.matrix()));
    Ok(outcome(
        (beta - closed).abs() < 1e-4 && beta < 0.0 && distance < 1e-3,
        format!("beta_eff {beta:.10}, closed form {closed:.10}, |rho(T) - omega| {distance:.2e}"),
    ))
}

fn entropy_monotonicity() -> Result<Outcome, String> {
    let mut runs = Vec::new();
    for id in PresetId::ALL {
        runs.push((id, None));
    }
    for (id, g) in [
        (PresetId::Fig2a, 2.0),
        (PresetId::Fig2b, 2.0),
        (PresetId::Fig3a, 2.0),
        (PresetId::Fig3b, 2.0),
        (PresetId::Fig4, 10.0),
    ] {
        runs.push((id, Some(g)));
    }
    let mut dips = 0;
    let mut worst = 0.0_f64;
    let mut offenders = Vec::new();
    for (id, g) in &runs {
        let (cfg, run) = run_preset(*id, *g)?;
        dips += run.report.entropy_dips;
        worst = worst.max(run.report.max_entropy_dip);
        if run.report.entropy_dips > 0 {
            offenders.push(format!("{id} gamma {}", cfg.gamma));
        }
    }
    Ok(outcome(
        dips == 0,
        format!("{} runs, {dips} dips beyond 1e-9, largest decrease {worst:.2e} {offenders:?}", runs.len()),
    ))
}

fn rescaling_invariance() -> Result<Outcome, String> {
    let set = corpus(303, 100, 2..=2);
    let mut worst = 0.0_f64;
    for ((rho, h), &gamma) in set.states.iter().zip(&set.hamiltonians).zip(&set.rates) {
        let scale = max_norm(dissipator(rho, h, gamma).map_err(err)?.matrix());
        for sigma in [0.5, 3.0] {
            worst = worst.max(rescaling_residual(rho, h, sigma, gamma).map_err(err)? / scale);
        }
    }
    Ok(outcome(worst < 1e-10, format!("max relative change {worst:.2e} over 100 two-level states")))
}

fn fidelity_deviation(id: PresetId, gamma: f64) -> Result<f64, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut cfg = id.config();
    cfg.gamma = gamma;
    cfg.compare_unitary = true;
    cfg.output.path = dir.path().join(format!("{id}.csv"));
    let summary = run_scenario(&cfg).map_err(err)?;
    summary
        .unitary
        .map(|u| u.max_fidelity_deviation)
        .ok_or_else(|| "no unitary comparison".to_string())
}

fn adiabatic_robustness() -> Result<Outcome, String> {
    let started = Instant::now();
    let cfg = PresetId::Fig2b.config();
    let period = match cfg.model {
        sea_core::scenario::ModelSpec::RotatingField { frequency, .. } => 2.0 * PI / frequency,
        _ => return Err("fig2b is not a rotating field".into()),
    };
    let covers = (cfg.t_span[1] - cfg.t_span[0] - period).abs() < 1e-9;
    let mut devs = Vec::new();
    for gamma in [0.5, 2.0] {
        devs.push(fidelity_deviation(PresetId::Fig2b, gamma)?);
    }
    let elapsed = started.elapsed();
    Ok(outcome(
        covers && devs.iter().all(|&d| d < 0.05) && elapsed < Duration::from_secs(60),
        format!(
            "max |F_sea - F_unitary| for gamma 0.5, 2: {} over [0, {period:.1}], {elapsed:.2?}",
            sci(&devs)
        ),
    ))
}

fn robustness_breakdown() -> Result<Outcome, String> {
    let mut rows = Vec::new();
    let mut passed = true;
    for id in [PresetId::Fig3a, PresetId::Fig3b] {
        for gamma in [0.5, 2.0] {
            let d = fidelity_deviation(id, gamma)?;
            passed &= d > 0.1;
            rows.push(format!("{id} gamma {gamma}: {d:.3}"));
        }
    }
    Ok(outcome(passed, rows.join(", ")))
}

fn landau_zener() -> Result<Outcome, String> {
    let started = Instant::now();
    let mut curves = Vec::new();
    let mut finals = Vec::new();
    for gamma in [0.0, 1.0, 10.0] {
        let (_, run) = run_preset(PresetId::Fig4, Some(gamma))?;
        let f: Vec<f64> = run.rows.iter().map(|r| r.fidelity).collect();
        finals.push(*f.last().ok_or("empty trajectory")?);
        curves.push(f);
    }
    let mut separation = 0.0_f64;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if curves[i].len() != curves[j].len() {
            return Err("trajectories are on different grids".into());
        }
        let d = curves[i].iter().zip(&curves[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        separation = separation.max(d);
    }
    let elapsed = started.elapsed();
    Ok(outcome(
        finals.iter().all(|&f| f < 0.05) && separation < 0.05 && elapsed < Duration::from_secs(120),
        format!(
            "F(T) for gamma 0/1/10: {}; max pairwise separation {separation:.3e}; {elapsed:.2?}",
            sci(&finals)
        ),
    ))
}

fn integrator_order() -> Result<Outcome, String> {
    let omega = 1.0;
    let model = constant_sigma_x(omega);
    let rho0 = DensityMatrix::pure(&[c(1.0, 0.0), c(0.0, 0.0)]).map_err(err)?;
    let mut errors = Vec::new();
    for dt in [0.2, 0.1, 0.05, 0.025] {
        let record = evolve_unitary(&rho0, &model, (0.0, 10.0), &IntegratorConfig::rk4(dt)).map_err(err)?;
        let e = record
            .times
            .iter()
            .zip(&record.states)
            .map(|(t, rho)| (rho.matrix()[(0, 0)].re - (omega * t).cos().powi(2)).abs())
            .fold(0.0, f64::max);
        errors.push(e);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(outcome(
        ratios.iter().all(|r| (r - 16.0).abs() <= 0.2 * 16.0),
        format!("max errors {}, ratios {ratios:.2?}", sci(&errors)),
    ))
}

fn pure_state_unitarity() -> Result<Outcome, String> {
    let cfg = IntegratorConfig::adaptive(0.05);
    let models = [
        (HamiltonianModel::static_tss(1.0).map_err(err)?, (0.0, 20.0)),
        (HamiltonianModel::rotating_field(1.0, 2.0 * PI / 10.0).map_err(err)?, (0.0, 20.0)),
        (HamiltonianModel::landau_zener(0.1, 1.0, 20.0).map_err(err)?, (-20.0, 20.0)),
    ];
    let states = [
        vec![c(0.7_f64.sqrt(), 0.0), c(0.3_f64.sqrt(), 0.0)],
        vec![c(0.6, 0.0), c(0.0, 0.8)],
        vec![c(0.0, 0.0), c(1.0, 0.0)],
    ];
    let mut worst = 0.0_f64;
    let mut runs = 0;
    for (model, span) in &models {
        for psi in &states {
            let rho0 = DensityMatrix::perturbed_pure(psi, 0.0).map_err(err)?;
            let reference = evolve_unitary(&rho0, model, *span, &cfg).map_err(err)?;
            for gamma in [0.25, 1.0, 10.0] {
                let (record, _) = evolve(&rho0, model, gamma, *span, &cfg).map_err(err)?;
                if record.len() != reference.len() {
                    return Err("trajectories are on different grids".into());
                }
                for (a, b) in record.states.iter().zip(&reference.states) {
                    worst = worst.max(max_norm(&(a.matrix() - b.matrix())));
                }
                runs += 1;
            }
        }
    }
    Ok(outcome(worst < 1e-9, format!("max |rho_sea - rho_unitary| {worst:.2e} over {runs} runs")))
}

fn adiabatic_diagnostic() -> Result<Outcome, String> {
    let omega_field = 2.0 * PI / 1000.0;
    let period = 2.0 * PI / omega_field;
    let model = HamiltonianModel::rotating_field(1.0, omega_field).map_err(err)?;
    let steps = 20_000;
    let dt = period / steps as f64;
    let mut state = AdiabaticState::new(0.0, vec![c(0.0, 0.0), c(1.0, 0.0)]);
    let mut norm_error = 0.0_f64;
    for k in 0..steps {
        let step = if k + 1 == steps { period - state.t } else { dt };
        state = model.adiabatic_coefficient_step(&state, step).map_err(err)?;
        norm_error = norm_error.max((state.norm_sqr() - 1.0).abs());
    }
    let survival = state.populations()[1];

    let plus = model.instantaneous_eigensystem(0.0).map_err(err)?.vector(1);
    let rho0 = DensityMatrix::pure(&plus).map_err(err)?;
    let cfg = IntegratorConfig {
        rel_tol: 1e-10,
        abs_tol: 1e-12,
        ..IntegratorConfig::adaptive(1.0)
    };
    let record = evolve_unitary(&rho0, &model, (0.0, period), &cfg).map_err(err)?;
    let basis = model.instantaneous_eigensystem(period).map_err(err)?;
    let upper: Vec<Complex64> = basis.vector(1);
    let full = record.final_state().ok_or("empty trajectory")?.expectation_in(&upper);
    let gap = (survival - full).abs();
    Ok(outcome(
        norm_error <= 1e-8 && survival >= 0.999 && gap <= 1e-3,
        format!("norm error {norm_error:.2e}, survival {survival:.6}, full integration {full:.6}, gap {gap:.2e}"),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 13] = [
        ("constraint projection", constraint_projection),
        ("Gram-oracle equivalence", oracle_equivalence),
        ("stationarity", stationarity),
        ("population freezing", population_freezing),
        ("effective temperature", effective_temperature),
        ("entropy monotonicity", entropy_monotonicity),
        ("rescaling invariance", rescaling_invariance),
        ("adiabatic robustness", adiabatic_robustness),
        ("robustness breakdown", robustness_breakdown),
        ("Landau-Zener sweep", landau_zener),
        ("integrator order", integrator_order),
        ("pure-state unitarity", pure_state_unitarity),
        ("adiabatic coefficient ODE", adiabatic_diagnostic),
    ];
    let mut failures = 0;
    for (k, (name, criterion)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = criterion();
        let elapsed = started.elapsed();
        match result {
            Ok(o) => {
                failures += usize::from(!o.passed);
                println!(
                    "[{}] {:>2} {name}: {} ({elapsed:.2?})",
                    if o.passed { "PASS" } else { "FAIL" },
                    k + 1,
                    o.detail
                );
            }
            Err(e) => {
                failures += 1;
                println!("[FAIL] {:>2} {name}: error: {e}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
