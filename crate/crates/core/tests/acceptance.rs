//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p race-dde --test acceptance -- --nocapture` to see
//! the report. Criterion 8 is unattainable as stated (see the decisions
//! ledger); the suite asserts that it fails for the documented reasons, and
//! `criterion_8_strict` is the ignored strict form.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::{E, PI};
use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{dmatrix, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use race_dde::autonomous::{bifurcation_ladder, hill_thresholds, rho_pair, tau_minus, Branch};
use race_dde::criteria::{
    cross_validate, envelope_check, nominal_matrix, ode_lyapunov_check, perturbation_check,
    unit_weight_dominance_check, weighted_dominance_check, AuditWindow, CriterionVerdict, ValidationModel,
};
use race_dde::dde::{decay_rate, integrate, DdeProblem};
use race_dde::hopf::{hopf_coefficients, verify_hopf_by_simulation, HopfSimulationConfig};
use race_dde::model::{ArmamentMatrix, CoefficientSignal, CubicHostility, HistoryFunction, TimeVaryingMatrix};
use race_dde::special::{
    mn_series, s1_closed_form, special_constants, special_solution_check, triangular_check, Norm, SpecialSeriesConfig,
};
use race_dde::Error;

struct Line {
    id: u8,
    pass: bool,
    detail: String,
}

/// Criteria known to be unattainable as stated; they must fail.
const UNATTAINABLE: [u8; 1] = [8];

fn rel_close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * y.abs().max(f64::MIN_POSITIVE)
}

fn worked() -> ArmamentMatrix {
    ArmamentMatrix::new(2.0, 1.0, 3.0, 0.25).unwrap()
}

/// Tail decay rate of `X' = A X(t-τ)` from a constant history; `None` when
/// the trajectory diverges.
fn linear_rate(m: &ArmamentMatrix, tau: f64, steps: usize, delays: f64) -> Option<f64> {
    let [[a11, a12], [a21, a22]] = m.entries();
    let rhs = move |_t: f64, _x: &[f64], xd: &[f64], out: &mut [f64]| {
        out[0] = a11 * xd[0] + a12 * xd[1];
        out[1] = a21 * xd[0] + a22 * xd[1];
    };
    let hist = HistoryFunction::constant(tau, vec![0.1, -0.05]).unwrap();
    let problem = DdeProblem::new(rhs, hist, delays * tau, steps).unwrap();
    match integrate(&problem) {
        Ok(traj) => Some(decay_rate(&traj, 0.5 * delays * tau).unwrap()),
        Err(Error::Diverged { .. }) => None,
        Err(e) => panic!("integration failed: {e}"),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng) -> ArmamentMatrix {
    loop {
        let (a, b) = (rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0));
        let (k, l) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
        let Ok(m) = ArmamentMatrix::new(a, b, k, l) else { continue };
        if m.determinant() > 0.05 * a * b {
            return m;
        }
    }
}

fn criterion_1() -> Line {
    let start = Instant::now();
    let m = worked();
    let (rm, rp) = rho_pair(&m).unwrap();
    let ladder = bifurcation_ladder(&m, 1).unwrap();
    let tau_at = |n: u32, br: Branch| ladder.iter().find(|p| p.n == n && p.branch == br).unwrap();
    let checks = [
        ("det", m.determinant(), 1.25),
        ("rho-", rm, 0.4),
        ("rho+", rp, 2.0),
        ("tau0-", tau_at(0, Branch::Minus).tau, PI / 5.0),
        ("tau0+", tau_at(0, Branch::Plus).tau, PI),
        ("tau1-", tau_at(1, Branch::Minus).tau, PI),
        ("tau1+", tau_at(1, Branch::Plus).tau, 5.0 * PI),
    ];
    let bad: Vec<&str> = checks.iter().filter(|(_, x, y)| !rel_close(*x, *y, 1e-12)).map(|c| c.0).collect();
    let resonance = tau_at(0, Branch::Plus).resonant && tau_at(1, Branch::Minus).resonant;
    let elapsed = start.elapsed();
    Line {
        id: 1,
        pass: bad.is_empty() && resonance && elapsed < Duration::from_secs(1),
        detail: format!("mismatches {bad:?}, resonance at pi flagged {resonance}, {elapsed:.2?}"),
    }
}

/// Sign of the K₂ expression at `v = (1, -1/6)`, written out by hand.
fn k2_sign_oracle(c: &CubicHostility) -> f64 {
    let g = c.g30 - 0.5 * c.g21 + c.g12 / 12.0 - c.g03 / 216.0;
    let h = c.h30 - 0.5 * c.h21 + c.h12 / 12.0 - c.h03 / 216.0;
    (-g + 2.0 * h).signum()
}

fn criterion_2() -> Line {
    let m = worked();
    let point = bifurcation_ladder(&m, 0).unwrap().into_iter().find(|p| p.branch == Branch::Minus).unwrap();
    let base = hopf_coefficients(&m, &CubicHostility::zero(), &point).unwrap();
    let v2_err = (base.v2 + 1.0 / 6.0).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut agree = 0;
    for _ in 0..20 {
        let mut c = CubicHostility::zero();
        for f in [&mut c.g30, &mut c.g21, &mut c.g12, &mut c.g03, &mut c.h30, &mut c.h21, &mut c.h12, &mut c.h03] {
            *f = rng.gen_range(-2.0..2.0);
        }
        let data = hopf_coefficients(&m, &c, &point).unwrap();
        if data.k2.signum() == k2_sign_oracle(&c) {
            agree += 1;
        }
    }
    Line {
        id: 2,
        pass: v2_err <= 1e-14 && agree == 20,
        detail: format!("|v2 + 1/6| = {v2_err:.1e}, K2 sign agreement {agree}/20"),
    }
}

fn criterion_3() -> Line {
    let start = Instant::now();
    let m = worked();
    let (hill, corrected) = hill_thresholds(&m).unwrap();
    let ratio_exact = hill == 3.0 * corrected;
    let tau = 2.0 * corrected;
    let rate = linear_rate(&m, tau, 64, 80.0);
    let non_decaying = rate.is_none_or(|r| r >= -1e-3);
    let elapsed = start.elapsed();
    Line {
        id: 3,
        pass: ratio_exact && non_decaying && elapsed < Duration::from_secs(30),
        detail: format!("ratio exact {ratio_exact}, decay rate at 2 tau- = {rate:?}, {elapsed:.2?}"),
    }
}

fn criterion_4() -> Line {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let matrices: Vec<ArmamentMatrix> = (0..20).map(|_| random_matrix(&mut rng)).collect();
    let results: Vec<(Option<f64>, Option<f64>)> = std::thread::scope(|s| {
        let handles: Vec<_> = matrices
            .iter()
            .map(|m| {
                s.spawn(move || {
                    let t = tau_minus(m).unwrap();
                    (linear_rate(m, 0.9 * t, 64, 80.0), linear_rate(m, 1.1 * t, 64, 80.0))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let failures = results
        .iter()
        .filter(|(below, above)| !(below.is_some_and(|r| r < 0.0) && above.is_none_or(|r| r >= 0.0)))
        .count();
    let worst_below = results.iter().filter_map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let worst_above = results.iter().filter_map(|r| r.1).fold(f64::INFINITY, f64::min);
    let elapsed = start.elapsed();
    Line {
        id: 4,
        pass: failures == 0 && elapsed < Duration::from_secs(120),
        detail: format!(
            "{failures}/20 failures, max rate below {worst_below:.3e}, min rate above {worst_above:.3e}, {elapsed:.2?}"
        ),
    }
}

fn criterion_5() -> Line {
    let m = worked();
    let cubic = CubicHostility { g30: 1.0, ..CubicHostility::zero() };
    assert!(k2_sign_oracle(&cubic) < 0.0);
    let point = bifurcation_ladder(&m, 0).unwrap().into_iter().find(|p| p.branch == Branch::Minus).unwrap();
    let mu = 0.01 * point.tau;
    let report =
        verify_hopf_by_simulation(&m, &cubic, &point, &[mu, 4.0 * mu], &HopfSimulationConfig::default()).unwrap();
    let amps: Vec<Option<f64>> = report.outcomes.iter().map(|o| o.amplitude).collect();
    let ratio = match (amps[0], amps[1]) {
        (Some(lo), Some(hi)) => hi / lo,
        _ => f64::NAN,
    };
    let expected_period = 4.0 * PI / 5.0;
    let period = report.outcomes[0].period.unwrap_or(f64::NAN);
    let period_ok = (period - expected_period).abs() <= 0.05 * expected_period;
    Line {
        id: 5,
        pass: (1.7..=2.3).contains(&ratio) && period_ok,
        detail: format!("amplitude ratio {ratio:.4}, period {period:.4} vs {expected_period:.4}"),
    }
}

fn criterion_6() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut points, mut bad_trans, mut bad_k1) = (0, 0, 0);
    for _ in 0..100 {
        let m = loop {
            let m = random_matrix(&mut rng);
            if m.k() > 0.01 && m.l() > 0.01 && m.discriminant() > 1e-3 {
                break m;
            }
        };
        for p in bifurcation_ladder(&m, 5).unwrap() {
            points += 1;
            if !(p.transversality > 0.0) {
                bad_trans += 1;
            }
            if p.resonant {
                continue;
            }
            let data = hopf_coefficients(&m, &CubicHostility::zero(), &p).unwrap();
            if !(data.k1 > 0.0) {
                bad_k1 += 1;
            }
        }
    }
    Line {
        id: 6,
        pass: bad_trans == 0 && bad_k1 == 0,
        detail: format!("{points} ladder points, nonpositive transversality {bad_trans}, nonpositive K1 {bad_k1}"),
    }
}

/// Direct sum of `S₁(x) = Σ_{n≥1} xⁿ Σ_{k=1}^{n-1} (2ᵏ-1)/k` over 60 terms.
fn s1_series(x: f64) -> f64 {
    let mut inner = 0.0;
    let mut sum = 0.0;
    for n in 1..=60 {
        if n > 1 {
            let k = n - 1;
            inner += (2f64.powi(k) - 1.0) / k as f64;
        }
        sum += x.powi(n) * inner;
    }
    sum
}

fn criterion_7() -> Line {
    let worst_id = [0.05, 0.2, 0.3].iter().map(|&x| (s1_closed_form(x) - s1_series(x)).abs()).fold(0.0, f64::max);
    let grid_max = (1..=1000).map(|i| s1_closed_form(i as f64 / 1001.0 / E)).fold(0.0, f64::max);
    let mut worst_residual: f64 = 0.0;
    for (m, tau) in [(1.0, 0.05), (5.0, 0.05), (2.0, 0.15), (0.3, 1.0)] {
        let c = special_constants(m, tau).unwrap();
        worst_residual = worst_residual.max((m * (-c.lambda0 * tau).exp() + c.lambda0).abs());
    }
    Line {
        id: 7,
        pass: worst_id <= 1e-10 && grid_max < 0.51 && worst_residual < 1e-12,
        detail: format!(
            "closed form vs series {worst_id:.1e}, max S1 on grid {grid_max:.6}, lambda0 residual {worst_residual:.1e}"
        ),
    }
}

/// Solves `M = A·exp(-τM)` by fixed-point iteration: the value the
/// series sums to for constant `A`.
fn lambert_matrix(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let mut m = a.clone();
    for _ in 0..400 {
        m = a * (-(&m * tau)).exp();
    }
    m
}

struct NeumannFindings {
    worst_neumann: f64,
    worst_lambert: f64,
    tail_violations: Vec<(usize, usize)>,
    majorant_violations: usize,
}

fn neumann_findings() -> NeumannFindings {
    let norm = Norm::MaxRowSum;
    let matrices = [dmatrix![-2.0, 3.0; 0.25, -1.0], dmatrix![-1.0, 0.0; 0.0, -1.0], dmatrix![-1.0, 0.5; 0.3, -0.7]];
    let mut f =
        NeumannFindings { worst_neumann: 0.0, worst_lambert: 0.0, tail_violations: vec![], majorant_violations: 0 };
    for (i, a) in matrices.iter().enumerate() {
        let tau = 0.25 / norm.of(a);
        let cfg = SpecialSeriesConfig { order: 20, norm, ..Default::default() };
        let s = mn_series(a, tau, 0.0, &cfg).unwrap();
        let neumann = a * (DMatrix::identity(2, 2) + a * tau).try_inverse().unwrap();
        f.worst_neumann = f.worst_neumann.max(norm.of(&(&s.sum - neumann)));
        f.worst_lambert = f.worst_lambert.max(norm.of(&(&s.sum - lambert_matrix(a, tau))));
        let long = mn_series(a, tau, 0.0, &SpecialSeriesConfig { order: 38, norm, ..Default::default() }).unwrap();
        for n in 4..=19 {
            let r = mn_series(a, tau, 0.0, &SpecialSeriesConfig { order: n, norm, ..Default::default() }).unwrap();
            let change = norm.of(&(&long.partial_sums[2 * n] - &r.sum));
            if r.tail_bound.is_none_or(|b| change > b) {
                f.tail_violations.push((i, n));
            }
            if r.majorant_tail_bound.is_none_or(|b| change > b) {
                f.majorant_violations += 1;
            }
        }
    }
    f
}

fn criterion_8() -> Line {
    let f = neumann_findings();
    Line {
        id: 8,
        pass: f.worst_neumann <= 1e-10 && f.tail_violations.is_empty(),
        detail: format!(
            "sum vs A(I+tau A)^-1 {:.2e}, sum vs fixed point of M = A exp(-tau M) {:.2e}, \
             geometric tail bound violated at (matrix, N) {:?}, majorant violations {}",
            f.worst_neumann, f.worst_lambert, f.tail_violations, f.majorant_violations
        ),
    }
}

fn criterion_9() -> Line {
    let k = CoefficientSignal::constant(0.05).unwrap().into_nonnegative().unwrap();
    let w = AuditWindow::for_delay(0.0, 40.0 * 0.3, 0.3).unwrap();
    let good = triangular_check(1.0, &k, 0.3, &w).unwrap();
    let rate = good.dde_decay_rate.unwrap_or(f64::NAN);
    let w4 = AuditWindow::for_delay(0.0, 40.0 * 0.4, 0.4).unwrap();
    let bad = triangular_check(1.0, &k, 0.4, &w4).unwrap();
    let first_rejects = bad.second_slack.is_none() && bad.first_slack < 0.0 && bad.verdict.holds.as_str() == "no";
    Line {
        id: 9,
        pass: good.verdict.holds.as_str() == "yes" && rate < 0.0 && first_rejects,
        detail: format!(
            "tau 0.3: {} (slacks {:.4}, {:?}), decay rate {rate:.4}; tau 0.4 rejected on first condition {first_rejects}",
            good.verdict.holds.as_str(),
            good.first_slack,
            good.second_slack
        ),
    }
}

fn random_signal(rng: &mut ChaCha8Rng, base: (f64, f64), allow_decay: bool) -> CoefficientSignal {
    let offset = rng.gen_range(base.0..base.1);
    let sig = match rng.gen_range(0..if allow_decay { 3 } else { 2 }) {
        0 => CoefficientSignal::constant(offset),
        1 => CoefficientSignal::sinusoid(
            offset,
            rng.gen_range(0.0..0.5) * offset,
            rng.gen_range(0.2..2.0),
            rng.gen_range(0.0..2.0 * PI),
        ),
        _ => CoefficientSignal::exp_decay(offset, rng.gen_range(0.05..1.0)),
    };
    sig.unwrap().into_nonnegative().unwrap()
}

struct SuiteSummary {
    models: usize,
    yes: usize,
    falsifications: Vec<String>,
}

fn falsification_suite() -> SuiteSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut summary = SuiteSummary { models: 0, yes: 0, falsifications: vec![] };
    for i in 0..50 {
        let decaying_a = rng.gen_bool(0.1);
        let a = random_signal(&mut rng, (0.3, 2.5), decaying_a);
        let b = random_signal(&mut rng, (0.3, 2.5), false);
        let k = random_signal(&mut rng, (0.0, 1.5), true);
        let l = random_signal(&mut rng, (0.0, 1.5), true);
        let m = TimeVaryingMatrix::new(a, b, k, l).unwrap();
        let tau: f64 = rng.gen_range(0.05..0.6);
        let g = random_signal(&mut rng, (0.0, 0.3), true);
        let h = random_signal(&mut rng, (0.0, 0.3), true);
        let w = AuditWindow::for_delay(0.0, (60.0 * tau).max(20.0), tau).unwrap();

        let mut verdicts: Vec<CriterionVerdict> = Vec::new();
        let (u, asy) = ode_lyapunov_check(&m, &w).unwrap();
        verdicts.extend([u, asy]);
        let dom = weighted_dominance_check(&m, tau, None, &w).unwrap();
        verdicts.extend([dom.weighted, dom.scaled]);
        verdicts.push(unit_weight_dominance_check(&m, tau, &w).unwrap());
        let env = envelope_check(&m, tau, &g, &h, &w).unwrap();
        verdicts.extend([env.attractor, env.exponential]);
        if let Ok((nominal, delta)) = nominal_matrix(&m, &w) {
            if let Ok(p) = perturbation_check(&nominal, tau, delta) {
                verdicts.push(p.verdict);
            }
        }
        let special = special_solution_check(&m, tau, &w, &SpecialSeriesConfig::default()).unwrap();
        verdicts.push(special.verdict);

        let model = ValidationModel { matrix: &m, tau, envelopes: Some((&g, &h)) };
        let report = cross_validate(&model, &verdicts, &w, 1000 + i).unwrap();
        summary.models += 1;
        summary.yes += report.entries.len();
        for e in report.entries.iter().filter(|e| e.falsified) {
            summary.falsifications.push(format!("model {i} {}", e.criterion));
        }
    }
    summary
}

fn criterion_10() -> Line {
    let s = falsification_suite();
    Line {
        id: 10,
        pass: s.falsifications.is_empty() && s.models == 50,
        detail: format!("{} models, {} yes verdicts simulated, falsified {:?}", s.models, s.yes, s.falsifications),
    }
}

#[test]
fn acceptance() {
    let runners: [fn() -> Line; 10] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
    ];
    let lines: Vec<Line> = std::thread::scope(|s| {
        let handles: Vec<_> = runners.iter().map(|r| s.spawn(r)).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    // written past the libtest capture so the report shows in plain `cargo test`
    let mut out = std::io::stdout().lock();
    for l in &lines {
        let tag = match (l.pass, UNATTAINABLE.contains(&l.id)) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (unattainable as stated)",
        };
        writeln!(out, "criterion {:>2}: {tag}: {}", l.id, l.detail).unwrap();
    }
    drop(out);
    let unexpected: Vec<u8> = lines.iter().filter(|l| l.pass == UNATTAINABLE.contains(&l.id)).map(|l| l.id).collect();
    assert!(unexpected.is_empty(), "criteria with unexpected outcome: {unexpected:?}");
}

/// Criterion 8 exactly as stated; fails by design.
#[test]
#[ignore = "unattainable as stated: the series sums to the fixed point of M = A exp(-tau M)"]
fn criterion_8_strict() {
    let line = criterion_8();
    assert!(line.pass, "{}", line.detail);
}

/// What criterion 8 does establish: the series sums to the fixed point and
/// the rigorous majorant tail dominates the truncation change.
#[test]
fn series_matches_fixed_point_oracle() {
    let f = neumann_findings();
    assert!(f.worst_lambert < 1e-4, "{}", f.worst_lambert);
    assert_eq!(f.majorant_violations, 0);
    assert!(f.worst_neumann > 1e-2);
}
