//! Reduction of `x'(t) = A(t)x(t-τ)` to the ODE `x' = M(t)x` through
//! special solutions, with `M(t) = Σ Mₙ(t,t)` and the recursion
//! `M₀(t,s) = A(s)`, `Mₙ₊₁(t,s) = -A(s)∫_{s-τ}^t Mₙ(t,u) du`.

use std::f64::consts::E;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::criteria::{AuditWindow, Criterion, CriterionVerdict, Holds};
use crate::dde::{decay_rate, integrate, DdeProblem};
use crate::error::{Error, Result};
use crate::model::{CoefficientSignal, HistoryFunction, MatrixFunction, SignalMatrix};

/// Slow-variation threshold: the final-tail variation must stay below this
/// fraction of `m`.
pub const SLOW_VARIATION_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norm {
    #[default]
    MaxRowSum,
    MaxColumnSum,
    /// Largest singular value.
    Euclidean,
}

impl Norm {
    pub fn of(&self, m: &DMatrix<f64>) -> f64 {
        match self {
            Norm::MaxRowSum => m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max),
            Norm::MaxColumnSum => m.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max),
            Norm::Euclidean => {
                if m.is_empty() {
                    0.0
                } else {
                    m.clone().svd(false, false).singular_values.max()
                }
            }
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-row-sum" => Ok(Norm::MaxRowSum),
            "max-column-sum" => Ok(Norm::MaxColumnSum),
            "euclidean" | "euclidean-operator" => Ok(Norm::Euclidean),
            other => Err(Error::InvalidProblem(format!("unknown norm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecialSeriesConfig {
    /// Truncation order `N`.
    pub order: usize,
    /// Simpson panels per delay (even).
    pub panels: usize,
    #[serde(default)]
    pub norm: Norm,
}

impl Default for SpecialSeriesConfig {
    fn default() -> Self {
        Self { order: 20, panels: 64, norm: Norm::MaxRowSum }
    }
}

impl SpecialSeriesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::InvalidProblem(format!("truncation order must be at least 2, got {}", self.order)));
        }
        if self.panels < 16 || !self.panels.is_multiple_of(2) {
            return Err(Error::InvalidProblem(format!(
                "panels per delay must be even and at least 16, got {}",
                self.panels
            )));
        }
        Ok(())
    }
}

/// `S₁(x) = x/(1-x)·log((1-x)/(1-2x))` with `x = mτ`.
pub fn s1_closed_form(x: f64) -> f64 {
    x / (1.0 - x) * (x / (1.0 - 2.0 * x)).ln_1p()
}

/// `S₀(x) = log((1-x)/(1-2x)) / (x(1-x))`, so that `S₁ = x²S₀`.
pub fn s0_closed_form(x: f64) -> f64 {
    (x / (1.0 - 2.0 * x)).ln_1p() / (x * (1.0 - x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecialConstants {
    pub m: f64,
    pub tau: f64,
    /// Unique real root of `m e^{-λτ} + λ = 0` in `(-1/τ, 0)`.
    pub lambda0: f64,
    pub s0: f64,
    pub s1: f64,
}

pub fn special_constants(m: f64, tau: f64) -> Result<SpecialConstants> {
    if !(m >= 0.0 && m.is_finite() && tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidProblem(format!("need m >= 0 and tau > 0, got m = {m}, tau = {tau}")));
    }
    if m == 0.0 {
        return Err(Error::TrivialSystem);
    }
    let product = m * E * tau;
    if product >= 1.0 {
        return Err(Error::SpecialHypothesis { value: product });
    }
    let f = |l: f64| m * (-l * tau).exp() + l;
    // f(-1/τ) = me - 1/τ < 0 < m = f(0)
    let (mut lo, mut hi) = (-1.0 / tau, 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda0 = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = 1.0 - m * tau * (-lambda0 * tau).exp();
        let next = lambda0 - f(lambda0) / d;
        if next > -1.0 / tau && next < 0.0 && f(next).abs() <= f(lambda0).abs() {
            lambda0 = next;
        }
    }
    let x = m * tau;
    Ok(SpecialConstants { m, tau, lambda0, s0: s0_closed_form(x), s1: s1_closed_form(x) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H1Check {
    /// Tail supremum of `‖A(t)‖`.
    pub m: f64,
    pub witness_t: f64,
    /// `m·e·τ`
    pub product: f64,
    pub holds: bool,
}

/// Bounded-coefficient hypothesis `sup ‖A(t)‖ ≤ m` with `m·e·τ < 1`.
pub fn check_h1(a: &dyn MatrixFunction, tau: f64, w: &AuditWindow, norm: Norm) -> Result<H1Check> {
    let mut best = (0.0, w.tail_start());
    for t in w.tail_grid() {
        let n = norm.of(&a.eval(t)?);
        if n > best.0 {
            best = (n, t);
        }
    }
    let product = best.0 * E * tau;
    Ok(H1Check { m: best.0, witness_t: best.1, product, holds: product < 1.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    pub t: f64,
    /// `sup ‖A‖` over the quadrature grid.
    pub m: f64,
    /// `Σ_{n=0}^N Mₙ(t,t)`
    pub sum: DMatrix<f64>,
    /// `Σ_{n=0}^j Mₙ(t,t)` for `j = 0..=N`.
    pub partial_sums: Vec<DMatrix<f64>>,
    /// `‖Mₙ(t,t)‖` for `n = 0..=N`.
    pub norms: Vec<f64>,
    /// Per-term majorant `m(mτ)ⁿ(n+1)^{n-1}/n!`.
    pub majorants: Vec<f64>,
    /// `m(2mτ)^{N+1}/(1-2mτ)`; `None` when `2mτ ≥ 1`.
    pub tail_bound: Option<f64>,
    /// `Σ_{n>N}` of the per-term majorant; `None` when `meτ ≥ 1`.
    pub majorant_tail_bound: Option<f64>,
}

/// `m(mτ)ⁿ(n+1)^{n-1}/n!`, the coefficient of the scalar recursion with
/// `A ≡ -m`, which dominates `‖Mₙ(t,t)‖` for any `sup ‖A‖ ≤ m`.
pub fn term_majorant(m: f64, tau: f64, n: usize) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    let nf = n as f64;
    let ln_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    (m.ln() + nf * (m * tau).ln() + (nf - 1.0) * (nf + 1.0).ln() - ln_fact).exp()
}

pub fn majorant_tail(m: f64, tau: f64, order: usize) -> Option<f64> {
    if m == 0.0 {
        return Some(0.0);
    }
    if m * E * tau >= 1.0 {
        return None;
    }
    let mut sum = 0.0;
    for n in order + 1..order + 100_000 {
        let term = term_majorant(m, tau, n);
        sum += term;
        if term <= 1e-18 * sum || term == 0.0 {
            break;
        }
    }
    Some(sum)
}

pub fn geometric_tail_bound(m: f64, tau: f64, order: usize) -> Option<f64> {
    let r = 2.0 * m * tau;
    (r < 1.0).then(|| m * r.powi(order as i32 + 1) / (1.0 - r))
}

/// Evaluates the truncated series at `t` by nested Simpson quadrature on a
/// shared grid over `[t - Nτ, t]`, keeping one level of `Mₙ(t,·)` at a time.
pub fn mn_series(a: &dyn MatrixFunction, tau: f64, t: f64, cfg: &SpecialSeriesConfig) -> Result<SeriesResult> {
    cfg.validate()?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidProblem(format!("delay must be positive, got {tau}")));
    }
    let (order, panels) = (cfg.order, cfg.panels);
    let last = order * panels;
    let h = tau / panels as f64;
    let origin = t - order as f64 * tau;
    let node = |j: usize| if j == last { t } else { origin + j as f64 * h };
    let coeffs = (0..=last).map(|j| a.eval(node(j))).collect::<Result<Vec<_>>>()?;
    let m = coeffs.iter().map(|c| cfg.norm.of(c)).fold(0.0, f64::max);
    let p = a.dim();

    let mut level: Vec<DMatrix<f64>> = coeffs.clone();
    let mut sum = level[last].clone();
    let mut norms = vec![cfg.norm.of(&level[last])];
    let mut partial_sums = vec![sum.clone()];
    let mut tail_integral = vec![DMatrix::<f64>::zeros(p, p); last + 1];
    for n in 0..order {
        // ∫_{u_j}^t Mₙ(t,u) du for the nodes j ≥ nP that the next level needs
        let first = n * panels;
        tail_integral[last].fill(0.0);
        let mut j = last;
        while j >= first + 2 {
            let s = (&level[j - 2] + &level[j - 1] * 4.0 + &level[j]) * (h / 3.0);
            tail_integral[j - 2] = &tail_integral[j] + s;
            j -= 2;
        }
        let mut j = last - 3;
        loop {
            let s = (&level[j] + &level[j + 1] * 3.0 + &level[j + 2] * 3.0 + &level[j + 3]) * (3.0 * h / 8.0);
            tail_integral[j] = &tail_integral[j + 3] + s;
            if j < first + 2 {
                break;
            }
            j -= 2;
        }
        let mut next = vec![DMatrix::<f64>::zeros(p, p); last + 1];
        for j in (n + 1) * panels..=last {
            next[j] = -(&coeffs[j] * &tail_integral[j - panels]);
        }
        level = next;
        norms.push(cfg.norm.of(&level[last]));
        sum += &level[last];
        partial_sums.push(sum.clone());
    }
    let majorants = (0..=order).map(|n| term_majorant(m, tau, n)).collect();
    Ok(SeriesResult {
        t,
        m,
        sum,
        partial_sums,
        norms,
        majorants,
        tail_bound: geometric_tail_bound(m, tau, order),
        majorant_tail_bound: majorant_tail(m, tau, order),
    })
}

/// CSV with header `n,norm_Mn,bound`; the bound column is the per-term majorant.
pub fn series_csv(series: &SeriesResult) -> String {
    let mut out = String::from("n,norm_Mn,bound\n");
    for (n, (norm, bound)) in series.norms.iter().zip(&series.majorants).enumerate() {
        let _ = writeln!(out, "{n},{norm:.16e},{bound:.16e}");
    }
    out
}

/// `max_{s ∈ [t-τ, t]} ‖A(t) - A(s)‖`, sampled at `samples + 1` points.
pub fn variation_modulus(a: &dyn MatrixFunction, tau: f64, t: f64, samples: usize, norm: Norm) -> Result<f64> {
    let at = a.eval(t)?;
    let mut worst: f64 = 0.0;
    for i in 1..=samples {
        let s = t - tau * i as f64 / samples as f64;
        worst = worst.max(norm.of(&(&at - a.eval(s)?)));
    }
    Ok(worst)
}

/// `‖∫_{t-τ}^t (A(u) - A(t)) du‖` by Simpson quadrature.
pub fn first_gamma_norm(a: &dyn MatrixFunction, tau: f64, t: f64, panels: usize, norm: Norm) -> Result<f64> {
    let at = a.eval(t)?;
    let n = panels.max(2) + panels % 2;
    let h = tau / n as f64;
    let mut acc = DMatrix::<f64>::zeros(a.dim(), a.dim());
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += (a.eval(t - tau + i as f64 * h)? - &at) * w;
    }
    Ok(norm.of(&(acc * (h / 3.0))))
}

/// `A(I + τA)⁻¹ + S₁Â` at time `t`.
pub fn reduced_matrix(a: &DMatrix<f64>, tau: f64, s1: f64, t: f64) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let resolvent = DMatrix::<f64>::identity(p, p) + a * tau;
    let inv = resolvent
        .clone()
        .try_inverse()
        .filter(|inv| Norm::MaxRowSum.of(inv) * Norm::MaxRowSum.of(&resolvent) < 1e12)
        .ok_or(Error::SingularResolvent { t })?;
    Ok(a * inv + a.abs() * s1)
}

/// `max_i (bᵢᵢ + Σ_{j≠i} |bᵢⱼ|)`, the max-norm logarithmic norm.
fn row_measure(b: &DMatrix<f64>) -> Vec<f64> {
    (0..b.nrows()).map(|i| (0..b.ncols()).map(|j| if i == j { b[(i, j)] } else { b[(i, j)].abs() }).sum()).collect()
}

fn unit_histories(dim: usize, tau: f64) -> Result<Vec<HistoryFunction>> {
    (0..dim)
        .map(|i| {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            HistoryFunction::constant(tau, v)
        })
        .collect()
}

/// Decay rates of `x' = A(t)x(t-τ)` (or the delay-free `x' = B(t)x` when
/// `ode` is given) from the unit histories over the audit window. `None`
/// marks a diverged run.
fn linear_rates(a: &dyn MatrixFunction, ode: Option<f64>, tau: f64, w: &AuditWindow) -> Result<Vec<Option<f64>>> {
    let p = a.dim();
    let steps = ((tau / w.step).round() as usize).max(16);
    let rhs = |t: f64, x: &[f64], xd: &[f64], out: &mut [f64]| {
        let mat = match ode {
            Some(s1) => a.eval(t).and_then(|m| reduced_matrix(&m, tau, s1, t)),
            None => a.eval(t),
        };
        let state = if ode.is_some() { x } else { xd };
        match mat {
            Ok(mat) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..p).map(|j| mat[(i, j)] * state[j]).sum();
                }
            }
            Err(_) => out.fill(f64::NAN),
        }
    };
    unit_histories(p, tau)?
        .into_iter()
        .map(|hist| {
            let problem = DdeProblem::new(&rhs, hist, w.t_end - w.t_start, steps)?.with_start(w.t_start);
            match integrate(&problem) {
                Ok(traj) => Ok(Some(decay_rate(&traj, w.tail_start())?)),
                Err(Error::Diverged { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn worst_rate(rates: &[Option<f64>]) -> f64 {
    rates.iter().map(|r| r.unwrap_or(f64::INFINITY)).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecialSolutionOutcome {
    pub verdict: CriterionVerdict,
    pub h1: H1Check,
    pub constants: Option<SpecialConstants>,
    /// Final-tail supremum of the variation modulus.
    pub variation: f64,
    pub h2: bool,
    /// Row-sum certificate for the reduced ODE.
    pub h3_row_sum: Option<bool>,
    /// Simulation evidence for the reduced ODE (not a certificate).
    pub h3_simulation: Option<bool>,
    /// Worst decay rate of the delay system itself.
    pub dde_decay_rate: Option<f64>,
}

/// Stability through special solutions: bounded coefficients (h1), slow
/// variation (h2) and exponential stability of the reduced ODE (h3).
pub fn special_solution_check(
    a: &dyn MatrixFunction,
    tau: f64,
    w: &AuditWindow,
    cfg: &SpecialSeriesConfig,
) -> Result<SpecialSolutionOutcome> {
    cfg.validate()?;
    w.check_delay(tau)?;
    let h1 = check_h1(a, tau, w, cfg.norm)?;
    let grid = w.tail_grid();
    let samples = ((tau / w.step).round() as usize).max(16);
    let variation =
        grid.iter().map(|&t| variation_modulus(a, tau, t, samples, cfg.norm)).collect::<Result<Vec<f64>>>()?;
    let quarter = (variation.len() / 4).max(1);
    let final_sup = variation[variation.len() - quarter..].iter().copied().fold(0.0, f64::max);
    let early_sup = variation[..quarter].iter().copied().fold(0.0, f64::max);
    let h2 = final_sup < SLOW_VARIATION_FRACTION * h1.m && final_sup <= early_sup * (1.0 + 1e-9) + 1e-15;

    let mut outcome = SpecialSolutionOutcome {
        verdict: CriterionVerdict::new(Criterion::SpecialSolution, Holds::Inconclusive, 0.0, None).on_tail(w),
        h1,
        constants: None,
        variation: final_sup,
        h2,
        h3_row_sum: None,
        h3_simulation: None,
        dde_decay_rate: None,
    };
    if !h1.holds {
        outcome.verdict = CriterionVerdict::new(
            Criterion::SpecialSolution,
            Holds::No,
            (1.0 - h1.product).min(-f64::MIN_POSITIVE),
            Some(h1.witness_t),
        )
        .on_tail(w)
        .note("bounded-coefficient hypothesis m e tau < 1 fails");
        return Ok(outcome);
    }
    let constants = special_constants(h1.m, tau)?;
    outcome.constants = Some(constants);
    if !h2 {
        outcome.verdict = CriterionVerdict::new(
            Criterion::SpecialSolution,
            Holds::Inconclusive,
            SLOW_VARIATION_FRACTION * h1.m - final_sup,
            Some(w.t_end),
        )
        .on_tail(w)
        .note("slow-variation surrogate fails on the tail");
        return Ok(outcome);
    }

    let mut worst = (f64::NEG_INFINITY, w.tail_start());
    for &t in &grid {
        let at = a.eval(t)?;
        let b = reduced_matrix(&at, tau, constants.s1, t)?;
        let slack = final_sup * tau * constants.s0 * cfg.norm.of(&at.abs());
        for r in row_measure(&b) {
            if r + slack > worst.0 {
                worst = (r + slack, t);
            }
        }
    }
    let row_sum_ok = worst.0 < 0.0;
    outcome.h3_row_sum = Some(row_sum_ok);

    let mut verdict = if row_sum_ok {
        CriterionVerdict::new(Criterion::SpecialSolution, Holds::Yes, -worst.0, Some(worst.1))
    } else {
        let rates = linear_rates(a, Some(constants.s1), tau, w)?;
        let rate = worst_rate(&rates);
        outcome.h3_simulation = Some(rate < 0.0);
        if rate < 0.0 {
            CriterionVerdict::new(Criterion::SpecialSolution, Holds::Yes, -rate, None)
                .note("reduced ODE decays in simulation: numerical, not certified")
        } else {
            CriterionVerdict::new(
                Criterion::SpecialSolution,
                Holds::No,
                worst.0.min(-rate).min(-f64::MIN_POSITIVE),
                Some(worst.1),
            )
            .note("reduced ODE is not shown to be exponentially stable")
        }
    }
    .on_tail(w)
    .note("surrogate: asymptotic slow variation judged on a finite tail");

    if verdict.holds == Holds::Yes {
        let rate = worst_rate(&linear_rates(a, None, tau, w)?);
        outcome.dde_decay_rate = Some(rate);
        if rate >= 0.0 {
            verdict = verdict.note("FALSIFIED: the delay system does not decay in simulation");
        }
    }
    outcome.verdict = verdict;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangularOutcome {
    pub verdict: CriterionVerdict,
    pub sup_k: f64,
    pub s1: Option<f64>,
    /// `1/e - τa - τ·sup k`
    pub first_slack: f64,
    /// `a(1-τa)/(1 + S₁(1-τa)²) - sup k`
    pub second_slack: Option<f64>,
    pub dde_decay_rate: Option<f64>,
}

/// `A(t) = [[-a, k(t)], [0, -a]]` as a matrix function.
pub fn triangular_matrix(a: f64, k: &CoefficientSignal) -> Result<SignalMatrix> {
    let c = |v: f64| CoefficientSignal::constant(v);
    SignalMatrix::new(2, vec![c(-a)?, k.clone(), c(0.0)?, c(-a)?])
}

pub fn triangular_check(a: f64, k: &CoefficientSignal, tau: f64, w: &AuditWindow) -> Result<TriangularOutcome> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidProblem(format!("self-restraint must be positive, got {a}")));
    }
    if !k.is_nonnegative() {
        return Err(Error::InvalidSignal("threat coefficient must be declared nonnegative".into()));
    }
    w.check_delay(tau)?;
    let grid = w.tail_grid();
    let (sup_k, witness) = grid
        .iter()
        .map(|&t| k.eval(t).map(|v| (v, t)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((f64::NEG_INFINITY, w.tail_start()), |acc, x| if x.0 > acc.0 { x } else { acc });

    let first_slack = 1.0 / E - tau * a - tau * sup_k;
    let mut outcome = TriangularOutcome {
        verdict: CriterionVerdict::new(Criterion::Triangular, Holds::No, 0.0, None),
        sup_k,
        s1: None,
        first_slack,
        second_slack: None,
        dde_decay_rate: None,
    };
    if 1.0 / E - tau * a <= 0.0 || first_slack <= 0.0 {
        outcome.verdict =
            CriterionVerdict::new(Criterion::Triangular, Holds::No, first_slack.min(-f64::MIN_POSITIVE), Some(witness))
                .on_tail(w)
                .note("first condition tau sup k < 1/e - tau a fails");
        return Ok(outcome);
    }
    let s1 = special_constants(a + sup_k, tau)?.s1;
    let r = 1.0 - tau * a;
    let second_slack = a * r / (1.0 + s1 * r * r) - sup_k;
    outcome.s1 = Some(s1);
    outcome.second_slack = Some(second_slack);
    if second_slack <= 0.0 {
        outcome.verdict = CriterionVerdict::new(
            Criterion::Triangular,
            Holds::No,
            second_slack.min(-f64::MIN_POSITIVE),
            Some(witness),
        )
        .on_tail(w)
        .note("second condition on sup k fails");
        return Ok(outcome);
    }
    let matrix = triangular_matrix(a, k)?;
    let rate = worst_rate(&linear_rates(&matrix, None, tau, w)?);
    outcome.dde_decay_rate = Some(rate);
    let mut verdict =
        CriterionVerdict::new(Criterion::Triangular, Holds::Yes, first_slack.min(second_slack), Some(witness))
            .on_tail(w);
    if rate >= 0.0 {
        verdict = verdict.note("FALSIFIED: the delay system does not decay in simulation");
    }
    outcome.verdict = verdict;
    Ok(outcome)
}
