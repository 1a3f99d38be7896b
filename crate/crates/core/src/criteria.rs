//! Finite-window checks of sufficient stability conditions for the
//! time-varying race model, plus simulation-based falsification.
//!
//! Asymptotic quantities (`liminf`, `limsup`) are replaced by extrema over
//! the tail of an [`AuditWindow`]; every verdict computed that way carries
//! the tail interval in `surrogate_window`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autonomous::{characteristic_roots, stability_verdict, tau_minus, StabilityVerdict};
use crate::dde::{decay_rate, integrate, DdeProblem};
use crate::error::{Error, Result};
use crate::model::{
    ArmamentMatrix, CoefficientSignal, HistoryFunction, HistoryKind, SinusoidComponent, TimeVaryingMatrix,
};

/// Required slack below 1 for the integral-dominance criterion.
pub const MARGIN_FLOOR: f64 = 1e-6;
/// Simpson panels over one delay window.
pub const QUADRATURE_PANELS: usize = 128;
/// Dominance factors tried for the scaled criterion.
pub const ALPHA_GRID: [f64; 4] = [1.01, 1.1, 1.5, 2.0];
/// Weight ratios `v₁/v₂ = 2^j` for `j` in this range.
pub const WEIGHT_EXPONENTS: std::ops::RangeInclusive<i32> = -8..=8;
/// Growth rate above which a uniform-stability claim counts as falsified.
pub const UNIFORM_GROWTH_TOL: f64 = 1e-8;
/// Number of random histories used by [`cross_validate`].
pub const VALIDATION_HISTORIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub step: f64,
    /// Portion of the window, counted from the end, standing in for `t → ∞`.
    pub tail_fraction: f64,
}

impl AuditWindow {
    pub fn new(t_start: f64, t_end: f64, step: f64, tail_fraction: f64) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite() && t_end > t_start) {
            return Err(Error::InvalidProblem(format!("empty audit window [{t_start}, {t_end}]")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidProblem(format!("grid step must be positive, got {step}")));
        }
        if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
            return Err(Error::InvalidProblem(format!("tail fraction must lie in (0, 1), got {tail_fraction}")));
        }
        Ok(Self { t_start, t_end, step, tail_fraction })
    }

    /// Window with step `τ/32` and the last half as tail.
    pub fn for_delay(t_start: f64, t_end: f64, tau: f64) -> Result<Self> {
        let w = Self::new(t_start, t_end, tau / 32.0, 0.5)?;
        w.check_delay(tau)?;
        Ok(w)
    }

    pub fn check_delay(&self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidProblem(format!("delay must be positive, got {tau}")));
        }
        if self.t_end - self.t_start < 10.0 * tau * (1.0 - 1e-12) {
            return Err(Error::InvalidProblem(format!(
                "audit window must span at least 10 delays ({} < {})",
                self.t_end - self.t_start,
                10.0 * tau
            )));
        }
        if self.step > tau / 16.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidProblem(format!("grid step {} exceeds tau/16", self.step)));
        }
        Ok(())
    }

    pub fn tail_start(&self) -> f64 {
        self.t_end - self.tail_fraction * (self.t_end - self.t_start)
    }

    pub fn tail_bounds(&self) -> [f64; 2] {
        [self.tail_start(), self.t_end]
    }

    pub fn tail_grid(&self) -> Vec<f64> {
        uniform_grid(self.tail_start(), self.t_end, self.step)
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.t_start, self.t_end, self.step)
    }
}

fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    let h = (hi - lo) / n as f64;
    (0..=n).map(|i| if i == n { hi } else { lo + i as f64 * h }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Holds {
    Yes,
    No,
    Inconclusive,
}

impl Holds {
    pub fn as_str(&self) -> &'static str {
        match self {
            Holds::Yes => "yes",
            Holds::No => "no",
            Holds::Inconclusive => "inconclusive",
        }
    }

    fn from_margin(margin: f64) -> Self {
        if margin > 0.0 {
            Holds::Yes
        } else if margin < 0.0 {
            Holds::No
        } else {
            Holds::Inconclusive
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// `ab ≥ (k+l)²/4` for the delay-free system.
    OdeUniform,
    /// `a+b ≥ α`, `ab - (k+l)²/4 > β` for the delay-free system.
    OdeAsymptotic,
    /// `liminf M̂(t)v > 0` for a positive weight `v`.
    WeightedDominance,
    /// `diag(a,b)v ≥ α[[c₁,k],[l,c₂]]v` with `α > 1`.
    ScaledDominance,
    /// Weighted dominance with `v = (1,1)`, in integral form.
    UnitWeightDominance,
    /// Envelope bounds with divergent `∫a`, `∫b`: global attractor.
    EnvelopeAttractor,
    /// Envelope bounds with `a`, `b` bounded below: global exponential stability.
    EnvelopeExponential,
    /// Entrywise perturbation below the spectral gap of a constant matrix.
    Perturbation,
    /// Reduction to an ODE through special solutions.
    SpecialSolution,
    /// The triangular special-solution family.
    Triangular,
}

impl Criterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::OdeUniform => "ode_uniform",
            Criterion::OdeAsymptotic => "ode_asymptotic",
            Criterion::WeightedDominance => "weighted_dominance",
            Criterion::ScaledDominance => "scaled_dominance",
            Criterion::UnitWeightDominance => "unit_weight_dominance",
            Criterion::EnvelopeAttractor => "envelope_attractor",
            Criterion::EnvelopeExponential => "envelope_exponential",
            Criterion::Perturbation => "perturbation",
            Criterion::SpecialSolution => "special_solution",
            Criterion::Triangular => "triangular",
        }
    }

    /// The system whose trajectories a "yes" makes claims about.
    pub fn system(&self) -> ValidationSystem {
        match self {
            Criterion::OdeUniform | Criterion::OdeAsymptotic => ValidationSystem::Ode,
            Criterion::EnvelopeAttractor | Criterion::EnvelopeExponential => ValidationSystem::Envelope,
            _ => ValidationSystem::Delay,
        }
    }

    /// Whether "yes" promises decay (as opposed to mere boundedness).
    pub fn claims_decay(&self) -> bool {
        !matches!(self, Criterion::OdeUniform)
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    pub criterion: Criterion,
    pub holds: Holds,
    /// Worst-case slack; positive when the condition holds.
    pub margin: f64,
    pub witness_t: Option<f64>,
    /// Tail interval used in place of `t → ∞`.
    pub surrogate_window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CriterionVerdict {
    pub fn new(criterion: Criterion, holds: Holds, margin: f64, witness_t: Option<f64>) -> Self {
        Self { criterion, holds, margin, witness_t, surrogate_window: None, notes: Vec::new() }
    }

    pub fn on_tail(mut self, w: &AuditWindow) -> Self {
        self.surrogate_window = Some(w.tail_bounds());
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

/// A strictly negative margin for a condition that fails at a boundary.
fn failing(margin: f64) -> f64 {
    margin.min(-f64::MIN_POSITIVE)
}

/// Composite Simpson rule with an even number of panels.
pub fn simpson<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, hi: f64, panels: usize) -> Result<f64> {
    let n = panels.max(2) + panels % 2;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo)? + f(hi)?;
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h)?;
    }
    Ok(acc * h / 3.0)
}

#[derive(Debug, Clone, Copy)]
struct Extremum {
    value: f64,
    t: f64,
}

fn tail_min(grid: &[f64], values: &[f64]) -> Extremum {
    let (i, &value) = values.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)).expect("tail grid is never empty");
    Extremum { value, t: grid[i] }
}

fn tail_max(grid: &[f64], values: &[f64]) -> Extremum {
    let (i, &value) = values.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).expect("tail grid is never empty");
    Extremum { value, t: grid[i] }
}

/// The infimum over the last eighth of the tail has dropped below 75% of
/// the first eighth: read as `liminf = 0`.
fn infimum_vanishes(values: &[f64]) -> bool {
    let e = (values.len() / 8).max(1);
    let first = values[..e].iter().copied().fold(f64::INFINITY, f64::min);
    let last = values[values.len() - e..].iter().copied().fold(f64::INFINITY, f64::min);
    first > 0.0 && last < 0.75 * first
}

fn check_domain(m: &TimeVaryingMatrix, lo: f64, hi: f64) -> Result<()> {
    let (dlo, dhi) = m.domain();
    let slack = 1e-12 * (1.0 + dlo.abs().max(dhi.abs()));
    if lo < dlo - slack {
        return Err(Error::Domain { t: lo, lo: dlo, hi: dhi });
    }
    if hi > dhi + slack {
        return Err(Error::Domain { t: hi, lo: dlo, hi: dhi });
    }
    Ok(())
}

/// Delay-free Lyapunov test with `V = x² + y²`: (uniform, asymptotic).
pub fn ode_lyapunov_check(m: &TimeVaryingMatrix, w: &AuditWindow) -> Result<(CriterionVerdict, CriterionVerdict)> {
    let grid = w.tail_grid();
    let mut gap = Vec::with_capacity(grid.len());
    let mut damping = Vec::with_capacity(grid.len());
    for &t in &grid {
        let [a, b, k, l] = m.coefficients(t)?;
        gap.push(a * b - (k + l) * (k + l) / 4.0);
        damping.push(a + b);
    }
    let worst_gap = tail_min(&grid, &gap);
    let mut uniform = CriterionVerdict::new(
        Criterion::OdeUniform,
        Holds::from_margin(worst_gap.value),
        worst_gap.value,
        Some(worst_gap.t),
    )
    .on_tail(w);
    if uniform.holds == Holds::Inconclusive {
        uniform = uniform.note("equality at the boundary cannot be certified numerically");
    }

    let worst_damping = tail_min(&grid, &damping);
    let (margin, witness) = if worst_damping.value < worst_gap.value {
        (worst_damping.value, worst_damping.t)
    } else {
        (worst_gap.value, worst_gap.t)
    };
    let mut asymptotic =
        CriterionVerdict::new(Criterion::OdeAsymptotic, Holds::from_margin(margin), margin, Some(witness)).on_tail(w);
    if asymptotic.holds == Holds::Yes && (infimum_vanishes(&gap) || infimum_vanishes(&damping)) {
        asymptotic.holds = Holds::Inconclusive;
        asymptotic = asymptotic.note("tail infimum is decaying; the positive lower bounds may not persist");
    }
    Ok((uniform, asymptotic))
}

/// `c₁(t) = a(t)∫_{t-τ}^t (a+k)` and `c₂(t) = b(t)∫_{t-τ}^t (b+l)`.
pub fn c_functions(m: &TimeVaryingMatrix, tau: f64, t: f64) -> Result<(f64, f64)> {
    let [a, b, _, _] = m.coefficients(t)?;
    let i1 = simpson(|u| Ok(m.a().eval(u)? + m.k().eval(u)?), t - tau, t, QUADRATURE_PANELS)?;
    let i2 = simpson(|u| Ok(m.b().eval(u)? + m.l().eval(u)?), t - tau, t, QUADRATURE_PANELS)?;
    Ok((a * i1, b * i2))
}

#[derive(Debug, Clone, Copy)]
struct TailSample {
    t: f64,
    a: f64,
    b: f64,
    k: f64,
    l: f64,
    c1: f64,
    c2: f64,
}

fn tail_samples(m: &TimeVaryingMatrix, tau: f64, w: &AuditWindow) -> Result<Vec<TailSample>> {
    w.tail_grid()
        .into_iter()
        .map(|t| {
            let [a, b, k, l] = m.coefficients(t)?;
            let (c1, c2) = c_functions(m, tau, t)?;
            Ok(TailSample { t, a, b, k, l, c1, c2 })
        })
        .collect()
}

fn normalized_weight(j: i32) -> [f64; 2] {
    let r = 2f64.powi(j);
    if r >= 1.0 {
        [1.0, 1.0 / r]
    } else {
        [r, 1.0]
    }
}

fn worst_over_tail<F: Fn(&TailSample) -> f64>(samples: &[TailSample], f: F) -> Extremum {
    samples
        .iter()
        .map(|s| Extremum { value: f(s), t: s.t })
        .min_by(|x, y| x.value.total_cmp(&y.value))
        .expect("tail grid is never empty")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceOutcome {
    pub weighted: CriterionVerdict,
    pub scaled: CriterionVerdict,
    /// Weight achieving the reported weighted margin.
    pub weight: [f64; 2],
    /// Dominance factor achieving the reported scaled margin.
    pub alpha: Option<f64>,
}

/// Weighted and scaled delay-dominance criteria. With `weight = None` the
/// weight is searched on a logarithmic ray grid.
pub fn weighted_dominance_check(
    m: &TimeVaryingMatrix,
    tau: f64,
    weight: Option<[f64; 2]>,
    w: &AuditWindow,
) -> Result<DominanceOutcome> {
    w.check_delay(tau)?;
    check_domain(m, w.tail_start() - tau, w.t_end)?;
    if let Some(v) = weight {
        if !(v[0] > 0.0 && v[1] > 0.0 && v.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidProblem(format!("weight must be positive, got {v:?}")));
        }
    }
    let samples = tail_samples(m, tau, w)?;
    let weights: Vec<[f64; 2]> = match weight {
        Some(v) => {
            let s = v[0].max(v[1]);
            vec![[v[0] / s, v[1] / s]]
        }
        None => WEIGHT_EXPONENTS.map(normalized_weight).collect(),
    };

    let weighted_margin = |v: [f64; 2]| {
        worst_over_tail(&samples, |s| {
            let r1 = (s.a - s.c1) * v[0] - s.k * v[1];
            let r2 = -s.l * v[0] + (s.b - s.c2) * v[1];
            r1.min(r2)
        })
    };
    let (best_v, best) = weights
        .iter()
        .map(|&v| (v, weighted_margin(v)))
        .max_by(|x, y| x.1.value.total_cmp(&y.1.value))
        .expect("weight grid is never empty");
    let holds = match (Holds::from_margin(best.value), weight) {
        (Holds::Yes, _) => Holds::Yes,
        (Holds::No, Some(_)) => Holds::No,
        _ => Holds::Inconclusive,
    };
    let mut weighted = CriterionVerdict::new(Criterion::WeightedDominance, holds, best.value, Some(best.t)).on_tail(w);
    if weight.is_none() && holds != Holds::Yes {
        weighted = weighted.note("no weight on the search grid certifies the condition");
    }

    let lower_a: Vec<f64> = samples.iter().map(|s| s.a).collect();
    let lower_b: Vec<f64> = samples.iter().map(|s| s.b).collect();
    let bounded_below =
        lower_a.iter().chain(&lower_b).all(|&x| x > 0.0) && !infimum_vanishes(&lower_a) && !infimum_vanishes(&lower_b);
    let mut scaled_best: Option<(f64, f64, Extremum)> = None;
    for &v in &weights {
        for &alpha in &ALPHA_GRID {
            let e = worst_over_tail(&samples, |s| {
                let r1 = s.a * v[0] - alpha * (s.c1 * v[0] + s.k * v[1]);
                let r2 = s.b * v[1] - alpha * (s.l * v[0] + s.c2 * v[1]);
                r1.min(r2)
            });
            if scaled_best.as_ref().is_none_or(|b| e.value > b.2.value) {
                scaled_best = Some((alpha, v[0] / v[1], e));
            }
        }
    }
    let (alpha, _, e) = scaled_best.expect("search grid is never empty");
    let mut scaled_holds = Holds::from_margin(e.value);
    let mut notes = Vec::new();
    if !bounded_below {
        scaled_holds = Holds::Inconclusive;
        notes.push("a(t), b(t) not bounded below by positive constants on the tail".to_string());
    } else if scaled_holds == Holds::No && weight.is_none() {
        scaled_holds = Holds::Inconclusive;
    }
    let mut scaled = CriterionVerdict::new(Criterion::ScaledDominance, scaled_holds, e.value, Some(e.t)).on_tail(w);
    scaled.notes = notes;
    Ok(DominanceOutcome { weighted, scaled, weight: best_v, alpha: (scaled_holds == Holds::Yes).then_some(alpha) })
}

/// `limsup [∫_{t-τ}^t (a+k) + k/a] < 1` and its second-country analogue.
pub fn unit_weight_dominance_check(m: &TimeVaryingMatrix, tau: f64, w: &AuditWindow) -> Result<CriterionVerdict> {
    w.check_delay(tau)?;
    check_domain(m, w.tail_start() - tau, w.t_end)?;
    let grid = w.tail_grid();
    let mut worst = Vec::with_capacity(grid.len());
    for &t in &grid {
        let [a, b, k, l] = m.coefficients(t)?;
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::InvalidProblem(format!(
                "self-restraint must be positive on the audit window: a = {a}, b = {b} at t = {t}"
            )));
        }
        let i1 = simpson(|u| Ok(m.a().eval(u)? + m.k().eval(u)?), t - tau, t, QUADRATURE_PANELS)?;
        let i2 = simpson(|u| Ok(m.b().eval(u)? + m.l().eval(u)?), t - tau, t, QUADRATURE_PANELS)?;
        worst.push((i1 + k / a).max(i2 + l / b));
    }
    let sup = tail_max(&grid, &worst);
    let margin = 1.0 - sup.value;
    let holds = if margin > MARGIN_FLOOR {
        Holds::Yes
    } else if margin <= 0.0 {
        Holds::No
    } else {
        Holds::Inconclusive
    };
    let margin = if holds == Holds::No { failing(margin) } else { margin };
    Ok(CriterionVerdict::new(Criterion::UnitWeightDominance, holds, margin, Some(sup.t)).on_tail(w))
}

/// Divergence of `∫₀^∞ s`: analytic for parametric families, a growth
/// heuristic for tables (`None` when ambiguous).
fn integral_diverges(s: &CoefficientSignal, w: &AuditWindow) -> Result<Option<bool>> {
    if let Some(d) = s.integral_diverges() {
        return Ok(Some(d));
    }
    let len = w.t_end - w.t_start;
    let whole = simpson(|u| s.eval(u), w.t_start, w.t_end, 512)? / len;
    let last = simpson(|u| s.eval(u), w.t_end - len / 4.0, w.t_end, 128)? / (len / 4.0);
    Ok((whole > 0.0 && last >= 0.5 * whole).then_some(true))
}

/// Positive `liminf`: analytic for parametric families, tail infimum with
/// a trend test for tables. Returns the margin (tail infimum, or a negative
/// value when the limit is judged to vanish) and its witness.
fn liminf_positive(s: &CoefficientSignal, grid: &[f64]) -> Result<(bool, Extremum)> {
    let values = grid.iter().map(|&t| s.eval(t)).collect::<Result<Vec<f64>>>()?;
    let inf = tail_min(grid, &values);
    let positive = match s.asymptotic_infimum() {
        Some(v) => v > 0.0,
        None => inf.value > 0.0 && !infimum_vanishes(&values),
    };
    Ok((positive, inf))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOutcome {
    pub attractor: CriterionVerdict,
    pub exponential: CriterionVerdict,
    pub sup_b1: f64,
    pub sup_b2: f64,
}

/// Criteria for the nonlinear model whose hostility terms are bounded by
/// `G(t)|·|` and `H(t)|·|`. The ratio term of `B₁` uses `k(t)`.
pub fn envelope_check(
    m: &TimeVaryingMatrix,
    tau: f64,
    g_env: &CoefficientSignal,
    h_env: &CoefficientSignal,
    w: &AuditWindow,
) -> Result<EnvelopeOutcome> {
    if !g_env.is_nonnegative() || !h_env.is_nonnegative() {
        return Err(Error::InvalidSignal("hostility envelopes must be declared nonnegative".into()));
    }
    w.check_delay(tau)?;
    check_domain(m, w.tail_start() - tau, w.t_end)?;
    let grid = w.tail_grid();
    let mut b1 = Vec::with_capacity(grid.len());
    let mut b2 = Vec::with_capacity(grid.len());
    for &t in &grid {
        let [a, b, k, l] = m.coefficients(t)?;
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::InvalidProblem(format!(
                "self-restraint must be positive on the audit window: a = {a}, b = {b} at t = {t}"
            )));
        }
        let (g, h) = (g_env.eval(t)?, h_env.eval(t)?);
        let i1 = simpson(|u| Ok(m.a().eval(u)? + m.k().eval(u)? + g_env.eval(u)?), t - tau, t, QUADRATURE_PANELS)?;
        let i2 = simpson(|u| Ok(m.b().eval(u)? + m.l().eval(u)? + h_env.eval(u)?), t - tau, t, QUADRATURE_PANELS)?;
        b1.push((k + g) / a + i1);
        b2.push((l + h) / b + i2);
    }
    let s1 = tail_max(&grid, &b1);
    let s2 = tail_max(&grid, &b2);
    let worst = if s1.value >= s2.value { s1 } else { s2 };
    let bound_margin = 1.0 - worst.value;

    // divergence of the restraint integrals
    let div = [integral_diverges(m.a(), w)?, integral_diverges(m.b(), w)?];
    let attractor = if bound_margin <= 0.0 {
        CriterionVerdict::new(Criterion::EnvelopeAttractor, Holds::No, failing(bound_margin), Some(worst.t))
            .note("sup B_i over the tail is not below 1")
    } else if div.contains(&Some(false)) {
        CriterionVerdict::new(Criterion::EnvelopeAttractor, Holds::No, failing(-bound_margin), Some(worst.t))
            .note("a restraint coefficient has a finite integral")
    } else if div.contains(&None) {
        CriterionVerdict::new(Criterion::EnvelopeAttractor, Holds::Inconclusive, bound_margin, Some(worst.t))
            .note("divergence of a tabulated restraint integral is ambiguous on this window")
    } else {
        CriterionVerdict::new(Criterion::EnvelopeAttractor, Holds::Yes, bound_margin, Some(worst.t))
    }
    .on_tail(w);

    let (pos_a, inf_a) = liminf_positive(m.a(), &grid)?;
    let (pos_b, inf_b) = liminf_positive(m.b(), &grid)?;
    let inf = if inf_a.value <= inf_b.value { inf_a } else { inf_b };
    let exponential = if bound_margin <= 0.0 {
        CriterionVerdict::new(Criterion::EnvelopeExponential, Holds::No, failing(bound_margin), Some(worst.t))
            .note("sup B_i over the tail is not below 1")
    } else if !(pos_a && pos_b) {
        CriterionVerdict::new(Criterion::EnvelopeExponential, Holds::No, failing(-inf.value), Some(inf.t))
            .note("liminf of a restraint coefficient vanishes")
    } else {
        let margin = bound_margin.min(inf.value);
        let witness = if bound_margin <= inf.value { worst.t } else { inf.t };
        CriterionVerdict::new(Criterion::EnvelopeExponential, Holds::Yes, margin, Some(witness))
    }
    .on_tail(w);

    Ok(EnvelopeOutcome { attractor, exponential, sup_b1: s1.value, sup_b2: s2.value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationOutcome {
    pub verdict: CriterionVerdict,
    /// Spectral gap `-max Re λ` of the unperturbed system, original time units.
    pub alpha: Option<f64>,
}

/// Sufficient bound `δ < α` on entrywise perturbations of a constant
/// matrix that is EAS at delay `τ`.
pub fn perturbation_check(matrix: &ArmamentMatrix, tau: f64, delta_bound: f64) -> Result<PerturbationOutcome> {
    if !(delta_bound >= 0.0 && delta_bound.is_finite()) {
        return Err(Error::InvalidProblem(format!("perturbation bound must be nonnegative, got {delta_bound}")));
    }
    let threshold = tau_minus(matrix)?;
    const NOTE: &str = "integrable perturbations preserve uniform stability only and give no rate";
    if stability_verdict(matrix, tau) != StabilityVerdict::Eas {
        let margin = failing(-(tau - threshold) / threshold);
        let verdict = CriterionVerdict::new(Criterion::Perturbation, Holds::No, margin, None)
            .note("unperturbed system not EAS")
            .note(NOTE);
        return Ok(PerturbationOutcome { verdict, alpha: None });
    }
    let roots = match characteristic_roots(matrix, tau, 4) {
        Ok(r) => r,
        Err(e) => {
            let verdict = CriterionVerdict::new(Criterion::Perturbation, Holds::Inconclusive, 0.0, None)
                .note(format!("root finder failed: {e}"));
            return Ok(PerturbationOutcome { verdict, alpha: None });
        }
    };
    let Some(dominant) = roots.dominant().filter(|r| r.residual < 1e-8) else {
        let verdict = CriterionVerdict::new(Criterion::Perturbation, Holds::Inconclusive, 0.0, None)
            .note("no converged dominant root");
        return Ok(PerturbationOutcome { verdict, alpha: None });
    };
    let alpha = -dominant.lambda.re / tau;
    let margin = alpha - delta_bound;
    let verdict = if margin > 0.0 {
        CriterionVerdict::new(Criterion::Perturbation, Holds::Yes, margin, None)
    } else {
        CriterionVerdict::new(Criterion::Perturbation, Holds::No, failing(margin), None)
    }
    .note(NOTE);
    Ok(PerturbationOutcome { verdict, alpha: Some(alpha) })
}

/// Tail mean of `A(t)` and the largest entrywise deviation from it.
pub fn nominal_matrix(m: &TimeVaryingMatrix, w: &AuditWindow) -> Result<(ArmamentMatrix, f64)> {
    let grid = w.tail_grid();
    let samples = grid.iter().map(|&t| m.coefficients(t)).collect::<Result<Vec<[f64; 4]>>>()?;
    let mut mean = [0.0; 4];
    for s in &samples {
        for i in 0..4 {
            mean[i] += s[i];
        }
    }
    let mean = mean.map(|x| x / samples.len() as f64);
    let delta = samples.iter().flat_map(|s| (0..4).map(move |i| (s[i] - mean[i]).abs())).fold(0.0, f64::max);
    Ok((ArmamentMatrix::new(mean[0], mean[1], mean[2], mean[3])?, delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationSystem {
    /// `X' = A(t)X(t)`
    Ode,
    /// `X' = A(t)X(t-τ)`
    Delay,
    /// `X' = A(t)X(t-τ) + (G(t)·tanh y(t-τ), H(t)·tanh x(t-τ))`
    Envelope,
}

/// Model data needed to simulate every [`ValidationSystem`].
pub struct ValidationModel<'a> {
    pub matrix: &'a TimeVaryingMatrix,
    pub tau: f64,
    pub envelopes: Option<(&'a CoefficientSignal, &'a CoefficientSignal)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub criterion: Criterion,
    pub system: ValidationSystem,
    /// One rate per history; `None` when the trajectory diverged.
    pub decay_rates: Vec<Option<f64>>,
    pub falsified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
    pub falsifications: usize,
}

/// Smooth random histories `offset + amplitude·sin(ωθ + φ)` per component.
pub fn random_histories(dim: usize, tau: f64, count: usize, seed: u64) -> Result<Vec<HistoryFunction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let components = (0..dim)
                .map(|_| SinusoidComponent {
                    offset: rng.gen_range(-1.0..1.0),
                    amplitude: rng.gen_range(0.0..1.0),
                    omega: rng.gen_range(0.5..3.0) / tau,
                    phase: rng.gen_range(0.0..2.0 * PI),
                })
                .collect();
            HistoryFunction::new(tau, HistoryKind::Sinusoid { components })
        })
        .collect()
}

/// Tail decay rates of the chosen system from each history, simulated over
/// the audit window. `None` marks a diverged trajectory.
pub fn simulate_rates(
    model: &ValidationModel,
    system: ValidationSystem,
    histories: &[HistoryFunction],
    w: &AuditWindow,
) -> Result<Vec<Option<f64>>> {
    let tau = model.tau;
    w.check_delay(tau)?;
    check_domain(model.matrix, w.t_start - tau, w.t_end)?;
    let envelopes = match system {
        ValidationSystem::Envelope => Some(
            model.envelopes.ok_or_else(|| Error::InvalidProblem("envelope validation needs G and H signals".into()))?,
        ),
        _ => None,
    };
    let steps = ((tau / w.step).round() as usize).max(16);
    let m = model.matrix;
    let rhs = move |t: f64, x: &[f64], xd: &[f64], out: &mut [f64]| {
        let [a, b, k, l] = m.coefficients(t).unwrap_or([f64::NAN; 4]);
        let s = if system == ValidationSystem::Ode { x } else { xd };
        out[0] = -a * s[0] + k * s[1];
        out[1] = l * s[0] - b * s[1];
        if let Some((g, h)) = envelopes {
            out[0] += g.eval(t).unwrap_or(f64::NAN) * xd[1].tanh();
            out[1] += h.eval(t).unwrap_or(f64::NAN) * xd[0].tanh();
        }
    };
    histories
        .iter()
        .map(|hist| {
            let problem =
                DdeProblem::new(rhs, hist.with_delay(tau)?, w.t_end - w.t_start, steps)?.with_start(w.t_start);
            match integrate(&problem) {
                Ok(traj) => Ok(Some(decay_rate(&traj, w.tail_start())?)),
                Err(Error::Diverged { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Simulates the system behind every "yes" verdict from seeded random
/// histories; a growing trajectory is a falsification.
pub fn cross_validate(
    model: &ValidationModel,
    verdicts: &[CriterionVerdict],
    w: &AuditWindow,
    seed: u64,
) -> Result<ValidationReport> {
    let histories = random_histories(2, model.tau, VALIDATION_HISTORIES, seed)?;
    let mut cache: Vec<(ValidationSystem, Vec<Option<f64>>)> = Vec::new();
    let mut entries = Vec::new();
    for v in verdicts.iter().filter(|v| v.holds == Holds::Yes) {
        let system = v.criterion.system();
        let rates = match cache.iter().find(|(s, _)| *s == system) {
            Some((_, r)) => r.clone(),
            None => {
                let r = simulate_rates(model, system, &histories, w)?;
                cache.push((system, r.clone()));
                r
            }
        };
        let falsified = rates.iter().any(|r| match r {
            None => true,
            Some(rate) if v.criterion.claims_decay() => *rate >= 0.0,
            Some(rate) => *rate > UNIFORM_GROWTH_TOL,
        });
        entries.push(ValidationEntry { criterion: v.criterion, system, decay_rates: rates, falsified });
    }
    let falsifications = entries.iter().filter(|e| e.falsified).count();
    Ok(ValidationReport { entries, falsifications })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(a: f64, b: f64, k: f64, l: f64) -> TimeVaryingMatrix {
        TimeVaryingMatrix::constant(&ArmamentMatrix::new(a, b, k, l).unwrap())
    }

    fn sig(c: f64) -> CoefficientSignal {
        CoefficientSignal::constant(c).unwrap().into_nonnegative().unwrap()
    }

    fn window(tau: f64) -> AuditWindow {
        AuditWindow::for_delay(0.0, 40.0 * tau.max(0.25), tau).unwrap()
    }

    #[test]
    fn window_invariants() {
        assert!(AuditWindow::for_delay(0.0, 0.5, 0.1).is_err());
        let w = AuditWindow::new(0.0, 10.0, 0.05, 0.5).unwrap();
        assert!(w.check_delay(1.0).is_ok());
        assert!(w.check_delay(1.5).is_err());
        let grid = w.tail_grid();
        assert_eq!(grid.first(), Some(&5.0));
        assert_eq!(grid.last(), Some(&10.0));
    }

    #[test]
    fn ode_examples() {
        let w = window(0.1);
        let (u, a) = ode_lyapunov_check(&constant(2.0, 2.0, 1.0, 1.0), &w).unwrap();
        assert_eq!((u.holds, a.holds), (Holds::Yes, Holds::Yes));
        assert!((a.margin - 3.0).abs() < 1e-12);
        let (u, a) = ode_lyapunov_check(&constant(1.5, 1.5, 0.0, 0.0), &w).unwrap();
        assert_eq!((u.holds, a.holds), (Holds::Yes, Holds::Yes));
        let (u, a) = ode_lyapunov_check(&constant(1.0, 1.0, 2.0, 2.0), &w).unwrap();
        assert_eq!((u.holds, a.holds), (Holds::No, Holds::No));
        assert!((u.margin + 3.0).abs() < 1e-12);
    }

    #[test]
    fn c_function_examples() {
        let m = constant(1.0, 1.0, 0.5, 0.25);
        let (c1, c2) = c_functions(&m, 0.2, 3.0).unwrap();
        assert!((c1 - 0.3).abs() < 1e-14);
        assert!((c2 - 0.25).abs() < 1e-14);
    }

    #[test]
    fn dominance_examples() {
        let tau = 0.1;
        let w = window(tau);
        let out = weighted_dominance_check(&constant(1.0, 1.0, 0.1, 0.1), tau, Some([1.0, 1.0]), &w).unwrap();
        assert_eq!(out.weighted.holds, Holds::Yes);
        assert!((out.weighted.margin - 0.79).abs() < 1e-12);
        let out = weighted_dominance_check(&constant(1.0, 1.0, 1.5, 1.5), tau, None, &w).unwrap();
        assert_eq!(out.weighted.holds, Holds::Inconclusive);
        assert!(out.weighted.margin < 0.0);
    }

    #[test]
    fn unit_weight_examples() {
        let w = window(0.5);
        let v = unit_weight_dominance_check(&constant(1.0, 1.0, 0.0, 0.0), 0.5, &w).unwrap();
        assert_eq!(v.holds, Holds::Yes);
        assert!((v.margin - 0.5).abs() < 1e-12);
        let w = window(1.2);
        let v = unit_weight_dominance_check(&constant(1.0, 1.0, 0.0, 0.0), 1.2, &w).unwrap();
        assert_eq!(v.holds, Holds::No);
        assert!(v.margin < 0.0);
    }

    #[test]
    fn envelope_example() {
        let tau = 0.1;
        let out = envelope_check(&constant(1.0, 1.0, 0.05, 0.05), tau, &sig(0.05), &sig(0.05), &window(tau)).unwrap();
        assert_eq!(out.attractor.holds, Holds::Yes);
        assert_eq!(out.exponential.holds, Holds::Yes);
        assert!((out.sup_b1 - 0.21).abs() < 1e-12);
    }

    #[test]
    fn decaying_restraint_fails_exponential_test() {
        let t: Vec<f64> = (0..=2000).map(|i| -1.0 + i as f64 * 0.1).collect();
        let a: Vec<f64> = t.iter().map(|&t| 1.0 / (2.0 + t)).collect();
        let a = CoefficientSignal::table(t, a).unwrap();
        let m = TimeVaryingMatrix::new(a, sig(1.0), sig(0.0), sig(0.0)).unwrap();
        let w = AuditWindow::for_delay(0.0, 150.0, 0.1).unwrap();
        let out = envelope_check(&m, 0.1, &sig(0.0), &sig(0.0), &w).unwrap();
        assert_eq!(out.exponential.holds, Holds::No);
        assert!(out.exponential.margin < 0.0);
        assert_ne!(out.attractor.holds, Holds::No);
    }

    #[test]
    fn perturbation_examples() {
        let m = ArmamentMatrix::new(2.0, 1.0, 3.0, 0.25).unwrap();
        let zero = perturbation_check(&m, 0.3, 0.0).unwrap();
        assert_eq!(zero.verdict.holds, Holds::Yes);
        let alpha = zero.alpha.unwrap();
        let half = perturbation_check(&m, 0.3, alpha / 2.0).unwrap();
        assert_eq!(half.verdict.holds, Holds::Yes);
        let above = perturbation_check(&m, 0.7, 0.0).unwrap();
        assert_eq!(above.verdict.holds, Holds::No);
        assert!(above.verdict.notes[0].contains("not EAS"));
    }

    #[test]
    fn nominal_matrix_of_constant_model() {
        let (a, delta) = nominal_matrix(&constant(2.0, 1.0, 3.0, 0.25), &window(0.1)).unwrap();
        assert!(delta < 1e-12);
        assert!((a.determinant() - 1.25).abs() < 1e-12);
    }

    #[test]
    fn cross_validation_of_a_stable_model() {
        let tau = 0.2;
        let k = CoefficientSignal::sinusoid(0.1, 0.05, 1.0, 0.0).unwrap().into_nonnegative().unwrap();
        let m = TimeVaryingMatrix::new(sig(1.0), sig(1.0), k.clone(), k).unwrap();
        let w = window(tau);
        let v = unit_weight_dominance_check(&m, tau, &w).unwrap();
        assert_eq!(v.holds, Holds::Yes);
        let model = ValidationModel { matrix: &m, tau, envelopes: None };
        let report = cross_validate(&model, &[v], &w, 7).unwrap();
        assert_eq!(report.entries.len(), 1);
        assert_eq!(report.entries[0].decay_rates.len(), VALIDATION_HISTORIES);
        assert_eq!(report.falsifications, 0);
    }

    #[test]
    fn verdicts_serialize_with_lowercase_holds() {
        let v = CriterionVerdict::new(Criterion::UnitWeightDominance, Holds::Inconclusive, 0.0, Some(1.0));
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.contains("\"unit_weight_dominance\""));
        assert!(json.contains("\"inconclusive\""));
    }
}
