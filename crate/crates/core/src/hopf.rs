//! Center-manifold normal form at a ladder point and its validation by
//! direct simulation of the cubic model.
//!
//! The reduced flow reads `r' = K₁μr + K₂r³` in the delay-normalized time
//! scale, with `μ = τ - τₙ^±` measured in original time units.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autonomous::BifurcationPoint;
use crate::dde::{decay_rate, integrate, oscillation_amplitude, oscillation_period, DdeProblem};
use crate::error::{Error, Result};
use crate::model::{ArmamentMatrix, CubicHostility, HistoryFunction, HistoryKind, SinusoidComponent};

/// `|K₂|` below this is reported as degenerate.
pub const DEGENERATE_K2: f64 = 1e-12;

/// `|μ|/τ` above this makes the local prediction unreliable.
pub const SMALL_MU_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Supercritical,
    Subcritical,
    Degenerate,
}

impl Classification {
    pub fn from_k2(k2: f64) -> Self {
        if k2.abs() < DEGENERATE_K2 {
            Classification::Degenerate
        } else if k2 < 0.0 {
            Classification::Supercritical
        } else {
            Classification::Subcritical
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfData {
    pub point: BifurcationPoint,
    /// Second component of the real eigenvector `v = (1, v₂)`.
    pub v2: f64,
    /// Weight `(ρa-1)/(ρl)` of the second hostility component.
    pub h_weight: f64,
    pub u1: Complex64,
    pub k1: f64,
    pub k2: f64,
    pub classification: Classification,
    /// `|(1+iσ)·u₁·D| - 1`
    pub normalization_residual: f64,
}

impl HopfData {
    pub fn eigenvector(&self) -> [f64; 2] {
        [1.0, self.v2]
    }
}

pub fn hopf_coefficients(
    matrix: &ArmamentMatrix,
    cubic: &CubicHostility,
    point: &BifurcationPoint,
) -> Result<HopfData> {
    cubic.validate()?;
    if !matrix.is_m_matrix_regime() {
        return Err(Error::NoMMatrixRegime { det: matrix.determinant() });
    }
    if point.resonant {
        return Err(Error::ResonantPoint { tau: point.tau });
    }
    let (a, k, l) = (matrix.a(), matrix.k(), matrix.l());
    if k == 0.0 || l == 0.0 {
        return Err(Error::SingularEigenvector);
    }
    let (rho, sigma, tau) = (point.rho, point.sigma, point.tau);
    let q = rho * a - 1.0;
    let v2 = q / (rho * k);
    let h_weight = q / (rho * l);
    let d = 1.0 + q * q / (rho * rho * k * l);
    let one_i_sigma = Complex64::new(1.0, sigma);
    let u1 = 1.0 / (one_i_sigma * d);

    let project =
        |c30: f64, c21: f64, c12: f64, c03: f64| c30 + 3.0 * c21 * v2 + 3.0 * c12 * v2 * v2 + c03 * v2 * v2 * v2;
    let g = project(cubic.g30, cubic.g21, cubic.g12, cubic.g03);
    let h = project(cubic.h30, cubic.h21, cubic.h12, cubic.h03);

    let s2 = 1.0 + sigma * sigma;
    let k1 = sigma / (rho * s2);
    let k2 = -tau * sigma / s2 / d * (g + h_weight * h);
    Ok(HopfData {
        point: *point,
        v2,
        h_weight,
        u1,
        k1,
        k2,
        classification: Classification::from_k2(k2),
        normalization_residual: ((one_i_sigma * u1 * d).norm() - 1.0).abs(),
    })
}

/// Radius of the bifurcating orbit in normal-form coordinates, when it
/// exists on the side of `μ` given.
pub fn predicted_amplitude(data: &HopfData, mu: f64) -> Option<f64> {
    if data.classification == Classification::Degenerate || mu == 0.0 {
        return None;
    }
    let r2 = -data.k1 * mu / data.k2;
    (r2 > 0.0).then(|| r2.sqrt())
}

/// First-order amplitudes of `(x, y)` on the orbit: `2r*·|vᵢ|`.
pub fn physical_amplitudes(data: &HopfData, r_star: f64) -> [f64; 2] {
    [2.0 * r_star, 2.0 * r_star * data.v2.abs()]
}

pub fn mu_is_small(data: &HopfData, mu: f64) -> bool {
    mu.abs() / data.point.tau <= SMALL_MU_RATIO
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedAmplitude {
    pub mu: f64,
    pub r_star: Option<f64>,
}

/// Serializable summary of a normal-form computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfReport {
    pub tau: f64,
    pub sigma: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    pub classification: Classification,
    pub v2: f64,
    pub predicted_amplitudes: Vec<PredictedAmplitude>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl HopfReport {
    pub fn new(data: &HopfData, mus: &[f64]) -> Self {
        let warnings = mus
            .iter()
            .filter(|&&mu| !mu_is_small(data, mu))
            .map(|mu| format!("mu = {mu} exceeds {SMALL_MU_RATIO} tau; prediction is local"))
            .collect();
        Self {
            tau: data.point.tau,
            sigma: data.point.sigma,
            k1: data.k1,
            k2: data.k2,
            classification: data.classification,
            v2: data.v2,
            predicted_amplitudes: mus
                .iter()
                .map(|&mu| PredictedAmplitude { mu, r_star: predicted_amplitude(data, mu) })
                .collect(),
            warnings,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfSimulationConfig {
    pub steps_per_delay: usize,
    /// Horizon in delays.
    pub horizon_delays: f64,
    /// Fraction of the horizon, counted from the end, used for measurement.
    pub tail_fraction: f64,
    /// Initial perturbation amplitude when no orbit is predicted.
    pub kick: f64,
}

impl Default for HopfSimulationConfig {
    fn default() -> Self {
        Self { steps_per_delay: 32, horizon_delays: 1200.0, tail_fraction: 0.25, kick: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationStatus {
    Oscillating,
    Decayed,
    NoOscillation,
    EscapedBasin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuOutcome {
    pub mu: f64,
    pub tau: f64,
    pub r_star: Option<f64>,
    pub status: SimulationStatus,
    pub amplitude: Option<f64>,
    pub period: Option<f64>,
    pub decay_rate: Option<f64>,
    pub escape_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfSimulationReport {
    /// `2πτₙ/σₙ` in original time units.
    pub expected_period: f64,
    pub outcomes: Vec<MuOutcome>,
    /// Period at the smallest positive μ within 5% of the expected one.
    pub period_ok: Option<bool>,
    /// Consecutive positive-μ amplitude ratios within 15% of `√(μⱼ/μᵢ)`.
    pub sqrt_law_ok: Option<bool>,
    /// Every negative μ decays.
    pub decay_ok: Option<bool>,
}

/// Simulates `X' = A X(t-τ) + F₃(X(t-τ))/6` at `τ = τₙ + μ` for each μ.
/// The μ values run on separate threads.
pub fn verify_hopf_by_simulation(
    matrix: &ArmamentMatrix,
    cubic: &CubicHostility,
    point: &BifurcationPoint,
    mus: &[f64],
    config: &HopfSimulationConfig,
) -> Result<HopfSimulationReport> {
    let data = hopf_coefficients(matrix, cubic, point)?;
    if !(config.tail_fraction > 0.0 && config.tail_fraction < 1.0) {
        return Err(Error::InvalidProblem("tail fraction must lie in (0, 1)".into()));
    }
    for &mu in mus {
        if !(point.tau + mu > 0.0) {
            return Err(Error::InvalidProblem(format!("tau + mu must be positive, got mu = {mu}")));
        }
    }
    let outcomes: Vec<Result<MuOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            mus.iter().map(|&mu| scope.spawn(move || simulate_mu(matrix, cubic, &data, mu, config))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let expected_period = 2.0 * PI * point.tau / point.sigma;
    let mut positive: Vec<&MuOutcome> = outcomes.iter().filter(|o| o.mu > 0.0).collect();
    positive.sort_by(|x, y| x.mu.total_cmp(&y.mu));
    let period_ok =
        positive.first().map(|o| o.period.is_some_and(|p| (p - expected_period).abs() <= 0.05 * expected_period));
    let sqrt_law_ok = (positive.len() >= 2).then(|| {
        positive.windows(2).all(|w| match (w[0].amplitude, w[1].amplitude) {
            (Some(lo), Some(hi)) => {
                let expected = (w[1].mu / w[0].mu).sqrt();
                ((hi / lo) / expected - 1.0).abs() <= 0.15
            }
            _ => false,
        })
    });
    let negative: Vec<&MuOutcome> = outcomes.iter().filter(|o| o.mu < 0.0).collect();
    let decay_ok = (!negative.is_empty()).then(|| negative.iter().all(|o| o.decay_rate.is_some_and(|r| r < 0.0)));
    Ok(HopfSimulationReport { expected_period, outcomes, period_ok, sqrt_law_ok, decay_ok })
}

fn simulate_mu(
    matrix: &ArmamentMatrix,
    cubic: &CubicHostility,
    data: &HopfData,
    mu: f64,
    config: &HopfSimulationConfig,
) -> Result<MuOutcome> {
    let tau = data.point.tau + mu;
    let r_star = predicted_amplitude(data, mu);
    let [amp_x, amp_y] = match r_star {
        Some(r) => physical_amplitudes(data, r),
        None => [config.kick, config.kick * data.v2.abs()],
    };
    let omega = data.point.sigma / data.point.tau;
    let sign_y = if data.v2 < 0.0 { -1.0 } else { 1.0 };
    let history = HistoryFunction::new(
        tau,
        HistoryKind::Sinusoid {
            components: vec![
                SinusoidComponent { offset: 0.0, amplitude: amp_x, omega, phase: 0.0 },
                SinusoidComponent { offset: 0.0, amplitude: sign_y * amp_y, omega, phase: 0.0 },
            ],
        },
    )?;
    let [[m11, m12], [m21, m22]] = matrix.entries();
    let cubic = *cubic;
    let rhs = move |_t: f64, _x: &[f64], xd: &[f64], out: &mut [f64]| {
        let (g, h) = cubic.eval(xd[0], xd[1]);
        out[0] = m11 * xd[0] + m12 * xd[1] + g;
        out[1] = m21 * xd[0] + m22 * xd[1] + h;
    };
    let horizon = config.horizon_delays * tau;
    let problem = DdeProblem::new(rhs, history, horizon, config.steps_per_delay)?;
    let mut outcome = MuOutcome {
        mu,
        tau,
        r_star,
        status: SimulationStatus::NoOscillation,
        amplitude: None,
        period: None,
        decay_rate: None,
        escape_time: None,
    };
    let traj = match integrate(&problem) {
        Ok(traj) => traj,
        Err(Error::Diverged { time }) => {
            outcome.status = SimulationStatus::EscapedBasin;
            outcome.escape_time = Some(time);
            return Ok(outcome);
        }
        Err(e) => return Err(e),
    };
    let tail_start = horizon * (1.0 - config.tail_fraction);
    let rate = decay_rate(&traj, tail_start)?;
    outcome.decay_rate = Some(rate);
    match (oscillation_amplitude(&traj, 0, tail_start), oscillation_period(&traj, 0, tail_start)) {
        (Ok(amp), Ok(period)) if mu > 0.0 || rate >= 0.0 => {
            outcome.status = SimulationStatus::Oscillating;
            outcome.amplitude = Some(amp);
            outcome.period = Some(period);
        }
        _ if rate < 0.0 => outcome.status = SimulationStatus::Decayed,
        _ => {}
    }
    Ok(outcome)
}
