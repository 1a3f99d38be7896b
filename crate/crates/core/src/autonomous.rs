//! Exact stability analysis of `X'(t) = A X(t - τ)` for a constant
//! armament matrix.
//!
//! Root work happens in the delay-normalized time scale `t ↦ τt`, where the
//! characteristic equation reads `λ² + a₀λe^{-λ} + c₀e^{-2λ} = 0` with
//! `a₀ = τ(a+b)`, `c₀ = τ² det A`. A normalized root `λ` corresponds to the
//! original-time root `λ/τ`.

use std::f64::consts::{E, FRAC_PI_2, PI};
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ArmamentMatrix;

/// Relative tolerance for ladder coincidences and verdict boundaries.
pub const RESONANCE_TOL: f64 = 1e-9;

const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Minus,
    Plus,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Minus => "minus",
            Branch::Plus => "plus",
        }
    }
}

impl std::str::FromStr for Branch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "minus" | "-" => Ok(Branch::Minus),
            "plus" | "+" => Ok(Branch::Plus),
            other => Err(Error::InvalidModel(format!("unknown branch '{other}' (expected minus or plus)"))),
        }
    }
}

/// A delay `τₙ^±` at which the pair `±iσₙ` sits on the imaginary axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub n: u32,
    pub branch: Branch,
    /// `σₙ = π/2 + 2nπ`
    pub sigma: f64,
    /// `τₙ^± = σₙ ρ^±`
    pub tau: f64,
    pub rho: f64,
    /// `Re λ'(τₙ^±)`; reported as 0 when the discriminant vanishes.
    pub transversality: f64,
    /// The delay coincides with another ladder delay: a double-Hopf point.
    pub resonant: bool,
}

pub fn sigma(n: u32) -> f64 {
    FRAC_PI_2 + 2.0 * PI * f64::from(n)
}

fn require_regime(matrix: &ArmamentMatrix) -> Result<f64> {
    let det = matrix.determinant();
    if det > 0.0 {
        Ok(det)
    } else {
        Err(Error::NoMMatrixRegime { det })
    }
}

/// `(ρ⁻, ρ⁺)`, the roots of `det A·ρ² - (a+b)ρ + 1 = 0`.
pub fn rho_pair(matrix: &ArmamentMatrix) -> Result<(f64, f64)> {
    let det = require_regime(matrix)?;
    let s = matrix.restraint_sum() + matrix.discriminant().sqrt();
    Ok((2.0 / s, s / (2.0 * det)))
}

/// Stability threshold `τ₋ = π/(4 det A)·[(a+b) - √((a+b)² - 4 det A)]`,
/// evaluated in the cancellation-free form `π / ((a+b) + √disc)`.
pub fn tau_minus(matrix: &ArmamentMatrix) -> Result<f64> {
    require_regime(matrix)?;
    Ok(PI / (matrix.restraint_sum() + matrix.discriminant().sqrt()))
}

/// Hill's threshold `τ₋* = 3τ₋` next to the corrected `τ₋`.
pub fn hill_thresholds(matrix: &ArmamentMatrix) -> Result<(f64, f64)> {
    let t = tau_minus(matrix)?;
    Ok((3.0 * t, t))
}

fn transversality(matrix: &ArmamentMatrix, sigma: f64, tau: f64) -> f64 {
    let disc = matrix.discriminant();
    if disc == 0.0 {
        return 0.0;
    }
    let c = 2.0 * sigma - tau * matrix.restraint_sum();
    sigma * tau * disc / (tau * tau * disc + c * c)
}

/// All `2(n_max+1)` ladder points sorted by delay.
pub fn bifurcation_ladder(matrix: &ArmamentMatrix, n_max: u32) -> Result<Vec<BifurcationPoint>> {
    let (rho_m, rho_p) = rho_pair(matrix)?;
    let mut points = Vec::with_capacity(2 * (n_max as usize + 1));
    for n in 0..=n_max {
        let s = sigma(n);
        for (branch, rho) in [(Branch::Minus, rho_m), (Branch::Plus, rho_p)] {
            let tau = s * rho;
            points.push(BifurcationPoint {
                n,
                branch,
                sigma: s,
                tau,
                rho,
                transversality: transversality(matrix, s, tau),
                resonant: false,
            });
        }
    }
    points.sort_by(|x, y| x.tau.total_cmp(&y.tau).then(x.n.cmp(&y.n)));
    let taus: Vec<f64> = points.iter().map(|p| p.tau).collect();
    for (i, p) in points.iter_mut().enumerate() {
        p.resonant = taus
            .iter()
            .enumerate()
            .any(|(j, &t)| j != i && (t - p.tau).abs() <= RESONANCE_TOL * t.abs().max(p.tau.abs()));
    }
    Ok(points)
}

/// CSV with header `n,branch,sigma,tau,transversality,resonant`.
pub fn ladder_csv(points: &[BifurcationPoint]) -> String {
    let mut out = String::from("n,branch,sigma,tau,transversality,resonant\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{}",
            p.n,
            p.branch.as_str(),
            p.sigma,
            p.tau,
            p.transversality,
            p.resonant
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicRoot {
    /// Root in the delay-normalized time scale.
    #[serde(with = "complex_serde")]
    pub lambda: Complex64,
    /// Lambert-like branch label: `m ≥ 0` for the upper-half-plane seed
    /// `log|z| + i(π + 2mπ)`, `-(m+1)` for its conjugate, and the real
    /// branches are labelled 0 (principal) and -1 (lower).
    pub branch_seed: i32,
    /// `|λ² + a₀λe^{-λ} + c₀e^{-2λ}|`
    pub residual: f64,
}

impl CharacteristicRoot {
    /// The root in original time units, `λ/τ`.
    pub fn original_scale(&self, tau: f64) -> Complex64 {
        self.lambda / tau
    }
}

/// A branch on which Newton did not converge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFailure {
    pub z: f64,
    pub branch_seed: i32,
    pub last_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    pub tau: f64,
    /// Sorted by decreasing real part.
    pub roots: Vec<CharacteristicRoot>,
    pub failures: Vec<BranchFailure>,
}

impl RootSet {
    pub fn dominant(&self) -> Option<&CharacteristicRoot> {
        self.roots.first()
    }
}

/// Left-hand side of the normalized characteristic equation.
pub fn characteristic_function(matrix: &ArmamentMatrix, tau: f64, lambda: Complex64) -> Complex64 {
    let a0 = tau * matrix.restraint_sum();
    let c0 = tau * tau * matrix.determinant();
    let e = (-lambda).exp();
    lambda * lambda + a0 * lambda * e + c0 * e * e
}

/// The two real negative roots `z₋ ≤ z₊` of `z² + a₀z + c₀ = 0`.
pub fn z_pair(matrix: &ArmamentMatrix, tau: f64) -> Result<(f64, f64)> {
    let det = require_regime(matrix)?;
    let a0 = tau * matrix.restraint_sum();
    let c0 = tau * tau * det;
    let s = tau * matrix.discriminant().sqrt();
    // z₋ = -(a₀ + s)/2, and z₊ = c₀/z₋ avoids cancellation
    let z_minus = -(a0 + s) / 2.0;
    Ok((z_minus, c0 / z_minus))
}

fn newton_lambert(z: f64, seed: Complex64) -> std::result::Result<Complex64, f64> {
    let w = |l: Complex64| l * l.exp() - z;
    let mut lam = seed;
    let mut res = w(lam).norm();
    for _ in 0..NEWTON_MAX_ITER {
        let el = lam.exp();
        let deriv = el * (lam + 1.0);
        if deriv.norm() == 0.0 || !deriv.is_finite() {
            return Err(res);
        }
        let full = (lam * el - z) / deriv;
        let mut step = full;
        let mut next = lam - step;
        let mut next_res = w(next).norm();
        let mut halvings = 0;
        while !(next_res < res) && halvings < 30 && res > 1e-15 * z.abs() {
            step *= 0.5;
            next = lam - step;
            next_res = w(next).norm();
            halvings += 1;
        }
        let converged = full.norm() <= 1e-15 * lam.norm().max(1.0);
        lam = next;
        res = next_res;
        if converged || res <= 4.0 * f64::EPSILON * z.abs() {
            // one polishing step
            let el = lam.exp();
            let polished = lam - (lam * el - z) / (el * (lam + 1.0));
            if w(polished).norm() <= res {
                lam = polished;
            }
            return Ok(lam);
        }
    }
    Err(res)
}

/// Real roots of `x eˣ = z` for `z ∈ [-1/e, 0)`: the principal one in
/// `[-1, 0)` and the lower one in `(-∞, -1]`.
fn real_lambert_roots(z: f64) -> Vec<(f64, i32)> {
    if !(-1.0 / E..0.0).contains(&z) {
        return Vec::new();
    }
    let f = |x: f64| x * x.exp() - z;
    let bisect = |mut lo: f64, mut hi: f64| {
        // f(lo) and f(hi) have opposite signs
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if (f(mid) < 0.0) == (flo < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    // f(-1) = -1/e - z ≤ 0, f(0) = -z > 0
    let principal = bisect(-1.0, 0.0);
    let mut lower_bound = -2.0;
    while f(lower_bound) <= 0.0 {
        lower_bound *= 2.0;
    }
    let lower = bisect(lower_bound, -1.0);
    vec![(principal, 0), (lower, -1)]
}

/// The `count` characteristic roots of largest real part, in the
/// normalized time scale, found by solving `λe^λ = z±` branch by branch.
pub fn characteristic_roots(matrix: &ArmamentMatrix, tau: f64, count: usize) -> Result<RootSet> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidProblem(format!("delay must be positive, got {tau}")));
    }
    let (z_minus, z_plus) = z_pair(matrix, tau)?;
    let zs: Vec<f64> =
        if (z_minus - z_plus).abs() <= 1e-15 * z_minus.abs() { vec![z_minus] } else { vec![z_minus, z_plus] };

    let mut found: Vec<CharacteristicRoot> = Vec::new();
    let mut failures = Vec::new();
    let branches = count + 2;
    for &z in &zs {
        for (x, label) in real_lambert_roots(z) {
            found.push(CharacteristicRoot { lambda: Complex64::new(x, 0.0), branch_seed: label, residual: 0.0 });
        }
        for m in 0..branches {
            let l1 = Complex64::new(z.abs().ln(), PI + 2.0 * PI * m as f64);
            let seed = l1 - l1.ln();
            match newton_lambert(z, seed) {
                Ok(root) if root.im > 1e-12 => {
                    let m = m as i32;
                    found.push(CharacteristicRoot { lambda: root, branch_seed: m, residual: 0.0 });
                    found.push(CharacteristicRoot { lambda: root.conj(), branch_seed: -(m + 1), residual: 0.0 });
                }
                // converged onto the real axis: covered by the real branches
                Ok(_) => {}
                Err(last_residual) => failures.push(BranchFailure { z, branch_seed: m as i32, last_residual }),
            }
        }
    }

    found.sort_by(|x, y| y.lambda.re.total_cmp(&x.lambda.re).then(y.lambda.im.total_cmp(&x.lambda.im)));
    let mut roots: Vec<CharacteristicRoot> = Vec::with_capacity(found.len());
    for r in found {
        let dup = roots.iter().any(|q| (q.lambda - r.lambda).norm() <= 1e-9 * r.lambda.norm().max(1.0));
        if !dup {
            roots.push(r);
        }
    }
    roots.truncate(count);
    for r in &mut roots {
        r.residual = characteristic_function(matrix, tau, r.lambda).norm();
    }
    Ok(RootSet { tau, roots, failures })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityVerdict {
    #[serde(rename = "EAS")]
    Eas,
    #[serde(rename = "marginal")]
    Marginal,
    #[serde(rename = "unstable")]
    Unstable,
    /// det A ≤ 0: no threshold delay exists.
    #[serde(rename = "inapplicable")]
    Inapplicable,
}

impl StabilityVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            StabilityVerdict::Eas => "EAS",
            StabilityVerdict::Marginal => "marginal",
            StabilityVerdict::Unstable => "unstable",
            StabilityVerdict::Inapplicable => "inapplicable",
        }
    }
}

/// EAS below `τ₋`, marginal on `τ₋` (relative tolerance 1e-9), unstable
/// above: every crossing is to the right, so no ladder point above `τ₋`
/// restores stability.
pub fn stability_verdict(matrix: &ArmamentMatrix, tau: f64) -> StabilityVerdict {
    let Ok(threshold) = tau_minus(matrix) else {
        return StabilityVerdict::Inapplicable;
    };
    let tol = RESONANCE_TOL * threshold;
    if (tau - threshold).abs() <= tol {
        StabilityVerdict::Marginal
    } else if tau < threshold {
        StabilityVerdict::Eas
    } else {
        StabilityVerdict::Unstable
    }
}

mod complex_serde {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Parts {
        re: f64,
        im: f64,
    }

    pub fn serialize<S: Serializer>(c: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        Parts { re: c.re, im: c.im }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let p = Parts::deserialize(d)?;
        Ok(Complex64::new(p.re, p.im))
    }
}
