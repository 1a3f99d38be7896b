//! Model data shared by every analysis: the constant armament matrix, the
//! cubic hostility coefficients, time-varying coefficient signals and
//! initial histories.
//!
//! All types are immutable once constructed and validate their invariants
//! in their constructors (and on deserialization).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constant 2×2 armament matrix `A = [[-a, k], [l, -b]]`.
///
/// `a`, `b` are the self-restraint (expense) coefficients, `k`, `l` the
/// threat coefficients of country 1 and country 2 respectively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArmament", into = "RawArmament")]
pub struct ArmamentMatrix {
    a: f64,
    b: f64,
    k: f64,
    l: f64,
}

#[derive(Serialize, Deserialize)]
struct RawArmament {
    a: f64,
    b: f64,
    k: f64,
    l: f64,
}

impl TryFrom<RawArmament> for ArmamentMatrix {
    type Error = Error;
    fn try_from(r: RawArmament) -> Result<Self> {
        ArmamentMatrix::new(r.a, r.b, r.k, r.l)
    }
}

impl From<ArmamentMatrix> for RawArmament {
    fn from(m: ArmamentMatrix) -> Self {
        RawArmament { a: m.a, b: m.b, k: m.k, l: m.l }
    }
}

impl ArmamentMatrix {
    pub fn new(a: f64, b: f64, k: f64, l: f64) -> Result<Self> {
        if ![a, b, k, l].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidModel("matrix entries must be finite".into()));
        }
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "self-restraint coefficients must be positive (a = {a}, b = {b})"
            )));
        }
        if k < 0.0 || l < 0.0 {
            return Err(Error::InvalidModel(format!("threat coefficients must be nonnegative (k = {k}, l = {l})")));
        }
        Ok(Self { a, b, k, l })
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.b - self.k * self.l
    }

    /// `a + b`, minus the trace of `A`.
    pub fn restraint_sum(&self) -> f64 {
        self.a + self.b
    }

    /// `(a+b)² - 4 det A`, evaluated as `(a-b)² + 4kl` so it is never negative.
    pub fn discriminant(&self) -> f64 {
        let d = self.a - self.b;
        d * d + 4.0 * self.k * self.l
    }

    pub fn is_m_matrix_regime(&self) -> bool {
        self.determinant() > 0.0
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        [[-self.a, self.k], [self.l, -self.b]]
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-self.a, self.k, self.l, -self.b])
    }

    /// The same model with the two countries relabelled.
    pub fn swapped(&self) -> Self {
        Self { a: self.b, b: self.a, k: self.l, l: self.k }
    }
}

/// Third partial derivatives of the hostility terms `(g, h)` at the origin;
/// `gij = ∂³g/∂xⁱ∂yʲ (0,0)` with `i + j = 3`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubicHostility {
    #[serde(default)]
    pub g30: f64,
    #[serde(default)]
    pub g21: f64,
    #[serde(default)]
    pub g12: f64,
    #[serde(default)]
    pub g03: f64,
    #[serde(default)]
    pub h30: f64,
    #[serde(default)]
    pub h21: f64,
    #[serde(default)]
    pub h12: f64,
    #[serde(default)]
    pub h03: f64,
}

impl CubicHostility {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients().iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidModel("cubic hostility coefficients must be finite".into()))
        }
    }

    pub fn coefficients(&self) -> [f64; 8] {
        [self.g30, self.g21, self.g12, self.g03, self.h30, self.h21, self.h12, self.h03]
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients().iter().all(|&c| c == 0.0)
    }

    /// Evaluates the cubic Taylor part `(g, h)(x, y) = F₃(x, y) / 3!`.
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let cubic = |c30: f64, c21: f64, c12: f64, c03: f64| {
            (c30 * x * x * x + 3.0 * c21 * x * x * y + 3.0 * c12 * x * y * y + c03 * y * y * y) / 6.0
        };
        (cubic(self.g30, self.g21, self.g12, self.g03), cubic(self.h30, self.h21, self.h12, self.h03))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            g30: c * self.g30,
            g21: c * self.g21,
            g12: c * self.g12,
            g03: c * self.g03,
            h30: c * self.h30,
            h21: c * self.h21,
            h12: c * self.h12,
            h03: c * self.h03,
        }
    }

    /// Coefficients after exchanging the roles of the two countries
    /// (`x ↔ y`, `g ↔ h`).
    pub fn swapped(&self) -> Self {
        Self {
            g30: self.h03,
            g21: self.h12,
            g12: self.h21,
            g03: self.h30,
            h30: self.g03,
            h21: self.g12,
            h12: self.g21,
            h03: self.g30,
        }
    }
}

/// Constant upper bounds `b̄₁, b̄₂` of the hostility terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBound", into = "RawBound")]
pub struct HostilityBound {
    b1bar: f64,
    b2bar: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBound {
    b1bar: f64,
    b2bar: f64,
}

impl TryFrom<RawBound> for HostilityBound {
    type Error = Error;
    fn try_from(r: RawBound) -> Result<Self> {
        HostilityBound::new(r.b1bar, r.b2bar)
    }
}

impl From<HostilityBound> for RawBound {
    fn from(b: HostilityBound) -> Self {
        RawBound { b1bar: b.b1bar, b2bar: b.b2bar }
    }
}

impl HostilityBound {
    pub fn new(b1bar: f64, b2bar: f64) -> Result<Self> {
        if b1bar > 0.0 && b2bar > 0.0 && b1bar.is_finite() && b2bar.is_finite() {
            Ok(Self { b1bar, b2bar })
        } else {
            Err(Error::InvalidModel(format!("hostility bounds must be positive and finite (got {b1bar}, {b2bar})")))
        }
    }

    pub fn b1bar(&self) -> f64 {
        self.b1bar
    }
    pub fn b2bar(&self) -> f64 {
        self.b2bar
    }
}

/// Positive equilibrium `P₀ = -A⁻¹ b̄` of the quasi-linear model.
pub fn equilibrium(matrix: &ArmamentMatrix, bound: &HostilityBound) -> Result<[f64; 2]> {
    let det = matrix.determinant();
    if det <= 0.0 {
        return Err(Error::NoMMatrixRegime { det });
    }
    // -A⁻¹ = adj(-A)/det = [[b, k], [l, a]] / det
    let (b1, b2) = (bound.b1bar, bound.b2bar);
    Ok([(matrix.b * b1 + matrix.k * b2) / det, (matrix.l * b1 + matrix.a * b2) / det])
}

/// The closed family of scalar coefficient signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalKind {
    Constant {
        value: f64,
    },
    /// `offset + amplitude * sin(omega * t + phase)`
    Sinusoid {
        offset: f64,
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `scale * exp(-rate * t)`
    ExpDecay {
        scale: f64,
        rate: f64,
    },
    /// Piecewise-linear interpolation of `values` over the strictly
    /// increasing grid `t`; evaluation outside the grid is an error.
    Table {
        t: Vec<f64>,
        values: Vec<f64>,
    },
}

/// A scalar, continuous, time-dependent coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalKind", into = "SignalKind")]
pub struct CoefficientSignal {
    kind: SignalKind,
    nonnegative: bool,
}

impl TryFrom<SignalKind> for CoefficientSignal {
    type Error = Error;
    fn try_from(kind: SignalKind) -> Result<Self> {
        CoefficientSignal::new(kind)
    }
}

impl From<CoefficientSignal> for SignalKind {
    fn from(s: CoefficientSignal) -> Self {
        s.kind
    }
}

impl CoefficientSignal {
    /// Validates a signed signal.
    pub fn new(kind: SignalKind) -> Result<Self> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        match &kind {
            SignalKind::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidSignal("constant must be finite".into()));
                }
            }
            SignalKind::Sinusoid { offset, amplitude, omega, phase } => {
                if !finite(&[*offset, *amplitude, *omega, *phase]) {
                    return Err(Error::InvalidSignal("sinusoid parameters must be finite".into()));
                }
            }
            SignalKind::ExpDecay { scale, rate } => {
                if !finite(&[*scale, *rate]) {
                    return Err(Error::InvalidSignal("exp_decay parameters must be finite".into()));
                }
            }
            SignalKind::Table { t, values } => {
                if t.len() != values.len() {
                    return Err(Error::InvalidSignal(format!(
                        "table grid has {} points but {} values",
                        t.len(),
                        values.len()
                    )));
                }
                if t.len() < 2 {
                    return Err(Error::InvalidSignal("table needs at least two points".into()));
                }
                if !finite(t) || !finite(values) {
                    return Err(Error::InvalidSignal("table entries must be finite".into()));
                }
                if t.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidSignal("table grid must be strictly increasing".into()));
                }
            }
        }
        Ok(Self { kind, nonnegative: false })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(SignalKind::Constant { value })
    }

    pub fn sinusoid(offset: f64, amplitude: f64, omega: f64, phase: f64) -> Result<Self> {
        Self::new(SignalKind::Sinusoid { offset, amplitude, omega, phase })
    }

    pub fn exp_decay(scale: f64, rate: f64) -> Result<Self> {
        Self::new(SignalKind::ExpDecay { scale, rate })
    }

    pub fn table(t: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(SignalKind::Table { t, values })
    }

    /// Declares the signal nonnegative, checked against the analytic
    /// minimum of its family (or the table minimum).
    pub fn into_nonnegative(self) -> Result<Self> {
        let min = match &self.kind {
            SignalKind::Constant { value } => *value,
            SignalKind::Sinusoid { offset, amplitude, omega, .. } => {
                if *omega == 0.0 {
                    // degenerate: a constant offset + amplitude*sin(phase) could still be
                    // checked exactly, but any t gives the same value.
                    self.eval(0.0)?
                } else {
                    offset - amplitude.abs()
                }
            }
            SignalKind::ExpDecay { scale, .. } => *scale,
            SignalKind::Table { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        };
        if min < 0.0 {
            return Err(Error::InvalidSignal(format!("signal declared nonnegative has minimum {min}")));
        }
        Ok(Self { nonnegative: true, ..self })
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn kind(&self) -> &SignalKind {
        &self.kind
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(match &self.kind {
            SignalKind::Constant { value } => *value,
            SignalKind::Sinusoid { offset, amplitude, omega, phase } => offset + amplitude * (omega * t + phase).sin(),
            SignalKind::ExpDecay { scale, rate } => scale * (-rate * t).exp(),
            SignalKind::Table { t: grid, values } => interpolate(grid, values, t)?,
        })
    }

    /// Domain of definition; unbounded for the analytic families.
    pub fn domain(&self) -> (f64, f64) {
        match &self.kind {
            SignalKind::Table { t, .. } => (t[0], t[t.len() - 1]),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `liminf_{t→∞}` where the family determines it; `None` for tables.
    pub fn asymptotic_infimum(&self) -> Option<f64> {
        match &self.kind {
            SignalKind::Constant { value } => Some(*value),
            SignalKind::Sinusoid { offset, amplitude, omega, phase } => {
                Some(if *omega == 0.0 { offset + amplitude * phase.sin() } else { offset - amplitude.abs() })
            }
            SignalKind::ExpDecay { scale, rate } => Some(if *rate > 0.0 {
                0.0
            } else if *rate == 0.0 || *scale == 0.0 {
                *scale
            } else if *scale > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }),
            SignalKind::Table { .. } => None,
        }
    }

    /// Whether `∫₀^∞ s(t) dt` diverges, where the family determines it.
    pub fn integral_diverges(&self) -> Option<bool> {
        match &self.kind {
            SignalKind::Constant { value } => Some(*value != 0.0),
            SignalKind::Sinusoid { offset, amplitude, omega, phase } => {
                Some(if *omega == 0.0 { offset + amplitude * phase.sin() != 0.0 } else { *offset != 0.0 })
            }
            SignalKind::ExpDecay { scale, rate } => Some(*scale != 0.0 && *rate <= 0.0),
            SignalKind::Table { .. } => None,
        }
    }
}

fn interpolate(grid: &[f64], values: &[f64], t: f64) -> Result<f64> {
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let slack = 1e-12 * (hi - lo).abs().max(1.0);
    if !(t >= lo - slack && t <= hi + slack) {
        return Err(Error::Domain { t, lo, hi });
    }
    let t = t.clamp(lo, hi);
    let idx = grid.partition_point(|&g| g <= t);
    if idx == 0 {
        return Ok(values[0]);
    }
    if idx >= grid.len() {
        return Ok(values[grid.len() - 1]);
    }
    let (t0, t1) = (grid[idx - 1], grid[idx]);
    let w = (t - t0) / (t1 - t0);
    Ok(values[idx - 1] + w * (values[idx] - values[idx - 1]))
}

/// Time-varying armament matrix `A(t) = [[-a(t), k(t)], [l(t), -b(t)]]`
/// built from four nonnegative signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSignals", into = "RawSignals")]
pub struct TimeVaryingMatrix {
    a: CoefficientSignal,
    b: CoefficientSignal,
    k: CoefficientSignal,
    l: CoefficientSignal,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSignals {
    a: CoefficientSignal,
    b: CoefficientSignal,
    k: CoefficientSignal,
    l: CoefficientSignal,
}

impl TryFrom<RawSignals> for TimeVaryingMatrix {
    type Error = Error;
    fn try_from(r: RawSignals) -> Result<Self> {
        TimeVaryingMatrix::new(r.a, r.b, r.k, r.l)
    }
}

impl From<TimeVaryingMatrix> for RawSignals {
    fn from(m: TimeVaryingMatrix) -> Self {
        RawSignals { a: m.a, b: m.b, k: m.k, l: m.l }
    }
}

impl TimeVaryingMatrix {
    /// All four signals are declared nonnegative.
    pub fn new(a: CoefficientSignal, b: CoefficientSignal, k: CoefficientSignal, l: CoefficientSignal) -> Result<Self> {
        Ok(Self {
            a: a.into_nonnegative()?,
            b: b.into_nonnegative()?,
            k: k.into_nonnegative()?,
            l: l.into_nonnegative()?,
        })
    }

    pub fn constant(m: &ArmamentMatrix) -> Self {
        let c = |v: f64| CoefficientSignal { kind: SignalKind::Constant { value: v }, nonnegative: true };
        Self { a: c(m.a), b: c(m.b), k: c(m.k), l: c(m.l) }
    }

    pub fn a(&self) -> &CoefficientSignal {
        &self.a
    }
    pub fn b(&self) -> &CoefficientSignal {
        &self.b
    }
    pub fn k(&self) -> &CoefficientSignal {
        &self.k
    }
    pub fn l(&self) -> &CoefficientSignal {
        &self.l
    }

    /// `(a(t), b(t), k(t), l(t))`
    pub fn coefficients(&self, t: f64) -> Result<[f64; 4]> {
        Ok([self.a.eval(t)?, self.b.eval(t)?, self.k.eval(t)?, self.l.eval(t)?])
    }

    pub fn eval_matrix(&self, t: f64) -> Result<[[f64; 2]; 2]> {
        let [a, b, k, l] = self.coefficients(t)?;
        Ok([[-a, k], [l, -b]])
    }

    /// Entrywise absolute value `Â(t) = [|a_ij(t)|]`.
    pub fn abs_matrix(&self, t: f64) -> Result<[[f64; 2]; 2]> {
        let [a, b, k, l] = self.coefficients(t)?;
        Ok([[a.abs(), k.abs()], [l.abs(), b.abs()]])
    }

    /// Intersection of the signal domains.
    pub fn domain(&self) -> (f64, f64) {
        [&self.a, &self.b, &self.k, &self.l]
            .iter()
            .map(|s| s.domain())
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), (l, h)| (lo.max(l), hi.min(h)))
    }
}

/// A `p × p` matrix-valued function of time.
pub trait MatrixFunction: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64) -> Result<DMatrix<f64>>;
}

impl MatrixFunction for TimeVaryingMatrix {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, t: f64) -> Result<DMatrix<f64>> {
        let m = self.eval_matrix(t)?;
        Ok(DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]]))
    }
}

impl MatrixFunction for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn eval(&self, _t: f64) -> Result<DMatrix<f64>> {
        Ok(self.clone())
    }
}

/// General `p × p` matrix with one signed signal per entry (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMatrix {
    dim: usize,
    entries: Vec<CoefficientSignal>,
}

impl SignalMatrix {
    pub fn new(dim: usize, entries: Vec<CoefficientSignal>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::InvalidModel(format!(
                "a {dim}x{dim} signal matrix needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(Self { dim, entries })
    }
}

impl MatrixFunction for SignalMatrix {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64) -> Result<DMatrix<f64>> {
        let vals = self.entries.iter().map(|s| s.eval(t)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_row_slice(self.dim, self.dim, &vals))
    }
}

/// One component of a sinusoidal history: `offset + amplitude*sin(omega*θ + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidComponent {
    pub offset: f64,
    pub amplitude: f64,
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistoryKind {
    Constant {
        values: Vec<f64>,
    },
    /// Linear interpolation over `theta` (must cover `[-τ, 0]`); `values[i]`
    /// is the state vector at `theta[i]`.
    Table {
        theta: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    Sinusoid {
        components: Vec<SinusoidComponent>,
    },
}

/// Initial segment `φ: [-τ, 0] → ℝᵖ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFunction {
    delay: f64,
    kind: HistoryKind,
    dim: usize,
}

impl HistoryFunction {
    pub fn new(delay: f64, kind: HistoryKind) -> Result<Self> {
        if !(delay > 0.0 && delay.is_finite()) {
            return Err(Error::InvalidModel(format!("delay must be positive, got {delay}")));
        }
        let dim = match &kind {
            HistoryKind::Constant { values } => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel("history values must be finite".into()));
                }
                values.len()
            }
            HistoryKind::Table { theta, values } => {
                if theta.len() < 2 || theta.len() != values.len() {
                    return Err(Error::InvalidModel(
                        "history table needs at least two rows and one state per theta".into(),
                    ));
                }
                if theta.windows(2).any(|w| w[1] <= w[0]) || theta.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel("history theta must be strictly increasing".into()));
                }
                let slack = 1e-12 * delay.max(1.0);
                if theta[0] > -delay + slack || theta[theta.len() - 1] < -slack {
                    return Err(Error::InvalidModel(format!(
                        "history table covers [{}, {}], not [-{delay}, 0]",
                        theta[0],
                        theta[theta.len() - 1]
                    )));
                }
                let p = values[0].len();
                if values.iter().any(|row| row.len() != p || row.iter().any(|v| !v.is_finite())) {
                    return Err(Error::InvalidModel("history rows must be finite and equally sized".into()));
                }
                p
            }
            HistoryKind::Sinusoid { components } => {
                if components.iter().any(|c| ![c.offset, c.amplitude, c.omega, c.phase].iter().all(|v| v.is_finite())) {
                    return Err(Error::InvalidModel("history sinusoid parameters must be finite".into()));
                }
                components.len()
            }
        };
        if dim == 0 {
            return Err(Error::InvalidModel("history has dimension 0".into()));
        }
        Ok(Self { delay, kind, dim })
    }

    pub fn constant(delay: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(delay, HistoryKind::Constant { values })
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &HistoryKind {
        &self.kind
    }

    /// The same history viewed under another delay (table histories must
    /// still cover the new interval).
    pub fn with_delay(&self, delay: f64) -> Result<Self> {
        Self::new(delay, self.kind.clone())
    }

    /// Writes `φ(θ)` into `out`; `θ` is clamped to `[-τ, 0]`.
    pub fn eval_into(&self, theta: f64, out: &mut [f64]) {
        let theta = theta.clamp(-self.delay, 0.0);
        match &self.kind {
            HistoryKind::Constant { values } => out.copy_from_slice(values),
            HistoryKind::Table { theta: grid, values } => {
                let t = theta.clamp(grid[0], grid[grid.len() - 1]);
                let idx = grid.partition_point(|&g| g <= t).clamp(1, grid.len() - 1);
                let (t0, t1) = (grid[idx - 1], grid[idx]);
                let w = (t - t0) / (t1 - t0);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = values[idx - 1][i] + w * (values[idx][i] - values[idx - 1][i]);
                }
            }
            HistoryKind::Sinusoid { components } => {
                for (o, c) in out.iter_mut().zip(components) {
                    *o = c.offset + c.amplitude * (c.omega * theta + c.phase).sin();
                }
            }
        }
    }

    pub fn eval(&self, theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(theta, &mut out);
        out
    }

    /// Derivative `φ'(θ)`, used for the Hermite continuation below `t₀`.
    pub fn derivative_into(&self, theta: f64, out: &mut [f64]) {
        let theta = theta.clamp(-self.delay, 0.0);
        match &self.kind {
            HistoryKind::Constant { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            HistoryKind::Table { theta: grid, values } => {
                let t = theta.clamp(grid[0], grid[grid.len() - 1]);
                let idx = grid.partition_point(|&g| g <= t).clamp(1, grid.len() - 1);
                let dt = grid[idx] - grid[idx - 1];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (values[idx][i] - values[idx - 1][i]) / dt;
                }
            }
            HistoryKind::Sinusoid { components } => {
                for (o, c) in out.iter_mut().zip(components) {
                    *o = c.amplitude * c.omega * (c.omega * theta + c.phase).cos();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_matrix() -> ArmamentMatrix {
        ArmamentMatrix::new(2.0, 1.0, 3.0, 0.25).unwrap()
    }

    #[test]
    fn equilibrium_of_worked_example() {
        let bound = HostilityBound::new(1.0, 1.0).unwrap();
        let p0 = equilibrium(&example_matrix(), &bound).unwrap();
        assert!((p0[0] - 3.2).abs() < 1e-14);
        assert!((p0[1] - 1.8).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_decoupled_and_singular() {
        let bound = HostilityBound::new(1.0, 1.0).unwrap();
        let eye = ArmamentMatrix::new(1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(equilibrium(&eye, &bound).unwrap(), [1.0, 1.0]);
        let singular = ArmamentMatrix::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(equilibrium(&singular, &bound), Err(Error::NoMMatrixRegime { .. })));
    }

    #[test]
    fn rejects_bad_matrix_entries() {
        assert!(ArmamentMatrix::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(ArmamentMatrix::new(1.0, 1.0, -0.1, 0.0).is_err());
        assert!(ArmamentMatrix::new(f64::NAN, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn eval_matrix_examples() {
        let m = TimeVaryingMatrix::constant(&example_matrix());
        assert_eq!(m.eval_matrix(7.0).unwrap(), [[-2.0, 3.0], [0.25, -1.0]]);

        let one = CoefficientSignal::constant(1.0).unwrap();
        let sin_k = CoefficientSignal::sinusoid(0.1, 0.05, 1.0, 0.0).unwrap();
        let m = TimeVaryingMatrix::new(one.clone(), one.clone(), sin_k, one.clone()).unwrap();
        assert_eq!(m.eval_matrix(0.0).unwrap()[0][1], 0.1);

        let table_k = CoefficientSignal::table(vec![0.0, 1.0], vec![0.1, 0.3]).unwrap();
        let m = TimeVaryingMatrix::new(one.clone(), one.clone(), table_k, one).unwrap();
        assert!((m.eval_matrix(0.5).unwrap()[0][1] - 0.2).abs() < 1e-15);
        assert!(matches!(m.eval_matrix(1.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn nonnegative_sinusoid_with_large_amplitude_is_rejected() {
        let s = CoefficientSignal::sinusoid(0.1, 0.2, 1.0, 0.0).unwrap();
        assert!(s.into_nonnegative().is_err());
        let s = CoefficientSignal::sinusoid(0.1, -0.2, 1.0, 0.0).unwrap();
        assert!(s.into_nonnegative().is_err());
        let s = CoefficientSignal::sinusoid(0.2, 0.2, 1.0, 0.0).unwrap();
        assert!(s.into_nonnegative().is_ok());
    }

    #[test]
    fn table_validation() {
        assert!(CoefficientSignal::table(vec![0.0], vec![1.0]).is_err());
        assert!(CoefficientSignal::table(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(CoefficientSignal::table(vec![0.0, 1.0], vec![1.0]).is_err());
        let neg = CoefficientSignal::table(vec![0.0, 1.0], vec![1.0, -1.0]).unwrap();
        assert!(neg.into_nonnegative().is_err());
    }

    #[test]
    fn eval_matrix_continuity_under_refinement() {
        let signals = [
            CoefficientSignal::sinusoid(1.0, 0.5, 3.0, 0.2).unwrap(),
            CoefficientSignal::exp_decay(2.0, 0.7).unwrap(),
            CoefficientSignal::table(vec![0.0, 0.5, 2.0, 3.0], vec![1.0, 2.0, 0.5, 0.7]).unwrap(),
        ];
        for s in &signals {
            let mut prev = f64::INFINITY;
            for k in 1..8 {
                let dt = 0.1 / f64::from(1 << k);
                let diff = (s.eval(1.3 + dt).unwrap() - s.eval(1.3).unwrap()).abs();
                assert!(diff <= prev + 1e-15);
                prev = diff;
            }
            assert!(prev < 0.01);
        }
    }

    #[test]
    fn history_table_must_cover_delay() {
        let kind = HistoryKind::Table { theta: vec![-0.5, 0.0], values: vec![vec![1.0], vec![2.0]] };
        assert!(HistoryFunction::new(1.0, kind.clone()).is_err());
        let h = HistoryFunction::new(0.5, kind).unwrap();
        assert_eq!(h.eval(-0.25), vec![1.5]);
    }

    #[test]
    fn signal_json_roundtrip_and_validation() {
        let s: CoefficientSignal =
            serde_json::from_str(r#"{"kind":"sinusoid","offset":0.1,"amplitude":0.05,"omega":1.0}"#).unwrap();
        assert_eq!(s.eval(0.0).unwrap(), 0.1);
        let text = serde_json::to_string(&s).unwrap();
        let back: CoefficientSignal = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<CoefficientSignal>(r#"{"kind":"table","t":[1,0],"values":[0,0]}"#).is_err());
    }
}
