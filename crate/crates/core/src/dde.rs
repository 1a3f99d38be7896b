//! Fixed-step method-of-steps integrator for `x'(t) = f(t, x(t), x(t - τ))`.
//!
//! Classical RK4 on the uniform grid `h = τ/N`. Delayed values at stage
//! times come from cubic Hermite interpolation of the already computed
//! solution (or from the history below `t₀`); since every delayed stage time
//! lies at or before `t_n + h - τ ≤ t_n`, the needed segment is always
//! complete when a step starts.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::HistoryFunction;

/// Sup-norm above which an integration is aborted as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Minimum number of grid steps per delay interval.
pub const MIN_STEPS_PER_DELAY: usize = 8;

/// Right-hand side `f(t, x(t), x(t-τ), out)`.
pub trait DelayRhs: Sync {
    fn eval(&self, t: f64, current: &[f64], delayed: &[f64], out: &mut [f64]);
}

impl<F> DelayRhs for F
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + Sync,
{
    fn eval(&self, t: f64, current: &[f64], delayed: &[f64], out: &mut [f64]) {
        self(t, current, delayed, out)
    }
}

pub struct DdeProblem<F> {
    rhs: F,
    dim: usize,
    history: HistoryFunction,
    start: f64,
    horizon: f64,
    steps_per_delay: usize,
}

impl<F: DelayRhs> DdeProblem<F> {
    /// The delay is the history's delay; integration runs over
    /// `[start, start + horizon]` and the history is placed on `[start - τ, start]`.
    pub fn new(rhs: F, history: HistoryFunction, horizon: f64, steps_per_delay: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidProblem(format!("horizon must be positive, got {horizon}")));
        }
        if steps_per_delay < MIN_STEPS_PER_DELAY {
            return Err(Error::InvalidProblem(format!(
                "steps per delay must be at least {MIN_STEPS_PER_DELAY}, got {steps_per_delay}"
            )));
        }
        Ok(Self { rhs, dim: history.dim(), history, start: 0.0, horizon, steps_per_delay })
    }

    pub fn with_start(mut self, start: f64) -> Self {
        self.start = start;
        self
    }

    pub fn delay(&self) -> f64 {
        self.history.delay()
    }

    pub fn step(&self) -> f64 {
        self.history.delay() / self.steps_per_delay as f64
    }
}

/// Dense-output numerical solution on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    start: f64,
    step: f64,
    states: Vec<f64>,
    derivatives: Vec<f64>,
    history: HistoryFunction,
}

pub fn integrate<F: DelayRhs>(problem: &DdeProblem<F>) -> Result<Trajectory> {
    let p = problem.dim;
    let n_delay = problem.steps_per_delay;
    let h = problem.step();
    let steps = (problem.horizon / h - 1e-9).ceil().max(1.0) as usize;
    let t0 = problem.start;
    let rhs = &problem.rhs;

    let mut traj = Trajectory {
        dim: p,
        start: t0,
        step: h,
        states: Vec::with_capacity((steps + 1) * p),
        derivatives: Vec::with_capacity((steps + 1) * p),
        history: problem.history.clone(),
    };

    let mut x = problem.history.eval(0.0);
    let mut delayed = vec![0.0; p];
    let mut deriv = vec![0.0; p];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; p], vec![0.0; p], vec![0.0; p], vec![0.0; p]);
    let mut stage = vec![0.0; p];
    // delayed value at t_n + h/2 - τ, computed before the step starts
    let mut delayed_mid = vec![0.0; p];
    let mut delayed_end = vec![0.0; p];

    // f at t0 with the delayed value φ(-τ)
    problem.history.eval_into(-problem.delay(), &mut delayed);
    rhs.eval(t0, &x, &delayed, &mut deriv);
    traj.states.extend_from_slice(&x);
    traj.derivatives.extend_from_slice(&deriv);

    for n in 0..steps {
        let t = t0 + n as f64 * h;
        // delayed values at t - τ (grid index n - N), t + h/2 - τ, t + h - τ
        traj.delayed_grid_value(n as isize - n_delay as isize, &mut delayed);
        traj.delayed_midpoint(n as isize - n_delay as isize, &mut delayed_mid);
        traj.delayed_grid_value(n as isize - n_delay as isize + 1, &mut delayed_end);

        k1.copy_from_slice(&traj.derivatives[n * p..(n + 1) * p]);
        for i in 0..p {
            stage[i] = x[i] + 0.5 * h * k1[i];
        }
        rhs.eval(t + 0.5 * h, &stage, &delayed_mid, &mut k2);
        for i in 0..p {
            stage[i] = x[i] + 0.5 * h * k2[i];
        }
        rhs.eval(t + 0.5 * h, &stage, &delayed_mid, &mut k3);
        for i in 0..p {
            stage[i] = x[i] + h * k3[i];
        }
        rhs.eval(t + h, &stage, &delayed_end, &mut k4);
        let mut sup = 0.0_f64;
        for i in 0..p {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            sup = sup.max(x[i].abs());
        }
        let t_next = t0 + (n + 1) as f64 * h;
        if !sup.is_finite() || sup > DIVERGENCE_THRESHOLD {
            return Err(Error::Diverged { time: t_next });
        }
        rhs.eval(t_next, &x, &delayed_end, &mut deriv);
        if deriv.iter().any(|d| !d.is_finite()) {
            return Err(Error::Diverged { time: t_next });
        }
        traj.states.extend_from_slice(&x);
        traj.derivatives.extend_from_slice(&deriv);
    }
    Ok(traj)
}

fn hermite(y0: f64, d0: f64, y1: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * h * d1
}

impl Trajectory {
    /// Builds a trajectory from grid samples and their derivatives.
    pub fn from_samples(
        start: f64,
        step: f64,
        dim: usize,
        states: Vec<f64>,
        derivatives: Vec<f64>,
        history: HistoryFunction,
    ) -> Result<Self> {
        if dim == 0 || states.is_empty() || !states.len().is_multiple_of(dim) || derivatives.len() != states.len() {
            return Err(Error::InvalidProblem("inconsistent trajectory sample arrays".into()));
        }
        if !(step > 0.0) || history.dim() != dim {
            return Err(Error::InvalidProblem("invalid step or history dimension".into()));
        }
        Ok(Self { dim, start, step, states, derivatives, history })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn delay(&self) -> f64 {
        self.history.delay()
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn derivative(&self, i: usize) -> &[f64] {
        &self.derivatives[i * self.dim..(i + 1) * self.dim]
    }

    pub fn component(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().skip(c).step_by(self.dim).copied()
    }

    fn delayed_grid_value(&self, idx: isize, out: &mut [f64]) {
        if idx >= 0 {
            out.copy_from_slice(self.state(idx as usize));
        } else {
            self.history.eval_into(idx as f64 * self.step, out);
        }
    }

    /// Value at the midpoint of grid interval `[idx, idx + 1]`.
    fn delayed_midpoint(&self, idx: isize, out: &mut [f64]) {
        if idx >= 0 {
            let i = idx as usize;
            let (y0, d0) = (self.state(i), self.derivative(i));
            let (y1, d1) = (self.state(i + 1), self.derivative(i + 1));
            for c in 0..self.dim {
                out[c] = hermite(y0[c], d0[c], y1[c], d1[c], self.step, 0.5);
            }
        } else {
            self.history.eval_into((idx as f64 + 0.5) * self.step, out);
        }
    }

    /// Dense evaluation at any `t ∈ [t₀ - τ, t_end]`; below `t₀` this is the
    /// history itself.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let end = self.end();
        let lo = self.start - self.delay();
        let slack = 1e-12 * (end - lo).abs().max(1.0);
        if t < lo - slack || t > end + slack {
            return Err(Error::Domain { t, lo, hi: end });
        }
        if t < self.start {
            self.history.eval_into(t - self.start, out);
            return Ok(());
        }
        let u = (t - self.start) / self.step;
        let i = (u.floor() as usize).min(self.len().saturating_sub(2));
        if self.len() == 1 {
            out.copy_from_slice(self.state(0));
            return Ok(());
        }
        let s = u - i as f64;
        if s == 0.0 {
            out.copy_from_slice(self.state(i));
            return Ok(());
        }
        let (y0, d0) = (self.state(i), self.derivative(i));
        let (y1, d1) = (self.state(i + 1), self.derivative(i + 1));
        for c in 0..self.dim {
            out[c] = hermite(y0[c], d0[c], y1[c], d1[c], self.step, s);
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// The segment `x_t` sampled at `samples + 1` equispaced points of `[t - τ, t]`.
    pub fn segment(&self, t: f64, samples: usize) -> Result<Vec<Vec<f64>>> {
        let tau = self.delay();
        (0..=samples).map(|j| self.eval(t - tau + tau * j as f64 / samples.max(1) as f64)).collect()
    }

    fn sup_norm(&self, i: usize) -> f64 {
        self.state(i).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// CSV with header `t,x1,...,xp`, one row per grid point, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for c in 1..=self.dim {
            let _ = write!(out, ",x{c}");
        }
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(out, "{:.16e}", self.time(i));
            for v in self.state(i) {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Least-squares slope of `log ‖x‖` over per-delay-interval sup norms on
/// `[t_start, T]`. Negative means contraction; `-∞` when the tail is
/// identically zero.
pub fn decay_rate(traj: &Trajectory, t_start: f64) -> Result<f64> {
    const REQUIRED: usize = 5;
    let tau = traj.delay();
    let per = (tau / traj.step()).round().max(1.0) as usize;
    let first = ((t_start - traj.start()) / traj.step()).ceil().max(0.0) as usize;
    let intervals = if traj.len() > first { (traj.len() - 1 - first) / per } else { 0 };
    if intervals < REQUIRED {
        return Err(Error::InsufficientTail { intervals, required: REQUIRED });
    }
    let mut pts = Vec::with_capacity(intervals);
    for j in 0..intervals {
        let lo = first + j * per;
        let sup = (lo..=lo + per).map(|i| traj.sup_norm(i)).fold(0.0_f64, f64::max);
        if sup == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        pts.push((traj.time(lo), sup.ln()));
    }
    Ok(least_squares_slope(&pts))
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in pts {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn centered_tail(traj: &Trajectory, component: usize, t_start: f64) -> Result<(usize, Vec<f64>)> {
    if component >= traj.dim() {
        return Err(Error::InvalidProblem(format!("component {component} out of range for dimension {}", traj.dim())));
    }
    let first = ((t_start - traj.start()) / traj.step()).ceil().max(0.0) as usize;
    let tail: Vec<f64> = traj.component(component).skip(first).collect();
    if tail.len() < 2 {
        return Err(Error::NoOscillation);
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    Ok((first, tail.into_iter().map(|v| v - mean).collect()))
}

fn sign_changes(centered: &[f64]) -> usize {
    let mut last = 0.0_f64;
    let mut changes = 0;
    for &v in centered {
        if v != 0.0 {
            if last != 0.0 && (v > 0.0) != (last > 0.0) {
                changes += 1;
            }
            last = v;
        }
    }
    changes
}

/// Half the peak-to-peak range of one component over `[t_start, T]`.
pub fn oscillation_amplitude(traj: &Trajectory, component: usize, t_start: f64) -> Result<f64> {
    let (_, centered) = centered_tail(traj, component, t_start)?;
    if sign_changes(&centered) < 3 {
        return Err(Error::NoOscillation);
    }
    let max = centered.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = centered.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(0.5 * (max - min))
}

/// Mean spacing of upward zero crossings of the centered component.
pub fn oscillation_period(traj: &Trajectory, component: usize, t_start: f64) -> Result<f64> {
    let (first, centered) = centered_tail(traj, component, t_start)?;
    let mut crossings = Vec::new();
    for (i, w) in centered.windows(2).enumerate() {
        if w[0] < 0.0 && w[1] >= 0.0 {
            let frac = -w[0] / (w[1] - w[0]);
            crossings.push(traj.time(first + i) + frac * traj.step());
        }
    }
    if crossings.len() < 3 {
        return Err(Error::NoOscillation);
    }
    Ok((crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn scalar_history(tau: f64, c: f64) -> HistoryFunction {
        HistoryFunction::constant(tau, vec![c]).unwrap()
    }

    #[test]
    fn zero_field_gives_constant_trajectory() {
        let problem = DdeProblem::new(
            |_t: f64, _x: &[f64], _xd: &[f64], out: &mut [f64]| out[0] = 0.0,
            scalar_history(1.0, 2.5),
            10.0,
            16,
        )
        .unwrap();
        let traj = integrate(&problem).unwrap();
        assert!(traj.component(0).all(|v| v == 2.5));
        assert!(decay_rate(&traj, 2.0).unwrap().abs() < 1e-9);
    }

    #[test]
    fn pure_exponential_decay_rate() {
        let problem = DdeProblem::new(
            |_t: f64, x: &[f64], _xd: &[f64], out: &mut [f64]| out[0] = -x[0],
            scalar_history(1.0, 1.0),
            20.0,
            32,
        )
        .unwrap();
        let traj = integrate(&problem).unwrap();
        let rate = decay_rate(&traj, 5.0).unwrap();
        assert!((rate + 1.0).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn scalar_hayes_boundary_sustains_oscillation() {
        let run = |n: usize| {
            let problem = DdeProblem::new(
                |_t: f64, _x: &[f64], xd: &[f64], out: &mut [f64]| out[0] = -(PI / 2.0) * xd[0],
                scalar_history(1.0, 1.0),
                40.0,
                n,
            )
            .unwrap();
            integrate(&problem).unwrap()
        };
        for n in [64, 128] {
            let traj = run(n);
            let early = oscillation_amplitude(&traj, 0, 20.0).unwrap();
            let peak = |lo: f64, hi: f64| {
                (0..traj.len())
                    .filter(|&i| traj.time(i) >= lo && traj.time(i) <= hi)
                    .map(|i| traj.state(i)[0].abs())
                    .fold(0.0_f64, f64::max)
            };
            let (a, b) = (peak(20.0, 24.0), peak(36.0, 40.0));
            assert!(early > 0.0);
            assert!((b / a - 1.0).abs() < 0.05, "N={n}: {a} -> {b}");
        }
    }

    #[test]
    fn diverging_problem_reports_blow_up_time() {
        let problem = DdeProblem::new(
            |_t: f64, x: &[f64], _xd: &[f64], out: &mut [f64]| out[0] = 5.0 * x[0],
            scalar_history(1.0, 1.0),
            100.0,
            16,
        )
        .unwrap();
        match integrate(&problem) {
            Err(Error::Diverged { time }) => assert!(time > 5.0 && time < 6.0, "{time}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_coarse_grids() {
        let r = DdeProblem::new(
            |_t: f64, _x: &[f64], _xd: &[f64], out: &mut [f64]| out[0] = 0.0,
            scalar_history(1.0, 1.0),
            1.0,
            4,
        );
        assert!(r.is_err());
    }

    #[test]
    fn dense_output_matches_grid_and_history() {
        let problem = DdeProblem::new(
            |_t: f64, _x: &[f64], xd: &[f64], out: &mut [f64]| out[0] = -xd[0],
            HistoryFunction::new(
                1.0,
                crate::model::HistoryKind::Sinusoid {
                    components: vec![crate::model::SinusoidComponent {
                        offset: 0.0,
                        amplitude: 1.0,
                        omega: 2.0,
                        phase: 0.3,
                    }],
                },
            )
            .unwrap(),
            5.0,
            16,
        )
        .unwrap();
        let traj = integrate(&problem).unwrap();
        for i in [0, 7, 33, traj.len() - 1] {
            assert_eq!(traj.eval(traj.time(i)).unwrap()[0], traj.state(i)[0]);
        }
        assert_eq!(traj.eval(-0.5).unwrap()[0], (2.0 * -0.5_f64 + 0.3).sin());
        assert!(traj.eval(-1.5).is_err());
        assert!(traj.eval(traj.end() + 1.0).is_err());
    }

    #[test]
    fn amplitude_of_sampled_sinusoid() {
        let h = 0.01;
        let n = 2001;
        let states: Vec<f64> = (0..n).map(|i| 0.5 * (i as f64 * h).sin()).collect();
        let derivs: Vec<f64> = (0..n).map(|i| 0.5 * (i as f64 * h).cos()).collect();
        let traj = Trajectory::from_samples(0.0, h, 1, states, derivs, scalar_history(0.1, 0.0)).unwrap();
        let amp = oscillation_amplitude(&traj, 0, 0.0).unwrap();
        assert!((amp - 0.5).abs() < 0.005, "{amp}");
        let period = oscillation_period(&traj, 0, 0.0).unwrap();
        assert!((period - 2.0 * PI).abs() < 0.05, "{period}");
    }

    #[test]
    fn decayed_trajectory_has_no_oscillation() {
        let traj =
            Trajectory::from_samples(0.0, 0.1, 1, vec![0.0; 100], vec![0.0; 100], scalar_history(1.0, 0.0)).unwrap();
        assert_eq!(oscillation_amplitude(&traj, 0, 0.0), Err(Error::NoOscillation));
        assert_eq!(decay_rate(&traj, 0.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn short_tail_is_rejected() {
        let problem = DdeProblem::new(
            |_t: f64, x: &[f64], _xd: &[f64], out: &mut [f64]| out[0] = -x[0],
            scalar_history(1.0, 1.0),
            6.0,
            16,
        )
        .unwrap();
        let traj = integrate(&problem).unwrap();
        assert!(matches!(decay_rate(&traj, 3.0), Err(Error::InsufficientTail { .. })));
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let problem = DdeProblem::new(
            |_t: f64, x: &[f64], _xd: &[f64], out: &mut [f64]| {
                out[0] = -x[1];
                out[1] = x[0];
            },
            HistoryFunction::constant(0.5, vec![1.0, 0.0]).unwrap(),
            1.0,
            8,
        )
        .unwrap();
        let csv = integrate(&problem).unwrap().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1,x2"));
        let row: Vec<f64> = lines.nth(3).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row.len(), 3);
        assert_eq!(row[0], 3.0 * 0.5 / 8.0);
    }
}
