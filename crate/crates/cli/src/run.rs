//! Command dispatch: every command produces named text artifacts plus a
//! `report.json`, and nothing touches the file system until all succeed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use race_dde::autonomous::{
    bifurcation_ladder, characteristic_roots, hill_thresholds, ladder_csv, rho_pair, stability_verdict, tau_minus,
    Branch, StabilityVerdict,
};
use race_dde::criteria::{
    cross_validate, envelope_check, nominal_matrix, ode_lyapunov_check, perturbation_check,
    unit_weight_dominance_check, weighted_dominance_check, AuditWindow, Criterion, CriterionVerdict, Holds,
    ValidationModel,
};
use race_dde::dde::{decay_rate, integrate, DdeProblem};
use race_dde::hopf::{
    hopf_coefficients, physical_amplitudes, predicted_amplitude, verify_hopf_by_simulation, HopfReport,
    HopfSimulationConfig,
};
use race_dde::io::{parse_model, Model};
use race_dde::model::{equilibrium, ArmamentMatrix, CoefficientSignal, MatrixFunction, SignalKind, TimeVaryingMatrix};
use race_dde::special::{mn_series, series_csv, special_solution_check, triangular_check, SpecialSeriesConfig};

use crate::args::{Cli, Command, GridRange};
use crate::chart;
use crate::error::CliError;

/// Environment variable capping the sweep's worker threads.
pub const THREADS_VAR: &str = "DDE_RACE_THREADS";

/// Files produced by a command, in write order; `report.json` comes last.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
}

impl Artifacts {
    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_owned(), contents));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    /// Writes every file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        self.files
            .iter()
            .map(|(name, contents)| {
                let path = dir.join(name);
                std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}

/// Pretty JSON with a trailing newline; re-reading and re-serializing it
/// reproduces the same bytes.
pub fn render_report(report: &Value) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("JSON values always serialize");
    text.push('\n');
    text
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types always serialize")
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn load_model(path: &Path) -> Result<Model, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(parse_model(&text)?)
}

/// Parses, runs and writes; returns the written paths.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let common = cli.command.common();
    let model = load_model(&common.model)?;
    let artifacts = execute(&cli.command, &model)?;
    artifacts.write_to(&common.out)
}

pub fn execute(command: &Command, model: &Model) -> Result<Artifacts, CliError> {
    let mut art = Artifacts::default();
    let mut report = serde_json::Map::new();
    report.insert("command".into(), json!(command.name()));
    match command {
        Command::AnalyzeAutonomous { ladder, roots, .. } => analyze(model, *ladder, *roots, &mut art, &mut report)?,
        Command::Hopf { point, mu, simulate, horizon_delays, .. } => {
            hopf(model, *point, &mu.0, *simulate, *horizon_delays, &mut art, &mut report)?
        }
        Command::Simulate { tau, horizon, steps_per_delay, .. } => {
            simulate(model, *tau, *horizon, *steps_per_delay, &mut art, &mut report)?
        }
        Command::CheckNonautonomous { window, validate, seed, .. } => {
            check(model, *window, *validate, *seed, &mut art, &mut report)?
        }
        Command::SpecialSolutions { order, window, norm, .. } => {
            let cfg = SpecialSeriesConfig { order: *order, norm: *norm, ..Default::default() };
            special(model, &cfg, *window, &mut art, &mut report)?
        }
        Command::Sweep { tau_range, k_range, .. } => sweep(model, tau_range, k_range.as_ref(), &mut art, &mut report)?,
    }
    art.add("report.json", render_report(&Value::Object(report)));
    Ok(art)
}

type Report = serde_json::Map<String, Value>;

fn analyze(
    model: &Model,
    ladder_n: u32,
    root_count: usize,
    art: &mut Artifacts,
    report: &mut Report,
) -> Result<(), CliError> {
    let m = model.constant_matrix()?;
    report.insert("matrix".into(), to_value(&m));
    report.insert("determinant".into(), json!(m.determinant()));
    report.insert("discriminant".into(), json!(m.discriminant()));
    if !m.is_m_matrix_regime() {
        report.insert("verdict".into(), to_value(&StabilityVerdict::Inapplicable));
        report.insert("notes".into(), json!(["det A <= 0: no positive equilibrium; thresholds are not defined"]));
        return Ok(());
    }
    let (rho_minus, rho_plus) = rho_pair(&m)?;
    let threshold = tau_minus(&m)?;
    let (hill, corrected) = hill_thresholds(&m)?;
    let ladder = bifurcation_ladder(&m, ladder_n)?;
    report.insert("rho_minus".into(), json!(rho_minus));
    report.insert("rho_plus".into(), json!(rho_plus));
    report.insert("tau_minus".into(), json!(threshold));
    report.insert(
        "hill_comparison".into(),
        json!({ "hill_threshold": hill, "corrected_threshold": corrected, "ratio": hill / corrected }),
    );
    report.insert("ladder".into(), to_value(&ladder));
    if let Some(bound) = &model.bound {
        report.insert("equilibrium".into(), json!(equilibrium(&m, bound)?));
    }
    if let Some(tau) = model.delay {
        let roots = characteristic_roots(&m, tau, root_count)?;
        report.insert("delay".into(), json!(tau));
        report.insert("verdict".into(), to_value(&stability_verdict(&m, tau)));
        report.insert("roots".into(), to_value(&roots));
    }
    let csv = ladder_csv(&ladder);
    art.add("ladder.svg", chart::ladder_chart(&csv)?);
    art.add("ladder.csv", csv);
    Ok(())
}

fn hopf(
    model: &Model,
    (n, branch): (u32, Branch),
    mus: &[f64],
    simulate: bool,
    horizon_delays: f64,
    art: &mut Artifacts,
    report: &mut Report,
) -> Result<(), CliError> {
    let m = model.constant_matrix()?;
    let cubic = model.cubic_or_zero();
    let point = bifurcation_ladder(&m, n)?
        .into_iter()
        .find(|p| p.n == n && p.branch == branch)
        .ok_or_else(|| CliError::Usage(format!("no ladder point {n},{}", branch.as_str())))?;
    let data = hopf_coefficients(&m, &cubic, &point)?;
    report.insert("point".into(), to_value(&point));
    report.insert("normal_form".into(), to_value(&HopfReport::new(&data, mus)));
    report.insert("eigenvector".into(), json!(data.eigenvector()));

    let sim = if simulate {
        let cfg = HopfSimulationConfig { horizon_delays, ..Default::default() };
        let r = verify_hopf_by_simulation(&m, &cubic, &point, mus, &cfg)?;
        report.insert("simulation".into(), to_value(&r));
        Some(r)
    } else {
        None
    };

    let mut csv = String::from("mu,sqrt_mu,r_star,predicted_amplitude,simulated_amplitude,period,status\n");
    for (i, &mu) in mus.iter().enumerate() {
        let r_star = predicted_amplitude(&data, mu);
        let outcome = sim.as_ref().map(|s| &s.outcomes[i]);
        let status = outcome.map(|o| to_value(&o.status).as_str().unwrap_or_default().to_owned()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{status}",
            num(mu),
            if mu > 0.0 { num(mu.sqrt()) } else { String::new() },
            opt_num(r_star),
            opt_num(r_star.map(|r| physical_amplitudes(&data, r)[0])),
            opt_num(outcome.and_then(|o| o.amplitude)),
            opt_num(outcome.and_then(|o| o.period)),
        );
    }
    match chart::hopf_chart(&csv) {
        Ok(svg) => art.add("hopf.svg", svg),
        Err(_) => {
            report.insert("notes".into(), json!(["no positive-mu amplitudes to chart"]));
        }
    }
    art.add("hopf.csv", csv);
    Ok(())
}

fn simulate(
    model: &Model,
    tau: Option<f64>,
    horizon: f64,
    steps: usize,
    art: &mut Artifacts,
    report: &mut Report,
) -> Result<(), CliError> {
    let tau = match tau {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(CliError::Usage(format!("--tau must be positive, got {t}"))),
        None => model.require_delay()?,
    };
    let matrix = model.time_varying_matrix();
    let (lo, hi) = matrix.domain();
    if lo > -tau || hi < horizon {
        return Err(CliError::Validation(format!(
            "coefficient domain [{lo}, {hi}] does not cover the simulation span [{}, {horizon}]",
            -tau
        )));
    }
    let cubic = model.cubic_or_zero();
    let rhs = |t: f64, _x: &[f64], xd: &[f64], out: &mut [f64]| {
        let [a, b, k, l] = matrix.coefficients(t).unwrap_or([f64::NAN; 4]);
        let (fx, fy) = cubic.eval(xd[0], xd[1]);
        out[0] = -a * xd[0] + k * xd[1] + fx;
        out[1] = l * xd[0] - b * xd[1] + fy;
    };
    let problem = DdeProblem::new(rhs, model.history_for(tau)?, horizon, steps)?;
    let traj = integrate(&problem)?;
    report.insert("system".into(), json!("x'(t) = A(t) x(t - tau) + F3(x(t - tau))/6"));
    report.insert("tau".into(), json!(tau));
    report.insert("horizon".into(), json!(horizon));
    report.insert("steps_per_delay".into(), json!(steps));
    report.insert("final_state".into(), json!(traj.state(traj.len() - 1)));
    let rate = decay_rate(&traj, 0.5 * horizon).ok();
    report.insert("decay_rate".into(), json!(rate));
    if rate.is_none() {
        report.insert("notes".into(), json!(["horizon too short for a decay-rate fit"]));
    }
    let csv = traj.to_csv();
    art.add("trajectory.svg", chart::trajectory_chart(&csv)?);
    art.add("trajectory.csv", csv);
    Ok(())
}

fn inconclusive(criterion: Criterion, note: String) -> CriterionVerdict {
    CriterionVerdict::new(criterion, Holds::Inconclusive, 0.0, None).note(note)
}

fn check(
    model: &Model,
    [t0, t1]: [f64; 2],
    validate: bool,
    seed: u64,
    art: &mut Artifacts,
    report: &mut Report,
) -> Result<(), CliError> {
    let tau = model.require_delay()?;
    let m = model.time_varying_matrix();
    let w = AuditWindow::for_delay(t0, t1, tau)?;
    let env = model.envelopes_or_zero()?;

    let mut verdicts = Vec::new();
    let (uniform, asymptotic) = ode_lyapunov_check(&m, &w)?;
    verdicts.extend([uniform, asymptotic]);
    let dominance = weighted_dominance_check(&m, tau, None, &w)?;
    verdicts.extend([dominance.weighted.clone(), dominance.scaled.clone()]);
    verdicts.push(unit_weight_dominance_check(&m, tau, &w)?);
    let envelope = envelope_check(&m, tau, &env.g, &env.h, &w)?;
    verdicts.extend([envelope.attractor.clone(), envelope.exponential.clone()]);
    let mut perturbation_detail = Value::Null;
    match nominal_matrix(&m, &w)
        .and_then(|(nominal, delta)| Ok((nominal, delta, perturbation_check(&nominal, tau, delta)?)))
    {
        Ok((nominal, delta, p)) => {
            perturbation_detail = json!({ "nominal": to_value(&nominal), "delta": delta, "alpha": p.alpha });
            verdicts.push(p.verdict);
        }
        Err(e) => verdicts.push(inconclusive(Criterion::Perturbation, format!("no usable nominal matrix: {e}"))),
    }
    let special = special_solution_check(&m, tau, &w, &SpecialSeriesConfig::default())?;
    verdicts.push(special.verdict.clone());

    report.insert("delay".into(), json!(tau));
    report.insert("window".into(), to_value(&w));
    report.insert("verdicts".into(), to_value(&verdicts));
    report.insert(
        "details".into(),
        json!({
            "dominance": { "weight": dominance.weight, "alpha": dominance.alpha },
            "envelope": { "sup_b1": envelope.sup_b1, "sup_b2": envelope.sup_b2 },
            "perturbation": perturbation_detail,
            "special_solution": to_value(&special),
        }),
    );
    if validate {
        let vm = ValidationModel { matrix: &m, tau, envelopes: Some((&env.g, &env.h)) };
        report.insert("validation".into(), to_value(&cross_validate(&vm, &verdicts, &w, seed)?));
    }

    let mut csv = String::from("criterion,holds,margin,witness_t\n");
    for v in &verdicts {
        let _ = writeln!(csv, "{},{},{},{}", v.criterion, v.holds.as_str(), num(v.margin), opt_num(v.witness_t));
    }
    art.add("verdicts.csv", csv);
    let mut coeffs = String::from("t,a,b,k,l\n");
    for t in w.grid() {
        let [a, b, k, l] = m.coefficients(t)?;
        let _ = writeln!(coeffs, "{},{},{},{},{}", num(t), num(a), num(b), num(k), num(l));
    }
    art.add("coefficients.svg", chart::coefficient_chart(&coeffs)?);
    art.add("coefficients.csv", coeffs);
    Ok(())
}

fn special(
    model: &Model,
    cfg: &SpecialSeriesConfig,
    window: Option<[f64; 2]>,
    art: &mut Artifacts,
    report: &mut Report,
) -> Result<(), CliError> {
    cfg.validate()?;
    let tau = model.require_delay()?;
    let m = model.time_varying_matrix();
    let [t0, t1] = window.unwrap_or([0.0, 40.0 * tau]);
    let w = AuditWindow::for_delay(t0, t1, tau)?;
    let series = mn_series(&m as &dyn MatrixFunction, tau, w.t_end, cfg)?;
    let outcome = special_solution_check(&m, tau, &w, cfg)?;
    let sum: Vec<Vec<f64>> = series.sum.row_iter().map(|r| r.iter().copied().collect()).collect();
    report.insert("delay".into(), json!(tau));
    report.insert("window".into(), to_value(&w));
    report.insert(
        "series".into(),
        json!({
            "t": series.t,
            "order": cfg.order,
            "norm": to_value(&cfg.norm),
            "m": series.m,
            "sum": sum,
            "tail_bound": series.tail_bound,
            "majorant_tail_bound": series.majorant_tail_bound,
        }),
    );
    report.insert("outcome".into(), to_value(&outcome));
    if let Some(a) = triangular_restraint(&m) {
        report.insert("triangular".into(), to_value(&triangular_check(a, m.k(), tau, &w)?));
    }
    let csv = series_csv(&series);
    match chart::series_chart(&csv) {
        Ok(svg) => art.add("series.svg", svg),
        Err(_) => {
            report.insert("notes".into(), json!(["series terms are all zero; nothing to chart"]));
        }
    }
    art.add("series.csv", csv);
    Ok(())
}

/// The common restraint `a` when the matrix has the triangular form
/// `[[-a, k(t)], [0, -a]]`.
fn triangular_restraint(m: &TimeVaryingMatrix) -> Option<f64> {
    let constant = |s: &CoefficientSignal| match s.kind() {
        SignalKind::Constant { value } => Some(*value),
        _ => None,
    };
    let (a, b, l) = (constant(m.a())?, constant(m.b())?, constant(m.l())?);
    (a == b && a > 0.0 && l == 0.0).then_some(a)
}

/// Worker count: `DDE_RACE_THREADS` when set, else available parallelism.
pub fn thread_cap() -> Result<usize, CliError> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

struct SweepPoint {
    k: f64,
    tau: f64,
    verdict: StabilityVerdict,
    dominant_re: Option<f64>,
}

fn sweep_point(base: &ArmamentMatrix, k: f64, tau: f64) -> Result<SweepPoint, CliError> {
    let m = ArmamentMatrix::new(base.a(), base.b(), k, base.l())?;
    let verdict = stability_verdict(&m, tau);
    let dominant_re = if verdict == StabilityVerdict::Inapplicable {
        None
    } else {
        characteristic_roots(&m, tau, 4)?.dominant().map(|r| r.original_scale(tau).re)
    };
    Ok(SweepPoint { k, tau, verdict, dominant_re })
}

fn sweep(
    model: &Model,
    tau_range: &GridRange,
    k_range: Option<&GridRange>,
    art: &mut Artifacts,
    report: &mut Report,
) -> Result<(), CliError> {
    if tau_range.lo <= 0.0 {
        return Err(CliError::Usage("delays in --tau-range must be positive".into()));
    }
    if k_range.is_some_and(|r| r.lo < 0.0) {
        return Err(CliError::Usage("--k-range must be nonnegative".into()));
    }
    let base = model.constant_matrix()?;
    let ks = k_range.map(GridRange::points).unwrap_or_else(|| vec![base.k()]);
    let taus = tau_range.points();
    let grid: Vec<(f64, f64)> = ks.iter().flat_map(|&k| taus.iter().map(move |&t| (k, t))).collect();
    let threads = thread_cap()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} workers: {e}")))?;
    let points = pool.install(|| {
        grid.par_iter().map(|&(k, tau)| sweep_point(&base, k, tau)).collect::<Result<Vec<_>, CliError>>()
    })?;

    let mut csv = String::from("k,tau,verdict,dominant_re\n");
    for p in &points {
        let _ = writeln!(csv, "{},{},{},{}", num(p.k), num(p.tau), p.verdict.as_str(), opt_num(p.dominant_re));
    }
    let mut transitions = Vec::new();
    for row in points.chunks(taus.len()) {
        for pair in row.windows(2) {
            if pair[0].verdict != pair[1].verdict {
                transitions.push(json!({
                    "k": pair[0].k,
                    "from": pair[0].verdict.as_str(),
                    "to": pair[1].verdict.as_str(),
                    "tau_interval": [pair[0].tau, pair[1].tau],
                }));
            }
        }
    }
    let thresholds: Vec<Value> = ks
        .iter()
        .map(|&k| {
            let t = ArmamentMatrix::new(base.a(), base.b(), k, base.l()).ok().and_then(|m| tau_minus(&m).ok());
            json!({ "k": k, "tau_minus": t })
        })
        .collect();
    report.insert("grid".into(), json!({ "k": ks, "tau": taus }));
    report.insert("thresholds".into(), json!(thresholds));
    report.insert("transitions".into(), json!(transitions));
    art.add("sweep.svg", chart::sweep_chart(&csv)?);
    art.add("sweep.csv", csv);
    Ok(())
}
