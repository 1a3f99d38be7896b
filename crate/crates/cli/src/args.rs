//! Command-line grammar and the list parsers behind it.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use race_dde::autonomous::Branch;
use race_dde::special::Norm;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "race-dde", version, about = "Delayed arms-race stability toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model JSON document.
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Thresholds, bifurcation ladder, roots and verdict of a constant model.
    AnalyzeAutonomous {
        #[command(flatten)]
        common: Common,
        /// Highest ladder index.
        #[arg(long, default_value_t = 4)]
        ladder: u32,
        /// Number of root branches to follow.
        #[arg(long, default_value_t = 6)]
        roots: usize,
    },
    /// Normal-form coefficients at a ladder point, optionally checked by simulation.
    Hopf {
        #[command(flatten)]
        common: Common,
        /// Ladder point as `n,branch`, for example `0,minus`.
        #[arg(long, default_value = "0,minus", value_parser = parse_point)]
        point: (u32, Branch),
        /// Delay offsets μ from the ladder point.
        #[arg(long, value_parser = parse_float_list)]
        mu: FloatList,
        /// Simulate each μ and measure amplitude and period.
        #[arg(long)]
        simulate: bool,
        /// Simulation horizon in delays.
        #[arg(long, default_value_t = 1200.0)]
        horizon_delays: f64,
    },
    /// Integrates the model and writes the trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Delay; defaults to the model's.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 32)]
        steps_per_delay: usize,
    },
    /// Runs every time-varying criterion over an audit window.
    CheckNonautonomous {
        #[command(flatten)]
        common: Common,
        /// Audit window as `T0,T1`.
        #[arg(long, value_parser = parse_window)]
        window: [f64; 2],
        /// Cross-check "yes" verdicts against simulated trajectories.
        #[arg(long)]
        validate: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Special-solution series, constants and stability check.
    SpecialSolutions {
        #[command(flatten)]
        common: Common,
        /// Series truncation order.
        #[arg(long, default_value_t = 20)]
        order: usize,
        /// Audit window as `T0,T1`; defaults to `0,40τ`.
        #[arg(long, value_parser = parse_window)]
        window: Option<[f64; 2]>,
        #[arg(long, default_value = "max-row-sum")]
        norm: Norm,
    },
    /// Stability verdicts over a delay grid, optionally crossed with a `k` grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Delay grid as `A,B,K`: K points from A to B.
        #[arg(long, value_parser = parse_range)]
        tau_range: GridRange,
        /// Threat-coefficient grid as `A,B,K`.
        #[arg(long, value_parser = parse_range)]
        k_range: Option<GridRange>,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::AnalyzeAutonomous { common, .. }
            | Command::Hopf { common, .. }
            | Command::Simulate { common, .. }
            | Command::CheckNonautonomous { common, .. }
            | Command::SpecialSolutions { common, .. }
            | Command::Sweep { common, .. } => common,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::AnalyzeAutonomous { .. } => "analyze-autonomous",
            Command::Hopf { .. } => "hopf",
            Command::Simulate { .. } => "simulate",
            Command::CheckNonautonomous { .. } => "check-nonautonomous",
            Command::SpecialSolutions { .. } => "special-solutions",
            Command::Sweep { .. } => "sweep",
        }
    }
}

/// A comma-separated list given as one argument.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

fn parse_float_list(text: &str) -> Result<FloatList, CliError> {
    parse_list(text).map(FloatList)
}

/// `K` evenly spaced points from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridRange {
    pub fn points(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count).map(|i| if i + 1 == self.count { self.hi } else { self.lo + i as f64 * step }).collect()
    }
}

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

/// Comma-separated finite numbers; at least one.
pub fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    let values = text
        .split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| usage(format!("not a finite number: {s:?}")))
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    if values.is_empty() {
        return Err(usage("empty list".into()));
    }
    Ok(values)
}

pub fn parse_window(text: &str) -> Result<[f64; 2], CliError> {
    match parse_list(text)?[..] {
        [lo, hi] if lo < hi => Ok([lo, hi]),
        [_, _] => Err(usage(format!("window must be increasing: {text:?}"))),
        _ => Err(usage(format!("window needs exactly two numbers: {text:?}"))),
    }
}

pub fn parse_range(text: &str) -> Result<GridRange, CliError> {
    let v = parse_list(text)?;
    let [lo, hi, count] = v[..] else {
        return Err(usage(format!("range needs three numbers A,B,K: {text:?}")));
    };
    if !(lo < hi) {
        return Err(usage(format!("range must be increasing: {text:?}")));
    }
    if !(count >= 2.0 && count.fract() == 0.0 && count <= 1e6) {
        return Err(usage(format!("range needs an integer count of at least 2: {text:?}")));
    }
    Ok(GridRange { lo, hi, count: count as usize })
}

pub fn parse_point(text: &str) -> Result<(u32, Branch), CliError> {
    let (n, branch) = text.split_once(',').ok_or_else(|| usage(format!("point must be `n,branch`: {text:?}")))?;
    let n = n.trim().parse::<u32>().map_err(|_| usage(format!("bad ladder index: {n:?}")))?;
    let branch = branch.trim().parse::<Branch>().map_err(|_| usage(format!("bad branch: {branch:?}")))?;
    Ok((n, branch))
}
