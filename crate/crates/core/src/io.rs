//! Model documents.
//!
//! ```json
//! {
//!   "matrix": { "constant": { "a": 2, "b": 1, "k": 3, "l": 0.25 } },
//!   "hostility_cubic": { "g30": 1 },
//!   "hostility_bound": { "b1bar": 1, "b2bar": 1 },
//!   "delay": 0.5,
//!   "history": { "kind": "constant", "values": [0.1, 0.1] }
//! }
//! ```
//!
//! `matrix` may instead be `{ "signals": { "a": <signal>, ... } }` with
//! tagged signal objects such as `{ "kind": "sinusoid", "offset": 0.1,
//! "amplitude": 0.05, "omega": 1 }`. Optional `envelopes: { "g": <signal>,
//! "h": <signal> }` bound the hostility terms of time-varying models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ArmamentMatrix, CoefficientSignal, CubicHostility, HistoryFunction, HistoryKind, HostilityBound, TimeVaryingMatrix,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Constant(ArmamentMatrix),
    Signals(TimeVaryingMatrix),
}

/// Second-order hostility coefficients; accepted only when all vanish.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticHostility {
    #[serde(default)]
    pub g20: f64,
    #[serde(default)]
    pub g11: f64,
    #[serde(default)]
    pub g02: f64,
    #[serde(default)]
    pub h20: f64,
    #[serde(default)]
    pub h11: f64,
    #[serde(default)]
    pub h02: f64,
}

impl QuadraticHostility {
    pub fn is_zero(&self) -> bool {
        [self.g20, self.g11, self.g02, self.h20, self.h11, self.h02].iter().all(|&c| c == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelopes {
    pub g: CoefficientSignal,
    pub h: CoefficientSignal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    matrix: MatrixSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hostility_cubic: Option<CubicHostility>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hostility_quadratic: Option<QuadraticHostility>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hostility_bound: Option<HostilityBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    envelopes: Option<Envelopes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    history: Option<HistoryKind>,
}

/// A validated model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct Model {
    pub matrix: MatrixSpec,
    pub cubic: Option<CubicHostility>,
    pub bound: Option<HostilityBound>,
    pub envelopes: Option<Envelopes>,
    pub delay: Option<f64>,
    pub history: Option<HistoryKind>,
}

impl TryFrom<RawModel> for Model {
    type Error = Error;
    fn try_from(raw: RawModel) -> Result<Self> {
        if let Some(q) = raw.hostility_quadratic {
            if !q.is_zero() {
                return Err(Error::InvalidModel(
                    "quadratic hostility terms are not supported: they feed the cubic normal form \
                     through a longer computation; only cubic terms are handled"
                        .into(),
                ));
            }
        }
        if let Some(c) = &raw.hostility_cubic {
            c.validate()?;
        }
        let envelopes = match raw.envelopes {
            Some(e) => Some(Envelopes { g: e.g.into_nonnegative()?, h: e.h.into_nonnegative()? }),
            None => None,
        };
        if let Some(tau) = raw.delay {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::InvalidModel(format!("delay must be positive, got {tau}")));
            }
            if let Some(h) = &raw.history {
                let hist = HistoryFunction::new(tau, h.clone())?;
                if hist.dim() != 2 {
                    return Err(Error::InvalidModel(format!("history must be 2-dimensional, got {}", hist.dim())));
                }
            }
        }
        Ok(Model {
            matrix: raw.matrix,
            cubic: raw.hostility_cubic,
            bound: raw.hostility_bound,
            envelopes,
            delay: raw.delay,
            history: raw.history,
        })
    }
}

impl From<Model> for RawModel {
    fn from(m: Model) -> Self {
        RawModel {
            matrix: m.matrix,
            hostility_cubic: m.cubic,
            hostility_quadratic: None,
            hostility_bound: m.bound,
            envelopes: m.envelopes,
            delay: m.delay,
            history: m.history,
        }
    }
}

/// Default initial perturbation when a model gives no history.
pub const DEFAULT_HISTORY: [f64; 2] = [0.1, 0.1];

impl Model {
    pub fn constant_matrix(&self) -> Result<ArmamentMatrix> {
        match &self.matrix {
            MatrixSpec::Constant(m) => Ok(*m),
            MatrixSpec::Signals(_) => Err(Error::InvalidModel("this analysis needs a constant matrix".into())),
        }
    }

    pub fn time_varying_matrix(&self) -> TimeVaryingMatrix {
        match &self.matrix {
            MatrixSpec::Constant(m) => TimeVaryingMatrix::constant(m),
            MatrixSpec::Signals(m) => m.clone(),
        }
    }

    pub fn cubic_or_zero(&self) -> CubicHostility {
        self.cubic.unwrap_or_default()
    }

    pub fn require_delay(&self) -> Result<f64> {
        self.delay.ok_or_else(|| Error::InvalidModel("model has no delay".into()))
    }

    /// The model's history under delay `tau`, or the constant default.
    pub fn history_for(&self, tau: f64) -> Result<HistoryFunction> {
        let hist = match &self.history {
            Some(kind) => HistoryFunction::new(tau, kind.clone())?,
            None => HistoryFunction::constant(tau, DEFAULT_HISTORY.to_vec())?,
        };
        if hist.dim() != 2 {
            return Err(Error::InvalidModel(format!("history must be 2-dimensional, got {}", hist.dim())));
        }
        Ok(hist)
    }

    /// Zero envelopes when none are given.
    pub fn envelopes_or_zero(&self) -> Result<Envelopes> {
        match &self.envelopes {
            Some(e) => Ok(e.clone()),
            None => {
                let zero = CoefficientSignal::constant(0.0)?.into_nonnegative()?;
                Ok(Envelopes { g: zero.clone(), h: zero })
            }
        }
    }
}

pub fn parse_model(text: &str) -> Result<Model> {
    serde_json::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))
}

pub fn model_to_json(model: &Model) -> String {
    serde_json::to_string_pretty(model).expect("model serialization cannot fail")
}
