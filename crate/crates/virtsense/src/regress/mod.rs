//! Regressors that emulate virtual sensors from representative sensors.
//!
//! Three model families, all implemented in this crate: closed-form linear
//! basis function regression ([`lbfr`]), a deep rectifier network trained
//! with Adam ([`mlp`]), and per-output linear epsilon-insensitive support
//! vector regression ([`svr`]). Trained models are immutable; prediction is
//! a pure function.

pub mod lbfr;
pub mod mlp;
pub mod svr;

pub use lbfr::{lbfr_fit, LbfrModel, DEFAULT_RIDGE};
pub use mlp::{mlp_fit, AdamParams, MlpConfig, MlpModel};
pub use svr::{svr_fit, svr_fit_multi, SvrEnsemble, SvrModel, SvrParams};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which model family to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Lbfr,
    Mlp,
    Svr,
}

impl RegressorKind {
    pub const ALL: [RegressorKind; 3] = [RegressorKind::Lbfr, RegressorKind::Mlp, RegressorKind::Svr];

    pub fn as_str(&self) -> &'static str {
        match self {
            RegressorKind::Lbfr => "lbfr",
            RegressorKind::Mlp => "mlp",
            RegressorKind::Svr => "svr",
        }
    }
}

impl std::str::FromStr for RegressorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lbfr" => Ok(RegressorKind::Lbfr),
            "mlp" | "ann" => Ok(RegressorKind::Mlp),
            "svr" => Ok(RegressorKind::Svr),
            other => Err(Error::InvalidParam(format!(
                "unknown regressor kind {other:?} (expected lbfr | mlp | svr)"
            ))),
        }
    }
}

impl std::fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A trained model of any family; the serialized form is self-describing
/// through the `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regressor {
    Lbfr(LbfrModel),
    Mlp(MlpModel),
    Svr(SvrEnsemble),
}

impl Regressor {
    pub fn kind(&self) -> RegressorKind {
        match self {
            Regressor::Lbfr(_) => RegressorKind::Lbfr,
            Regressor::Mlp(_) => RegressorKind::Mlp,
            Regressor::Svr(_) => RegressorKind::Svr,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Regressor::Lbfr(m) => m.input_dim(),
            Regressor::Mlp(m) => m.input_dim(),
            Regressor::Svr(m) => m.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Regressor::Lbfr(m) => m.output_dim(),
            Regressor::Mlp(m) => m.output_dim(),
            Regressor::Svr(m) => m.output_dim(),
        }
    }

    /// Deterministic forward evaluation, one output column per virtual sensor.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Regressor::Lbfr(m) => m.predict(x),
            Regressor::Mlp(m) => m.predict(x),
            Regressor::Svr(m) => m.predict(x),
        }
    }
}

/// Mean over all entries of the squared error.
pub fn mse(pred: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<f64> {
    if pred.dim() != truth.dim() {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {:?}, truth is {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    let n = pred.len();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(pred
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n as f64)
}
