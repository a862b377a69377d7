//! Linear basis function regression with a constant, the raw inputs, and
//! one global radial feature.
//!
//! The design matrix is `[1 | X | exp(-||x - mu||^2 / (2 sigma^2))]`, so the
//! feature dimension is exactly M+2. Weights come from the ridge normal
//! equations solved in closed form.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfrModel {
    /// (M+2) x n_outputs weight matrix.
    pub weights: Array2<f64>,
    /// Radial feature center: column mean of the training inputs.
    pub center: Array1<f64>,
    /// Radial feature width: mean distance of training rows to the center.
    pub width: f64,
    pub lambda: f64,
}

impl LbfrModel {
    pub fn input_dim(&self) -> usize {
        self.center.len()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(design(x, &self.center, self.width).dot(&self.weights))
    }
}

/// Feature expansion shared by fit and predict.
pub fn design(x: ArrayView2<'_, f64>, center: &Array1<f64>, width: f64) -> Array2<f64> {
    let (n, m) = x.dim();
    let mut phi = Array2::<f64>::zeros((n, m + 2));
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        phi[[i, 0]] = 1.0;
        let mut d2 = 0.0;
        for (j, &v) in row.iter().enumerate() {
            phi[[i, j + 1]] = v;
            let d = v - center[j];
            d2 += d * d;
        }
        phi[[i, m + 1]] = (-d2 / (2.0 * width * width)).exp();
    }
    phi
}

/// Closed-form ridge fit; `lambda` defaults to [`DEFAULT_RIDGE`] upstream.
pub fn lbfr_fit(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<LbfrModel> {
    let (n, m) = x.dim();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} input rows vs {} target rows",
            n,
            y.nrows()
        )));
    }
    if n < m + 2 {
        return Err(Error::InvalidParam(format!(
            "need at least M+2 = {} samples, got {n}",
            m + 2
        )));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidParam("ridge lambda must be nonnegative".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("non-finite training data".into()));
    }

    let center = x.mean_axis(Axis(0)).expect("n >= 1");
    let mean_dist = x
        .axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .zip(center.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / n as f64;
    let width = if mean_dist > 0.0 { mean_dist } else { 1.0 };

    let phi = design(x, &center, width);
    let mut a = phi.t().dot(&phi);
    for i in 0..a.nrows() {
        a[[i, i]] += lambda;
    }
    let b = phi.t().dot(&y);
    let weights = linalg::solve_spd(&a, &b)?;
    Ok(LbfrModel {
        weights,
        center,
        width,
        lambda,
    })
}
