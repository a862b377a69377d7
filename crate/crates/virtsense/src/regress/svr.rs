//! Linear epsilon-insensitive support vector regression in the primal,
//! one model per output, fit by seeded stochastic subgradient descent.
//!
//! The objective per output is `1/2 ||w||^2 + C * sum_i max(0, |r_i| - eps)`
//! with `r_i = y_i - w.x_i - b`. Steps decay as `eta0 / (1 + decay * t)`;
//! internally the objective is scaled by `1/n` (same minimizer) so the
//! per-sample gradient magnitude does not grow with the training set.
//! The returned parameters are the best of the periodic checkpoints and
//! the tail average of the second half of the trajectory (best-point rule
//! plus Polyak-Ruppert averaging), finished by an exact coordinate-descent
//! polish: along any single coordinate the objective is convex piecewise
//! quadratic, so each line minimization is solved exactly by a breakpoint
//! sweep. The result is never worse than the zero initialization and does
//! not carry the last stochastic step's jitter.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrParams {
    /// Deviation penalty.
    pub c: f64,
    /// Tube half-width: deviations below this are free.
    pub eps: f64,
    pub steps: usize,
    pub eta0: f64,
    /// Step decay; when unset it defaults to `1 / n_samples`, the
    /// Robbins-Monro rate matching the scaled objective's strong convexity.
    pub decay: Option<f64>,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            eps: 0.1,
            steps: 10_000_000,
            eta0: 0.25,
            decay: None,
        }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<()> {
        if self.c <= 0.0 || self.eps < 0.0 {
            return Err(Error::InvalidParam(
                "need C > 0 and eps >= 0 for SVR".into(),
            ));
        }
        if self.steps == 0 || self.eta0 <= 0.0 || self.decay.is_some_and(|d| d <= 0.0) {
            return Err(Error::InvalidParam("bad SVR schedule".into()));
        }
        Ok(())
    }
}

/// One linear model `y = w.x + b` for a single output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub c: f64,
    pub eps: f64,
}

impl SvrModel {
    pub fn predict_one(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.weights.dot(&x) + self.bias
    }
}

/// Independent per-output models sharing input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrEnsemble {
    pub models: Vec<SvrModel>,
}

impl SvrEnsemble {
    pub fn input_dim(&self) -> usize {
        self.models.first().map_or(0, |m| m.weights.len())
    }

    pub fn output_dim(&self) -> usize {
        self.models.len()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<ndarray::Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut out = ndarray::Array2::<f64>::zeros((x.nrows(), self.models.len()));
        for (k, m) in self.models.iter().enumerate() {
            for (i, row) in x.rows().into_iter().enumerate() {
                out[[i, k]] = m.predict_one(row);
            }
        }
        Ok(out)
    }
}

/// Full primal objective `1/2 ||w||^2 + C * sum hinge`.
pub fn svr_objective(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    w: &Array1<f64>,
    b: f64,
    c: f64,
    eps: f64,
) -> f64 {
    let reg = 0.5 * w.dot(w);
    let hinge: f64 = x
        .rows()
        .into_iter()
        .zip(y.iter())
        .map(|(row, &yi)| ((yi - w.dot(&row) - b).abs() - eps).max(0.0))
        .sum();
    reg + c * hinge
}

/// Total epsilon-insensitive loss at the fitted parameters.
pub fn hinge_loss(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    model: &SvrModel,
) -> f64 {
    x.rows()
        .into_iter()
        .zip(y.iter())
        .map(|(row, &yi)| ((yi - model.predict_one(row)).abs() - model.eps).max(0.0))
        .sum()
}

/// Fit one output by stochastic subgradient descent from `w = 0, b = 0`.
pub fn svr_fit(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    params: &SvrParams,
    seed: u64,
) -> Result<SvrModel> {
    params.validate()?;
    let (n, m) = x.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} input rows vs {} targets",
            y.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParam("no training samples".into()));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("non-finite training data".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array1::<f64>::zeros(m);
    let mut b = 0.0f64;
    let n_f = n as f64;
    let decay = params.decay.unwrap_or(1.0 / n_f);

    const CHECK_EVERY: usize = 8192;
    let mut best_w = w.clone();
    let mut best_b = b;
    let mut best_obj = svr_objective(x, y, &w, b, params.c, params.eps);

    let avg_start = params.steps / 2;
    let mut avg_w = Array1::<f64>::zeros(m);
    let mut avg_b = 0.0f64;
    let mut avg_count = 0.0f64;

    for t in 1..=params.steps {
        let i = rng.random_range(0..n);
        let row = x.row(i);
        let eta = params.eta0 / (1.0 + decay * t as f64);
        let residual = y[i] - w.dot(&row) - b;

        // subgradient of (objective / n): regularizer w/n plus the
        // epsilon-insensitive term of the sampled point
        if residual.abs() > params.eps {
            let sign = residual.signum();
            for (wj, &xj) in w.iter_mut().zip(row.iter()) {
                *wj -= eta * (*wj / n_f - params.c * sign * xj);
            }
            b += eta * params.c * sign;
        } else {
            for wj in w.iter_mut() {
                *wj -= eta * (*wj / n_f);
            }
        }
        if t > avg_start {
            avg_count += 1.0;
            for (aj, &wj) in avg_w.iter_mut().zip(w.iter()) {
                *aj += (wj - *aj) / avg_count;
            }
            avg_b += (b - avg_b) / avg_count;
        }
        if t % CHECK_EVERY == 0 || t == params.steps {
            if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite SVR iterate at step {t}"
                )));
            }
            let obj = svr_objective(x, y, &w, b, params.c, params.eps);
            if obj < best_obj {
                best_obj = obj;
                best_w.assign(&w);
                best_b = b;
            }
        }
    }
    if avg_count > 0.0 {
        let avg_obj = svr_objective(x, y, &avg_w, avg_b, params.c, params.eps);
        if avg_obj < best_obj {
            best_w = avg_w;
            best_b = avg_b;
        }
    }
    exact_coordinate_polish(x, y, &mut best_w, &mut best_b, params.c, params.eps);
    Ok(SvrModel {
        weights: best_w,
        bias: best_b,
        c: params.c,
        eps: params.eps,
    })
}

/// Exact minimizer of the objective along one coordinate.
///
/// With every other parameter fixed, the objective as a function of the
/// step `delta` is `reg(delta) + C * sum_i max(0, |r_i - delta*g_i| - eps)`
/// where `g_i` is the coordinate's value in sample `i` (1 for the bias).
/// Its derivative is a nondecreasing step-plus-linear function; the zero
/// crossing is found by sweeping the sorted tube-entry/exit breakpoints.
fn line_minimum(
    residuals: &[f64],
    g: impl Fn(usize) -> f64,
    v0: f64,
    regularized: bool,
    c: f64,
    eps: f64,
) -> f64 {
    let n = residuals.len();
    // two events per sample: entering and leaving the tube; each raises the
    // hinge slope by c*|g_i|
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(2 * n);
    let mut slope = 0.0; // hinge slope at delta = -infinity
    for (i, &ri) in residuals.iter().enumerate() {
        let gi = g(i);
        if gi == 0.0 {
            continue;
        }
        let t1 = (ri - eps) / gi;
        let t2 = (ri + eps) / gi;
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let step = c * gi.abs();
        slope -= step;
        events.push((lo, step));
        events.push((hi, step));
    }
    if events.is_empty() {
        // the coordinate does not touch any residual
        return if regularized { -v0 } else { 0.0 };
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    // J' is nondecreasing: linear-plus-step for weights, step-only for the
    // bias; walk segments until it crosses zero
    let mut prev_bp = f64::NEG_INFINITY;
    for &(bp, step) in &events {
        // segment (prev_bp, bp) carries hinge slope `slope`
        if regularized {
            let delta = -v0 - slope; // zero of (v0 + delta) + slope
            if delta <= bp {
                // crossing inside the segment, or exactly at its left edge
                // when the derivative jumps across zero there
                return delta.max(prev_bp);
            }
        } else {
            if slope > 0.0 {
                return prev_bp; // derivative jumped past zero at prev_bp
            }
            if slope == 0.0 && prev_bp.is_finite() {
                return 0.5 * (prev_bp + bp); // flat stretch: center it
            }
        }
        slope += step;
        prev_bp = bp;
    }
    // derivative first becomes nonnegative after the last breakpoint
    if regularized {
        (-v0 - slope).max(prev_bp)
    } else {
        prev_bp
    }
}

/// A few sweeps of exact coordinate descent over the bias and each weight;
/// every step descends, so the polished objective never exceeds the input.
fn exact_coordinate_polish(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    w: &mut Array1<f64>,
    b: &mut f64,
    c: f64,
    eps: f64,
) {
    let (n, m) = x.dim();
    for _ in 0..20 {
        let mut residuals: Vec<f64> = (0..n).map(|i| y[i] - w.dot(&x.row(i)) - *b).collect();
        let mut moved = 0.0f64;
        let delta = line_minimum(&residuals, |_| 1.0, *b, false, c, eps);
        if delta.is_finite() && delta != 0.0 {
            *b += delta;
            for r in residuals.iter_mut() {
                *r -= delta;
            }
            moved = moved.max(delta.abs());
        }
        for j in 0..m {
            let delta = line_minimum(&residuals, |i| x[[i, j]], w[j], true, c, eps);
            if delta.is_finite() && delta != 0.0 {
                w[j] += delta;
                for (r, &xij) in residuals.iter_mut().zip(x.column(j).iter()) {
                    *r -= delta * xij;
                }
                moved = moved.max(delta.abs());
            }
        }
        if moved < 1e-14 {
            break;
        }
    }
}

/// One model per target column; columns fit in parallel with derived seeds.
pub fn svr_fit_multi(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    params: &SvrParams,
    seed: u64,
) -> Result<SvrEnsemble> {
    if y.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} input rows vs {} target rows",
            x.nrows(),
            y.nrows()
        )));
    }
    let models: Result<Vec<SvrModel>> = (0..y.ncols())
        .into_par_iter()
        .map(|k| svr_fit(x, y.column(k), params, seeds::derive(seed, k as u64)))
        .collect();
    Ok(SvrEnsemble { models: models? })
}
