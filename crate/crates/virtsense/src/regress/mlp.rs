//! Fully connected feed-forward network trained with mini-batch Adam.
//!
//! Rectifier activations on the hidden layers, identity on the output,
//! Xavier-normal initialization, mean-squared-error loss averaged over
//! batch and outputs. Training is sequential and deterministic under its
//! seed. The default architecture is 10 hidden layers of 50 units.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 256,
            epochs: 100,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidParam("learning rate must be positive".into()));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::InvalidParam("Adam decays must lie in (0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParam(
                "batch size and epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub adam: AdamParams,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![50; 10],
            adam: AdamParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// One (fan_in x fan_out) matrix per layer, hidden layers first.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpModel {
    /// Xavier-normal weights (std = sqrt(2 / (fan_in + fan_out))), zero biases.
    pub fn xavier(layer_sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("positive std");
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.sample(dist)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Self { weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.first().map_or(0, |w| w.nrows())
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map_or(0, |w| w.ncols())
    }

    pub fn n_hidden_layers(&self) -> usize {
        self.weights.len().saturating_sub(1)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut a = x.to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(w);
            z += &b.view().insert_axis(Axis(0));
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }
}

/// Forward pass keeping pre-activations, then backpropagation of the
/// mean-squared-error loss (averaged over batch rows and outputs).
///
/// Returns the loss and per-layer weight and bias gradients.
pub fn loss_and_gradients(
    model: &MlpModel,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
) -> (f64, Vec<Array2<f64>>, Vec<Array1<f64>>) {
    let n_layers = model.weights.len();
    let last = n_layers - 1;
    let batch = x.nrows() as f64;
    let v = y.ncols() as f64;

    // forward
    let mut activations: Vec<Array2<f64>> = vec![x.to_owned()];
    let mut pre_acts: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
    for (l, (w, b)) in model.weights.iter().zip(&model.biases).enumerate() {
        let mut z = activations[l].dot(w);
        z += &b.view().insert_axis(Axis(0));
        pre_acts.push(z.clone());
        if l < last {
            z.mapv_inplace(|val| val.max(0.0));
        }
        activations.push(z);
    }

    let pred = &activations[n_layers];
    let diff = pred - &y;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / (batch * v);

    // backward
    let mut w_grads: Vec<Array2<f64>> = model
        .weights
        .iter()
        .map(|w| Array2::zeros(w.raw_dim()))
        .collect();
    let mut b_grads: Vec<Array1<f64>> = model
        .biases
        .iter()
        .map(|b| Array1::zeros(b.raw_dim()))
        .collect();

    let mut delta = diff * (2.0 / (batch * v));
    for l in (0..n_layers).rev() {
        w_grads[l] = activations[l].t().dot(&delta);
        b_grads[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&model.weights[l].t());
            back.zip_mut_with(&pre_acts[l - 1], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = back;
        }
    }
    (loss, w_grads, b_grads)
}

struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: i32,
}

impl AdamState {
    fn new(model: &MlpModel) -> Self {
        Self {
            m_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            t: 0,
        }
    }

    fn step(
        &mut self,
        model: &mut MlpModel,
        w_grads: &[Array2<f64>],
        b_grads: &[Array1<f64>],
        p: &AdamParams,
    ) {
        self.t += 1;
        let bc1 = 1.0 - p.beta1.powi(self.t);
        let bc2 = 1.0 - p.beta2.powi(self.t);
        for l in 0..model.weights.len() {
            azip_update(
                model.weights[l].iter_mut(),
                self.m_w[l].iter_mut(),
                self.v_w[l].iter_mut(),
                w_grads[l].iter(),
                p,
                bc1,
                bc2,
            );
            azip_update(
                model.biases[l].iter_mut(),
                self.m_b[l].iter_mut(),
                self.v_b[l].iter_mut(),
                b_grads[l].iter(),
                p,
                bc1,
                bc2,
            );
        }
    }
}

fn azip_update<'a>(
    params: impl Iterator<Item = &'a mut f64>,
    m: impl Iterator<Item = &'a mut f64>,
    v: impl Iterator<Item = &'a mut f64>,
    grads: impl Iterator<Item = &'a f64>,
    p: &AdamParams,
    bc1: f64,
    bc2: f64,
) {
    for (((w, m), v), &g) in params.zip(m).zip(v).zip(grads) {
        *m = p.beta1 * *m + (1.0 - p.beta1) * g;
        *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= p.learning_rate * m_hat / (v_hat.sqrt() + p.epsilon);
    }
}

/// Train a network on `(x, y)`; returns the model and the full-dataset
/// loss recorded after every epoch.
pub fn mlp_fit(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    cfg: &MlpConfig,
    seed: u64,
) -> Result<(MlpModel, Vec<f64>)> {
    cfg.adam.validate()?;
    let (n, m) = x.dim();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} input rows vs {} target rows",
            n,
            y.nrows()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParam("no training samples".into()));
    }
    if x.iter().chain(y.iter()).any(|val| !val.is_finite()) {
        return Err(Error::InvalidParam("non-finite training data".into()));
    }

    let mut sizes = Vec::with_capacity(cfg.hidden.len() + 2);
    sizes.push(m);
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(y.ncols());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MlpModel::xavier(&sizes, &mut rng);
    let mut adam = AdamState::new(&model);

    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.adam.epochs);
    for epoch in 0..cfg.adam.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.adam.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let (loss, w_grads, b_grads) = loss_and_gradients(&model, xb.view(), yb.view());
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite batch loss at epoch {epoch}"
                )));
            }
            adam.step(&mut model, &w_grads, &b_grads, &cfg.adam);
        }
        let (full_loss, _, _) = loss_and_gradients(&model, x, y);
        if !full_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss after epoch {epoch}"
            )));
        }
        epoch_losses.push(full_loss);
    }
    Ok((model, epoch_losses))
}
