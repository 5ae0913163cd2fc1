//! Item-based autoencoder.
//!
//! Each item is encoded from its column of training ratings, centred on the
//! global mean with unobserved users entering as zero. The hidden layer uses
//! a sigmoid and the output layer is linear. Reconstruction error is counted
//! only on observed entries, with L2 weight decay on the encoder and decoder
//! weights. Training is mini-batch Adam over items.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::matrix::RatingMatrix;
use crate::seed::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoRecParams {
    pub hidden: usize,
    pub regularization: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for AutoRecParams {
    fn default() -> Self {
        Self {
            hidden: 300,
            regularization: 50.0,
            epochs: 150,
            learning_rate: 3e-3,
            batch_size: 256,
        }
    }
}

/// Autoencoder parameters.
///
/// `encoder` holds V as M rows of K weights; `decoder` holds W transposed,
/// also M rows of K weights, so row `u` produces output `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoRecModel {
    pub users: usize,
    pub hidden: usize,
    pub encoder: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub decoder: Vec<f64>,
    pub output_bias: Vec<f64>,
    /// Subtracted from inputs and added back to outputs.
    pub offset: f64,
    pub ratings: Arc<RatingMatrix>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Gradients for each parameter group, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoRecGradients {
    pub encoder: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub decoder: Vec<f64>,
    pub output_bias: Vec<f64>,
}

impl AutoRecGradients {
    fn zeros(m: usize, k: usize) -> Self {
        Self {
            encoder: vec![0.0; m * k],
            hidden_bias: vec![0.0; k],
            decoder: vec![0.0; m * k],
            output_bias: vec![0.0; m],
        }
    }

    fn clear(&mut self) {
        for g in [
            &mut self.encoder,
            &mut self.hidden_bias,
            &mut self.decoder,
            &mut self.output_bias,
        ] {
            g.fill(0.0);
        }
    }
}

impl AutoRecModel {
    /// Hidden activations for item `i`'s training column.
    pub fn encode(&self, i: usize) -> Vec<f64> {
        let k = self.hidden;
        let mut z = self.hidden_bias.clone();
        for &(u, r) in self.ratings.item_column(i) {
            let x = r - self.offset;
            let row = &self.encoder[u as usize * k..(u as usize + 1) * k];
            for (zk, v) in z.iter_mut().zip(row) {
                *zk += v * x;
            }
        }
        z.iter_mut().for_each(|zk| *zk = sigmoid(*zk));
        z
    }

    #[inline]
    fn decode(&self, hidden: &[f64], u: usize) -> f64 {
        let k = self.hidden;
        let row = &self.decoder[u * k..(u + 1) * k];
        self.output_bias[u] + row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>()
    }

    /// Reconstructed rating of user `u` for item `i`. `None` when `i` has no
    /// training ratings or `u` had none.
    pub fn predict(&self, u: usize, i: usize) -> Option<f64> {
        if u >= self.users || self.ratings.item_column(i).is_empty() || self.ratings.user_row(u).is_empty() {
            return None;
        }
        let h = self.encode(i);
        Some(self.offset + self.decode(&h, u))
    }

    fn check_finite(&self) -> bool {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .chain(&self.hidden_bias)
            .chain(&self.output_bias)
            .all(|x| x.is_finite())
    }

    /// Adds item `i`'s reconstruction-error gradient into `grad` and returns
    /// its half squared error.
    fn accumulate_item(&self, i: usize, grad: &mut AutoRecGradients, hidden: &mut [f64], delta: &mut [f64]) -> f64 {
        let k = self.hidden;
        let column = self.ratings.item_column(i);
        hidden.copy_from_slice(&self.hidden_bias);
        for &(u, r) in column {
            let x = r - self.offset;
            let row = &self.encoder[u as usize * k..(u as usize + 1) * k];
            for (zk, v) in hidden.iter_mut().zip(row) {
                *zk += v * x;
            }
        }
        hidden.iter_mut().for_each(|zk| *zk = sigmoid(*zk));
        delta.fill(0.0);
        let mut loss = 0.0;
        for &(u, r) in column {
            let u = u as usize;
            let e = self.decode(hidden, u) - (r - self.offset);
            loss += 0.5 * e * e;
            grad.output_bias[u] += e;
            let w = &self.decoder[u * k..(u + 1) * k];
            let gw = &mut grad.decoder[u * k..(u + 1) * k];
            for j in 0..k {
                gw[j] += e * hidden[j];
                delta[j] += e * w[j];
            }
        }
        for j in 0..k {
            delta[j] *= hidden[j] * (1.0 - hidden[j]);
            grad.hidden_bias[j] += delta[j];
        }
        for &(u, r) in column {
            let x = r - self.offset;
            let gv = &mut grad.encoder[u as usize * k..(u as usize + 1) * k];
            for (g, d) in gv.iter_mut().zip(delta.iter()) {
                *g += x * d;
            }
        }
        loss
    }

    fn weight_norm(&self) -> f64 {
        self.encoder.iter().chain(&self.decoder).map(|w| w * w).sum()
    }

    /// Training objective over all items: half the squared reconstruction
    /// error on observed entries plus `λ/2 (‖V‖² + ‖W‖²)`.
    pub fn objective(&self, regularization: f64) -> f64 {
        let mut loss = 0.0;
        for i in 0..self.ratings.num_items() {
            let column = self.ratings.item_column(i);
            if column.is_empty() {
                continue;
            }
            let h = self.encode(i);
            for &(u, r) in column {
                let e = self.decode(&h, u as usize) - (r - self.offset);
                loss += 0.5 * e * e;
            }
        }
        loss + 0.5 * regularization * self.weight_norm()
    }

    /// Analytic gradient of [`objective`](Self::objective).
    pub fn gradient(&self, regularization: f64) -> AutoRecGradients {
        let k = self.hidden;
        let mut grad = AutoRecGradients::zeros(self.users, k);
        let (mut hidden, mut delta) = (vec![0.0; k], vec![0.0; k]);
        for i in 0..self.ratings.num_items() {
            if !self.ratings.item_column(i).is_empty() {
                self.accumulate_item(i, &mut grad, &mut hidden, &mut delta);
            }
        }
        for (g, w) in grad.encoder.iter_mut().zip(&self.encoder) {
            *g += regularization * w;
        }
        for (g, w) in grad.decoder.iter_mut().zip(&self.decoder) {
            *g += regularization * w;
        }
        grad
    }

    /// Randomly initialised, untrained model (Glorot-uniform weights, zero
    /// biases).
    pub fn init(ratings: Arc<RatingMatrix>, hidden: usize, seed: u64) -> Self {
        let m = ratings.num_users();
        let mut rng = rng_from_seed(seed);
        let bound = (6.0 / (m + hidden) as f64).sqrt();
        let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-bound..bound)).collect() };
        let encoder = draw(m * hidden);
        let decoder = draw(m * hidden);
        let offset = ratings.global_mean();
        Self {
            users: m,
            hidden,
            encoder,
            hidden_bias: vec![0.0; hidden],
            decoder,
            output_bias: vec![0.0; m],
            offset,
            ratings,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr_t: f64) {
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr_t * *m / (v.sqrt() + EPS);
        }
    }
}

pub fn fit_autorec(ratings: Arc<RatingMatrix>, params: &AutoRecParams, seed: u64) -> Result<AutoRecModel> {
    if ratings.is_empty() {
        return Err(Error::Training("no ratings for the autoencoder".into()));
    }
    if params.hidden == 0 || params.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "hidden size and batch size must be positive".into(),
        ));
    }
    let k = params.hidden;
    let m = ratings.num_users();
    let mut model = AutoRecModel::init(Arc::clone(&ratings), k, seed);
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    let mut items: Vec<usize> = (0..ratings.num_items())
        .filter(|&i| !ratings.item_column(i).is_empty())
        .collect();
    let active = items.len() as f64;
    let mut grad = AutoRecGradients::zeros(m, k);
    let mut opt = [Adam::new(m * k), Adam::new(k), Adam::new(m * k), Adam::new(m)];
    let (mut hidden, mut delta) = (vec![0.0; k], vec![0.0; k]);
    let mut t = 0i32;
    for epoch in 0..params.epochs {
        items.shuffle(&mut rng);
        for batch in items.chunks(params.batch_size) {
            grad.clear();
            for &i in batch {
                model.accumulate_item(i, &mut grad, &mut hidden, &mut delta);
            }
            // Spread the weight decay so one epoch applies it once in full.
            let reg = params.regularization * batch.len() as f64 / active;
            for (g, w) in grad.encoder.iter_mut().zip(&model.encoder) {
                *g += reg * w;
            }
            for (g, w) in grad.decoder.iter_mut().zip(&model.decoder) {
                *g += reg * w;
            }
            t += 1;
            let lr_t = params.learning_rate * (1.0 - BETA2.powi(t)).sqrt() / (1.0 - BETA1.powi(t));
            opt[0].step(&mut model.encoder, &grad.encoder, lr_t);
            opt[1].step(&mut model.hidden_bias, &grad.hidden_bias, lr_t);
            opt[2].step(&mut model.decoder, &grad.decoder, lr_t);
            opt[3].step(&mut model.output_bias, &grad.output_bias, lr_t);
        }
        if !model.check_finite() {
            return Err(Error::Training(format!("autoencoder diverged in epoch {}", epoch + 1)));
        }
    }
    Ok(model)
}
