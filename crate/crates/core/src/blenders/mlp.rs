//! Feed-forward network blender: sigmoid hidden layers, one linear output,
//! trained on half mean squared error with mini-batch Adam.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{FeatureSet, Standardizer};
use crate::seed::rng_from_seed;
use crate::{Error, Result};

fn default_epochs() -> usize {
    200
}

fn default_batch() -> usize {
    128
}

fn default_lr() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpParams {
    /// Hidden layer widths, 1 to 3 layers.
    pub layers: Vec<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
}

impl MlpParams {
    pub fn with_layers(layers: Vec<usize>) -> Self {
        Self {
            layers,
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
        }
    }
}

/// Fully connected layer; `weights` is outputs × inputs, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpBlenderModel {
    pub standardizer: Standardizer,
    /// Hidden layers followed by the single-unit output layer.
    pub layers: Vec<Dense>,
}

/// Per-layer weight and bias gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Workspace {
    input: Vec<f64>,
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl MlpBlenderModel {
    /// Untrained network: Glorot-uniform hidden layers, zero output weights,
    /// output bias at `output_bias`.
    pub fn init(standardizer: Standardizer, hidden: &[usize], output_bias: f64, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut inputs = standardizer.mean.len();
        for &outputs in hidden {
            let bound = (6.0 / (inputs + outputs) as f64).sqrt();
            layers.push(Dense {
                inputs,
                outputs,
                weights: (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect(),
                bias: vec![0.0; outputs],
            });
            inputs = outputs;
        }
        layers.push(Dense {
            inputs,
            outputs: 1,
            weights: vec![0.0; inputs],
            bias: vec![output_bias],
        });
        Self { standardizer, layers }
    }

    pub fn input_width(&self) -> usize {
        self.standardizer.mean.len()
    }

    fn workspace(&self) -> Workspace {
        Workspace {
            input: vec![0.0; self.input_width()],
            acts: self.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            deltas: self.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
        }
    }

    fn forward(&self, features: &[f64], ws: &mut Workspace) -> f64 {
        self.standardizer.apply_row(features, &mut ws.input);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = ws.acts.split_at_mut(l);
            let prev: &[f64] = if l == 0 { &ws.input } else { &done[l - 1] };
            let out = &mut rest[0];
            for (o, (row, b)) in out
                .iter_mut()
                .zip(layer.weights.chunks_exact(layer.inputs).zip(&layer.bias))
            {
                let z = b + row.iter().zip(prev).map(|(w, a)| w * a).sum::<f64>();
                *o = if l == last { z } else { sigmoid(z) };
            }
        }
        ws.acts[last][0]
    }

    /// Adds `scale · ∂(½(ŷ−y)²)/∂θ` for one row to `grad`; returns ŷ.
    fn backward(&self, features: &[f64], target: f64, scale: f64, ws: &mut Workspace, grad: &mut MlpGradients) -> f64 {
        let out = self.forward(features, ws);
        let last = self.layers.len() - 1;
        ws.deltas[last][0] = (out - target) * scale;
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            if l < last {
                let next = &self.layers[l + 1];
                let (head, tail) = ws.deltas.split_at_mut(l + 1);
                let delta = &mut head[l];
                delta.fill(0.0);
                for (row, d) in next.weights.chunks_exact(next.inputs).zip(&tail[0]) {
                    for (acc, w) in delta.iter_mut().zip(row) {
                        *acc += w * d;
                    }
                }
                for (acc, a) in delta.iter_mut().zip(&ws.acts[l]) {
                    *acc *= a * (1.0 - a);
                }
            }
            let prev: &[f64] = if l == 0 { &ws.input } else { &ws.acts[l - 1] };
            let gw = &mut grad.weights[l];
            for (o, d) in ws.deltas[l].iter().enumerate() {
                grad.bias[l][o] += d;
                for (g, a) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(prev) {
                    *g += d * a;
                }
            }
        }
        out
    }

    fn zero_gradients(&self) -> MlpGradients {
        MlpGradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn predict_raw(&self, features: &[f64]) -> f64 {
        self.forward(features, &mut self.workspace())
    }

    /// Half mean squared error over `data`.
    pub fn loss(&self, data: &FeatureSet) -> f64 {
        let mut ws = self.workspace();
        let total: f64 = (0..data.rows())
            .map(|r| {
                let e = self.forward(data.row(r), &mut ws) - data.y[r];
                0.5 * e * e
            })
            .sum();
        total / data.rows() as f64
    }

    /// Gradient of [`loss`](Self::loss) by backpropagation.
    pub fn gradient(&self, data: &FeatureSet) -> MlpGradients {
        let mut ws = self.workspace();
        let mut grad = self.zero_gradients();
        let scale = 1.0 / data.rows() as f64;
        for r in 0..data.rows() {
            self.backward(data.row(r), data.y[r], scale, &mut ws, &mut grad);
        }
        grad
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr_t: f64) {
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = 0.9 * *m + 0.1 * g;
            *v = 0.999 * *v + 0.001 * g * g;
            *p -= lr_t * *m / (v.sqrt() + 1e-8);
        }
    }
}

const PLATEAU_PATIENCE: usize = 2;
const PLATEAU_DECAY: f64 = 0.5;

pub fn fit_mlp_blender(data: &FeatureSet, params: &MlpParams, seed: u64) -> Result<MlpBlenderModel> {
    if params.layers.is_empty() || params.layers.len() > 3 || params.layers.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "hidden layers {:?}: need 1 to 3 positive widths",
            params.layers
        )));
    }
    if params.batch_size == 0 || !(params.learning_rate.is_finite() && params.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let n = data.rows();
    if n == 0 {
        return Err(Error::InvalidInput("no rows to fit".into()));
    }
    let standardizer = Standardizer::fit(&data.x, data.cols());
    let mean_y = data.y.iter().sum::<f64>() / n as f64;
    let mut model = MlpBlenderModel::init(standardizer, &params.layers, mean_y, seed);
    let mut rng = rng_from_seed(seed ^ 0xb1e4d);
    let mut opt: Vec<(Adam, Adam)> = model
        .layers
        .iter()
        .map(|l| {
            (
                Adam {
                    m: vec![0.0; l.weights.len()],
                    v: vec![0.0; l.weights.len()],
                },
                Adam {
                    m: vec![0.0; l.bias.len()],
                    v: vec![0.0; l.bias.len()],
                },
            )
        })
        .collect();
    let mut ws = model.workspace();
    let mut grad = model.zero_gradients();
    let mut order: Vec<usize> = (0..n).collect();
    let mut lr = params.learning_rate;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut t = 0i32;
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(params.batch_size) {
            grad.weights
                .iter_mut()
                .chain(grad.bias.iter_mut())
                .for_each(|g| g.fill(0.0));
            let scale = 1.0 / batch.len() as f64;
            for &r in batch {
                let out = model.backward(data.row(r), data.y[r], scale, &mut ws, &mut grad);
                let e = out - data.y[r];
                epoch_loss += 0.5 * e * e;
            }
            t += 1;
            let lr_t = lr * (1.0 - 0.999f64.powi(t)).sqrt() / (1.0 - 0.9f64.powi(t));
            for ((layer, (ow, ob)), (gw, gb)) in model
                .layers
                .iter_mut()
                .zip(opt.iter_mut())
                .zip(grad.weights.iter().zip(&grad.bias))
            {
                ow.step(&mut layer.weights, gw, lr_t);
                ob.step(&mut layer.bias, gb, lr_t);
            }
        }
        epoch_loss /= n as f64;
        if !epoch_loss.is_finite() || !model.is_finite() {
            return Err(Error::Training(format!("network diverged in epoch {}", epoch + 1)));
        }
        if epoch_loss < best - 1e-4 * best.abs() {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= PLATEAU_PATIENCE {
                lr *= PLATEAU_DECAY;
                stale = 0;
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(rows: usize, predictions: usize, seed: u64) -> FeatureSet {
        let mut rng = rng_from_seed(seed);
        let cols = predictions + 4;
        let x: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(1.0..5.0)).collect();
        let y: Vec<f64> = x.chunks(cols).map(|r| (r[0] + r[1]) / 2.0).collect();
        FeatureSet::new(x, y, predictions).unwrap()
    }

    #[test]
    fn untrained_network_emits_output_bias() {
        let data = toy(10, 2, 1);
        let model = fit_mlp_blender(
            &data,
            &MlpParams {
                epochs: 0,
                ..MlpParams::with_layers(vec![8])
            },
            3,
        )
        .unwrap();
        let mean = data.y.iter().sum::<f64>() / 10.0;
        for r in 0..10 {
            assert_eq!(model.predict_raw(data.row(r)), mean);
        }
    }

    #[test]
    fn training_fits_a_smooth_target() {
        let data = toy(400, 2, 2);
        let params = MlpParams {
            epochs: 60,
            batch_size: 32,
            ..MlpParams::with_layers(vec![12])
        };
        let model = fit_mlp_blender(&data, &params, 5).unwrap();
        let init = MlpBlenderModel::init(model.standardizer.clone(), &[12], 3.0, 5);
        assert!(model.loss(&data) < 0.1 * init.loss(&data), "{}", model.loss(&data));
        assert_eq!(model, fit_mlp_blender(&data, &params, 5).unwrap());
    }

    #[test]
    fn rejects_bad_architectures() {
        let data = toy(5, 1, 0);
        for layers in [vec![], vec![8, 8, 8, 8], vec![0]] {
            assert!(fit_mlp_blender(&data, &MlpParams::with_layers(layers), 0).is_err());
        }
    }
}
