//! Central finite-difference checks of the analytic gradients.

use std::sync::Arc;

use blendrec::blenders::{FeatureSet, MlpBlenderModel, Standardizer};
use blendrec::recommenders::{AutoRecModel, RatingMatrix};
use blendrec::seed::rng_from_seed;
use rand::Rng as _;

use crate::toy::random_dataset;

pub const STEP: f64 = 1e-4;

/// Relative error of one parameter group.
#[derive(Debug, Clone)]
pub struct GroupError {
    pub group: String,
    pub params: usize,
    /// `‖a − n‖ / max(‖a‖, ‖n‖)`.
    pub relative: f64,
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Numeric gradient of `f` with respect to `params[idx]` for each index,
/// `(f(θ + h) − f(θ − h)) / 2h`.
fn central_differences<M: Clone>(
    model: &M,
    len: usize,
    param: impl Fn(&mut M) -> &mut [f64],
    f: impl Fn(&M) -> f64,
) -> Vec<f64> {
    let mut work = model.clone();
    (0..len)
        .map(|k| {
            let orig = param(&mut work)[k];
            param(&mut work)[k] = orig + STEP;
            let plus = f(&work);
            param(&mut work)[k] = orig - STEP;
            let minus = f(&work);
            param(&mut work)[k] = orig;
            (plus - minus) / (2.0 * STEP)
        })
        .collect()
}

/// Checks every AutoRec parameter group on a random toy dataset with random
/// weights and biases.
pub fn autorec(seed: u64, hidden: usize, regularization: f64) -> Vec<GroupError> {
    let ds = random_dataset(seed, 40);
    let mut model = AutoRecModel::init(Arc::new(RatingMatrix::from_dataset(&ds)), hidden, seed);
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    for b in model.hidden_bias.iter_mut().chain(model.output_bias.iter_mut()) {
        *b = rng.random_range(-0.5..0.5);
    }
    let grad = model.gradient(regularization);
    let objective = |m: &AutoRecModel| m.objective(regularization);
    let mut out = Vec::new();
    let mut check = |name: &str, analytic: &[f64], param: fn(&mut AutoRecModel) -> &mut [f64]| {
        let numeric = central_differences(&model, analytic.len(), param, objective);
        out.push(GroupError {
            group: name.into(),
            params: analytic.len(),
            relative: relative_error(analytic, &numeric),
        });
    };
    check("encoder", &grad.encoder, |m| &mut m.encoder);
    check("hidden_bias", &grad.hidden_bias, |m| &mut m.hidden_bias);
    check("decoder", &grad.decoder, |m| &mut m.decoder);
    check("output_bias", &grad.output_bias, |m| &mut m.output_bias);
    out
}

/// Three random blendset rows with two prediction columns.
pub fn tiny_blendset(seed: u64) -> FeatureSet {
    let mut rng = rng_from_seed(seed);
    let rows = 3;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..rows {
        x.push(rng.random_range(1.0..5.0));
        x.push(rng.random_range(1.0..5.0));
        x.push(f64::from(rng.random_range(1..60u32)));
        x.push(f64::from(rng.random_range(1..60u32)));
        x.push(rng.random_range(2.0..4.5));
        x.push(rng.random_range(2.0..4.5));
        y.push(f64::from(rng.random_range(1..=5u8)));
    }
    FeatureSet::new(x, y, 2).expect("consistent shape")
}

/// Checks the weights and biases of every layer of a network with hidden
/// widths `layers`, all parameters randomised.
pub fn mlp(layers: &[usize], seed: u64) -> Vec<GroupError> {
    let data = tiny_blendset(seed);
    let standardizer = Standardizer::fit(&data.x, data.cols());
    let mut model = MlpBlenderModel::init(standardizer, layers, 3.0, seed);
    let mut rng = rng_from_seed(seed ^ 0xacdc);
    for l in &mut model.layers {
        for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
            *w = rng.random_range(-1.0..1.0);
        }
    }
    let grad = model.gradient(&data);
    let loss = |m: &MlpBlenderModel| m.loss(&data);
    let mut out = Vec::new();
    for l in 0..model.layers.len() {
        let numeric = central_differences(
            &model,
            model.layers[l].weights.len(),
            |m| &mut m.layers[l].weights,
            loss,
        );
        out.push(GroupError {
            group: format!("layer {l} weights"),
            params: numeric.len(),
            relative: relative_error(&grad.weights[l], &numeric),
        });
        let numeric = central_differences(&model, model.layers[l].bias.len(), |m| &mut m.layers[l].bias, loss);
        out.push(GroupError {
            group: format!("layer {l} bias"),
            params: numeric.len(),
            relative: relative_error(&grad.bias[l], &numeric),
        });
    }
    out
}
