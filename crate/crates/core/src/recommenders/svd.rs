//! Latent factor model without bias terms, fitted by stochastic gradient
//! descent on the observed ratings.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::matrix::RatingMatrix;
use crate::data::Triplet;
use crate::seed::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvdParams {
    pub factors: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    /// Standard deviation of the initial factor noise.
    pub init_std: f64,
}

impl Default for SvdParams {
    fn default() -> Self {
        Self {
            factors: 50,
            learning_rate: 0.005,
            regularization: 0.02,
            epochs: 30,
            init_std: 0.1,
        }
    }
}

/// User factors `P` (M×F) and item factors `Q` (N×F), row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFactorModel {
    pub factors: usize,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
    pub user_seen: Vec<bool>,
    pub item_seen: Vec<bool>,
}

impl LatentFactorModel {
    pub fn num_users(&self) -> usize {
        self.user_seen.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_seen.len()
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.factors..(u + 1) * self.factors]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.factors..(i + 1) * self.factors]
    }

    /// `q_iᵀ p_u`, or `None` for users or items without training ratings.
    pub fn predict(&self, u: usize, i: usize) -> Option<f64> {
        if !self.user_seen.get(u).copied().unwrap_or(false) || !self.item_seen.get(i).copied().unwrap_or(false) {
            return None;
        }
        Some(dot(self.item(i), self.user(u)))
    }

    /// Mean over `ratings` of squared error plus `regularization` times the
    /// squared norms of the two factor vectors involved: the objective whose
    /// per-rating terms the SGD updates descend.
    pub fn objective(&self, ratings: &[Triplet], regularization: f64) -> f64 {
        let total: f64 = ratings
            .iter()
            .map(|t| {
                let p = self.user(t.user);
                let q = self.item(t.item);
                let e = t.value - dot(q, p);
                e * e + regularization * (dot(p, p) + dot(q, q))
            })
            .sum();
        total / ratings.len() as f64
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits the factor model, calling `on_epoch(epoch, model)` after every epoch.
pub fn fit_svd_with(
    ratings: &RatingMatrix,
    params: &SvdParams,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &LatentFactorModel),
) -> Result<LatentFactorModel> {
    if ratings.is_empty() {
        return Err(Error::Training("no ratings to factorize".into()));
    }
    let f = params.factors;
    let (m, n) = (ratings.num_users(), ratings.num_items());
    let mut rng = rng_from_seed(seed);
    // Start every dot product near the global mean.
    let center = (ratings.global_mean().max(0.0) / f as f64).sqrt();
    let noise = Normal::new(0.0, params.init_std).map_err(|e| Error::InvalidArgument(format!("init_std: {e}")))?;
    let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| center + noise.sample(&mut rng)).collect() };
    let user_factors = draw(m * f);
    let item_factors = draw(n * f);
    let mut model = LatentFactorModel {
        factors: f,
        user_factors,
        item_factors,
        user_seen: (0..m).map(|u| !ratings.user_row(u).is_empty()).collect(),
        item_seen: (0..n).map(|i| !ratings.item_column(i).is_empty()).collect(),
    };

    let mut order: Vec<(u32, u32, f64)> = (0..m)
        .flat_map(|u| ratings.user_row(u).iter().map(move |&(i, r)| (u as u32, i, r)))
        .collect();
    let (lr, reg) = (params.learning_rate, params.regularization);
    let mut p_old = vec![0.0; f];
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for &(u, i, r) in &order {
            let (u, i) = (u as usize, i as usize);
            let p = &mut model.user_factors[u * f..(u + 1) * f];
            let q = &mut model.item_factors[i * f..(i + 1) * f];
            let err = r - dot(p, q);
            p_old.copy_from_slice(p);
            for k in 0..f {
                p[k] += lr * (err * q[k] - reg * p[k]);
                q[k] += lr * (err * p_old[k] - reg * q[k]);
            }
        }
        if !model
            .user_factors
            .iter()
            .chain(&model.item_factors)
            .all(|x| x.is_finite())
        {
            return Err(Error::Training(format!("factors diverged in epoch {}", epoch + 1)));
        }
        on_epoch(epoch + 1, &model);
    }
    Ok(model)
}

pub fn fit_svd(ratings: &RatingMatrix, params: &SvdParams, seed: u64) -> Result<LatentFactorModel> {
    fit_svd_with(ratings, params, seed, |_, _| {})
}
