//! Content-based per-user random forests over item genre vectors.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::matrix::RatingMatrix;
use crate::data::ItemFeatures;
use crate::seed::derive_seed;
use crate::tree::{Features, ForestParams, RandomForest, TreeParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfcbParams {
    pub trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for RfcbParams {
    fn default() -> Self {
        Self {
            trees: 30,
            max_depth: Some(8),
            min_leaf: 3,
        }
    }
}

/// One forest per user with training ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserForestModel {
    pub forests: Vec<Option<RandomForest>>,
    pub items: Arc<ItemFeatures>,
}

impl UserForestModel {
    /// Mean of the user's tree outputs on the item's genre vector; `None` for
    /// users without training ratings.
    pub fn predict(&self, u: usize, i: usize) -> Option<f64> {
        let forest = self.forests.get(u)?.as_ref()?;
        if i >= self.items.num_items() {
            return None;
        }
        Some(forest.predict(self.items.row(i)))
    }
}

pub fn fit_rfcb(
    ratings: &RatingMatrix,
    items: Arc<ItemFeatures>,
    params: &RfcbParams,
    seed: u64,
) -> Result<UserForestModel> {
    if ratings.is_empty() {
        return Err(Error::Training("no ratings for content forests".into()));
    }
    if params.trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    if items.num_items() < ratings.num_items() {
        return Err(Error::InvalidInput(format!(
            "genre vectors cover {} items, ratings reference {}",
            items.num_items(),
            ratings.num_items()
        )));
    }
    let width = items.width();
    let forest_params = ForestParams {
        trees: params.trees,
        tree: TreeParams {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            max_features: ((width as f64).sqrt().floor() as usize).max(1),
        },
        bootstrap: true,
    };
    let mut forests = Vec::with_capacity(ratings.num_users());
    let mut x = Vec::new();
    let mut y = Vec::new();
    for u in 0..ratings.num_users() {
        let row = ratings.user_row(u);
        if row.is_empty() {
            forests.push(None);
            continue;
        }
        x.clear();
        y.clear();
        for &(i, r) in row {
            x.extend_from_slice(items.row(i as usize));
            y.push(r);
        }
        let forest = if width == 0 {
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            RandomForest::from_trees(vec![crate::tree::RegressionTree::constant(mean); params.trees])
        } else {
            RandomForest::fit(
                Features::new(&x, width)?,
                &y,
                &forest_params,
                derive_seed(seed, "rfcb-user", u as u64),
            )?
        };
        forests.push(Some(forest));
    }
    Ok(UserForestModel { forests, items })
}
