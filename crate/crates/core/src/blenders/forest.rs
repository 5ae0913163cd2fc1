use serde::{Deserialize, Serialize};

use super::FeatureSet;
use crate::tree::{Features, ForestParams, RandomForest, TreeParams};
use crate::{Error, Result};

fn default_min_leaf() -> usize {
    5
}

fn default_bootstrap() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestBlenderParams {
    pub trees: usize,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: bool,
}

impl ForestBlenderParams {
    pub fn with_trees(trees: usize) -> Self {
        Self {
            trees,
            min_leaf: default_min_leaf(),
            max_depth: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestBlenderModel {
    pub forest: RandomForest,
    /// Features examined per split, ⌊√L⌋.
    pub features_per_split: usize,
    pub width: usize,
}

pub fn fit_forest_blender(data: &FeatureSet, params: &ForestBlenderParams, seed: u64) -> Result<ForestBlenderModel> {
    if params.trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    let width = data.cols();
    let features_per_split = ((width as f64).sqrt().floor() as usize).max(1);
    let forest = RandomForest::fit(
        Features::new(&data.x, width)?,
        &data.y,
        &ForestParams {
            trees: params.trees,
            tree: TreeParams {
                max_depth: params.max_depth,
                min_leaf: params.min_leaf,
                max_features: features_per_split,
            },
            bootstrap: params.bootstrap,
        },
        seed,
    )?;
    Ok(ForestBlenderModel {
        forest,
        features_per_split,
        width,
    })
}

impl ForestBlenderModel {
    pub fn input_width(&self) -> usize {
        self.width
    }

    pub fn predict_raw(&self, features: &[f64]) -> f64 {
        self.forest.predict(features)
    }
}
