//! Second-level regressors that combine recommender predictions and
//! meta-features into a final rating.

mod forest;
mod linear;
mod mlp;
mod ridge;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use forest::{fit_forest_blender, ForestBlenderModel, ForestBlenderParams};
pub use linear::{assign_bin, fit_binned_lr, quantile_edges, LinearBlenderModel};
pub use mlp::{fit_mlp_blender, MlpBlenderModel, MlpGradients, MlpParams};
pub use ridge::{fit_ridge, RidgeSolution};

use crate::metafeatures::{MetaVector, META_FEATURES};
use crate::{clamp_rating, Error, Result};

/// One blendset row: the recommenders' out-of-fold predictions, the
/// meta-features of the pair, and the true rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendRow {
    pub user: usize,
    pub item: usize,
    pub actual: f64,
    pub predictions: Vec<f64>,
    pub meta: MetaVector,
}

impl BlendRow {
    /// `p_1..p_m` followed by the meta-features.
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.predictions.len() + META_FEATURES);
        f.extend_from_slice(&self.predictions);
        f.extend_from_slice(&self.meta.to_array());
        f
    }
}

/// Which meta-feature routes rows into bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinCriterion {
    UserSupport,
    MovieSupport,
}

impl BinCriterion {
    /// Column of the criterion among `m + 4` features.
    pub fn column(self, predictions: usize) -> usize {
        match self {
            BinCriterion::UserSupport => predictions,
            BinCriterion::MovieSupport => predictions + 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BinCriterion::UserSupport => "user_support",
            BinCriterion::MovieSupport => "movie_support",
        }
    }
}

/// Row-major feature matrix (`m` prediction columns then the meta-features)
/// with targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Number of recommender prediction columns.
    pub predictions: usize,
}

impl FeatureSet {
    pub fn new(x: Vec<f64>, y: Vec<f64>, predictions: usize) -> Result<Self> {
        let cols = predictions + META_FEATURES;
        if x.len() != y.len() * cols {
            return Err(Error::InvalidInput(format!(
                "{} feature values for {} rows of width {cols}",
                x.len(),
                y.len()
            )));
        }
        Ok(Self { x, y, predictions })
    }

    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a BlendRow>, predictions: usize) -> Result<Self> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for r in rows {
            if r.predictions.len() != predictions {
                return Err(Error::InvalidInput(format!(
                    "row has {} predictions, expected {predictions}",
                    r.predictions.len()
                )));
            }
            x.extend_from_slice(&r.predictions);
            x.extend_from_slice(&r.meta.to_array());
            y.push(r.actual);
        }
        Self::new(x, y, predictions)
    }

    pub fn cols(&self) -> usize {
        self.predictions + META_FEATURES
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.x[r * c..(r + 1) * c]
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let c = self.cols();
        let mut x = Vec::with_capacity(indices.len() * c);
        for &r in indices {
            x.extend_from_slice(self.row(r));
        }
        Self {
            x,
            y: indices.iter().map(|&r| self.y[r]).collect(),
            predictions: self.predictions,
        }
    }
}

/// Per-column affine scaling to zero mean and unit variance, estimated on
/// training rows. Constant columns are only centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[f64], cols: usize) -> Self {
        let rows = (x.len() / cols).max(1) as f64;
        let mut mean = vec![0.0; cols];
        for row in x.chunks_exact(cols) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows);
        let mut var = vec![0.0; cols];
        for row in x.chunks_exact(cols) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / rows).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.scale) {
            *o = (v - m) / s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let cols = self.mean.len();
        let mut out = vec![0.0; x.len()];
        for (src, dst) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
            self.apply_row(src, dst);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearParams {
    pub lambda: f64,
    pub criterion: BinCriterion,
    pub bins: usize,
}

/// A blending family with one point of its hyper-parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BlenderSpec {
    Linear(LinearParams),
    Forest(ForestBlenderParams),
    Mlp(MlpParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlenderFamily {
    Linear,
    Forest,
    Mlp,
}

impl BlenderFamily {
    pub fn name(self) -> &'static str {
        match self {
            BlenderFamily::Linear => "linear",
            BlenderFamily::Forest => "forest",
            BlenderFamily::Mlp => "mlp",
        }
    }
}

impl std::str::FromStr for BlenderFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "lr" => Ok(BlenderFamily::Linear),
            "forest" | "rf" => Ok(BlenderFamily::Forest),
            "mlp" | "ann" => Ok(BlenderFamily::Mlp),
            _ => Err(Error::InvalidArgument(format!(
                "unknown blender family {s:?}; valid families: linear, forest, mlp"
            ))),
        }
    }
}

impl BlenderSpec {
    pub fn family(&self) -> BlenderFamily {
        match self {
            BlenderSpec::Linear(_) => BlenderFamily::Linear,
            BlenderSpec::Forest(_) => BlenderFamily::Forest,
            BlenderSpec::Mlp(_) => BlenderFamily::Mlp,
        }
    }

    pub fn label(&self) -> String {
        match self {
            BlenderSpec::Linear(p) => format!(
                "linear(lambda={}, criterion={}, bins={})",
                p.lambda,
                p.criterion.name(),
                p.bins
            ),
            BlenderSpec::Forest(p) => format!("forest(trees={})", p.trees),
            BlenderSpec::Mlp(p) => format!(
                "mlp(layers={})",
                p.layers.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
            ),
        }
    }
}

impl fmt::Display for BlenderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum BlenderModel {
    Linear(LinearBlenderModel),
    Forest(ForestBlenderModel),
    Mlp(MlpBlenderModel),
}

/// A fitted blender and any warnings raised while fitting it.
#[derive(Debug, Clone)]
pub struct FittedBlender {
    pub model: BlenderModel,
    pub warnings: Vec<String>,
}

pub fn fit_blender(spec: &BlenderSpec, data: &FeatureSet, seed: u64) -> Result<FittedBlender> {
    if data.rows() == 0 {
        return Err(Error::InvalidInput("no rows to fit a blender on".into()));
    }
    Ok(match spec {
        BlenderSpec::Linear(p) => {
            let (model, warnings) = fit_binned_lr(data, p.criterion, p.bins, p.lambda)?;
            FittedBlender {
                model: BlenderModel::Linear(model),
                warnings,
            }
        }
        BlenderSpec::Forest(p) => FittedBlender {
            model: BlenderModel::Forest(fit_forest_blender(data, p, seed)?),
            warnings: Vec::new(),
        },
        BlenderSpec::Mlp(p) => FittedBlender {
            model: BlenderModel::Mlp(fit_mlp_blender(data, p, seed)?),
            warnings: Vec::new(),
        },
    })
}

const BLENDER_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct VersionedBlender {
    version: u32,
    spec: BlenderSpec,
    model: BlenderModel,
}

impl BlenderModel {
    pub fn input_width(&self) -> usize {
        match self {
            BlenderModel::Linear(m) => m.input_width(),
            BlenderModel::Forest(m) => m.input_width(),
            BlenderModel::Mlp(m) => m.input_width(),
        }
    }

    /// Unclamped output on one feature row.
    pub fn predict_raw(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.input_width() {
            return Err(Error::InvalidInput(format!(
                "blender expects {} features, got {}",
                self.input_width(),
                features.len()
            )));
        }
        Ok(match self {
            BlenderModel::Linear(m) => m.predict_raw(features),
            BlenderModel::Forest(m) => m.predict_raw(features),
            BlenderModel::Mlp(m) => m.predict_raw(features),
        })
    }

    /// Final score on the rating scale.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        self.predict_raw(features).map(clamp_rating)
    }

    pub fn predict_row(&self, row: &BlendRow) -> Result<f64> {
        self.predict(&row.features())
    }

    pub fn to_json(&self, spec: &BlenderSpec) -> Result<String> {
        Ok(serde_json::to_string(&VersionedBlender {
            version: BLENDER_FORMAT_VERSION,
            spec: spec.clone(),
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<(BlenderSpec, Self)> {
        let v: VersionedBlender = serde_json::from_str(text)?;
        if v.version != BLENDER_FORMAT_VERSION {
            return Err(Error::Format(format!("blender format version {}", v.version)));
        }
        Ok((v.spec, v.model))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_shape() {
        let s: BlenderSpec =
            serde_json::from_str(r#"{"family":"linear","lambda":0.1,"criterion":"movie_support","bins":8}"#).unwrap();
        assert_eq!(s.label(), "linear(lambda=0.1, criterion=movie_support, bins=8)");
        let s: BlenderSpec = serde_json::from_str(r#"{"family":"mlp","layers":[24,12,12]}"#).unwrap();
        assert_eq!(s.label(), "mlp(layers=24-12-12)");
        let s: BlenderSpec = serde_json::from_str(r#"{"family":"forest","trees":500}"#).unwrap();
        assert_eq!(s.family(), BlenderFamily::Forest);
        assert!("gbm".parse::<BlenderFamily>().is_err());
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let x = [1.0, 5.0, 3.0, 5.0];
        let s = Standardizer::fit(&x, 2);
        assert_eq!(s.mean, [2.0, 5.0]);
        assert_eq!(s.scale, [1.0, 1.0]);
        assert_eq!(s.apply(&x), [-1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn feature_width_mismatch_is_rejected() {
        let data = FeatureSet::new(
            vec![3.0, 1.0, 1.0, 3.0, 3.0, 4.0, 2.0, 2.0, 4.0, 4.0],
            vec![3.0, 4.0],
            1,
        )
        .unwrap();
        let fitted = fit_blender(
            &BlenderSpec::Linear(LinearParams {
                lambda: 0.1,
                criterion: BinCriterion::UserSupport,
                bins: 1,
            }),
            &data,
            0,
        )
        .unwrap();
        assert!(matches!(fitted.model.predict(&[1.0, 2.0]), Err(Error::InvalidInput(_))));
        assert!(FeatureSet::new(vec![1.0; 9], vec![1.0; 2], 1).is_err());
    }
}
