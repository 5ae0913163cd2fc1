//! Individual rating predictors behind one train/predict interface.

mod autorec;
mod baseline;
mod matrix;
mod neighborhood;
mod rfcb;
mod svd;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use autorec::{fit_autorec, AutoRecGradients, AutoRecModel, AutoRecParams};
pub use baseline::{BaselineKind, BaselineModel};
pub use matrix::RatingMatrix;
pub use neighborhood::{Neighborhood, PackedSymmetric, SimilarityModel, MIN_OVERLAP};
pub use rfcb::{fit_rfcb, RfcbParams, UserForestModel};
pub use svd::{fit_svd, fit_svd_with, LatentFactorModel, SvdParams};

use crate::data::{GenreCatalog, RatingsDataset};
use crate::{clamp_rating, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ubcf,
    Ibcf,
    Svd,
    Autorec,
    Rfcb,
    UserAvg,
    MovieAvg,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Ubcf,
        Family::Ibcf,
        Family::Svd,
        Family::Autorec,
        Family::Rfcb,
        Family::UserAvg,
        Family::MovieAvg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Ubcf => "ubcf",
            Family::Ibcf => "ibcf",
            Family::Svd => "svd",
            Family::Autorec => "autorec",
            Family::Rfcb => "rfcb",
            Family::UserAvg => "user_avg",
            Family::MovieAvg => "movie_avg",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                let valid: Vec<_> = Family::ALL.iter().map(|f| f.name()).collect();
                Error::InvalidArgument(format!(
                    "unknown recommender family {s:?}; valid families: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Family-specific hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RecommenderKind {
    Ubcf { neighbors: usize },
    Ibcf { neighbors: usize },
    Svd(SvdParams),
    Autorec(AutoRecParams),
    Rfcb(RfcbParams),
    UserAvg,
    MovieAvg,
}

/// A recommender family, its hyper-parameters and its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommenderSpec {
    #[serde(flatten)]
    pub kind: RecommenderKind,
    #[serde(default)]
    pub seed: u64,
}

impl RecommenderSpec {
    pub fn new(kind: RecommenderKind) -> Self {
        Self { kind, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Default hyper-parameters for `family`.
    pub fn default_for(family: Family) -> Self {
        Self::new(match family {
            Family::Ubcf => RecommenderKind::Ubcf { neighbors: 20 },
            Family::Ibcf => RecommenderKind::Ibcf { neighbors: 20 },
            Family::Svd => RecommenderKind::Svd(SvdParams::default()),
            Family::Autorec => RecommenderKind::Autorec(AutoRecParams::default()),
            Family::Rfcb => RecommenderKind::Rfcb(RfcbParams::default()),
            Family::UserAvg => RecommenderKind::UserAvg,
            Family::MovieAvg => RecommenderKind::MovieAvg,
        })
    }

    pub fn family(&self) -> Family {
        match self.kind {
            RecommenderKind::Ubcf { .. } => Family::Ubcf,
            RecommenderKind::Ibcf { .. } => Family::Ibcf,
            RecommenderKind::Svd(_) => Family::Svd,
            RecommenderKind::Autorec(_) => Family::Autorec,
            RecommenderKind::Rfcb(_) => Family::Rfcb,
            RecommenderKind::UserAvg => Family::UserAvg,
            RecommenderKind::MovieAvg => Family::MovieAvg,
        }
    }

    /// Short human-readable name, e.g. `svd(factors=50)`.
    pub fn label(&self) -> String {
        match &self.kind {
            RecommenderKind::Ubcf { neighbors } => format!("ubcf(neighbors={neighbors})"),
            RecommenderKind::Ibcf { neighbors } => format!("ibcf(neighbors={neighbors})"),
            RecommenderKind::Svd(p) => format!("svd(factors={})", p.factors),
            RecommenderKind::Autorec(p) => format!("autorec(hidden={})", p.hidden),
            RecommenderKind::Rfcb(p) => format!("rfcb(trees={})", p.trees),
            RecommenderKind::UserAvg => "user_avg".into(),
            RecommenderKind::MovieAvg => "movie_avg".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidArgument(format!(
                "{}: {what} must be positive",
                self.label()
            )))
        };
        let positive = |x: f64| x.is_finite() && x > 0.0;
        match &self.kind {
            RecommenderKind::Ubcf { neighbors } | RecommenderKind::Ibcf { neighbors } if *neighbors == 0 => {
                bad("neighbors")
            }
            RecommenderKind::Svd(p) if p.factors == 0 || p.epochs == 0 => bad("factors and epochs"),
            RecommenderKind::Svd(p) if !positive(p.learning_rate) || p.regularization < 0.0 => bad("learning rate"),
            RecommenderKind::Autorec(p) if p.hidden == 0 || p.epochs == 0 || p.batch_size == 0 => {
                bad("hidden size, epochs and batch size")
            }
            RecommenderKind::Autorec(p) if !positive(p.learning_rate) || p.regularization < 0.0 => bad("learning rate"),
            RecommenderKind::Rfcb(p) if p.trees == 0 || p.min_leaf == 0 || p.max_depth == Some(0) => {
                bad("trees, min_leaf and max_depth")
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for RecommenderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum ModelKind {
    Ubcf(SimilarityModel),
    Ibcf(SimilarityModel),
    Svd(LatentFactorModel),
    Autorec(AutoRecModel),
    Rfcb(UserForestModel),
    UserAvg,
    MovieAvg,
}

/// A trained recommender together with the averages used when it cannot
/// predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommenderModel {
    pub kind: ModelKind,
    pub baseline: BaselineModel,
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct VersionedModel<T> {
    version: u32,
    model: T,
}

impl RecommenderModel {
    /// The family's own estimate before clamping; `None` signals cold start.
    pub fn predict_raw(&self, u: usize, i: usize) -> Option<f64> {
        match &self.kind {
            ModelKind::Ubcf(m) => m.predict_user_based(u, i),
            ModelKind::Ibcf(m) => m.predict_item_based(u, i),
            ModelKind::Svd(m) => m.predict(u, i),
            ModelKind::Autorec(m) => m.predict(u, i),
            ModelKind::Rfcb(m) => m.predict(u, i),
            ModelKind::UserAvg => self.baseline.user_mean(u),
            ModelKind::MovieAvg => self.baseline.item_mean(i),
        }
    }

    /// Total prediction on the rating scale: the family estimate, or the
    /// user mean, item mean or global mean in that order.
    pub fn predict(&self, u: usize, i: usize) -> f64 {
        clamp_rating(
            self.predict_raw(u, i)
                .filter(|p| p.is_finite())
                .unwrap_or_else(|| self.baseline.fallback(u, i)),
        )
    }

    /// Candidates by descending predicted score, ties by ascending index.
    pub fn rank(&self, u: usize, candidates: &[usize]) -> Vec<usize> {
        rank_by_score(candidates.iter().map(|&i| (i, self.predict(u, i))))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&VersionedModel {
            version: MODEL_FORMAT_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: VersionedModel<Self> = serde_json::from_str(text)?;
        if v.version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("model format version {}", v.version)));
        }
        Ok(v.model)
    }
}

/// Orders `(item, score)` pairs by descending score, ties by ascending item.
pub fn rank_by_score(scored: impl IntoIterator<Item = (usize, f64)>) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = scored.into_iter().collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Trains `spec` on `data`. `genres` is required for the content forests.
pub fn train(spec: &RecommenderSpec, data: &RatingsDataset, genres: Option<&GenreCatalog>) -> Result<RecommenderModel> {
    if data.is_empty() {
        return Err(Error::Training(format!("{}: empty training data", spec.label())));
    }
    spec.validate()?;
    let ratings = Arc::new(RatingMatrix::from_dataset(data));
    let baseline = BaselineModel::fit(&ratings);
    let kind = match &spec.kind {
        RecommenderKind::Ubcf { neighbors } => ModelKind::Ubcf(SimilarityModel::fit_user_based(ratings, *neighbors)),
        RecommenderKind::Ibcf { neighbors } => ModelKind::Ibcf(SimilarityModel::fit_item_based(ratings, *neighbors)),
        RecommenderKind::Svd(p) => ModelKind::Svd(fit_svd(&ratings, p, spec.seed)?),
        RecommenderKind::Autorec(p) => ModelKind::Autorec(fit_autorec(ratings, p, spec.seed)?),
        RecommenderKind::Rfcb(p) => {
            let genres = genres.ok_or_else(|| Error::MissingInput("content forests need a genre catalog".into()))?;
            ModelKind::Rfcb(fit_rfcb(&ratings, Arc::new(genres.aligned(data)), p, spec.seed)?)
        }
        RecommenderKind::UserAvg => ModelKind::UserAvg,
        RecommenderKind::MovieAvg => ModelKind::MovieAvg,
    };
    Ok(RecommenderModel { kind, baseline })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_movies_str, Rating};
    use std::path::Path;

    fn dataset(rows: &[(u32, u32, f64)]) -> RatingsDataset {
        RatingsDataset::from_ratings(
            rows.iter()
                .map(|&(u, i, v)| Rating {
                    user_id: u,
                    item_id: i,
                    value: v,
                    timestamp: 0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn user_average_baseline() {
        let ds = dataset(&[(1, 1, 4.0), (1, 2, 2.0), (2, 1, 5.0)]);
        let m = train(&RecommenderSpec::default_for(Family::UserAvg), &ds, None).unwrap();
        assert_eq!(m.baseline.user_mean(0), Some(3.0));
        assert_eq!(m.predict(0, 1), 3.0);
        let m = train(&RecommenderSpec::default_for(Family::MovieAvg), &ds, None).unwrap();
        assert_eq!(m.predict(1, 0), 4.5);
        // Item present in the index space but absent from this training view:
        // no family estimate, so the user mean takes over.
        let view = ds.subset(&[0, 2]);
        let m = train(&RecommenderSpec::default_for(Family::MovieAvg), &view, None).unwrap();
        assert_eq!(m.predict_raw(0, 1), None);
        assert_eq!(m.predict(0, 1), 4.0);
    }

    #[test]
    fn errors() {
        let empty = dataset(&[]);
        assert!(matches!(
            train(&RecommenderSpec::default_for(Family::UserAvg), &empty, None),
            Err(Error::Training(_))
        ));
        let ds = dataset(&[(1, 1, 4.0)]);
        assert!(matches!(
            train(&RecommenderSpec::default_for(Family::Rfcb), &ds, None),
            Err(Error::MissingInput(_))
        ));
        let bad = RecommenderSpec::new(RecommenderKind::Ubcf { neighbors: 0 });
        assert!(matches!(train(&bad, &ds, None), Err(Error::InvalidArgument(_))));
        let err = "bogus".parse::<Family>().unwrap_err().to_string();
        assert!(err.contains("movie_avg") && err.contains("autorec"));
    }

    #[test]
    fn cold_start_falls_back_in_order() {
        // u0 rated only i0; u1 rated i0 and i1; i2 seen only via u2.
        let ds = dataset(&[(1, 1, 2.0), (2, 1, 4.0), (2, 2, 5.0), (3, 3, 1.0)]);
        let view = ds.subset(&[0, 1, 2]);
        let m = train(&RecommenderSpec::default_for(Family::Ubcf), &view, None).unwrap();
        assert_eq!(m.predict_raw(0, 1), None);
        assert_eq!(m.predict(0, 1), 2.0); // user mean
        assert_eq!(m.predict(2, 1), 5.0); // item mean
        assert_eq!(m.predict(2, 2), 11.0 / 3.0); // global mean
    }

    #[test]
    fn rfcb_single_leaf_and_average() {
        let cat = parse_movies_str("1::A::Drama\n2::B::Comedy\n", Path::new("m")).unwrap();
        let ds = dataset(&[(1, 1, 4.0), (1, 2, 4.0)]);
        let spec = RecommenderSpec::new(RecommenderKind::Rfcb(RfcbParams {
            trees: 1,
            ..Default::default()
        }));
        let m = train(&spec, &ds, Some(&cat)).unwrap();
        assert_eq!(m.predict(0, 0), 4.0);

        let forest = crate::tree::RandomForest::from_trees(vec![
            crate::tree::RegressionTree::constant(3.0),
            crate::tree::RegressionTree::constant(5.0),
        ]);
        let model = UserForestModel {
            forests: vec![Some(forest)],
            items: Arc::new(cat.aligned(&ds)),
        };
        assert_eq!(model.predict(0, 1), Some(4.0));
    }

    #[test]
    fn ranking() {
        assert_eq!(rank_by_score([(0, 3.0), (1, 4.5)]), vec![1, 0]);
        assert_eq!(rank_by_score([(5, 3.0), (2, 3.0), (9, 3.0)]), vec![2, 5, 9]);
        let scored = [(0, 1.5), (1, 4.0), (2, 2.2), (3, 4.0)];
        let transformed = scored.map(|(i, s)| (i, (s * 3.0f64).exp() - 7.0));
        assert_eq!(rank_by_score(scored), rank_by_score(transformed));
    }

    #[test]
    fn spec_json_shape() {
        let spec: RecommenderSpec = serde_json::from_str(r#"{"family":"svd","factors":200}"#).unwrap();
        match &spec.kind {
            RecommenderKind::Svd(p) => {
                assert_eq!(p.factors, 200);
                assert_eq!(p.epochs, SvdParams::default().epochs);
            }
            other => panic!("{other:?}"),
        }
        let spec: RecommenderSpec = serde_json::from_str(r#"{"family":"ubcf","neighbors":80,"seed":4}"#).unwrap();
        assert_eq!(
            spec,
            RecommenderSpec::new(RecommenderKind::Ubcf { neighbors: 80 }).with_seed(4)
        );
        let back: RecommenderSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn model_json_round_trip_is_lossless() {
        let rows: Vec<(u32, u32, f64)> = (1..=5u32)
            .flat_map(|u| (1..=4u32).map(move |i| (u, i, f64::from((u * 3 + i) % 5 + 1))))
            .collect();
        let ds = dataset(&rows);
        let cat = parse_movies_str(
            "1::A::Drama\n2::B::Comedy|War\n3::C::War\n4::D::Drama|Comedy\n",
            Path::new("m"),
        )
        .unwrap();
        for family in Family::ALL {
            let spec = match family {
                Family::Svd => RecommenderSpec::new(RecommenderKind::Svd(SvdParams {
                    factors: 3,
                    epochs: 5,
                    ..Default::default()
                })),
                Family::Autorec => RecommenderSpec::new(RecommenderKind::Autorec(AutoRecParams {
                    hidden: 3,
                    epochs: 5,
                    ..Default::default()
                })),
                f => RecommenderSpec::default_for(f),
            };
            let m = train(&spec, &ds, Some(&cat)).unwrap();
            let back = RecommenderModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m, "{family}");
        }
    }
}
