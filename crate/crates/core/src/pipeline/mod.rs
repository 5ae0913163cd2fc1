//! Trainer layer: cross-validated blendset construction and per-recommender
//! evaluation. The tester layer lives in [`nested`].

mod nested;

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use nested::{
    blender_cv, finalize_blender, nested_cv, nested_cv_with_plan, outer_fold, select_blender, FinalBlender, FoldResult,
    NestedCvReport, OuterFold, Selection,
};

use crate::blenders::BlendRow;
use crate::data::{make_folds, split, FoldPlan, GenreCatalog, RatingsDataset};
use crate::metafeatures::{MetaStats, MetaVector, META_NAMES};
use crate::recommenders::{train, RecommenderSpec};
use crate::seed::derive_seed;
use crate::{Error, Result};

/// Root-mean-square error.
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(Error::InvalidInput(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            predicted.len(),
            actual.len()
        )));
    }
    let sse: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

/// Per-fold RMSE of a cross-validation run and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub per_fold: Vec<f64>,
    pub mean: f64,
}

impl CvScore {
    pub fn from_folds(per_fold: Vec<f64>) -> Self {
        let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
        Self { per_fold, mean }
    }
}

/// Out-of-fold predictions of every recommender plus meta-features, one row
/// per rating of the source dataset in its original order.
#[derive(Debug, Clone, PartialEq)]
pub struct Blendset {
    pub rows: Vec<BlendRow>,
    pub recommender_specs: Vec<RecommenderSpec>,
    /// Trainer-layer folds; absent when the blendset was read from CSV.
    pub fold_plan: Option<FoldPlan>,
}

/// Seed used to train `spec` on trainer fold `j`.
pub fn fold_seed(spec: &RecommenderSpec, j: usize) -> u64 {
    derive_seed(spec.seed, "fold", j as u64)
}

/// Trains every spec on each set of `k - 1` folds and predicts the held-out
/// fold. User and item columns hold external ids.
pub fn build_blendset(
    dataset: &RatingsDataset,
    specs: &[RecommenderSpec],
    genres: Option<&GenreCatalog>,
    k: usize,
    seed: u64,
) -> Result<Blendset> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no recommenders to blend".into()));
    }
    let plan = make_folds(dataset, k, seed)?;
    build_blendset_with_plan(dataset, specs, genres, plan)
}

pub fn build_blendset_with_plan(
    dataset: &RatingsDataset,
    specs: &[RecommenderSpec],
    genres: Option<&GenreCatalog>,
    plan: FoldPlan,
) -> Result<Blendset> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no recommenders to blend".into()));
    }
    let m = specs.len();
    let mut rows: Vec<Option<BlendRow>> = vec![None; dataset.len()];
    for j in 0..plan.k() {
        let (train_set, _) = split(dataset, &plan, j)?;
        let test = plan.test_indices(j)?;
        let meta = MetaStats::from_dataset(&train_set);
        let columns = train_fold(&train_set, dataset, &test, specs, genres, j)?;
        for (pos, &n) in test.iter().enumerate() {
            let t = dataset.triplet(n);
            let r = &dataset.ratings()[n];
            rows[n] = Some(BlendRow {
                user: r.user_id as usize,
                item: r.item_id as usize,
                actual: t.value,
                predictions: (0..m).map(|c| columns[c][pos]).collect(),
                meta: meta.vector(t.user, t.item),
            });
        }
    }
    Ok(Blendset {
        rows: rows
            .into_iter()
            .map(|r| r.expect("fold plan covers every row"))
            .collect(),
        recommender_specs: specs.to_vec(),
        fold_plan: Some(plan),
    })
}

/// Predictions of each spec (trained on `train_set`) for rows `test`.
fn train_fold(
    train_set: &RatingsDataset,
    dataset: &RatingsDataset,
    test: &[usize],
    specs: &[RecommenderSpec],
    genres: Option<&GenreCatalog>,
    j: usize,
) -> Result<Vec<Vec<f64>>> {
    let results: Vec<Result<Vec<f64>>> = specs
        .par_iter()
        .enumerate()
        .map(|(c, spec)| {
            let seeded = spec.clone().with_seed(fold_seed(spec, j));
            log::info!("fold {j}: training {}", spec.label());
            let model = train(&seeded, train_set, genres).map_err(|e| Error::Recommender {
                index: c,
                spec: spec.label(),
                source: Box::new(e),
            })?;
            Ok(test
                .iter()
                .map(|&n| {
                    let t = dataset.triplet(n);
                    model.predict(t.user, t.item)
                })
                .collect())
        })
        .collect();
    results.into_iter().collect()
}

/// Plain k-fold CV of one recommender, with the same folds and seeds a
/// blendset built from `(dataset, k, seed)` would use.
pub fn evaluate_recommender(
    dataset: &RatingsDataset,
    spec: &RecommenderSpec,
    genres: Option<&GenreCatalog>,
    k: usize,
    seed: u64,
) -> Result<CvScore> {
    let plan = make_folds(dataset, k, seed)?;
    let mut per_fold = Vec::with_capacity(k);
    for j in 0..k {
        let (train_set, _) = split(dataset, &plan, j)?;
        let test = plan.test_indices(j)?;
        let pred = train_fold(&train_set, dataset, &test, std::slice::from_ref(spec), genres, j)?
            .pop()
            .expect("one spec");
        let actual: Vec<f64> = test.iter().map(|&n| dataset.triplet(n).value).collect();
        per_fold.push(rmse(&pred, &actual)?);
    }
    Ok(CvScore::from_folds(per_fold))
}

impl Blendset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of recommender prediction columns.
    pub fn width(&self) -> usize {
        self.rows
            .first()
            .map_or(self.recommender_specs.len(), |r| r.predictions.len())
    }

    /// Per-fold RMSE of prediction column `c` over the trainer folds; equal
    /// to [`evaluate_recommender`] of that column's spec.
    pub fn column_cv(&self, c: usize) -> Result<CvScore> {
        let plan = self
            .fold_plan
            .as_ref()
            .ok_or_else(|| Error::MissingInput("blendset has no fold plan".into()))?;
        if c >= self.width() {
            return Err(Error::InvalidArgument(format!("column {c} out of range")));
        }
        let mut per_fold = Vec::with_capacity(plan.k());
        for j in 0..plan.k() {
            let test = plan.test_indices(j)?;
            let pred: Vec<f64> = test.iter().map(|&n| self.rows[n].predictions[c]).collect();
            let actual: Vec<f64> = test.iter().map(|&n| self.rows[n].actual).collect();
            per_fold.push(rmse(&pred, &actual)?);
        }
        Ok(CvScore::from_folds(per_fold))
    }

    pub fn header(width: usize) -> Vec<String> {
        let mut h = vec!["user".to_string(), "item".into(), "actual".into()];
        h.extend((1..=width).map(|c| format!("p_{c}")));
        h.extend(META_NAMES.iter().map(|s| s.to_string()));
        h
    }

    /// Writes the CSV form. Floats carry 17 significant digits so values
    /// survive a round trip exactly.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let width = self.width();
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::header(width)).map_err(csv_error)?;
        let float = |x: f64| format!("{x:.16e}");
        for r in &self.rows {
            let mut rec = Vec::with_capacity(width + 7);
            rec.push(r.user.to_string());
            rec.push(r.item.to_string());
            rec.push(float(r.actual));
            rec.extend(r.predictions.iter().map(|&p| float(p)));
            rec.push(r.meta.user_support.to_string());
            rec.push(r.meta.movie_support.to_string());
            rec.push(float(r.meta.user_average));
            rec.push(float(r.meta.movie_average));
            out.write_record(&rec).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Parses the CSV form. Specs and fold plan are not part of the file.
    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut input = csv::Reader::from_reader(r);
        let header: Vec<String> = input.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
        if header.len() < 8 {
            return Err(Error::Format(format!("blendset header has {} columns", header.len())));
        }
        let width = header.len() - 7;
        if header != Self::header(width) {
            return Err(Error::Format(format!(
                "unexpected blendset header {}",
                header.join(",")
            )));
        }
        let mut rows = Vec::new();
        for (n, rec) in input.records().enumerate() {
            let rec = rec.map_err(csv_error)?;
            let line = n + 2;
            let field = |c: usize| -> Result<&str> {
                rec.get(c)
                    .ok_or_else(|| Error::Format(format!("line {line}: missing column {}", header[c])))
            };
            let float = |c: usize| -> Result<f64> {
                let v: f64 = field(c)?
                    .parse()
                    .map_err(|_| Error::Format(format!("line {line}: bad {} value", header[c])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Format(format!("line {line}: non-finite {}", header[c])))
                }
            };
            let int = |c: usize| -> Result<u64> {
                field(c)?
                    .parse()
                    .map_err(|_| Error::Format(format!("line {line}: bad {} value", header[c])))
            };
            let support = |c: usize| -> Result<u32> {
                u32::try_from(int(c)?).map_err(|_| Error::Format(format!("line {line}: {} too large", header[c])))
            };
            rows.push(BlendRow {
                user: int(0)? as usize,
                item: int(1)? as usize,
                actual: float(2)?,
                predictions: (0..width).map(|c| float(3 + c)).collect::<Result<_>>()?,
                meta: MetaVector {
                    user_support: support(3 + width)?,
                    movie_support: support(4 + width)?,
                    user_average: float(5 + width)?,
                    movie_average: float(6 + width)?,
                },
            });
        }
        if rows.is_empty() {
            return Err(Error::Format("blendset has no rows".into()));
        }
        Ok(Self {
            rows,
            recommender_specs: Vec::new(),
            fold_plan: None,
        })
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rating;
    use crate::recommenders::{Family, RecommenderKind};

    fn toy(n: u32) -> RatingsDataset {
        RatingsDataset::from_ratings(
            (0..n)
                .map(|k| Rating {
                    user_id: k % 5 + 1,
                    item_id: k / 5 + 1,
                    value: f64::from(1 + (k * 7 + k / 3) % 5),
                    timestamp: 0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rmse_basic() {
        assert_eq!(rmse(&[2.0, 4.0], &[2.0, 4.0]).unwrap(), 0.0);
        assert!((rmse(&[1.0, 3.0], &[3.0, 3.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn user_average_column_is_mean_over_other_fold() {
        let ds = toy(40);
        let spec = RecommenderSpec::default_for(Family::UserAvg);
        let b = build_blendset(&ds, &[spec], None, 2, 9).unwrap();
        let plan = b.fold_plan.as_ref().unwrap();
        assert_eq!(b.len(), ds.len());
        for (n, row) in b.rows.iter().enumerate() {
            let own = ds.triplet(n);
            let others: Vec<f64> = (0..ds.len())
                .filter(|&o| plan.fold_of(o) != plan.fold_of(n) && ds.triplet(o).user == own.user)
                .map(|o| ds.triplet(o).value)
                .collect();
            let expected = if others.is_empty() {
                // Fallback: item mean, then global mean, of the other fold.
                let train: Vec<usize> = (0..ds.len()).filter(|&o| plan.fold_of(o) != plan.fold_of(n)).collect();
                let item: Vec<f64> = train
                    .iter()
                    .filter(|&&o| ds.triplet(o).item == own.item)
                    .map(|&o| ds.triplet(o).value)
                    .collect();
                let pool = if item.is_empty() {
                    train.iter().map(|&o| ds.triplet(o).value).collect()
                } else {
                    item
                };
                pool.iter().sum::<f64>() / pool.len() as f64
            } else {
                others.iter().sum::<f64>() / others.len() as f64
            };
            assert!((row.predictions[0] - expected).abs() < 1e-12);
            assert_eq!(row.actual, own.value);
        }
    }

    #[test]
    fn column_cv_matches_evaluate() {
        let ds = toy(60);
        let specs = [
            RecommenderSpec::default_for(Family::MovieAvg),
            RecommenderSpec::new(RecommenderKind::Ubcf { neighbors: 3 }).with_seed(4),
        ];
        let b = build_blendset(&ds, &specs, None, 3, 5).unwrap();
        for (c, spec) in specs.iter().enumerate() {
            assert_eq!(
                b.column_cv(c).unwrap(),
                evaluate_recommender(&ds, spec, None, 3, 5).unwrap()
            );
        }
    }

    #[test]
    fn csv_round_trip() {
        let ds = toy(30);
        let b = build_blendset(&ds, &[RecommenderSpec::default_for(Family::UserAvg)], None, 3, 1).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("user,item,actual,p_1,user_support,movie_support,user_average,movie_average\n"));
        let back = Blendset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows, b.rows);
    }

    #[test]
    fn read_rejects_corrupt_input() {
        assert!(Blendset::read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let head = "user,item,actual,p_1,user_support,movie_support,user_average,movie_average\n";
        assert!(Blendset::read_csv(head.as_bytes()).is_err());
        assert!(Blendset::read_csv(format!("{head}1,2,x,3,1,1,3,3\n").as_bytes()).is_err());
        assert!(Blendset::read_csv(format!("{head}1,2,3,3,1\n").as_bytes()).is_err());
    }

    #[test]
    fn training_errors_name_the_spec() {
        let ds = toy(20);
        let specs = [
            RecommenderSpec::default_for(Family::UserAvg),
            RecommenderSpec::default_for(Family::Rfcb),
        ];
        match build_blendset(&ds, &specs, None, 2, 0) {
            Err(Error::Recommender { index, spec, .. }) => {
                assert_eq!(index, 1);
                assert!(spec.starts_with("rfcb"));
            }
            other => panic!("{other:?}"),
        }
    }
}
