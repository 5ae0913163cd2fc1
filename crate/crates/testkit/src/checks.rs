//! Whole-property checks. Each returns a one-line summary on success and a
//! description of the first violation otherwise.

use std::ops::Range;

use blendrec::blenders::{
    fit_binned_lr, fit_ridge, BinCriterion, BlenderSpec, FeatureSet, ForestBlenderParams, LinearParams, MlpParams,
    Standardizer,
};
use blendrec::config::BlenderGrid;
use blendrec::data::{make_folds, FoldPlan, RatingsDataset};
use blendrec::pipeline::{
    blender_cv, build_blendset_with_plan, fold_seed, nested_cv, nested_cv_with_plan, outer_fold, NestedCvReport,
};
use blendrec::recommenders::{
    train, AutoRecParams, ModelKind, RecommenderKind, RecommenderSpec, RfcbParams, SvdParams,
};
use blendrec::seed::rng_from_seed;
use rand::Rng as _;

use crate::gradcheck;
use crate::naive::{self, NaiveSvd, Table};
use crate::toy::{random_dataset, random_genres, random_train_subset, synthetic_rows};

pub const ORACLE_TOLERANCE: f64 = 1e-10;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const RIDGE_TOLERANCE: f64 = 1e-10;
pub const NORMAL_EQUATION_TOLERANCE: f64 = 1e-8;

/// Small instances of every predictor family, seeded from `seed`.
pub fn toy_roster(seed: u64) -> Vec<RecommenderSpec> {
    let mut rng = rng_from_seed(seed);
    let kinds = vec![
        RecommenderKind::Ubcf {
            neighbors: rng.random_range(1..=4),
        },
        RecommenderKind::Ibcf {
            neighbors: rng.random_range(1..=4),
        },
        RecommenderKind::Svd(SvdParams {
            factors: rng.random_range(1..=4),
            epochs: 6,
            learning_rate: 0.02,
            ..SvdParams::default()
        }),
        RecommenderKind::Autorec(AutoRecParams {
            hidden: rng.random_range(1..=4),
            epochs: 4,
            batch_size: 2,
            learning_rate: 0.01,
            regularization: 0.1,
        }),
        RecommenderKind::Rfcb(RfcbParams {
            trees: 3,
            max_depth: Some(3),
            min_leaf: 1,
        }),
        RecommenderKind::UserAvg,
        RecommenderKind::MovieAvg,
    ];
    kinds
        .into_iter()
        .enumerate()
        .map(|(k, kind)| RecommenderSpec::new(kind).with_seed(seed.wrapping_mul(31).wrapping_add(k as u64)))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct OracleSummary {
    pub comparisons: usize,
    pub max_abs_diff: f64,
}

fn compare(
    summary: &mut OracleSummary,
    what: &str,
    seed: u64,
    u: usize,
    i: usize,
    got: Option<f64>,
    want: Option<f64>,
) -> Result<(), String> {
    summary.comparisons += 1;
    match (got, want) {
        (None, None) => Ok(()),
        (Some(a), Some(b)) if (a - b).abs() <= ORACLE_TOLERANCE => {
            summary.max_abs_diff = summary.max_abs_diff.max((a - b).abs());
            Ok(())
        }
        _ => Err(format!(
            "{what}, seed {seed}, user {u}, item {i}: got {got:?}, want {want:?}"
        )),
    }
}

/// Every family's pre-clamp prediction against its naive reference on every
/// (user, item) cell of random datasets with at most 50 ratings, part of
/// them held out so cold-start cells are covered.
pub fn formula_oracles(seeds: Range<u64>) -> Result<OracleSummary, String> {
    let mut summary = OracleSummary::default();
    for seed in seeds {
        let full = random_dataset(seed, 50);
        let ds = random_train_subset(&full, seed);
        let genres = random_genres(&full, seed);
        let t = Table::from_dataset(&ds);
        for spec in toy_roster(seed) {
            let model = train(&spec, &ds, Some(&genres)).map_err(|e| format!("seed {seed}: {e}"))?;
            let naive_svd = match &spec.kind {
                RecommenderKind::Svd(p) => Some(NaiveSvd::train(&ds, p, spec.seed)),
                _ => None,
            };
            for u in 0..t.users() {
                for i in 0..t.items() {
                    let want = match (&spec.kind, &model.kind) {
                        (RecommenderKind::Ubcf { neighbors }, _) => naive::ubcf(&t, *neighbors, u, i),
                        (RecommenderKind::Ibcf { neighbors }, _) => naive::ibcf(&t, *neighbors, u, i),
                        (RecommenderKind::Svd(_), _) => naive_svd.as_ref().unwrap().predict(u, i),
                        (RecommenderKind::Autorec(_), ModelKind::Autorec(m)) => naive::autorec_forward(m, &t, u, i),
                        (RecommenderKind::Rfcb(_), ModelKind::Rfcb(m)) => {
                            let row: Vec<f64> = genres
                                .genres()
                                .iter()
                                .enumerate()
                                .map(|(g, _)| {
                                    let id = ds.item_index().external(i);
                                    f64::from(genres.vector(id).unwrap()[g])
                                })
                                .collect();
                            t.user_mean(u)
                                .map(|_| naive::forest_average(m.forests[u].as_ref().unwrap(), &row))
                        }
                        (RecommenderKind::UserAvg, _) => t.user_mean(u),
                        (RecommenderKind::MovieAvg, _) => t.item_mean(i),
                        _ => return Err(format!("seed {seed}: unexpected model kind for {}", spec.label())),
                    };
                    compare(&mut summary, &spec.label(), seed, u, i, model.predict_raw(u, i), want)?;
                }
            }
        }
        // The integer Pearson used above agrees with the textbook form.
        for u in 0..t.users() {
            for v in 0..t.users() {
                let (a, b) = (naive::pearson(&t, u, v), naive::pearson_two_pass(&t, u, v));
                if (a - b).abs() > 1e-9 {
                    return Err(format!(
                        "seed {seed}: pearson forms disagree for users {u},{v}: {a} vs {b}"
                    ));
                }
            }
        }
    }
    Ok(summary)
}

/// AutoRec groups on several toy instances and every MLP architecture of
/// the default grid. Returns the largest relative error seen.
pub fn gradient_checks() -> Result<f64, String> {
    let mut worst = 0.0f64;
    let mut record = |what: String, errors: Vec<gradcheck::GroupError>| -> Result<(), String> {
        for e in errors {
            if e.relative.is_nan() || e.relative >= GRADIENT_TOLERANCE {
                return Err(format!("{what} {}: relative error {:e}", e.group, e.relative));
            }
            worst = worst.max(e.relative);
        }
        Ok(())
    };
    for seed in 0..5 {
        record(
            format!("autorec seed {seed}"),
            gradcheck::autorec(seed, 1 + seed as usize % 4, 0.7),
        )?;
    }
    for (k, layers) in BlenderGrid::default().mlp_layers.iter().enumerate() {
        record(format!("mlp {layers:?}"), gradcheck::mlp(layers, k as u64))?;
    }
    Ok(worst)
}

fn toy_blender_grid() -> Vec<BlenderSpec> {
    vec![
        BlenderSpec::Linear(LinearParams {
            lambda: 0.01,
            criterion: BinCriterion::UserSupport,
            bins: 1,
        }),
        BlenderSpec::Linear(LinearParams {
            lambda: 1.0,
            criterion: BinCriterion::MovieSupport,
            bins: 2,
        }),
        BlenderSpec::Forest(ForestBlenderParams::with_trees(4)),
        BlenderSpec::Mlp(MlpParams {
            epochs: 4,
            batch_size: 16,
            ..MlpParams::with_layers(vec![4, 3])
        }),
    ]
}

/// A one-candidate grid reproduces plain k-fold CV of that candidate.
pub fn single_candidate_equals_plain_cv() -> Result<String, String> {
    let rows = synthetic_rows(150, 11);
    for (n, spec) in toy_blender_grid().iter().enumerate() {
        let seed = 100 + n as u64;
        let report = nested_cv(&rows, std::slice::from_ref(spec), 5, 4, seed).map_err(|e| e.to_string())?;
        let plain = blender_cv(&rows, spec, 5, seed).map_err(|e| e.to_string())?;
        let folds: Vec<f64> = report.per_fold.iter().map(|f| f.rmse).collect();
        if folds != plain.per_fold || report.mean_rmse != plain.mean {
            return Err(format!("{spec}: nested {folds:?} vs plain {:?}", plain.per_fold));
        }
    }
    Ok(format!("{} candidates", toy_blender_grid().len()))
}

/// `mean_rmse` is the arithmetic mean of the per-fold values, also after a
/// JSON round trip.
pub fn mean_is_exact() -> Result<String, String> {
    let rows = synthetic_rows(120, 12);
    let report = nested_cv(&rows, &toy_blender_grid(), 4, 3, 5).map_err(|e| e.to_string())?;
    let json = serde_json_round_trip(&report)?;
    for r in [&report, &json] {
        let mean = r.per_fold.iter().map(|f| f.rmse).sum::<f64>() / r.per_fold.len() as f64;
        if mean != r.mean_rmse || r.per_fold.len() != r.k {
            return Err(format!("mean {} vs recomputed {mean}", r.mean_rmse));
        }
    }
    Ok(format!("mean {:.6} over {} folds", report.mean_rmse, report.k))
}

fn serde_json_round_trip(report: &NestedCvReport) -> Result<NestedCvReport, String> {
    let text = serde_json::to_string(report).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

/// Changing rating `r` must not move any prediction or meta-feature of the
/// rows in `r`'s own fold, and row `r` must equal a model retrained on the
/// other folds with `r` removed.
pub fn trainer_no_leakage(seeds: Range<u64>) -> Result<String, String> {
    let mut checked = 0;
    for seed in seeds {
        let ds = random_dataset(seed, 30);
        if ds.len() < 6 {
            continue;
        }
        let genres = random_genres(&ds, seed);
        let specs = toy_roster(seed);
        let plan = make_folds(&ds, 3, seed).map_err(|e| e.to_string())?;
        let base = build_blendset_with_plan(&ds, &specs, Some(&genres), plan.clone()).map_err(|e| e.to_string())?;
        for r in 0..ds.len() {
            let old = ds.triplet(r).value;
            let changed = ds.with_value(r, if old > 3.0 { 1.0 } else { 5.0 });
            let other =
                build_blendset_with_plan(&changed, &specs, Some(&genres), plan.clone()).map_err(|e| e.to_string())?;
            let j = plan.fold_of(r);
            for n in (0..ds.len()).filter(|&n| plan.fold_of(n) == j) {
                if other.rows[n].predictions != base.rows[n].predictions || other.rows[n].meta != base.rows[n].meta {
                    return Err(format!(
                        "seed {seed}: changing rating {r} moved row {n} of the same fold"
                    ));
                }
            }
            retrain_without(&ds, &plan, r, &specs, &genres, &base.rows[r].predictions)
                .map_err(|e| format!("seed {seed}, row {r}: {e}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} rows"))
}

fn retrain_without(
    ds: &RatingsDataset,
    plan: &FoldPlan,
    r: usize,
    specs: &[RecommenderSpec],
    genres: &blendrec::data::GenreCatalog,
    stored: &[f64],
) -> Result<(), String> {
    let j = plan.fold_of(r);
    let keep: Vec<usize> = (0..ds.len()).filter(|&n| plan.fold_of(n) != j && n != r).collect();
    let train_set = ds.subset(&keep);
    let t = ds.triplet(r);
    for (c, spec) in specs.iter().enumerate() {
        let model =
            train(&spec.clone().with_seed(fold_seed(spec, j)), &train_set, Some(genres)).map_err(|e| e.to_string())?;
        let p = model.predict(t.user, t.item);
        if p != stored[c] {
            return Err(format!("{}: stored {} vs retrained {p}", spec.label(), stored[c]));
        }
    }
    Ok(())
}

/// For every outer fold `j`, replacing the rows of `F_j` with unrelated
/// rows leaves the selection, its inner scores and the refitted model
/// unchanged.
pub fn tester_no_leakage() -> Result<String, String> {
    let rows = synthetic_rows(100, 13);
    let data = FeatureSet::from_rows(&rows, 2).map_err(|e| e.to_string())?;
    let plan = FoldPlan::random(data.rows(), 4, 77).map_err(|e| e.to_string())?;
    let grid = toy_blender_grid();
    let mut rng = rng_from_seed(14);
    for j in 0..plan.k() {
        let base = outer_fold(&data, &plan, j, &grid, 3, 21).map_err(|e| e.to_string())?;
        let mut dummy = data.clone();
        let cols = dummy.cols();
        for r in plan.test_indices(j).map_err(|e| e.to_string())? {
            for c in 0..cols {
                dummy.x[r * cols + c] = rng.random_range(-50.0..50.0);
            }
            dummy.y[r] = rng.random_range(1.0..5.0);
        }
        let other = outer_fold(&dummy, &plan, j, &grid, 3, 21).map_err(|e| e.to_string())?;
        if other.selection.index != base.selection.index
            || other.selection.scores != base.selection.scores
            || other.model != base.model
        {
            return Err(format!("outer fold {j}: held-out rows influenced selection or fit"));
        }
    }
    let report = nested_cv_with_plan(&data, &plan, &grid, 3, 21).map_err(|e| e.to_string())?;
    Ok(format!("{} outer folds, mean rmse {:.4}", report.k, report.mean_rmse))
}

/// Compares binned linear regression against a naive
/// closed form: returns (max prediction difference, max normal-equation
/// residual).
pub fn binned_lr_degeneracy(seeds: Range<u64>) -> Result<(f64, f64), String> {
    let mut max_diff = 0.0f64;
    let mut max_resid = 0.0f64;
    for seed in seeds {
        let rows = synthetic_rows(60, 1000 + seed);
        let data = FeatureSet::from_rows(&rows, 2).map_err(|e| e.to_string())?;
        let cols = data.cols();
        for &lambda in &BlenderGrid::default().lambdas {
            for criterion in [BinCriterion::UserSupport, BinCriterion::MovieSupport] {
                let (model, _) = fit_binned_lr(&data, criterion, 1, lambda).map_err(|e| e.to_string())?;
                // Library ridge on the same standardised features.
                let st = Standardizer::fit(&data.x, cols);
                let lib = fit_ridge(&st.apply(&data.x), cols, &data.y, lambda).map_err(|e| e.to_string())?;
                // Naive closed form on independently standardised features.
                let z = naive_standardize(&data);
                let (w, c) = naive::ridge(&z, &data.y, lambda);
                for (r, zr) in z.iter().enumerate() {
                    let a = model.predict_raw(data.row(r));
                    let b = c + w.iter().zip(zr).map(|(w, x)| w * x).sum::<f64>();
                    let l = lib.predict(&st.apply(data.row(r)));
                    max_diff = max_diff.max((a - b).abs()).max((a - l).abs());
                }
                if model.bins.len() != 1 {
                    return Err(format!("bins=1 produced {} bins", model.bins.len()));
                }
            }
            max_resid = max_resid.max(normal_equation_residual(&data, lambda)?);
        }
    }
    if max_diff > RIDGE_TOLERANCE {
        return Err(format!("bins=1 differs from closed-form ridge by {max_diff:e}"));
    }
    if max_resid > NORMAL_EQUATION_TOLERANCE {
        return Err(format!("normal-equation residual {max_resid:e}"));
    }
    Ok((max_diff, max_resid))
}

fn naive_standardize(data: &FeatureSet) -> Vec<Vec<f64>> {
    let (n, cols) = (data.rows(), data.cols());
    let mut out: Vec<Vec<f64>> = (0..n).map(|r| data.row(r).to_vec()).collect();
    for c in 0..cols {
        let mean = out.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let var = out.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        for row in &mut out {
            row[c] = (row[c] - mean) / sd;
        }
    }
    out
}

/// `max |(XcᵀXc + λI) w − Xcᵀ yc|` for the library ridge on raw features.
fn normal_equation_residual(data: &FeatureSet, lambda: f64) -> Result<f64, String> {
    let (n, cols) = (data.rows(), data.cols());
    let sol = fit_ridge(&data.x, cols, &data.y, lambda).map_err(|e| e.to_string())?;
    let mean: Vec<f64> = (0..cols)
        .map(|c| (0..n).map(|r| data.row(r)[c]).sum::<f64>() / n as f64)
        .collect();
    let ym = data.y.iter().sum::<f64>() / n as f64;
    let mut worst = 0.0f64;
    for a in 0..cols {
        let mut lhs = lambda * sol.weights[a];
        let mut rhs = 0.0;
        for r in 0..n {
            let xa = data.row(r)[a] - mean[a];
            let fitted: f64 = (0..cols).map(|b| (data.row(r)[b] - mean[b]) * sol.weights[b]).sum();
            lhs += xa * fitted;
            rhs += xa * (data.y[r] - ym);
        }
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}
