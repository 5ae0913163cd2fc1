//! Tester layer: nested cross-validation over a blender grid.
//!
//! Seeds, given the tester seed `s`:
//! * outer folds: `derive(s, "outer", 0)`
//! * inner folds of outer fold `j`: `derive(s, "inner", j)`
//! * candidate `a` on inner fold `i`: `derive(derive(s, "inner-fit", j), "candidate", a * k_inner + i)`
//! * refit of the winner on outer fold `j`: `derive(s, "outer-fit", j)`
//!
//! [`blender_cv`] uses the outer folds and refit seeds, so a one-candidate
//! grid reproduces it exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rmse, CvScore};
use crate::blenders::{fit_blender, BlendRow, BlenderModel, BlenderSpec, FeatureSet, FittedBlender};
use crate::data::FoldPlan;
use crate::seed::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub selected: BlenderSpec,
    /// RMSE of the refitted winner on the held-out outer fold.
    pub rmse: f64,
    /// Mean inner RMSE that won the selection.
    pub inner_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCvReport {
    pub k: usize,
    pub inner_k: usize,
    pub seed: u64,
    pub grid: Vec<BlenderSpec>,
    pub per_fold: Vec<FoldResult>,
    pub mean_rmse: f64,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

/// Outcome of model selection over a set of training rows.
#[derive(Debug, Clone)]
pub struct Selection {
    /// Grid index of the winner.
    pub index: usize,
    /// Mean inner RMSE per candidate; `None` for excluded candidates.
    pub scores: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

/// One outer iteration: selection on `F^{-j}`, refit, and score on `F_j`.
#[derive(Debug, Clone)]
pub struct OuterFold {
    pub selection: Selection,
    pub model: BlenderModel,
    pub rmse: f64,
}

fn outer_plan(rows: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    FoldPlan::random(rows, k, derive_seed(seed, "outer", 0))
}

fn score(model: &BlenderModel, data: &FeatureSet) -> Result<f64> {
    let pred = (0..data.rows())
        .map(|r| model.predict(data.row(r)))
        .collect::<Result<Vec<f64>>>()?;
    rmse(&pred, &data.y)
}

/// Picks the candidate with the lowest mean RMSE across the folds of
/// `plan`, which ranges over `data`'s rows. Ties go to the earlier
/// candidate. Candidates that fail on any fold are dropped with a warning.
pub fn select_blender(data: &FeatureSet, plan: &FoldPlan, grid: &[BlenderSpec], seed: u64) -> Result<Selection> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("blender grid is empty".into()));
    }
    if plan.len() != data.rows() {
        return Err(Error::InvalidArgument(format!(
            "fold plan covers {} rows, data has {}",
            plan.len(),
            data.rows()
        )));
    }
    let k = plan.k();
    let folds = (0..k)
        .map(|i| {
            Ok((
                data.subset(&plan.train_indices(i)?),
                data.subset(&plan.test_indices(i)?),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<std::result::Result<f64, String>> = grid
        .par_iter()
        .enumerate()
        .map(|(a, spec)| {
            let mut total = 0.0;
            for (i, (train, test)) in folds.iter().enumerate() {
                let s = derive_seed(seed, "candidate", (a * k + i) as u64);
                let fitted = fit_blender(spec, train, s).map_err(|e| format!("{spec}: {e}"))?;
                let r = score(&fitted.model, test).map_err(|e| format!("{spec}: {e}"))?;
                if !r.is_finite() {
                    return Err(format!("{spec}: non-finite RMSE on inner fold {i}"));
                }
                total += r;
            }
            Ok(total / k as f64)
        })
        .collect();
    let mut warnings = Vec::new();
    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (a, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(s) => {
                if best.is_none_or(|(_, b)| s < b) {
                    best = Some((a, s));
                }
                scores.push(Some(s));
            }
            Err(msg) => {
                warnings.push(format!("excluded {msg}"));
                scores.push(None);
            }
        }
    }
    let (index, _) =
        best.ok_or_else(|| Error::Pipeline(format!("every blender candidate failed: {}", warnings.join("; "))))?;
    Ok(Selection {
        index,
        scores,
        warnings,
    })
}

/// Outer fold `j` of nested CV under `plan`.
pub fn outer_fold(
    data: &FeatureSet,
    plan: &FoldPlan,
    j: usize,
    grid: &[BlenderSpec],
    inner_k: usize,
    seed: u64,
) -> Result<OuterFold> {
    let train_rows = plan.train_indices(j)?;
    let train = data.subset(&train_rows);
    let test = data.subset(&plan.test_indices(j)?);
    let j64 = j as u64;
    let inner = FoldPlan::random(train.rows(), inner_k, derive_seed(seed, "inner", j64))?;
    let mut selection = select_blender(&train, &inner, grid, derive_seed(seed, "inner-fit", j64))?;
    for w in &mut selection.warnings {
        *w = format!("outer fold {j}: {w}");
    }
    let FittedBlender { model, warnings } =
        fit_blender(&grid[selection.index], &train, derive_seed(seed, "outer-fit", j64))?;
    selection
        .warnings
        .extend(warnings.into_iter().map(|w| format!("outer fold {j}: {w}")));
    let rmse = score(&model, &test)?;
    Ok(OuterFold { selection, model, rmse })
}

/// Nested cross-validation: `k` outer folds, each selecting among `grid`
/// with an `inner_k`-fold CV over its training rows.
pub fn nested_cv(
    rows: &[BlendRow],
    grid: &[BlenderSpec],
    k: usize,
    inner_k: usize,
    seed: u64,
) -> Result<NestedCvReport> {
    let data = features(rows)?;
    let plan = outer_plan(data.rows(), k, seed)?;
    nested_cv_with_plan(&data, &plan, grid, inner_k, seed)
}

pub fn nested_cv_with_plan(
    data: &FeatureSet,
    plan: &FoldPlan,
    grid: &[BlenderSpec],
    inner_k: usize,
    seed: u64,
) -> Result<NestedCvReport> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("blender grid is empty".into()));
    }
    let mut per_fold = Vec::with_capacity(plan.k());
    let mut warnings = Vec::new();
    for j in 0..plan.k() {
        let outer = outer_fold(data, plan, j, grid, inner_k, seed)?;
        let selected = grid[outer.selection.index].clone();
        log::info!("outer fold {j}: selected {selected}, rmse {:.5}", outer.rmse);
        per_fold.push(FoldResult {
            fold: j,
            inner_rmse: outer.selection.scores[outer.selection.index].expect("winner has a score"),
            selected,
            rmse: outer.rmse,
        });
        warnings.extend(outer.selection.warnings);
    }
    let mean_rmse = per_fold.iter().map(|f| f.rmse).sum::<f64>() / per_fold.len() as f64;
    Ok(NestedCvReport {
        k: plan.k(),
        inner_k,
        seed,
        grid: grid.to_vec(),
        per_fold,
        mean_rmse,
        warnings,
        config_digest: None,
    })
}

/// Plain k-fold CV of one blender with the nested-CV outer folds and
/// refit seeds.
pub fn blender_cv(rows: &[BlendRow], spec: &BlenderSpec, k: usize, seed: u64) -> Result<CvScore> {
    let data = features(rows)?;
    let plan = outer_plan(data.rows(), k, seed)?;
    let mut per_fold = Vec::with_capacity(k);
    for j in 0..k {
        let train = data.subset(&plan.train_indices(j)?);
        let test = data.subset(&plan.test_indices(j)?);
        let fitted = fit_blender(spec, &train, derive_seed(seed, "outer-fit", j as u64))?;
        per_fold.push(score(&fitted.model, &test)?);
    }
    Ok(CvScore::from_folds(per_fold))
}

/// Winner of a model-selection CV over the whole blendset, refit on all rows.
#[derive(Debug, Clone)]
pub struct FinalBlender {
    pub spec: BlenderSpec,
    pub model: BlenderModel,
    /// Mean CV RMSE that selected it.
    pub cv_rmse: f64,
    /// RMSE of the refit model on the rows it was trained on.
    pub train_rmse: f64,
    pub warnings: Vec<String>,
}

pub fn finalize_blender(rows: &[BlendRow], grid: &[BlenderSpec], k: usize, seed: u64) -> Result<FinalBlender> {
    let data = features(rows)?;
    let plan = FoldPlan::random(data.rows(), k, derive_seed(seed, "final", 0))?;
    let selection = select_blender(&data, &plan, grid, derive_seed(seed, "final-select", 0))?;
    let spec = grid[selection.index].clone();
    let FittedBlender { model, warnings } = fit_blender(&spec, &data, derive_seed(seed, "final-fit", 0))?;
    let train_rmse = score(&model, &data)?;
    let mut all = selection.warnings;
    all.extend(warnings);
    Ok(FinalBlender {
        cv_rmse: selection.scores[selection.index].expect("winner has a score"),
        spec,
        model,
        train_rmse,
        warnings: all,
    })
}

fn features(rows: &[BlendRow]) -> Result<FeatureSet> {
    let width = rows
        .first()
        .ok_or_else(|| Error::InvalidInput("blendset is empty".into()))?
        .predictions
        .len();
    FeatureSet::from_rows(rows, width)
}
