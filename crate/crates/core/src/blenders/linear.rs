//! Binned ridge regression: rows are routed by a support criterion into
//! quantile bins, and each bin gets its own ridge fit on standardised
//! features.

use serde::{Deserialize, Serialize};

use super::ridge::{fit_ridge, RidgeSolution};
use super::{BinCriterion, FeatureSet, Standardizer};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBlenderModel {
    pub criterion: BinCriterion,
    pub criterion_column: usize,
    /// Ascending thresholds; a value `v` falls in bin `#{e : e <= v}`.
    pub edges: Vec<f64>,
    pub bins: Vec<RidgeSolution>,
    pub lambda: f64,
    pub standardizer: Standardizer,
}

/// Thresholds splitting `values` into `bins` groups of equal count (up to
/// ties, which always stay in one bin). Duplicate thresholds collapse.
pub fn quantile_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = Vec::new();
    if n == 0 {
        return edges;
    }
    for b in 1..bins {
        let t = sorted[b * n / bins];
        if t > sorted[0] && edges.last().is_none_or(|&e| t > e) {
            edges.push(t);
        }
    }
    edges
}

#[inline]
pub fn assign_bin(edges: &[f64], value: f64) -> usize {
    edges.partition_point(|&e| e <= value)
}

/// Fits one ridge regression per criterion bin.
///
/// Bins with fewer rows than features + 1 are merged into a neighbour; each
/// merge is reported in the returned warnings.
pub fn fit_binned_lr(
    data: &FeatureSet,
    criterion: BinCriterion,
    bins: usize,
    lambda: f64,
) -> Result<(LinearBlenderModel, Vec<String>)> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bin count must be at least 1".into()));
    }
    if data.rows() == 0 {
        return Err(Error::InvalidInput("no rows to fit".into()));
    }
    let cols = data.cols();
    let column = criterion.column(data.predictions);
    let values: Vec<f64> = (0..data.rows()).map(|r| data.row(r)[column]).collect();
    let mut edges = quantile_edges(&values, bins);
    let mut warnings = Vec::new();
    if edges.len() + 1 < bins {
        warnings.push(format!(
            "{}: only {} distinct bins for {bins} requested",
            criterion.name(),
            edges.len() + 1
        ));
    }

    let min_rows = cols + 1;
    loop {
        let mut counts = vec![0usize; edges.len() + 1];
        for &v in &values {
            counts[assign_bin(&edges, v)] += 1;
        }
        let Some(small) = counts.iter().position(|&c| c < min_rows) else {
            break;
        };
        if edges.is_empty() {
            break;
        }
        // Merge with the smaller neighbour by dropping the shared edge.
        let drop = if small == 0 {
            0
        } else if small == counts.len() - 1 || counts[small - 1] <= counts[small + 1] {
            small - 1
        } else {
            small
        };
        warnings.push(format!(
            "{}: bin {small} has {} rows (< {min_rows}); merged with a neighbour",
            criterion.name(),
            counts[small]
        ));
        edges.remove(drop);
    }

    let standardizer = Standardizer::fit(&data.x, cols);
    let z = standardizer.apply(&data.x);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); edges.len() + 1];
    for (r, &v) in values.iter().enumerate() {
        members[assign_bin(&edges, v)].push(r);
    }
    let mut fits = Vec::with_capacity(members.len());
    for rows in &members {
        let mut bx = Vec::with_capacity(rows.len() * cols);
        let mut by = Vec::with_capacity(rows.len());
        for &r in rows {
            bx.extend_from_slice(&z[r * cols..(r + 1) * cols]);
            by.push(data.y[r]);
        }
        fits.push(fit_ridge(&bx, cols, &by, lambda)?);
    }
    Ok((
        LinearBlenderModel {
            criterion,
            criterion_column: column,
            edges,
            bins: fits,
            lambda,
            standardizer,
        },
        warnings,
    ))
}

impl LinearBlenderModel {
    pub fn input_width(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn bin_of(&self, features: &[f64]) -> usize {
        assign_bin(&self.edges, features[self.criterion_column])
    }

    pub fn predict_raw(&self, features: &[f64]) -> f64 {
        let mut z = vec![0.0; features.len()];
        self.standardizer.apply_row(features, &mut z);
        self.bins[self.bin_of(features)].predict(&z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_split() {
        let edges = quantile_edges(&[1.0, 1.0, 2.0, 9.0, 9.0, 10.0], 2);
        assert_eq!(edges, [9.0]);
        let counts = [1.0, 1.0, 2.0, 9.0, 9.0, 10.0].iter().fold([0, 0], |mut c, &v| {
            c[assign_bin(&edges, v)] += 1;
            c
        });
        assert_eq!(counts, [3, 3]);
    }

    #[test]
    fn boundary_values_route_to_end_bins() {
        let edges = quantile_edges(&(1..=12).map(f64::from).collect::<Vec<_>>(), 4);
        assert_eq!(edges, [4.0, 7.0, 10.0]);
        assert_eq!(assign_bin(&edges, -3.0), 0);
        assert_eq!(assign_bin(&edges, 1e9), 3);
        assert_eq!(assign_bin(&edges, 7.0), 2);
    }

    #[test]
    fn ties_collapse_bins() {
        assert!(quantile_edges(&[5.0; 10], 4).is_empty());
        assert_eq!(quantile_edges(&[1.0, 1.0, 1.0, 1.0, 2.0, 3.0], 3), [2.0]);
    }

    #[test]
    fn small_bins_are_merged_with_warning() {
        // One prediction column: bins need at least 6 rows.
        let rows = 20;
        let x: Vec<f64> = (0..rows)
            .flat_map(|r| [3.0 + (r % 3) as f64 * 0.5, r as f64, 1.0, 3.0, 3.0])
            .collect();
        let y: Vec<f64> = (0..rows).map(|r| 3.0 + (r % 3) as f64 * 0.5).collect();
        let data = FeatureSet::new(x, y, 1).unwrap();
        let (model, warnings) = fit_binned_lr(&data, BinCriterion::UserSupport, 8, 0.01).unwrap();
        assert!(model.bins.len() <= 3, "{}", model.bins.len());
        assert!(!warnings.is_empty());
    }
}
