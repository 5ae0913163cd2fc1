use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Weights and unpenalised intercept of a ridge regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeSolution {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl RidgeSolution {
    #[inline]
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

/// Minimises `‖y − Xw − c‖² + λ‖w‖²` in closed form.
///
/// The intercept is removed by centring, leaving the normal equations
/// `(XcᵀXc + λI) w = Xcᵀ yc`, solved by Cholesky. When that system is
/// singular (λ = 0 with collinear or constant columns) the minimum-norm
/// least-squares solution is taken from an SVD instead.
pub fn fit_ridge(x: &[f64], cols: usize, y: &[f64], lambda: f64) -> Result<RidgeSolution> {
    let rows = y.len();
    if rows == 0 || cols == 0 || x.len() != rows * cols {
        return Err(Error::InvalidInput(format!(
            "ridge needs a non-empty {rows}x{cols} system, got {} values",
            x.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be >= 0")));
    }
    let n = rows as f64;
    let mut mean = vec![0.0; cols];
    for row in x.chunks_exact(cols) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let y_mean = y.iter().sum::<f64>() / n;

    let mut gram = DMatrix::<f64>::zeros(cols, cols);
    let mut rhs = DVector::<f64>::zeros(cols);
    let mut centred = vec![0.0; cols];
    for (row, &t) in x.chunks_exact(cols).zip(y) {
        for ((c, v), m) in centred.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        let yc = t - y_mean;
        for a in 0..cols {
            rhs[a] += centred[a] * yc;
            for b in a..cols {
                gram[(a, b)] += centred[a] * centred[b];
            }
        }
    }
    for a in 0..cols {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
        gram[(a, a)] += lambda;
    }

    let w = match gram.clone().cholesky() {
        Some(ch) if lambda > 0.0 || well_conditioned(&ch) => ch.solve(&rhs),
        _ => {
            let svd = gram.svd(true, true);
            let tol = svd.singular_values.max() * 1e-12 * cols as f64;
            svd.solve(&rhs, tol)
                .map_err(|e| Error::Training(format!("ridge solve failed: {e}")))?
        }
    };
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = y_mean - weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
    if !intercept.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Training("ridge solution is not finite".into()));
    }
    Ok(RidgeSolution { weights, intercept })
}

fn well_conditioned(ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let diag = ch.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
        (lo.min(d.abs()), hi.max(d.abs()))
    });
    // Squared ratio of Cholesky pivots bounds the condition number from below.
    hi > 0.0 && (lo / hi).powi(2) > 1e-13
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand::Rng as _;

    #[test]
    fn exact_linear_relation() {
        let mut rng = rng_from_seed(1);
        let x: Vec<f64> = (0..30 * 3).map(|_| rng.random_range(1.0..5.0)).collect();
        let y: Vec<f64> = x.chunks(3).map(|r| r[0]).collect();
        let s = fit_ridge(&x, 3, &y, 0.0).unwrap();
        assert!((s.weights[0] - 1.0).abs() < 1e-10);
        assert!(s.weights[1].abs() < 1e-10 && s.weights[2].abs() < 1e-10);
        assert!(s.intercept.abs() < 1e-9);
        for (r, t) in x.chunks(3).zip(&y) {
            assert!((s.predict(r) - t).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_feature_gives_mean_intercept() {
        let x = [2.0; 5];
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let s = fit_ridge(&x, 1, &y, 0.0).unwrap();
        assert_eq!(s.weights, [0.0]);
        assert!((s.intercept - 3.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_take_min_norm() {
        let x: Vec<f64> = (0..10).flat_map(|k| [f64::from(k), f64::from(k)]).collect();
        let y: Vec<f64> = (0..10).map(|k| 2.0 * f64::from(k) + 1.0).collect();
        let s = fit_ridge(&x, 2, &y, 0.0).unwrap();
        assert!((s.weights[0] - 1.0).abs() < 1e-9 && (s.weights[1] - 1.0).abs() < 1e-9);
        assert!((s.intercept - 1.0).abs() < 1e-9);
    }

    /// Plain gradient descent on the ridge objective, run to convergence.
    fn gradient_descent(x: &[f64], cols: usize, y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
        let n = y.len();
        let mut w = vec![0.0; cols];
        let mut c = 0.0;
        let step = 1.0 / (2.0 * (n as f64 * 25.0 * cols as f64 + lambda));
        for _ in 0..2_000_000 {
            let mut gw = vec![0.0; cols];
            let mut gc = 0.0;
            for (row, t) in x.chunks(cols).zip(y) {
                let e = c + row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - t;
                gc += 2.0 * e;
                for k in 0..cols {
                    gw[k] += 2.0 * e * row[k];
                }
            }
            let mut moved = gc.abs();
            for k in 0..cols {
                gw[k] += 2.0 * lambda * w[k];
                moved = moved.max(gw[k].abs());
                w[k] -= step * gw[k];
            }
            c -= step * gc;
            if moved < 1e-11 {
                break;
            }
        }
        (w, c)
    }

    #[test]
    fn matches_iterative_solver() {
        let mut rng = rng_from_seed(20);
        let x: Vec<f64> = (0..20 * 5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(1.0..5.0)).collect();
        let s = fit_ridge(&x, 5, &y, 0.1).unwrap();
        let (w, c) = gradient_descent(&x, 5, &y, 0.1);
        for (a, b) in s.weights.iter().zip(&w) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!((s.intercept - c).abs() < 1e-6);
    }
}
