//! User-based and item-based k-nearest-neighbor collaborative filtering.
//!
//! User similarities are Pearson correlations over co-rated items; item
//! similarities are adjusted cosines (ratings centred on each user's mean)
//! over co-rating users. Pairs with fewer than [`MIN_OVERLAP`] co-ratings, or
//! with zero variance on the overlap, get similarity 0.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::matrix::RatingMatrix;

pub const MIN_OVERLAP: u32 = 2;

/// Symmetric matrix with an implicit diagonal, stored as the packed strict
/// upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedSymmetric {
    n: usize,
    values: Vec<f64>,
}

impl PackedSymmetric {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn offset(&self, a: usize) -> usize {
        // Start of row `a` (entries (a, a+1..n)).
        a * (2 * self.n - a - 1) / 2
    }

    /// Off-diagonal entry; `a != b`.
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        debug_assert_ne!(a, b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.values[self.offset(lo) + hi - lo - 1]
    }

    fn row_mut(&mut self, a: usize) -> &mut [f64] {
        let start = self.offset(a);
        let len = self.n - a - 1;
        &mut self.values[start..start + len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    User,
    Item,
}

/// Trained neighborhood model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityModel {
    pub kind: Neighborhood,
    pub similarities: PackedSymmetric,
    /// Per-user mean rating over the training data.
    pub means: Vec<Option<f64>>,
    pub neighbors: usize,
    pub ratings: Arc<RatingMatrix>,
}

#[derive(Default, Clone, Copy)]
struct PairStats {
    n: u32,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl PairStats {
    #[inline]
    fn add(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    /// Pearson correlation in the scaled form n·Σxy − ΣxΣy over
    /// √((n·Σx² − (Σx)²)(n·Σy² − (Σy)²)), exact for integral ratings.
    fn pearson(&self) -> f64 {
        if self.n < MIN_OVERLAP {
            return 0.0;
        }
        let n = f64::from(self.n);
        let vx = n * self.sxx - self.sx * self.sx;
        let vy = n * self.syy - self.sy * self.sy;
        if vx <= 0.0 || vy <= 0.0 {
            return 0.0;
        }
        ((n * self.sxy - self.sx * self.sy) / (vx * vy).sqrt()).clamp(-1.0, 1.0)
    }

    /// Cosine of already-centred values.
    fn cosine(&self) -> f64 {
        if self.n < MIN_OVERLAP {
            return 0.0;
        }
        let d = self.sxx * self.syy;
        if d <= 0.0 {
            return 0.0;
        }
        (self.sxy / d.sqrt()).clamp(-1.0, 1.0)
    }
}

impl SimilarityModel {
    pub fn fit_user_based(ratings: Arc<RatingMatrix>, neighbors: usize) -> Self {
        let m = ratings.num_users();
        let mut sims = PackedSymmetric::zeros(m);
        let mut acc = vec![PairStats::default(); m];
        for u in 0..m {
            let row = sims.row_mut(u);
            for &(i, x) in ratings.user_row(u) {
                for &(v, y) in ratings.item_column(i as usize) {
                    let v = v as usize;
                    if v > u {
                        acc[v].add(x, y);
                    }
                }
            }
            for (slot, stats) in row.iter_mut().zip(&mut acc[u + 1..]) {
                *slot = stats.pearson();
                *stats = PairStats::default();
            }
        }
        let means = (0..m).map(|u| ratings.user_mean(u)).collect();
        Self {
            kind: Neighborhood::User,
            similarities: sims,
            means,
            neighbors,
            ratings,
        }
    }

    pub fn fit_item_based(ratings: Arc<RatingMatrix>, neighbors: usize) -> Self {
        let n = ratings.num_items();
        let means: Vec<Option<f64>> = (0..ratings.num_users()).map(|u| ratings.user_mean(u)).collect();
        let mut sims = PackedSymmetric::zeros(n);
        let mut acc = vec![PairStats::default(); n];
        for i in 0..n {
            let row = sims.row_mut(i);
            for &(u, x) in ratings.item_column(i) {
                let mean = means[u as usize].expect("rater has a mean");
                let dx = x - mean;
                for &(j, y) in ratings.user_row(u as usize) {
                    let j = j as usize;
                    if j > i {
                        acc[j].add(dx, y - mean);
                    }
                }
            }
            for (slot, stats) in row.iter_mut().zip(&mut acc[i + 1..]) {
                *slot = stats.cosine();
                *stats = PairStats::default();
            }
        }
        Self {
            kind: Neighborhood::Item,
            similarities: sims,
            means,
            neighbors,
            ratings,
        }
    }

    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        if a == b {
            1.0
        } else {
            self.similarities.get(a, b)
        }
    }

    pub fn predict(&self, u: usize, i: usize) -> Option<f64> {
        match self.kind {
            Neighborhood::User => self.predict_user_based(u, i),
            Neighborhood::Item => self.predict_item_based(u, i),
        }
    }

    /// User mean plus the similarity-weighted mean deviation of the `k` most
    /// similar users who rated `i`. Zero similarities carry no weight and are
    /// not selected. `None` when no such neighbor exists.
    pub fn predict_user_based(&self, u: usize, i: usize) -> Option<f64> {
        if u >= self.similarities.dim() || i >= self.ratings.num_items() {
            return None;
        }
        let mean_u = self.means[u]?;
        let mut cands: Vec<(f64, u32, f64)> = self
            .ratings
            .item_column(i)
            .iter()
            .filter(|&&(v, _)| v as usize != u)
            .filter_map(|&(v, r)| {
                let s = self.similarities.get(u, v as usize);
                (s != 0.0).then(|| (s, v, r - self.means[v as usize].unwrap_or(r)))
            })
            .collect();
        let chosen = top_k(&mut cands, self.neighbors);
        let (num, den) = chosen
            .iter()
            .fold((0.0, 0.0), |(n, d), &(s, _, dev)| (n + s * dev, d + s.abs()));
        if chosen.is_empty() || den == 0.0 {
            return None;
        }
        Some(mean_u + num / den)
    }

    /// Similarity-weighted mean of `u`'s ratings on the `k` most similar
    /// items to `i` with positive similarity. `None` when there are none.
    pub fn predict_item_based(&self, u: usize, i: usize) -> Option<f64> {
        if i >= self.similarities.dim() || u >= self.ratings.num_users() {
            return None;
        }
        let mut cands: Vec<(f64, u32, f64)> = self
            .ratings
            .user_row(u)
            .iter()
            .filter(|&&(j, _)| j as usize != i)
            .filter_map(|&(j, r)| {
                let s = self.similarities.get(i, j as usize);
                (s > 0.0).then_some((s, j, r))
            })
            .collect();
        let chosen = top_k(&mut cands, self.neighbors);
        let (num, den) = chosen
            .iter()
            .fold((0.0, 0.0), |(n, d), &(s, _, r)| (n + s * r, d + s.abs()));
        if chosen.is_empty() || den == 0.0 {
            return None;
        }
        Some(num / den)
    }
}

/// Keeps the `k` entries with the highest similarity (ties: lower index),
/// returned in that order.
fn top_k(cands: &mut [(f64, u32, f64)], k: usize) -> &[(f64, u32, f64)] {
    let by_rank = |a: &(f64, u32, f64), b: &(f64, u32, f64)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    let k = k.min(cands.len());
    if k == 0 {
        return &[];
    }
    if k < cands.len() {
        cands.select_nth_unstable_by(k - 1, by_rank);
    }
    let chosen = &mut cands[..k];
    chosen.sort_by(by_rank);
    chosen
}
