//! Support counts and average ratings of users and items in a training fold.

use serde::{Deserialize, Serialize};

use crate::data::RatingsDataset;

/// Number of meta-features per row.
pub const META_FEATURES: usize = 4;

/// Column names in blendset order.
pub const META_NAMES: [&str; META_FEATURES] = ["user_support", "movie_support", "user_average", "movie_average"];

/// Used as the global mean of an empty training set.
const SCALE_MIDPOINT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaVector {
    pub user_support: u32,
    pub movie_support: u32,
    pub user_average: f64,
    pub movie_average: f64,
}

impl MetaVector {
    pub fn to_array(&self) -> [f64; META_FEATURES] {
        [
            f64::from(self.user_support),
            f64::from(self.movie_support),
            self.user_average,
            self.movie_average,
        ]
    }
}

/// Per-user and per-item counts and sums over one training fold.
#[derive(Debug, Clone)]
pub struct MetaStats {
    user_count: Vec<u32>,
    user_sum: Vec<f64>,
    item_count: Vec<u32>,
    item_sum: Vec<f64>,
    global_mean: f64,
}

impl MetaStats {
    pub fn from_dataset(train: &RatingsDataset) -> Self {
        let mut s = Self {
            user_count: vec![0; train.num_users()],
            user_sum: vec![0.0; train.num_users()],
            item_count: vec![0; train.num_items()],
            item_sum: vec![0.0; train.num_items()],
            global_mean: train.global_mean().unwrap_or(SCALE_MIDPOINT),
        };
        for t in train.triplets() {
            s.user_count[t.user] += 1;
            s.user_sum[t.user] += t.value;
            s.item_count[t.item] += 1;
            s.item_sum[t.item] += t.value;
        }
        s
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn vector(&self, u: usize, i: usize) -> MetaVector {
        let (user_support, user_average) = average(&self.user_count, &self.user_sum, u, self.global_mean);
        let (movie_support, movie_average) = average(&self.item_count, &self.item_sum, i, self.global_mean);
        MetaVector {
            user_support,
            movie_support,
            user_average,
            movie_average,
        }
    }
}

fn average(count: &[u32], sum: &[f64], k: usize, fallback: f64) -> (u32, f64) {
    match count.get(k) {
        Some(&c) if c > 0 => (c, sum[k] / f64::from(c)),
        _ => (0, fallback),
    }
}

/// Meta-features of `(u, i)` computed from `train` alone.
pub fn compute_meta(train: &RatingsDataset, u: usize, i: usize) -> MetaVector {
    MetaStats::from_dataset(train).vector(u, i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rating;

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
    fn supports_and_averages() {
        let ds = dataset(&[(1, 1, 5.0), (1, 2, 5.0), (1, 3, 2.0), (2, 1, 3.0)]);
        let v = compute_meta(&ds, 0, 0);
        assert_eq!(v.user_support, 3);
        assert_eq!(v.user_average, 4.0);
        assert_eq!(v.movie_support, 2);
        assert_eq!(v.movie_average, 4.0);
    }

    #[test]
    fn unseen_item_uses_global_mean() {
        let ds = dataset(&[(1, 1, 5.0), (1, 2, 3.0), (2, 3, 1.0)]);
        let train = ds.subset(&[0, 1]);
        let v = compute_meta(&train, 0, 2);
        assert_eq!(v.movie_support, 0);
        assert_eq!(v.movie_average, 4.0);
        let v = compute_meta(&train, 1, 0);
        assert_eq!((v.user_support, v.user_average), (0, 4.0));
    }
}
