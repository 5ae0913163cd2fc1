use serde::{Deserialize, Serialize};

use super::matrix::RatingMatrix;

/// Per-user and per-item average ratings with a global mean for unseen keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub user_means: Vec<Option<f64>>,
    pub item_means: Vec<Option<f64>>,
    pub global_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    UserAverage,
    MovieAverage,
}

impl BaselineModel {
    pub fn fit(ratings: &RatingMatrix) -> Self {
        Self {
            user_means: (0..ratings.num_users()).map(|u| ratings.user_mean(u)).collect(),
            item_means: (0..ratings.num_items()).map(|i| ratings.item_mean(i)).collect(),
            global_mean: ratings.global_mean(),
        }
    }

    pub fn user_mean(&self, u: usize) -> Option<f64> {
        self.user_means.get(u).copied().flatten()
    }

    pub fn item_mean(&self, i: usize) -> Option<f64> {
        self.item_means.get(i).copied().flatten()
    }

    /// User or item average, or the global mean when the key is unseen.
    pub fn predict(&self, kind: BaselineKind, u: usize, i: usize) -> f64 {
        match kind {
            BaselineKind::UserAverage => self.user_mean(u),
            BaselineKind::MovieAverage => self.item_mean(i),
        }
        .unwrap_or(self.global_mean)
    }

    /// Cold-start substitute: user mean, then item mean, then global mean.
    pub fn fallback(&self, u: usize, i: usize) -> f64 {
        self.user_mean(u)
            .or_else(|| self.item_mean(i))
            .unwrap_or(self.global_mean)
    }
}
