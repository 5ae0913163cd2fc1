use serde::{Deserialize, Serialize};

use crate::data::RatingsDataset;

/// Sparse ratings held twice: as per-user rows and per-item columns, each
/// sorted by the other index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingMatrix {
    by_user: Vec<Vec<(u32, f64)>>,
    by_item: Vec<Vec<(u32, f64)>>,
    global_mean: f64,
    len: usize,
}

impl RatingMatrix {
    pub fn from_dataset(data: &RatingsDataset) -> Self {
        let mut by_user = vec![Vec::new(); data.num_users()];
        let mut by_item = vec![Vec::new(); data.num_items()];
        let mut sum = 0.0;
        for t in data.triplets() {
            by_user[t.user].push((t.item as u32, t.value));
            by_item[t.item].push((t.user as u32, t.value));
            sum += t.value;
        }
        for row in by_user.iter_mut().chain(by_item.iter_mut()) {
            row.sort_by_key(|&(k, _)| k);
        }
        let len = data.len();
        let global_mean = if len == 0 { f64::NAN } else { sum / len as f64 };
        Self {
            by_user,
            by_item,
            global_mean,
            len,
        }
    }

    pub fn num_users(&self) -> usize {
        self.by_user.len()
    }

    pub fn num_items(&self) -> usize {
        self.by_item.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    /// Items rated by `u` with their ratings, ascending by item.
    pub fn user_row(&self, u: usize) -> &[(u32, f64)] {
        self.by_user.get(u).map_or(&[], Vec::as_slice)
    }

    /// Users who rated `i` with their ratings, ascending by user.
    pub fn item_column(&self, i: usize) -> &[(u32, f64)] {
        self.by_item.get(i).map_or(&[], Vec::as_slice)
    }

    pub fn rating(&self, u: usize, i: usize) -> Option<f64> {
        let row = self.user_row(u);
        row.binary_search_by_key(&(i as u32), |&(k, _)| k)
            .ok()
            .map(|p| row[p].1)
    }

    pub fn user_mean(&self, u: usize) -> Option<f64> {
        mean(self.user_row(u))
    }

    pub fn item_mean(&self, i: usize) -> Option<f64> {
        mean(self.item_column(i))
    }
}

fn mean(row: &[(u32, f64)]) -> Option<f64> {
    if row.is_empty() {
        None
    } else {
        Some(row.iter().map(|&(_, v)| v).sum::<f64>() / row.len() as f64)
    }
}
