//! Rating and movie files, dense re-indexing and cross-validation folds.
//!
//! External user and movie ids are mapped to dense indices in order of first
//! appearance, so every model addresses users as `0..M` and items as `0..N`.
//! Subsets produced by [`split`] keep the parent's index space.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed::rng_from_seed;
use crate::{Error, Result, MAX_RATING, MIN_RATING};

/// One line of a ratings file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user_id: u32,
    pub item_id: u32,
    pub value: f64,
    pub timestamp: i64,
}

/// A rating addressed by dense indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

/// Bidirectional map between external ids and dense indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdIndex {
    ids: Vec<u32>,
    lookup: HashMap<u32, usize>,
}

impl IdIndex {
    fn intern(&mut self, id: u32) -> usize {
        let next = self.ids.len();
        *self.lookup.entry(id).or_insert_with(|| {
            self.ids.push(id);
            next
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dense(&self, id: u32) -> Option<usize> {
        self.lookup.get(&id).copied()
    }

    pub fn external(&self, index: usize) -> u32 {
        self.ids[index]
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }
}

/// An ordered collection of ratings with dense user and item indices.
///
/// Datasets produced by [`split`] share the parent's index maps: `num_users`
/// and `num_items` report the parent's counts, and some users or items may
/// have no ratings in the subset.
#[derive(Debug, Clone)]
pub struct RatingsDataset {
    ratings: Vec<Rating>,
    dense: Vec<(u32, u32)>,
    users: Arc<IdIndex>,
    items: Arc<IdIndex>,
}

impl PartialEq for RatingsDataset {
    fn eq(&self, other: &Self) -> bool {
        self.ratings == other.ratings
            && self.dense == other.dense
            && *self.users == *other.users
            && *self.items == *other.items
    }
}

impl RatingsDataset {
    /// Builds a dataset from ratings in order, validating values and rejecting
    /// duplicate (user, item) pairs.
    pub fn from_ratings(ratings: Vec<Rating>) -> Result<Self> {
        let mut users = IdIndex::default();
        let mut items = IdIndex::default();
        let mut seen = HashSet::with_capacity(ratings.len());
        let mut dense = Vec::with_capacity(ratings.len());
        for (n, r) in ratings.iter().enumerate() {
            validate_rating(r).map_err(|message| Error::Parse {
                path: "<memory>".into(),
                line: n + 1,
                message,
            })?;
            if !seen.insert((r.user_id, r.item_id)) {
                return Err(Error::DuplicateRating {
                    path: "<memory>".into(),
                    line: n + 1,
                    user_id: r.user_id,
                    item_id: r.item_id,
                });
            }
            dense.push((users.intern(r.user_id) as u32, items.intern(r.item_id) as u32));
        }
        Ok(Self {
            ratings,
            dense,
            users: Arc::new(users),
            items: Arc::new(items),
        })
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// Number of users in the index space (M).
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Number of items in the index space (N).
    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn user_index(&self) -> &IdIndex {
        &self.users
    }

    pub fn item_index(&self) -> &IdIndex {
        &self.items
    }

    pub fn triplet(&self, n: usize) -> Triplet {
        let (u, i) = self.dense[n];
        Triplet {
            user: u as usize,
            item: i as usize,
            value: self.ratings[n].value,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = Triplet> + '_ {
        (0..self.len()).map(move |n| self.triplet(n))
    }

    /// Mean of all rating values, `None` when empty.
    pub fn global_mean(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        Some(self.ratings.iter().map(|r| r.value).sum::<f64>() / self.len() as f64)
    }

    /// The ratings at `indices`, in that order, sharing this dataset's index
    /// space.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            ratings: indices.iter().map(|&n| self.ratings[n]).collect(),
            dense: indices.iter().map(|&n| self.dense[n]).collect(),
            users: Arc::clone(&self.users),
            items: Arc::clone(&self.items),
        }
    }

    /// A copy with rating `n` replaced by `value`.
    pub fn with_value(&self, n: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.ratings[n].value = value;
        out
    }

    /// Serializes in the `UserID::MovieID::Rating::Timestamp` layout.
    pub fn to_movielens(&self) -> String {
        let mut out = String::with_capacity(self.len() * 24);
        for r in &self.ratings {
            let _ = writeln!(out, "{}::{}::{}::{}", r.user_id, r.item_id, r.value, r.timestamp);
        }
        out
    }
}

fn validate_rating(r: &Rating) -> std::result::Result<(), String> {
    if r.user_id == 0 || r.item_id == 0 {
        return Err("ids must be positive integers".into());
    }
    if !(MIN_RATING..=MAX_RATING).contains(&r.value) {
        return Err(format!("rating {} outside [1, 5]", r.value));
    }
    Ok(())
}

fn parse_id(field: &str, what: &str) -> std::result::Result<u32, String> {
    match field.trim().parse::<u32>() {
        Ok(0) | Err(_) => Err(format!("{what} {field:?} is not a positive integer")),
        Ok(v) => Ok(v),
    }
}

/// Parses ratings from `UserID::MovieID::Rating::Timestamp` text.
pub fn parse_ratings_str(text: &str, path: &Path) -> Result<RatingsDataset> {
    let mut ratings = Vec::new();
    let mut lines = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, found {}", fields.len())));
        }
        let user_id = parse_id(fields[0], "user id").map_err(parse_err)?;
        let item_id = parse_id(fields[1], "movie id").map_err(parse_err)?;
        let value: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("rating {:?} is not a number", fields[2])))?;
        let timestamp: i64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("timestamp {:?} is not an integer", fields[3])))?;
        let rating = Rating {
            user_id,
            item_id,
            value,
            timestamp,
        };
        validate_rating(&rating).map_err(parse_err)?;
        ratings.push(rating);
        lines.push(n + 1);
    }
    RatingsDataset::from_ratings(ratings).map_err(|e| match e {
        Error::DuplicateRating {
            line, user_id, item_id, ..
        } => Error::DuplicateRating {
            path: path.to_path_buf(),
            line: lines[line - 1],
            user_id,
            item_id,
        },
        other => other,
    })
}

/// Reads a MovieLens `ratings.dat` file.
pub fn parse_ratings(path: impl AsRef<Path>) -> Result<RatingsDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    parse_ratings_str(&String::from_utf8_lossy(&bytes), path)
}

/// Movie genres as binary vectors over the sorted union of genre tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreCatalog {
    genres: Vec<String>,
    /// External movie id to genre bits, ordered by id.
    items: Vec<(u32, Vec<u8>)>,
}

impl GenreCatalog {
    pub fn genres(&self) -> &[String] {
        &self.genres
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Genre bits of an external movie id.
    pub fn vector(&self, item_id: u32) -> Option<&[u8]> {
        self.items
            .binary_search_by_key(&item_id, |(id, _)| *id)
            .ok()
            .map(|p| self.items[p].1.as_slice())
    }

    /// Genre vectors for every dense item of `dataset`'s index space, as
    /// floats. Items missing from the catalog get an all-zero vector.
    pub fn aligned(&self, dataset: &RatingsDataset) -> ItemFeatures {
        let width = self.genres.len();
        let index = dataset.item_index();
        let mut values = vec![0.0; index.len() * width];
        let mut missing = 0;
        for (n, &id) in index.ids().iter().enumerate() {
            match self.vector(id) {
                Some(bits) => {
                    for (dst, &b) in values[n * width..(n + 1) * width].iter_mut().zip(bits) {
                        *dst = f64::from(b);
                    }
                }
                None => missing += 1,
            }
        }
        if missing > 0 {
            log::warn!("{missing} rated items have no genre metadata; using zero vectors");
        }
        ItemFeatures { width, values }
    }
}

/// Dense per-item feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFeatures {
    width: usize,
    values: Vec<f64>,
}

impl ItemFeatures {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, item: usize) -> &[f64] {
        &self.values[item * self.width..(item + 1) * self.width]
    }

    pub fn num_items(&self) -> usize {
        self.values.len().checked_div(self.width).unwrap_or(0)
    }
}

/// Parses `MovieID::Title::Genre1|Genre2` text.
pub fn parse_movies_str(text: &str, path: &Path) -> Result<GenreCatalog> {
    let mut raw: Vec<(u32, Vec<String>)> = Vec::new();
    let mut seen = HashSet::new();
    let mut union = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() < 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
        }
        let id = parse_id(fields[0], "movie id").map_err(parse_err)?;
        let tokens: Vec<String> = fields[fields.len() - 1]
            .split('|')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(String::from)
            .collect();
        if tokens.is_empty() {
            return Err(parse_err("movie has no genres".into()));
        }
        if !seen.insert(id) {
            return Err(parse_err(format!("movie id {id} listed twice")));
        }
        union.extend(tokens.iter().cloned());
        raw.push((id, tokens));
    }
    let genres: Vec<String> = union.into_iter().collect();
    let position: HashMap<&str, usize> = genres.iter().enumerate().map(|(p, g)| (g.as_str(), p)).collect();
    let mut items: Vec<(u32, Vec<u8>)> = raw
        .into_iter()
        .map(|(id, tokens)| {
            let mut bits = vec![0u8; genres.len()];
            for t in &tokens {
                bits[position[t.as_str()]] = 1;
            }
            (id, bits)
        })
        .collect();
    items.sort_by_key(|(id, _)| *id);
    Ok(GenreCatalog { genres, items })
}

/// Reads a MovieLens `movies.dat` file.
pub fn parse_movies(path: impl AsRef<Path>) -> Result<GenreCatalog> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    parse_movies_str(&String::from_utf8_lossy(&bytes), path)
}

/// Assignment of row indices to `k` disjoint folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
    seed: u64,
}

impl FoldPlan {
    /// Shuffles `0..n` with `seed` and deals the shuffled indices round-robin
    /// into `k` folds, so fold sizes differ by at most one.
    pub fn random(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("fold count {k} < 2")));
        }
        if k > n {
            return Err(Error::InvalidArgument(format!("fold count {k} exceeds row count {n}")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from_seed(seed));
        let mut assignment = vec![0; n];
        for (pos, &row) in order.iter().enumerate() {
            assignment[row] = pos % k;
        }
        Ok(Self { k, assignment, seed })
    }

    /// Builds a plan from explicit labels.
    pub fn from_assignment(k: usize, assignment: Vec<usize>, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("fold count {k} < 2")));
        }
        if let Some(bad) = assignment.iter().find(|&&f| f >= k) {
            return Err(Error::InvalidArgument(format!("fold label {bad} >= {k}")));
        }
        Ok(Self { k, assignment, seed })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn fold_of(&self, row: usize) -> usize {
        self.assignment[row]
    }

    fn check_fold(&self, j: usize) -> Result<()> {
        if j >= self.k {
            return Err(Error::InvalidArgument(format!(
                "fold {j} out of range for k = {}",
                self.k
            )));
        }
        Ok(())
    }

    /// Rows in fold `j`, ascending.
    pub fn test_indices(&self, j: usize) -> Result<Vec<usize>> {
        self.check_fold(j)?;
        Ok((0..self.len()).filter(|&r| self.assignment[r] == j).collect())
    }

    /// Rows outside fold `j`, ascending.
    pub fn train_indices(&self, j: usize) -> Result<Vec<usize>> {
        self.check_fold(j)?;
        Ok((0..self.len()).filter(|&r| self.assignment[r] != j).collect())
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// CSV with header `rating_index,fold`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 8 + 17);
        out.push_str("rating_index,fold\n");
        for (r, f) in self.assignment.iter().enumerate() {
            let _ = writeln!(out, "{r},{f}");
        }
        out
    }
}

/// Random fold plan over the ratings of `dataset`.
pub fn make_folds(dataset: &RatingsDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot fold an empty dataset".into()));
    }
    FoldPlan::random(dataset.len(), k, seed)
}

/// Splits `dataset` into (train, test) where test is fold `j` of `plan`.
pub fn split(dataset: &RatingsDataset, plan: &FoldPlan, j: usize) -> Result<(RatingsDataset, RatingsDataset)> {
    if plan.len() != dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "fold plan covers {} rows but dataset has {}",
            plan.len(),
            dataset.len()
        )));
    }
    let train = plan.train_indices(j)?;
    let test = plan.test_indices(j)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}
