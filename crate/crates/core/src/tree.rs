//! Regression trees and bagged forests.
//!
//! Splits maximise the reduction in squared error (variance reduction). At
//! each node a random subset of features is examined; if none of them admits
//! a split, the remaining features are tried in random order before the node
//! is made a leaf.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed::{derived_rng, Rng};
use crate::{Error, Result};

/// Row-major view over a feature matrix.
#[derive(Debug, Clone, Copy)]
pub struct Features<'a> {
    data: &'a [f64],
    cols: usize,
}

impl<'a> Features<'a> {
    pub fn new(data: &'a [f64], cols: usize) -> Result<Self> {
        if cols == 0 || !data.len().is_multiple_of(cols) {
            return Err(Error::InvalidInput(format!(
                "{} values do not form rows of width {cols}",
                data.len()
            )));
        }
        Ok(Self { data, cols })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &'a [f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split.
    pub max_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

/// A node's samples as one list of row ids per feature, each sorted by
/// `(value, row)`. Bootstrap repeats appear once per draw.
type Sorted = Vec<Vec<u32>>;

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
    /// Entries of the feature's sorted list that go left.
    left: usize,
}

impl RegressionTree {
    /// Fits a tree on the rows listed in `samples` (repeats allowed).
    pub fn fit(x: Features<'_>, y: &[f64], samples: Vec<usize>, params: &TreeParams, rng: &mut Rng) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("tree needs at least one sample".into()));
        }
        if y.len() != x.rows() {
            return Err(Error::InvalidInput(format!(
                "{} targets for {} rows",
                y.len(),
                x.rows()
            )));
        }
        if u32::try_from(x.rows()).is_err() {
            return Err(Error::InvalidInput(format!("{} rows exceed the tree limit", x.rows())));
        }
        let min_leaf = params.min_leaf.max(1);
        let columns: Vec<Vec<f64>> = (0..x.cols())
            .map(|f| (0..x.rows()).map(|r| x.at(r, f)).collect())
            .collect();
        let root: Sorted = columns
            .iter()
            .map(|col| {
                let mut ids: Vec<u32> = samples.iter().map(|&s| s as u32).collect();
                ids.sort_unstable_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                ids
            })
            .collect();
        drop(samples);
        let mut goes_left = vec![false; x.rows()];
        let mut nodes = vec![Node::Leaf(0.0)];
        let mut stack = vec![(0usize, root, 0usize)];
        let mut feature_order: Vec<usize> = (0..x.cols()).collect();
        while let Some((slot, sorted, depth)) = stack.pop() {
            let any = &sorted[0];
            let n = any.len();
            let mean = any.iter().map(|&s| y[s as usize]).sum::<f64>() / n as f64;
            let first = y[any[0] as usize];
            let pure = any.iter().all(|&s| y[s as usize] == first);
            let depth_ok = params.max_depth.is_none_or(|d| depth < d);
            if pure || !depth_ok || n < 2 * min_leaf {
                nodes[slot] = Node::Leaf(mean);
                continue;
            }
            feature_order.shuffle(rng);
            let quota = params.max_features.clamp(1, x.cols());
            let mut best: Option<Candidate> = None;
            for (tried, &f) in feature_order.iter().enumerate() {
                if tried >= quota && best.is_some() {
                    break;
                }
                if let Some(c) = best_split(&sorted[f], &columns[f], y, f, min_leaf) {
                    if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                        best = Some(c);
                    }
                }
            }
            match best {
                None => nodes[slot] = Node::Leaf(mean),
                Some(c) => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf(0.0));
                    nodes.push(Node::Leaf(0.0));
                    nodes[slot] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: left as u32,
                        right: (left + 1) as u32,
                    };
                    for &s in &sorted[c.feature][..c.left] {
                        goes_left[s as usize] = true;
                    }
                    // Stable partitions keep every list sorted.
                    let (l, r): (Sorted, Sorted) = sorted
                        .iter()
                        .map(|list| {
                            let mut a = Vec::with_capacity(c.left);
                            let mut b = Vec::with_capacity(n - c.left);
                            for &s in list {
                                if goes_left[s as usize] {
                                    a.push(s);
                                } else {
                                    b.push(s);
                                }
                            }
                            (a, b)
                        })
                        .unzip();
                    drop(sorted);
                    for &s in &l[0] {
                        goes_left[s as usize] = false;
                    }
                    stack.push((left + 1, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    /// A single-leaf tree.
    pub fn constant(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf(value)],
        }
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(v) => Some(*v),
            Node::Split { .. } => None,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Best variance-reduction cut along one feature's sorted list.
fn best_split(ids: &[u32], col: &[f64], y: &[f64], feature: usize, min_leaf: usize) -> Option<Candidate> {
    let n = ids.len();
    let value = |k: usize| col[ids[k] as usize];
    if value(0) == value(n - 1) {
        return None;
    }
    let total: f64 = ids.iter().map(|&s| y[s as usize]).sum();
    let base = total * total / n as f64;
    let mut left_sum = 0.0;
    let mut best: Option<(f64, usize)> = None;
    for p in 1..n {
        left_sum += y[ids[p - 1] as usize];
        if p < min_leaf || n - p < min_leaf {
            continue;
        }
        let lo = value(p - 1);
        let hi = value(p);
        if lo == hi {
            continue;
        }
        let right_sum = total - left_sum;
        let gain = left_sum * left_sum / p as f64 + right_sum * right_sum / (n - p) as f64 - base;
        if best.is_none_or(|(g, _)| gain > g) {
            best = Some((gain, p));
        }
    }
    let (gain, p) = best?;
    if gain.is_nan() || gain <= 0.0 {
        return None;
    }
    let lo = value(p - 1);
    let hi = value(p);
    let mut threshold = lo + (hi - lo) / 2.0;
    if threshold >= hi {
        threshold = lo;
    }
    Some(Candidate {
        feature,
        threshold,
        gain,
        left: p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub tree: TreeParams,
    /// Train each tree on a bootstrap sample of the rows.
    pub bootstrap: bool,
}

/// Bagged regression trees; prediction is the mean of the trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
}

impl RandomForest {
    /// Fits `params.trees` trees. Tree `t` draws from its own stream derived
    /// from `seed`, so the forest is identical under any thread count.
    pub fn fit(x: Features<'_>, y: &[f64], params: &ForestParams, seed: u64) -> Result<Self> {
        if params.trees == 0 {
            return Err(Error::InvalidArgument("forest needs at least one tree".into()));
        }
        let n = x.rows();
        if n == 0 {
            return Err(Error::InvalidInput("forest needs at least one row".into()));
        }
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = derived_rng(seed, "tree", t as u64);
                let samples = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit(x, y, samples, &params.tree, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { trees })
    }

    pub fn from_trees(trees: Vec<RegressionTree>) -> Self {
        Self { trees }
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}
