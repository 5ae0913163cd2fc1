//! Reference predictors written directly from their defining formulas on a
//! dense user × item table.

use blendrec::data::RatingsDataset;
use blendrec::recommenders::{AutoRecModel, SvdParams};
use blendrec::seed::rng_from_seed;
use blendrec::tree::RandomForest;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

/// `r[u][i]`, `None` where unrated.
#[derive(Debug, Clone)]
pub struct Table {
    pub r: Vec<Vec<Option<f64>>>,
}

impl Table {
    /// Uses the dataset's full index space, so users and items without
    /// ratings keep empty rows and columns.
    pub fn from_dataset(ds: &RatingsDataset) -> Self {
        let mut r = vec![vec![None; ds.num_items()]; ds.num_users()];
        for t in ds.triplets() {
            r[t.user][t.item] = Some(t.value);
        }
        Self { r }
    }

    pub fn users(&self) -> usize {
        self.r.len()
    }

    pub fn items(&self) -> usize {
        self.r.first().map_or(0, Vec::len)
    }

    pub fn user_mean(&self, u: usize) -> Option<f64> {
        let vals: Vec<f64> = self.r[u].iter().flatten().copied().collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn item_mean(&self, i: usize) -> Option<f64> {
        let vals: Vec<f64> = self.r.iter().filter_map(|row| row[i]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Pearson correlation of two users over their co-rated items, computed in
/// integer arithmetic (ratings must be whole numbers). Zero with fewer than
/// two co-rated items or a constant side.
pub fn pearson(t: &Table, u: usize, v: usize) -> f64 {
    let mut n = 0i64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i64, 0i64, 0i64, 0i64, 0i64);
    for i in 0..t.items() {
        if let (Some(x), Some(y)) = (t.r[u][i], t.r[v][i]) {
            assert!(x.fract() == 0.0 && y.fract() == 0.0, "integral ratings expected");
            let (x, y) = (x as i64, y as i64);
            n += 1;
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
    }
    if n < 2 {
        return 0.0;
    }
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx <= 0 || vy <= 0 {
        return 0.0;
    }
    ((n * sxy - sx * sy) as f64 / ((vx as f64) * (vy as f64)).sqrt()).clamp(-1.0, 1.0)
}

/// Pearson correlation by the two-pass definition, for cross-checking
/// [`pearson`].
pub fn pearson_two_pass(t: &Table, u: usize, v: usize) -> f64 {
    let pairs: Vec<(f64, f64)> = (0..t.items()).filter_map(|i| Some((t.r[u][i]?, t.r[v][i]?))).collect();
    if pairs.len() < 2 {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let vx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let vy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if vx <= 1e-12 || vy <= 1e-12 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Adjusted cosine of two items over users who rated both, each rating
/// centred on its user's mean over all of that user's ratings.
pub fn adjusted_cosine(t: &Table, i: usize, j: usize) -> f64 {
    let (a, b) = (i.min(j), i.max(j));
    let (mut n, mut sab, mut saa, mut sbb) = (0, 0.0, 0.0, 0.0);
    for u in 0..t.users() {
        if let (Some(x), Some(y)) = (t.r[u][a], t.r[u][b]) {
            let mean = t.user_mean(u).expect("rater has ratings");
            let (dx, dy) = (x - mean, y - mean);
            n += 1;
            sab += dx * dy;
            saa += dx * dx;
            sbb += dy * dy;
        }
    }
    let d = saa * sbb;
    if n < 2 || d <= 0.0 {
        return 0.0;
    }
    (sab / d.sqrt()).clamp(-1.0, 1.0)
}

/// Indices sorted by descending similarity, ties by ascending index,
/// truncated to `k`.
fn most_similar(mut cands: Vec<(f64, usize, f64)>, k: usize) -> Vec<(f64, usize, f64)> {
    cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    cands.truncate(k);
    cands
}

/// `r̄_u + Σ sim(u,v)(r_vi − r̄_v) / Σ |sim(u,v)|` over the `k` most similar
/// users with non-zero similarity who rated `i`.
pub fn ubcf(t: &Table, k: usize, u: usize, i: usize) -> Option<f64> {
    let mean_u = t.user_mean(u)?;
    let cands: Vec<(f64, usize, f64)> = (0..t.users())
        .filter(|&v| v != u)
        .filter_map(|v| {
            let r = t.r[v][i]?;
            let s = pearson(t, u, v);
            (s != 0.0).then(|| (s, v, r - t.user_mean(v).unwrap()))
        })
        .collect();
    let chosen = most_similar(cands, k);
    if chosen.is_empty() {
        return None;
    }
    let num: f64 = chosen.iter().map(|c| c.0 * c.2).sum();
    let den: f64 = chosen.iter().map(|c| c.0.abs()).sum();
    Some(mean_u + num / den)
}

/// `Σ sim(i,j) r_uj / Σ |sim(i,j)|` over the `k` most similar items with
/// positive similarity that `u` rated.
pub fn ibcf(t: &Table, k: usize, u: usize, i: usize) -> Option<f64> {
    let cands: Vec<(f64, usize, f64)> = (0..t.items())
        .filter(|&j| j != i)
        .filter_map(|j| {
            let r = t.r[u][j]?;
            let s = adjusted_cosine(t, i, j);
            (s > 0.0).then_some((s, j, r))
        })
        .collect();
    let chosen = most_similar(cands, k);
    if chosen.is_empty() {
        return None;
    }
    let num: f64 = chosen.iter().map(|c| c.0 * c.2).sum();
    let den: f64 = chosen.iter().map(|c| c.0.abs()).sum();
    Some(num / den)
}

/// Latent factors trained by plain SGD on `(r_ui − p_u·q_i)²` with L2
/// shrinkage, replaying the library's documented random stream: factors
/// start at `√(μ/F)` plus Gaussian noise (users then items, row by row),
/// and the (user, item)-ordered rating list is reshuffled every epoch.
pub struct NaiveSvd {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    seen_users: Vec<bool>,
    seen_items: Vec<bool>,
}

impl NaiveSvd {
    pub fn train(ds: &RatingsDataset, params: &SvdParams, seed: u64) -> Self {
        let t = Table::from_dataset(ds);
        let f = params.factors;
        let mu = ds.triplets().map(|t| t.value).sum::<f64>() / ds.len() as f64;
        let center = (mu.max(0.0) / f as f64).sqrt();
        let noise = Normal::new(0.0, params.init_std).unwrap();
        let mut rng = rng_from_seed(seed);
        let mut p: Vec<Vec<f64>> = (0..t.users())
            .map(|_| (0..f).map(|_| center + noise.sample(&mut rng)).collect())
            .collect();
        let mut q: Vec<Vec<f64>> = (0..t.items())
            .map(|_| (0..f).map(|_| center + noise.sample(&mut rng)).collect())
            .collect();
        let mut order: Vec<(usize, usize, f64)> = Vec::new();
        for u in 0..t.users() {
            for i in 0..t.items() {
                if let Some(r) = t.r[u][i] {
                    order.push((u, i, r));
                }
            }
        }
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &(u, i, r) in &order {
                let pred: f64 = (0..f).map(|k| p[u][k] * q[i][k]).sum();
                let e = r - pred;
                for k in 0..f {
                    let (pu, qi) = (p[u][k], q[i][k]);
                    p[u][k] = pu + params.learning_rate * (e * qi - params.regularization * pu);
                    q[i][k] = qi + params.learning_rate * (e * pu - params.regularization * qi);
                }
            }
        }
        Self {
            p,
            q,
            seen_users: (0..t.users()).map(|u| t.user_mean(u).is_some()).collect(),
            seen_items: (0..t.items()).map(|i| t.item_mean(i).is_some()).collect(),
        }
    }

    /// `p_u · q_i`; `None` for users or items without training ratings.
    pub fn predict(&self, u: usize, i: usize) -> Option<f64> {
        if !self.seen_users[u] || !self.seen_items[i] {
            return None;
        }
        Some(self.p[u].iter().zip(&self.q[i]).map(|(a, b)| a * b).sum())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Forward pass of an item autoencoder, `h(r; θ)_u = f(W·g(V r + μ) + b)_u`
/// with `g` the logistic function and `f` the identity, on item `i`'s full
/// rating vector (unobserved entries contribute zero after centring).
pub fn autorec_forward(model: &AutoRecModel, t: &Table, u: usize, i: usize) -> Option<f64> {
    let observed = (0..t.users()).any(|v| t.r[v][i].is_some());
    if !observed || t.user_mean(u).is_none() {
        return None;
    }
    let (m, k) = (model.users, model.hidden);
    let x: Vec<f64> = (0..m).map(|v| t.r[v][i].map_or(0.0, |r| r - model.offset)).collect();
    let mut h = vec![0.0; k];
    for (kk, hk) in h.iter_mut().enumerate() {
        let mut z = model.hidden_bias[kk];
        for (v, xv) in x.iter().enumerate() {
            z += model.encoder[v * k + kk] * xv;
        }
        *hk = sigmoid(z);
    }
    let mut out = model.output_bias[u];
    for (kk, hk) in h.iter().enumerate() {
        out += model.decoder[u * k + kk] * hk;
    }
    Some(model.offset + out)
}

/// Mean of the individual tree outputs.
pub fn forest_average(forest: &RandomForest, x: &[f64]) -> f64 {
    let trees = forest.trees();
    trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64
}

/// Out-of-sample RMSE by its definition.
pub fn rmse(pred: &[f64], actual: &[f64]) -> f64 {
    assert_eq!(pred.len(), actual.len());
    let mut sse = 0.0;
    for k in 0..pred.len() {
        sse += (pred[k] - actual[k]).powi(2);
    }
    (sse / pred.len() as f64).sqrt()
}

/// Ridge regression with unpenalised intercept, by Gauss-Jordan
/// elimination on the augmented normal equations `[1 X]`.
pub fn ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let d = x[0].len() + 1;
    let mut a = vec![vec![0.0; d + 1]; d];
    for (row, &t) in x.iter().zip(y) {
        let z: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
        for r in 0..d {
            for c in 0..d {
                a[r][c] += z[r] * z[c];
            }
            a[r][d] += z[r] * t;
        }
    }
    for (r, row) in a.iter_mut().enumerate().skip(1) {
        row[r] += lambda;
    }
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        let div = a[col][col];
        for v in &mut a[col][col..] {
            *v /= div;
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let f = row[col];
                for (v, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *v -= f * p;
                }
            }
        }
    }
    let sol: Vec<f64> = a.iter().map(|row| row[d]).collect();
    (sol[1..].to_vec(), sol[0])
}
