//! Experiment configuration: dataset paths, fold counts, recommender roster
//! and blender grid, loaded from one JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blenders::{BinCriterion, BlenderFamily, BlenderSpec, ForestBlenderParams, LinearParams, MlpParams};
use crate::recommenders::{AutoRecParams, RecommenderKind, RecommenderSpec, RfcbParams, SvdParams};
use crate::seed::derive_seed;
use crate::{Error, Result};

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// MovieLens `ratings.dat`. Relative paths resolve against the config file.
    pub ratings: PathBuf,
    /// MovieLens `movies.dat`; needed only when the roster contains RFCB.
    #[serde(default)]
    pub movies: Option<PathBuf>,
    #[serde(default = "default_folds")]
    pub trainer_folds: usize,
    #[serde(default = "default_folds")]
    pub tester_folds: usize,
    /// Inner model-selection folds; `tester_folds - 1` when absent.
    #[serde(default)]
    pub tester_inner_folds: Option<usize>,
    #[serde(default = "default_roster")]
    pub roster: Vec<RecommenderSpec>,
    #[serde(default)]
    pub grid: BlenderGrid,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Hyper-parameter grid; every combination becomes one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlenderGrid {
    pub lambdas: Vec<f64>,
    pub criteria: Vec<BinCriterion>,
    pub bins: Vec<usize>,
    pub trees: Vec<usize>,
    pub mlp_layers: Vec<Vec<usize>>,
    #[serde(default = "default_mlp_epochs")]
    pub mlp_epochs: usize,
}

fn default_mlp_epochs() -> usize {
    MlpParams::with_layers(vec![1]).epochs
}

impl Default for BlenderGrid {
    fn default() -> Self {
        let sizes = [8, 12, 24];
        let mut layers: Vec<Vec<usize>> = sizes.iter().map(|&a| vec![a]).collect();
        for &a in &sizes {
            for &b in &sizes {
                layers.push(vec![a, b]);
            }
        }
        for &a in &sizes {
            for b in [8, 12] {
                for c in [8, 12] {
                    layers.push(vec![a, b, c]);
                }
            }
        }
        Self {
            lambdas: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
            criteria: vec![BinCriterion::UserSupport, BinCriterion::MovieSupport],
            bins: vec![1, 2, 4, 8, 12],
            trees: vec![10, 50, 100, 250, 500],
            mlp_layers: layers,
            mlp_epochs: default_mlp_epochs(),
        }
    }
}

impl BlenderGrid {
    /// A smaller grid for laptop-scale runs: the full linear grid, two
    /// forest sizes and two network shapes with a shorter schedule.
    pub fn desk() -> Self {
        Self {
            trees: vec![10, 50],
            mlp_layers: vec![vec![8], vec![24, 12, 12]],
            mlp_epochs: 20,
            ..Self::default()
        }
    }

    /// Expands the grid in a fixed order: linear, forest, then MLP.
    /// With one bin the criterion is irrelevant, so only the first is kept.
    pub fn candidates(&self) -> Vec<BlenderSpec> {
        let mut out = Vec::new();
        for &lambda in &self.lambdas {
            for (c, &criterion) in self.criteria.iter().enumerate() {
                for &bins in &self.bins {
                    if bins == 1 && c > 0 {
                        continue;
                    }
                    out.push(BlenderSpec::Linear(LinearParams {
                        lambda,
                        criterion,
                        bins,
                    }));
                }
            }
        }
        for &trees in &self.trees {
            out.push(BlenderSpec::Forest(ForestBlenderParams::with_trees(trees)));
        }
        for layers in &self.mlp_layers {
            let mut p = MlpParams::with_layers(layers.clone());
            p.epochs = self.mlp_epochs;
            out.push(BlenderSpec::Mlp(p));
        }
        out
    }

    pub fn candidates_for(&self, family: Option<BlenderFamily>) -> Vec<BlenderSpec> {
        let mut all = self.candidates();
        if let Some(f) = family {
            all.retain(|s| s.family() == f);
        }
        all
    }
}

fn svd(factors: usize) -> RecommenderSpec {
    RecommenderSpec::new(RecommenderKind::Svd(SvdParams {
        factors,
        ..SvdParams::default()
    }))
}

fn autorec(hidden: usize) -> RecommenderSpec {
    RecommenderSpec::new(RecommenderKind::Autorec(AutoRecParams {
        hidden,
        ..AutoRecParams::default()
    }))
}

fn rfcb(trees: usize) -> RecommenderSpec {
    RecommenderSpec::new(RecommenderKind::Rfcb(RfcbParams {
        trees,
        ..RfcbParams::default()
    }))
}

/// Two instances of each family.
pub fn default_roster() -> Vec<RecommenderSpec> {
    roster_with_svd(500)
}

/// The default roster with the larger SVD reduced to 200 factors.
pub fn desk_roster() -> Vec<RecommenderSpec> {
    roster_with_svd(200)
}

fn roster_with_svd(large: usize) -> Vec<RecommenderSpec> {
    vec![
        RecommenderSpec::new(RecommenderKind::Ubcf { neighbors: 20 }),
        RecommenderSpec::new(RecommenderKind::Ubcf { neighbors: 80 }),
        RecommenderSpec::new(RecommenderKind::Ibcf { neighbors: 20 }),
        RecommenderSpec::new(RecommenderKind::Ibcf { neighbors: 80 }),
        svd(50),
        svd(large),
        autorec(100),
        autorec(300),
        rfcb(20),
        rfcb(30),
    ]
}

impl ExperimentConfig {
    pub fn new(ratings: impl Into<PathBuf>) -> Self {
        Self {
            ratings: ratings.into(),
            movies: None,
            trainer_folds: default_folds(),
            tester_folds: default_folds(),
            tester_inner_folds: None,
            roster: default_roster(),
            grid: BlenderGrid::default(),
            seed: 0,
            out: None,
        }
    }

    /// Reads and validates a config; relative paths are resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.ratings = base.join(&config.ratings);
        config.movies = config.movies.map(|m| base.join(m));
        config.out = config.out.map(|o| base.join(o));
        config.validate()?;
        Ok(config)
    }

    pub fn inner_folds(&self) -> usize {
        self.tester_inner_folds.unwrap_or(self.tester_folds.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.trainer_folds < 2 || self.tester_folds < 2 || self.inner_folds() < 2 {
            return bad(format!(
                "fold counts must be >= 2 (trainer {}, tester {}, inner {})",
                self.trainer_folds,
                self.tester_folds,
                self.inner_folds()
            ));
        }
        if self.roster.is_empty() {
            return bad("recommender roster is empty".into());
        }
        for spec in &self.roster {
            spec.validate()?;
        }
        let g = &self.grid;
        if g.candidates().is_empty() {
            return bad("blender grid is empty".into());
        }
        if g.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("grid lambdas must be finite and >= 0".into());
        }
        if g.bins.contains(&0) || g.trees.contains(&0) {
            return bad("grid bin and tree counts must be positive".into());
        }
        if g.mlp_layers
            .iter()
            .any(|l| l.is_empty() || l.len() > 3 || l.contains(&0))
        {
            return bad("each MLP architecture needs 1-3 non-empty hidden layers".into());
        }
        Ok(())
    }

    /// Roster with per-instance seeds derived from the global seed. A seed
    /// set on an entry is mixed in, so instances can be decorrelated by hand.
    pub fn seeded_roster(&self) -> Vec<RecommenderSpec> {
        self.roster
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.clone()
                    .with_seed(derive_seed(self.seed ^ s.seed, "recommender", i as u64))
            })
            .collect()
    }

    pub fn trainer_seed(&self) -> u64 {
        derive_seed(self.seed, "trainer", 0)
    }

    pub fn tester_seed(&self) -> u64 {
        derive_seed(self.seed, "tester", 0)
    }

    pub fn needs_genres(&self) -> bool {
        self.roster.iter().any(|s| matches!(s.kind, RecommenderKind::Rfcb(_)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_size() {
        let g = BlenderGrid::default();
        // 6 lambdas x (1 + 2 x 4) bin settings, 5 forests, 3 + 9 + 12 networks.
        let c = g.candidates();
        assert_eq!(g.mlp_layers.len(), 24);
        assert_eq!(c.len(), 6 * 9 + 5 + 24);
        assert!(g
            .mlp_layers
            .iter()
            .filter(|l| l.len() == 3)
            .all(|l| l[1] <= 12 && l[2] <= 12));
    }

    #[test]
    fn default_roster_has_two_per_family() {
        let r = default_roster();
        assert_eq!(r.len(), 10);
        for f in [
            crate::recommenders::Family::Ubcf,
            crate::recommenders::Family::Ibcf,
            crate::recommenders::Family::Svd,
            crate::recommenders::Family::Autorec,
            crate::recommenders::Family::Rfcb,
        ] {
            assert_eq!(r.iter().filter(|s| s.family() == f).count(), 2);
        }
    }

    #[test]
    fn load_resolves_relative_paths_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(
            &p,
            r#"{"ratings": "r.dat", "seed": 3, "roster": [{"family": "user_avg"}]}"#,
        )
        .unwrap();
        let c = ExperimentConfig::load(&p).unwrap();
        assert_eq!(c.ratings, dir.path().join("r.dat"));
        assert_eq!(c.inner_folds(), 4);
        assert_eq!(c.grid, BlenderGrid::default());
        assert!(!c.needs_genres());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = ExperimentConfig::new("x");
        c.trainer_folds = 1;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new("x");
        c.grid.mlp_layers = vec![vec![8, 8, 8, 8]];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new("x");
        c.roster.clear();
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"ratings": "x", "bogus": 1}"#).is_err());
    }

    #[test]
    fn seeded_roster_is_distinct() {
        let c = ExperimentConfig::new("x");
        let seeds: std::collections::HashSet<u64> = c.seeded_roster().iter().map(|s| s.seed).collect();
        assert_eq!(seeds.len(), 10);
    }
}
