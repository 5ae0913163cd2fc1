use blendrec::blenders::{BinCriterion, BlenderSpec, ForestBlenderParams, LinearParams, MlpParams};
use blendrec::pipeline::{build_blendset, evaluate_recommender, nested_cv, rmse, Blendset};
use blendrec::recommenders::{Family, RecommenderSpec};
use blendrec_testkit::checks::toy_roster;
use blendrec_testkit::toy::{dense_dataset, random_dataset, random_genres, synthetic_rows};
use proptest::prelude::*;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn blendset_covers_every_rating_with_bounded_cells(seed in 0u64..10_000, k in 2usize..5) {
        let ds = random_dataset(seed, 40);
        prop_assume!(ds.len() >= k);
        let genres = random_genres(&ds, seed);
        let b = build_blendset(&ds, &toy_roster(seed), Some(&genres), k, seed).unwrap();
        prop_assert_eq!(b.len(), ds.len());
        let plan = b.fold_plan.as_ref().unwrap();
        for (n, row) in b.rows.iter().enumerate() {
            let t = ds.triplet(n);
            prop_assert_eq!(row.actual, t.value);
            prop_assert!(row.predictions.iter().all(|p| (1.0..=5.0).contains(p)));
            // Supports recounted over the other folds.
            let train = (0..ds.len()).filter(|&o| plan.fold_of(o) != plan.fold_of(n));
            let (us, ms) = train.fold((0, 0), |(us, ms), o| {
                let x = ds.triplet(o);
                (us + u32::from(x.user == t.user), ms + u32::from(x.item == t.item))
            });
            prop_assert_eq!((row.meta.user_support, row.meta.movie_support), (us, ms));
        }
    }

    #[test]
    fn blendset_csv_round_trips(seed in 0u64..10_000) {
        let ds = random_dataset(seed, 30);
        prop_assume!(ds.len() >= 3);
        let b = build_blendset(&ds, &[RecommenderSpec::default_for(Family::MovieAvg)], None, 3, seed).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        prop_assert_eq!(Blendset::read_csv(buf.as_slice()).unwrap().rows, b.rows);
    }

    #[test]
    fn rmse_matches_two_pass_definition(values in prop::collection::vec((1.0f64..5.0, 1.0f64..5.0), 1..1000)) {
        let (p, a): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
        let diffs: Vec<f64> = p.iter().zip(&a).map(|(x, y)| x - y).collect();
        let mean_sq = diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64;
        prop_assert!((rmse(&p, &a).unwrap() - mean_sq.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn constant_ratings_give_zero_error() {
    let mut ds = dense_dataset(1, 6, 5);
    for n in 0..ds.len() {
        ds = ds.with_value(n, 4.0);
    }
    let score = evaluate_recommender(&ds, &RecommenderSpec::default_for(Family::UserAvg), None, 5, 3).unwrap();
    assert_eq!(score.mean, 0.0);
}

#[test]
fn thread_count_does_not_change_results() {
    let ds = dense_dataset(7, 12, 9);
    let genres = random_genres(&ds, 7);
    let roster = toy_roster(7);
    let one = in_pool(1, || build_blendset(&ds, &roster, Some(&genres), 4, 9).unwrap());
    let four = in_pool(4, || build_blendset(&ds, &roster, Some(&genres), 4, 9).unwrap());
    assert_eq!(one, four);

    let rows = synthetic_rows(200, 3);
    let grid = vec![
        BlenderSpec::Linear(LinearParams {
            lambda: 0.1,
            criterion: BinCriterion::UserSupport,
            bins: 4,
        }),
        BlenderSpec::Forest(ForestBlenderParams::with_trees(6)),
        BlenderSpec::Mlp(MlpParams {
            epochs: 5,
            ..MlpParams::with_layers(vec![8, 8])
        }),
    ];
    let a = in_pool(1, || nested_cv(&rows, &grid, 4, 3, 1).unwrap());
    let b = in_pool(4, || nested_cv(&rows, &grid, 4, 3, 1).unwrap());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn perfect_feature_blend() {
    let mut rows = synthetic_rows(200, 9);
    for r in &mut rows {
        r.predictions[0] = r.actual;
    }
    let grid = [BlenderSpec::Linear(LinearParams {
        lambda: 1e-4,
        criterion: BinCriterion::UserSupport,
        bins: 1,
    })];
    let report = nested_cv(&rows, &grid, 5, 4, 0).unwrap();
    assert!(report.mean_rmse < 0.01, "{}", report.mean_rmse);
}
