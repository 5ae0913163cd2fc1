use std::path::Path;

use blendrec::data::{parse_movies_str, GenreCatalog, Rating, RatingsDataset};
use blendrec::seed::rng_from_seed;
use rand::seq::SliceRandom;
use rand::Rng as _;

pub const TOY_GENRES: [&str; 4] = ["Action", "Comedy", "Drama", "Horror"];

/// Random integral ratings on a small user × item grid, at most
/// `max_ratings` of them, no duplicate pairs.
pub fn random_dataset(seed: u64, max_ratings: usize) -> RatingsDataset {
    let mut rng = rng_from_seed(seed);
    let users = rng.random_range(2..=7u32);
    let items = rng.random_range(2..=7u32);
    let mut pairs: Vec<(u32, u32)> = (1..=users).flat_map(|u| (1..=items).map(move |i| (u, i))).collect();
    pairs.shuffle(&mut rng);
    let cap = pairs.len().min(max_ratings);
    let n = rng.random_range(cap.min(6)..=cap);
    pairs.truncate(n);
    RatingsDataset::from_ratings(
        pairs
            .into_iter()
            .map(|(u, i)| Rating {
                user_id: u * 10,
                item_id: i * 100,
                value: f64::from(rng.random_range(1..=5u8)),
                timestamp: 0,
            })
            .collect(),
    )
    .expect("toy data is valid")
}

/// A dense block of ratings where every user rates every item.
pub fn dense_dataset(seed: u64, users: u32, items: u32) -> RatingsDataset {
    let mut rng = rng_from_seed(seed);
    RatingsDataset::from_ratings(
        (1..=users)
            .flat_map(|u| (1..=items).map(move |i| (u, i)))
            .map(|(u, i)| Rating {
                user_id: u,
                item_id: i,
                value: f64::from(rng.random_range(1..=5u8)),
                timestamp: 0,
            })
            .collect(),
    )
    .expect("toy data is valid")
}

/// Random non-empty genre sets for every item of `dataset`.
pub fn random_genres(dataset: &RatingsDataset, seed: u64) -> GenreCatalog {
    let mut rng = rng_from_seed(seed);
    let mut text = String::new();
    for &id in dataset.item_index().ids() {
        let mut chosen: Vec<&str> = TOY_GENRES.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        if chosen.is_empty() {
            chosen.push(TOY_GENRES[rng.random_range(0..TOY_GENRES.len())]);
        }
        text.push_str(&format!("{id}::Movie {id} (2000)::{}\n", chosen.join("|")));
    }
    parse_movies_str(&text, Path::new("toy-movies")).expect("toy genres are valid")
}

/// Keeps a random ~80% of the ratings so some users and items go unseen.
pub fn random_train_subset(dataset: &RatingsDataset, seed: u64) -> RatingsDataset {
    let mut rng = rng_from_seed(seed);
    let keep: Vec<usize> = (0..dataset.len()).filter(|_| rng.random_bool(0.8)).collect();
    if keep.is_empty() {
        dataset.subset(&[0])
    } else {
        dataset.subset(&keep)
    }
}

/// Blendset rows with two prediction columns: `p_1` is the target plus
/// noise, `p_2` is unrelated.
pub fn synthetic_rows(n: usize, seed: u64) -> Vec<blendrec::blenders::BlendRow> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|r| {
            let actual = f64::from(rng.random_range(1..=5u8));
            blendrec::blenders::BlendRow {
                user: r % 13,
                item: r % 17,
                actual,
                predictions: vec![
                    (actual + rng.random_range(-0.9..0.9)).clamp(1.0, 5.0),
                    rng.random_range(1.0..5.0),
                ],
                meta: blendrec::metafeatures::MetaVector {
                    user_support: rng.random_range(1..60),
                    movie_support: rng.random_range(1..60),
                    user_average: rng.random_range(2.0..4.5),
                    movie_average: rng.random_range(2.0..4.5),
                },
            }
        })
        .collect()
}
