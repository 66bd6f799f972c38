//! Seeded input generators shared by the benchmarks.

use gnt_core::stats::{BinaryLabel, CountsMatrix, RatingsMatrix};
use gnt_core::Layer1Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `items` rows of three-category counts from `raters` raters each.
pub fn counts(rng: &mut impl Rng, items: usize, raters: u32) -> CountsMatrix {
    let rows = (0..items)
        .map(|_| {
            let mut row = vec![0u32; 3];
            for _ in 0..raters {
                row[rng.random_range(0..3)] += 1;
            }
            row
        })
        .collect();
    CountsMatrix::new(rows).expect("well-formed counts")
}

/// Acceptability scores on the 1..=4 scale.
pub fn ratings(rng: &mut impl Rng, targets: usize, raters: usize) -> RatingsMatrix {
    let rows = (0..targets)
        .map(|_| (0..raters).map(|_| f64::from(rng.random_range(1..=4u8))).collect())
        .collect();
    RatingsMatrix::new(rows).expect("well-formed ratings")
}

pub fn ranks(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| f64::from(rng.random_range(0..n as u32))).collect()
}

pub fn labels(rng: &mut impl Rng, n: usize) -> (Vec<Layer1Label>, Vec<BinaryLabel>) {
    (0..n)
        .map(|_| {
            (
                Layer1Label::ALL[rng.random_range(0..3)],
                BinaryLabel::ALL[rng.random_range(0..2)],
            )
        })
        .unzip()
}

const WORDS: [&str; 16] = [
    "le",
    "persone",
    "che",
    "scrivono",
    "sono",
    "arrivate",
    "gli",
    "scrittori",
    "il",
    "corpo",
    "docente",
    "è",
    "d'accordo",
    "benvenuto",
    "a",
    "chi",
];

/// A sentence of `len` words drawn from a small Italian vocabulary.
pub fn sentence(rng: &mut impl Rng, len: usize) -> String {
    (0..len)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Hypothesis and reference segments of roughly `len` words.
pub fn segment_pairs(rng: &mut impl Rng, segments: usize, len: usize) -> (Vec<String>, Vec<String>) {
    (0..segments).map(|_| (sentence(rng, len), sentence(rng, len))).unzip()
}
