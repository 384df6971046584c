#![allow(dead_code)]

use proptest::collection::vec;
use proptest::prelude::*;
use varindex_core::{MarginalVector, TabulatedGame};

/// Random table game with `lo..=hi` players and payoffs in `[-1, 1]`.
pub fn table_game(lo: usize, hi: usize) -> impl Strategy<Value = TabulatedGame> {
    (lo..=hi).prop_flat_map(|n| {
        vec(-1.0f64..1.0, 1 << n).prop_map(move |t| TabulatedGame::new(n, t).unwrap())
    })
}

pub fn point(n: usize) -> impl Strategy<Value = MarginalVector> {
    vec(0.0f64..=1.0, n).prop_map(|x| MarginalVector::new(x).unwrap())
}

/// A game together with a point of matching dimension.
pub fn game_and_point(
    lo: usize,
    hi: usize,
) -> impl Strategy<Value = (TabulatedGame, MarginalVector)> {
    table_game(lo, hi).prop_flat_map(|g| {
        let n = g.table().len().trailing_zeros() as usize;
        (Just(g), point(n))
    })
}

pub fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
