//! The multilinear extension `f(x) = Σ_S F(S) Π_{i∈S} x_i Π_{j∉S} (1 - x_j)`
//! and its gradient.
//!
//! The partial derivative is an expectation of marginal contributions,
//! `∂_i f(x) = E_{S ~ q(·; x | x_i ← 0)} [F(S + i) - F(S)]`, which gives three
//! estimators: exact enumeration, Monte-Carlo sampling from the product
//! distribution, and importance reweighting of a fixed set of uniform draws
//! (the one-shot cache).

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{input, Result};
use crate::game::{Coalition, Game};
use crate::numeric::{for_each_product_weight, per_player, stream_rng, ExactSum};

/// Parameters of a product of independent Bernoulli distributions, one per player.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalVector(Vec<f64>);

impl MarginalVector {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = x
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return input(format!("marginal {i} is {v}, outside [0, 1]"));
        }
        Ok(MarginalVector(x))
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        MarginalVector::new(vec![value; n])
    }

    /// Indicator vector of a coalition.
    pub fn vertex(n: usize, s: Coalition) -> Self {
        MarginalVector(
            (0..n)
                .map(|i| if s.contains(i) { 1.0 } else { 0.0 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Copy with coordinate `i` replaced; `value` must lie in `[0, 1]`.
    pub fn with(&self, i: usize, value: f64) -> Result<Self> {
        let mut v = self.0.clone();
        v[i] = value;
        MarginalVector::new(v)
    }
}

impl std::ops::Index<usize> for MarginalVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// How a gradient estimate was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateKind {
    Exact,
    MonteCarlo,
    OneShot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub g: Vec<f64>,
    pub kind: EstimateKind,
    /// Zero for exact estimates.
    pub samples_per_coordinate: usize,
}

/// Gradient backend used by the solvers.
#[derive(Clone, Debug)]
pub enum GradientMode {
    Exact,
    /// Fresh Bernoulli samples for every coordinate and iteration.
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
    /// A fixed cache of uniform draws, reweighted at every iterate.
    OneShot(Arc<OneShotCache>),
}

impl GradientMode {
    pub fn samples_per_coordinate(&self) -> usize {
        match self {
            GradientMode::Exact => 0,
            GradientMode::MonteCarlo { samples, .. } => *samples,
            GradientMode::OneShot(cache) => cache.samples_per_player(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            GradientMode::Exact => None,
            GradientMode::MonteCarlo { seed, .. } => Some(*seed),
            GradientMode::OneShot(cache) => Some(cache.seed()),
        }
    }

    /// Checks that the mode can serve gradients of `game`.
    pub fn validate<G: Game + ?Sized>(&self, game: &G) -> Result<()> {
        match self {
            GradientMode::Exact => game.players().require_exact(),
            GradientMode::MonteCarlo { samples, .. } => {
                if *samples == 0 {
                    input("at least one sample per coordinate is required")
                } else {
                    Ok(())
                }
            }
            GradientMode::OneShot(cache) => cache.check_dimension(game.n()),
        }
    }

    /// `∂_i f(x)` at solver iteration `iteration`.
    pub fn coordinate<G: Game + ?Sized>(
        &self,
        game: &G,
        x: &[f64],
        i: usize,
        iteration: usize,
    ) -> f64 {
        match self {
            GradientMode::Exact => exact_coordinate(game, x, i),
            GradientMode::MonteCarlo { samples, seed } => {
                sampled_coordinate(game, x, i, *samples, *seed, iteration)
            }
            GradientMode::OneShot(cache) => cache.coordinate(x, i),
        }
    }

    /// All partial derivatives, evaluated in parallel for large games.
    pub fn gradient<G: Game + ?Sized>(&self, game: &G, x: &[f64], iteration: usize) -> Vec<f64> {
        let cost = match self {
            GradientMode::Exact => 1usize.checked_shl(x.len() as u32).unwrap_or(usize::MAX),
            GradientMode::MonteCarlo { samples, .. } => samples.saturating_mul(2),
            GradientMode::OneShot(cache) => cache.samples_per_player().saturating_mul(x.len()),
        };
        per_player(x.len(), cost, |i| self.coordinate(game, x, i, iteration))
    }

    fn kind(&self) -> EstimateKind {
        match self {
            GradientMode::Exact => EstimateKind::Exact,
            GradientMode::MonteCarlo { .. } => EstimateKind::MonteCarlo,
            GradientMode::OneShot(_) => EstimateKind::OneShot,
        }
    }

    pub fn estimate<G: Game + ?Sized>(
        &self,
        game: &G,
        x: &MarginalVector,
        iteration: usize,
    ) -> Result<GradientEstimate> {
        check_dimension(game, x)?;
        self.validate(game)?;
        Ok(GradientEstimate {
            g: self.gradient(game, x.as_slice(), iteration),
            kind: self.kind(),
            samples_per_coordinate: self.samples_per_coordinate(),
        })
    }
}

pub(crate) fn check_dimension<G: Game + ?Sized>(game: &G, x: &MarginalVector) -> Result<()> {
    if x.len() != game.n() {
        return input(format!(
            "marginal vector has {} entries for a {}-player game",
            x.len(),
            game.n()
        ));
    }
    Ok(())
}

/// Exact value of the multilinear extension at `x`.
pub fn mt_value<G: Game + ?Sized>(game: &G, x: &MarginalVector) -> Result<f64> {
    check_dimension(game, x)?;
    game.players().require_exact()?;
    let players: Vec<usize> = (0..game.n()).collect();
    let mut acc = ExactSum::new();
    for_each_product_weight(&players, x.as_slice(), |s, w| acc.add(game.value(s) * w));
    Ok(acc.value())
}

/// `Σ_{S⊆N-i} [F(S+i) - F(S)] q(S; x | x_i ← 0)`, summed exactly.
///
/// Contributions are taken relative to the first one visited and the result
/// is divided by the summed weights, which equal 1 up to rounding. A player
/// whose marginal contribution is constant therefore gets it back exactly.
pub(crate) fn exact_coordinate<G: Game + ?Sized>(game: &G, x: &[f64], i: usize) -> f64 {
    let others: Vec<usize> = (0..x.len()).filter(|&j| j != i).collect();
    let mut reference = None;
    let mut acc = ExactSum::new();
    let mut mass = ExactSum::new();
    for_each_product_weight(&others, x, |s, w| {
        let delta = game.value(s.with(i)) - game.value(s);
        let r = *reference.get_or_insert(delta);
        acc.add((delta - r) * w);
        mass.add(w);
    });
    let r = reference.unwrap_or(0.0);
    r + acc.value() / mass.value()
}

/// Exact gradient of the multilinear extension.
pub fn mt_gradient_exact<G: Game + ?Sized>(
    game: &G,
    x: &MarginalVector,
) -> Result<GradientEstimate> {
    GradientMode::Exact.estimate(game, x, 0)
}

/// The distribution `q(S; x | x_i ← 0)` over subsets of `N - i`, as
/// `(coalition, probability)` pairs.
pub fn conditional_weights(x: &MarginalVector, i: usize) -> Result<Vec<(Coalition, f64)>> {
    if i >= x.len() {
        return input(format!("player {i} is outside a {}-player vector", x.len()));
    }
    let others: Vec<usize> = (0..x.len()).filter(|&j| j != i).collect();
    let mut out = Vec::new();
    for_each_product_weight(&others, x.as_slice(), |s, w| out.push((s, w)));
    Ok(out)
}

fn sampled_coordinate<G: Game + ?Sized>(
    game: &G,
    x: &[f64],
    i: usize,
    samples: usize,
    seed: u64,
    iteration: usize,
) -> f64 {
    let mut rng = stream_rng(seed, i, iteration);
    let mut acc = ExactSum::new();
    for _ in 0..samples {
        let mut s = Coalition::EMPTY;
        for (j, &xj) in x.iter().enumerate() {
            if j != i && rng.gen::<f64>() < xj {
                s = s.with(j);
            }
        }
        acc.add(game.value(s.with(i)) - game.value(s));
    }
    acc.value() / samples as f64
}

/// Monte-Carlo gradient with `samples` draws per coordinate.
pub fn mt_gradient_sampled<G: Game + ?Sized>(
    game: &G,
    x: &MarginalVector,
    samples: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    GradientMode::MonteCarlo { samples, seed }.estimate(game, x, 0)
}

/// Smallest `m` with `exp(-m ε² / 2) ≤ δ`.
///
/// With that many samples per coordinate the sampled partial derivative lies
/// within `ε · max_S |F(S+i) - F(S)|` of the truth with probability at least
/// `1 - δ`.
pub fn sample_count_for(epsilon: f64, delta: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return input(format!("epsilon must be positive, got {epsilon}"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return input(format!("delta must lie in (0, 1), got {delta}"));
    }
    let holds = |m: f64| (-m * epsilon * epsilon / 2.0).exp() <= delta;
    let mut m = (2.0 * -delta.ln() / (epsilon * epsilon)).ceil().max(1.0);
    while m > 1.0 && holds(m - 1.0) {
        m -= 1.0;
    }
    while !holds(m) {
        m += 1.0;
    }
    Ok(m as usize)
}

/// How cached uniform draws are reweighted toward `q(·; x | x_i ← 0)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reweighting {
    /// Unbiased: the mean of `Δ_k · 2^{n-1} q(S_k)`.
    #[default]
    Plain,
    /// `Σ_k w_k Δ_k / Σ_k w_k` with `w_k ∝ q(S_k)`. Biased for finite `m`
    /// but consistent, and it stays usable when the plain weights
    /// degenerate, which happens for large `n` once `x` leaves `0.5·1`.
    SelfNormalized,
}

/// Per-player marginal contributions on coalitions drawn uniformly from
/// `2^{N-i}`, evaluated once and reused at every solver iterate.
#[derive(Clone, Debug)]
pub struct OneShotCache {
    n: usize,
    seed: u64,
    samples: Vec<Vec<(Coalition, f64)>>,
    reweighting: Reweighting,
}

impl OneShotCache {
    /// The same draws read with another weighting scheme.
    pub fn with_reweighting(mut self, reweighting: Reweighting) -> Self {
        self.reweighting = reweighting;
        self
    }

    pub fn reweighting(&self) -> Reweighting {
        self.reweighting
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn samples_per_player(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// The cached `(S_k, F(S_k + i) - F(S_k))` pairs for player `i`.
    pub fn samples(&self, i: usize) -> &[(Coalition, f64)] {
        &self.samples[i]
    }

    fn check_dimension(&self, n: usize) -> Result<()> {
        if n != self.n {
            return input(format!(
                "one-shot cache built for {} players, used with {n}",
                self.n
            ));
        }
        Ok(())
    }

    /// `(2^{n-1} / m) Σ_k Δ_k q(S_k; x | x_i ← 0)` under plain weighting.
    fn coordinate(&self, x: &[f64], i: usize) -> f64 {
        let draws = &self.samples[i];
        match self.reweighting {
            Reweighting::Plain => {
                let mut acc = ExactSum::new();
                for &(s, delta) in draws {
                    let mut ratio = 1.0;
                    for (j, &xj) in x.iter().enumerate() {
                        if j != i {
                            ratio *= 2.0 * if s.contains(j) { xj } else { 1.0 - xj };
                        }
                    }
                    acc.add(delta * ratio);
                }
                acc.value() / draws.len() as f64
            }
            Reweighting::SelfNormalized => {
                // Log weights: the raw products underflow for large n.
                let log_w: Vec<f64> = draws
                    .iter()
                    .map(|&(s, _)| {
                        x.iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .map(|(j, &xj)| if s.contains(j) { xj } else { 1.0 - xj }.ln())
                            .sum()
                    })
                    .collect();
                let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if top == f64::NEG_INFINITY {
                    // No draw has positive probability under q.
                    return 0.0;
                }
                let mut num = ExactSum::new();
                let mut den = ExactSum::new();
                for (&(_, delta), lw) in draws.iter().zip(&log_w) {
                    let w = (lw - top).exp();
                    num.add(w * delta);
                    den.add(w);
                }
                num.value() / den.value()
            }
        }
    }
}

/// Draws `m` uniform coalitions of `N - i` for every player and stores their
/// marginal contributions. Uses at most `2·n·m` evaluations of `game`.
pub fn build_oneshot_cache<G: Game + ?Sized>(
    game: &G,
    m: usize,
    seed: u64,
) -> Result<OneShotCache> {
    if m == 0 {
        return input("the one-shot cache needs at least one sample per player");
    }
    let n = game.n();
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i, 0);
            (0..m)
                .map(|_| {
                    let mut s = Coalition::EMPTY;
                    for j in (0..n).filter(|&j| j != i) {
                        if rng.gen::<bool>() {
                            s = s.with(j);
                        }
                    }
                    (s, game.value(s.with(i)) - game.value(s))
                })
                .collect()
        })
        .collect();
    Ok(OneShotCache {
        n,
        seed,
        samples,
        reweighting: Reweighting::Plain,
    })
}

/// Gradient estimate from a one-shot cache.
pub fn mt_gradient_oneshot(cache: &OneShotCache, x: &MarginalVector) -> Result<GradientEstimate> {
    cache.check_dimension(x.len())?;
    let cost = cache.samples_per_player().saturating_mul(x.len());
    let g = per_player(x.len(), cost, |i| cache.coordinate(x.as_slice(), i));
    Ok(GradientEstimate {
        g,
        kind: EstimateKind::OneShot,
        samples_per_coordinate: cache.samples_per_player(),
    })
}

impl From<OneShotCache> for GradientMode {
    fn from(cache: OneShotCache) -> Self {
        GradientMode::OneShot(Arc::new(cache))
    }
}
