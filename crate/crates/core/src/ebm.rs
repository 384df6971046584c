//! Exact quantities of the energy-based model `p(S) = exp(F(S)/T) / Z` for
//! games small enough to enumerate.

use crate::error::{input, Result};
use crate::game::{Coalition, Game};
use crate::multilinear::{check_dimension, mt_value, MarginalVector};
use crate::numeric::{bernoulli_entropy, exact_sum, for_each_product_weight, ExactSum};

/// A strictly positive, finite temperature.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(t: f64) -> Result<Self> {
        if t > 0.0 && t.is_finite() {
            Ok(Temperature(t))
        } else {
            input(format!("temperature must be positive and finite, got {t}"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature(1.0)
    }
}

fn energies<G: Game + ?Sized>(game: &G, t: f64) -> Result<Vec<f64>> {
    Temperature::new(t)?;
    game.players().require_exact()?;
    Ok((0..game.players().num_coalitions())
        .map(|s| game.value(Coalition(s as u128)) / t)
        .collect())
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + exact_sum(v.iter().map(|e| (e - max).exp())).ln()
}

/// `log Σ_S exp(F(S)/T)`, shifted by the largest energy.
pub fn log_partition<G: Game + ?Sized>(game: &G, t: f64) -> Result<f64> {
    Ok(log_sum_exp(&energies(game, t)?))
}

/// `p(S) = exp(F(S)/T - log Z)`.
pub fn coalition_prob<G: Game + ?Sized>(game: &G, t: f64, s: Coalition) -> Result<f64> {
    let log_z = log_partition(game, t)?;
    Ok((game.eval(s)? / t - log_z).exp())
}

/// `p(i ∈ S)` for every player.
pub fn true_marginals<G: Game + ?Sized>(game: &G, t: f64) -> Result<Vec<f64>> {
    let e = energies(game, t)?;
    let log_z = log_sum_exp(&e);
    let n = game.n();
    let mut acc = vec![ExactSum::new(); n];
    for (s, energy) in e.iter().enumerate() {
        let p = (energy - log_z).exp();
        for i in Coalition(s as u128).members() {
            acc[i].add(p);
        }
    }
    Ok(acc.iter().map(|a| a.value().clamp(0.0, 1.0)).collect())
}

/// Entropy of the product distribution `q(·; x)`.
pub fn product_entropy(x: &MarginalVector) -> f64 {
    exact_sum(x.as_slice().iter().map(|&v| bernoulli_entropy(v)))
}

/// Evidence lower bound `f_mt(x)/T + H(q(·; x))`.
pub fn elbo<G: Game + ?Sized>(game: &G, t: f64, x: &MarginalVector) -> Result<f64> {
    Temperature::new(t)?;
    Ok(mt_value(game, x)? / t + product_entropy(x))
}

/// `KL(q(·; x) ‖ p)`, computed as `log Z - ELBO(x)`.
pub fn kl_decoupling_error<G: Game + ?Sized>(game: &G, t: f64, x: &MarginalVector) -> Result<f64> {
    let log_z = log_partition(game, t)?;
    Ok(log_z - elbo(game, t, x)?)
}

/// `Σ_S q(S) log(q(S) / p(S))` by direct enumeration, skipping `q(S) = 0`.
pub fn kl_direct<G: Game + ?Sized>(game: &G, t: f64, x: &MarginalVector) -> Result<f64> {
    check_dimension(game, x)?;
    let log_z = log_partition(game, t)?;
    let players: Vec<usize> = (0..game.n()).collect();
    let mut acc = ExactSum::new();
    for_each_product_weight(&players, x.as_slice(), |s, q| {
        let log_p = game.value(s) / t - log_z;
        acc.add(q * (q.ln() - log_p));
    });
    Ok(acc.value())
}

/// Exact model summary for one `(game, temperature)` pair, optionally with
/// the bound and decoupling error at a given point.
#[derive(Clone, Debug, PartialEq)]
pub struct EbmSummary {
    pub temperature: f64,
    pub log_partition: f64,
    pub true_marginals: Vec<f64>,
    pub elbo_at: Option<(MarginalVector, f64)>,
    pub kl_at: Option<(MarginalVector, f64)>,
}

pub fn summarize<G: Game + ?Sized>(
    game: &G,
    t: f64,
    at: Option<&MarginalVector>,
) -> Result<EbmSummary> {
    let log_partition = log_partition(game, t)?;
    let true_marginals = true_marginals(game, t)?;
    let (elbo_at, kl_at) = match at {
        Some(x) => {
            let bound = elbo(game, t, x)?;
            (
                Some((x.clone(), bound)),
                Some((x.clone(), log_partition - bound)),
            )
        }
        None => (None, None),
    };
    Ok(EbmSummary {
        temperature: t,
        log_partition,
        true_marginals,
        elbo_at,
        kl_at,
    })
}
