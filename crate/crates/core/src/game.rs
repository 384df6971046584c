//! Players, coalitions and value functions.
//!
//! Players are indexed from 0; bit `i` of a [`Coalition`] is set exactly when
//! player `i` belongs to it.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::{MAX_EXACT_PLAYERS, MAX_PLAYERS};

/// The grand coalition `{0, .., n-1}`, identified by its size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PlayerSet(usize);

impl PlayerSet {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return input("a game needs at least one player");
        }
        if n > MAX_PLAYERS {
            return input(format!(
                "{n} players exceeds the supported maximum of {MAX_PLAYERS}"
            ));
        }
        Ok(PlayerSet(n))
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0
    }

    /// Always false; a player set is never empty.
    #[inline]
    pub fn is_empty(self) -> bool {
        false
    }

    pub fn grand(self) -> Coalition {
        if self.0 == 128 {
            Coalition(u128::MAX)
        } else {
            Coalition((1u128 << self.0) - 1)
        }
    }

    pub fn contains(self, s: Coalition) -> bool {
        s.0 & !self.grand().0 == 0
    }

    /// Fails unless all `2^n` coalitions may be enumerated.
    pub fn require_exact(self) -> Result<()> {
        if self.0 > MAX_EXACT_PLAYERS {
            Err(Error::Capacity {
                n: self.0,
                max: MAX_EXACT_PLAYERS,
            })
        } else {
            Ok(())
        }
    }

    /// Number of coalitions, `2^n`. Only meaningful for enumerable games.
    pub fn num_coalitions(self) -> usize {
        1usize << self.0
    }
}

/// A subset of players encoded as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coalition(pub u128);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    #[inline]
    pub fn from_bits(bits: u128) -> Self {
        Coalition(bits)
    }

    pub fn from_players(players: &[usize]) -> Self {
        Coalition(players.iter().fold(0u128, |acc, &i| acc | (1u128 << i)))
    }

    #[inline]
    pub fn bits(self) -> u128 {
        self.0
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    #[inline]
    pub fn with(self, i: usize) -> Self {
        Coalition(self.0 | (1u128 << i))
    }

    #[inline]
    pub fn without(self, i: usize) -> Self {
        Coalition(self.0 & !(1u128 << i))
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(i)
            }
        })
    }

    /// Exchanges the memberships of players `i` and `j`.
    pub fn swapped(self, i: usize, j: usize) -> Self {
        let (a, b) = (self.contains(i), self.contains(j));
        let mut out = self.without(i).without(j);
        if a {
            out = out.with(j);
        }
        if b {
            out = out.with(i);
        }
        out
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

/// A cooperative game: a player set and a pure value function over coalitions.
///
/// Implementations must be deterministic and safe to evaluate from many
/// threads at once.
pub trait Game: Send + Sync {
    fn players(&self) -> PlayerSet;

    /// Payoff of `s`. Callers guarantee `s` lies inside the player set.
    fn value(&self, s: Coalition) -> f64;

    fn n(&self) -> usize {
        self.players().len()
    }

    /// Checked evaluation of `F(S)`.
    fn eval(&self, s: Coalition) -> Result<f64> {
        if !self.players().contains(s) {
            return input(format!(
                "coalition {:#b} is outside a {}-player game",
                s.0,
                self.n()
            ));
        }
        Ok(self.value(s))
    }

    /// `F(S + i) - F(S)` for a player `i` not in `S`.
    fn marginal_contribution(&self, s: Coalition, i: usize) -> Result<f64> {
        if i >= self.n() {
            return input(format!("player {i} is outside a {}-player game", self.n()));
        }
        if s.contains(i) {
            return input(format!("player {i} already belongs to the coalition"));
        }
        Ok(self.eval(s.with(i))? - self.value(s))
    }
}

impl<G: Game + ?Sized> Game for &G {
    fn players(&self) -> PlayerSet {
        (**self).players()
    }
    fn value(&self, s: Coalition) -> f64 {
        (**self).value(s)
    }
}

impl<G: Game + ?Sized> Game for Box<G> {
    fn players(&self) -> PlayerSet {
        (**self).players()
    }
    fn value(&self, s: Coalition) -> f64 {
        (**self).value(s)
    }
}

impl<G: Game + ?Sized> Game for Arc<G> {
    fn players(&self) -> PlayerSet {
        (**self).players()
    }
    fn value(&self, s: Coalition) -> f64 {
        (**self).value(s)
    }
}

/// Dense storage of all `2^n` payoffs, indexed by bitmask.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedGame {
    players: PlayerSet,
    table: Vec<f64>,
}

impl TabulatedGame {
    pub fn new(n: usize, table: Vec<f64>) -> Result<Self> {
        let players = PlayerSet::new(n)?;
        players.require_exact()?;
        if table.len() != players.num_coalitions() {
            return input(format!(
                "a {n}-player table needs {} values, got {}",
                players.num_coalitions(),
                table.len()
            ));
        }
        Ok(TabulatedGame { players, table })
    }

    /// Evaluates every coalition of `game` once.
    pub fn from_game<G: Game + ?Sized>(game: &G) -> Result<Self> {
        let players = game.players();
        players.require_exact()?;
        let table = (0..players.num_coalitions())
            .map(|s| game.value(Coalition(s as u128)))
            .collect();
        Ok(TabulatedGame { players, table })
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn into_table(self) -> Vec<f64> {
        self.table
    }
}

impl Game for TabulatedGame {
    fn players(&self) -> PlayerSet {
        self.players
    }

    #[inline]
    fn value(&self, s: Coalition) -> f64 {
        self.table[s.index()]
    }
}

/// Weighted voting game: `F(S) = 1` when the members' weight reaches the quota.
#[derive(Clone, Debug, PartialEq)]
pub struct VotingGame {
    weights: Vec<f64>,
    quota: f64,
}

impl VotingGame {
    pub fn new(weights: Vec<f64>, quota: f64) -> Result<Self> {
        PlayerSet::new(weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return input("voting weights must be finite and nonnegative");
        }
        if !quota.is_finite() {
            return input("voting quota must be finite");
        }
        Ok(VotingGame { weights, quota })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn quota(&self) -> f64 {
        self.quota
    }
}

impl Game for VotingGame {
    fn players(&self) -> PlayerSet {
        PlayerSet(self.weights.len())
    }

    fn value(&self, s: Coalition) -> f64 {
        let total: f64 = s.members().map(|i| self.weights[i]).sum();
        if total >= self.quota {
            1.0
        } else {
            0.0
        }
    }
}

/// Modular game `F(S) = Σ_{i∈S} c_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveGame {
    c: Vec<f64>,
}

impl AdditiveGame {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        PlayerSet::new(c.len())?;
        if c.iter().any(|v| !v.is_finite()) {
            return input("additive payoffs must be finite");
        }
        Ok(AdditiveGame { c })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.c
    }
}

impl Game for AdditiveGame {
    fn players(&self) -> PlayerSet {
        PlayerSet(self.c.len())
    }

    fn value(&self, s: Coalition) -> f64 {
        s.members().map(|i| self.c[i]).sum()
    }
}

/// Facility-location diversity game:
/// `F(S) = Σ_{i∈S} u'_i + Σ_d max_{i∈S} W[i][d]` with `u'_i = u_i - Σ_d W[i][d]`
/// and the maximum over the empty set taken as 0.
#[derive(Clone, Debug, PartialEq)]
pub struct FlidGame {
    weights: Vec<Vec<f64>>,
    utilities: Vec<f64>,
    adjusted: Vec<f64>,
    dims: usize,
}

impl FlidGame {
    pub fn new(weights: Vec<Vec<f64>>, utilities: Vec<f64>) -> Result<Self> {
        let n = utilities.len();
        PlayerSet::new(n)?;
        if weights.len() != n {
            return input(format!(
                "FLID weights have {} rows for {n} players",
                weights.len()
            ));
        }
        let dims = weights[0].len();
        if weights.iter().any(|row| row.len() != dims) {
            return input("FLID weight rows must all have the same length");
        }
        if weights
            .iter()
            .flatten()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return input("FLID weights must be finite and nonnegative");
        }
        if utilities.iter().any(|u| !u.is_finite()) {
            return input("FLID utilities must be finite");
        }
        let adjusted = utilities
            .iter()
            .zip(&weights)
            .map(|(u, row)| u - row.iter().sum::<f64>())
            .collect();
        Ok(FlidGame {
            weights,
            utilities,
            adjusted,
            dims,
        })
    }

    /// Draws `W ~ Uniform[0,1]` and `u_i ~ Uniform[0, 1.5·Σ_d W[i][d]]`, so the
    /// modular part `u'` takes both signs.
    pub fn random<R: Rng + ?Sized>(n: usize, dims: usize, rng: &mut R) -> Result<Self> {
        let weights: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dims).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let utilities = weights
            .iter()
            .map(|row| 1.5 * row.iter().sum::<f64>() * rng.gen::<f64>())
            .collect();
        FlidGame::new(weights, utilities)
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    /// `u'`, the utilities net of each player's total weight.
    pub fn adjusted_utilities(&self) -> &[f64] {
        &self.adjusted
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn to_spec(&self) -> GameSpec {
        GameSpec::Flid {
            n: self.utilities.len(),
            w: self.weights.clone(),
            u: self.utilities.clone(),
        }
    }
}

impl Game for FlidGame {
    fn players(&self) -> PlayerSet {
        PlayerSet(self.utilities.len())
    }

    fn value(&self, s: Coalition) -> f64 {
        let modular: f64 = s.members().map(|i| self.adjusted[i]).sum();
        let mut best = vec![0.0f64; self.dims];
        for i in s.members() {
            for (b, &w) in best.iter_mut().zip(&self.weights[i]) {
                if w > *b {
                    *b = w;
                }
            }
        }
        modular + best.iter().sum::<f64>()
    }
}

/// Caches every coalition value of an inner game.
pub struct Memoized<G> {
    inner: G,
    cache: DashMap<u128, f64>,
    inner_calls: AtomicUsize,
}

impl<G: Game> Memoized<G> {
    pub fn new(inner: G) -> Self {
        Memoized {
            inner,
            cache: DashMap::new(),
            inner_calls: AtomicUsize::new(0),
        }
    }

    /// How many times the inner game has been evaluated.
    pub fn inner_calls(&self) -> usize {
        self.inner_calls.load(Ordering::Relaxed)
    }

    pub fn cached(&self) -> usize {
        self.cache.len()
    }

    pub fn inner(&self) -> &G {
        &self.inner
    }
}

impl<G: Game> Game for Memoized<G> {
    fn players(&self) -> PlayerSet {
        self.inner.players()
    }

    fn value(&self, s: Coalition) -> f64 {
        if let Some(v) = self.cache.get(&s.0) {
            return *v;
        }
        // The shard stays locked while the inner game runs, so each coalition
        // reaches the inner game once.
        *self.cache.entry(s.0).or_insert_with(|| {
            self.inner_calls.fetch_add(1, Ordering::Relaxed);
            self.inner.value(s)
        })
    }
}

/// Wraps `game` so that repeated coalitions are served from a cache.
pub fn memoize<G: Game>(game: G) -> Memoized<G> {
    Memoized::new(game)
}

/// JSON description of a game, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GameSpec {
    Tabulated {
        n: usize,
        values: Vec<f64>,
    },
    Voting {
        n: usize,
        weights: Vec<f64>,
        quota: f64,
    },
    Flid {
        n: usize,
        #[serde(rename = "W")]
        w: Vec<Vec<f64>>,
        u: Vec<f64>,
    },
    Additive {
        n: usize,
        c: Vec<f64>,
    },
}

impl GameSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn n(&self) -> usize {
        match self {
            GameSpec::Tabulated { n, .. }
            | GameSpec::Voting { n, .. }
            | GameSpec::Flid { n, .. }
            | GameSpec::Additive { n, .. } => *n,
        }
    }

    /// Validates the description and builds the game it denotes.
    ///
    /// A tabulated game larger than the enumeration limit is a capacity error;
    /// any other inconsistency is a parse error.
    pub fn build(&self) -> Result<Box<dyn Game>> {
        let n = self.n();
        let check_len = |what: &str, len: usize, want: usize| {
            if len == want {
                Ok(())
            } else {
                Err(Error::Parse(format!(
                    "\"{what}\" has {len} entries, expected {want}"
                )))
            }
        };
        let as_parse = |e: Error| match e {
            Error::Input(msg) => Error::Parse(msg),
            other => other,
        };
        PlayerSet::new(n).map_err(as_parse)?;
        let game: Box<dyn Game> = match self {
            GameSpec::Tabulated { values, .. } => {
                PlayerSet(n).require_exact()?;
                check_len("values", values.len(), 1 << n)?;
                Box::new(TabulatedGame::new(n, values.clone()).map_err(as_parse)?)
            }
            GameSpec::Voting { weights, quota, .. } => {
                check_len("weights", weights.len(), n)?;
                Box::new(VotingGame::new(weights.clone(), *quota).map_err(as_parse)?)
            }
            GameSpec::Flid { w, u, .. } => {
                check_len("W", w.len(), n)?;
                check_len("u", u.len(), n)?;
                Box::new(FlidGame::new(w.clone(), u.clone()).map_err(as_parse)?)
            }
            GameSpec::Additive { c, .. } => {
                check_len("c", c.len(), n)?;
                Box::new(AdditiveGame::new(c.clone()).map_err(as_parse)?)
            }
        };
        Ok(game)
    }
}
