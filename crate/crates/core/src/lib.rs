//! Valuation of cooperative games through an energy-based view of coalitions.
//!
//! A game assigns a payoff `F(S)` to every coalition `S` of `n` players. The
//! maximum-entropy distribution `p(S) ∝ exp(F(S)/T)` couples the players; its
//! best product (mean-field) approximation decouples them, and the logits of
//! the resulting marginals serve as player valuations. Classical criteria fall
//! out as special cases: Banzhaf is one fixed-point step from `0.5·1`, and
//! Shapley integrates the same one-step map along the diagonal of the cube.
//!
//! Module map:
//!
//! * [`game`]: coalitions, the [`Game`] trait, concrete game families and a
//!   memoizing wrapper.
//! * [`multilinear`]: the multilinear extension and its gradient (exact,
//!   Monte-Carlo and one-shot importance sampling).
//! * [`ebm`]: exact partition function, true marginals, ELBO and KL
//!   decoupling error for small games.
//! * [`solver`]: full-gradient and naive (coordinate) mean-field iterations.
//! * [`valuation`]: Banzhaf, Shapley, K-step variational values and the
//!   variational index.
//! * [`harness`]: removal curves, marginal fits, axiom suites and the FLID
//!   benchmark.

pub mod ebm;
pub mod error;
pub mod game;
pub mod harness;
pub mod multilinear;
pub mod numeric;
pub mod report;
pub mod solver;
pub mod valuation;

pub use error::{Error, Result};
pub use game::{
    AdditiveGame, Coalition, FlidGame, Game, GameSpec, Memoized, PlayerSet, TabulatedGame,
    VotingGame,
};
pub use multilinear::{GradientEstimate, GradientMode, MarginalVector, OneShotCache, Reweighting};
pub use solver::{Init, SolverConfig, Trajectory};
pub use valuation::{LogitClamp, Method, ValuationVector};

/// Largest player count for which routines enumerate all `2^n` coalitions.
pub const MAX_EXACT_PLAYERS: usize = 25;

/// Largest player count representable by a [`Coalition`] bitmask.
pub const MAX_PLAYERS: usize = 128;
