//! Experiment and property harnesses.

use std::io;

use rand::Rng;
use rayon::prelude::*;

use crate::ebm::{kl_decoupling_error, true_marginals};
use crate::error::{input, Result};
use crate::game::{Coalition, FlidGame, Game, TabulatedGame};
use crate::multilinear::{GradientMode, MarginalVector};
use crate::numeric::{format_f64, sigmoid, stream_rng};
use crate::solver::{run_to_convergence, Init};
use crate::valuation::{
    banzhaf, kstep_with_solver, shapley_exact, BanzhafMode, SolverKind, ValuationVector,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Remove the highest-valued player first.
    Desc,
    Asc,
}

/// Payoff of the surviving coalition as players are removed in valuation order.
#[derive(Clone, Debug, PartialEq)]
pub struct RemovalCurve {
    pub order: Vec<usize>,
    /// `payoffs[k]` is `F` of the coalition left after removing `k` players.
    pub payoffs: Vec<f64>,
}

impl RemovalCurve {
    /// CSV with columns `step, removed_player, payoff`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "removed_player", "payoff"])?;
        for (k, p) in self.payoffs.iter().enumerate() {
            let removed = k
                .checked_sub(1)
                .map_or(String::new(), |j| self.order[j].to_string());
            w.write_record([k.to_string(), removed, format_f64(*p)])?;
        }
        w.flush()
    }
}

/// Players ordered by value; ties keep ascending player index.
pub fn ranking(values: &[f64], direction: Direction) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| match direction {
        Direction::Desc => values[b].total_cmp(&values[a]),
        Direction::Asc => values[a].total_cmp(&values[b]),
    });
    order
}

pub fn removal_curve<G: Game + ?Sized>(
    game: &G,
    values: &[f64],
    direction: Direction,
) -> Result<RemovalCurve> {
    if values.len() != game.n() {
        return input(format!(
            "{} values for a {}-player game",
            values.len(),
            game.n()
        ));
    }
    let order = ranking(values, direction);
    let mut s = game.players().grand();
    let mut payoffs = vec![game.value(s)];
    for &i in &order {
        s = s.without(i);
        payoffs.push(game.value(s));
    }
    Ok(RemovalCurve { order, payoffs })
}

/// Spearman rank correlation. `degenerate` marks a constant input, for which
/// the coefficient is undefined and `rho` is reported as 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankCorrelation {
    pub rho: f64,
    pub degenerate: bool,
}

/// Ranks starting at 1, tied entries sharing their average rank.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let order = ranking(v, Direction::Asc);
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<RankCorrelation> {
    if a.len() != b.len() {
        return input(format!(
            "rank correlation of vectors with lengths {} and {}",
            a.len(),
            b.len()
        ));
    }
    if a.len() < 2 {
        return input("rank correlation needs at least two entries");
    }
    let (ra, rb) = (fractional_ranks(a), fractional_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(RankCorrelation {
            rho: 0.0,
            degenerate: true,
        });
    }
    Ok(RankCorrelation {
        rho: (cov / (va * vb).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Distance of predicted marginals to the exact marginals of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub mse: f64,
    pub spearman_rho: f64,
    pub degenerate: bool,
    pub predicted: Vec<f64>,
    pub truth: Vec<f64>,
}

pub fn mean_squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Compares `x` with `p(i ∈ S)`. To score Shapley or Banzhaf values pass
/// `σ(φ/T)` as `x`.
pub fn marginal_fit<G: Game + ?Sized>(
    game: &G,
    temperature: f64,
    x: &MarginalVector,
) -> Result<FitReport> {
    let truth = true_marginals(game, temperature)?;
    if x.len() != truth.len() {
        return input(format!(
            "{} marginals for a {}-player game",
            x.len(),
            truth.len()
        ));
    }
    let predicted = x.as_slice().to_vec();
    let mse = mean_squared_error(&predicted, &truth);
    let (spearman_rho, degenerate) = if truth.len() >= 2 {
        let r = spearman(&predicted, &truth)?;
        (r.rho, r.degenerate)
    } else {
        (0.0, true)
    };
    Ok(FitReport {
        mse,
        spearman_rho,
        degenerate,
        predicted,
        truth,
    })
}

/// `σ(φ / T)` componentwise.
pub fn squash(values: &[f64], temperature: f64) -> Result<MarginalVector> {
    MarginalVector::new(values.iter().map(|v| sigmoid(v / temperature)).collect())
}

/// Grid on which random payoffs are drawn. Sums and differences of values on
/// this grid are exact in `f64`, so shifting a game by a constant leaves its
/// marginal contributions bit-identical.
const PAYOFF_GRID: f64 = (1u64 << 20) as f64;

fn grid_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen_range(-(1i64 << 20)..=(1i64 << 20)) as f64 / PAYOFF_GRID
}

/// Table with entries drawn from `Uniform[-1, 1]` on a `2^-20` grid.
pub fn random_table<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<TabulatedGame> {
    let table = (0..1usize << n).map(|_| grid_uniform(rng)).collect();
    TabulatedGame::new(n, table)
}

/// A generated pair of games and the relation their valuations must obey.
#[derive(Clone, Debug, PartialEq)]
pub enum AxiomRelation {
    /// `transformed` ignores `player` entirely; its value must be 0.
    NullPlayer { player: usize },
    /// `transformed` is invariant under swapping `i` and `j`; their values
    /// must be equal.
    Symmetry { i: usize, j: usize },
    /// `transformed = base + shift`; valuations must be identical.
    Marginalism { shift: f64 },
    /// `transformed = base + other`; the one-step value at `0.5·1` is additive.
    Additivity { other: TabulatedGame },
}

impl AxiomRelation {
    pub fn tag(&self) -> &'static str {
        match self {
            AxiomRelation::NullPlayer { .. } => "null-player",
            AxiomRelation::Symmetry { .. } => "symmetry",
            AxiomRelation::Marginalism { .. } => "marginalism",
            AxiomRelation::Additivity { .. } => "additivity",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AxiomCase {
    pub base: TabulatedGame,
    pub transformed: TabulatedGame,
    pub relation: AxiomRelation,
}

fn map_table(base: &TabulatedGame, f: impl Fn(Coalition) -> f64) -> TabulatedGame {
    let n = base.n();
    let table = (0..1u128 << n).map(|s| f(Coalition(s))).collect();
    TabulatedGame::new(n, table).expect("same size as an existing table")
}

/// `count` cases of each relation on `n`-player games. Every case is derived
/// from its own seeded stream.
pub fn gen_axiom_suite(seed: u64, n: usize, count: usize) -> Result<Vec<AxiomCase>> {
    if !(2..=12).contains(&n) {
        return input(format!("axiom suites use 2 to 12 players, got {n}"));
    }
    let mut cases = Vec::with_capacity(4 * count);
    for c in 0..count {
        let mut rng = stream_rng(seed, n, c);
        let base = random_table(n, &mut rng)?;

        let player = rng.gen_range(0..n);
        let transformed = map_table(&base, |s| base.value(s.without(player)));
        cases.push(AxiomCase {
            base: base.clone(),
            transformed,
            relation: AxiomRelation::NullPlayer { player },
        });

        let i = rng.gen_range(0..n);
        let j = (i + rng.gen_range(1..n)) % n;
        let transformed = map_table(&base, |s| base.value(s.min(s.swapped(i, j))));
        cases.push(AxiomCase {
            base: base.clone(),
            transformed,
            relation: AxiomRelation::Symmetry { i, j },
        });

        let shift = grid_uniform(&mut rng);
        let transformed = map_table(&base, |s| base.value(s) + shift);
        cases.push(AxiomCase {
            base: base.clone(),
            transformed,
            relation: AxiomRelation::Marginalism { shift },
        });

        let other = random_table(n, &mut rng)?;
        let transformed = map_table(&base, |s| base.value(s) + other.value(s));
        cases.push(AxiomCase {
            base,
            transformed,
            relation: AxiomRelation::Additivity { other },
        });
    }
    Ok(cases)
}

/// One verdict of the axiom suite.
#[derive(Clone, Debug, PartialEq)]
pub struct AxiomOutcome {
    pub case: usize,
    pub relation: &'static str,
    pub solver: SolverKind,
    pub k: usize,
    pub init: f64,
    pub passed: bool,
    /// Largest deviation from the relation (0 when it holds exactly).
    pub violation: f64,
}

/// Settings for [`check_axioms`].
#[derive(Clone, Debug)]
pub struct AxiomCheck {
    pub temperature: f64,
    pub ks: Vec<usize>,
    pub inits: Vec<f64>,
    pub solvers: Vec<SolverKind>,
    /// Tolerance for additivity; the other relations must hold exactly.
    pub additivity_tol: f64,
}

impl Default for AxiomCheck {
    fn default() -> Self {
        AxiomCheck {
            temperature: 1.0,
            ks: vec![1, 2, 5, 10],
            inits: vec![0.25, 0.5, 0.75],
            solvers: vec![SolverKind::FullGradient, SolverKind::Naive],
            additivity_tol: 1e-10,
        }
    }
}

fn kstep(
    game: &TabulatedGame,
    solver: SolverKind,
    t: f64,
    init: f64,
    k: usize,
) -> Result<ValuationVector> {
    kstep_with_solver(game, solver, t, Init::Uniform(init), k, GradientMode::Exact)
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Runs every relation of `cases` through the configured solvers, step
/// counts and uniform initializers. Additivity is only claimed for the
/// full-gradient one-step value from `0.5·1` and is checked there alone.
pub fn check_axioms(cases: &[AxiomCase], check: &AxiomCheck) -> Result<Vec<AxiomOutcome>> {
    let per_case: Vec<Result<Vec<AxiomOutcome>>> = cases
        .par_iter()
        .enumerate()
        .map(|(idx, case)| {
            let mut out = Vec::new();
            let t = check.temperature;
            if let AxiomRelation::Additivity { other } = &case.relation {
                let solver = SolverKind::FullGradient;
                let sum = kstep(&case.transformed, solver, t, 0.5, 1)?.values;
                let a = kstep(&case.base, solver, t, 0.5, 1)?.values;
                let b = kstep(other, solver, t, 0.5, 1)?.values;
                let parts: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
                let violation = max_gap(&sum, &parts);
                out.push(AxiomOutcome {
                    case: idx,
                    relation: case.relation.tag(),
                    solver,
                    k: 1,
                    init: 0.5,
                    passed: violation <= check.additivity_tol,
                    violation,
                });
                return Ok(out);
            }
            for &solver in &check.solvers {
                for &init in &check.inits {
                    for &k in &check.ks {
                        let v = kstep(&case.transformed, solver, t, init, k)?.values;
                        let violation = match &case.relation {
                            AxiomRelation::NullPlayer { player } => v[*player].abs(),
                            AxiomRelation::Symmetry { i, j } => (v[*i] - v[*j]).abs(),
                            AxiomRelation::Marginalism { .. } => {
                                let base = kstep(&case.base, solver, t, init, k)?.values;
                                if base == v {
                                    0.0
                                } else {
                                    max_gap(&base, &v).max(f64::MIN_POSITIVE)
                                }
                            }
                            AxiomRelation::Additivity { .. } => unreachable!(),
                        };
                        out.push(AxiomOutcome {
                            case: idx,
                            relation: case.relation.tag(),
                            solver,
                            k,
                            init,
                            passed: violation == 0.0,
                            violation,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_case {
        all.extend(r?);
    }
    Ok(all)
}

/// The FLID game reproduced by a benchmark row: `FlidGame::random` under the
/// stream `(seed, n, dims)`.
pub fn flid_instance(n: usize, dims: usize, seed: u64) -> Result<FlidGame> {
    FlidGame::random(n, dims, &mut stream_rng(seed, n, dims))
}

/// One method's score on one benchmark instance.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub dims: usize,
    pub seed: u64,
    pub method: &'static str,
    pub mse: f64,
    pub spearman: f64,
    pub kl: f64,
    pub converged_at: Option<usize>,
    /// Stepwise differences of the variational-index run (empty for the
    /// one-point methods).
    pub stepwise_diff: Vec<f64>,
}

pub const BENCH_MAX_STEPS: usize = 50;
pub const BENCH_TOL: f64 = 1e-12;

fn bench_instance(n: usize, dims: usize, seed: u64, t: f64) -> Result<Vec<BenchRow>> {
    let game = TabulatedGame::from_game(&flid_instance(n, dims, seed)?)?;
    let mut rows = Vec::with_capacity(3);
    let mut score =
        |method: &'static str, x: MarginalVector, converged_at, diffs: Vec<f64>| -> Result<()> {
            let fit = marginal_fit(&game, t, &x)?;
            rows.push(BenchRow {
                n,
                dims,
                seed,
                method,
                mse: fit.mse,
                spearman: fit.spearman_rho,
                kl: kl_decoupling_error(&game, t, &x)?,
                converged_at,
                stepwise_diff: diffs,
            });
            Ok(())
        };
    score(
        "shapley",
        squash(&shapley_exact(&game)?.values, t)?,
        None,
        Vec::new(),
    )?;
    score(
        "banzhaf",
        squash(&banzhaf(&game, BanzhafMode::Exact)?.values, t)?,
        None,
        Vec::new(),
    )?;
    let traj = run_to_convergence(&game, t, Init::Uniform(0.5), BENCH_TOL, BENCH_MAX_STEPS)?;
    score(
        "varindex",
        traj.last().clone(),
        traj.converged_at,
        traj.stepwise_diff.clone(),
    )?;
    Ok(rows)
}

/// Synthetic FLID comparison: for every `(n, D)` and `seeds` instances
/// (instance seeds `seed, seed+1, ..`), scores `σ(Shapley/T)`,
/// `σ(Banzhaf/T)` and the converged mean-field marginals against the exact
/// marginals. Rows come back ordered by `(n, D, seed, method)` regardless of
/// scheduling.
pub fn flid_benchmark(
    seed: u64,
    n_list: &[usize],
    d_list: &[usize],
    seeds: usize,
    t: f64,
) -> Result<Vec<BenchRow>> {
    if let Some(&n) = n_list.iter().find(|&&n| n == 0 || n > 12) {
        return input(format!("FLID benchmark sizes must lie in 1..=12, got {n}"));
    }
    let mut instances = Vec::new();
    for &n in n_list {
        for &d in d_list {
            for rep in 0..seeds as u64 {
                instances.push((n, d, seed.wrapping_add(rep)));
            }
        }
    }
    let results: Vec<Result<Vec<BenchRow>>> = instances
        .par_iter()
        .map(|&(n, d, s)| bench_instance(n, d, s, t))
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// CSV with columns `n, D, seed, method, mse, spearman, kl, converged_at`.
pub fn write_bench_csv<W: io::Write>(rows: &[BenchRow], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n",
        "D",
        "seed",
        "method",
        "mse",
        "spearman",
        "kl",
        "converged_at",
    ])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.dims.to_string(),
            r.seed.to_string(),
            r.method.to_string(),
            format_f64(r.mse),
            format_f64(r.spearman),
            format_f64(r.kl),
            r.converged_at.map_or(String::new(), |c| c.to_string()),
        ])?;
    }
    w.flush()
}
