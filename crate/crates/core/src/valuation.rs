//! Valuation criteria built on the multilinear gradient.
//!
//! * Banzhaf: `∇f(0.5·1)`, i.e. one full-gradient step from `0.5·1`.
//! * Shapley: the factorial-weighted subset formula, or `∫₀¹ ∇f(t·1) dt` by
//!   Gauss–Legendre quadrature (exact with `⌈n/2⌉` nodes).
//! * K-step variational values: `T·σ⁻¹(x^(K))` after `K` full-gradient steps.
//! * Variational index: the same map applied at a converged iterate.

use serde_json::{json, Value};

use crate::ebm::kl_decoupling_error;
use crate::error::{input, Result};
use crate::game::{Coalition, Game};
use crate::multilinear::{check_dimension, exact_coordinate, GradientMode, MarginalVector};
use crate::numeric::{gauss_legendre_unit, per_player, ExactSum};
use crate::solver::{mfi_full_gradient, mfi_naive, Init, SolverConfig, Trajectory};
use crate::MAX_EXACT_PLAYERS;

/// Keeps `σ⁻¹` finite by clamping marginals into `[eps, 1 - eps]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogitClamp {
    eps: f64,
}

impl LogitClamp {
    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps < 0.5 {
            Ok(LogitClamp { eps })
        } else {
            input(format!("logit clamp must lie in (0, 0.5), got {eps}"))
        }
    }

    pub fn eps(self) -> f64 {
        self.eps
    }

    fn logit_of(self, x: f64) -> f64 {
        let x = x.clamp(self.eps, 1.0 - self.eps);
        (x / (1.0 - x)).ln()
    }

    /// Applies the same clamp to a logit that is already known, which is
    /// what clamping its sigmoid would do without the cancellation in `1 - x`.
    pub fn clamp_logit(self, z: f64) -> f64 {
        if z.is_nan() {
            return z;
        }
        z.clamp(self.logit_of(0.0), self.logit_of(1.0))
    }
}

impl Default for LogitClamp {
    fn default() -> Self {
        LogitClamp { eps: 1e-12 }
    }
}

/// Componentwise `log(x / (1 - x))` after clamping.
pub fn logit(x: &MarginalVector, clamp: LogitClamp) -> Vec<f64> {
    x.as_slice().iter().map(|&v| clamp.logit_of(v)).collect()
}

/// Which criterion produced a valuation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    ShapleyExact,
    ShapleyLine,
    Banzhaf,
    KStep,
    VarIndex,
    Probabilistic,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::ShapleyExact => "shapley",
            Method::ShapleyLine => "shapley-line",
            Method::Banzhaf => "banzhaf",
            Method::KStep => "kstep",
            Method::VarIndex => "varindex",
            Method::Probabilistic => "probabilistic",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub converged_at: Option<usize>,
    pub kl: Option<f64>,
    pub temperature: Option<f64>,
    /// Solver steps taken (or quadrature nodes for the Shapley line integral).
    pub steps: usize,
    /// Samples per gradient coordinate; zero when exact.
    pub samples: usize,
    pub seed: Option<u64>,
    /// False when the solver started from a non-uniform initializer, where
    /// the null-player/symmetry/marginalism guarantees are not established.
    pub uniform_init: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValuationVector {
    pub values: Vec<f64>,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl ValuationVector {
    fn new(values: Vec<f64>, method: Method) -> Self {
        ValuationVector {
            values,
            method,
            diagnostics: Diagnostics {
                uniform_init: true,
                ..Default::default()
            },
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `{"method", "n", "values", "diagnostics": {..}}`.
    pub fn to_json(&self) -> Value {
        let d = &self.diagnostics;
        json!({
            "method": self.method.tag(),
            "n": self.values.len(),
            "values": self.values,
            "diagnostics": {
                "converged_at": d.converged_at,
                "kl": d.kl,
                "temperature": d.temperature,
                "steps": d.steps,
                "samples": d.samples,
                "seed": d.seed,
                "uniform_init": d.uniform_init,
            }
        })
    }
}

/// How Banzhaf values are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BanzhafMode {
    Exact,
    Sampled { samples: usize, seed: u64 },
}

/// `φ_i = Σ_{S⊆N-i} [F(S+i) - F(S)] / 2^{n-1}`, the gradient at `0.5·1`.
pub fn banzhaf<G: Game + ?Sized>(game: &G, mode: BanzhafMode) -> Result<ValuationVector> {
    let grad_mode = match mode {
        BanzhafMode::Exact => GradientMode::Exact,
        BanzhafMode::Sampled { samples, seed } => GradientMode::MonteCarlo { samples, seed },
    };
    let half = MarginalVector::uniform(game.n(), 0.5)?;
    let est = grad_mode.estimate(game, &half, 0)?;
    let mut v = ValuationVector::new(est.g, Method::Banzhaf);
    v.diagnostics.samples = est.samples_per_coordinate;
    v.diagnostics.seed = grad_mode.seed();
    Ok(v)
}

/// `n·C(n-1, s)`, so that `1 / shapley_denominator(n, s) = s!(n-s-1)!/n!`.
fn shapley_denominator(n: usize, s: usize) -> f64 {
    let k = s.min(n - 1 - s);
    let mut c = 1.0f64;
    for j in 0..k {
        c = c * (n - 1 - j) as f64 / (j + 1) as f64;
    }
    n as f64 * c.round()
}

/// Shapley values from the subset formula with factorial weights.
pub fn shapley_exact<G: Game + ?Sized>(game: &G) -> Result<ValuationVector> {
    let n = game.n();
    game.players().require_exact()?;
    let values = per_player(n, 1 << n, |i| {
        let mut by_size = vec![ExactSum::new(); n];
        for mask in 0..(1u128 << n) {
            let s = Coalition(mask);
            if !s.contains(i) {
                by_size[s.len()].add(game.value(s.with(i)) - game.value(s));
            }
        }
        by_size
            .iter()
            .enumerate()
            .map(|(size, acc)| acc.value() / shapley_denominator(n, size))
            .collect::<ExactSum>()
            .value()
    });
    Ok(ValuationVector::new(values, Method::ShapleyExact))
}

/// Shapley values as the diagonal line integral of the gradient, using
/// `nodes` Gauss–Legendre points; exact when `nodes ≥ ⌈n/2⌉`.
pub fn shapley_line_integral<G: Game + ?Sized>(game: &G, nodes: usize) -> Result<ValuationVector> {
    shapley_line_integral_with(game, nodes, &GradientMode::Exact)
}

/// Line-integral Shapley values with any gradient backend.
pub fn shapley_line_integral_with<G: Game + ?Sized>(
    game: &G,
    nodes: usize,
    mode: &GradientMode,
) -> Result<ValuationVector> {
    if nodes == 0 {
        return input("the line integral needs at least one quadrature node");
    }
    mode.validate(game)?;
    let n = game.n();
    let rule = gauss_legendre_unit(nodes);
    let mut acc = vec![ExactSum::new(); n];
    for (k, &(t, w)) in rule.iter().enumerate() {
        let x = vec![t; n];
        for (a, g) in acc.iter_mut().zip(mode.gradient(game, &x, k)) {
            a.add(w * g);
        }
    }
    let mut v = ValuationVector::new(
        acc.iter().map(ExactSum::value).collect(),
        Method::ShapleyLine,
    );
    v.diagnostics.steps = nodes;
    v.diagnostics.samples = mode.samples_per_coordinate();
    v.diagnostics.seed = mode.seed();
    Ok(v)
}

/// Which fixed-point iteration drives a variational value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    FullGradient,
    Naive,
}

impl SolverKind {
    pub fn run<G: Game + ?Sized>(self, game: &G, config: &SolverConfig) -> Result<Trajectory> {
        match self {
            SolverKind::FullGradient => mfi_full_gradient(game, config),
            SolverKind::Naive => mfi_naive(game, config),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            SolverKind::FullGradient => "full-gradient",
            SolverKind::Naive => "naive",
        }
    }
}

/// `T·σ⁻¹` of the last iterate, clamped.
pub fn values_from_trajectory(traj: &Trajectory, clamp: LogitClamp) -> Vec<f64> {
    let t = traj.temperature;
    traj.last_logits()
        .iter()
        .map(|&z| t * clamp.clamp_logit(z))
        .collect()
}

fn from_trajectory(traj: &Trajectory, method: Method, config: &SolverConfig) -> ValuationVector {
    let mut v = ValuationVector::new(values_from_trajectory(traj, LogitClamp::default()), method);
    v.diagnostics.temperature = Some(traj.temperature);
    v.diagnostics.steps = traj.num_steps();
    v.diagnostics.converged_at = traj.converged_at;
    v.diagnostics.samples = config.grad_mode.samples_per_coordinate();
    v.diagnostics.seed = config.grad_mode.seed();
    v.diagnostics.uniform_init = config.init.is_uniform();
    v
}

/// K-step variational values `T·σ⁻¹(x^(K))` from the full-gradient iteration.
pub fn kstep_variational<G: Game + ?Sized>(
    game: &G,
    temperature: f64,
    init: Init,
    k: usize,
    grad_mode: GradientMode,
) -> Result<ValuationVector> {
    kstep_with_solver(
        game,
        SolverKind::FullGradient,
        temperature,
        init,
        k,
        grad_mode,
    )
}

/// K-step values with an explicit choice of solver.
pub fn kstep_with_solver<G: Game + ?Sized>(
    game: &G,
    solver: SolverKind,
    temperature: f64,
    init: Init,
    k: usize,
    grad_mode: GradientMode,
) -> Result<ValuationVector> {
    if k == 0 {
        return input("K-step values need K ≥ 1");
    }
    let config = SolverConfig::new(temperature)?
        .with_init(init)
        .with_steps(k)
        .with_tol(0.0)
        .with_mode(grad_mode);
    let traj = solver.run(game, &config)?;
    Ok(from_trajectory(&traj, Method::KStep, &config))
}

/// Variational index: `T·σ⁻¹` of the full-gradient iteration run to
/// convergence. Reports the exact KL decoupling error of the final marginals
/// when the game is small enough to enumerate.
pub fn variational_index<G: Game + ?Sized>(
    game: &G,
    temperature: f64,
    init: Init,
    tol: f64,
    max_steps: usize,
    grad_mode: GradientMode,
) -> Result<ValuationVector> {
    let config = SolverConfig::new(temperature)?
        .with_init(init)
        .with_steps(max_steps)
        .with_tol(tol)
        .with_mode(grad_mode);
    let traj = mfi_full_gradient(game, &config)?;
    let mut v = from_trajectory(&traj, Method::VarIndex, &config);
    if game.n() <= MAX_EXACT_PLAYERS {
        v.diagnostics.kl = Some(kl_decoupling_error(game, temperature, traj.last())?);
    }
    Ok(v)
}

/// `φ_i = Σ_{S⊆N-i} [F(S+i) - F(S)] q(S; x | x_i ← 0)`: the one-step value at
/// `x` viewed as a probabilistic value.
pub fn probabilistic_value<G: Game + ?Sized>(
    game: &G,
    x: &MarginalVector,
) -> Result<ValuationVector> {
    check_dimension(game, x)?;
    game.players().require_exact()?;
    let values = per_player(game.n(), 1 << game.n(), |i| {
        exact_coordinate(game, x.as_slice(), i)
    });
    Ok(ValuationVector::new(values, Method::Probabilistic))
}
