//! Mean-field fixed-point solvers.
//!
//! Both solvers iterate the equilibrium condition `x_i = σ(∂_i f(x) / T)`.
//! [`mfi_full_gradient`] updates every coordinate simultaneously from the
//! previous iterate; [`mfi_naive`] sweeps coordinates in index order, each
//! update seeing the freshest values.

use std::io;

use crate::ebm::{elbo, Temperature};
use crate::error::{input, Error, Result};
use crate::game::Game;
use crate::multilinear::{GradientMode, MarginalVector};
use crate::numeric::sigmoid;
use crate::MAX_EXACT_PLAYERS;

/// Starting marginals.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// `x·1`.
    Uniform(f64),
    Vector(MarginalVector),
}

impl Init {
    pub fn is_uniform(&self) -> bool {
        match self {
            Init::Uniform(_) => true,
            Init::Vector(v) => v.as_slice().windows(2).all(|w| w[0] == w[1]),
        }
    }

    pub fn resolve(&self, n: usize) -> Result<MarginalVector> {
        match self {
            Init::Uniform(v) => MarginalVector::uniform(n, *v),
            Init::Vector(v) if v.len() == n => Ok(v.clone()),
            Init::Vector(v) => input(format!(
                "initializer has {} entries for a {n}-player game",
                v.len()
            )),
        }
    }
}

impl Default for Init {
    fn default() -> Self {
        Init::Uniform(0.5)
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub temperature: Temperature,
    pub init: Init,
    pub max_steps: usize,
    /// Stop once the stepwise difference drops strictly below this.
    pub tol: f64,
    pub grad_mode: GradientMode,
    /// Record the exact ELBO of every iterate; needs an enumerable game.
    pub track_elbo: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            temperature: Temperature::default(),
            init: Init::default(),
            max_steps: 50,
            tol: 1e-12,
            grad_mode: GradientMode::Exact,
            track_elbo: false,
        }
    }
}

impl SolverConfig {
    pub fn new(temperature: f64) -> Result<Self> {
        Ok(SolverConfig {
            temperature: Temperature::new(temperature)?,
            ..Default::default()
        })
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_mode(mut self, mode: GradientMode) -> Self {
        self.grad_mode = mode;
        self
    }

    pub fn tracking_elbo(mut self, on: bool) -> Self {
        self.track_elbo = on;
        self
    }

    fn validate<G: Game + ?Sized>(&self, game: &G) -> Result<MarginalVector> {
        if let Init::Uniform(v) = self.init {
            if !(0.0..=1.0).contains(&v) {
                return input(format!("uniform initializer {v} lies outside [0, 1]"));
            }
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return input(format!("tolerance must be nonnegative, got {}", self.tol));
        }
        if self.track_elbo && game.n() > MAX_EXACT_PLAYERS {
            return Err(Error::Capacity {
                n: game.n(),
                max: MAX_EXACT_PLAYERS,
            });
        }
        self.grad_mode.validate(game)?;
        self.init.resolve(game.n())
    }
}

/// Iterates of one solver run with per-step diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub temperature: f64,
    /// `x^(0), x^(1), ..`; the first entry is the initializer.
    pub steps: Vec<MarginalVector>,
    /// Natural parameters `∂f/T` behind each iterate, kept so valuations need
    /// not invert a saturated sigmoid. Entry 0 holds the initializer's logits.
    pub logits: Vec<Vec<f64>>,
    /// `‖x^k - x^(k-1)‖² / n` for `k ≥ 1`.
    pub stepwise_diff: Vec<f64>,
    pub elbo_per_step: Option<Vec<f64>>,
    /// Naive solver only: ELBO after every single-coordinate update.
    pub coordinate_elbo: Option<Vec<f64>>,
    /// Index of the first iterate whose successor moved by less than `tol`.
    pub converged_at: Option<usize>,
}

impl Trajectory {
    fn start(temperature: f64, x0: MarginalVector) -> Self {
        let logits = x0
            .as_slice()
            .iter()
            .map(|&v| (v / (1.0 - v)).ln())
            .collect();
        Trajectory {
            temperature,
            steps: vec![x0],
            logits: vec![logits],
            stepwise_diff: Vec::new(),
            elbo_per_step: None,
            coordinate_elbo: None,
            converged_at: None,
        }
    }

    pub fn last(&self) -> &MarginalVector {
        self.steps
            .last()
            .expect("trajectory always holds the initializer")
    }

    pub fn last_logits(&self) -> &[f64] {
        self.logits
            .last()
            .expect("trajectory always holds the initializer")
    }

    /// Number of updates performed.
    pub fn num_steps(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }

    fn push(&mut self, x: MarginalVector, logits: Vec<f64>, tol: f64) -> bool {
        let prev = self.last().as_slice();
        let n = prev.len() as f64;
        let diff = prev
            .iter()
            .zip(x.as_slice())
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            / n;
        self.steps.push(x);
        self.logits.push(logits);
        self.stepwise_diff.push(diff);
        if diff < tol {
            self.converged_at = Some(self.steps.len() - 2);
            true
        } else {
            false
        }
    }

    /// CSV with columns `step, x_0..x_{n-1}, stepwise_diff, elbo`; empty
    /// cells where a value is not defined.
    pub fn write_csv<W: io::Write>(&self, out: W) -> io::Result<()> {
        let n = self.last().len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string()];
        header.extend((0..n).map(|i| format!("x_{i}")));
        header.push("stepwise_diff".into());
        header.push("elbo".into());
        w.write_record(&header)?;
        for (k, x) in self.steps.iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(x.as_slice().iter().map(|&v| crate::numeric::format_f64(v)));
            row.push(k.checked_sub(1).map_or(String::new(), |d| {
                crate::numeric::format_f64(self.stepwise_diff[d])
            }));
            row.push(
                self.elbo_per_step
                    .as_ref()
                    .map_or(String::new(), |e| crate::numeric::format_f64(e[k])),
            );
            w.write_record(&row)?;
        }
        w.flush()
    }
}

/// Full-gradient mean-field iteration: `x^(k) = σ(∇f(x^(k-1)) / T)` for up
/// to `max_steps` steps, stopping early once the stepwise difference falls
/// below `tol`.
pub fn mfi_full_gradient<G: Game + ?Sized>(game: &G, config: &SolverConfig) -> Result<Trajectory> {
    let x0 = config.validate(game)?;
    let t = config.temperature.get();
    let mut traj = Trajectory::start(t, x0);
    let mut elbos = config.track_elbo.then(Vec::new);
    if let Some(e) = elbos.as_mut() {
        e.push(elbo(game, t, traj.last())?);
    }
    for k in 1..=config.max_steps {
        let g = config.grad_mode.gradient(game, traj.last().as_slice(), k);
        let logits: Vec<f64> = g.iter().map(|gi| gi / t).collect();
        let x = MarginalVector::new(logits.iter().map(|&z| sigmoid(z)).collect())?;
        if let Some(e) = elbos.as_mut() {
            e.push(elbo(game, t, &x)?);
        }
        if traj.push(x, logits, config.tol) {
            break;
        }
    }
    traj.elbo_per_step = elbos;
    Ok(traj)
}

/// Naive mean field: each epoch updates `x_i ← σ(∂_i f(x) / T)` for
/// `i = 0..n` in order, each update using the freshest `x`. One iterate is
/// recorded per epoch.
pub fn mfi_naive<G: Game + ?Sized>(game: &G, config: &SolverConfig) -> Result<Trajectory> {
    let x0 = config.validate(game)?;
    let t = config.temperature.get();
    let n = game.n();
    let mut traj = Trajectory::start(t, x0);
    let mut elbos = config.track_elbo.then(Vec::new);
    let mut per_update = config.track_elbo.then(Vec::new);
    if let Some(e) = elbos.as_mut() {
        e.push(elbo(game, t, traj.last())?);
    }
    let mut x = traj.last().as_slice().to_vec();
    let mut logits = traj.last_logits().to_vec();
    for epoch in 1..=config.max_steps {
        for i in 0..n {
            let z = config.grad_mode.coordinate(game, &x, i, epoch) / t;
            logits[i] = z;
            x[i] = sigmoid(z);
            if let Some(u) = per_update.as_mut() {
                u.push(elbo(game, t, &MarginalVector::new(x.clone())?)?);
            }
        }
        let next = MarginalVector::new(x.clone())?;
        if let Some(e) = elbos.as_mut() {
            e.push(elbo(game, t, &next)?);
        }
        if traj.push(next, logits.clone(), config.tol) {
            break;
        }
    }
    traj.elbo_per_step = elbos;
    traj.coordinate_elbo = per_update;
    Ok(traj)
}

/// Exact full-gradient iteration until the stepwise difference drops below
/// `tol` or `max_steps` updates have run. Non-convergence is reported through
/// [`Trajectory::converged_at`], not as an error.
pub fn run_to_convergence<G: Game + ?Sized>(
    game: &G,
    temperature: f64,
    init: Init,
    tol: f64,
    max_steps: usize,
) -> Result<Trajectory> {
    let config = SolverConfig::new(temperature)?
        .with_init(init)
        .with_tol(tol)
        .with_steps(max_steps);
    mfi_full_gradient(game, &config)
}

/// `‖x - σ(∇f(x)/T)‖_∞` under the exact gradient.
pub fn fixed_point_residual<G: Game + ?Sized>(
    game: &G,
    temperature: f64,
    x: &MarginalVector,
) -> Result<f64> {
    let g = crate::multilinear::mt_gradient_exact(game, x)?;
    Ok(g.g
        .iter()
        .zip(x.as_slice())
        .map(|(gi, xi)| (xi - sigmoid(gi / temperature)).abs())
        .fold(0.0, f64::max))
}
