//! The `varindex` command line.
//!
//! Exit codes: 0 success, 1 failed axiom check, 2 usage error, 3 game too
//! large for exact enumeration, 4 unreadable or malformed input.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use varindex_core::ebm::summarize;
use varindex_core::harness::{
    check_axioms, flid_benchmark, flid_instance, gen_axiom_suite, removal_curve, write_bench_csv,
    AxiomCheck, Direction,
};
use varindex_core::multilinear::{build_oneshot_cache, sample_count_for};
use varindex_core::report::to_json_string;
use varindex_core::valuation::{
    banzhaf, kstep_variational, shapley_exact, shapley_line_integral_with, variational_index,
    BanzhafMode, SolverKind,
};
use varindex_core::{
    Error, Game, GameSpec, GradientMode, Init, MarginalVector, Reweighting, ValuationVector,
    MAX_EXACT_PLAYERS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_AXIOM_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_INPUT: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "varindex",
    version,
    about = "Energy-based valuation of cooperative games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute a valuation vector.
    Value(ValueArgs),
    /// Exact log-partition and marginals of the energy-based model.
    Marginals(MarginalsArgs),
    /// Payoff of the surviving coalition as players are removed by value.
    RemovalCurve(RemovalArgs),
    /// Generate a random FLID game description.
    FlidGen(FlidGenArgs),
    /// Run a benchmark sweep.
    Bench(BenchArgs),
    /// Check the axioms on randomly generated games.
    Axioms(AxiomArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MethodArg {
    Shapley,
    ShapleyLine,
    Banzhaf,
    Kstep,
    Varindex,
}

#[derive(Args, Debug)]
struct ValuationOpts {
    /// Game description (JSON).
    #[arg(long)]
    game: PathBuf,
    #[arg(long, value_enum, default_value = "varindex")]
    method: MethodArg,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Solver steps: K for kstep, the step cap for varindex.
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Initial marginal, either one value for all players or a comma list.
    #[arg(long, default_value = "0.5")]
    init: String,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Enumerate all coalitions (the default when n ≤ 25).
    #[arg(long, conflicts_with_all = ["samples", "one_shot"])]
    exact: bool,
    /// Fresh Monte-Carlo samples per gradient coordinate.
    #[arg(long, conflicts_with = "one_shot")]
    samples: Option<usize>,
    /// Reuse M uniform draws per player, reweighted at every step.
    #[arg(long = "one-shot", value_name = "M")]
    one_shot: Option<usize>,
    /// Self-normalize the one-shot importance weights.
    #[arg(long, requires = "one_shot")]
    self_normalized: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ValueArgs {
    #[command(flatten)]
    opts: ValuationOpts,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MarginalsArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Point at which to report the ELBO and KL decoupling error.
    #[arg(long, value_delimiter = ',')]
    at: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DirectionArg {
    Desc,
    Asc,
}

#[derive(Args, Debug)]
struct RemovalArgs {
    #[command(flatten)]
    opts: ValuationOpts,
    #[arg(long, value_enum, default_value = "desc")]
    direction: DirectionArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FlidGenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Suite {
    Flid,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "flid")]
    suite: Suite,
    #[arg(long, value_delimiter = ',', default_value = "6,8,10")]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "4,8")]
    d: Vec<usize>,
    /// Instances per (n, D).
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// First instance seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SolverArg {
    Full,
    Naive,
    Both,
}

#[derive(Args, Debug)]
struct AxiomArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    n: usize,
    /// Generated games per axiom.
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Solver(s) whose K-step values are checked.
    #[arg(long, value_enum, default_value = "full")]
    solver: SolverArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Input(_) => EXIT_USAGE,
            Error::Capacity { .. } => EXIT_CAPACITY,
            Error::Parse(_) => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: format!("{}: {e}", path.display()),
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type Outcome = std::result::Result<i32, Failure>;

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Errors are reported on standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Value(a) => cmd_value(a),
        Command::Marginals(a) => cmd_marginals(a),
        Command::RemovalCurve(a) => cmd_removal(a),
        Command::FlidGen(a) => cmd_flid_gen(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Axioms(a) => cmd_axioms(a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> std::result::Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| io_failure(Path::new("<stdout>"), e))
        }
    }
}

fn load_game(path: &Path) -> std::result::Result<Box<dyn Game>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let spec = GameSpec::from_json(&text).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(spec.build()?)
}

fn parse_init(text: &str, n: usize) -> std::result::Result<Init, Failure> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| usage(format!("--init {text}: {e}")))?;
    match parts.as_slice() {
        [x] => Ok(Init::Uniform(*x)),
        _ if parts.len() == n => Ok(Init::Vector(MarginalVector::new(parts)?)),
        _ => Err(usage(format!(
            "--init has {} entries for a {n}-player game",
            parts.len()
        ))),
    }
}

fn gradient_mode(
    opts: &ValuationOpts,
    game: &dyn Game,
) -> std::result::Result<GradientMode, Failure> {
    let n = game.n();
    if opts.exact {
        game.players().require_exact()?;
        return Ok(GradientMode::Exact);
    }
    if let Some(m) = opts.one_shot {
        let reweighting = if opts.self_normalized {
            Reweighting::SelfNormalized
        } else {
            Reweighting::Plain
        };
        let cache = build_oneshot_cache(game, m, opts.seed)?.with_reweighting(reweighting);
        return Ok(GradientMode::OneShot(Arc::new(cache)));
    }
    if let Some(samples) = opts.samples {
        return Ok(GradientMode::MonteCarlo {
            samples,
            seed: opts.seed,
        });
    }
    if n <= MAX_EXACT_PLAYERS {
        Ok(GradientMode::Exact)
    } else {
        Ok(GradientMode::MonteCarlo {
            samples: sample_count_for(0.05, 0.01)?,
            seed: opts.seed,
        })
    }
}

fn valuation(
    opts: &ValuationOpts,
    game: &dyn Game,
) -> std::result::Result<ValuationVector, Failure> {
    let mode = gradient_mode(opts, game)?;
    let init = parse_init(&opts.init, game.n())?;
    let t = opts.temperature;
    let v = match opts.method {
        MethodArg::Shapley => {
            if !matches!(mode, GradientMode::Exact) {
                return Err(usage(
                    "shapley is exact only; use shapley-line with sampling",
                ));
            }
            shapley_exact(game)?
        }
        MethodArg::ShapleyLine => {
            shapley_line_integral_with(game, game.n().div_ceil(2).max(1), &mode)?
        }
        MethodArg::Banzhaf => match mode {
            GradientMode::Exact => banzhaf(game, BanzhafMode::Exact)?,
            GradientMode::MonteCarlo { samples, seed } => {
                banzhaf(game, BanzhafMode::Sampled { samples, seed })?
            }
            GradientMode::OneShot(_) => {
                return Err(usage(
                    "banzhaf supports --exact or --samples, not --one-shot",
                ))
            }
        },
        MethodArg::Kstep => kstep_variational(game, t, init, opts.steps, mode)?,
        MethodArg::Varindex => variational_index(game, t, init, opts.tol, opts.steps, mode)?,
    };
    Ok(v)
}

fn cmd_value(a: ValueArgs) -> Outcome {
    let game = load_game(&a.opts.game)?;
    let v = valuation(&a.opts, game.as_ref())?;
    emit(a.out.as_deref(), &(to_json_string(&v.to_json()) + "\n"))?;
    Ok(EXIT_OK)
}

fn cmd_marginals(a: MarginalsArgs) -> Outcome {
    let game = load_game(&a.game)?;
    let at = a.at.map(MarginalVector::new).transpose()?;
    if let Some(x) = &at {
        if x.len() != game.n() {
            return Err(usage(format!(
                "--at has {} entries for a {}-player game",
                x.len(),
                game.n()
            )));
        }
    }
    let s = summarize(game.as_ref(), a.temperature, at.as_ref())?;
    let doc = json!({
        "n": game.n(),
        "temperature": s.temperature,
        "log_partition": s.log_partition,
        "true_marginals": s.true_marginals,
        "at": at.as_ref().map(|x| x.as_slice().to_vec()),
        "elbo": s.elbo_at.map(|(_, v)| v),
        "kl": s.kl_at.map(|(_, v)| v),
    });
    emit(a.out.as_deref(), &(to_json_string(&doc) + "\n"))?;
    Ok(EXIT_OK)
}

fn cmd_removal(a: RemovalArgs) -> Outcome {
    let game = load_game(&a.opts.game)?;
    let v = valuation(&a.opts, game.as_ref())?;
    let dir = match a.direction {
        DirectionArg::Desc => Direction::Desc,
        DirectionArg::Asc => Direction::Asc,
    };
    let curve = removal_curve(game.as_ref(), &v.values, dir)?;
    let mut buf = Vec::new();
    curve
        .write_csv(&mut buf)
        .map_err(|e| io_failure(Path::new("<csv>"), e))?;
    emit(a.out.as_deref(), &String::from_utf8_lossy(&buf))?;
    Ok(EXIT_OK)
}

fn cmd_flid_gen(a: FlidGenArgs) -> Outcome {
    let game = flid_instance(a.n, a.d, a.seed)?;
    emit(a.out.as_deref(), &(to_json_string(&game.to_spec()) + "\n"))?;
    Ok(EXIT_OK)
}

fn cmd_bench(a: BenchArgs) -> Outcome {
    let Suite::Flid = a.suite;
    let rows = flid_benchmark(a.seed, &a.n, &a.d, a.seeds, a.temperature)?;
    let mut buf = Vec::new();
    write_bench_csv(&rows, &mut buf).map_err(|e| io_failure(Path::new("<csv>"), e))?;
    emit(a.out.as_deref(), &String::from_utf8_lossy(&buf))?;
    Ok(EXIT_OK)
}

fn cmd_axioms(a: AxiomArgs) -> Outcome {
    let cases = gen_axiom_suite(a.seed, a.n, a.count)?;
    let solvers = match a.solver {
        SolverArg::Full => vec![SolverKind::FullGradient],
        SolverArg::Naive => vec![SolverKind::Naive],
        SolverArg::Both => vec![SolverKind::FullGradient, SolverKind::Naive],
    };
    let check = AxiomCheck {
        temperature: a.temperature,
        solvers: solvers.clone(),
        ..AxiomCheck::default()
    };
    let outcomes = check_axioms(&cases, &check)?;

    let mut table = String::from("relation\tsolver\tchecks\tfailures\tmax_violation\tstatus\n");
    let mut any_failed = false;
    for relation in ["null-player", "symmetry", "marginalism", "additivity"] {
        for solver in [SolverKind::FullGradient, SolverKind::Naive] {
            let group: Vec<_> = outcomes
                .iter()
                .filter(|o| o.relation == relation && o.solver == solver)
                .collect();
            if group.is_empty() {
                continue;
            }
            let failures = group.iter().filter(|o| !o.passed).count();
            let worst = group.iter().map(|o| o.violation).fold(0.0, f64::max);
            any_failed |= failures > 0;
            table.push_str(&format!(
                "{relation}\t{}\t{}\t{failures}\t{worst:.3e}\t{}\n",
                solver.tag(),
                group.len(),
                if failures == 0 { "PASS" } else { "FAIL" }
            ));
        }
    }
    emit(a.out.as_deref(), &table)?;
    Ok(if any_failed {
        EXIT_AXIOM_FAILURE
    } else {
        EXIT_OK
    })
}
