//! Command-line front end: reads a problem file, runs the requested tests and writes a
//! deterministic JSON report.
//!
//! Exit codes: 0 when every requested test produced a verdict, 2 when any verdict is
//! inconclusive, 1 on input errors.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::estimate::{EstimatorConfig, NoiseMode};
use crate::oracle::{agreement, oracle_for};
use crate::poly::{Function, PolyJson};
use crate::tester::{
    test_convex_first_derivative, test_convex_jensen, test_convex_second_derivative, test_monotone, Direction,
    Grid, Method, Verdict, WeightVector, Witness,
};

pub const REPORT_SCHEMA: u32 = 1;
pub const SEED_ENV: &str = "QSHAPE_SEED";

#[derive(Parser, Debug)]
#[command(name = "qshape", version, about = "Block-encoding simulator for convexity and monotonicity tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one or more shape tests on a problem file.
    Test(TestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    SecondDeriv,
    FirstDeriv,
    Jensen,
    Monotone,
    /// The three convexity tests (Jensen only for multivariate input).
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Exact,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Inc,
    Dec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Args, Debug, Clone)]
pub struct TestArgs {
    /// Problem file (JSON, schema 1)
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long, value_enum, default_value = "all")]
    pub method: MethodArg,

    /// Number of points for a uniform grid (overrides the file)
    #[arg(long)]
    pub n: Option<usize>,

    /// Additive estimator accuracy
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,

    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_enum, default_value = "exact")]
    pub noise: NoiseArg,

    /// Direction for the monotonicity test
    #[arg(long, value_enum, default_value = "inc")]
    pub direction: DirectionArg,

    /// Write the report here instead of stdout
    #[arg(long)]
    pub report: Option<PathBuf>,

    #[arg(long = "oracle-check", value_enum, default_value = "on")]
    pub oracle_check: Switch,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputFile {
    schema: u32,
    poly: PolyJson,
    #[serde(default)]
    domain: Option<Vec<[f64; 2]>>,
    grid: GridSpec,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum GridSpec {
    Uniform { n: usize },
    Explicit { points: Vec<PointSpec> },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PointSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl PointSpec {
    fn into_vec(self) -> Vec<f64> {
        match self {
            PointSpec::Scalar(x) => vec![x],
            PointSpec::Vector(v) => v,
        }
    }
}

/// A parsed problem: the function in user coordinates and in grid coordinates.
#[derive(Debug, Clone)]
pub struct Problem {
    pub function: Function,
    pub remapped: Function,
    pub domain: Vec<(f64, f64)>,
    pub grid: Grid,
    pub weights: WeightVector,
    pub warnings: Vec<String>,
}

impl Problem {
    pub fn parse(text: &str, n_override: Option<usize>) -> Result<Self> {
        let input: InputFile = serde_json::from_str(text)?;
        if input.schema != REPORT_SCHEMA {
            return Err(Error::Input(format!("unsupported schema {}", input.schema)));
        }
        let function = Function::try_from(input.poly)?;
        let dim = function.dim();
        let domain: Vec<(f64, f64)> = match input.domain {
            Some(d) => d.into_iter().map(|[a, b]| (a, b)).collect(),
            None => vec![(-0.5, 0.5); dim],
        };
        if domain.len() != dim {
            return Err(Error::Input(format!("domain has {} axes, polynomial has {dim}", domain.len())));
        }
        let remapped = function.remap_domain(&domain)?;
        let mut warnings = Vec::new();
        let grid = match input.grid {
            GridSpec::Uniform { n } => Grid::uniform(n_override.unwrap_or(n), dim)?,
            GridSpec::Explicit { points } => {
                if n_override.is_some() {
                    warnings.push("--n ignored for an explicit grid".to_string());
                }
                let pts: Vec<Vec<f64>> = points.into_iter().map(PointSpec::into_vec).collect();
                Grid::from_user_points(&pts, &domain)?
            }
        }
        .with_source_domain(domain.clone());
        if grid.real_len() != grid.len() {
            warnings.push(format!(
                "{} points padded to {} by repeating the last point",
                grid.real_len(),
                grid.len()
            ));
        }
        let weights = match input.weights {
            Some(w) => WeightVector::new(w, &grid)?,
            None => WeightVector::uniform(&grid),
        };
        Ok(Self { function, remapped, domain, grid, weights, warnings })
    }
}

fn methods(arg: MethodArg, f: &Function) -> Vec<Method> {
    match arg {
        MethodArg::SecondDeriv => vec![Method::SecondDerivative],
        MethodArg::FirstDeriv => vec![Method::FirstDerivative],
        MethodArg::Jensen => vec![Method::Jensen],
        MethodArg::Monotone => vec![Method::Monotone],
        MethodArg::All => match f {
            Function::Uni(_) => vec![Method::SecondDerivative, Method::FirstDerivative, Method::Jensen],
            Function::Multi(_) => vec![Method::Jensen],
        },
    }
}

fn direction(arg: DirectionArg) -> Direction {
    match arg {
        DirectionArg::Inc => Direction::Increasing,
        DirectionArg::Dec => Direction::Decreasing,
    }
}

/// Runs one method on a parsed problem.
pub fn run_method(problem: &Problem, method: Method, dir: Direction, cfg: &EstimatorConfig) -> Result<Verdict> {
    let uni = || match &problem.remapped {
        Function::Uni(p) => Ok(p),
        Function::Multi(_) => Err(Error::Input(format!("{} needs a univariate polynomial", method.name()))),
    };
    match method {
        Method::SecondDerivative => test_convex_second_derivative(uni()?, &problem.grid, cfg),
        Method::FirstDerivative => test_convex_first_derivative(uni()?, &problem.grid, cfg),
        Method::Monotone => test_monotone(uni()?, &problem.grid, dir, cfg),
        Method::Jensen => test_convex_jensen(&problem.remapped, &problem.grid, &problem.weights, cfg),
    }
}

/// Query counts and depth of a verdict, with `n` so scaling can be read off across runs.
pub fn ledger_report(verdict: &Verdict) -> Value {
    json!({
        "n": verdict.n,
        "depth_units": verdict.ledger.depth_units(),
        "entries": verdict.ledger.entries(),
    })
}

fn witness_json(w: &Witness, grid: &Grid) -> Value {
    let mut v = serde_json::to_value(w).expect("witness serializes");
    let obj = v.as_object_mut().expect("tagged enum is an object");
    match w {
        Witness::Point { x, .. } => {
            obj.insert("x_user".into(), json!(grid.to_user(x)));
        }
        Witness::Pair { left, right, .. } => {
            obj.insert("left_user".into(), json!(grid.to_user(&[*left])[0]));
            obj.insert("right_user".into(), json!(grid.to_user(&[*right])[0]));
        }
        Witness::Jensen { combination, .. } => {
            obj.insert("combination_user".into(), json!(grid.to_user(combination)));
        }
    }
    v
}

fn method_report(
    problem: &Problem,
    verdict: &Verdict,
    cfg: &EstimatorConfig,
    dir: Direction,
    oracle_check: bool,
) -> Value {
    let mut r = Map::new();
    r.insert("schema".into(), json!(REPORT_SCHEMA));
    r.insert("method".into(), json!(verdict.method));
    r.insert("outcome".into(), json!(verdict.outcome));
    if let Some(reason) = &verdict.reason {
        r.insert("reason".into(), json!(reason));
    }
    r.insert("witness".into(), verdict.witness.as_ref().map_or(Value::Null, |w| witness_json(w, &problem.grid)));
    r.insert("estimates".into(), json!(verdict.estimates));
    r.insert("margin".into(), json!(verdict.margin));
    r.insert("band".into(), json!(verdict.band));
    r.insert("gap_flag".into(), json!(verdict.gap_flag));
    r.insert("scale".into(), json!(verdict.scale));
    let mut warnings = problem.warnings.clone();
    warnings.extend(verdict.warnings.iter().cloned());
    r.insert("warnings".into(), json!(warnings));
    r.insert(
        "grid".into(),
        json!({
            "n": problem.grid.len(),
            "real_points": problem.grid.real_len(),
            "dim": problem.grid.dim(),
            "domain": problem.domain.iter().map(|&(a, b)| [a, b]).collect::<Vec<_>>(),
            "semantics": verdict.grid_semantics,
        }),
    );
    r.insert(
        "config".into(),
        json!({ "eps": cfg.eps, "seed": cfg.seed, "noise": cfg.noise, "gap_threshold": cfg.gap_threshold }),
    );
    if verdict.method == crate::tester::Method::Monotone {
        r.insert("direction".into(), json!(dir));
    }
    r.insert("ledger".into(), ledger_report(verdict));
    if oracle_check {
        let oracle = oracle_for(verdict.method, &problem.remapped, &problem.grid, Some(&problem.weights), dir);
        match oracle {
            Some(o) => {
                r.insert("agreement".into(), json!(agreement(verdict.outcome, o.holds)));
                r.insert("oracle".into(), json!(o));
            }
            None => {
                r.insert("oracle".into(), Value::Null);
                r.insert("agreement".into(), Value::Null);
            }
        }
    }
    Value::Object(r)
}

/// Runs the `test` subcommand; returns the report and whether any verdict was inconclusive.
pub fn run_test(args: &TestArgs) -> Result<(Value, bool)> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", args.input.display())))?;
    let problem = Problem::parse(&text, args.n)?;
    let noise = match args.noise {
        NoiseArg::Exact => NoiseMode::Exact,
        NoiseArg::Uniform => NoiseMode::Uniform,
    };
    let cfg = EstimatorConfig::new(args.eps)?.with_seed(args.seed).with_noise(noise);
    let dir = direction(args.direction);
    let oracle_check = args.oracle_check == Switch::On;
    let mut reports = Vec::new();
    let mut inconclusive = false;
    for method in methods(args.method, &problem.function) {
        let verdict = run_method(&problem, method, dir, &cfg)?;
        inconclusive |= verdict.outcome.is_inconclusive();
        reports.push(method_report(&problem, &verdict, &cfg, dir, oracle_check));
    }
    let report = if args.method == MethodArg::All {
        json!({ "schema": REPORT_SCHEMA, "method": "all", "reports": reports })
    } else {
        reports.pop().expect("one method")
    };
    Ok((report, inconclusive))
}

/// Entry point shared by the binary and the tests.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Test(args) => match run_test(&args) {
            Ok((report, inconclusive)) => {
                let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
                match &args.report {
                    Some(path) => {
                        if let Err(e) = fs::write(path, text) {
                            eprintln!("error: cannot write {}: {e}", path.display());
                            return 1;
                        }
                    }
                    None => print!("{text}"),
                }
                if inconclusive {
                    2
                } else {
                    0
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
    }
}
