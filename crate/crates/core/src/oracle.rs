//! Brute-force classical reference for every test: derivative signs, consecutive
//! differences and exact Jensen sums evaluated directly at the grid points.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::poly::{Function, Poly};
use crate::tester::{Direction, Grid, Method, Outcome, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JensenPair {
    pub lhs: f64,
    pub rhs: f64,
    pub combination: Vec<f64>,
}

/// Convexity evidence at the real (unpadded) grid points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConvex {
    /// `min f''` and its argmin (univariate only).
    pub min_second: Option<Extremum>,
    /// `min f'(x_{i+1}) - f'(x_i)` over adjacent pairs (univariate, at least two points).
    pub min_difference: Option<Extremum>,
    /// Exact `f(Σ λ_i x_i)` and `Σ λ_i f(x_i)` when weights are given.
    pub jensen: Option<JensenPair>,
}

impl OracleConvex {
    pub fn second_holds(&self) -> Option<bool> {
        self.min_second.map(|e| e.value >= 0.0)
    }

    pub fn first_holds(&self) -> Option<bool> {
        self.min_difference.map(|e| e.value >= 0.0)
    }

    pub fn jensen_holds(&self) -> Option<bool> {
        self.jensen.as_ref().map(|j| j.lhs <= j.rhs)
    }
}

fn argmin_by<F: Fn(usize) -> f64>(len: usize, value: F) -> Option<Extremum> {
    (0..len)
        .map(|i| Extremum { value: value(i), index: i })
        .min_by(|a, b| a.value.total_cmp(&b.value))
}

/// Direct evaluation of the convexity conditions on the grid.
pub fn oracle_convex(f: &Function, grid: &Grid, w: Option<&WeightVector>) -> OracleConvex {
    let pts = grid.real_points();
    let (min_second, min_difference) = match f {
        Function::Uni(p) if grid.dim() == 1 => {
            let d1 = p.derivative(1);
            let d2 = p.derivative(2);
            let xs: Vec<f64> = pts.iter().map(|x| x[0]).collect();
            (
                argmin_by(xs.len(), |i| d2.eval(xs[i])),
                argmin_by(xs.len() - 1, |i| d1.eval(xs[i + 1]) - d1.eval(xs[i])),
            )
        }
        _ => (None, None),
    };
    let jensen = w.map(|w| {
        let combination = w.combination(grid);
        let rhs = grid.points().iter().zip(w.lambdas()).map(|(x, l)| l * f.eval(x)).sum();
        JensenPair { lhs: f.eval(&combination), rhs, combination }
    });
    OracleConvex { min_second, min_difference, jensen }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleMonotone {
    pub holds: bool,
    /// First grid point whose derivative has the wrong sign.
    pub witness: Option<usize>,
    /// Smallest derivative in the requested direction (`f'` or `-f'`).
    pub extremum: Extremum,
}

pub fn oracle_monotone(f: &Poly, grid: &Grid, direction: Direction) -> OracleMonotone {
    let d1 = f.derivative(1);
    let sign = match direction {
        Direction::Increasing => 1.0,
        Direction::Decreasing => -1.0,
    };
    let vals: Vec<f64> = grid.real_points().iter().map(|x| sign * d1.eval(x[0])).collect();
    let witness = vals.iter().position(|&v| v < 0.0);
    let extremum = argmin_by(vals.len(), |i| vals[i]).expect("grid has points");
    OracleMonotone { holds: witness.is_none(), witness, extremum }
}

/// Oracle result for one method, in a form suitable for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_index: Option<usize>,
    pub values: BTreeMap<String, f64>,
}

/// Runs the oracle matching `method`. Returns `None` when the method does not apply
/// (for example a derivative test on a multivariate function).
pub fn oracle_for(
    method: Method,
    f: &Function,
    grid: &Grid,
    weights: Option<&WeightVector>,
    direction: Direction,
) -> Option<OracleReport> {
    let mut values = BTreeMap::new();
    match method {
        Method::SecondDerivative => {
            let e = oracle_convex(f, grid, None).min_second?;
            values.insert("min_second_derivative".into(), e.value);
            Some(OracleReport { holds: e.value >= 0.0, witness_index: Some(e.index), values })
        }
        Method::FirstDerivative => {
            let e = oracle_convex(f, grid, None).min_difference?;
            values.insert("min_consecutive_difference".into(), e.value);
            Some(OracleReport { holds: e.value >= 0.0, witness_index: Some(e.index), values })
        }
        Method::Jensen => {
            let j = oracle_convex(f, grid, weights).jensen?;
            values.insert("lhs".into(), j.lhs);
            values.insert("rhs".into(), j.rhs);
            Some(OracleReport { holds: j.lhs <= j.rhs, witness_index: None, values })
        }
        Method::Monotone => {
            let Function::Uni(p) = f else { return None };
            if grid.dim() != 1 {
                return None;
            }
            let m = oracle_monotone(p, grid, direction);
            values.insert("min_oriented_derivative".into(), m.extremum.value);
            Some(OracleReport { holds: m.holds, witness_index: m.witness, values })
        }
    }
}

/// A verdict agrees with the oracle unless it asserts the opposite of what the oracle
/// finds; inconclusive verdicts never disagree.
pub fn agreement(outcome: Outcome, oracle_holds: bool) -> bool {
    outcome.holds().is_none_or(|h| h == oracle_holds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelfTest {
    pub checked: usize,
    pub failures: usize,
    pub max_rel_err: f64,
}

/// Compares exact first and second derivatives with central differences (step `1e-6`,
/// relative tolerance `1e-4`) at `samples` random (polynomial, point) pairs.
pub fn self_test(samples: usize, seed: u64) -> SelfTest {
    const H: f64 = 1e-6;
    const TOL: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SelfTest { checked: 0, failures: 0, max_rel_err: 0.0 };
    for _ in 0..samples {
        let deg = rng.random_range(0..=6usize);
        let p = Poly::new((0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect());
        let x: f64 = rng.random_range(-1.0..1.0);
        let d1 = p.derivative(1);
        let pairs = [
            (d1.eval(x), (p.eval(x + H) - p.eval(x - H)) / (2.0 * H), p.coefficient_sum()),
            (p.derivative(2).eval(x), (d1.eval(x + H) - d1.eval(x - H)) / (2.0 * H), d1.coefficient_sum()),
        ];
        for (exact, fd, scale) in pairs {
            // relative error, floored by the magnitude of the differenced function
            let rel = (exact - fd).abs() / exact.abs().max(scale).max(1e-300);
            out.max_rel_err = out.max_rel_err.max(rel);
            out.checked += 1;
            if rel > TOL {
                out.failures += 1;
            }
        }
    }
    out
}
