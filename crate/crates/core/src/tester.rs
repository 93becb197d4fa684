//! End-to-end shape tests: second-derivative, first-derivative, Jensen and monotonicity
//! pipelines, each returning a margin-aware [`Verdict`].
//!
//! Every pipeline first rescales `f` by `s = 2 * certified_sup` so that thresholds act on
//! normalized encodings; outcomes are therefore invariant under positive scaling of `f`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::blockenc::{
    apply_block, diag_from_column, diag_from_state, encode_state, hadamard_layer, lcu,
    normalize_subnormalization, product, range_projector, scale_down, shift_difference, BlockEnc,
    ResourceLedger, Sign, StatePrep, DEFAULT_AMPLIFICATION_EPS,
};
use crate::error::{Error, Result};
use crate::estimate::{amplitude_estimate, largest_eigenvalue, overlap_gadget, EigenEstimate, EstimatorConfig};
use crate::poly::{Bounds, Function, MultiPoly, Poly};
use crate::qsvt::{normalizers, transform};

pub const GRID_SEMANTICS: &str = "evidence at sampled points";
/// Default cap on any single exponent in the multivariate construction.
pub const DEFAULT_DEGREE_CAP: u32 = 16;
const COORD_TOL: f64 = 1e-12;

/// Sample points in `[-1/2, 1/2]^dim`, padded to a power of two by repeating the last point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    points: Vec<Vec<f64>>,
    dim: usize,
    real_len: usize,
    source_domain: Option<Vec<(f64, f64)>>,
}

impl Grid {
    /// Validates coordinates and pads to the next power of two.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::Grid("no points".into()))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Grid("points must have at least one coordinate".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::Grid(format!("mixed point dimensions {} and {dim}", p.len())));
            }
            if let Some(c) = p.iter().find(|c| !(c.abs() <= 0.5 + COORD_TOL)) {
                return Err(Error::Grid(format!("coordinate {c} outside [-1/2, 1/2]")));
            }
        }
        let real_len = points.len();
        if real_len < 2 {
            return Err(Error::Grid("at least two points are required".into()));
        }
        let mut points: Vec<Vec<f64>> =
            points.into_iter().map(|p| p.into_iter().map(|c| c.clamp(-0.5, 0.5)).collect()).collect();
        let last = points[real_len - 1].clone();
        points.resize(real_len.next_power_of_two(), last);
        Ok(Self { points, dim, real_len, source_domain: None })
    }

    pub fn from_univariate(xs: &[f64]) -> Result<Self> {
        Self::from_points(xs.iter().map(|&x| vec![x]).collect())
    }

    /// Inclusive uniform grid: `n` points per line in 1-D, or a tensor grid with
    /// `round(n^(1/dim))` points per axis.
    pub fn uniform(n: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Grid("dimension must be positive".into()));
        }
        let per_axis = if dim == 1 { n } else { (n as f64).powf(1.0 / dim as f64).round() as usize };
        if per_axis < 2 {
            return Err(Error::Grid(format!("uniform grid needs at least 2 points per axis, got {per_axis}")));
        }
        let line: Vec<f64> = (0..per_axis).map(|i| -0.5 + i as f64 / (per_axis - 1) as f64).collect();
        let total = per_axis.checked_pow(dim as u32).ok_or_else(|| Error::Grid("grid too large".into()))?;
        let points = (0..total)
            .map(|mut idx| {
                (0..dim)
                    .map(|_| {
                        let c = line[idx % per_axis];
                        idx /= per_axis;
                        c
                    })
                    .collect()
            })
            .collect();
        Self::from_points(points)
    }

    /// Maps points given in user coordinates through `t = (x - c) / w` per axis.
    pub fn from_user_points(points: &[Vec<f64>], domain: &[(f64, f64)]) -> Result<Self> {
        let mapped = points
            .iter()
            .map(|p| {
                if p.len() != domain.len() {
                    return Err(Error::Grid(format!("point has {} coordinates, domain has {}", p.len(), domain.len())));
                }
                Ok(p.iter()
                    .zip(domain)
                    .map(|(&x, &(a, b))| (x - 0.5 * (a + b)) / (b - a))
                    .collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Self::from_points(mapped)
    }

    pub fn with_source_domain(mut self, domain: Vec<(f64, f64)>) -> Self {
        self.source_domain = Some(domain);
        self
    }

    pub fn source_domain(&self) -> Option<&[(f64, f64)]> {
        self.source_domain.as_deref()
    }

    /// Padded length (a power of two).
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points before padding.
    pub fn real_len(&self) -> usize {
        self.real_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn real_points(&self) -> &[Vec<f64>] {
        &self.points[..self.real_len]
    }

    /// Coordinate `axis` of every (padded) point.
    pub fn axis(&self, axis: usize) -> Vec<f64> {
        self.points.iter().map(|p| p[axis]).collect()
    }

    /// Maps a grid coordinate back to the user domain, when one was recorded.
    pub fn to_user(&self, point: &[f64]) -> Vec<f64> {
        match &self.source_domain {
            Some(d) => point.iter().zip(d).map(|(&t, &(a, b))| 0.5 * (a + b) + (b - a) * t).collect(),
            None => point.to_vec(),
        }
    }

    fn require_univariate(&self) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::Grid(format!("test needs a univariate grid, got dimension {}", self.dim)));
        }
        Ok(self.axis(0))
    }

    fn require_increasing(&self) -> Result<Vec<f64>> {
        let xs = self.require_univariate()?;
        if xs[..self.real_len].windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Grid("points must be strictly increasing".into()));
        }
        Ok(xs)
    }
}

/// Convex weights over the padded grid (padded entries are zero).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    lambdas: Vec<f64>,
}

impl WeightVector {
    /// Accepts weights for the real points (padded with zeros) or for the padded grid.
    pub fn new(lambdas: Vec<f64>, grid: &Grid) -> Result<Self> {
        let mut lambdas = lambdas;
        if lambdas.len() == grid.real_len() {
            lambdas.resize(grid.len(), 0.0);
        } else if lambdas.len() != grid.len() {
            return Err(Error::Weights(format!(
                "{} weights for {} grid points",
                lambdas.len(),
                grid.real_len()
            )));
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
            return Err(Error::Weights(format!("negative or non-finite weight {l}")));
        }
        let sum: f64 = lambdas.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Weights(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self { lambdas })
    }

    pub fn uniform(grid: &Grid) -> Self {
        let r = grid.real_len();
        let mut lambdas = vec![1.0 / r as f64; r];
        lambdas.resize(grid.len(), 0.0);
        Self { lambdas }
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// `Σ λ_i x_i` in grid coordinates.
    pub fn combination(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.dim())
            .map(|a| grid.points().iter().zip(&self.lambdas).map(|(p, l)| l * p[a]).sum())
            .collect()
    }

    fn sqrt_state(&self) -> Result<StatePrep> {
        let amps: Vec<f64> = self.lambdas.iter().map(|l| l.sqrt()).collect();
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        encode_state(&amps.iter().map(|a| a / norm).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "inc")]
    Increasing,
    #[serde(rename = "dec")]
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "second-deriv")]
    SecondDerivative,
    #[serde(rename = "first-deriv")]
    FirstDerivative,
    #[serde(rename = "jensen")]
    Jensen,
    #[serde(rename = "monotone")]
    Monotone,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::SecondDerivative => "second-deriv",
            Method::FirstDerivative => "first-deriv",
            Method::Jensen => "jensen",
            Method::Monotone => "monotone",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    ConvexOnGrid,
    NotConvex,
    MonotoneIncreasing,
    MonotoneDecreasing,
    NotMonotone,
    Inconclusive,
}

impl Outcome {
    pub fn is_inconclusive(self) -> bool {
        self == Outcome::Inconclusive
    }

    /// Whether the tested property holds (`None` when inconclusive).
    pub fn holds(self) -> Option<bool> {
        match self {
            Outcome::ConvexOnGrid | Outcome::MonotoneIncreasing | Outcome::MonotoneDecreasing => Some(true),
            Outcome::NotConvex | Outcome::NotMonotone => Some(false),
            Outcome::Inconclusive => None,
        }
    }
}

/// Directly checkable evidence against the tested property. Coordinates are grid
/// coordinates in `[-1/2, 1/2]`; values refer to the normalized polynomial `f / s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Grid point where `f''` (or `f'`) has the offending sign.
    Point { index: usize, x: Vec<f64>, value: f64 },
    /// Adjacent points where `f'` decreases.
    Pair { index: usize, left: f64, right: f64, difference: f64 },
    /// Weighted combination violating Jensen's inequality.
    Jensen { combination: Vec<f64>, lhs: f64, rhs: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub method: Method,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Evidence for the reported outcome (the extremal point or pair, or the Jensen pair).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub estimates: BTreeMap<String, f64>,
    /// Signed distance of the estimate from the decision threshold, positive when the
    /// property holds, in the units of the estimated quantity.
    pub margin: f64,
    /// Half-width of the inconclusive band around the threshold.
    pub band: f64,
    pub gap_flag: bool,
    pub warnings: Vec<String>,
    pub ledger: ResourceLedger,
    /// Output scale `s` with `f / s` the normalized polynomial.
    pub scale: f64,
    pub n: usize,
    pub real_points: usize,
    pub grid_semantics: &'static str,
}

impl Verdict {
    fn new(method: Method, grid: &Grid, scale: f64) -> Self {
        Self {
            method,
            outcome: Outcome::Inconclusive,
            reason: None,
            witness: None,
            estimates: BTreeMap::new(),
            margin: 0.0,
            band: 0.0,
            gap_flag: false,
            warnings: Vec::new(),
            ledger: ResourceLedger::new(),
            scale,
            n: grid.len(),
            real_points: grid.real_len(),
            grid_semantics: GRID_SEMANTICS,
        }
    }

    fn inconclusive(mut self, reason: impl Into<String>) -> Self {
        self.outcome = Outcome::Inconclusive;
        self.reason = Some(reason.into());
        self
    }

    /// Applies the threshold rule: the property holds when `margin > band`, fails when
    /// `margin < -band`, and is inconclusive in between.
    fn decide(&mut self, margin: f64, band: f64, holds: Outcome, fails: Outcome) {
        self.margin = margin;
        self.band = band;
        self.outcome = if margin > band {
            holds
        } else if margin < -band {
            fails
        } else {
            self.reason = Some(format!("estimate within ±{band:e} of the threshold"));
            Outcome::Inconclusive
        };
    }

    fn record_eigen(&mut self, est: &EigenEstimate, cfg: &EstimatorConfig) {
        self.estimates.insert("lambda_max".into(), est.estimate);
        self.estimates.insert("lambda_second".into(), est.second);
        self.gap_flag = est.gap_flag;
        if est.gap_flag {
            self.warnings.push(format!(
                "top eigenvalue gap {:e} below {}; the estimator's gap assumption does not hold",
                est.exact - est.second,
                cfg.gap_threshold
            ));
        }
        self.ledger = est.ledger.clone();
    }
}

/// Encoding of `diag(v)` with `alpha = 1`: amplitude-encode `v / ‖v‖`, build the diagonal,
/// and remove the `1/‖v‖` factor by scaling or uniform amplification.
pub fn encode_grid_axis(values: &[f64]) -> Result<BlockEnc> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return BlockEnc::zero(values.len());
    }
    let unit: Vec<f64> = values.iter().map(|v| v / norm).collect();
    let e = diag_from_state(&encode_state(&unit)?)?;
    normalize_subnormalization(&e, norm, 1.0, DEFAULT_AMPLIFICATION_EPS)
}

/// Per-axis encodings of the grid coordinates.
pub fn encode_grid(grid: &Grid) -> Result<Vec<BlockEnc>> {
    (0..grid.dim()).map(|a| encode_grid_axis(&grid.axis(a))).collect()
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// `(I - M) / 2` for a unit-subnormalized diagonal `M`.
fn shifted_half(m: &BlockEnc, sign: Sign) -> Result<BlockEnc> {
    lcu(&[&BlockEnc::identity(m.dim())?, m], &[Sign::Plus, sign])
}

/// Second-derivative test: the largest eigenvalue of `(I - M2)/2` is compared with 1/2.
pub fn test_convex_second_derivative(f: &Poly, grid: &Grid, cfg: &EstimatorConfig) -> Result<Verdict> {
    let xs = grid.require_univariate()?;
    let (q, s) = f.normalize_output();
    let mut v = Verdict::new(Method::SecondDerivative, grid, s);
    if q.degree() < 2 {
        return Ok(v.inconclusive("second derivative vanishes identically (degree below 2)"));
    }
    let norms = normalizers(&Bounds::univariate(&q));
    let grid_enc = encode_grid_axis(&xs)?;
    let d2 = q.derivative(2);
    let m2 = transform(&grid_enc, &d2.scale(1.0 / norms.q_norm))?;
    let est = largest_eigenvalue(&shifted_half(&m2, Sign::Minus)?, &cfg.fork(1))?;
    v.record_eigen(&est, cfg);
    v.estimates.insert("q_norm".into(), norms.q_norm);
    v.decide(0.5 - est.estimate, 2.0 * cfg.eps, Outcome::ConvexOnGrid, Outcome::NotConvex);

    let vals: Vec<f64> = xs[..grid.real_len()].iter().map(|&x| d2.eval(x)).collect();
    let i = argmin(&vals);
    v.witness = Some(Witness::Point { index: i, x: vec![xs[i]], value: vals[i] });
    Ok(v)
}

/// Encoding of `(1 / sqrt(n)) M3'`, where `M3'` holds the normalized consecutive
/// differences `(f'(x_{i+1}) - f'(x_i)) / P` and the neutral value `+1` on the masked
/// entries (the wrap-around pair and any padding).
pub fn build_m3(f: &Poly, grid: &Grid) -> Result<BlockEnc> {
    let xs = grid.require_increasing()?;
    let n = grid.len();
    let norms = normalizers(&Bounds::univariate(f));
    let grid_enc = encode_grid_axis(&xs)?;
    let m1 = transform(&grid_enc, &f.derivative(1).scale(1.0 / norms.p_norm))?;
    // first column of L M1 H is (M1[i+1] - M1[i]) / sqrt(n); L carries subnormalization 2
    let spread = product(&m1, &hadamard_layer(n)?)?;
    let diff = product(&shift_difference(n)?, &spread)?;
    let d_unit = diag_from_column(&diff, 0)?.unit_view();
    let root_n = (n as f64).sqrt();

    let mask = range_projector(grid.real_len(), n, n)?;
    let keep = lcu(&[&BlockEnc::identity(n)?, &mask], &[Sign::Plus, Sign::Minus])?;
    let kept = product(&d_unit, &keep)?;
    let neutral = scale_down(&mask, 4.0 * root_n)?;
    let combined = lcu(&[&kept, &neutral], &[Sign::Plus, Sign::Plus])?;
    normalize_subnormalization(&combined, 8.0, 1.0, DEFAULT_AMPLIFICATION_EPS)
}

/// First-derivative test on `(I - M3') / (2 sqrt(n))` with threshold `1 / (2 sqrt(n))`.
pub fn test_convex_first_derivative(f: &Poly, grid: &Grid, cfg: &EstimatorConfig) -> Result<Verdict> {
    let xs = grid.require_increasing()?;
    let (q, s) = f.normalize_output();
    let mut v = Verdict::new(Method::FirstDerivative, grid, s);
    if q.degree() < 1 {
        return Ok(v.inconclusive("first derivative vanishes identically (constant polynomial)"));
    }
    let n = grid.len();
    let root_n = (n as f64).sqrt();
    let m3 = build_m3(&q, grid)?;
    let id = scale_down(&BlockEnc::identity(n)?, root_n)?;
    let shifted = lcu(&[&id, &m3], &[Sign::Plus, Sign::Minus])?;
    let eps_prime = cfg.eps / (2.0 * root_n);
    let est = largest_eigenvalue(&shifted, &cfg.fork(2).with_eps(eps_prime))?;
    v.record_eigen(&est, cfg);
    v.estimates.insert("threshold".into(), 1.0 / (2.0 * root_n));
    v.decide(1.0 / (2.0 * root_n) - est.estimate, 2.0 * eps_prime, Outcome::ConvexOnGrid, Outcome::NotConvex);

    let d1 = q.derivative(1);
    let r = grid.real_len();
    let diffs: Vec<f64> = (0..r - 1).map(|i| d1.eval(xs[i + 1]) - d1.eval(xs[i])).collect();
    let i = argmin(&diffs);
    v.witness = Some(Witness::Pair { index: i, left: xs[i], right: xs[i + 1], difference: diffs[i] });
    Ok(v)
}

/// Monotonicity test: the largest eigenvalue of `(I ∓ M1)/2` is compared with 1/2.
pub fn test_monotone(f: &Poly, grid: &Grid, direction: Direction, cfg: &EstimatorConfig) -> Result<Verdict> {
    let xs = grid.require_univariate()?;
    let (q, s) = f.normalize_output();
    let mut v = Verdict::new(Method::Monotone, grid, s);
    if q.degree() < 1 {
        return Ok(v.inconclusive("first derivative vanishes identically (constant polynomial)"));
    }
    let norms = normalizers(&Bounds::univariate(&q));
    let grid_enc = encode_grid_axis(&xs)?;
    let d1 = q.derivative(1);
    let m1 = transform(&grid_enc, &d1.scale(1.0 / norms.p_norm))?;
    let (sign, holds) = match direction {
        Direction::Increasing => (Sign::Minus, Outcome::MonotoneIncreasing),
        Direction::Decreasing => (Sign::Plus, Outcome::MonotoneDecreasing),
    };
    let est = largest_eigenvalue(&shifted_half(&m1, sign)?, &cfg.fork(3))?;
    v.record_eigen(&est, cfg);
    v.estimates.insert("p_norm".into(), norms.p_norm);
    v.decide(0.5 - est.estimate, 2.0 * cfg.eps, holds, Outcome::NotMonotone);

    let oriented: Vec<f64> = xs[..grid.real_len()]
        .iter()
        .map(|&x| match direction {
            Direction::Increasing => d1.eval(x),
            Direction::Decreasing => -d1.eval(x),
        })
        .collect();
    let i = argmin(&oriented);
    v.witness = Some(Witness::Point { index: i, x: vec![xs[i]], value: d1.eval(xs[i]) });
    Ok(v)
}

/// Diagonal encoding of `f(x_j) / (K C)` from per-axis diagonal encodings with `alpha = 1`:
/// powers by repeated products, products across axes, coefficient insertion by scaling,
/// and a signed linear combination over the `K` monomials.
#[derive(Debug, Clone)]
pub struct MultivariateEncoding {
    pub enc: BlockEnc,
    /// Number of monomials `K` (1 for the zero polynomial).
    pub k: usize,
    /// Coefficient normalization `C = max |a_k|` (1 for the zero polynomial).
    pub c: f64,
}

impl MultivariateEncoding {
    pub fn factor(&self) -> f64 {
        self.k as f64 * self.c
    }
}

pub fn build_multivariate_m(f: &MultiPoly, axes: &[BlockEnc], degree_cap: u32) -> Result<MultivariateEncoding> {
    if axes.len() != f.dim() {
        return Err(Error::DimensionMismatch(format!("{} axis encodings for dimension {}", axes.len(), f.dim())));
    }
    let n = axes[0].dim();
    for a in axes {
        if a.dim() != n {
            return Err(Error::DimensionMismatch("axis encodings differ in size".into()));
        }
        if (a.alpha() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("axis encoding must have alpha = 1, got {}", a.alpha())));
        }
    }
    let top = f.max_exponent();
    if top > degree_cap {
        return Err(Error::DegreeCap { exponent: top, cap: degree_cap });
    }
    if f.term_count() == 0 {
        return Ok(MultivariateEncoding { enc: BlockEnc::zero(n)?, k: 1, c: 1.0 });
    }
    let c = f.max_abs_coeff();
    let mut terms = Vec::with_capacity(f.term_count());
    let mut signs = Vec::with_capacity(f.term_count());
    for t in f.terms() {
        let mut acc: Option<BlockEnc> = None;
        for (axis, &k) in axes.iter().zip(&t.exps) {
            for _ in 0..k {
                acc = Some(match acc {
                    None => axis.clone(),
                    Some(prev) => product(&prev, axis)?,
                });
            }
        }
        let mono = match acc {
            Some(m) => m,
            None => BlockEnc::identity(n)?,
        };
        let ratio = t.coeff.abs() / c;
        let scaled = if ratio < 1.0 { scale_down(&mono, 1.0 / ratio)? } else { mono };
        terms.push(scaled);
        signs.push(if t.coeff < 0.0 { Sign::Minus } else { Sign::Plus });
    }
    let refs: Vec<&BlockEnc> = terms.iter().collect();
    Ok(MultivariateEncoding { enc: lcu(&refs, &signs)?, k: f.term_count(), c })
}

/// Jensen test: estimates `f(Σ λ_i x_i)` and `Σ λ_i f(x_i)` and compares them.
pub fn test_convex_jensen(f: &Function, grid: &Grid, w: &WeightVector, cfg: &EstimatorConfig) -> Result<Verdict> {
    test_convex_jensen_capped(f, grid, w, cfg, DEFAULT_DEGREE_CAP)
}

pub fn test_convex_jensen_capped(
    f: &Function,
    grid: &Grid,
    w: &WeightVector,
    cfg: &EstimatorConfig,
    degree_cap: u32,
) -> Result<Verdict> {
    if f.dim() != grid.dim() {
        return Err(Error::DimensionMismatch(format!(
            "polynomial of dimension {} on a grid of dimension {}",
            f.dim(),
            grid.dim()
        )));
    }
    if w.lambdas().len() != grid.len() {
        return Err(Error::Weights("weight vector does not match the grid".into()));
    }
    let combination = w.combination(grid);
    if combination.iter().any(|c| c.abs() > 0.5 + COORD_TOL) {
        return Err(Error::Weights("weighted combination lies outside the domain".into()));
    }
    let (q, s) = f.normalize_output();
    let mut v = Verdict::new(Method::Jensen, grid, s);
    let axes = encode_grid(grid)?;
    let lambda = w.sqrt_state()?;
    let flagged = lambda.with_flag_qubit();

    // LHS: per-axis overlap gadgets hold (w_j / 4) |0><0| - (w_j / 4) |1><1|
    let combos = axes
        .iter()
        .map(|a| {
            let g = overlap_gadget(&apply_block(a, &lambda)?, &flagged)?;
            normalize_subnormalization(&g, 4.0, 1.0, DEFAULT_AMPLIFICATION_EPS)
        })
        .collect::<Result<Vec<_>>>()?;
    let (lhs_enc, lhs_factor) = match &q {
        Function::Uni(p) => (transform(&combos[0], p)?, 1.0),
        Function::Multi(p) => {
            let m = build_multivariate_m(p, &combos, degree_cap)?;
            let factor = m.factor();
            (m.enc, factor)
        }
    };
    let lhs_est = amplitude_estimate(&lhs_enc, &cfg.fork(4).with_eps(cfg.eps / lhs_factor))?;

    // RHS: gadget on the state M Σ sqrt(λ_i) |i> gives (Σ λ_i f(x_i)) / 4 up to normalization
    let (m_enc, m_factor) = match &q {
        Function::Uni(p) => (transform(&axes[0], p)?, 1.0),
        Function::Multi(p) => {
            let m = build_multivariate_m(p, &axes, degree_cap)?;
            let factor = m.factor();
            (m.enc, factor)
        }
    };
    let rhs_gadget = overlap_gadget(&apply_block(&m_enc, &lambda)?, &flagged)?;
    let rhs_factor = 4.0 * m_factor;
    let rhs_est = amplitude_estimate(&rhs_gadget, &cfg.fork(5).with_eps(cfg.eps / rhs_factor))?;

    let lhs = lhs_est.estimate * lhs_factor;
    let rhs = rhs_est.estimate * rhs_factor;
    v.estimates.insert("lhs".into(), lhs);
    v.estimates.insert("rhs".into(), rhs);
    v.estimates.insert("lhs_amplitude".into(), lhs_est.estimate);
    v.estimates.insert("rhs_amplitude".into(), rhs_est.estimate);
    v.estimates.insert("lhs_correction".into(), lhs_factor);
    v.estimates.insert("rhs_correction".into(), rhs_factor);
    v.ledger = ResourceLedger::sequential([&lhs_est.ledger, &rhs_est.ledger]);
    v.decide(rhs - lhs, 2.0 * cfg.eps, Outcome::ConvexOnGrid, Outcome::NotConvex);
    v.witness = Some(Witness::Jensen { combination, lhs, rhs });
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::NoiseMode;
    use crate::poly::Monomial;
    use approx::assert_relative_eq;

    fn cfg(eps: f64) -> EstimatorConfig {
        EstimatorConfig::new(eps).unwrap()
    }

    fn uni(c: &[f64]) -> Poly {
        Poly::new(c.to_vec())
    }

    #[test]
    fn uniform_grid_inclusive_and_padded() {
        let g = Grid::uniform(8, 1).unwrap();
        assert_eq!(g.axis(0)[0], -0.5);
        assert_eq!(g.axis(0)[7], 0.5);
        let g = Grid::uniform(5, 1).unwrap();
        assert_eq!((g.len(), g.real_len()), (8, 5));
        assert_eq!(g.axis(0)[7], 0.5);
        let g = Grid::uniform(64, 2).unwrap();
        assert_eq!((g.len(), g.real_len(), g.dim()), (64, 64, 2));
        assert!(Grid::from_univariate(&[0.1, 0.7]).is_err());
    }

    #[test]
    fn grid_axis_encoding_recovers_coordinates() {
        for n in [4, 16, 256] {
            let g = Grid::uniform(n, 1).unwrap();
            let e = encode_grid_axis(&g.axis(0)).unwrap();
            assert_eq!(e.alpha(), 1.0);
            for (d, x) in e.op().diagonal().iter().zip(g.axis(0)) {
                assert!((d - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn second_derivative_examples() {
        let g = Grid::uniform(8, 1).unwrap();
        let v = test_convex_second_derivative(&uni(&[0.0, 0.0, 0.25]), &g, &cfg(0.01)).unwrap();
        assert_eq!(v.outcome, Outcome::ConvexOnGrid);

        let g = Grid::from_univariate(&[-0.4, -0.1, 0.2, 0.4]).unwrap();
        let v = test_convex_second_derivative(&uni(&[0.0, 0.0, 0.0, 1.0]), &g, &cfg(0.01)).unwrap();
        assert_eq!(v.outcome, Outcome::NotConvex);
        assert!(matches!(&v.witness, Some(Witness::Point { index: 0, x, value }) if x[0] == -0.4 && *value < 0.0));

        let (q, _) = uni(&[1.0, -2.0, 0.0, 1.0]).remap_domain(0.6, 1.4).unwrap();
        let v = test_convex_second_derivative(&q, &Grid::uniform(64, 1).unwrap(), &cfg(0.01)).unwrap();
        assert_eq!(v.outcome, Outcome::ConvexOnGrid);

        let v = test_convex_second_derivative(&uni(&[0.1, 0.3]), &g, &cfg(0.01)).unwrap();
        assert_eq!(v.outcome, Outcome::Inconclusive);
    }

    #[test]
    fn threshold_identity() {
        let g = Grid::uniform(16, 1).unwrap();
        let f = uni(&[0.1, -0.3, 0.4, 0.2, -0.5]);
        let v = test_convex_second_derivative(&f, &g, &cfg(0.01)).unwrap();
        let (q, _) = f.normalize_output();
        let qn = normalizers(&Bounds::univariate(&q)).q_norm;
        let min_m2 = g.axis(0).iter().map(|&x| q.derivative(2).eval(x) / qn).fold(f64::INFINITY, f64::min);
        assert_relative_eq!(v.estimates["lambda_max"], 0.5 * (1.0 - min_m2), epsilon = 1e-10);
    }

    #[test]
    fn m3_differences_and_mask() {
        let g = Grid::from_univariate(&[-0.4, -0.2, 0.0, 0.2]).unwrap();
        let f = uni(&[0.0, 0.0, 0.25]);
        let m3 = build_m3(&f, &g).unwrap();
        let p = normalizers(&Bounds::univariate(&f)).p_norm;
        let d = m3.op().diagonal();
        for &v in &d[..3] {
            // f' = x/2, consecutive difference 0.1, times 1/(sqrt(4) P)
            assert_relative_eq!(v, 0.1 / (2.0 * p), epsilon = 1e-9);
        }
        assert_relative_eq!(d[3], 0.5, epsilon = 1e-9);

        let lin = build_m3(&uni(&[0.2, 0.3]), &g).unwrap();
        assert!(lin.op().diagonal()[..3].iter().all(|v| v.abs() < 1e-12));
        assert!(build_m3(&f, &Grid::from_univariate(&[0.1, -0.1]).unwrap()).is_err());
    }

    #[test]
    fn first_derivative_examples() {
        let g = Grid::uniform(8, 1).unwrap();
        let v = test_convex_first_derivative(&uni(&[0.0, 0.0, 0.25]), &g, &cfg(0.01)).unwrap();
        assert_eq!(v.outcome, Outcome::ConvexOnGrid);
        let v = test_convex_first_derivative(&uni(&[0.0, 0.0, -1.0]), &g, &cfg(0.01)).unwrap();
        assert_eq!(v.outcome, Outcome::NotConvex);
        assert!(matches!(v.witness, Some(Witness::Pair { difference, .. }) if difference < 0.0));
        let g = Grid::from_univariate(&[-0.2, -0.1, 0.0, 0.1, 0.2]).unwrap();
        let v = test_convex_first_derivative(&uni(&[0.0, 0.0, -0.125, 0.0, 1.0]), &g, &cfg(0.001)).unwrap();
        assert_eq!(v.outcome, Outcome::NotConvex);
    }

    #[test]
    fn monotone_examples() {
        let g = Grid::uniform(8, 1).unwrap();
        let v = test_monotone(&uni(&[0.0, 0.5]), &g, Direction::Increasing, &cfg(0.01)).unwrap();
        assert_eq!(v.outcome, Outcome::MonotoneIncreasing);
        let v = test_monotone(&uni(&[0.0, -0.5]), &g, Direction::Decreasing, &cfg(0.01)).unwrap();
        assert_eq!(v.outcome, Outcome::MonotoneDecreasing);
        let v = test_monotone(&uni(&[0.0, 0.0, 1.0]), &g, Direction::Increasing, &cfg(0.01)).unwrap();
        assert_eq!(v.outcome, Outcome::NotMonotone);
        assert!(matches!(&v.witness, Some(Witness::Point { index: 0, x, .. }) if x[0] == -0.5));
    }

    #[test]
    fn jensen_examples() {
        let g = Grid::from_univariate(&[-0.4, 0.4]).unwrap();
        let w = WeightVector::new(vec![0.5, 0.5], &g).unwrap();
        let v = test_convex_jensen(&Function::Uni(uni(&[0.0, 0.0, 1.0])), &g, &w, &cfg(0.01)).unwrap();
        // normalized units: f / s with s = 2 * sup|x^2| = 2
        assert_relative_eq!(v.estimates["lhs"], 0.0, epsilon = 1e-12);
        assert_relative_eq!(v.estimates["rhs"] * v.scale, 0.16, epsilon = 1e-12);
        assert_eq!(v.outcome, Outcome::ConvexOnGrid);
        let v = test_convex_jensen(&Function::Uni(uni(&[0.0, 0.0, -1.0])), &g, &w, &cfg(0.01)).unwrap();
        assert_eq!(v.outcome, Outcome::NotConvex);

        let xy = MultiPoly::new(2, vec![Monomial { coeff: 0.5, exps: vec![1, 1] }]).unwrap();
        let g = Grid::from_points(vec![vec![0.4, 0.4], vec![-0.4, -0.4]]).unwrap();
        let w = WeightVector::new(vec![0.5, 0.5], &g).unwrap();
        let v = test_convex_jensen(&Function::Multi(xy), &g, &w, &cfg(0.01)).unwrap();
        assert_relative_eq!(v.estimates["lhs"], 0.0, epsilon = 1e-12);
        assert_relative_eq!(v.estimates["rhs"] * v.scale, 0.08, epsilon = 1e-12);
        assert_eq!(v.outcome, Outcome::ConvexOnGrid);
    }

    #[test]
    fn multivariate_m_examples() {
        let axes = |pts: &[[f64; 2]]| -> Vec<BlockEnc> {
            (0..2).map(|a| encode_grid_axis(&pts.iter().map(|p| p[a]).collect::<Vec<_>>()).unwrap()).collect()
        };
        let xy = MultiPoly::new(2, vec![Monomial { coeff: 1.0, exps: vec![1, 1] }]).unwrap();
        let m = build_multivariate_m(&xy, &axes(&[[0.5, 0.5], [-0.5, 0.5]]), 8).unwrap();
        let d = m.enc.op().diagonal();
        assert_relative_eq!(d[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(d[1], -0.25, epsilon = 1e-12);

        let f = MultiPoly::new(
            2,
            vec![Monomial { coeff: 0.3, exps: vec![1, 1] }, Monomial { coeff: 0.5, exps: vec![2, 0] }],
        )
        .unwrap();
        let pts = [[0.3, -0.2], [-0.4, 0.1]];
        let m = build_multivariate_m(&f, &axes(&pts), 8).unwrap();
        assert_eq!((m.k, m.c), (2, 0.5));
        for (d, p) in m.enc.op().diagonal().iter().zip(pts) {
            assert_relative_eq!(d * m.factor(), f.eval(&p), epsilon = 1e-12);
        }
        assert!(matches!(build_multivariate_m(&f, &axes(&pts), 1), Err(Error::DegreeCap { .. })));
    }

    #[test]
    fn scale_invariance() {
        let g = Grid::uniform(16, 1).unwrap();
        let f = uni(&[0.05, -0.2, 0.3, 0.4]);
        let c = cfg(0.01).with_noise(NoiseMode::Uniform).with_seed(5);
        let a = test_convex_second_derivative(&f, &g, &c).unwrap();
        let b = test_convex_second_derivative(&f.scale(37.0), &g, &c).unwrap();
        assert_eq!(a.outcome, b.outcome);
    }

    #[test]
    fn weights_validation() {
        let g = Grid::uniform(3, 1).unwrap();
        assert!(WeightVector::new(vec![0.5, 0.5, 0.0], &g).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.6, -0.1], &g).is_err());
        assert!(WeightVector::new(vec![0.5, 0.4, 0.0], &g).is_err());
        assert_eq!(WeightVector::uniform(&g).lambdas()[3], 0.0);
    }
}
