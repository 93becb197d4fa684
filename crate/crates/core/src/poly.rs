//! Univariate and multivariate polynomials with exact derivatives, affine domain
//! remapping and certified sup-norm bounds over `[-1, 1]` (or `[-1, 1]^d`).
//!
//! The eigenvalue transform only accepts polynomials bounded by 1/2 on the whole
//! interval `[-1, 1]`, not just on the sampled domain `[-1/2, 1/2]`, so every
//! normalization in this crate goes through [`Poly::certified_sup`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Refinement stops once the upper bound is within this relative gap of the best sample.
const SUP_REL_TOL: f64 = 1e-9;
/// Maximum number of cell evaluations spent on refinement.
const SUP_BUDGET: usize = 50_000;
/// Cap on the initial tensor grid of the multivariate search.
const SUP_INITIAL_CELLS: usize = 20_000;

/// Dense univariate polynomial `c0 + c1 x + ... + cD x^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    /// Builds a polynomial from coefficients indexed by power. Trailing zeros are trimmed
    /// so the leading coefficient is nonzero unless the polynomial is constant.
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self::new(vec![0.0])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Exact coefficient-level derivative of the given order. Orders above the degree
    /// give the zero polynomial.
    pub fn derivative(&self, order: usize) -> Poly {
        let mut coeffs = self.coeffs.clone();
        for _ in 0..order {
            if coeffs.len() <= 1 {
                return Poly::zero();
            }
            coeffs = coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect();
        }
        Poly::new(coeffs)
    }

    pub fn scale(&self, factor: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * factor).collect())
    }

    /// Returns `t -> p(center + width * t)`.
    pub fn compose_affine(&self, center: f64, width: f64) -> Poly {
        // Horner over polynomials: acc = acc * (center + width t) + c
        let mut acc = vec![0.0; self.coeffs.len()];
        let mut len = 1;
        for &c in self.coeffs.iter().rev() {
            let mut next = vec![0.0; self.coeffs.len()];
            for k in 0..len {
                next[k] += acc[k] * center;
                if k + 1 < next.len() {
                    next[k + 1] += acc[k] * width;
                }
            }
            next[0] += c;
            acc = next;
            len = (len + 1).min(acc.len());
        }
        Poly::new(acc)
    }

    /// Sum of absolute coefficients: a sound bound on `|p|` over `[-1, 1]`.
    pub fn coefficient_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    /// Maps the user interval `[a, b]` onto `[-1/2, 1/2]` and rescales the output so that
    /// the result is bounded by 1/2 on all of `[-1, 1]`.
    ///
    /// Returns `(q, s)` with `q(t) = f(c + w t) / s`, `c = (a + b) / 2`, `w = b - a` and
    /// `s = 2 * certified_sup(f(c + w t))` (or 1 for the zero polynomial).
    pub fn remap_domain(&self, a: f64, b: f64) -> Result<(Poly, f64)> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::DegenerateInterval { a, b });
        }
        let raw = self.compose_affine(0.5 * (a + b), b - a);
        let (q, s) = raw.normalize_output();
        Ok((q, s))
    }

    /// Divides by `s = 2 * certified_sup` so the result is bounded by 1/2 on `[-1, 1]`.
    pub fn normalize_output(&self) -> (Poly, f64) {
        let sup = self.certified_sup();
        let s = if sup > 0.0 { 2.0 * sup } else { 1.0 };
        (self.scale(1.0 / s), s)
    }

    /// Certified upper bound on `sup |p|` over `[-1, 1]`.
    ///
    /// Branch and bound over cells: each cell with center `c` and half-width `r` is bounded
    /// by a second-order Taylor estimate `|p(c)| + |p'(c)| r + L2 r^2 / 2` (or the
    /// first-order Lipschitz estimate, whichever is smaller), where `L1`, `L2` are
    /// coefficient bounds on `|p'|` and `|p''|`. The result never exceeds the coefficient sum.
    pub fn certified_sup(&self) -> f64 {
        let coef_sum = self.coefficient_sum();
        if self.degree() == 0 {
            return self.coeffs[0].abs();
        }
        let d1 = self.derivative(1);
        let lip1 = d1.coefficient_sum();
        let lip2 = self.derivative(2).coefficient_sum();
        let cell_bound = |c: f64, r: f64| -> (f64, f64) {
            let v = self.eval(c).abs();
            let first = v + lip1 * r;
            let second = v + d1.eval(c).abs() * r + 0.5 * lip2 * r * r;
            (v, first.min(second))
        };

        let mut lower = self.eval(-1.0).abs().max(self.eval(1.0).abs());
        let cells = (10 * self.degree()).max(16);
        let half = 1.0 / cells as f64;
        let mut heap = BinaryHeap::with_capacity(cells * 2);
        for i in 0..cells {
            let c = -1.0 + (2 * i + 1) as f64 * half;
            let (v, ub) = cell_bound(c, half);
            lower = lower.max(v);
            heap.push(Cell { ub, center: vec![c], half: vec![half] });
        }
        let mut evals = cells;
        while let Some(top) = heap.peek() {
            if top.ub <= lower + SUP_REL_TOL * lower.max(1.0) || evals >= SUP_BUDGET {
                break;
            }
            let cell = heap.pop().expect("peeked");
            let r = 0.5 * cell.half[0];
            for c in [cell.center[0] - r, cell.center[0] + r] {
                let (v, ub) = cell_bound(c, r);
                lower = lower.max(v);
                heap.push(Cell { ub, center: vec![c], half: vec![r] });
            }
            evals += 2;
        }
        let upper = heap.peek().map_or(lower, |c| c.ub.max(lower));
        upper.min(coef_sum)
    }
}

/// Cell of a branch-and-bound search, ordered by upper bound.
struct Cell {
    ub: f64,
    center: Vec<f64>,
    half: Vec<f64>,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.ub.total_cmp(&other.ub) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ub.total_cmp(&other.ub)
    }
}

/// One term `a * x1^k1 * ... * xd^kd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    #[serde(rename = "a")]
    pub coeff: f64,
    #[serde(rename = "k")]
    pub exps: Vec<u32>,
}

impl Monomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exps
            .iter()
            .zip(x)
            .fold(self.coeff, |acc, (&k, &xi)| acc * xi.powi(k as i32))
    }
}

/// Sparse multivariate polynomial with distinct exponent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPoly {
    dim: usize,
    terms: Vec<Monomial>,
}

impl MultiPoly {
    /// Merges terms sharing an exponent vector and drops zero coefficients.
    pub fn new(dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("multivariate dimension must be positive".into()));
        }
        let mut merged: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for t in terms {
            if t.exps.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "monomial has {} exponents, polynomial dimension is {dim}",
                    t.exps.len()
                )));
            }
            *merged.entry(t.exps).or_insert(0.0) += t.coeff;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, a)| *a != 0.0)
            .map(|(exps, coeff)| Monomial { coeff, exps })
            .collect();
        Ok(Self { dim, terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    /// Number of monomials `K`.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// `C = max |a_k|` (zero for the zero polynomial).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.abs()).fold(0.0, f64::max)
    }

    pub fn max_exponent(&self) -> u32 {
        self.terms
            .iter()
            .flat_map(|t| t.exps.iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// Largest exponent of variable `axis` across all terms.
    pub fn axis_degree(&self, axis: usize) -> u32 {
        self.terms.iter().map(|t| t.exps[axis]).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.abs()).sum()
    }

    pub fn scale(&self, factor: f64) -> MultiPoly {
        let terms = self
            .terms
            .iter()
            .map(|t| Monomial { coeff: t.coeff * factor, exps: t.exps.clone() })
            .collect();
        MultiPoly::new(self.dim, terms).expect("same dimension")
    }

    /// Exact partial derivative with respect to `axis`.
    pub fn partial(&self, axis: usize) -> MultiPoly {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.exps[axis] > 0)
            .map(|t| {
                let mut exps = t.exps.clone();
                exps[axis] -= 1;
                Monomial { coeff: t.coeff * t.exps[axis] as f64, exps }
            })
            .collect();
        MultiPoly::new(self.dim, terms).expect("same dimension")
    }

    /// Substitutes `x_i = center_i + width_i * t_i` on every axis and expands.
    pub fn compose_affine(&self, centers: &[f64], widths: &[f64]) -> Result<MultiPoly> {
        if centers.len() != self.dim || widths.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "affine map has {} axes, polynomial has {}",
                centers.len(),
                self.dim
            )));
        }
        let mut out = Vec::new();
        for term in &self.terms {
            // per-axis expansion of (c + w t)^k as a univariate coefficient list
            let factors: Vec<Vec<f64>> = term
                .exps
                .iter()
                .enumerate()
                .map(|(i, &k)| {
                    let mut p = vec![0.0; k as usize + 1];
                    p[k as usize] = 1.0;
                    Poly::new(p).compose_affine(centers[i], widths[i]).coeffs
                })
                .collect();
            let mut partial: Vec<(f64, Vec<u32>)> = vec![(term.coeff, Vec::new())];
            for f in &factors {
                let mut next = Vec::with_capacity(partial.len() * f.len());
                for (a, exps) in &partial {
                    for (j, &c) in f.iter().enumerate() {
                        if c != 0.0 {
                            let mut e = exps.clone();
                            e.push(j as u32);
                            next.push((a * c, e));
                        }
                    }
                }
                partial = next;
            }
            out.extend(partial.into_iter().map(|(coeff, exps)| Monomial { coeff, exps }));
        }
        MultiPoly::new(self.dim, out)
    }

    /// Maps each axis interval `[a_i, b_i]` onto `[-1/2, 1/2]`. No output scaling is applied;
    /// the multivariate pipeline normalizes through `K * max|a_k|` instead.
    pub fn remap_domain(&self, domain: &[(f64, f64)]) -> Result<MultiPoly> {
        if domain.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "domain has {} axes, polynomial has {}",
                domain.len(),
                self.dim
            )));
        }
        for &(a, b) in domain {
            if !(a < b) {
                return Err(Error::DegenerateInterval { a, b });
            }
        }
        let centers: Vec<f64> = domain.iter().map(|(a, b)| 0.5 * (a + b)).collect();
        let widths: Vec<f64> = domain.iter().map(|(a, b)| b - a).collect();
        self.compose_affine(&centers, &widths)
    }

    /// Certified upper bound on `sup |p|` over `[-1, 1]^d`, by branch and bound with the
    /// Lipschitz estimate `|p(c)| + sum_i L_i r_i`, `L_i = sum_k |a_k| k_i`.
    pub fn certified_sup(&self) -> f64 {
        let coef_sum = self.coefficient_sum();
        if self.terms.iter().all(|t| t.exps.iter().all(|&k| k == 0)) {
            return coef_sum;
        }
        let lips: Vec<f64> = (0..self.dim)
            .map(|i| self.terms.iter().map(|t| t.coeff.abs() * t.exps[i] as f64).sum())
            .collect();
        let active: Vec<usize> = (0..self.dim).filter(|&i| lips[i] > 0.0).collect();
        let mut per_axis: Vec<usize> = (0..self.dim)
            .map(|i| if lips[i] > 0.0 { (10 * self.axis_degree(i) as usize).max(2) } else { 1 })
            .collect();
        if per_axis.iter().product::<usize>() > SUP_INITIAL_CELLS {
            // keep the initial tensor grid within budget; refinement restores resolution
            let cap = (SUP_INITIAL_CELLS as f64).powf(1.0 / active.len() as f64).floor().max(2.0) as usize;
            for m in per_axis.iter_mut().filter(|m| **m > 1) {
                *m = (*m).min(cap);
            }
        }
        let bound = |center: &[f64], half: &[f64]| -> (f64, f64) {
            let v = self.eval(center).abs();
            let slack: f64 = lips.iter().zip(half).map(|(l, r)| l * r).sum();
            (v, v + slack)
        };

        let mut lower: f64 = 0.0;
        let mut heap = BinaryHeap::new();
        let total: usize = per_axis.iter().product();
        let mut idx = vec![0usize; self.dim];
        for _ in 0..total {
            let half: Vec<f64> = per_axis.iter().map(|&m| 1.0 / m as f64).collect();
            let center: Vec<f64> = idx
                .iter()
                .zip(&per_axis)
                .map(|(&i, &m)| if m == 1 { 0.0 } else { -1.0 + (2 * i + 1) as f64 / m as f64 })
                .collect();
            let half: Vec<f64> = half
                .iter()
                .zip(&per_axis)
                .map(|(&h, &m)| if m == 1 { 1.0 } else { h })
                .collect();
            let (v, ub) = bound(&center, &half);
            lower = lower.max(v);
            heap.push(Cell { ub, center, half });
            for (k, m) in idx.iter_mut().zip(&per_axis) {
                *k += 1;
                if *k < *m {
                    break;
                }
                *k = 0;
            }
        }
        let mut evals = total;
        while let Some(top) = heap.peek() {
            if top.ub <= lower + SUP_REL_TOL * lower.max(1.0) || evals >= SUP_BUDGET {
                break;
            }
            let cell = heap.pop().expect("peeked");
            let children = 1usize << active.len();
            for mask in 0..children {
                let mut center = cell.center.clone();
                let mut half = cell.half.clone();
                for (bit, &axis) in active.iter().enumerate() {
                    half[axis] *= 0.5;
                    center[axis] += if mask >> bit & 1 == 1 { half[axis] } else { -half[axis] };
                }
                let (v, ub) = bound(&center, &half);
                lower = lower.max(v);
                heap.push(Cell { ub, center, half });
            }
            evals += children;
        }
        let upper = heap.peek().map_or(lower, |c| c.ub.max(lower));
        upper.min(coef_sum)
    }
}

/// Certified derivative and value bounds used to normalize the encoded diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    /// Bound on `|f|`.
    pub f_sup: f64,
    /// Bound on `|f'|` (univariate) or on the largest partial derivative (multivariate).
    pub d1_sup: f64,
    /// Bound on `|f''|` (univariate) or on the largest pure second partial (multivariate).
    pub d2_sup: f64,
    /// Bound on the Euclidean norm of the gradient.
    pub grad_sup: f64,
}

impl Bounds {
    pub fn univariate(p: &Poly) -> Self {
        let d1_sup = p.derivative(1).certified_sup();
        Self {
            f_sup: p.certified_sup(),
            d1_sup,
            d2_sup: p.derivative(2).certified_sup(),
            grad_sup: d1_sup,
        }
    }

    pub fn multivariate(p: &MultiPoly) -> Self {
        let partials: Vec<MultiPoly> = (0..p.dim()).map(|i| p.partial(i)).collect();
        let sups: Vec<f64> = partials.iter().map(|d| d.certified_sup()).collect();
        let d2_sup = partials
            .iter()
            .enumerate()
            .map(|(i, d)| d.partial(i).certified_sup())
            .fold(0.0, f64::max);
        Self {
            f_sup: p.certified_sup(),
            d1_sup: sups.iter().copied().fold(0.0, f64::max),
            d2_sup,
            grad_sup: sups.iter().map(|s| s * s).sum::<f64>().sqrt(),
        }
    }
}

/// Function under test.
#[derive(Debug, Clone, PartialEq)]
pub enum Function {
    Uni(Poly),
    Multi(MultiPoly),
}

impl Function {
    pub fn dim(&self) -> usize {
        match self {
            Function::Uni(_) => 1,
            Function::Multi(p) => p.dim(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Function::Uni(p) => p.eval(x[0]),
            Function::Multi(p) => p.eval(x),
        }
    }

    pub fn certified_sup(&self) -> f64 {
        match self {
            Function::Uni(p) => p.certified_sup(),
            Function::Multi(p) => p.certified_sup(),
        }
    }

    pub fn scale(&self, factor: f64) -> Function {
        match self {
            Function::Uni(p) => Function::Uni(p.scale(factor)),
            Function::Multi(p) => Function::Multi(p.scale(factor)),
        }
    }

    /// Divides by `s = 2 * certified_sup` (1 for the zero function); returns `(q, s)`.
    pub fn normalize_output(&self) -> (Function, f64) {
        let sup = self.certified_sup();
        let s = if sup > 0.0 { 2.0 * sup } else { 1.0 };
        (self.scale(1.0 / s), s)
    }

    /// Maps the per-axis user domain onto `[-1/2, 1/2]^d` without output scaling.
    pub fn remap_domain(&self, domain: &[(f64, f64)]) -> Result<Function> {
        match self {
            Function::Uni(p) => {
                let &[(a, b)] = domain else {
                    return Err(Error::DimensionMismatch(format!(
                        "domain has {} axes, polynomial is univariate",
                        domain.len()
                    )));
                };
                if !(a < b) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::DegenerateInterval { a, b });
                }
                Ok(Function::Uni(p.compose_affine(0.5 * (a + b), b - a)))
            }
            Function::Multi(p) => Ok(Function::Multi(p.remap_domain(domain)?)),
        }
    }
}

/// Wire format: `{"kind":"uni","coeffs":[...]}` or
/// `{"kind":"multi","dim":d,"terms":[{"a":..,"k":[..]}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum PolyJson {
    #[serde(rename = "uni")]
    Uni { coeffs: Vec<f64> },
    #[serde(rename = "multi")]
    Multi { dim: usize, terms: Vec<Monomial> },
}

impl TryFrom<PolyJson> for Function {
    type Error = Error;

    fn try_from(value: PolyJson) -> Result<Self> {
        match value {
            PolyJson::Uni { coeffs } => {
                if coeffs.is_empty() {
                    return Err(Error::Input("univariate polynomial needs at least one coefficient".into()));
                }
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Input("non-finite coefficient".into()));
                }
                Ok(Function::Uni(Poly::new(coeffs)))
            }
            PolyJson::Multi { dim, terms } => {
                if terms.iter().any(|t| !t.coeff.is_finite()) {
                    return Err(Error::Input("non-finite coefficient".into()));
                }
                Ok(Function::Multi(MultiPoly::new(dim, terms)?))
            }
        }
    }
}

impl From<&Function> for PolyJson {
    fn from(f: &Function) -> Self {
        match f {
            Function::Uni(p) => PolyJson::Uni { coeffs: p.coeffs().to_vec() },
            Function::Multi(p) => PolyJson::Multi { dim: p.dim(), terms: p.terms().to_vec() },
        }
    }
}
