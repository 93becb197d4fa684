//! Real operators with a diagonal and a circulant fast path.
//!
//! Every operator appearing in the test pipelines is diagonal, circulant, or a
//! circulant times a diagonal times a Hadamard layer, so dense storage is only
//! needed for the intermediate products of the first-derivative construction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest dimension for which a dense matrix is materialized.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Diagonal(Vec<f64>),
    /// Circulant matrix given by its first row: `C[i][j] = row[(j - i) mod n]`.
    Circulant(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Operator {
    pub fn identity(n: usize) -> Self {
        Operator::Diagonal(vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        match self {
            Operator::Diagonal(d) => d.len(),
            Operator::Circulant(c) => c.len(),
            Operator::Dense(m) => m.nrows(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            Operator::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    0.0
                }
            }
            Operator::Circulant(c) => {
                let n = c.len();
                c[(j + n - i) % n]
            }
            Operator::Dense(m) => m[(i, j)],
        }
    }

    pub fn as_diagonal(&self) -> Option<&[f64]> {
        match self {
            Operator::Diagonal(d) => Some(d),
            _ => None,
        }
    }

    /// Main diagonal entries.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entry(i, i)).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        match self {
            Operator::Dense(m) => m.column(j).iter().copied().collect(),
            _ => (0..self.dim()).map(|i| self.entry(i, j)).collect(),
        }
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        match self {
            Operator::Dense(m) => Ok(m.clone()),
            _ if n > DENSE_LIMIT => Err(Error::TooLarge(n)),
            Operator::Diagonal(d) => Ok(DMatrix::from_diagonal(&DVector::from_column_slice(d))),
            Operator::Circulant(_) => Ok(DMatrix::from_fn(n, n, |i, j| self.entry(i, j))),
        }
    }

    pub fn scale(&self, factor: f64) -> Operator {
        match self {
            Operator::Diagonal(d) => Operator::Diagonal(d.iter().map(|x| x * factor).collect()),
            Operator::Circulant(c) => Operator::Circulant(c.iter().map(|x| x * factor).collect()),
            Operator::Dense(m) => Operator::Dense(m * factor),
        }
    }

    fn check_same_dim(&self, other: &Operator) -> Result<usize> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!("{} vs {}", self.dim(), other.dim())));
        }
        Ok(self.dim())
    }

    fn constant_diagonal(d: &[f64]) -> Option<f64> {
        let first = *d.first()?;
        d.iter().all(|&x| x == first).then_some(first)
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        let n = self.check_same_dim(other)?;
        let zip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
        Ok(match (self, other) {
            (Operator::Diagonal(a), Operator::Diagonal(b)) => Operator::Diagonal(zip(a, b)),
            (Operator::Circulant(a), Operator::Circulant(b)) => Operator::Circulant(zip(a, b)),
            (Operator::Diagonal(d), Operator::Circulant(c)) | (Operator::Circulant(c), Operator::Diagonal(d))
                if Self::constant_diagonal(d).is_some() =>
            {
                let mut c = c.clone();
                c[0] += d.first().copied().unwrap_or(0.0);
                Operator::Circulant(c)
            }
            _ => {
                if n > DENSE_LIMIT {
                    return Err(Error::TooLarge(n));
                }
                Operator::Dense(self.to_dense()? + other.to_dense()?)
            }
        })
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &Operator) -> Result<Operator> {
        let n = self.check_same_dim(other)?;
        Ok(match (self, other) {
            (Operator::Diagonal(a), Operator::Diagonal(b)) => {
                Operator::Diagonal(a.iter().zip(b).map(|(x, y)| x * y).collect())
            }
            (Operator::Diagonal(d), _) => {
                let mut m = other.to_dense()?;
                for (i, &di) in d.iter().enumerate() {
                    m.row_mut(i).scale_mut(di);
                }
                Operator::Dense(m)
            }
            (_, Operator::Diagonal(d)) => {
                let mut m = self.to_dense()?;
                for (j, &dj) in d.iter().enumerate() {
                    m.column_mut(j).scale_mut(dj);
                }
                Operator::Dense(m)
            }
            (Operator::Circulant(a), Operator::Circulant(b)) => {
                // first row of the product is the cyclic convolution of the first rows
                let mut row = vec![0.0; n];
                for (k, &ak) in a.iter().enumerate().filter(|(_, &x)| x != 0.0) {
                    for (j, r) in row.iter_mut().enumerate() {
                        *r += ak * b[(j + n - k) % n];
                    }
                }
                Operator::Circulant(row)
            }
            (Operator::Circulant(c), Operator::Dense(b)) => {
                let mut m = DMatrix::zeros(n, n);
                for (offset, &cv) in c.iter().enumerate().filter(|(_, &x)| x != 0.0) {
                    for k in 0..n {
                        for i in 0..n {
                            m[(i, k)] += cv * b[((i + offset) % n, k)];
                        }
                    }
                }
                Operator::Dense(m)
            }
            (Operator::Dense(b), Operator::Circulant(c)) => {
                let mut m = DMatrix::zeros(n, n);
                for (offset, &cv) in c.iter().enumerate().filter(|(_, &x)| x != 0.0) {
                    for j in 0..n {
                        let src = b.column((j + n - offset) % n);
                        let mut dst = m.column_mut(j);
                        dst.axpy(cv, &src, 1.0);
                    }
                }
                Operator::Dense(m)
            }
            (Operator::Dense(a), Operator::Dense(b)) => Operator::Dense(a * b),
        })
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Operator) -> Result<Operator> {
        match (self, other) {
            (Operator::Diagonal(a), Operator::Diagonal(b)) => Ok(Operator::Diagonal(
                a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect(),
            )),
            _ => {
                let n = self.dim() * other.dim();
                if n > DENSE_LIMIT {
                    return Err(Error::TooLarge(n));
                }
                Ok(Operator::Dense(self.to_dense()?.kronecker(&other.to_dense()?)))
            }
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        match self {
            Operator::Diagonal(_) => true,
            Operator::Circulant(c) => {
                let n = c.len();
                (1..n).all(|j| (c[j] - c[n - j]).abs() <= tol)
            }
            Operator::Dense(m) => {
                let n = m.nrows();
                (0..n).all(|i| (i + 1..n).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
            }
        }
    }

    /// Cheap upper bound on the spectral norm.
    pub fn norm_upper_bound(&self) -> f64 {
        match self {
            Operator::Diagonal(d) => d.iter().fold(0.0, |acc, x| acc.max(x.abs())),
            Operator::Circulant(c) => c.iter().map(|x| x.abs()).sum(),
            Operator::Dense(m) => {
                let one = (0..m.ncols()).map(|j| m.column(j).abs().sum()).fold(0.0, f64::max);
                let inf = (0..m.nrows()).map(|i| m.row(i).abs().sum()).fold(0.0, f64::max);
                (one * inf).sqrt()
            }
        }
    }

    /// Exact spectral norm (largest singular value).
    pub fn spectral_norm(&self) -> f64 {
        match self {
            Operator::Diagonal(_) => self.norm_upper_bound(),
            Operator::Circulant(c) => {
                // circulants are normal; singular values are the moduli of the DFT of the row
                let n = c.len();
                (0..n)
                    .map(|k| {
                        let (mut re, mut im) = (0.0, 0.0);
                        for (j, &cj) in c.iter().enumerate() {
                            let theta = 2.0 * std::f64::consts::PI * (j * k % n) as f64 / n as f64;
                            re += cj * theta.cos();
                            im += cj * theta.sin();
                        }
                        re.hypot(im)
                    })
                    .fold(0.0, f64::max)
            }
            Operator::Dense(m) => m.singular_values().iter().copied().fold(0.0, f64::max),
        }
    }

    /// Eigenvalues of a symmetric operator, ascending.
    pub fn symmetric_eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.is_symmetric(1e-12) {
            return Err(Error::NotHermitian);
        }
        let mut ev = match self {
            Operator::Diagonal(d) => d.clone(),
            _ => SymmetricEigen::new(self.to_dense()?).eigenvalues.iter().copied().collect(),
        };
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    /// `p(A)` for symmetric `A`, evaluated on the spectrum.
    pub fn apply_spectral<F: Fn(f64) -> f64>(&self, p: F) -> Result<Operator> {
        if !self.is_symmetric(1e-12) {
            return Err(Error::NotHermitian);
        }
        match self {
            Operator::Diagonal(d) => Ok(Operator::Diagonal(d.iter().map(|&x| p(x)).collect())),
            _ => {
                let eig = SymmetricEigen::new(self.to_dense()?);
                let vals = DMatrix::from_diagonal(&eig.eigenvalues.map(&p));
                let v = &eig.eigenvectors;
                Ok(Operator::Dense(v * vals * v.transpose()))
            }
        }
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Operator::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            Operator::Circulant(c) => {
                let n = c.len();
                (0..n)
                    .map(|i| c.iter().enumerate().map(|(k, &ck)| ck * x[(i + k) % n]).sum())
                    .collect()
            }
            Operator::Dense(m) => (m * DVector::from_column_slice(x)).iter().copied().collect(),
        }
    }

    /// Largest absolute entry-wise difference from `other`.
    pub fn max_abs_diff(&self, other: &Operator) -> Result<f64> {
        self.check_same_dim(other)?;
        Ok(match (self, other) {
            (Operator::Diagonal(a), Operator::Diagonal(b)) => {
                a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
            }
            _ => (self.to_dense()? - other.to_dense()?).abs().max(),
        })
    }

    /// Spectral norm of `self - other`.
    pub fn distance(&self, other: &Operator) -> Result<f64> {
        Ok(self.add(&other.scale(-1.0))?.spectral_norm())
    }
}

/// Sylvester construction of the normalized Hadamard layer `H^{⊗ log n}`.
pub fn hadamard_matrix(n: usize) -> DMatrix<f64> {
    let norm = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |i, j| if (i & j).count_ones() % 2 == 0 { norm } else { -norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn circulant_rows_shift_right() {
        let c = Operator::Circulant(vec![-1.0, 1.0, 0.0, 0.0]);
        for i in 1..4 {
            for j in 0..4 {
                assert_eq!(c.entry(i, j), c.entry(i - 1, (j + 3) % 4));
            }
        }
        assert_eq!(c.entry(3, 0), 1.0);
        assert_eq!(c.entry(1, 3), 0.0);
    }

    #[test]
    fn structured_products_match_dense() {
        let circ = Operator::Circulant(vec![0.5, -0.25, 0.0, 0.75]);
        let diag = Operator::Diagonal(vec![1.0, -2.0, 0.5, 3.0]);
        let h = Operator::Dense(hadamard_matrix(4));
        let dense = |o: &Operator| o.to_dense().unwrap();
        for (a, b) in [(&circ, &h), (&h, &circ), (&diag, &h), (&h, &diag), (&circ, &circ), (&circ, &diag)] {
            let fast = a.mul(b).unwrap().to_dense().unwrap();
            let slow = dense(a) * dense(b);
            assert!((fast - slow).abs().max() < 1e-14);
        }
        let sum = circ.add(&Operator::identity(4)).unwrap();
        assert!(matches!(sum, Operator::Circulant(_)));
        assert!((sum.to_dense().unwrap() - (dense(&circ) + DMatrix::identity(4, 4))).abs().max() < 1e-15);
    }

    #[test]
    fn circulant_norm_matches_svd() {
        let circ = Operator::Circulant(vec![-1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let dense = Operator::Dense(circ.to_dense().unwrap());
        assert_relative_eq!(circ.spectral_norm(), dense.spectral_norm(), epsilon = 1e-12);
        assert_relative_eq!(circ.spectral_norm(), 2.0, epsilon = 1e-12);
        assert!(circ.norm_upper_bound() >= circ.spectral_norm());
    }

    #[test]
    fn hadamard_is_orthogonal() {
        let h = hadamard_matrix(8);
        assert!((&h * h.transpose() - DMatrix::identity(8, 8)).abs().max() < 1e-14);
    }

    #[test]
    fn kron_of_diagonals() {
        let a = Operator::Diagonal(vec![1.0, 0.0]);
        let b = Operator::Diagonal(vec![0.0, 1.0]);
        assert_eq!(a.kron(&b).unwrap(), Operator::Diagonal(vec![0.0, 1.0, 0.0, 0.0]));
    }
}
