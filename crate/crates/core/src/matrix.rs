//! Small dense Hermitian matrices (dimension 1 to 3).
//!
//! These are the pointwise coefficient matrices `H_{jk}` of a (1,1) form
//! `sum H_{jk} i dz_j ^ dz̄_k`. Everything is stack allocated so the grid
//! loops never touch the heap.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Tolerance for accepting user-supplied matrices as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ConstantFormJson", try_from = "ConstantFormJson")]
pub struct HermitianMatrix {
    n: usize,
    a: [[Complex64; MAX_DIM]; MAX_DIM],
}

impl HermitianMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "dimension {n} out of range");
        Self {
            n,
            a: [[ZERO; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        let mut m = Self::zeros(n);
        for j in 0..n {
            m.a[j][j] = Complex64::new(c, 0.0);
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (j, &v) in d.iter().enumerate() {
            m.a[j][j] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Builds a matrix from its upper triangle; the lower triangle is the
    /// conjugate and imaginary parts on the diagonal are dropped.
    pub fn from_upper(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(n);
        for j in 0..n {
            m.a[j][j] = Complex64::new(f(j, j).re, 0.0);
            for k in (j + 1)..n {
                let z = f(j, k);
                m.a[j][k] = z;
                m.a[k][j] = z.conj();
            }
        }
        m
    }

    /// Validated constructor from real and imaginary parts.
    pub fn from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let n = re.len();
        if !(1..=MAX_DIM).contains(&n) {
            return Err(Error::Config(format!("matrix dimension {n} not in 1..=3")));
        }
        if im.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: im.len(),
            });
        }
        for row in re.iter().chain(im.iter()) {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
        }
        let mut m = Self::zeros(n);
        for j in 0..n {
            for k in 0..n {
                m.a[j][k] = Complex64::new(re[j][k], im[j][k]);
            }
        }
        let defect = m.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Self::from_upper(n, |j, k| m.a[j][k]))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.a[j][k]
    }

    pub fn real_parts(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|j| (0..self.n).map(|k| self.a[j][k].re).collect())
            .collect()
    }

    pub fn imag_parts(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|j| (0..self.n).map(|k| self.a[j][k].im).collect())
            .collect()
    }

    /// Largest entrywise deviation from `H = H*`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.n {
            for k in 0..self.n {
                worst = worst.max((self.a[j][k] - self.a[k][j].conj()).norm());
            }
        }
        worst
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|j| self.a[j][j].re).sum()
    }

    pub fn det(&self) -> f64 {
        let a = &self.a;
        match self.n {
            1 => a[0][0].re,
            2 => (a[0][0] * a[1][1] - a[0][1] * a[1][0]).re,
            _ => (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))
                .re,
        }
    }

    /// Adjugate (transpose of the cofactor matrix).
    pub fn adjugate(&self) -> Self {
        let a = &self.a;
        match self.n {
            1 => Self::identity(1),
            2 => Self::from_upper(2, |j, k| match (j, k) {
                (0, 0) => a[1][1],
                (1, 1) => a[0][0],
                _ => -a[0][1],
            }),
            _ => {
                let cof = |r: usize, c: usize| {
                    let rows: Vec<usize> = (0..3).filter(|&i| i != r).collect();
                    let cols: Vec<usize> = (0..3).filter(|&i| i != c).collect();
                    let m = a[rows[0]][cols[0]] * a[rows[1]][cols[1]]
                        - a[rows[0]][cols[1]] * a[rows[1]][cols[0]];
                    if (r + c).is_multiple_of(2) {
                        m
                    } else {
                        -m
                    }
                };
                // adj[j][k] = cofactor(k, j)
                Self::from_upper(3, |j, k| cof(k, j))
            }
        }
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.adjugate() * (1.0 / d))
    }

    /// Lower-triangular Cholesky factor `L` with `L L* = self`.
    pub fn cholesky(&self) -> Option<LowerTriangular> {
        let n = self.n;
        let mut l = [[ZERO; MAX_DIM]; MAX_DIM];
        for j in 0..n {
            let mut d = self.a[j][j].re;
            for k in 0..j {
                d -= l[j][k].norm_sqr();
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[j][j] = Complex64::new(djj, 0.0);
            for i in (j + 1)..n {
                let mut s = self.a[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k].conj();
                }
                l[i][j] = s / djj;
            }
        }
        Some(LowerTriangular { n, l })
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_some()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.n {
            1 => vec![self.a[0][0].re],
            2 => {
                let (a, d, c) = (self.a[0][0].re, self.a[1][1].re, self.a[0][1]);
                let mid = 0.5 * (a + d);
                let rad = (0.25 * (a - d) * (a - d) + c.norm_sqr()).sqrt();
                vec![mid - rad, mid + rad]
            }
            _ => {
                let m = Matrix3::from_fn(|j, k| self.a[j][k]);
                let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
                ev.sort_by(|x, y| x.total_cmp(y));
                ev
            }
        }
    }

    /// Eigenvalues together with orthonormal eigenvectors, ascending.
    pub fn eigen_decomposition(&self) -> (Vec<f64>, Vec<Vec<Complex64>>) {
        let n = self.n;
        let m = DMatrix::from_fn(n, n, |j, k| self.a[j][k]);
        let eig = SymmetricEigen::new(m);
        let mut pairs: Vec<(f64, Vec<Complex64>)> = (0..n)
            .map(|c| {
                let v = (0..n).map(|r| eig.eigenvectors[(r, c)]).collect();
                (eig.eigenvalues[c], v)
            })
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        pairs.into_iter().unzip()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self.n {
            1 => self.a[0][0].re,
            2 => {
                let (a, d, c) = (self.a[0][0].re, self.a[1][1].re, self.a[0][1]);
                0.5 * (a + d) - (0.25 * (a - d) * (a - d) + c.norm_sqr()).sqrt()
            }
            _ => self.eigenvalues()[0],
        }
    }

    /// `L^{-1} self L^{-*}` for a Cholesky factor `L` of a reference metric.
    pub fn normalized_by(&self, l: &LowerTriangular) -> Self {
        // Solve L X = A, then L Y = X* (Y = L^{-1} A L^{-*} since A is Hermitian).
        let x = l.solve_columns(&self.a);
        let mut xs = [[ZERO; MAX_DIM]; MAX_DIM];
        for j in 0..self.n {
            for k in 0..self.n {
                xs[j][k] = x[k][j].conj();
            }
        }
        let y = l.solve_columns(&xs);
        Self::from_upper(self.n, |j, k| y[j][k])
    }

    /// Smallest eigenvalue of `ω^{-1} self`, i.e. the largest `m` with `self ⪰ m ω`.
    pub fn min_eigenvalue_relative(&self, omega: &HermitianMatrix) -> Option<f64> {
        let l = omega.cholesky()?;
        Some(self.normalized_by(&l).min_eigenvalue())
    }

    /// `tr_self(beta) = tr(self^{-1} beta)`, with `self` the reference metric.
    pub fn trace_of(&self, beta: &HermitianMatrix) -> Result<f64> {
        if beta.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: beta.n,
            });
        }
        let l = self.cholesky().ok_or(Error::Positivity {
            point: 0,
            value: self.min_eigenvalue(),
        })?;
        Ok(beta.normalized_by(&l).trace())
    }

    pub fn hs_inner(&self, other: &HermitianMatrix) -> f64 {
        let mut s = 0.0;
        for j in 0..self.n {
            for k in 0..self.n {
                s += (self.a[j][k] * other.a[k][j]).re;
            }
        }
        s
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.hs_inner(self).sqrt()
    }

    /// Rank-one projector `v v*`.
    pub fn outer(v: &[Complex64]) -> Self {
        Self::from_upper(v.len(), |j, k| v[j] * v[k].conj())
    }
}

impl Add for HermitianMatrix {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        let mut m = self;
        for j in 0..self.n {
            for k in 0..self.n {
                m.a[j][k] += rhs.a[j][k];
            }
        }
        m
    }
}

impl Sub for HermitianMatrix {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for HermitianMatrix {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl Mul<f64> for HermitianMatrix {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        let mut m = self;
        for j in 0..self.n {
            for k in 0..self.n {
                m.a[j][k] *= c;
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LowerTriangular {
    n: usize,
    l: [[Complex64; MAX_DIM]; MAX_DIM],
}

impl LowerTriangular {
    /// Forward substitution `L X = B`, column by column.
    fn solve_columns(&self, b: &[[Complex64; MAX_DIM]; MAX_DIM]) -> [[Complex64; MAX_DIM]; MAX_DIM] {
        let mut x = [[ZERO; MAX_DIM]; MAX_DIM];
        for c in 0..self.n {
            for r in 0..self.n {
                let mut s = b[r][c];
                for k in 0..r {
                    s -= self.l[r][k] * x[k][c];
                }
                x[r][c] = s / self.l[r][r];
            }
        }
        x
    }
}

/// The JSON shape `{"n": k, "re": [[...]], "im": [[...]]}` of a constant form.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConstantFormJson {
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

impl From<&HermitianMatrix> for ConstantFormJson {
    fn from(m: &HermitianMatrix) -> Self {
        Self {
            n: m.dim(),
            re: m.real_parts(),
            im: Some(m.imag_parts()),
        }
    }
}

impl From<HermitianMatrix> for ConstantFormJson {
    fn from(m: HermitianMatrix) -> Self {
        (&m).into()
    }
}

impl TryFrom<ConstantFormJson> for HermitianMatrix {
    type Error = Error;
    fn try_from(j: ConstantFormJson) -> Result<Self> {
        (&j).try_into()
    }
}

impl TryFrom<&ConstantFormJson> for HermitianMatrix {
    type Error = Error;
    fn try_from(j: &ConstantFormJson) -> Result<Self> {
        let im = j
            .im
            .clone()
            .unwrap_or_else(|| vec![vec![0.0; j.re.len()]; j.re.len()]);
        let m = HermitianMatrix::from_parts(&j.re, &im)?;
        if m.dim() != j.n {
            return Err(Error::DimensionMismatch {
                expected: j.n,
                found: m.dim(),
            });
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample3() -> HermitianMatrix {
        HermitianMatrix::from_upper(3, |j, k| match (j, k) {
            (0, 0) => Complex64::new(4.0, 0.0),
            (1, 1) => Complex64::new(3.0, 0.0),
            (2, 2) => Complex64::new(2.0, 0.0),
            (0, 1) => Complex64::new(0.5, 0.25),
            (0, 2) => Complex64::new(-0.3, 0.1),
            _ => Complex64::new(0.2, -0.4),
        })
    }

    #[test]
    fn det_matches_eigen_product() {
        let m = sample3();
        let prod: f64 = m.eigenvalues().iter().product();
        assert!((m.det() - prod).abs() < 1e-12 * prod.abs());
    }

    #[test]
    fn inverse_and_adjugate() {
        let m = sample3();
        let inv = m.inverse().unwrap();
        // m * inv should be identity: check via trace of relative form
        assert!((m.trace_of(&m).unwrap() - 3.0).abs() < 1e-13);
        let tr = inv.hs_inner(&m);
        assert!((tr - 3.0).abs() < 1e-12);
    }

    #[test]
    fn relative_eigenvalue_of_diagonal_pair() {
        let a = HermitianMatrix::diag(&[3.0, -1.0]);
        let w = HermitianMatrix::diag(&[1.0, 2.0]);
        let m = a.min_eigenvalue_relative(&w).unwrap();
        assert!((m + 0.5).abs() < 1e-15);
    }

    #[test]
    fn from_parts_rejects_non_hermitian() {
        let re = vec![vec![1.0, 2.0], vec![0.0, 1.0]];
        let im = vec![vec![0.0; 2]; 2];
        assert!(matches!(
            HermitianMatrix::from_parts(&re, &im),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn eigen_decomposition_reconstructs() {
        let m = sample3();
        let (vals, vecs) = m.eigen_decomposition();
        let mut r = HermitianMatrix::zeros(3);
        for (v, e) in vals.iter().zip(&vecs) {
            r = r + HermitianMatrix::outer(e) * *v;
        }
        assert!((r - m).frobenius_norm() < 1e-12);
    }
}
