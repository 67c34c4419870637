//! Hermitian (1,1) forms `α = Σ H_jk i dz_j ∧ dz̄_k` and their intersection calculus.
//!
//! Wedge products of (1,1) forms reduce pointwise to mixed discriminants:
//! `α_1 ∧ … ∧ α_n = n! · MD(H_1, …, H_n) · Π_j (i dz_j ∧ dz̄_j)`, so with the
//! `2^n` volume convention `∫ α_1 ∧ … ∧ α_n = n! · ∫ MD(H_1, …, H_n) (i dz∧dz̄)^n`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compensated_sum, ScalarField, Torus, TrigPoly, MAX_REAL_DIM};
use crate::matrix::{HermitianMatrix, HERMITIAN_TOL};

fn factorial(n: usize) -> f64 {
    (1..=n).product::<usize>() as f64
}

/// Number of reals stored per grid point: `n` diagonal entries plus
/// `(re, im)` for each upper off-diagonal entry.
pub(crate) fn packed_len(n: usize) -> usize {
    n * n
}

pub(crate) fn pack(m: &HermitianMatrix, out: &mut [f64]) {
    let n = m.dim();
    for j in 0..n {
        out[j] = m.get(j, j).re;
    }
    let mut o = n;
    for j in 0..n {
        for k in (j + 1)..n {
            let c = m.get(j, k);
            out[o] = c.re;
            out[o + 1] = c.im;
            o += 2;
        }
    }
}

pub(crate) fn unpack(n: usize, v: &[f64]) -> HermitianMatrix {
    let mut pairs = [[Complex64::new(0.0, 0.0); 3]; 3];
    for j in 0..n {
        pairs[j][j] = Complex64::new(v[j], 0.0);
    }
    let mut o = n;
    for j in 0..n {
        for k in (j + 1)..n {
            pairs[j][k] = Complex64::new(v[o], v[o + 1]);
            o += 2;
        }
    }
    HermitianMatrix::from_upper(n, |j, k| pairs[j][k])
}

#[derive(Clone, Debug)]
pub enum FormData {
    Constant(HermitianMatrix),
    /// Packed per-point coefficients, point-major.
    Grid(Vec<f64>),
    /// Entry `(j,k)` at index `j*n + k`.
    Fourier(Vec<TrigPoly>),
}

/// A (1,1) form on a torus: constant, sampled on the grid, or an exact
/// trigonometric polynomial per coefficient.
#[derive(Clone, Debug)]
pub struct HermitianFormField {
    torus: Arc<Torus>,
    data: FormData,
}

impl HermitianFormField {
    pub fn constant(torus: &Arc<Torus>, m: HermitianMatrix) -> Result<Self> {
        if m.dim() != torus.n() {
            return Err(Error::DimensionMismatch {
                expected: torus.n(),
                found: m.dim(),
            });
        }
        Ok(Self {
            torus: Arc::clone(torus),
            data: FormData::Constant(m),
        })
    }

    pub fn from_packed(torus: &Arc<Torus>, packed: Vec<f64>) -> Result<Self> {
        torus.require_grid()?;
        let want = packed_len(torus.n()) * torus.point_count();
        if packed.len() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                found: packed.len(),
            });
        }
        Ok(Self {
            torus: Arc::clone(torus),
            data: FormData::Grid(packed),
        })
    }

    pub fn from_matrices(torus: &Arc<Torus>, mats: &[HermitianMatrix]) -> Result<Self> {
        let n = torus.n();
        let stride = packed_len(n);
        let mut packed = vec![0.0; stride * mats.len()];
        for (p, m) in mats.iter().enumerate() {
            if m.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.dim(),
                });
            }
            pack(m, &mut packed[p * stride..(p + 1) * stride]);
        }
        Self::from_packed(torus, packed)
    }

    /// Builds a field from `n²` coefficient polynomials, checking
    /// `H_kj(m) = conj(H_jk(-m))`.
    pub fn from_fourier_entries(torus: &Arc<Torus>, entries: Vec<TrigPoly>) -> Result<Self> {
        let n = torus.n();
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        let mut defect: f64 = 0.0;
        for j in 0..n {
            for k in j..n {
                let a = &entries[j * n + k];
                let b = &entries[k * n + j];
                for (m, c) in a.terms().chain(b.terms()) {
                    let mut neg = [0; MAX_REAL_DIM];
                    for i in 0..MAX_REAL_DIM {
                        neg[i] = -m[i];
                    }
                    let d = (b.coefficient(m) - a.coefficient(&neg).conj()).norm();
                    defect = defect.max(d / (1.0 + c.norm()));
                }
            }
        }
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Self {
            torus: Arc::clone(torus),
            data: FormData::Fourier(entries),
        })
    }

    pub fn torus(&self) -> &Arc<Torus> {
        &self.torus
    }

    pub fn n(&self) -> usize {
        self.torus.n()
    }

    pub fn data(&self) -> &FormData {
        &self.data
    }

    pub fn constant_value(&self) -> Option<HermitianMatrix> {
        match &self.data {
            FormData::Constant(m) => Some(*m),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.data, FormData::Constant(_))
    }

    pub(crate) fn packed(&self) -> Option<&[f64]> {
        match &self.data {
            FormData::Grid(v) => Some(v),
            _ => None,
        }
    }

    /// Number of sample points used for pointwise queries.
    pub fn sample_count(&self) -> usize {
        match self.data {
            FormData::Constant(_) => 1,
            _ => self.torus.point_count(),
        }
    }

    /// Coefficient matrix at grid point `p` (any `p` for constant forms).
    pub fn at(&self, p: usize) -> HermitianMatrix {
        let n = self.n();
        match &self.data {
            FormData::Constant(m) => *m,
            FormData::Grid(v) => {
                let s = packed_len(n);
                unpack(n, &v[p * s..(p + 1) * s])
            }
            FormData::Fourier(e) => {
                let s = self.torus.fractional_point(p);
                HermitianMatrix::from_upper(n, |j, k| {
                    // H_jk(s) = Σ c_m e^{2πi m·s}; real-part trick does not apply off-diagonal
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (m, c) in e[j * n + k].terms() {
                        let phase: f64 = (0..self.torus.real_dim())
                            .map(|a| m[a] as f64 * s[a])
                            .sum();
                        acc += c * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase);
                    }
                    acc
                })
            }
        }
    }

    fn entry_polys(&self) -> Option<Vec<TrigPoly>> {
        let n = self.n();
        let d = self.torus.real_dim();
        match &self.data {
            FormData::Constant(m) => {
                let mut out = Vec::with_capacity(n * n);
                for j in 0..n {
                    for k in 0..n {
                        let mut p = TrigPoly::zero(d);
                        let c = m.get(j, k);
                        if c != Complex64::new(0.0, 0.0) {
                            p.add_term([0; MAX_REAL_DIM], c);
                        }
                        out.push(p);
                    }
                }
                Some(out)
            }
            FormData::Fourier(e) => Some(e.clone()),
            FormData::Grid(_) => None,
        }
    }

    /// Samples the form on the grid.
    pub fn to_grid(&self) -> Result<Self> {
        self.torus.require_grid()?;
        let n = self.n();
        let s = packed_len(n);
        match &self.data {
            FormData::Grid(_) => Ok(self.clone()),
            FormData::Constant(m) => {
                let mut one = vec![0.0; s];
                pack(m, &mut one);
                let packed = one.iter().copied().cycle().take(s * self.torus.point_count()).collect();
                Self::from_packed(&self.torus, packed)
            }
            FormData::Fourier(e) => {
                let len = self.torus.point_count();
                let mut packed = vec![0.0; s * len];
                let mut o = n;
                for j in 0..n {
                    let v = self.torus.synthesize_real(e[j * n + j].to_spectrum(&self.torus));
                    for p in 0..len {
                        packed[p * s + j] = v[p];
                    }
                    for k in (j + 1)..n {
                        let v = self.torus.synthesize(e[j * n + k].to_spectrum(&self.torus))?;
                        for p in 0..len {
                            packed[p * s + o] = v[p].re;
                            packed[p * s + o + 1] = v[p].im;
                        }
                        o += 2;
                    }
                }
                Self::from_packed(&self.torus, packed)
            }
        }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.torus.same_as(&other.torus) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch)
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let data = match (&self.data, &other.data) {
            (FormData::Constant(a), FormData::Constant(b)) => FormData::Constant(*a + *b),
            (FormData::Grid(_), _) | (_, FormData::Grid(_)) => {
                let a = self.to_grid()?;
                let b = other.to_grid()?;
                let (a, b) = (a.packed().unwrap(), b.packed().unwrap());
                FormData::Grid(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            _ => {
                let a = self.entry_polys().unwrap();
                let b = other.entry_polys().unwrap();
                FormData::Fourier(a.iter().zip(&b).map(|(x, y)| x.add(y)).collect())
            }
        };
        Ok(Self {
            torus: Arc::clone(&self.torus),
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        let data = match &self.data {
            FormData::Constant(m) => FormData::Constant(*m * s),
            FormData::Grid(v) => FormData::Grid(v.iter().map(|x| x * s).collect()),
            FormData::Fourier(e) => FormData::Fourier(e.iter().map(|p| p.scale(s)).collect()),
        };
        Self {
            torus: Arc::clone(&self.torus),
            data,
        }
    }

    /// `self + i∂∂̄u`.
    pub fn plus_ddbar(&self, u: &ScalarField) -> Result<Self> {
        self.add(&crate::geometry::ddbar(u))
    }

    /// Pointwise determinant as a grid field.
    pub fn det_field(&self) -> Result<ScalarField> {
        match &self.data {
            FormData::Constant(m) => Ok(ScalarField::constant(&self.torus, m.det())),
            _ => {
                let g = self.to_grid()?;
                let vals = (0..self.torus.point_count()).map(|p| g.at(p).det()).collect();
                ScalarField::from_grid(&self.torus, vals)
            }
        }
    }
}

/// Symmetric multilinear polarization of `det`, normalized so `MD(A,…,A) = det A`.
pub fn mixed_discriminant(mats: &[HermitianMatrix]) -> Result<f64> {
    let n = mats.len();
    if n == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    for m in mats {
        if m.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.dim(),
            });
        }
    }
    Ok(md_unchecked(mats))
}

pub(crate) fn md_unchecked(mats: &[HermitianMatrix]) -> f64 {
    let n = mats.len();
    match n {
        1 => mats[0].get(0, 0).re,
        2 => {
            let (a, b) = (&mats[0], &mats[1]);
            0.5 * (a.get(0, 0).re * b.get(1, 1).re + a.get(1, 1).re * b.get(0, 0).re
                - 2.0 * (a.get(0, 1) * b.get(0, 1).conj()).re)
        }
        _ => {
            let mut total = 0.0;
            for s in 1u32..(1 << n) {
                let mut sum = HermitianMatrix::zeros(n);
                for (i, m) in mats.iter().enumerate() {
                    if s & (1 << i) != 0 {
                        sum = sum + *m;
                    }
                }
                let sign = if (n as u32 - s.count_ones()).is_multiple_of(2) { 1.0 } else { -1.0 };
                total += sign * sum.det();
            }
            total / factorial(n)
        }
    }
}

/// `∫ α_1 ∧ … ∧ α_n` for constant forms on a lattice of the given covolume.
pub fn constant_wedge(covolume: f64, mats: &[HermitianMatrix]) -> Result<f64> {
    let n = mats.len();
    Ok(factorial(n) * (1u32 << n) as f64 * covolume * mixed_discriminant(mats)?)
}

fn poly_det_mean(e: &[TrigPoly], n: usize) -> Result<f64> {
    let at = |j: usize, k: usize| &e[j * n + k];
    let v = match n {
        1 => at(0, 0).dc(),
        2 => (at(0, 0).mean_of_product(at(1, 1)) - at(0, 1).mean_of_product(at(1, 0))).re,
        3 => {
            let minor = |r0: usize, r1: usize, c0: usize, c1: usize| -> Result<TrigPoly> {
                let a = at(r0, c0).mul(at(r1, c1))?;
                let b = at(r0, c1).mul(at(r1, c0))?;
                Ok(a.add(&b.scale(-1.0)))
            };
            let m0 = minor(1, 2, 1, 2)?;
            let m1 = minor(1, 2, 0, 2)?;
            let m2 = minor(1, 2, 0, 1)?;
            (at(0, 0).mean_of_product(&m0) - at(0, 1).mean_of_product(&m1)
                + at(0, 2).mean_of_product(&m2))
            .re
        }
        _ => unreachable!(),
    };
    Ok(v)
}

/// `∫ α_1 ∧ … ∧ α_n`.
///
/// Constant forms use the closed formula, trigonometric forms integrate the
/// mixed discriminant exactly by coefficient convolution, and grid forms use
/// the periodic trapezoid rule.
pub fn wedge_integral(forms: &[&HermitianFormField]) -> Result<f64> {
    let first = forms.first().ok_or(Error::DimensionMismatch {
        expected: 1,
        found: 0,
    })?;
    let torus = first.torus();
    let n = torus.n();
    if forms.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: forms.len(),
        });
    }
    for f in forms {
        if !f.torus().same_as(torus) {
            return Err(Error::GeometryMismatch);
        }
    }
    let scale = factorial(n);
    if let Some(mats) = forms.iter().map(|f| f.constant_value()).collect::<Option<Vec<_>>>() {
        return constant_wedge(torus.covolume(), &mats);
    }
    if forms.iter().all(|f| !matches!(f.data, FormData::Grid(_))) {
        let polys: Vec<_> = forms.iter().map(|f| f.entry_polys().unwrap()).collect();
        let mut total = 0.0;
        for s in 1u32..(1 << n) {
            let mut sum = vec![TrigPoly::zero(torus.real_dim()); n * n];
            for (i, p) in polys.iter().enumerate() {
                if s & (1 << i) != 0 {
                    for (acc, q) in sum.iter_mut().zip(p) {
                        *acc = acc.add(q);
                    }
                }
            }
            let sign = if (n as u32 - s.count_ones()).is_multiple_of(2) { 1.0 } else { -1.0 };
            total += sign * poly_det_mean(&sum, n)?;
        }
        // total = n! · mean(MD)
        return Ok(total * torus.volume());
    }
    torus.require_grid()?;
    let grids: Vec<_> = forms
        .iter()
        .map(|f| if f.is_constant() { Ok((*f).clone()) } else { f.to_grid() })
        .collect::<Result<_>>()?;
    let len = torus.point_count();
    let mut mats = vec![HermitianMatrix::zeros(n); n];
    let acc = compensated_sum((0..len).map(|p| {
        for (m, g) in mats.iter_mut().zip(&grids) {
            *m = g.at(p);
        }
        md_unchecked(&mats)
    }));
    Ok(scale * torus.volume() * acc / len as f64)
}

/// Pointwise `tr_χ β = n·MD(β, χ, …, χ)/det χ = tr(χ^{-1} β)`.
pub fn trace_with_respect_to(chi: &HermitianFormField, beta: &HermitianFormField) -> Result<ScalarField> {
    if !chi.torus().same_as(beta.torus()) {
        return Err(Error::GeometryMismatch);
    }
    let torus = chi.torus();
    let n = torus.n();
    if let (Some(c), Some(b)) = (chi.constant_value(), beta.constant_value()) {
        let v = c.trace_of(&b).map_err(|_| Error::Positivity {
            point: 0,
            value: c.min_eigenvalue(),
        })?;
        return Ok(ScalarField::constant(torus, v));
    }
    if let (Some(c), FormData::Fourier(e)) = (chi.constant_value(), &beta.data) {
        if !c.is_positive_definite() {
            return Err(Error::Positivity {
                point: 0,
                value: c.min_eigenvalue(),
            });
        }
        let w = c.inverse().expect("positive definite");
        let mut out = TrigPoly::zero(torus.real_dim());
        for j in 0..n {
            for k in 0..n {
                let wkj = w.get(k, j);
                for (m, coef) in e[j * n + k].terms() {
                    out.add_term(*m, wkj * coef);
                }
            }
        }
        return ScalarField::from_trig(torus, out.pruned(0.0));
    }
    torus.require_grid()?;
    let len = torus.point_count();
    let mut vals = Vec::with_capacity(len);
    let c_grid = if chi.is_constant() { chi.clone() } else { chi.to_grid()? };
    let b_grid = if beta.is_constant() { beta.clone() } else { beta.to_grid()? };
    for p in 0..len {
        let c = c_grid.at(p);
        let v = c.trace_of(&b_grid.at(p)).map_err(|_| Error::Positivity {
            point: p,
            value: c.min_eigenvalue(),
        })?;
        vals.push(v);
    }
    ScalarField::from_grid(torus, vals)
}

/// Largest `m` with `α ⪰ m·ω` at every sample point.
///
/// Trigonometric forms without a grid are sampled pointwise on the torus grid.
pub fn positivity_margin(alpha: &HermitianFormField, omega: &HermitianMatrix) -> f64 {
    let l = match omega.cholesky() {
        Some(l) => l,
        None => return f64::NEG_INFINITY,
    };
    let mut margin = f64::INFINITY;
    match alpha.data() {
        FormData::Constant(m) => return m.normalized_by(&l).min_eigenvalue(),
        _ => {
            for p in 0..alpha.sample_count() {
                margin = margin.min(alpha.at(p).normalized_by(&l).min_eigenvalue());
            }
        }
    }
    margin
}

/// `∫ α^k ∧ β^{n-k}` for `k = 0..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionTable {
    pub n: usize,
    /// `values[k] = ∫ α^k ∧ β^{n-k}`.
    pub values: Vec<f64>,
}

impl IntersectionTable {
    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// `∫ α^n`.
    pub fn top(&self) -> f64 {
        self.values[self.n]
    }

    /// The table for the swapped pair `(β, α)`.
    pub fn swapped(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        Self { n: self.n, values }
    }
}

pub fn intersection_numbers(alpha: &HermitianFormField, beta: &HermitianFormField) -> Result<IntersectionTable> {
    if !alpha.torus().same_as(beta.torus()) {
        return Err(Error::GeometryMismatch);
    }
    let a = alpha.constant_value().ok_or(Error::NonConstant)?;
    let b = beta.constant_value().ok_or(Error::NonConstant)?;
    intersection_numbers_constant(alpha.torus().covolume(), &a, &b)
}

pub fn intersection_numbers_constant(
    covolume: f64,
    a: &HermitianMatrix,
    b: &HermitianMatrix,
) -> Result<IntersectionTable> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let n = a.dim();
    let values = (0..=n)
        .map(|k| {
            let mats: Vec<_> = (0..n).map(|i| if i < k { *a } else { *b }).collect();
            constant_wedge(covolume, &mats)
        })
        .collect::<Result<_>>()?;
    Ok(IntersectionTable { n, values })
}

pub(crate) fn fact(n: usize) -> f64 {
    factorial(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ddbar, make_torus};

    fn diag(v: &[f64]) -> HermitianMatrix {
        HermitianMatrix::diag(v)
    }

    #[test]
    fn md_examples() {
        let i2 = HermitianMatrix::identity(2);
        assert_eq!(mixed_discriminant(&[i2, i2]).unwrap(), 1.0);
        assert_eq!(mixed_discriminant(&[diag(&[1.0, 0.0]), diag(&[0.0, 1.0])]).unwrap(), 0.5);
        assert_eq!(mixed_discriminant(&[diag(&[2.0, 3.0]), diag(&[5.0, 7.0])]).unwrap(), 14.5);
        assert!(mixed_discriminant(&[i2]).is_err());
    }

    #[test]
    fn md_n3_matches_det() {
        let a = HermitianMatrix::from_parts(
            &[vec![2.0, 0.3, 0.1], vec![0.3, 1.5, -0.2], vec![0.1, -0.2, 1.0]],
            &[vec![0.0, 0.1, -0.4], vec![-0.1, 0.0, 0.2], vec![0.4, -0.2, 0.0]],
        )
        .unwrap();
        assert!((mixed_discriminant(&[a, a, a]).unwrap() - a.det()).abs() < 1e-13);
    }

    #[test]
    fn wedge_examples() {
        let t = make_torus(2, 8, None).unwrap();
        let w = HermitianFormField::constant(&t, HermitianMatrix::identity(2)).unwrap();
        let a = HermitianFormField::constant(&t, diag(&[1.0, 4.0])).unwrap();
        assert_eq!(wedge_integral(&[&w, &w]).unwrap(), 8.0);
        assert_eq!(wedge_integral(&[&a, &w]).unwrap(), 20.0);
        let other = make_torus(2, 16, None).unwrap();
        let w2 = HermitianFormField::constant(&other, HermitianMatrix::identity(2)).unwrap();
        assert_eq!(wedge_integral(&[&w, &w2]), Err(Error::GeometryMismatch));
    }

    #[test]
    fn trace_examples() {
        let t = make_torus(2, 8, None).unwrap();
        let c = HermitianFormField::constant(&t, diag(&[2.0, 1.0])).unwrap();
        let b = HermitianFormField::constant(&t, diag(&[4.0, 3.0])).unwrap();
        assert_eq!(trace_with_respect_to(&c, &b).unwrap().mean(), 5.0);
        assert!((trace_with_respect_to(&c, &c).unwrap().mean() - 2.0).abs() < 1e-15);
        let bad = HermitianFormField::constant(&t, diag(&[1.0, -1.0])).unwrap();
        assert!(matches!(trace_with_respect_to(&bad, &b), Err(Error::Positivity { .. })));
    }

    #[test]
    fn margin_examples() {
        let t = make_torus(2, 8, None).unwrap();
        let i = HermitianMatrix::identity(2);
        let a = HermitianFormField::constant(&t, i * 2.0).unwrap();
        assert!((positivity_margin(&a, &i) - 2.0).abs() < 1e-15);
        let a = HermitianFormField::constant(&t, diag(&[3.0, -1.0])).unwrap();
        assert!((positivity_margin(&a, &i) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn intersection_examples() {
        let t = make_torus(2, 8, None).unwrap();
        let a = HermitianFormField::constant(&t, HermitianMatrix::identity(2) * 2.0).unwrap();
        let z = HermitianFormField::constant(&t, HermitianMatrix::zeros(2)).unwrap();
        let tab = intersection_numbers(&a, &z).unwrap();
        assert_eq!(tab.values, vec![0.0, 0.0, 32.0]);
        let e = HermitianFormField::constant(&t, HermitianMatrix::identity(2) * 0.3).unwrap();
        let tab = intersection_numbers(&a, &e).unwrap();
        assert!((tab.get(1) - 16.0 * 0.3).abs() < 1e-12);
        let tab = intersection_numbers(&a, &a).unwrap();
        assert!(tab.values.iter().all(|&v| v == 32.0));
        let u = ScalarField::from_fn(&t, |x| x[0].sin()).unwrap();
        let g = a.plus_ddbar(&u).unwrap();
        assert_eq!(intersection_numbers(&g, &a), Err(Error::NonConstant));
    }

    #[test]
    fn fourier_and_grid_paths_agree() {
        let t = make_torus(2, 16, None).unwrap();
        let u = TrigPoly::cos_mode(4, &[1, 0, 0, 1], 0.02).add(&TrigPoly::sin_mode(4, &[0, 1, 1, 0], 0.03));
        let uf = ScalarField::from_trig(&t, u).unwrap();
        let ug = uf.to_grid().unwrap();
        let w = HermitianFormField::constant(&t, HermitianMatrix::identity(2)).unwrap();
        let af = w.plus_ddbar(&uf).unwrap();
        let ag = w.plus_ddbar(&ug).unwrap();
        let vf = wedge_integral(&[&af, &af]).unwrap();
        let vg = wedge_integral(&[&ag, &ag]).unwrap();
        assert!((vf - 8.0).abs() < 1e-13, "{vf}");
        assert!((vg - 8.0).abs() < 1e-12, "{vg}");
        let hf = ddbar(&uf).to_grid().unwrap();
        let hg = ddbar(&ug);
        for p in (0..t.point_count()).step_by(31) {
            assert!((hf.at(p) - hg.at(p)).frobenius_norm() < 1e-11);
        }
    }
}
