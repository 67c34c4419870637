//! Flat complex tori `C^n / Λ`, periodic grids and spectral calculus.
//!
//! Real coordinates are ordered `(x_1, y_1, ..., x_n, y_n)` with
//! `z_j = x_j + i y_j`. A point is `x = P s` where the columns of `P` are the
//! `2n` period vectors and `s ∈ [0,1)^{2n}` are lattice (fractional)
//! coordinates; grid axis `a` samples `s_a = i_a / N`.
//!
//! Fourier modes are `exp(2πi m·s)` for `m ∈ Z^{2n}`, with real wave vector
//! `k = 2π P^{-T} m`. Writing `κ_j = k_{x_j} - i k_{y_j}`, the operators
//! `∂/∂z_j` and `∂/∂z̄_k` have symbols `(i/2) κ_j` and `(i/2) conj(κ_k)`, so
//! `∂²/∂z_j∂z̄_k` has symbol `-κ_j conj(κ_k) / 4`.
//!
//! Top-degree forms are integrated with `i dz ∧ dz̄ = 2 dx ∧ dy`, so every
//! integral of a density carries `2^n` relative to Lebesgue measure.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::forms::HermitianFormField;
use crate::matrix::HermitianMatrix;

/// Maximum number of real dimensions (n = 3).
pub const MAX_REAL_DIM: usize = 6;

/// Lattice-integer Fourier mode, padded with zeros beyond `2n`.
pub type Mode = [i32; MAX_REAL_DIM];

/// Tolerance on the mean of a Poisson right-hand side, relative to `max(1, sup|rhs|)`.
pub const POISSON_MEAN_TOL: f64 = 1e-10;

const FFT_TILE: usize = 16;

struct FftPlan {
    grid: usize,
    axes: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPlan {
    fn new(grid: usize, axes: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            axes,
            forward: planner.plan_fft_forward(grid),
            inverse: planner.plan_fft_inverse(grid),
        }
    }

    /// Unnormalized multi-dimensional transform, in place.
    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let fft = if inverse { &self.inverse } else { &self.forward };
        let n = self.grid;
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut tile = vec![Complex64::new(0.0, 0.0); FFT_TILE * n];
        for axis in 0..self.axes {
            let stride = n.pow((self.axes - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = n * stride;
            for base in (0..data.len()).step_by(block) {
                let mut c0 = 0;
                while c0 < stride {
                    let w = FFT_TILE.min(stride - c0);
                    for i in 0..n {
                        let row = base + i * stride + c0;
                        for c in 0..w {
                            tile[c * n + i] = data[row + c];
                        }
                    }
                    fft.process_with_scratch(&mut tile[..w * n], &mut scratch);
                    for i in 0..n {
                        let row = base + i * stride + c0;
                        for c in 0..w {
                            data[row + c] = tile[c * n + i];
                        }
                    }
                    c0 += w;
                }
            }
        }
    }
}

/// Neumaier-compensated sum; grid means run over up to ~10^7 samples.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// A flat torus `C^n / Λ` with a uniform periodic grid.
pub struct Torus {
    n: usize,
    grid: usize,
    periods: Vec<[f64; MAX_REAL_DIM]>,
    inverse_periods: Vec<[f64; MAX_REAL_DIM]>,
    wave_columns: Vec<[f64; MAX_REAL_DIM]>,
    covolume: f64,
    orthogonal: bool,
    plan: Option<FftPlan>,
    /// Per-mode `i∂∂̄` symbols `[h11, h22, re h12, im h12]`, built on first use.
    symbols: OnceLock<Vec<[f64; 4]>>,
}

impl fmt::Debug for Torus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Torus")
            .field("n", &self.n)
            .field("grid", &self.grid)
            .field("covolume", &self.covolume)
            .finish()
    }
}

fn grid_is_admissible(grid: usize) -> bool {
    if grid < 8 {
        return false;
    }
    let mut g = grid;
    if g.is_multiple_of(3) {
        g /= 3;
    }
    g.is_power_of_two()
}

/// Builds a torus of complex dimension `n` with `grid` points per real axis.
///
/// `periods`, if given, holds `2n` real period vectors of length `2n`; the
/// default is the unit lattice `Z^n + i Z^n`. Grid resolutions are powers of
/// two, optionally times three (e.g. 48) for mixed-radix transforms.
pub fn make_torus(n: usize, grid: usize, periods: Option<Vec<Vec<f64>>>) -> Result<Arc<Torus>> {
    if !(1..=3).contains(&n) {
        return Err(Error::Config(format!("complex dimension {n} not in 1..=3")));
    }
    if !grid_is_admissible(grid) {
        return Err(Error::Config(format!(
            "grid {grid} must be >= 8 and a power of two (or three times one)"
        )));
    }
    let d = 2 * n;
    let p = match periods {
        None => DMatrix::<f64>::identity(d, d),
        Some(cols) => {
            if cols.len() != d || cols.iter().any(|c| c.len() != d) {
                return Err(Error::Config(format!(
                    "expected {d} period vectors of length {d}"
                )));
            }
            DMatrix::from_fn(d, d, |r, c| cols[c][r])
        }
    };
    let covolume = p.determinant().abs();
    if !(covolume > 1e-12) || !covolume.is_finite() {
        return Err(Error::Config("period lattice is degenerate".into()));
    }
    let p_inv = p.clone().try_inverse().ok_or_else(|| Error::Config("period lattice is degenerate".into()))?;
    let col = |m: &DMatrix<f64>, c: usize| {
        let mut v = [0.0; MAX_REAL_DIM];
        for r in 0..d {
            v[r] = m[(r, c)];
        }
        v
    };
    let periods: Vec<_> = (0..d).map(|c| col(&p, c)).collect();
    // rows of P^{-1}, i.e. s = P^{-1} x
    let inverse_periods: Vec<_> = (0..d).map(|c| col(&p_inv.transpose(), c)).collect();
    // k = 2π P^{-T} m: column a of 2π P^{-T}
    let wave_columns: Vec<_> = (0..d)
        .map(|a| {
            let mut v = col(&p_inv.transpose(), a);
            v.iter_mut().for_each(|x| *x *= 2.0 * PI);
            v
        })
        .collect();
    let mut orthogonal = true;
    for a in 0..d {
        for b in (a + 1)..d {
            let dot: f64 = (0..d).map(|r| periods[a][r] * periods[b][r]).sum();
            if dot.abs() > 1e-14 {
                orthogonal = false;
            }
        }
    }
    let plan = (n <= 2).then(|| FftPlan::new(grid, d));
    Ok(Arc::new(Torus {
        n,
        grid,
        periods,
        inverse_periods,
        wave_columns,
        covolume,
        orthogonal,
        plan,
        symbols: OnceLock::new(),
    }))
}

impl Torus {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    pub fn covolume(&self) -> f64 {
        self.covolume
    }

    /// `∫_X 1 · (i dz ∧ dz̄)^n = 2^n · covolume`.
    pub fn volume(&self) -> f64 {
        (1u32 << self.n) as f64 * self.covolume
    }

    pub fn periods(&self) -> Vec<Vec<f64>> {
        let d = self.real_dim();
        self.periods.iter().map(|c| c[..d].to_vec()).collect()
    }

    pub fn has_grid(&self) -> bool {
        self.plan.is_some()
    }

    /// Number of grid points, `grid^(2n)`.
    pub fn point_count(&self) -> usize {
        self.grid.pow(self.real_dim() as u32)
    }

    /// Largest grid spacing along any lattice axis.
    pub fn spacing(&self) -> f64 {
        let d = self.real_dim();
        self.periods
            .iter()
            .map(|c| c[..d].iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
            / self.grid as f64
    }

    pub fn same_as(&self, other: &Torus) -> bool {
        std::ptr::eq(self, other)
            || (self.n == other.n
                && self.grid == other.grid
                && self.periods == other.periods)
    }

    pub fn require_grid(&self) -> Result<()> {
        if self.plan.is_some() {
            Ok(())
        } else {
            Err(Error::GridUnavailable)
        }
    }

    /// Lattice coordinates of a grid point.
    pub fn fractional_point(&self, flat: usize) -> [f64; MAX_REAL_DIM] {
        let d = self.real_dim();
        let mut s = [0.0; MAX_REAL_DIM];
        let mut rem = flat;
        for a in (0..d).rev() {
            s[a] = (rem % self.grid) as f64 / self.grid as f64;
            rem /= self.grid;
        }
        s
    }

    pub fn to_real(&self, s: &[f64]) -> [f64; MAX_REAL_DIM] {
        let d = self.real_dim();
        let mut x = [0.0; MAX_REAL_DIM];
        for (a, col) in self.periods.iter().enumerate().take(d) {
            for r in 0..d {
                x[r] += col[r] * s[a];
            }
        }
        x
    }

    pub fn to_fractional(&self, x: &[f64]) -> [f64; MAX_REAL_DIM] {
        let d = self.real_dim();
        let mut s = [0.0; MAX_REAL_DIM];
        for (a, row) in self.inverse_periods.iter().enumerate().take(d) {
            s[a] = (0..d).map(|r| row[r] * x[r]).sum();
        }
        s
    }

    /// Real coordinates of a grid point.
    pub fn point(&self, flat: usize) -> [f64; MAX_REAL_DIM] {
        self.to_real(&self.fractional_point(flat))
    }

    /// Shortest real displacement from `from` to `to` (both in lattice
    /// coordinates), over all lattice translates.
    pub fn displacement(&self, from: &[f64], to: &[f64]) -> [f64; MAX_REAL_DIM] {
        let d = self.real_dim();
        let mut ds = [0.0; MAX_REAL_DIM];
        for a in 0..d {
            let t = to[a] - from[a];
            ds[a] = t - t.round();
        }
        if self.orthogonal {
            return self.to_real(&ds);
        }
        let mut best = self.to_real(&ds);
        let mut best_norm: f64 = best.iter().map(|x| x * x).sum();
        let images = 3usize.pow(d as u32);
        for code in 0..images {
            let mut c = code;
            let mut shifted = ds;
            for v in shifted.iter_mut().take(d) {
                *v += (c % 3) as f64 - 1.0;
                c /= 3;
            }
            let x = self.to_real(&shifted);
            let norm: f64 = x.iter().map(|v| v * v).sum();
            if norm < best_norm {
                best_norm = norm;
                best = x;
            }
        }
        best
    }

    pub fn distance(&self, from: &[f64], to: &[f64]) -> f64 {
        self.displacement(from, to).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub(crate) fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    pub(crate) fn axis_length(&self, a: usize) -> f64 {
        let d = self.real_dim();
        self.periods[a][..d].iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Signed frequency and Nyquist flag of grid index `i`.
    #[inline]
    fn frequency(&self, i: usize) -> (i64, bool) {
        let n = self.grid;
        if 2 * i == n {
            (-(i as i64), true)
        } else if 2 * i < n {
            (i as i64, false)
        } else {
            (i as i64 - n as i64, false)
        }
    }

    /// `κ_j = k_{x_j} - i k_{y_j}` for a lattice-integer mode.
    #[inline]
    pub fn kappa(&self, m: &[i64]) -> [Complex64; 3] {
        let d = self.real_dim();
        let mut k = [0.0; MAX_REAL_DIM];
        for (a, &ma) in m.iter().enumerate().take(d) {
            if ma != 0 {
                let col = &self.wave_columns[a];
                for r in 0..d {
                    k[r] += ma as f64 * col[r];
                }
            }
        }
        let mut kappa = [Complex64::new(0.0, 0.0); 3];
        for j in 0..self.n {
            kappa[j] = Complex64::new(k[2 * j], -k[2 * j + 1]);
        }
        kappa
    }

    /// Visits every grid frequency with its `κ` vector and Nyquist flag.
    pub(crate) fn for_each_wave(&self, mut f: impl FnMut(usize, &[Complex64; 3], bool)) {
        let d = self.real_dim();
        let n = self.grid;
        let mut idx = [0usize; MAX_REAL_DIM];
        let total = self.point_count();
        let mut m = [0i64; MAX_REAL_DIM];
        for flat in 0..total {
            let mut nyq = false;
            for a in 0..d {
                let (fa, na) = self.frequency(idx[a]);
                m[a] = fa;
                nyq |= na;
            }
            let kappa = self.kappa(&m[..d]);
            f(flat, &kappa, nyq);
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < n {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    /// Normalized Fourier coefficients of real grid values.
    pub fn spectrum(&self, values: &[f64]) -> Result<Vec<Complex64>> {
        let plan = self.plan.as_ref().ok_or(Error::GridUnavailable)?;
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        plan.transform(&mut data, false);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        Ok(data)
    }

    /// Grid values of a coefficient table (complex-valued in general).
    pub fn synthesize(&self, mut coeffs: Vec<Complex64>) -> Result<Vec<Complex64>> {
        let plan = self.plan.as_ref().ok_or(Error::GridUnavailable)?;
        plan.transform(&mut coeffs, true);
        Ok(coeffs)
    }

    pub(crate) fn synthesize_real(&self, coeffs: Vec<Complex64>) -> Vec<f64> {
        self.synthesize(coeffs)
            .expect("grid geometry")
            .into_iter()
            .map(|c| c.re)
            .collect()
    }

    /// Symbol of `tr_ω(i∂∂̄ ·)` at a mode, which is `-(κ* ω^{-1} κ)/4`.
    #[inline]
    pub(crate) fn trace_symbol(&self, omega_inv: &HermitianMatrix, kappa: &[Complex64; 3]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.n {
            for k in 0..self.n {
                // Σ W_kj H_jk with H_jk = -κ_j conj(κ_k)/4
                s += (omega_inv.get(k, j) * kappa[j] * kappa[k].conj()).re;
            }
        }
        -0.25 * s
    }

    /// Packed `i∂∂̄` coefficients of a field given by its spectrum.
    ///
    /// Layout per point: the `n` diagonal entries, then `(re, im)` of each
    /// upper off-diagonal entry. Nyquist modes are dropped.
    pub(crate) fn ddbar_packed(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let sym = self.symbols.get_or_init(|| {
            let mut out = vec![[0.0; 4]; self.point_count()];
            self.for_each_wave(|i, kappa, nyq| {
                if !nyq {
                    let off = kappa[0] * kappa[1].conj() * -0.25;
                    out[i] = [-0.25 * kappa[0].norm_sqr(), -0.25 * kappa[1].norm_sqr(), off.re, off.im];
                }
            });
            out
        });
        match self.n {
            1 => self.synthesize_real(coeffs.iter().zip(sym).map(|(c, s)| c * s[0]).collect()),
            2 => {
                let mut diag = Vec::with_capacity(coeffs.len());
                let mut off = Vec::with_capacity(coeffs.len());
                for (c, s) in coeffs.iter().zip(sym) {
                    diag.push(Complex64::new(c.re * s[0] - c.im * s[1], c.im * s[0] + c.re * s[1]));
                    off.push(c * Complex64::new(s[2], s[3]));
                }
                let diag = self.synthesize(diag).expect("grid geometry");
                let off = self.synthesize(off).expect("grid geometry");
                let mut out = Vec::with_capacity(4 * diag.len());
                for (d, o) in diag.iter().zip(&off) {
                    out.extend_from_slice(&[d.re, d.im, o.re, o.im]);
                }
                out
            }
            _ => unreachable!("grid path requires n <= 2"),
        }
    }
}

/// Coefficient table of a real trigonometric polynomial
/// `Σ c_m exp(2πi m·s)` with `c_{-m} = conj(c_m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    dims: usize,
    terms: BTreeMap<Mode, Complex64>,
}

/// Limits on the exact Fourier path.
pub const MAX_FOURIER_TERMS: usize = 1 << 20;
pub const MAX_FOURIER_MODE: i32 = 1 << 12;

fn negate(m: &Mode) -> Mode {
    let mut r = *m;
    r.iter_mut().for_each(|x| *x = -*x);
    r
}

impl TrigPoly {
    pub fn zero(dims: usize) -> Self {
        Self {
            dims,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dims: usize, c: f64) -> Self {
        let mut p = Self::zero(dims);
        p.add_term([0; MAX_REAL_DIM], Complex64::new(c, 0.0));
        p
    }

    /// `amp · cos(2π m·s)`.
    pub fn cos_mode(dims: usize, m: &[i32], amp: f64) -> Self {
        Self::phase_mode(dims, m, amp, 0.0)
    }

    /// `amp · sin(2π m·s)`.
    pub fn sin_mode(dims: usize, m: &[i32], amp: f64) -> Self {
        Self::phase_mode(dims, m, amp, -0.5 * PI)
    }

    /// `amp · cos(2π m·s + phase)`.
    pub fn phase_mode(dims: usize, m: &[i32], amp: f64, phase: f64) -> Self {
        let mut mode = [0; MAX_REAL_DIM];
        mode[..dims].copy_from_slice(&m[..dims]);
        let mut p = Self::zero(dims);
        let c = Complex64::from_polar(0.5 * amp, phase);
        if mode.iter().all(|&x| x == 0) {
            p.add_term(mode, Complex64::new(amp * phase.cos(), 0.0));
        } else {
            p.add_term(mode, c);
            p.add_term(negate(&mode), c.conj());
        }
        p
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn add_term(&mut self, m: Mode, c: Complex64) {
        let e = self.terms.entry(m).or_insert(Complex64::new(0.0, 0.0));
        *e += c;
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mode, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Mode) -> Complex64 {
        self.terms.get(m).copied().unwrap_or_default()
    }

    /// Mean over the torus (the zero-mode coefficient's real part).
    pub fn dc(&self) -> f64 {
        self.coefficient(&[0; MAX_REAL_DIM]).re
    }

    /// Largest `|m_a|` over all terms.
    pub fn bandwidth(&self) -> i32 {
        self.terms
            .keys()
            .flat_map(|m| m.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Largest deviation from `c_{-m} = conj(c_m)`.
    pub fn reality_defect(&self) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| (self.coefficient(&negate(m)) - c.conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dims: self.dims,
            terms: self.terms.iter().map(|(m, c)| (*m, c * s)).collect(),
        }
    }

    pub fn add(&self, other: &TrigPoly) -> Self {
        let mut r = self.clone();
        for (m, c) in &other.terms {
            r.add_term(*m, *c);
        }
        r
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut r = self.clone();
        r.add_term([0; MAX_REAL_DIM], Complex64::new(c, 0.0));
        r
    }

    pub fn map_coefficients(&self, f: impl Fn(&Mode, Complex64) -> Complex64) -> Self {
        Self {
            dims: self.dims,
            terms: self.terms.iter().map(|(m, c)| (*m, f(m, *c))).collect(),
        }
    }

    /// Exact product by coefficient convolution.
    pub fn mul(&self, other: &TrigPoly) -> Result<Self> {
        if self.terms.len().saturating_mul(other.terms.len()) > MAX_FOURIER_TERMS {
            return Err(Error::BandwidthOverflow(format!(
                "{} x {} terms",
                self.terms.len(),
                other.terms.len()
            )));
        }
        let mut r = Self::zero(self.dims);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let mut m = [0; MAX_REAL_DIM];
                for a in 0..MAX_REAL_DIM {
                    m[a] = ma[a] + mb[a];
                    if m[a].abs() > MAX_FOURIER_MODE {
                        return Err(Error::BandwidthOverflow(format!("mode {}", m[a])));
                    }
                }
                r.add_term(m, ca * cb);
            }
        }
        Ok(r)
    }

    /// Mean of `self · other` without forming the product.
    pub fn mean_of_product(&self, other: &TrigPoly) -> Complex64 {
        self.terms
            .iter()
            .map(|(m, c)| c * other.coefficient(&negate(m)))
            .sum()
    }

    /// Value at lattice coordinates `s`.
    pub fn eval(&self, s: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let phase: f64 = (0..self.dims).map(|a| m[a] as f64 * s[a]).sum();
                (c * Complex64::from_polar(1.0, 2.0 * PI * phase)).re
            })
            .sum()
    }

    /// Drops coefficients below `tol` in modulus.
    pub fn pruned(&self, tol: f64) -> Self {
        Self {
            dims: self.dims,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.norm() > tol)
                .map(|(m, c)| (*m, *c))
                .collect(),
        }
    }

    /// Spectrum array of the grid samples (exact point sampling, aliasing included).
    pub(crate) fn to_spectrum(&self, torus: &Torus) -> Vec<Complex64> {
        let d = torus.real_dim();
        let n = torus.grid as i64;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); torus.point_count()];
        for (m, c) in &self.terms {
            let mut flat = 0usize;
            for &ma in m.iter().take(d) {
                flat = flat * torus.grid + (ma as i64).rem_euclid(n) as usize;
            }
            coeffs[flat] += c;
        }
        coeffs
    }
}

/// How a potential is normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    MeanZero,
    SupZero,
    None,
}

#[derive(Clone, Debug)]
pub enum FieldData {
    Grid(Vec<f64>),
    Fourier(TrigPoly),
}

/// A real function on a torus, either sampled on the grid or held as an
/// exact trigonometric polynomial.
#[derive(Clone, Debug)]
pub struct ScalarField {
    torus: Arc<Torus>,
    data: FieldData,
    normalization: Normalization,
}

impl ScalarField {
    pub fn from_grid(torus: &Arc<Torus>, values: Vec<f64>) -> Result<Self> {
        torus.require_grid()?;
        if values.len() != torus.point_count() {
            return Err(Error::DimensionMismatch {
                expected: torus.point_count(),
                found: values.len(),
            });
        }
        Ok(Self {
            torus: Arc::clone(torus),
            data: FieldData::Grid(values),
            normalization: Normalization::None,
        })
    }

    pub fn from_trig(torus: &Arc<Torus>, poly: TrigPoly) -> Result<Self> {
        if poly.dims() != torus.real_dim() {
            return Err(Error::DimensionMismatch {
                expected: torus.real_dim(),
                found: poly.dims(),
            });
        }
        let defect = poly.reality_defect();
        if defect > 1e-12 {
            return Err(Error::Domain(format!(
                "Fourier table is not Hermitian-symmetric (defect {defect:e})"
            )));
        }
        Ok(Self {
            torus: Arc::clone(torus),
            data: FieldData::Fourier(poly),
            normalization: Normalization::None,
        })
    }

    pub fn constant(torus: &Arc<Torus>, c: f64) -> Self {
        Self {
            torus: Arc::clone(torus),
            data: FieldData::Fourier(TrigPoly::constant(torus.real_dim(), c)),
            normalization: Normalization::None,
        }
    }

    pub fn zero(torus: &Arc<Torus>) -> Self {
        Self::constant(torus, 0.0).with_normalization(Normalization::MeanZero)
    }

    /// Samples `f(x)` at every grid point (real coordinates).
    pub fn from_fn(torus: &Arc<Torus>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        torus.require_grid()?;
        let d = torus.real_dim();
        let values = (0..torus.point_count())
            .map(|p| f(&torus.point(p)[..d]))
            .collect();
        Self::from_grid(torus, values)
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn torus(&self) -> &Arc<Torus> {
        &self.torus
    }

    pub fn data(&self) -> &FieldData {
        &self.data
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.data, FieldData::Grid(_))
    }

    pub fn trig(&self) -> Option<&TrigPoly> {
        match &self.data {
            FieldData::Fourier(p) => Some(p),
            FieldData::Grid(_) => None,
        }
    }

    /// Grid samples; Fourier tables are evaluated exactly at the grid points.
    pub fn grid_values(&self) -> Result<Vec<f64>> {
        match &self.data {
            FieldData::Grid(v) => Ok(v.clone()),
            FieldData::Fourier(p) => {
                self.torus.require_grid()?;
                Ok(self.torus.synthesize_real(p.to_spectrum(&self.torus)))
            }
        }
    }

    pub(crate) fn grid_slice(&self) -> Option<&[f64]> {
        match &self.data {
            FieldData::Grid(v) => Some(v),
            FieldData::Fourier(_) => None,
        }
    }

    pub fn to_grid(&self) -> Result<Self> {
        Ok(Self {
            torus: Arc::clone(&self.torus),
            data: FieldData::Grid(self.grid_values()?),
            normalization: self.normalization,
        })
    }

    /// Normalized Fourier coefficients on the grid.
    pub fn spectrum(&self) -> Result<Vec<Complex64>> {
        match &self.data {
            FieldData::Grid(v) => self.torus.spectrum(v),
            FieldData::Fourier(p) => {
                self.torus.require_grid()?;
                Ok(p.to_spectrum(&self.torus))
            }
        }
    }

    pub fn value_at_point(&self, flat: usize) -> f64 {
        match &self.data {
            FieldData::Grid(v) => v[flat],
            FieldData::Fourier(p) => p.eval(&self.torus.fractional_point(flat)),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.data {
            FieldData::Grid(v) => compensated_sum(v.iter().copied()) / v.len() as f64,
            FieldData::Fourier(p) => p.dc(),
        }
    }

    /// Supremum over the grid (Fourier tables without a grid: coefficient bound).
    pub fn max(&self) -> f64 {
        match self.grid_values() {
            Ok(v) => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Err(_) => self.trig().map_or(0.0, |p| p.terms().map(|(_, c)| c.norm()).sum()),
        }
    }

    pub fn min(&self) -> f64 {
        match self.grid_values() {
            Ok(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
            Err(_) => -self.trig().map_or(0.0, |p| p.terms().map(|(_, c)| c.norm()).sum()),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.max().abs().max(self.min().abs())
    }

    fn check_same(&self, other: &ScalarField) -> Result<()> {
        if self.torus.same_as(&other.torus) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch)
        }
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.check_same(other)?;
        let data = match (&self.data, &other.data) {
            (FieldData::Fourier(a), FieldData::Fourier(b)) => FieldData::Fourier(a.add(b)),
            _ => {
                let a = self.grid_values()?;
                let b = other.grid_values()?;
                FieldData::Grid(a.iter().zip(&b).map(|(x, y)| x + y).collect())
            }
        };
        Ok(Self {
            torus: Arc::clone(&self.torus),
            data,
            normalization: Normalization::None,
        })
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        let data = match &self.data {
            FieldData::Grid(v) => FieldData::Grid(v.iter().map(|x| x * s).collect()),
            FieldData::Fourier(p) => FieldData::Fourier(p.scale(s)),
        };
        Self {
            torus: Arc::clone(&self.torus),
            data,
            normalization: self.normalization,
        }
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let data = match &self.data {
            FieldData::Grid(v) => FieldData::Grid(v.iter().map(|x| x + c).collect()),
            FieldData::Fourier(p) => FieldData::Fourier(p.add_constant(c)),
        };
        Self {
            torus: Arc::clone(&self.torus),
            data,
            normalization: Normalization::None,
        }
    }

    /// Pointwise map on grid samples.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let v = self.grid_values()?;
        Self::from_grid(&self.torus, v.into_iter().map(f).collect())
    }

    /// Returns the field shifted to mean zero.
    pub fn mean_zero(&self) -> Self {
        self.add_constant(-self.mean())
            .with_normalization(Normalization::MeanZero)
    }
}

/// `∫_X f (i dz ∧ dz̄)^n = 2^n · covolume · mean(f)`.
///
/// The periodic trapezoid rule is exact for trigonometric polynomials of
/// bandwidth below the grid; the Fourier path reads the DC coefficient.
pub fn quadrature(density: &ScalarField) -> f64 {
    density.torus().volume() * density.mean()
}

/// The complex Hessian `(∂²u/∂z_j∂z̄_k)` as a Hermitian form field.
pub fn ddbar(u: &ScalarField) -> HermitianFormField {
    let torus = u.torus();
    let n = torus.n();
    match u.data() {
        FieldData::Fourier(p) => {
            let mut entries = vec![TrigPoly::zero(torus.real_dim()); n * n];
            for (m, c) in p.terms() {
                let mi: Vec<i64> = m[..torus.real_dim()].iter().map(|&x| x as i64).collect();
                let kappa = torus.kappa(&mi);
                for j in 0..n {
                    for k in 0..n {
                        let sym = kappa[j] * kappa[k].conj() * -0.25;
                        if sym != Complex64::new(0.0, 0.0) {
                            entries[j * n + k].add_term(*m, c * sym);
                        }
                    }
                }
            }
            HermitianFormField::from_fourier_entries(torus, entries)
                .expect("ddbar of a real polynomial is Hermitian")
        }
        FieldData::Grid(v) => {
            let coeffs = torus.spectrum(v).expect("grid field implies grid geometry");
            HermitianFormField::from_packed(torus, torus.ddbar_packed(&coeffs))
                .expect("packed length matches geometry")
        }
    }
}

/// Solves `tr_ω(i∂∂̄u) = rhs` for mean-zero `u`, with `ω` a constant metric.
pub fn poisson_solve(rhs: &ScalarField, omega: &HermitianMatrix) -> Result<ScalarField> {
    let torus = rhs.torus();
    if omega.dim() != torus.n() {
        return Err(Error::DimensionMismatch {
            expected: torus.n(),
            found: omega.dim(),
        });
    }
    let w = omega.inverse().filter(|_| omega.is_positive_definite()).ok_or(Error::Positivity {
        point: 0,
        value: omega.min_eigenvalue(),
    })?;
    let mean = rhs.mean();
    let tolerance = POISSON_MEAN_TOL * rhs.sup_norm().max(1.0);
    if mean.abs() > tolerance {
        return Err(Error::Incompatible { mean, tolerance });
    }
    let d = torus.real_dim();
    let u = match rhs.data() {
        FieldData::Fourier(p) => {
            let mut out = TrigPoly::zero(d);
            for (m, c) in p.terms() {
                if m.iter().all(|&x| x == 0) {
                    continue;
                }
                let mi: Vec<i64> = m[..d].iter().map(|&x| x as i64).collect();
                let s = torus.trace_symbol(&w, &torus.kappa(&mi));
                out.add_term(*m, c / s);
            }
            ScalarField::from_trig(torus, out)?
        }
        FieldData::Grid(v) => {
            let mut coeffs = torus.spectrum(v)?;
            torus.for_each_wave(|i, kappa, nyq| {
                if i == 0 || nyq {
                    coeffs[i] = Complex64::new(0.0, 0.0);
                } else {
                    coeffs[i] /= torus.trace_symbol(&w, kappa);
                }
            });
            ScalarField::from_grid(torus, torus.synthesize_real(coeffs))?
        }
    };
    Ok(u.with_normalization(Normalization::MeanZero))
}
