//! Mass concentration: Monge–Ampère solves whose right-hand sides approach
//! Dirac masses, and log-pole (Lelong) slope estimates of the solutions.
//!
//! For each `ε` we solve
//! `(α + εω + i∂∂̄u)^n = C_ε (Σ_j τ_j^n γ_j + δ ω^n)`
//! with unit-mass bumps `γ_j`; integrating forces
//! `C_ε = ∫(α+εω)^n / (Σ τ_j^n + δ∫ω^n)`.
//!
//! Near `x_j` the potential behaves like `s_j log|z − x_j|` with
//! `s_j = C_ε^{1/n} τ_j / π` (since `(i∂∂̄ log|z|)^n = π^n δ_0`).

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{constant_wedge, fact, HermitianFormField};
use crate::geometry::{compensated_sum, quadrature, ScalarField, Torus, MAX_REAL_DIM};
use crate::ma_solver::{ma_density, solve_ma_from, MAProblem, MASolution, SolverOptions};
use crate::matrix::HermitianMatrix;

/// Bumps are truncated at this many widths before renormalization.
pub const BUMP_TRUNCATION: f64 = 8.0;
/// Minimum resolvable bump width in grid spacings.
pub const MIN_WIDTH_CELLS: f64 = 3.0;

fn to_point(torus: &Torus, x: &[f64]) -> Result<[f64; MAX_REAL_DIM]> {
    let d = torus.real_dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    let mut s = [0.0; MAX_REAL_DIM];
    for a in 0..d {
        s[a] = x[a].rem_euclid(1.0);
    }
    Ok(s)
}

/// Periodized Gaussian `∝ exp(−|y − x|²/w²)` with unit quadrature mass.
///
/// `x` is given in lattice coordinates. On orthogonal lattices the sum over
/// translates factorizes per axis and is truncated per axis at `8w`;
/// otherwise translates are summed within a ball of radius `8w`.
pub fn make_bump(x: &[f64], width: f64, torus: &Arc<Torus>) -> Result<ScalarField> {
    torus.require_grid()?;
    let s0 = to_point(torus, x)?;
    let h = torus.spacing();
    if !(width >= MIN_WIDTH_CELLS * h * (1.0 - 1e-12)) {
        return Err(Error::Resolution(format!(
            "bump width {width} below {MIN_WIDTH_CELLS} grid spacings ({h})"
        )));
    }
    let d = torus.real_dim();
    let grid = torus.grid();
    let cut = BUMP_TRUNCATION * width;
    let values = if torus.is_orthogonal() {
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                let len = torus.axis_length(a);
                let reach = (cut / len).ceil() as i64 + 1;
                (0..grid)
                    .map(|i| {
                        let t = i as f64 / grid as f64 - s0[a];
                        let t = t - t.round();
                        (-reach..=reach)
                            .map(|l| (t + l as f64) * len)
                            .filter(|r| r.abs() <= cut)
                            .map(|r| (-(r * r) / (width * width)).exp())
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let mut out = vec![0.0; torus.point_count()];
        let mut idx = [0usize; MAX_REAL_DIM];
        for v in out.iter_mut() {
            *v = (0..d).map(|a| axes[a][idx[a]]).product();
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < grid {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    } else {
        let shortest = (0..d).map(|a| torus.axis_length(a)).fold(f64::INFINITY, f64::min);
        let reach = (cut / shortest).ceil() as i64 + 1;
        let side = (2 * reach + 1) as usize;
        let images = side.pow(d as u32);
        (0..torus.point_count())
            .map(|p| {
                let s = torus.fractional_point(p);
                let mut base = [0.0; MAX_REAL_DIM];
                for a in 0..d {
                    let t = s[a] - s0[a];
                    base[a] = t - t.round();
                }
                let mut acc = 0.0;
                for code in 0..images {
                    let mut c = code;
                    let mut shifted = base;
                    for v in shifted.iter_mut().take(d) {
                        *v += (c % side) as f64 - reach as f64;
                        c /= side;
                    }
                    let y = torus.to_real(&shifted);
                    let r2: f64 = y.iter().map(|v| v * v).sum();
                    if r2 <= cut * cut {
                        acc += (-r2 / (width * width)).exp();
                    }
                }
                acc
            })
            .collect()
    };
    let field = ScalarField::from_grid(torus, values)?;
    let mass = quadrature(&field);
    Ok(field.scale(1.0 / mass))
}

#[derive(Clone, Debug)]
pub struct ConcentrationSpec {
    torus: Arc<Torus>,
    alpha: HermitianMatrix,
    omega: HermitianMatrix,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    delta: f64,
    epsilons: Vec<f64>,
    widths: Vec<f64>,
    /// Lelong fit annulus `[inner, outer]`.
    annulus: (f64, f64),
    pub annulus_bins: usize,
    pub solver: SolverOptions,
}

impl ConcentrationSpec {
    /// Validated construction.
    ///
    /// Requires `Σ τ_j^n + δ∫ω^n < ∫α^n`, strictly decreasing positive `ε`,
    /// resolvable widths, points separated by at least four times the largest
    /// width, and an annulus with `inner ≥ 2h` and `outer ≤ separation/4`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        torus: &Arc<Torus>,
        alpha: HermitianMatrix,
        omega: HermitianMatrix,
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        delta: f64,
        epsilons: Vec<f64>,
        widths: Vec<f64>,
        annulus: (f64, f64),
    ) -> Result<Self> {
        torus.require_grid()?;
        let n = torus.n();
        for m in [&alpha, &omega] {
            if m.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.dim(),
                });
            }
            if !m.is_positive_definite() {
                return Err(Error::SpecViolation("α and ω must be positive definite".into()));
            }
        }
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::SpecViolation("need one positive weight per point".into()));
        }
        for p in &points {
            to_point(torus, p)?;
        }
        if weights.iter().any(|&t| !(t > 0.0)) || !(delta > 0.0) {
            return Err(Error::SpecViolation("weights τ_j and δ must be positive".into()));
        }
        let cov = torus.covolume();
        let alpha_n = constant_wedge(cov, &vec![alpha; n])?;
        let omega_n = constant_wedge(cov, &vec![omega; n])?;
        let load: f64 = weights.iter().map(|t| t.powi(n as i32)).sum::<f64>() + delta * omega_n;
        if !(load < alpha_n) {
            return Err(Error::SpecViolation(format!(
                "mass condition Σ τ_j^n + δ∫ω^n < ∫α^n fails: {load} >= {alpha_n}"
            )));
        }
        if epsilons.is_empty()
            || epsilons.len() != widths.len()
            || epsilons.iter().any(|&e| !(e > 0.0))
            || epsilons.windows(2).any(|w| !(w[1] < w[0]))
        {
            return Err(Error::SpecViolation(
                "ε schedule must be positive, strictly decreasing, with one width per level".into(),
            ));
        }
        let h = torus.spacing();
        if let Some(w) = widths.iter().find(|&&w| !(w >= MIN_WIDTH_CELLS * h * (1.0 - 1e-12))) {
            return Err(Error::Resolution(format!(
                "bump width {w} below {MIN_WIDTH_CELLS} grid spacings ({h})"
            )));
        }
        let max_width = widths.iter().copied().fold(0.0, f64::max);
        let sep = min_separation(torus, &points);
        if points.len() > 1 && sep < 4.0 * max_width {
            return Err(Error::SpecViolation(format!(
                "points separated by {sep}, need at least 4 × {max_width}"
            )));
        }
        let (inner, outer) = annulus;
        if !(inner >= 2.0 * h) || !(outer > inner) {
            return Err(Error::SpecViolation(format!(
                "annulus [{inner}, {outer}] needs inner ≥ 2h = {} and outer > inner",
                2.0 * h
            )));
        }
        let reach = if points.len() > 1 { sep / 4.0 } else { half_shortest_period(torus) / 2.0 };
        if outer > reach * (1.0 + 1e-12) {
            return Err(Error::SpecViolation(format!(
                "annulus outer radius {outer} exceeds separation/4 = {reach}"
            )));
        }
        Ok(Self {
            torus: Arc::clone(torus),
            alpha,
            omega,
            points,
            weights,
            delta,
            epsilons,
            widths,
            annulus,
            annulus_bins: 12,
            solver: SolverOptions::default(),
        })
    }

    /// Geometric schedule `ε_ℓ = ε₀/2^ℓ` with widths `max(w₀/2^ℓ, 3h)`.
    pub fn geometric_schedule(torus: &Torus, eps0: f64, width0: f64, levels: usize) -> (Vec<f64>, Vec<f64>) {
        let floor = MIN_WIDTH_CELLS * torus.spacing();
        (0..levels)
            .map(|l| {
                let f = 0.5f64.powi(l as i32);
                (eps0 * f, (width0 * f).max(floor))
            })
            .unzip()
    }

    pub fn torus(&self) -> &Arc<Torus> {
        &self.torus
    }
    pub fn alpha(&self) -> &HermitianMatrix {
        &self.alpha
    }
    pub fn omega(&self) -> &HermitianMatrix {
        &self.omega
    }
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }
    pub fn annulus(&self) -> (f64, f64) {
        self.annulus
    }

    /// `Σ τ_j^n + δ∫ω^n`.
    pub fn rhs_mass(&self) -> f64 {
        let n = self.torus.n();
        self.weights.iter().map(|t| t.powi(n as i32)).sum::<f64>()
            + self.delta * constant_wedge(self.torus.covolume(), &vec![self.omega; n]).unwrap()
    }

    /// `C_ε = ∫(α+εω)^n / (Σ τ_j^n + δ∫ω^n)`.
    pub fn c_eps(&self, eps: f64) -> f64 {
        let n = self.torus.n();
        let class = self.alpha + self.omega * eps;
        constant_wedge(self.torus.covolume(), &vec![class; n]).unwrap() / self.rhs_mass()
    }

    /// Predicted log-pole slope `C_ε^{1/n} τ_j / π`.
    pub fn predicted_slope(&self, eps: f64, j: usize) -> f64 {
        self.c_eps(eps).powf(1.0 / self.torus.n() as f64) * self.weights[j] / PI
    }

    /// Density of `Σ τ_j^n γ_j + δω^n` against `(i dz∧dz̄)^n`.
    pub fn rhs_density(&self, width: f64) -> Result<ScalarField> {
        let n = self.torus.n();
        let mut rho = ScalarField::constant(&self.torus, self.delta * fact(n) * self.omega.det()).to_grid()?;
        for (p, t) in self.points.iter().zip(&self.weights) {
            let g = make_bump(p, width, &self.torus)?;
            rho = rho.add(&g.scale(t.powi(n as i32)))?;
        }
        Ok(rho)
    }
}

fn half_shortest_period(torus: &Torus) -> f64 {
    (0..torus.real_dim())
        .map(|a| torus.axis_length(a))
        .fold(f64::INFINITY, f64::min)
        / 2.0
}

fn min_separation(torus: &Torus, points: &[Vec<f64>]) -> f64 {
    let mut sep = f64::INFINITY;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            sep = sep.min(torus.distance(&points[i], &points[j]));
        }
    }
    sep
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LelongFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of the `r²` nuisance regressor.
    pub quadratic: f64,
    /// Root-mean-square misfit of the annulus averages.
    pub residual: f64,
    pub inner: f64,
    pub outer: f64,
    pub annuli: usize,
}

/// Least-squares fit of annulus-averaged `φ` around `x` against
/// `[1, log r, r²]` over `bins` geometric annuli in `[inner, outer]`.
///
/// The `r²` column absorbs the smooth background (a harmonic remainder
/// averages to a constant over spheres, the constant-density part contributes
/// `r²`), so the `log r` coefficient isolates the pole.
pub fn lelong_estimate(phi: &ScalarField, x: &[f64], inner: f64, outer: f64, bins: usize) -> Result<LelongFit> {
    let torus = phi.torus();
    torus.require_grid()?;
    let s0 = to_point(torus, x)?;
    let h = torus.spacing();
    if !(inner >= 2.0 * h * (1.0 - 1e-12)) {
        return Err(Error::Resolution(format!("inner radius {inner} below 2h = {}", 2.0 * h)));
    }
    if !(outer > inner) || outer > half_shortest_period(torus) {
        return Err(Error::Fit(format!("invalid annulus [{inner}, {outer}]")));
    }
    let values = phi.grid_values()?;
    let (li, lo) = (inner.ln(), outer.ln());
    let mut sum_v = vec![0.0; bins];
    let mut sum_l = vec![0.0; bins];
    let mut sum_r2 = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (p, v) in values.iter().enumerate() {
        let r = torus.distance(&s0, &torus.fractional_point(p));
        if r < inner || r >= outer {
            continue;
        }
        let b = (((r.ln() - li) / (lo - li)) * bins as f64) as usize;
        let b = b.min(bins - 1);
        sum_v[b] += v;
        sum_l[b] += r.ln();
        sum_r2[b] += r * r;
        count[b] += 1;
    }
    let rows: Vec<usize> = (0..bins).filter(|&b| count[b] > 0).collect();
    if rows.len() < 4 {
        return Err(Error::Fit(format!("only {} non-empty annuli", rows.len())));
    }
    let m = rows.len();
    let a = DMatrix::from_fn(m, 3, |i, c| {
        let b = rows[i];
        let k = count[b] as f64;
        match c {
            0 => 1.0,
            1 => sum_l[b] / k,
            _ => sum_r2[b] / k,
        }
    });
    let y = DVector::from_fn(m, |i, _| sum_v[rows[i]] / count[rows[i]] as f64);
    let svd = a.clone().svd(true, true);
    let coef = svd
        .solve(&y, 1e-13)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let fitted = &a * &coef;
    let residual = ((&y - fitted).norm_squared() / m as f64).sqrt();
    Ok(LelongFit {
        slope: coef[1],
        intercept: coef[0],
        quadratic: coef[2],
        residual,
        inner,
        outer,
        annuli: m,
    })
}

#[derive(Clone, Debug)]
pub struct LevelResult {
    pub epsilon: f64,
    pub width: f64,
    pub solution: MASolution,
    pub c_eps_cohomological: f64,
    pub c_eps_measured: f64,
    /// Quadrature mass of the right-hand side density.
    pub rhs_mass: f64,
    pub fits: Vec<LelongFit>,
    pub predicted_slopes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelFailure {
    pub epsilon: f64,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct ConcentrationResult {
    pub levels: Vec<LevelResult>,
    /// Set when the family stopped early.
    pub failure: Option<LevelFailure>,
}

impl ConcentrationResult {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// Fitted slopes per level for point `j`.
    pub fn slopes(&self, j: usize) -> Vec<f64> {
        self.levels.iter().map(|l| l.fits[j].slope).collect()
    }
}

/// Solves the family along the `ε` schedule, warm-starting each level from
/// the previous potential.
pub fn run_concentration(spec: &ConcentrationSpec) -> Result<ConcentrationResult> {
    let torus = spec.torus();
    let n = torus.n();
    let mut levels: Vec<LevelResult> = Vec::new();
    let mut failure = None;
    for (&eps, &width) in spec.epsilons().iter().zip(spec.widths()) {
        let class = *spec.alpha() + *spec.omega() * eps;
        let rho = spec.rhs_density(width)?;
        let norm = fact(n) * class.det();
        let f = rho.map(|r| (r / norm).ln())?;
        let problem = MAProblem::new(&HermitianFormField::constant(torus, class)?, f, true)?
            .with_options(spec.solver.clone());
        let warm = levels.last().map(|l| &l.solution.phi);
        let solution = match solve_ma_from(&problem, warm) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(LevelFailure {
                    epsilon: eps,
                    error: e.to_string(),
                });
                break;
            }
        };
        let rhs_mass = quadrature(&rho);
        let dens = ma_density(&class, &solution.phi)?.grid_values()?;
        let lhs_mass = fact(n) * torus.volume() * compensated_sum(dens) / torus.point_count() as f64;
        let (inner, outer) = spec.annulus();
        let fits = spec
            .points()
            .iter()
            .map(|p| lelong_estimate(&solution.phi, p, inner, outer, spec.annulus_bins))
            .collect::<Result<Vec<_>>>()?;
        levels.push(LevelResult {
            epsilon: eps,
            width,
            c_eps_cohomological: spec.c_eps(eps),
            c_eps_measured: lhs_mass / rhs_mass,
            rhs_mass,
            fits,
            predicted_slopes: (0..spec.points().len()).map(|j| spec.predicted_slope(eps, j)).collect(),
            solution,
        });
    }
    Ok(ConcentrationResult { levels, failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_torus;

    #[test]
    fn bump_unit_mass_and_moment() {
        let t = make_torus(1, 128, None).unwrap();
        let w = 0.05;
        let g = make_bump(&[0.3, 0.6], w, &t).unwrap();
        assert!((quadrature(&g) - 1.0).abs() < 1e-12);
        assert!(g.min() >= 0.0);
        // E|z − x|² under the normalized density is n·w²
        let x0 = t.to_real(&[0.3, 0.6]);
        let v = g.grid_values().unwrap();
        let mut m2 = 0.0;
        for (p, gv) in v.iter().enumerate() {
            let d = t.displacement(&[0.3, 0.6], &t.fractional_point(p));
            m2 += gv * (d[0] * d[0] + d[1] * d[1]);
        }
        m2 *= t.volume() / v.len() as f64;
        assert!((m2 - w * w).abs() < 1e-6, "{m2}");
        let _ = x0;
    }

    #[test]
    fn wide_bump_is_uniform() {
        let t = make_torus(1, 32, None).unwrap();
        let g = make_bump(&[0.0, 0.0], 2.0, &t).unwrap();
        assert!((g.max() - 0.5).abs() < 1e-9);
        assert!((g.min() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn under_resolved_bump() {
        let t = make_torus(1, 32, None).unwrap();
        assert!(matches!(make_bump(&[0.0, 0.0], 0.05, &t), Err(Error::Resolution(_))));
    }

    #[test]
    fn skewed_lattice_bump_matches_formula() {
        let p = vec![vec![1.0, 0.0], vec![0.3, 1.0]];
        let t = make_torus(1, 64, Some(p)).unwrap();
        let g = make_bump(&[0.5, 0.5], 0.08, &t).unwrap();
        assert!((quadrature(&g) - 1.0).abs() < 1e-12);
        let peak = g.max();
        // unit mass Gaussian: peak = 1/(2 π w²) against 2·Lebesgue
        assert!((peak - 1.0 / (2.0 * PI * 0.08 * 0.08)).abs() / peak < 1e-3);
    }

    #[test]
    fn mass_condition_rejected() {
        let t = make_torus(1, 64, None).unwrap();
        let i = HermitianMatrix::identity(1);
        let r = ConcentrationSpec::new(
            &t,
            i,
            i,
            vec![vec![0.25, 0.25]],
            vec![1.5],
            0.3,
            vec![0.1],
            vec![0.1],
            (0.04, 0.1),
        );
        assert!(matches!(r, Err(Error::SpecViolation(_))));
    }

    #[test]
    fn lelong_exact_log() {
        let t = make_torus(1, 256, None).unwrap();
        let x = [0.5, 0.5];
        let tau = 0.7;
        let phi = ScalarField::from_grid(
            &t,
            (0..t.point_count())
                .map(|p| tau * t.distance(&x, &t.fractional_point(p)).max(1e-3).ln())
                .collect(),
        )
        .unwrap();
        let fit = lelong_estimate(&phi, &x, 0.02, 0.2, 10).unwrap();
        assert!((fit.slope - tau).abs() < 0.02 * tau);
    }

    #[test]
    fn lelong_smooth_field() {
        let t = make_torus(1, 128, None).unwrap();
        let phi = ScalarField::from_fn(&t, |y| (2.0 * PI * y[0]).cos() + 0.5 * (2.0 * PI * (y[0] + y[1])).sin()).unwrap();
        let fit = lelong_estimate(&phi, &[0.2, 0.1], 0.02, 0.15, 10).unwrap();
        assert!(fit.slope.abs() < 0.02 * phi.sup_norm(), "{}", fit.slope);
        assert!(lelong_estimate(&phi, &[0.2, 0.1], 0.02, 0.021, 10).is_err());
    }
}
