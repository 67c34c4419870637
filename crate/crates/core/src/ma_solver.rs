//! Complex Monge–Ampère equation `(ω + i∂∂̄φ)^n = e^{F+b} ω^n` on a flat torus.
//!
//! With `ω` constant the equation reads `det(Ω + H_φ)/det Ω = e^{F+b}` where
//! `H_φ = (∂_j ∂̄_k φ)`. The discrete Monge–Ampère mass `mean det(Ω + H_φ)`
//! equals `det Ω` for every spectral `φ`, so the residual always has zero
//! mean and Newton corrections stay in the mean-zero space.
//!
//! Each Newton step solves `J δ = -r` with `J ψ = tr(adj(Ω+H_φ) H_ψ)/det Ω`
//! by conjugate gradients on Fourier coefficients, preconditioned with the
//! flat operator `tr(Ω^{-1} H_ψ)` (for `n = 2`, `mean adj(Ω+H_φ) = adj Ω`,
//! so this is also the averaged-coefficient operator).

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{self, HermitianFormField};
use crate::geometry::{compensated_sum, poisson_solve, Normalization, ScalarField, Torus};
use crate::matrix::HermitianMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Target sup-norm of `det(Ω+H_φ)/det Ω − e^{F+b}`, scaled by
    /// `max(1, sup e^{F+b})` so concentrated densities are judged relatively.
    pub tolerance: f64,
    pub max_newton_steps: usize,
    pub damping_floor: f64,
    /// Initial number of homotopy steps in `F` when direct Newton fails.
    pub continuation_steps: usize,
    /// Maximum bisections of one homotopy step.
    pub max_subdivisions: usize,
    pub max_cg_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_newton_steps: 30,
            damping_floor: 1.0 / (1u64 << 20) as f64,
            continuation_steps: 4,
            max_subdivisions: 6,
            max_cg_iterations: 400,
        }
    }
}

/// Mass side condition tolerance when `b` is not normalized.
pub const MASS_CONDITION_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct MAProblem {
    torus: Arc<Torus>,
    omega: HermitianMatrix,
    f: ScalarField,
    normalize_b: bool,
    pub options: SolverOptions,
}

impl MAProblem {
    pub fn new(omega: &HermitianFormField, f: ScalarField, normalize_b: bool) -> Result<Self> {
        let torus = omega.torus().clone();
        if !f.torus().same_as(&torus) {
            return Err(Error::GeometryMismatch);
        }
        torus.require_grid()?;
        let w = omega.constant_value().ok_or(Error::NonConstant)?;
        if !w.is_positive_definite() {
            return Err(Error::Positivity {
                point: 0,
                value: w.min_eigenvalue(),
            });
        }
        let f = f.to_grid()?;
        if !normalize_b {
            // ∫(e^F − 1) ω^n / ∫ω^n = mean(e^F) − 1
            let defect = compensated_sum(f.grid_slice().unwrap().iter().map(|v| v.exp())) / torus.point_count() as f64 - 1.0;
            if !(defect.abs() <= MASS_CONDITION_TOL) {
                return Err(Error::Incompatible {
                    mean: defect,
                    tolerance: MASS_CONDITION_TOL,
                });
            }
        }
        Ok(Self {
            torus,
            omega: w,
            f,
            normalize_b,
            options: SolverOptions::default(),
        })
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn torus(&self) -> &Arc<Torus> {
        &self.torus
    }

    pub fn omega(&self) -> &HermitianMatrix {
        &self.omega
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn normalize_b(&self) -> bool {
        self.normalize_b
    }
}

#[derive(Clone, Debug)]
pub struct MASolution {
    /// Mean-zero potential.
    pub phi: ScalarField,
    pub b: f64,
    /// Sup-norm of `det(Ω+H_φ)/det Ω − e^{F+b}` with its Nyquist-mode part
    /// removed; that part is aliasing the potential cannot represent.
    pub residual_sup: f64,
    /// Root-mean-square of the same residual.
    pub residual_l2: f64,
    /// Sup-norm of the Nyquist-mode part of the residual.
    pub unresolved_sup: f64,
    pub positivity_margin: f64,
    pub newton_steps: usize,
    /// Constant making `sup φ = 0`: `φ + sup_shift` has maximum zero.
    pub sup_shift: f64,
    pub residual_history: Vec<f64>,
}

impl MASolution {
    pub fn phi_sup_zero(&self) -> ScalarField {
        self.phi
            .add_constant(self.sup_shift)
            .with_normalization(Normalization::SupZero)
    }
}

/// `b = log(∫ω^n / ∫e^F ω^n)`, computed with an overflow-safe shift.
pub fn normalize_rhs(f: &ScalarField, omega: &HermitianMatrix) -> Result<(ScalarField, f64)> {
    if !omega.is_positive_definite() {
        return Err(Error::Positivity {
            point: 0,
            value: omega.min_eigenvalue(),
        });
    }
    let v = f.grid_values()?;
    let b = log_mean_exp(&v).map(|m| -m)?;
    Ok((f.clone(), b))
}

fn log_mean_exp(v: &[f64]) -> Result<f64> {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Domain("F is not finite".into()));
    }
    let m = compensated_sum(v.iter().map(|x| (x - top).exp())) / v.len() as f64;
    Ok(top + m.ln())
}

/// Pointwise `det(ω + i∂∂̄φ)` on the grid.
pub fn ma_density(omega: &HermitianMatrix, phi: &ScalarField) -> Result<ScalarField> {
    let torus = phi.torus();
    check_dim(torus, omega)?;
    let a = background_plus_ddbar(torus, omega, &phi.spectrum()?);
    let vals = densities(torus.n(), &a);
    ScalarField::from_grid(torus, vals)
}

/// Directional derivative `d/dt det(ω + i∂∂̄(φ + tψ))` at `t = 0`.
pub fn ma_linearization(omega: &HermitianMatrix, phi: &ScalarField, psi: &ScalarField) -> Result<ScalarField> {
    let torus = phi.torus();
    check_dim(torus, omega)?;
    if !psi.torus().same_as(torus) {
        return Err(Error::GeometryMismatch);
    }
    let a = background_plus_ddbar(torus, omega, &phi.spectrum()?);
    let h = torus.ddbar_packed(&psi.spectrum()?);
    ScalarField::from_grid(torus, linearized(torus.n(), &a, &h, 1.0))
}

fn check_dim(torus: &Torus, omega: &HermitianMatrix) -> Result<()> {
    torus.require_grid()?;
    if omega.dim() != torus.n() {
        return Err(Error::DimensionMismatch {
            expected: torus.n(),
            found: omega.dim(),
        });
    }
    Ok(())
}

fn background_plus_ddbar(torus: &Torus, omega: &HermitianMatrix, coeffs: &[Complex64]) -> Vec<f64> {
    let n = torus.n();
    let mut a = torus.ddbar_packed(coeffs);
    let s = forms::packed_len(n);
    let mut w = vec![0.0; s];
    forms::pack(omega, &mut w);
    for chunk in a.chunks_exact_mut(s) {
        for (x, y) in chunk.iter_mut().zip(&w) {
            *x += y;
        }
    }
    a
}

fn densities(n: usize, a: &[f64]) -> Vec<f64> {
    match n {
        1 => a.to_vec(),
        2 => a
            .chunks_exact(4)
            .map(|c| c[0] * c[1] - c[2] * c[2] - c[3] * c[3])
            .collect(),
        _ => unreachable!(),
    }
}

/// Smallest eigenvalue of `A` relative to `Ω` over all points.
fn margins(n: usize, a: &[f64], omega: &HermitianMatrix) -> f64 {
    match n {
        1 => {
            let w = omega.get(0, 0).re;
            a.iter().map(|x| x / w).fold(f64::INFINITY, f64::min)
        }
        2 => {
            // det(A − λΩ) = det A − λ tr(adj(Ω) A) + λ² det Ω
            let (w11, w22, w12) = (omega.get(0, 0).re, omega.get(1, 1).re, omega.get(0, 1));
            let wd = omega.det();
            a.chunks_exact(4)
                .map(|c| {
                    let det = c[0] * c[1] - c[2] * c[2] - c[3] * c[3];
                    let t = w22 * c[0] + w11 * c[1] - 2.0 * (w12.re * c[2] + w12.im * c[3]);
                    let disc = (t * t - 4.0 * wd * det).max(0.0).sqrt();
                    if t > 0.0 {
                        2.0 * det / (t + disc)
                    } else {
                        (t - disc) / (2.0 * wd)
                    }
                })
                .fold(f64::INFINITY, f64::min)
        }
        _ => unreachable!(),
    }
}

/// `tr(adj(A) H) · scale` pointwise.
fn linearized(n: usize, a: &[f64], h: &[f64], scale: f64) -> Vec<f64> {
    match n {
        1 => h.iter().map(|x| x * scale).collect(),
        2 => a
            .chunks_exact(4)
            .zip(h.chunks_exact(4))
            .map(|(a, h)| (a[1] * h[0] + a[0] * h[1] - 2.0 * (a[2] * h[2] + a[3] * h[3])) * scale)
            .collect(),
        _ => unreachable!(),
    }
}

struct Newton<'a> {
    torus: &'a Torus,
    n: usize,
    omega: HermitianMatrix,
    omega_det: f64,
    /// Positive flat symbol per mode; zero marks DC and Nyquist modes.
    flat: Vec<f64>,
    options: &'a SolverOptions,
}

struct State {
    coeffs: Vec<Complex64>,
    a: Vec<f64>,
    /// Its spectrum with DC and Nyquist zeroed: the Newton right-hand side.
    rhs: Vec<Complex64>,
    sup: f64,
    /// Root-mean-square of `residual`; the line-search merit.
    rms: f64,
    unresolved_sup: f64,
    margin: f64,
}

impl<'a> Newton<'a> {
    fn new(torus: &'a Torus, omega: &HermitianMatrix, options: &'a SolverOptions) -> Self {
        let w = omega.inverse().expect("positive definite");
        let mut flat = vec![0.0; torus.point_count()];
        torus.for_each_wave(|i, kappa, nyq| {
            if i != 0 && !nyq {
                flat[i] = -torus.trace_symbol(&w, kappa);
            }
        });
        Self {
            torus,
            n: torus.n(),
            omega: *omega,
            omega_det: omega.det(),
            flat,
            options,
        }
    }

    fn state(&self, coeffs: Vec<Complex64>, target: &[f64]) -> State {
        let a = background_plus_ddbar(self.torus, &self.omega, &coeffs);
        let dens = densities(self.n, &a);
        let inv = 1.0 / self.omega_det;
        let full: Vec<f64> = dens.iter().zip(target).map(|(d, g)| d * inv - g).collect();
        let mut rhs = self.torus.spectrum(&full).expect("grid geometry");
        let mut nyquist = vec![Complex64::new(0.0, 0.0); rhs.len()];
        for (i, (c, f)) in rhs.iter_mut().zip(&self.flat).enumerate() {
            if *f == 0.0 {
                if i != 0 {
                    nyquist[i] = *c;
                }
                *c = Complex64::new(0.0, 0.0);
            }
        }
        let unresolved = self.torus.synthesize_real(nyquist);
        let residual: Vec<f64> = full.iter().zip(&unresolved).map(|(r, u)| r - u).collect();
        let sup_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let margin = margins(self.n, &a, &self.omega);
        State {
            coeffs,
            a,
            sup: sup_abs(&residual),
            rms: (compensated_sum(residual.iter().map(|r| r * r)) / residual.len() as f64).sqrt(),
            unresolved_sup: sup_abs(&unresolved),
            rhs,
            margin,
        }
    }

    /// `-J v` on Fourier coefficients, with DC and Nyquist modes projected out.
    fn apply(&self, a: &[f64], v: &[Complex64]) -> Vec<Complex64> {
        let h = self.torus.ddbar_packed(v);
        let j = linearized(self.n, a, &h, -1.0 / self.omega_det);
        let mut out = self.torus.spectrum(&j).expect("grid geometry");
        for (o, s) in out.iter_mut().zip(&self.flat) {
            if *s == 0.0 {
                *o = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    fn precondition(&self, r: &[Complex64]) -> Vec<Complex64> {
        r.iter()
            .zip(&self.flat)
            .map(|(x, s)| if *s == 0.0 { Complex64::new(0.0, 0.0) } else { x / s })
            .collect()
    }

    /// Preconditioned CG for `(-J) δ = r̂`, to relative residual `eta`.
    fn solve_linear(&self, a: &[f64], rhs: &[Complex64], eta: f64) -> Vec<Complex64> {
        let dot = |x: &[Complex64], y: &[Complex64]| -> f64 { x.iter().zip(y).map(|(p, q)| (p.conj() * q).re).sum() };
        let mut x = vec![Complex64::new(0.0, 0.0); rhs.len()];
        let mut r = rhs.to_vec();
        let r0 = dot(&r, &r).sqrt();
        if r0 == 0.0 {
            return x;
        }
        let mut z = self.precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..self.options.max_cg_iterations {
            let ap = self.apply(a, &p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for i in 0..x.len() {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if dot(&r, &r).sqrt() <= eta * r0 {
                break;
            }
            z = self.precondition(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..p.len() {
                p[i] = z[i] + beta * p[i];
            }
        }
        x
    }

    /// Damped Newton from `coeffs` towards `det(Ω+H)/det Ω = target`.
    fn run(&self, coeffs: Vec<Complex64>, target: &[f64], history: &mut Vec<f64>) -> Result<(State, usize)> {
        let tol = scaled_tolerance(self.options.tolerance, target);
        let mut st = self.state(coeffs, target);
        if !(st.margin > 0.0) {
            return Err(Error::PositivityBreakdown { residual: st.sup });
        }
        history.push(st.sup);
        let mut prev_sup = f64::NAN;
        for step in 0..self.options.max_newton_steps {
            if st.sup < tol {
                return Ok((st, step));
            }
            // Eisenstat–Walker forcing, never looser than 1/2 nor tighter than needed
            let mut eta = if prev_sup.is_nan() { 0.1 } else { 0.9 * (st.sup / prev_sup).powi(2) };
            eta = eta.clamp(1e-3 * tol / st.sup, 0.5).max(1e-13);
            let delta = self.solve_linear(&st.a, &st.rhs, eta);
            let mut t = 1.0;
            let accepted = loop {
                let trial: Vec<Complex64> = st.coeffs.iter().zip(&delta).map(|(c, d)| c + t * d).collect();
                let cand = self.state(trial, target);
                if cand.margin > 0.0 && cand.rms < st.rms {
                    break Some(cand);
                }
                t *= 0.5;
                if t < self.options.damping_floor {
                    break None;
                }
            };
            match accepted {
                Some(cand) => {
                    prev_sup = st.sup;
                    st = cand;
                    history.push(st.sup);
                }
                None => {
                    if st.sup < tol {
                        return Ok((st, step));
                    }
                    return Err(Error::PositivityBreakdown { residual: st.sup });
                }
            }
        }
        if st.sup < tol {
            let steps = self.options.max_newton_steps;
            return Ok((st, steps));
        }
        Err(Error::NonConvergence {
            steps: self.options.max_newton_steps,
            history: history.clone(),
        })
    }
}

/// `tol · max(1, sup g)`.
pub fn scaled_tolerance(tol: f64, target: &[f64]) -> f64 {
    tol * target.iter().copied().fold(1.0, f64::max)
}

fn finish(torus: &Arc<Torus>, st: State, b: f64, steps: usize, history: Vec<f64>) -> Result<MASolution> {
    let phi = ScalarField::from_grid(torus, torus.synthesize_real(st.coeffs))?
        .with_normalization(Normalization::MeanZero);
    let sup_shift = -phi.max();
    Ok(MASolution {
        phi,
        b,
        residual_sup: st.sup,
        residual_l2: st.rms,
        unresolved_sup: st.unresolved_sup,
        positivity_margin: st.margin,
        newton_steps: steps,
        sup_shift,
        residual_history: history,
    })
}

pub fn solve_ma(problem: &MAProblem) -> Result<MASolution> {
    solve_ma_from(problem, None)
}

/// Solves from an optional warm start.
///
/// Failing direct Newton triggers continuation in `F`: from `0` (or from the
/// right-hand side realized by the warm start) to the target, in
/// `continuation_steps` increments that are bisected on failure.
pub fn solve_ma_from(problem: &MAProblem, initial: Option<&ScalarField>) -> Result<MASolution> {
    let torus = problem.torus();
    let omega = problem.omega();
    let f = problem.f().grid_values()?;
    let b = if problem.normalize_b() { -log_mean_exp(&f)? } else { 0.0 };
    let target: Vec<f64> = f.iter().map(|v| (v + b).exp()).collect();

    if torus.n() == 1 {
        let rhs = ScalarField::from_grid(torus, target.iter().map(|g| g - 1.0).collect())?;
        let rhs = rhs.add_constant(-rhs.mean());
        let phi = poisson_solve(&rhs, omega)?;
        let newton = Newton::new(torus, omega, &problem.options);
        let st = newton.state(phi.spectrum()?, &target);
        let sup = st.sup;
        let tol = scaled_tolerance(problem.options.tolerance, &target);
        if !(sup < tol) {
            return Err(Error::NotConverged {
                residual: sup,
                tolerance: tol,
            });
        }
        return finish(torus, st, b, 1, vec![sup]);
    }

    let newton = Newton::new(torus, omega, &problem.options);
    let mut history = Vec::new();

    let warm = match initial {
        Some(phi0) => {
            if !phi0.torus().same_as(torus) {
                return Err(Error::GeometryMismatch);
            }
            let mut c = phi0.spectrum()?;
            c[0] = Complex64::new(0.0, 0.0);
            Some(c)
        }
        None => None,
    };
    let start = match &warm {
        Some(c) => c.clone(),
        None => {
            let rhs = ScalarField::from_grid(torus, target.iter().map(|g| g - 1.0).collect())?;
            let rhs = rhs.add_constant(-rhs.mean());
            poisson_solve(&rhs, omega)?.spectrum()?
        }
    };
    match newton.run(start, &target, &mut history) {
        Ok((st, steps)) => return finish(torus, st, b, steps, history),
        Err(Error::NonConvergence { .. }) | Err(Error::PositivityBreakdown { .. }) => {}
        Err(e) => return Err(e),
    }

    // Continuation: F_t = (1-t) F_0 + t (F + b), renormalized at every t.
    let (f0, mut coeffs) = match warm {
        Some(c) => {
            let st = newton.state(c.clone(), &target);
            if st.margin > 0.0 {
                let inv = 1.0 / omega.det();
                let f0: Vec<f64> = densities(2, &st.a).iter().map(|d| (d * inv).ln()).collect();
                (f0, c)
            } else {
                (vec![0.0; f.len()], vec![Complex64::new(0.0, 0.0); f.len()])
            }
        }
        None => (vec![0.0; f.len()], vec![Complex64::new(0.0, 0.0); f.len()]),
    };
    let f1: Vec<f64> = f.iter().map(|v| v + b).collect();
    let mut t = 0.0;
    let mut dt = 1.0 / problem.options.continuation_steps.max(1) as f64;
    let mut depth = 0;
    let mut total_steps = 0;
    let mut last = None;
    while t < 1.0 {
        let t_next = (t + dt).min(1.0);
        let ft: Vec<f64> = f0.iter().zip(&f1).map(|(a, c)| (1.0 - t_next) * a + t_next * c).collect();
        let bt = -log_mean_exp(&ft)?;
        let gt: Vec<f64> = ft.iter().map(|v| (v + bt).exp()).collect();
        let mut local = Vec::new();
        match newton.run(coeffs.clone(), &gt, &mut local) {
            Ok((st, steps)) => {
                total_steps += steps;
                history.extend(local);
                coeffs = st.coeffs.clone();
                t = t_next;
                last = Some(st);
                if depth > 0 {
                    dt *= 2.0;
                    depth -= 1;
                }
            }
            Err(e) => {
                history.extend(local);
                depth += 1;
                if depth > problem.options.max_subdivisions {
                    return Err(match e {
                        Error::PositivityBreakdown { residual } => Error::PositivityBreakdown { residual },
                        // every attempted step, accepted or not, left one residual
                        _ => Error::NonConvergence {
                            steps: history.len().saturating_sub(1),
                            history,
                        },
                    });
                }
                dt *= 0.5;
                last = None;
            }
        }
    }
    let st = last.expect("continuation ends with an accepted solve");
    finish(torus, st, b, total_steps, history)
}

/// `|∫(ω+i∂∂̄φ)^n − ∫e^{F+b}ω^n| / ∫ω^n`.
pub fn verify_mass(solution: &MASolution, problem: &MAProblem) -> Result<f64> {
    let omega = problem.omega();
    let dens = ma_density(omega, &solution.phi)?;
    let lhs = dens.mean() / omega.det();
    let f = problem.f().grid_values()?;
    let rhs = compensated_sum(f.iter().map(|v| (v + solution.b).exp())) / f.len() as f64;
    Ok((lhs - rhs).abs())
}
