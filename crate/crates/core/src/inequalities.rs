//! Structured checks of intersection inequalities and identities.
//!
//! Every check returns an [`InequalityReport`] carrying both sides, the slack,
//! the tolerance used and a digest of the inputs, so sweeps can be replayed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{fact, positivity_margin, wedge_integral, HermitianFormField};
use crate::geometry::{ddbar, ScalarField};
use crate::ma_solver::MASolution;
use crate::matrix::HermitianMatrix;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Evaluated,
    /// A precondition of the inequality failed; nothing was compared.
    HypothesisFailed,
    /// The quantity is not computable in the torus model.
    Unsupported,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub ratio: Option<f64>,
    pub passed: bool,
    pub status: CheckStatus,
    pub tolerance: f64,
    pub digest: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
}

impl InequalityReport {
    /// `lhs ≥ rhs`, passing when `lhs − rhs ≥ −tolerance`.
    pub fn at_least(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = lhs - rhs;
        Self {
            name: name.into(),
            lhs,
            rhs,
            slack,
            ratio: (rhs != 0.0).then(|| lhs / rhs),
            passed: slack >= -tolerance,
            status: CheckStatus::Evaluated,
            tolerance,
            digest: String::new(),
            details: BTreeMap::new(),
        }
    }

    /// `lhs/rhs ≥ 1`, with slack `ratio − 1`.
    pub fn ratio_at_least_one(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let ratio = lhs / rhs;
        Self {
            slack: ratio - 1.0,
            ratio: Some(ratio),
            passed: ratio - 1.0 >= -tolerance,
            ..Self::at_least(name, lhs, rhs, tolerance)
        }
    }

    /// `lhs = rhs` to relative tolerance; slack is minus the relative error.
    pub fn identity(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let rel = (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE);
        Self {
            slack: -rel,
            passed: rel <= tolerance,
            ..Self::at_least(name, lhs, rhs, tolerance)
        }
    }

    fn with_status(mut self, status: CheckStatus) -> Self {
        self.status = status;
        if status != CheckStatus::Evaluated {
            self.passed = false;
        }
        self
    }

    fn with_digest(mut self, digest: String) -> Self {
        self.digest = digest;
        self
    }

    fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.into(), value);
        self
    }
}

/// FNV-1a over the bit patterns of the inputs.
pub fn digest_values(values: impl IntoIterator<Item = f64>) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

fn form_values(f: &HermitianFormField) -> Vec<f64> {
    let n = f.n();
    let mut out = Vec::new();
    let count = if f.is_constant() { 1 } else { f.sample_count().min(4096) };
    for p in 0..count {
        let m = f.at(p);
        for j in 0..n {
            for k in 0..n {
                out.push(m.get(j, k).re);
                out.push(m.get(j, k).im);
            }
        }
    }
    out
}

fn digest_forms(forms: &[&HermitianFormField], scalars: &[f64]) -> String {
    digest_values(forms.iter().flat_map(|f| form_values(f)).chain(scalars.iter().copied()))
}

fn identity_of(f: &HermitianFormField) -> HermitianMatrix {
    HermitianMatrix::identity(f.n())
}

fn require_positive(name: &str, f: &HermitianFormField) -> Result<()> {
    let m = positivity_margin(f, &identity_of(f));
    if m > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} is not positive definite (margin {m:e})")))
    }
}

fn require_semipositive(name: &str, f: &HermitianFormField, tol: f64) -> Result<()> {
    let m = positivity_margin(f, &identity_of(f));
    if m >= -tol {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} is not semipositive (margin {m:e})")))
    }
}

/// `∫ a^k ∧ b^{n−k}`.
fn mixed(a: &HermitianFormField, k: usize, b: &HermitianFormField) -> Result<f64> {
    let n = a.n();
    let slots: Vec<&HermitianFormField> = (0..n).map(|i| if i < k { a } else { b }).collect();
    wedge_integral(&slots)
}

/// `(∫α∧χ^{n−1})(∫β∧α^{n−1}) ≥ (1/n)(∫α^n)(∫β∧χ^{n−1})`, reported as a ratio.
pub fn popovici_check(
    alpha: &HermitianFormField,
    beta: &HermitianFormField,
    chi: &HermitianFormField,
    tol: f64,
) -> Result<InequalityReport> {
    require_positive("alpha", alpha)?;
    require_positive("beta", beta)?;
    require_positive("chi", chi)?;
    let n = alpha.n();
    let a_chi = mixed(alpha, 1, chi)?;
    let a_beta = mixed(alpha, n - 1, beta)?;
    let a_n = mixed(alpha, n, alpha)?;
    let b_chi = mixed(beta, 1, chi)?;
    let lhs = a_chi * a_beta;
    let rhs = a_n * b_chi / n as f64;
    Ok(InequalityReport::ratio_at_least_one("popovici", lhs, rhs, tol)
        .with_digest(digest_forms(&[alpha, beta, chi], &[])))
}

/// Minimal Popovici ratio over the diagonal family `α = diag(1,t,…)`,
/// `χ = diag(1,t²,…)`, `β = I`; returns `(t, ratio)` at the minimum.
/// The ratio tends to 1 as `t → 0` for `n = 2` and to `n − 1` beyond.
pub fn popovici_sharpness_family(n: usize, ts: &[f64]) -> Result<(f64, f64)> {
    let torus = crate::geometry::make_torus(n, 8, None)?;
    let mut best = (f64::NAN, f64::INFINITY);
    for &t in ts {
        let mut da = vec![1.0; n];
        let mut dc = vec![1.0; n];
        for j in 1..n {
            da[j] = t;
            dc[j] = t * t;
        }
        let a = HermitianFormField::constant(&torus, HermitianMatrix::diag(&da))?;
        let c = HermitianFormField::constant(&torus, HermitianMatrix::diag(&dc))?;
        let b = HermitianFormField::constant(&torus, HermitianMatrix::identity(n))?;
        let r = popovici_check(&a, &b, &c, 0.0)?.ratio.unwrap_or(f64::INFINITY);
        if r < best.1 {
            best = (t, r);
        }
    }
    Ok(best)
}

/// `∫α^{n−1}∧ω ≥ (∫α^n)^{(n−1)/n} (∫ω^n)^{1/n}`; `tol` is relative.
pub fn kt_check(alpha: &HermitianFormField, omega: &HermitianFormField, tol: f64) -> Result<InequalityReport> {
    require_semipositive("alpha", alpha, 1e-12)?;
    require_positive("omega", omega)?;
    let n = alpha.n();
    let lhs = mixed(alpha, n - 1, omega)?;
    let a_n = mixed(alpha, n, alpha)?;
    // ∫α^n of a degenerate class is roundoff; its root would amplify it
    let size = (0..alpha.sample_count()).map(|p| alpha.at(p).frobenius_norm()).fold(0.0, f64::max);
    let floor = 1e-13 * fact(n) * alpha.torus().volume() * size.powi(n as i32);
    let a_n = if a_n <= floor { 0.0 } else { a_n };
    let w_n = mixed(omega, n, omega)?;
    let rhs = a_n.powf((n as f64 - 1.0) / n as f64) * w_n.powf(1.0 / n as f64);
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    let report = InequalityReport::at_least("khovanskii_teissier", lhs, rhs, tol * scale);
    let equality = (lhs - rhs).abs() <= tol * scale;
    Ok(report
        .detail("equality", if equality { 1.0 } else { 0.0 })
        .with_digest(digest_forms(&[alpha, omega], &[])))
}

/// Both displayed lower bounds for `Vol(α−β)`:
/// `bound₁ = (A − nB)^n / A^{n−1}` and `bound₂ = A − n²B` with
/// `A = ∫α^n`, `B = ∫α^{n−1}∧β`. The first report compares `Vol(α−β)`
/// (computable as `∫(α−β)^n` only when `α−β ⪰ 0`) with `bound₁`, the second
/// `bound₁` with `bound₂`.
pub fn volume_bound(
    alpha: &HermitianFormField,
    beta: &HermitianFormField,
    tol: f64,
) -> Result<(InequalityReport, InequalityReport)> {
    require_semipositive("alpha", alpha, 1e-12)?;
    require_semipositive("beta", beta, 1e-12)?;
    let n = alpha.n();
    let nf = n as f64;
    let a = mixed(alpha, n, alpha)?;
    let b = mixed(alpha, n - 1, beta)?;
    let hyp = a - nf * b;
    let bound1 = if a > 0.0 { hyp.powi(n as i32) / a.powi(n as i32 - 1) } else { f64::NAN };
    let bound2 = a - nf * nf * b;
    let digest = digest_forms(&[alpha, beta], &[]);
    let diff = alpha.add(&beta.scale(-1.0))?;
    let diff_margin = positivity_margin(&diff, &identity_of(&diff));
    let scale = a.abs().max(1.0);

    let mut first = if diff_margin >= -1e-12 {
        let vol = mixed(&diff, n, &diff)?;
        InequalityReport::at_least("volume_bound.vol_ge_bound1", vol, bound1, tol * scale)
    } else {
        InequalityReport::at_least("volume_bound.vol_ge_bound1", f64::NAN, bound1, tol * scale)
            .with_status(CheckStatus::Unsupported)
    };
    let mut second = InequalityReport::at_least("volume_bound.bound1_ge_bound2", bound1, bound2, tol * scale);
    if !(hyp > 0.0) {
        first = first.with_status(CheckStatus::HypothesisFailed);
        second = second.with_status(CheckStatus::HypothesisFailed);
    }
    Ok((
        first.detail("hypothesis", hyp).with_digest(digest.clone()),
        second.detail("hypothesis", hyp).with_digest(digest),
    ))
}

/// `δ = (∫α^n − n∫α^{n−1}∧β)/∫α^n`; `δ ≤ 0` signals that the hypothesis fails.
pub fn delta_constant(alpha: &HermitianFormField, beta: &HermitianFormField) -> Result<f64> {
    let n = alpha.n();
    let a = mixed(alpha, n, alpha)?;
    if !(a > 0.0) {
        return Err(Error::Degenerate(format!("∫α^n = {a:e} is not positive")));
    }
    let b = mixed(alpha, n - 1, beta)?;
    Ok((a - n as f64 * b) / a)
}

/// Largest `m` with `α − β ⪰ (δ + m)·α` for constant forms, i.e.
/// `λ_min(α-normalized (α−β)) − δ`. Nonnegative means the constant
/// representative already satisfies `α − β ⪰ δα`.
pub fn delta_pointwise_margin(alpha: &HermitianMatrix, beta: &HermitianMatrix, delta: f64) -> Result<f64> {
    let diff = *alpha - *beta;
    diff.min_eigenvalue_relative(alpha)
        .map(|l| l - delta)
        .ok_or_else(|| Error::Degenerate("α is not positive definite".into()))
}

/// `∫α^n ≤ ∫_{X(β,0)} β^n` with `β = α + i∂∂̄f`, where `X(β,0)` is the set of
/// grid points where `β ⪰ 0`. Tolerance is `10 h² ∫α^n`.
pub fn morse_check(alpha: &HermitianMatrix, f: &ScalarField) -> Result<InequalityReport> {
    let torus = f.torus();
    torus.require_grid()?;
    let n = torus.n();
    let h = ddbar(f);
    let base = HermitianFormField::constant(torus, *alpha)?;
    let beta = base.add(&h)?;
    let len = torus.point_count();
    let mut inside = 0usize;
    let masked = crate::geometry::compensated_sum((0..len).map(|p| {
        let m = beta.at(p);
        if m.min_eigenvalue() >= 0.0 {
            inside += 1;
            m.det()
        } else {
            0.0
        }
    }));
    let scale = fact(n) * torus.volume();
    let lhs = scale * alpha.det();
    let rhs = scale * masked / len as f64;
    let spacing = torus.spacing();
    let tol = 10.0 * spacing * spacing * lhs.abs();
    let vals = f.grid_values()?;
    // reported as rhs − lhs ≥ 0
    let mut report = InequalityReport::at_least("morse", rhs, lhs, tol);
    std::mem::swap(&mut report.lhs, &mut report.rhs);
    Ok(report
        .detail("mask_fraction", inside as f64 / len as f64)
        .with_digest(digest_values(
            alpha.real_parts().into_iter().flatten().chain(vals.iter().step_by(97).copied()),
        )))
}

/// `(1 − nx)^n ≥ 1 − n²x` for `0 ≤ x < 1/n` (1e-14 rounding allowance).
pub fn elementary_poly_check(n: usize, x: f64) -> Result<bool> {
    let nf = n as f64;
    if n == 0 || !(x >= 0.0 && x < 1.0 / nf) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1/{n})")));
    }
    Ok((1.0 - nf * x).powi(n as i32) >= 1.0 - nf * nf * x - 1e-14)
}

/// For `n = 3`, `α̃ = α + εω + i∂∂̄u`:
/// `∫α̃³ − 3ε∫ω∧α̃² = ∫α³ − 3ε²∫α∧ω² − 2ε³∫ω³`, evaluated exactly in Fourier
/// space. Details carry the threshold `eps_star` (largest `ε` keeping the
/// right side positive) and `want3_holds` at the given `ε`.
pub fn chiose_n3_identity(
    alpha: &HermitianMatrix,
    omega: &HermitianMatrix,
    u: &ScalarField,
    eps: f64,
    tol: f64,
) -> Result<InequalityReport> {
    let torus = u.torus();
    if torus.n() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: torus.n(),
        });
    }
    if u.trig().is_none() {
        return Err(Error::Domain("u must be a band-limited Fourier field".into()));
    }
    let a = HermitianFormField::constant(torus, *alpha)?;
    let w = HermitianFormField::constant(torus, *omega)?;
    let at = a.add(&w.scale(eps))?.add(&ddbar(u))?;
    let lhs = mixed(&at, 3, &at)? - 3.0 * eps * mixed(&at, 2, &w)?;
    let a3 = mixed(&a, 3, &a)?;
    let aw2 = mixed(&a, 1, &w)?;
    let w3 = mixed(&w, 3, &w)?;
    let p = |e: f64| a3 - 3.0 * e * e * aw2 - 2.0 * e * e * e * w3;
    let rhs = p(eps);
    let eps_star = positive_root(p);
    let mut digest_input: Vec<f64> = alpha.real_parts().into_iter().flatten().collect();
    digest_input.extend(omega.real_parts().into_iter().flatten());
    if let Some(poly) = u.trig() {
        for (m, c) in poly.terms() {
            digest_input.extend(m.iter().map(|&x| x as f64));
            digest_input.push(c.re);
            digest_input.push(c.im);
        }
    }
    digest_input.push(eps);
    Ok(InequalityReport::identity("chiose_n3", lhs, rhs, tol)
        .detail("eps_star", eps_star)
        .detail("want3_holds", if rhs > 0.0 { 1.0 } else { 0.0 })
        .with_digest(digest_values(digest_input)))
}

/// First positive zero of a function positive at 0 and eventually negative, by bisection.
fn positive_root(p: impl Fn(f64) -> f64) -> f64 {
    if !(p(0.0) > 0.0) {
        return 0.0;
    }
    let mut hi = 1.0;
    while p(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `nε∫ω∧α̃^{n−1} / ∫α̃^n` for `α̃ = α + εω + i∂∂̄φ` with `φ` from a solve.
///
/// Passes when the ratio matches the constant-class value to `tol` and is
/// below one; `delta_prime = 1 − ratio` is reported.
pub fn want2_check(
    alpha: &HermitianMatrix,
    omega: &HermitianMatrix,
    eps: f64,
    solution: &MASolution,
    solver_tol: f64,
    tol: f64,
) -> Result<InequalityReport> {
    if !(solution.residual_sup <= solver_tol) {
        return Err(Error::NotConverged {
            residual: solution.residual_sup,
            tolerance: solver_tol,
        });
    }
    let torus = solution.phi.torus();
    let n = torus.n();
    let nf = n as f64;
    let class = HermitianFormField::constant(torus, *alpha + *omega * eps)?;
    let w = HermitianFormField::constant(torus, *omega)?;
    let at = class.plus_ddbar(&solution.phi)?;
    let ratio = nf * eps * mixed(&at, n - 1, &w)? / mixed(&at, n, &at)?;
    let predicted = nf * eps * mixed(&class, n - 1, &w)? / mixed(&class, n, &class)?;
    let mut report = InequalityReport::identity("want2", ratio, predicted, tol);
    report.passed &= ratio < 1.0;
    let mut digest_input: Vec<f64> = alpha.real_parts().into_iter().flatten().collect();
    digest_input.extend(omega.real_parts().into_iter().flatten());
    digest_input.push(eps);
    Ok(report
        .detail("delta_prime", 1.0 - ratio)
        .with_digest(digest_values(digest_input)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_torus;

    fn c(t: &std::sync::Arc<crate::geometry::Torus>, m: HermitianMatrix) -> HermitianFormField {
        HermitianFormField::constant(t, m).unwrap()
    }

    #[test]
    fn popovici_identity_ratio() {
        let t = make_torus(2, 8, None).unwrap();
        let i = c(&t, HermitianMatrix::identity(2));
        let r = popovici_check(&i, &i, &i, 1e-12).unwrap();
        assert!((r.ratio.unwrap() - 2.0).abs() < 1e-14);
        assert!(r.passed);
    }

    #[test]
    fn sharpness_family_approaches_one() {
        let ts: Vec<f64> = (1..=40).map(|k| 10f64.powf(-k as f64 / 10.0)).collect();
        let (_, r) = popovici_sharpness_family(2, &ts).unwrap();
        assert!((1.0..=1.01).contains(&r), "{r}");
        let (_, r3) = popovici_sharpness_family(3, &ts).unwrap();
        assert!((r3 - 2.0).abs() < 1e-3, "{r3}");
    }

    #[test]
    fn kt_examples() {
        let t = make_torus(2, 8, None).unwrap();
        let w = c(&t, HermitianMatrix::identity(2));
        let r = kt_check(&c(&t, HermitianMatrix::diag(&[1.0, 4.0])), &w, 1e-12).unwrap();
        assert_eq!(r.lhs, 20.0);
        assert!((r.rhs - 16.0).abs() < 1e-12);
        assert!(r.passed);
        let r = kt_check(&c(&t, HermitianMatrix::identity(2) * 3.0), &w, 1e-10).unwrap();
        assert_eq!(r.details["equality"], 1.0);
        let r = kt_check(&c(&t, HermitianMatrix::zeros(2)), &w, 1e-10).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(kt_check(&c(&t, HermitianMatrix::identity(2) * -1.0), &w, 1e-10).is_err());
    }

    #[test]
    fn volume_bound_examples() {
        let t = make_torus(2, 8, None).unwrap();
        let a = c(&t, HermitianMatrix::identity(2) * 2.0);
        let (v, b) = volume_bound(&a, &c(&t, HermitianMatrix::zeros(2)), 1e-10).unwrap();
        assert_eq!((v.lhs, v.rhs), (32.0, 32.0));
        assert!(v.passed && b.passed);
        let (v, b) = volume_bound(&a, &c(&t, HermitianMatrix::identity(2) * 0.5), 1e-10).unwrap();
        assert!((v.lhs - 18.0).abs() < 1e-12 && (v.rhs - 8.0).abs() < 1e-12);
        assert!((b.rhs - 0.0).abs() < 1e-12);
        let (v, _) = volume_bound(&a, &c(&t, HermitianMatrix::diag(&[3.0, 0.0])), 1e-10).unwrap();
        assert_eq!(v.status, CheckStatus::HypothesisFailed);
    }

    #[test]
    fn delta_examples() {
        let t = make_torus(2, 8, None).unwrap();
        let a = c(&t, HermitianMatrix::identity(2) * 2.0);
        assert_eq!(delta_constant(&a, &c(&t, HermitianMatrix::zeros(2))).unwrap(), 1.0);
        assert!((delta_constant(&a, &c(&t, HermitianMatrix::identity(2) * 0.5)).unwrap() - 0.5).abs() < 1e-15);
        assert!(delta_constant(&a, &c(&t, HermitianMatrix::identity(2) * 1.5)).unwrap() <= 0.0);
        let m = delta_pointwise_margin(&(HermitianMatrix::identity(2) * 2.0), &(HermitianMatrix::identity(2) * 0.5), 0.5).unwrap();
        assert!((m - 0.25).abs() < 1e-15);
    }

    #[test]
    fn morse_trivial() {
        let t = make_torus(2, 8, None).unwrap();
        let r = morse_check(&HermitianMatrix::identity(2), &ScalarField::zero(&t)).unwrap();
        assert!((r.lhs - r.rhs).abs() < 1e-12 && r.passed);
        assert_eq!(r.details["mask_fraction"], 1.0);
    }

    #[test]
    fn elementary_examples() {
        assert!(elementary_poly_check(3, 0.0).unwrap());
        assert!(elementary_poly_check(2, 0.25).unwrap());
        assert!(elementary_poly_check(2, 0.5).is_err());
        assert!(elementary_poly_check(2, -0.1).is_err());
    }

    #[test]
    fn chiose_threshold() {
        let t = make_torus(3, 8, None).unwrap();
        let r = chiose_n3_identity(
            &(HermitianMatrix::identity(3) * 2.0),
            &HermitianMatrix::identity(3),
            &ScalarField::constant(&t, 0.0),
            0.1,
            1e-12,
        )
        .unwrap();
        assert!(r.passed);
        // 384 − 288ε² − 96ε³ = −96(ε−1)(ε+2)²
        assert!((r.details["eps_star"] - 1.0).abs() < 1e-12);
    }
}
