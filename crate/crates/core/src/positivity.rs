//! Constant-coefficient positivity on the torus: the effective Kähler-current
//! constant, the duality probe over constant Gauduchon metrics, and Seshadri
//! infima over supplied subvariety data.
//!
//! Averaging a closed positive current over all translations of the torus
//! keeps its class and any lower bound `T ≥ εω` (ω constant), and yields the
//! constant representative. So a current `≥ εω` exists in `[α]` exactly when
//! the constant matrix satisfies `α ⪰ εω`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{md_unchecked, wedge_integral, HermitianFormField};
use crate::matrix::HermitianMatrix;

/// `c = ∫α^n / (n ∫α^{n−1}∧β)`, the constant with `T ≥ cβ` for some `T ∈ [α]`.
pub fn kahler_current_constant(alpha: &HermitianFormField, beta: &HermitianFormField) -> Result<f64> {
    let n = alpha.n();
    let top: Vec<&HermitianFormField> = vec![alpha; n];
    let mut mixed: Vec<&HermitianFormField> = vec![alpha; n - 1];
    mixed.push(beta);
    let den = n as f64 * wedge_integral(&mixed)?;
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!("n∫α^(n-1)∧β = {den:e} is not positive")));
    }
    Ok(wedge_integral(&top)? / den)
}

/// `λ_min(β-normalized α) − c`; nonnegative means the constant
/// representative already satisfies `α ⪰ cβ`.
pub fn kahler_current_margin(alpha: &HermitianMatrix, beta: &HermitianMatrix, c: f64) -> Result<f64> {
    alpha
        .min_eigenvalue_relative(beta)
        .map(|l| l - c)
        .ok_or_else(|| Error::Degenerate("β is not positive definite".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentTest {
    pub exists: bool,
    /// `λ_min(ω-normalized α) − ε`.
    pub margin: f64,
}

/// Whether `[α]` contains a current `T ≥ εω` (torus reduction: `α ⪰ εω`).
pub fn constant_current_test(alpha: &HermitianMatrix, eps: f64, omega: &HermitianMatrix) -> Result<CurrentTest> {
    let l = alpha
        .min_eigenvalue_relative(omega)
        .ok_or_else(|| Error::Degenerate("ω is not positive definite".into()))?;
    let margin = l - eps;
    Ok(CurrentTest {
        exists: margin >= 0.0,
        margin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeBudget {
    pub restarts: usize,
    pub step: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ProbeBudget {
    fn default() -> Self {
        Self {
            restarts: 32,
            step: 1e-2,
            iterations: 500,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityProbeResult {
    pub epsilon: f64,
    /// Smallest `MD(α−εω, χ, …, χ)` found over `χ ⪰ 0`, `tr χ = 1`.
    pub min_value: f64,
    /// Minimizing `χ`.
    pub witness: HermitianMatrix,
    /// `λ_min(ω⁻¹α) − ε`.
    pub eigen_verdict: f64,
    /// `min_value` is below `−tolerance`: the witness refutes existence.
    pub refuted: bool,
    pub tolerance: f64,
}

/// Recomputes `MD(α−εω, χ, …, χ)` for a claimed witness.
pub fn probe_value(alpha: &HermitianMatrix, eps: f64, omega: &HermitianMatrix, chi: &HermitianMatrix) -> f64 {
    let n = alpha.dim();
    let d = *alpha - *omega * eps;
    let mut args = vec![*chi; n];
    args[0] = d;
    md_unchecked(&args)
}

fn hermitian_basis(n: usize) -> Vec<HermitianMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        out.push(HermitianMatrix::from_upper(n, |a, b| {
            if a == j && b == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }));
        for k in (j + 1)..n {
            for imag in [false, true] {
                out.push(HermitianMatrix::from_upper(n, |a, b| {
                    if a == j && b == k {
                        if imag {
                            Complex64::new(0.0, s)
                        } else {
                            Complex64::new(s, 0.0)
                        }
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }));
            }
        }
    }
    out
}

/// Euclidean projection of a vector onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projection onto `{χ ⪰ 0, tr χ = 1}` in the Frobenius norm.
fn project_spectraplex(m: &HermitianMatrix) -> HermitianMatrix {
    let n = m.dim();
    let (vals, vecs) = m.eigen_decomposition();
    let w = project_simplex(&vals);
    let mut out = HermitianMatrix::zeros(n);
    for (wi, v) in w.iter().zip(&vecs) {
        if *wi > 0.0 {
            out = out + HermitianMatrix::outer(v) * *wi;
        }
    }
    out
}

fn random_start(n: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let p = &g * g.adjoint() + DMatrix::identity(n, n) * Complex64::new(1e-3, 0.0);
    let m = HermitianMatrix::from_upper(n, |a, b| p[(a, b)]);
    m * (1.0 / m.trace())
}

/// Minimizes `MD(α−εω, χ, …, χ)` over constant `χ ⪰ 0` with `tr χ = 1` by
/// projected gradient from random starts. A negative minimum comes with an
/// explicit witness; a nonnegative one is only evidence, not a proof.
pub fn gauduchon_cone_probe(
    alpha: &HermitianMatrix,
    eps: f64,
    omega: &HermitianMatrix,
    budget: &ProbeBudget,
) -> Result<DualityProbeResult> {
    let n = alpha.dim();
    if omega.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: omega.dim(),
        });
    }
    let verdict = constant_current_test(alpha, eps, omega)?;
    let d = *alpha - *omega * eps;
    let scale = d.frobenius_norm().max(f64::MIN_POSITIVE);
    let tolerance = 1e-13 * scale;
    let basis = hermitian_basis(n);
    let value = |chi: &HermitianMatrix| probe_value(alpha, eps, omega, chi);

    let mut best_chi = HermitianMatrix::identity(n) * (1.0 / n as f64);
    let mut best = value(&best_chi);
    if n > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
        for _ in 0..budget.restarts.max(1) {
            let mut chi = random_start(n, &mut rng);
            let mut f = value(&chi);
            // Step starts at the budget value and adapts: doubled after a
            // decrease, halved (and the move rejected) after an increase.
            let mut step = budget.step / scale;
            for _ in 0..budget.iterations {
                // ∂/∂E MD(D, χ, …, χ) = (n−1) MD(D, E, χ, …, χ)
                let mut grad = HermitianMatrix::zeros(n);
                for e in &basis {
                    let mut args = vec![chi; n];
                    args[0] = d;
                    args[1] = *e;
                    grad = grad + *e * ((n - 1) as f64 * md_unchecked(&args));
                }
                let next = project_spectraplex(&(chi - grad * step));
                let f_next = value(&next);
                let moved = (next - chi).frobenius_norm();
                if f_next <= f {
                    chi = next;
                    f = f_next;
                    step *= 2.0;
                } else {
                    step *= 0.5;
                }
                if moved < 1e-15 {
                    break;
                }
            }
            if f < best {
                best = f;
                best_chi = chi;
            }
        }
    }
    Ok(DualityProbeResult {
        epsilon: eps,
        min_value: best,
        witness: best_chi,
        eigen_verdict: verdict.margin,
        refuted: best < -tolerance,
        tolerance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubvarietyRecord {
    pub label: String,
    pub dim: usize,
    /// `∫_V α^{dim V}`.
    pub degree: f64,
    /// `mult_x V`.
    pub mult: u32,
}

impl SubvarietyRecord {
    pub fn new(label: &str, dim: usize, degree: f64, mult: u32) -> Result<Self> {
        let r = Self {
            label: label.into(),
            dim,
            degree,
            mult,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.mult == 0 || !(self.degree >= 0.0) {
            return Err(Error::Domain(format!(
                "record {:?} needs dim ≥ 1, mult ≥ 1 and degree ≥ 0",
                self.label
            )));
        }
        Ok(())
    }

    /// `(degree / mult)^{1/dim}`.
    pub fn ratio(&self) -> f64 {
        (self.degree / self.mult as f64).powf(1.0 / self.dim as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeshadriResult {
    pub value: f64,
    pub label: String,
    /// `(∫α^n)^{1/n}` from the ambient record (largest dimension, multiplicity 1).
    pub volume_bound: Option<f64>,
    pub bound_holds: Option<bool>,
}

/// `ε(α, x) = min_V (∫_V α^{dim V} / mult_x V)^{1/dim V}`.
pub fn seshadri_infimum(records: &[SubvarietyRecord]) -> Result<SeshadriResult> {
    if records.is_empty() {
        return Err(Error::Domain("no subvariety records".into()));
    }
    for r in records {
        r.validate()?;
    }
    let (value, label) = records
        .iter()
        .map(|r| (r.ratio(), r.label.clone()))
        .fold((f64::INFINITY, String::new()), |acc, x| if x.0 < acc.0 { x } else { acc });
    let n = records.iter().map(|r| r.dim).max().unwrap();
    let volume_bound = records
        .iter()
        .filter(|r| r.dim == n && r.mult == 1)
        .map(|r| r.degree.powf(1.0 / n as f64))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    Ok(SeshadriResult {
        value,
        label,
        volume_bound,
        bound_holds: volume_bound.map(|b| value <= b * (1.0 + 1e-12)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_torus;

    #[test]
    fn current_constant_examples() {
        let t = make_torus(2, 8, None).unwrap();
        let i = HermitianFormField::constant(&t, HermitianMatrix::identity(2)).unwrap();
        assert!((kahler_current_constant(&i, &i).unwrap() - 0.5).abs() < 1e-15);
        let a = HermitianFormField::constant(&t, HermitianMatrix::identity(2) * 3.0).unwrap();
        assert!((kahler_current_constant(&a, &i).unwrap() - 1.5).abs() < 1e-14);
        let z = HermitianFormField::constant(&t, HermitianMatrix::zeros(2)).unwrap();
        assert!(kahler_current_constant(&i, &z).is_err());
    }

    #[test]
    fn constant_current_examples() {
        let i = HermitianMatrix::identity(2);
        let r = constant_current_test(&(i * 2.0), 1.0, &i).unwrap();
        assert!(r.exists && (r.margin - 1.0).abs() < 1e-15);
        let r = constant_current_test(&HermitianMatrix::diag(&[2.0, 0.5]), 1.0, &i).unwrap();
        assert!(!r.exists && (r.margin + 0.5).abs() < 1e-15);
    }

    #[test]
    fn probe_examples() {
        let i = HermitianMatrix::identity(2);
        let p = gauduchon_cone_probe(&(i * 2.0), 1.0, &i, &ProbeBudget::default()).unwrap();
        assert!(!p.refuted && p.min_value > 0.0);
        let a = HermitianMatrix::diag(&[0.0, 2.0]);
        let p = gauduchon_cone_probe(&a, 1.0, &i, &ProbeBudget::default()).unwrap();
        assert!(p.refuted);
        assert!(probe_value(&a, 1.0, &i, &p.witness) < 0.0);
        let one = HermitianMatrix::identity(1);
        let p = gauduchon_cone_probe(&(one * 0.5), 1.0, &one, &ProbeBudget::default()).unwrap();
        assert!((p.min_value + 0.5).abs() < 1e-15 && p.refuted);
    }

    #[test]
    fn probe_n3_rank_deficient_direction() {
        let i = HermitianMatrix::identity(3);
        let a = HermitianMatrix::diag(&[1.0 - 1e-5, 3.0, 2.0]);
        let p = gauduchon_cone_probe(&a, 1.0, &i, &ProbeBudget::default()).unwrap();
        assert!(p.refuted, "{}", p.min_value);
        assert!(probe_value(&a, 1.0, &i, &p.witness) < 0.0);
    }

    #[test]
    fn seshadri_examples() {
        let recs = vec![
            SubvarietyRecord::new("curve", 1, 3.0, 1).unwrap(),
            SubvarietyRecord::new("X", 2, 8.0, 2).unwrap(),
        ];
        let r = seshadri_infimum(&recs).unwrap();
        assert!((r.value - 2.0).abs() < 1e-15);
        assert_eq!(r.label, "X");
        let amb = vec![SubvarietyRecord::new("X", 2, 32.0, 1).unwrap()];
        let r = seshadri_infimum(&amb).unwrap();
        assert!((r.value - 32f64.sqrt()).abs() < 1e-14);
        assert_eq!(r.bound_holds, Some(true));
        assert!(seshadri_infimum(&[]).is_err());
        assert!(SubvarietyRecord::new("bad", 1, 1.0, 0).is_err());
    }
}
