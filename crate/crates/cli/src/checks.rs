//! Randomized instances of every inequality check, shared by `verify` (one
//! instance each) and `sweep` (many).

use std::sync::Arc;

use kahlerlab_core::forms::positivity_margin;
use kahlerlab_core::inequalities::{
    chiose_n3_identity, digest_values, elementary_poly_check, kt_check, morse_check, popovici_check,
    popovici_sharpness_family, volume_bound, want2_check, InequalityReport,
};
use kahlerlab_core::ma_solver::{solve_ma, MAProblem, SolverOptions};
use kahlerlab_core::positivity::{
    constant_current_test, gauduchon_cone_probe, kahler_current_constant, kahler_current_margin, ProbeBudget,
};
use kahlerlab_core::sampling::{random_band_limited, random_hermitian, random_psd, random_spd};
use kahlerlab_core::{ddbar, make_torus, HermitianFormField, HermitianMatrix, ScalarField, Torus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::CliError;

pub const CHECK_NAMES: &[&str] = &[
    "popovici",
    "popovici_field",
    "popovici_sharpness",
    "trace_inequality",
    "khovanskii_teissier",
    "volume_bound",
    "morse",
    "elementary_poly",
    "chiose_n3",
    "want2",
    "kahler_current_constant",
    "probe_consistency",
];

/// One report line: the check, where it came from, and its inputs for replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    #[serde(flatten)]
    pub report: InequalityReport,
    pub seed: u64,
    pub instance: usize,
    pub inputs: Value,
}

/// Deterministic per-(check, instance) stream, independent of run order.
fn stream(seed: u64, name: &str, instance: usize) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ h);
    rng.set_stream(instance as u64);
    rng
}

fn form(m: &HermitianMatrix) -> Value {
    serde_json::to_value(m).expect("matrix serializes")
}

fn constant(t: &Arc<Torus>, m: HermitianMatrix) -> Result<HermitianFormField, CliError> {
    Ok(HermitianFormField::constant(t, m)?)
}

fn positive_field(t: &Arc<Torus>, rng: &mut ChaCha8Rng) -> Result<(HermitianFormField, Value), CliError> {
    let n = t.n();
    loop {
        let base = random_spd(n, 0.5, rng);
        let poly = random_band_limited(2 * n, 1, 2, 0.02, rng);
        let u = ScalarField::from_trig(t, poly.clone())?;
        let f = constant(t, base)?.add(&ddbar(&u))?;
        if positivity_margin(&f.to_grid()?, &HermitianMatrix::identity(n)) > 0.0 {
            let terms: Vec<Value> = poly
                .terms()
                .map(|(m, c)| json!({"m": &m[..2 * n], "re": c.re, "im": c.im}))
                .collect();
            return Ok((f, json!({"constant": form(&base), "u": terms})));
        }
    }
}

/// Runs `name` on instance `instance`; `n` and the lattice come from `torus`
/// where the check is dimension-generic.
pub fn run_check(
    name: &str,
    torus: &Arc<Torus>,
    seed: u64,
    instance: usize,
    tol: f64,
) -> Result<Vec<Record>, CliError> {
    let mut rng = stream(seed, name, instance);
    let n = torus.n();
    let record = |report: InequalityReport, inputs: Value| Record {
        report,
        seed,
        instance,
        inputs,
    };
    let out = match name {
        "popovici" => {
            let [a, b, c] = [(); 3].map(|_| random_spd(n, 0.01, &mut rng));
            let r = popovici_check(&constant(torus, a)?, &constant(torus, b)?, &constant(torus, c)?, tol)?;
            vec![record(r, json!({"alpha": form(&a), "beta": form(&b), "chi": form(&c)}))]
        }
        "popovici_field" => {
            let t = if torus.has_grid() { torus.clone() } else { make_torus(2, 8, None)? };
            let (a, ia) = positive_field(&t, &mut rng)?;
            let (b, ib) = positive_field(&t, &mut rng)?;
            let (c, ic) = positive_field(&t, &mut rng)?;
            let mut r = popovici_check(&a, &b, &c, tol)?;
            r.name = "popovici_field".into();
            vec![record(r, json!({"n": t.n(), "alpha": ia, "beta": ib, "chi": ic}))]
        }
        "popovici_sharpness" => {
            // the diagonal family is extremal in dimension two only
            let nn = 2;
            let ts: Vec<f64> = (0..60).map(|k| 10f64.powf(-6.0 * k as f64 / 59.0)).collect();
            let (t_min, ratio) = popovici_sharpness_family(nn, &ts)?;
            let mut r = InequalityReport::at_least("popovici_sharpness", 1.01, ratio, 0.0);
            r.details.insert("t".into(), t_min);
            r.digest = digest_values(ts.iter().copied());
            vec![record(r, json!({"n": nn, "t_min": ts.last(), "t_max": ts.first()}))]
        }
        "trace_inequality" => {
            let [chi, at, beta] = [(); 3].map(|_| random_spd(n, 0.01, &mut rng));
            let lhs = chi.trace_of(&beta)?;
            let rhs = chi.trace_of(&at)? * at.trace_of(&beta)?;
            // tr_χβ ≤ (tr_χα̃)(tr_α̃β)
            let mut r = InequalityReport::at_least("trace_inequality", rhs, lhs, 1e-12 * rhs.max(1.0));
            r.digest = digest_values([chi, at, beta].iter().flat_map(|m| m.real_parts().into_iter().flatten()));
            vec![record(r, json!({"chi": form(&chi), "alpha_tilde": form(&at), "beta": form(&beta)}))]
        }
        "khovanskii_teissier" => {
            let omega = random_spd(n, 0.1, &mut rng);
            let alpha = random_psd(n, rng.gen_range(n.saturating_sub(1).max(1)..=n), &mut rng) * rng.gen_range(0.1..3.0);
            let r = kt_check(&constant(torus, alpha)?, &constant(torus, omega)?, tol)?;
            vec![record(r, json!({"alpha": form(&alpha), "omega": form(&omega)}))]
        }
        "volume_bound" => loop {
            let alpha = random_spd(n, 0.1, &mut rng);
            let s = rng.gen_range(0.0..1.0) * alpha.min_eigenvalue();
            let beta = random_psd(n, rng.gen_range(1..=n), &mut rng) * s;
            let (first, second) = volume_bound(&constant(torus, alpha)?, &constant(torus, beta)?, tol)?;
            if first.details["hypothesis"] > 0.0 {
                let inputs = json!({"alpha": form(&alpha), "beta": form(&beta)});
                break vec![record(first, inputs.clone()), record(second, inputs)];
            }
        },
        "morse" => {
            let t = if torus.has_grid() { torus.clone() } else { make_torus(2, 32, None)? };
            let nn = t.n();
            let alpha = random_spd(nn, 0.5, &mut rng);
            let amp = rng.gen_range(0.05..0.5);
            let poly = random_band_limited(2 * nn, 2, 3, amp, &mut rng);
            let f = ScalarField::from_trig(&t, poly.clone())?.to_grid()?;
            let r = morse_check(&alpha, &f)?;
            let terms: Vec<Value> = poly
                .terms()
                .map(|(m, c)| json!({"m": &m[..2 * nn], "re": c.re, "im": c.im}))
                .collect();
            vec![record(r, json!({"n": nn, "grid": t.grid(), "alpha": form(&alpha), "f": terms}))]
        }
        "elementary_poly" => {
            let k = rng.gen_range(1..=6usize);
            let x = rng.gen_range(0.0..1.0) / k as f64;
            let holds = elementary_poly_check(k, x)?;
            let kf = k as f64;
            let mut r = InequalityReport::at_least(
                "elementary_poly",
                (1.0 - kf * x).powi(k as i32),
                1.0 - kf * kf * x,
                1e-14,
            );
            r.passed = holds;
            r.digest = digest_values([kf, x]);
            vec![record(r, json!({"n": k, "x": x}))]
        }
        "chiose_n3" => {
            let t = make_torus(3, 8, None)?;
            let alpha = random_spd(3, 0.2, &mut rng);
            let omega = random_spd(3, 0.2, &mut rng);
            let poly = random_band_limited(6, 2, 3, 0.3, &mut rng);
            let eps = rng.gen_range(0.0..1.0);
            let u = ScalarField::from_trig(&t, poly.clone())?;
            let r = chiose_n3_identity(&alpha, &omega, &u, eps, tol)?;
            let terms: Vec<Value> = poly
                .terms()
                .map(|(m, c)| json!({"m": m, "re": c.re, "im": c.im}))
                .collect();
            vec![record(r, json!({"alpha": form(&alpha), "omega": form(&omega), "epsilon": eps, "u": terms}))]
        }
        "want2" => {
            let t = if torus.has_grid() { torus.clone() } else { make_torus(2, 16, None)? };
            let nn = t.n();
            let alpha = random_spd(nn, 0.5, &mut rng);
            let omega = random_spd(nn, 0.5, &mut rng);
            let eps = rng.gen_range(0.01..0.5);
            let poly = random_band_limited(2 * nn, 2, 3, 0.2, &mut rng);
            let f = ScalarField::from_trig(&t, poly.clone())?;
            let class = constant(&t, alpha + omega * eps)?;
            let options = SolverOptions {
                tolerance: tol,
                ..SolverOptions::default()
            };
            let problem = MAProblem::new(&class, f, true)?.with_options(options);
            let sol = solve_ma(&problem)?;
            let solver_tol = kahlerlab_core::ma_solver::scaled_tolerance(tol, &[(1.0f64 + 0.2).exp()]);
            let r = want2_check(&alpha, &omega, eps, &sol, solver_tol, 1e-8)?;
            let terms: Vec<Value> = poly
                .terms()
                .map(|(m, c)| json!({"m": &m[..2 * nn], "re": c.re, "im": c.im}))
                .collect();
            vec![record(
                r,
                json!({"n": nn, "grid": t.grid(), "alpha": form(&alpha), "omega": form(&omega), "epsilon": eps, "f": terms}),
            )]
        }
        "kahler_current_constant" => {
            let alpha = random_spd(n, 0.01, &mut rng);
            let beta = random_spd(n, 0.01, &mut rng);
            let c = kahler_current_constant(&constant(torus, alpha)?, &constant(torus, beta)?)?;
            let margin = kahler_current_margin(&alpha, &beta, c)?;
            let mut r = InequalityReport::at_least("kahler_current_constant", margin + c, c, 1e-12 * c);
            r.digest = digest_values([alpha, beta].iter().flat_map(|m| m.real_parts().into_iter().flatten()));
            vec![record(r, json!({"alpha": form(&alpha), "beta": form(&beta)}))]
        }
        "probe_consistency" => loop {
            let omega = random_spd(n, 0.2, &mut rng);
            let alpha = random_hermitian(n, &mut rng) + HermitianMatrix::identity(n) * rng.gen_range(0.0..2.0);
            let eps = rng.gen_range(0.0..1.0);
            let verdict = constant_current_test(&alpha, eps, &omega)?;
            if verdict.margin.abs() <= 1e-6 {
                continue;
            }
            let budget = ProbeBudget {
                seed: rng.gen(),
                ..ProbeBudget::default()
            };
            let p = gauduchon_cone_probe(&alpha, eps, &omega, &budget)?;
            let agree = p.refuted != verdict.exists;
            let mut r = InequalityReport::at_least("probe_consistency", p.min_value, 0.0, p.tolerance);
            // passes when the probe verdict matches the eigenvalue test
            r.passed = agree;
            r.details.insert("eigen_margin".into(), verdict.margin);
            r.details.insert("refuted".into(), f64::from(u8::from(p.refuted)));
            r.digest = digest_values(
                [alpha, omega]
                    .iter()
                    .flat_map(|m| m.real_parts().into_iter().flatten())
                    .chain([eps]),
            );
            break vec![record(
                r,
                json!({"alpha": form(&alpha), "omega": form(&omega), "epsilon": eps, "witness": form(&p.witness)}),
            )];
        },
        other => return Err(CliError::Config(format!("unknown check {other:?}"))),
    };
    Ok(out)
}

/// The checks that apply to a geometry: Morse and the solver-backed check
/// need a grid (n ≤ 2).
pub fn applicable(torus: &Torus) -> Vec<&'static str> {
    CHECK_NAMES
        .iter()
        .copied()
        .filter(|c| torus.has_grid() || !matches!(*c, "morse" | "want2"))
        .collect()
}
