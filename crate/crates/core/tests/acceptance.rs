//! Acceptance suite: twelve end-to-end checks, each with its tolerance and
//! wall-clock budget. Prints one PASS/FAIL line per check and exits nonzero
//! if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use kahlerlab_core::concentration::{run_concentration, ConcentrationResult, ConcentrationSpec};
use kahlerlab_core::inequalities::{
    chiose_n3_identity, elementary_poly_check, kt_check, morse_check, popovici_check, popovici_sharpness_family,
    volume_bound, CheckStatus,
};
use kahlerlab_core::ma_solver::{solve_ma, MAProblem};
use kahlerlab_core::positivity::{
    constant_current_test, gauduchon_cone_probe, kahler_current_constant, kahler_current_margin, probe_value,
    ProbeBudget,
};
use kahlerlab_core::sampling::{random_band_limited, random_hermitian, random_psd, random_spd};
use kahlerlab_core::{
    ddbar, make_torus, wedge_integral, HermitianFormField, HermitianMatrix, ScalarField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn constant(t: &std::sync::Arc<kahlerlab_core::Torus>, m: HermitianMatrix) -> HermitianFormField {
    HermitianFormField::constant(t, m).unwrap()
}

fn c1_solver_n1() -> Outcome {
    let t = make_torus(1, 256, None).unwrap();
    let (a, m) = (0.5, [1i32, 2]);
    let f = ScalarField::from_fn(&t, |x| (1.0 + a * (2.0 * PI * (m[0] as f64 * x[0] + m[1] as f64 * x[1])).cos()).ln())
        .unwrap();
    let problem = MAProblem::new(&constant(&t, HermitianMatrix::identity(1)), f, true).unwrap();
    let sol = solve_ma(&problem).unwrap();
    // 1 + ¼Δφ = 1 + a cos(k·x)  ⇒  φ = −4a cos(k·x)/|k|²
    let k2 = 4.0 * PI * PI * ((m[0] * m[0] + m[1] * m[1]) as f64);
    let phi = sol.phi.grid_values().unwrap();
    let err = (0..t.point_count())
        .map(|p| {
            let x = t.point(p);
            let exact = -4.0 * a * (2.0 * PI * (m[0] as f64 * x[0] + m[1] as f64 * x[1])).cos() / k2;
            (phi[p] - exact).abs()
        })
        .fold(0.0, f64::max);
    outcome(err < 1e-10, format!("sup|φ − φ_exact| = {err:.2e}"))
}

fn c2_solver_n2() -> Outcome {
    let t = make_torus(2, 32, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_res, mut worst_steps, mut worst_margin) = (0.0f64, 0usize, f64::INFINITY);
    let mut ok = true;
    for _ in 0..20 {
        let omega = random_spd(2, 0.5, &mut rng);
        let f = ScalarField::from_trig(&t, random_band_limited(4, 2, 4, 0.3, &mut rng)).unwrap();
        match solve_ma(&MAProblem::new(&constant(&t, omega), f, true).unwrap()) {
            Ok(s) => {
                worst_res = worst_res.max(s.residual_sup);
                worst_steps = worst_steps.max(s.newton_steps);
                worst_margin = worst_margin.min(s.positivity_margin);
                ok &= s.newton_steps <= 15 && s.residual_sup < 1e-8 && s.positivity_margin > 0.0;
            }
            Err(e) => {
                ok = false;
                println!("    solve failed: {e}");
            }
        }
    }
    outcome(
        ok,
        format!("20 solves: max residual {worst_res:.2e}, max steps {worst_steps}, min margin {worst_margin:.3}"),
    )
}

fn c3_mass_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = make_torus(2, 16, None).unwrap();
    let mut worst_mass = 0.0f64;
    for _ in 0..50 {
        let omega = random_spd(2, 0.3, &mut rng);
        let amp = rng.gen_range(0.01..0.5);
        let phi = ScalarField::from_trig(&t, random_band_limited(4, 3, 5, amp, &mut rng))
            .unwrap()
            .to_grid()
            .unwrap();
        let w = constant(&t, omega);
        let a = w.plus_ddbar(&phi).unwrap();
        let lhs = wedge_integral(&[&a, &a]).unwrap();
        let rhs = wedge_integral(&[&w, &w]).unwrap();
        worst_mass = worst_mass.max((lhs - rhs).abs() / rhs);
    }
    let mut worst_class = 0.0f64;
    for n in 2..=3usize {
        let t = make_torus(n, 8, None).unwrap();
        for _ in 0..10 {
            let alpha = random_hermitian(n, &mut rng);
            let omega = random_spd(n, 0.3, &mut rng);
            let u = ScalarField::from_trig(&t, random_band_limited(2 * n, 2, 3, 0.2, &mut rng)).unwrap();
            let a = constant(&t, alpha);
            let moved = a.add(&ddbar(&u)).unwrap();
            let w = constant(&t, omega);
            for k in 0..=n {
                let slots = |x: &HermitianFormField| -> Vec<HermitianFormField> {
                    (0..n).map(|i| if i < k { x.clone() } else { w.clone() }).collect()
                };
                let s0 = slots(&a);
                let s1 = slots(&moved);
                let v0 = wedge_integral(&s0.iter().collect::<Vec<_>>()).unwrap();
                let v1 = wedge_integral(&s1.iter().collect::<Vec<_>>()).unwrap();
                worst_class = worst_class.max((v1 - v0).abs() / v0.abs().max(1.0));
            }
        }
    }
    outcome(
        worst_mass < 1e-9 && worst_class < 1e-10,
        format!("mass rel err {worst_mass:.2e}, class rel err {worst_class:.2e}"),
    )
}

fn random_positive_field(
    t: &std::sync::Arc<kahlerlab_core::Torus>,
    rng: &mut ChaCha8Rng,
) -> HermitianFormField {
    let n = t.n();
    loop {
        let base = constant(t, random_spd(n, 0.5, rng));
        let u = ScalarField::from_trig(t, random_band_limited(2 * n, 1, 2, 0.02, rng)).unwrap();
        let f = base.add(&ddbar(&u)).unwrap();
        if kahlerlab_core::forms::positivity_margin(&f.to_grid().unwrap(), &HermitianMatrix::identity(n)) > 0.0 {
            return f;
        }
    }
}

fn c4_popovici() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::INFINITY;
    let mut fails = 0;
    for i in 0..1000 {
        let n = 2 + i % 2;
        let t = make_torus(n, 8, None).unwrap();
        let [a, b, c] = [(); 3].map(|_| constant(&t, random_spd(n, 0.01, &mut rng)));
        let r = popovici_check(&a, &b, &c, 1e-12).unwrap();
        worst = worst.min(r.slack);
        fails += usize::from(!r.passed);
    }
    let t = make_torus(2, 8, None).unwrap();
    for _ in 0..200 {
        let [a, b, c] = [(); 3].map(|_| random_positive_field(&t, &mut rng));
        let r = popovici_check(&a, &b, &c, 1e-12).unwrap();
        worst = worst.min(r.slack);
        fails += usize::from(!r.passed);
    }
    let ts: Vec<f64> = (0..60).map(|k| 10f64.powf(-6.0 * k as f64 / 59.0)).collect();
    let (t_min, ratio) = popovici_sharpness_family(2, &ts).unwrap();
    outcome(
        fails == 0 && ratio <= 1.01,
        format!("{fails} failures, min slack {worst:.3e}; sharpness ratio {ratio:.5} at t = {t_min:.1e}"),
    )
}

fn c5_trace_inequality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for i in 0..100_000 {
        let n = 2 + i % 2;
        let chi = random_spd(n, 0.01, &mut rng);
        let at = random_spd(n, 0.01, &mut rng);
        let beta = random_spd(n, 0.01, &mut rng);
        let lhs = chi.trace_of(&beta).unwrap();
        let rhs = chi.trace_of(&at).unwrap() * at.trace_of(&beta).unwrap();
        let slack = (rhs - lhs) / rhs.max(1.0);
        worst = worst.min(slack);
        violations += usize::from(slack < -1e-12);
    }
    outcome(violations == 0, format!("{violations} violations, min relative slack {worst:.3e}"))
}

fn c6_volume_chain() -> Outcome {
    let t2 = make_torus(2, 8, None).unwrap();
    let (v, b) = volume_bound(
        &constant(&t2, HermitianMatrix::identity(2) * 2.0),
        &constant(&t2, HermitianMatrix::identity(2) * 0.5),
        1e-10,
    )
    .unwrap();
    let example_ok = (v.lhs - 18.0).abs() < 1e-12 && (v.rhs - 8.0).abs() < 1e-12 && b.rhs.abs() < 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut done = 0;
    let mut fails = 0;
    let mut worst = f64::INFINITY;
    while done < 500 {
        let n = 2 + done % 2;
        let t = make_torus(n, 8, None).unwrap();
        let alpha = random_spd(n, 0.1, &mut rng);
        let s = rng.gen_range(0.0..1.0) * alpha.min_eigenvalue();
        let beta = random_psd(n, rng.gen_range(1..=n), &mut rng) * s;
        let (first, second) = volume_bound(&constant(&t, alpha), &constant(&t, beta), 1e-10).unwrap();
        if first.details["hypothesis"] <= 0.0 {
            continue;
        }
        done += 1;
        let ok = first.status == CheckStatus::Evaluated && first.passed && second.passed;
        fails += usize::from(!ok);
        worst = worst.min(first.slack.min(second.slack));
    }
    outcome(
        example_ok && fails == 0,
        format!(
            "worked example Vol {:.3} ≥ {:.3} ≥ {:.3}; 500 pairs: {fails} failures, min slack {worst:.3e}",
            v.lhs, v.rhs, b.rhs
        ),
    )
}

fn c7_khovanskii_teissier() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tori = [make_torus(2, 8, None).unwrap(), make_torus(3, 8, None).unwrap()];
    let (mut fails, mut equality_mismatch) = (0, 0);
    for i in 0..10_000 {
        let t = &tori[i % 2];
        let n = t.n();
        let omega = random_spd(n, 0.1, &mut rng);
        let proportional = i % 10 == 0;
        let alpha = if proportional {
            omega * rng.gen_range(0.1..3.0)
        } else {
            // rank ≥ n−1: below that both sides vanish and equality is trivial
            random_psd(n, rng.gen_range(n - 1..=n), &mut rng) * rng.gen_range(0.1..3.0)
        };
        let r = kt_check(&constant(t, alpha), &constant(t, omega), 1e-10).unwrap();
        fails += usize::from(!r.passed);
        equality_mismatch += usize::from((r.details["equality"] == 1.0) != proportional);
    }
    outcome(
        fails == 0 && equality_mismatch == 0,
        format!("{fails} failures, {equality_mismatch} equality mismatches over 10⁴ pairs"),
    )
}

fn c8_morse() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut zero_err = 0.0f64;
    let mut fails = 0;
    let mut min_mask = 1.0f64;
    for (n, grid) in [(1usize, 128usize), (2, 32)] {
        let t = make_torus(n, grid, None).unwrap();
        let alpha = random_spd(n, 0.5, &mut rng);
        let r = morse_check(&alpha, &ScalarField::zero(&t).to_grid().unwrap()).unwrap();
        zero_err = zero_err.max((r.lhs - r.rhs).abs() / r.lhs);
        for _ in 0..100 {
            let alpha = random_spd(n, 0.5, &mut rng);
            let amp = rng.gen_range(0.05..0.5);
            let f = ScalarField::from_trig(&t, random_band_limited(2 * n, 2, 3, amp, &mut rng))
                .unwrap()
                .to_grid()
                .unwrap();
            let r = morse_check(&alpha, &f).unwrap();
            fails += usize::from(!r.passed);
            min_mask = min_mask.min(r.details["mask_fraction"]);
        }
    }
    outcome(
        zero_err < 1e-10 && fails == 0 && min_mask < 1.0,
        format!("f ≡ 0 rel err {zero_err:.2e}; 200 perturbations: {fails} failures, min mask fraction {min_mask:.3}"),
    )
}

fn monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

fn concentration_summary(r: &ConcentrationResult, points: usize) -> (f64, bool, bool) {
    let c_err = r
        .levels
        .iter()
        .map(|l| (l.c_eps_measured - l.c_eps_cohomological).abs() / l.c_eps_cohomological)
        .fold(0.0, f64::max);
    let c_gt_one = r.levels.iter().all(|l| l.c_eps_measured > 1.0);
    let mono = (0..points).all(|j| monotone(&r.slopes(j)));
    (c_err, c_gt_one, mono)
}

fn c9_concentration() -> Outcome {
    let (tau, delta) = ([0.5, 0.3], 0.25);
    let t = make_torus(1, 512, None).unwrap();
    let i1 = HermitianMatrix::identity(1);
    let (eps, widths) = ConcentrationSpec::geometric_schedule(&t, 1e-3, 0.1766, 6);
    let spec = ConcentrationSpec::new(
        &t,
        i1,
        i1,
        vec![vec![0.25, 0.25], vec![0.75, 0.75]],
        tau.to_vec(),
        delta,
        eps.clone(),
        widths,
        (0.02, 0.17),
    )
    .unwrap();
    let r1 = run_concentration(&spec).unwrap();
    let (c_err1, gt1, mono1) = concentration_summary(&r1, 2);
    // Green's function of a point mass m for i∂∂̄ in one variable is
    // (m/π) log r; the limiting mass at x_j is C τ_j with C the class ratio.
    // ∫ i dz∧dz̄ over the unit square is 2
    let e = *eps.last().unwrap();
    let c = 2.0 * (1.0 + e) / (tau[0] + tau[1] + 2.0 * delta);
    let slope_err = (0..2)
        .map(|j| {
            let want = c * tau[j] / PI;
            (r1.slopes(j).last().copied().unwrap_or(f64::NAN) - want).abs() / want
        })
        .fold(0.0, f64::max);
    let ok1 = r1.completed() && c_err1 < 1e-6 && gt1 && mono1 && slope_err < 0.1;

    let t2 = make_torus(2, 48, None).unwrap();
    let i2 = HermitianMatrix::identity(2);
    let (eps2, widths2) = ConcentrationSpec::geometric_schedule(&t2, 1e-3, 0.25, 3);
    let spec2 = ConcentrationSpec::new(
        &t2,
        i2,
        i2,
        vec![vec![0.25; 4], vec![0.75; 4]],
        vec![0.5, 0.4],
        0.3,
        eps2,
        widths2,
        (0.07, 0.25),
    )
    .unwrap();
    let r2 = run_concentration(&spec2).unwrap();
    let (c_err2, gt2, mono2) = concentration_summary(&r2, 2);
    let ok2 = r2.completed() && c_err2 < 1e-6 && gt2 && mono2;
    outcome(
        ok1 && ok2,
        format!(
            "n=1: C rel err {c_err1:.1e}, slopes {:?} (Green rel err {slope_err:.2e}); n=2: C rel err {c_err2:.1e}, slopes {:?}",
            r1.slopes(0).iter().map(|s| format!("{s:.4}")).collect::<Vec<_>>(),
            r2.slopes(0).iter().map(|s| format!("{s:.4}")).collect::<Vec<_>>(),
        ),
    )
}

fn c10_current_constant() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let tori = [1, 2, 3].map(|n| make_torus(n, 8, None).unwrap());
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for i in 0..10_000 {
        let t = &tori[i % 3];
        let n = t.n();
        let alpha = random_spd(n, 0.01, &mut rng);
        let beta = random_spd(n, 0.01, &mut rng);
        let c = kahler_current_constant(&constant(t, alpha), &constant(t, beta)).unwrap();
        let m = kahler_current_margin(&alpha, &beta, c).unwrap();
        worst = worst.min(m / c);
        violations += usize::from(m < -1e-12 * c);
    }
    outcome(violations == 0, format!("{violations} violations, min relative margin {worst:.3e}"))
}

fn c11_probe() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut done, mut disagree, mut bad_witness, mut refuted) = (0, 0, 0, 0);
    while done < 500 {
        let n = 1 + done % 3;
        let omega = random_spd(n, 0.2, &mut rng);
        let alpha = random_hermitian(n, &mut rng) + HermitianMatrix::identity(n) * rng.gen_range(0.0..2.0);
        let eps = rng.gen_range(0.0..1.0);
        let verdict = constant_current_test(&alpha, eps, &omega).unwrap();
        if verdict.margin.abs() <= 1e-6 {
            continue;
        }
        done += 1;
        let budget = ProbeBudget {
            seed: done as u64,
            ..ProbeBudget::default()
        };
        let p = gauduchon_cone_probe(&alpha, eps, &omega, &budget).unwrap();
        disagree += usize::from(p.refuted == verdict.exists);
        if p.refuted {
            refuted += 1;
            bad_witness += usize::from(!(probe_value(&alpha, eps, &omega, &p.witness) < 0.0));
        }
    }
    outcome(
        disagree == 0 && bad_witness == 0,
        format!("500 instances ({refuted} refuted): {disagree} disagreements, {bad_witness} invalid witnesses"),
    )
}

fn c12_chiose() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let t = make_torus(3, 8, None).unwrap();
    let mut worst = 0.0f64;
    let mut fails = 0;
    for _ in 0..20 {
        let alpha = random_spd(3, 0.2, &mut rng);
        let omega = random_spd(3, 0.2, &mut rng);
        let u = ScalarField::from_trig(&t, random_band_limited(6, 2, 3, 0.3, &mut rng)).unwrap();
        let r = chiose_n3_identity(&alpha, &omega, &u, rng.gen_range(0.0..1.0), 1e-10).unwrap();
        worst = worst.max(-r.slack);
        fails += usize::from(!r.passed);
    }
    let mut sweep_fails = 0;
    for n in 1..=6usize {
        for i in 0..10_000 {
            let x = i as f64 / 10_000.0 / n as f64;
            sweep_fails += usize::from(!elementary_poly_check(n, x).unwrap());
        }
    }
    outcome(
        fails == 0 && sweep_fails == 0,
        format!("identity max rel err {worst:.2e} ({fails} failures); elementary sweep {sweep_fails} failures"),
    )
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 12] = [
        ("MA solver, n=1 closed form", 1, c1_solver_n1),
        ("MA solver, n=2 convergence", 60, c2_solver_n2),
        ("mass and class invariance", 10, c3_mass_invariance),
        ("Popovici inequality and sharpness", 30, c4_popovici),
        ("pointwise trace inequality", 5, c5_trace_inequality),
        ("volume lower-bound chain", 5, c6_volume_chain),
        ("Khovanskii–Teissier", 5, c7_khovanskii_teissier),
        ("holomorphic Morse check", 60, c8_morse),
        ("concentration of mass", 300, c9_concentration),
        ("Kähler-current constant on the torus", 5, c10_current_constant),
        ("duality probe consistency", 60, c11_probe),
        ("n=3 identity and elementary inequality", 30, c12_chiose),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(*budget);
        let pass = out.ok && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {}: {name} — {} [{:.2}s / {budget}s{}]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over budget" },
        );
    }
    println!("acceptance: {} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
