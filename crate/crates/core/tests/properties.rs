use std::sync::Arc;

use approx::assert_relative_eq;
use kahlerlab_core::forms::{constant_wedge, positivity_margin};
use kahlerlab_core::inequalities::{kt_check, popovici_check};
use kahlerlab_core::ma_solver::{solve_ma, verify_mass, MAProblem};
use kahlerlab_core::positivity::{
    constant_current_test, gauduchon_cone_probe, kahler_current_constant, kahler_current_margin, probe_value,
    seshadri_infimum, ProbeBudget, SubvarietyRecord,
};
use kahlerlab_core::sampling::{random_band_limited, random_hermitian, random_psd, random_spd};
use kahlerlab_core::{
    ddbar, make_torus, mixed_discriminant, poisson_solve, quadrature, HermitianFormField, HermitianMatrix,
    ScalarField, Torus,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn constant(t: &Arc<Torus>, m: HermitianMatrix) -> HermitianFormField {
    HermitianFormField::constant(t, m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixed_discriminant_is_symmetric_and_multilinear(seed in any::<u64>(), n in 1usize..=3, s in -3.0f64..3.0) {
        let mut r = rng(seed);
        let mats: Vec<HermitianMatrix> = (0..n).map(|_| random_hermitian(n, &mut r)).collect();
        let extra = random_hermitian(n, &mut r);
        let md = mixed_discriminant(&mats).unwrap();
        let mut rev = mats.clone();
        rev.reverse();
        assert_relative_eq!(md, mixed_discriminant(&rev).unwrap(), epsilon = 1e-12);
        let mut lin = mats.clone();
        lin[0] = mats[0] * s + extra;
        let mut other = mats.clone();
        other[0] = extra;
        let want = s * md + mixed_discriminant(&other).unwrap();
        assert_relative_eq!(mixed_discriminant(&lin).unwrap(), want, epsilon = 1e-11);
        let diag = vec![mats[0]; n];
        assert_relative_eq!(mixed_discriminant(&diag).unwrap(), mats[0].det(), epsilon = 1e-12);
    }

    #[test]
    fn mixed_discriminant_is_monotone_on_psd_arguments(seed in any::<u64>(), n in 1usize..=3) {
        let mut r = rng(seed);
        let mut mats: Vec<HermitianMatrix> = (0..n).map(|_| random_psd(n, n, &mut r)).collect();
        let base = mixed_discriminant(&mats).unwrap();
        prop_assert!(base >= -1e-15);
        mats[0] = mats[0] + random_psd(n, 1, &mut r);
        prop_assert!(mixed_discriminant(&mats).unwrap() >= base - 1e-14);
    }

    #[test]
    fn trace_inequality_holds(seed in any::<u64>(), n in 1usize..=3) {
        let mut r = rng(seed);
        let chi = random_spd(n, 0.01, &mut r);
        let at = random_spd(n, 0.01, &mut r);
        let beta = random_spd(n, 0.01, &mut r);
        let lhs = chi.trace_of(&beta).unwrap();
        let rhs = chi.trace_of(&at).unwrap() * at.trace_of(&beta).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }

    #[test]
    fn popovici_and_kt_hold_for_constant_classes(seed in any::<u64>(), n in 1usize..=3) {
        let t = make_torus(n, 8, None).unwrap();
        let mut r = rng(seed);
        let [a, b, c] = [(); 3].map(|_| constant(&t, random_spd(n, 0.01, &mut r)));
        prop_assert!(popovici_check(&a, &b, &c, 1e-12).unwrap().passed);
        prop_assert!(kt_check(&a, &b, 1e-12).unwrap().passed);
    }

    #[test]
    fn wedge_scales_homogeneously(seed in any::<u64>(), n in 1usize..=3, s in 0.1f64..5.0) {
        let mut r = rng(seed);
        let mats: Vec<HermitianMatrix> = (0..n).map(|_| random_spd(n, 0.1, &mut r)).collect();
        let w = constant_wedge(1.0, &mats).unwrap();
        let scaled: Vec<HermitianMatrix> = mats.iter().map(|m| *m * s).collect();
        assert_relative_eq!(constant_wedge(1.0, &scaled).unwrap(), s.powi(n as i32) * w, max_relative = 1e-12);
    }

    #[test]
    fn kahler_current_constant_leaves_nonnegative_margin(seed in any::<u64>(), n in 1usize..=3) {
        let t = make_torus(n, 8, None).unwrap();
        let mut r = rng(seed);
        let alpha = random_spd(n, 0.01, &mut r);
        let beta = random_spd(n, 0.01, &mut r);
        let c = kahler_current_constant(&constant(&t, alpha), &constant(&t, beta)).unwrap();
        prop_assert!(c > 0.0);
        prop_assert!(kahler_current_margin(&alpha, &beta, c).unwrap() >= -1e-12 * c);
    }

    #[test]
    fn probe_agrees_with_the_eigenvalue_test(seed in any::<u64>(), n in 1usize..=3, eps in 0.0f64..1.0) {
        let mut r = rng(seed);
        let omega = random_spd(n, 0.2, &mut r);
        let alpha = random_hermitian(n, &mut r) + HermitianMatrix::identity(n);
        let verdict = constant_current_test(&alpha, eps, &omega).unwrap();
        prop_assume!(verdict.margin.abs() > 1e-3);
        let budget = ProbeBudget { seed, ..ProbeBudget::default() };
        let p = gauduchon_cone_probe(&alpha, eps, &omega, &budget).unwrap();
        prop_assert_eq!(p.refuted, !verdict.exists);
        let w = p.witness;
        prop_assert!(w.min_eigenvalue() >= -1e-12);
        prop_assert!((w.trace() - 1.0).abs() < 1e-12);
        assert_relative_eq!(probe_value(&alpha, eps, &omega, &w), p.min_value, epsilon = 1e-12);
    }

    #[test]
    fn seshadri_infimum_is_monotone_and_homogeneous(
        degrees in proptest::collection::vec((1usize..=3, 0.01f64..10.0, 1u32..4), 1..6),
        extra in (1usize..=3, 0.01f64..10.0, 1u32..4),
        s in 0.1f64..10.0,
    ) {
        let records: Vec<SubvarietyRecord> = degrees
            .iter()
            .enumerate()
            .map(|(i, &(d, deg, m))| SubvarietyRecord::new(&format!("V{i}"), d, deg, m).unwrap())
            .collect();
        let base = seshadri_infimum(&records).unwrap().value;
        let mut more = records.clone();
        more.push(SubvarietyRecord::new("W", extra.0, extra.1, extra.2).unwrap());
        prop_assert!(seshadri_infimum(&more).unwrap().value <= base);
        // scaling the class by s multiplies ∫_V α^d by s^d
        let scaled: Vec<SubvarietyRecord> = records
            .iter()
            .map(|r| SubvarietyRecord { degree: r.degree * s.powi(r.dim as i32), ..r.clone() })
            .collect();
        assert_relative_eq!(seshadri_infimum(&scaled).unwrap().value, s * base, max_relative = 1e-12);
    }

    #[test]
    fn ddbar_is_linear_hermitian_and_mean_free(seed in any::<u64>(), s in -2.0f64..2.0) {
        let t = make_torus(2, 8, None).unwrap();
        let mut r = rng(seed);
        let u = ScalarField::from_trig(&t, random_band_limited(4, 2, 3, 1.0, &mut r)).unwrap().to_grid().unwrap();
        let v = ScalarField::from_trig(&t, random_band_limited(4, 2, 3, 1.0, &mut r)).unwrap().to_grid().unwrap();
        let lhs = ddbar(&u.scale(s).add(&v).unwrap().add_constant(3.0));
        let rhs = ddbar(&u).scale(s).add(&ddbar(&v)).unwrap();
        let mut mean = HermitianMatrix::zeros(2);
        for p in 0..t.point_count() {
            let (a, b) = (lhs.at(p), rhs.at(p));
            prop_assert!((a - b).frobenius_norm() < 1e-10);
            prop_assert!(a.hermitian_defect() < 1e-14);
            mean = mean + a;
        }
        prop_assert!((mean * (1.0 / t.point_count() as f64)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn poisson_solve_inverts_the_laplacian(seed in any::<u64>()) {
        let t = make_torus(2, 8, None).unwrap();
        let mut r = rng(seed);
        let omega = random_spd(2, 0.3, &mut r);
        let g = ScalarField::from_trig(&t, random_band_limited(4, 2, 3, 1.0, &mut r)).unwrap().to_grid().unwrap();
        let u = poisson_solve(&g, &omega).unwrap();
        let h = ddbar(&u);
        for (p, want) in g.grid_values().unwrap().iter().enumerate() {
            prop_assert!((omega.trace_of(&h.at(p)).unwrap() - want).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn solver_preserves_mass_and_positivity(seed in any::<u64>()) {
        let t = make_torus(2, 16, None).unwrap();
        let mut r = rng(seed);
        let omega = random_spd(2, 0.5, &mut r);
        let f = ScalarField::from_trig(&t, random_band_limited(4, 2, 4, 0.3, &mut r)).unwrap();
        let class = constant(&t, omega);
        let problem = MAProblem::new(&class, f, true).unwrap();
        let sol = solve_ma(&problem).unwrap();
        prop_assert!(verify_mass(&sol, &problem).unwrap() < 1e-10);
        prop_assert!(sol.positivity_margin > 0.0);
        prop_assert!(positivity_margin(&class.plus_ddbar(&sol.phi).unwrap(), &omega) > 0.0);
        prop_assert!(sol.phi.mean().abs() < 1e-12);
        let m = quadrature(&sol.phi_sup_zero());
        prop_assert!(m <= 1e-12);
    }
}

#[test]
fn probe_refutes_with_a_witness_off_the_negative_direction() {
    for n in 2..=3 {
        let mut d = vec![1.0; n];
        d[0] = -1.0;
        let alpha = HermitianMatrix::diag(&d);
        let p = gauduchon_cone_probe(&alpha, 0.0, &HermitianMatrix::identity(n), &ProbeBudget::default()).unwrap();
        assert!(p.refuted, "n = {n}");
        // the negative eigendirection pairs with χ^{n−1} on its complement
        assert!(p.witness.get(0, 0).re < 1e-6, "n = {n}: {:?}", p.witness);
        assert!(p.min_value < 0.0);
    }
}
