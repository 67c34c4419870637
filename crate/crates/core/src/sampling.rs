//! Seeded random instances: Hermitian matrices and band-limited fields.

use num_complex::Complex64;
use rand::Rng;

use crate::geometry::TrigPoly;
use crate::matrix::HermitianMatrix;

fn gaussian_ish<R: Rng>(rng: &mut R) -> f64 {
    rng.gen_range(-1.0..1.0)
}

/// `G G* / tr + floor·I` for a random complex `G`; positive definite with
/// smallest eigenvalue at least `floor`.
pub fn random_spd<R: Rng>(n: usize, floor: f64, rng: &mut R) -> HermitianMatrix {
    random_psd(n, n, rng) + HermitianMatrix::identity(n) * floor
}

/// Random positive semidefinite matrix of rank at most `rank`, trace 1.
pub fn random_psd<R: Rng>(n: usize, rank: usize, rng: &mut R) -> HermitianMatrix {
    let mut m = HermitianMatrix::zeros(n);
    for _ in 0..rank.max(1) {
        let v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(gaussian_ish(rng), gaussian_ish(rng)))
            .collect();
        m = m + HermitianMatrix::outer(&v);
    }
    let t = m.trace();
    if t > 0.0 {
        m * (1.0 / t)
    } else {
        HermitianMatrix::identity(n) * (1.0 / n as f64)
    }
}

/// Random Hermitian matrix with entries in the unit box.
pub fn random_hermitian<R: Rng>(n: usize, rng: &mut R) -> HermitianMatrix {
    HermitianMatrix::from_upper(n, |j, k| {
        if j == k {
            Complex64::new(gaussian_ish(rng), 0.0)
        } else {
            Complex64::new(gaussian_ish(rng), gaussian_ish(rng))
        }
    })
}

/// Real trigonometric polynomial on `dims` lattice coordinates with modes in
/// `[-max_mode, max_mode]^dims` (zero mode excluded) and `Σ|c_m| = amplitude`,
/// so its sup-norm is at most `amplitude`.
pub fn random_band_limited<R: Rng>(dims: usize, max_mode: i32, terms: usize, amplitude: f64, rng: &mut R) -> TrigPoly {
    let mut p = TrigPoly::zero(dims);
    let mut weights = Vec::with_capacity(terms);
    let mut modes = Vec::with_capacity(terms);
    while modes.len() < terms {
        let m: Vec<i32> = (0..dims).map(|_| rng.gen_range(-max_mode..=max_mode)).collect();
        if m.iter().all(|&x| x == 0) {
            continue;
        }
        modes.push(m);
        weights.push(rng.gen_range(0.1..1.0));
    }
    let total: f64 = weights.iter().sum();
    for (m, w) in modes.iter().zip(&weights) {
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        p = p.add(&TrigPoly::phase_mode(dims, m, amplitude * w / total, phase));
    }
    p
}
