//! Seeded random instances: Gaussian matrices, Haar unitaries, contractions,
//! and points of the unit disc.

use crate::matrix_core::{c64, CMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-distributed unitary: QR of a Gaussian matrix with the phases of R's diagonal removed.
pub fn random_unitary(n: usize, rng: &mut impl Rng) -> CMatrix {
    let qr = random_matrix(n, n, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            c64(1.0, 0.0)
        };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

/// W₁ diag(s) W₂ with Haar W₁, W₂ and s_i = r_max·√u_i, i.e. singular values
/// distributed like the modulus of a uniform point in the disc of radius r_max.
pub fn random_contraction(l: usize, r_max: f64, rng: &mut impl Rng) -> CMatrix {
    let w1 = random_unitary(l, rng);
    let w2 = random_unitary(l, rng);
    let s = nalgebra::DVector::from_fn(l, |_, _| c64(r_max * rng.random::<f64>().sqrt(), 0.0));
    w1 * CMatrix::from_diagonal(&s) * w2
}

/// Uniform point of the annulus r_min ≤ |z| ≤ r_max.
pub fn random_point_in_disc(r_min: f64, r_max: f64, rng: &mut impl Rng) -> Complex64 {
    let u: f64 = rng.random();
    let r = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
    let t: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    Complex64::from_polar(r, t)
}

pub fn random_phase(rng: &mut impl Rng) -> f64 {
    rng.random::<f64>() * std::f64::consts::TAU
}
