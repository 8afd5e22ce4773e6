//! Transfer matrices 𝒯ᶻ_n, solution frames Φ_n^z, the forms 𝒫ᶻ and 𝒬ᶻ_N,
//! and the inhomogeneous solve of (𝕌_N − z)φ = ξ.

use crate::error::{Error, Result};
use crate::matrix_core::{
    c64, frobenius, from_blocks, identity, inverse, l_form, min_singular, op_norm, quarters, solve, vstack,
    zeros, CMatrix, DEFAULT_TOL,
};
use crate::scattering::{phi, ScatteringBlock};
use crate::zipper::{BlockSource, Flavor, Zipper};
use num_complex::Complex64;
use rayon::prelude::*;

/// Largest N for which raw (unrenormalized) products are formed for cross-checks.
pub const RAW_PRODUCT_CAP: usize = 64;
/// Chains at least this long generate their blocks in parallel.
const PARALLEL_CHAIN_MIN: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub matrix: CMatrix,
    pub n: usize,
    pub z: Complex64,
}

fn check_z(z: Complex64) -> Result<()> {
    if z.norm() == 0.0 {
        return Err(Error::ZeroZ);
    }
    Ok(())
}

/// [[z⁻¹A, B], [C, zD]] from φ(S) = [[A, B], [C, D]].
fn scale_even(phi_s: &CMatrix, z: Complex64) -> CMatrix {
    let l = phi_s.nrows() / 2;
    let mut t = phi_s.clone();
    {
        let mut a = t.view_mut((0, 0), (l, l));
        a /= z;
    }
    {
        let mut d = t.view_mut((l, l), (l, l));
        d *= z;
    }
    t
}

/// 𝒯ᶻ_n = φ(z⁻¹S) for even n and φ(S) for odd n.
pub fn transfer_at(block: &ScatteringBlock, n: usize, z: Complex64) -> Result<TransferMatrix> {
    check_z(z)?;
    let p = phi(block)?;
    let matrix = if n % 2 == 0 { scale_even(&p, z) } else { p };
    Ok(TransferMatrix { matrix, n, z })
}

/// (𝒯ᶻ)^{-1} = 𝓛 (𝒯^{z̄⁻¹})* 𝓛.
fn lorentz_inverse(phi_s: &CMatrix, n: usize, z: Complex64) -> CMatrix {
    let l = l_form(phi_s.nrows() / 2);
    let t = if n % 2 == 0 {
        scale_even(phi_s, 1.0 / z.conj())
    } else {
        phi_s.clone()
    };
    &l * t.adjoint() * &l
}

pub fn transfer_inverse_at(
    block: &ScatteringBlock,
    n: usize,
    z: Complex64,
) -> Result<TransferMatrix> {
    check_z(z)?;
    let p = phi(block)?;
    Ok(TransferMatrix {
        matrix: lorentz_inverse(&p, n, z),
        n,
        z,
    })
}

/// The maps φ(S_1), …, φ(S_N) of a block source, cached so that 𝒯ᶻ_n costs
/// only a rescaling for each new z.
#[derive(Debug, Clone)]
pub struct TransferChain {
    l: usize,
    phis: Vec<CMatrix>,
    deltas: Vec<CMatrix>,
    betas: Vec<CMatrix>,
}

impl TransferChain {
    pub fn new(source: &(impl BlockSource + ?Sized), n: usize) -> Result<TransferChain> {
        let site = |k: usize| -> Result<(CMatrix, CMatrix, CMatrix)> {
            let s = source.site_block(k)?;
            Ok((phi(&s)?, s.delta().clone(), s.beta().clone()))
        };
        let entries: Vec<_> = if n >= PARALLEL_CHAIN_MIN {
            (1..=n).into_par_iter().map(site).collect::<Result<_>>()?
        } else {
            (1..=n).map(site).collect::<Result<_>>()?
        };
        let mut chain = TransferChain {
            l: source.l(),
            phis: Vec::with_capacity(n),
            deltas: Vec::with_capacity(n),
            betas: Vec::with_capacity(n),
        };
        for (p, d, b) in entries {
            chain.phis.push(p);
            chain.deltas.push(d);
            chain.betas.push(b);
        }
        Ok(chain)
    }

    pub fn from_zipper(z: &Zipper) -> Result<TransferChain> {
        TransferChain::new(z, z.n())
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn len(&self) -> usize {
        self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phis.is_empty()
    }

    /// φ(S_n).
    pub fn phi(&self, n: usize) -> &CMatrix {
        &self.phis[n - 1]
    }

    fn site(&self, n: usize) -> Result<&CMatrix> {
        if n == 0 || n > self.phis.len() {
            return Err(Error::MissingBlock(n));
        }
        Ok(&self.phis[n - 1])
    }

    pub fn at(&self, n: usize, z: Complex64) -> Result<CMatrix> {
        check_z(z)?;
        let p = self.site(n)?;
        Ok(if n % 2 == 0 {
            scale_even(p, z)
        } else {
            p.clone()
        })
    }

    pub fn inverse_at(&self, n: usize, z: Complex64) -> Result<CMatrix> {
        check_z(z)?;
        Ok(lorentz_inverse(self.site(n)?, n, z))
    }

    /// 𝒯ᶻ(n, k) = 𝒯ᶻ_n ⋯ 𝒯ᶻ_{k+1}.
    pub fn product(&self, n: usize, k: usize, z: Complex64) -> Result<CMatrix> {
        check_z(z)?;
        let mut t = identity(2 * self.l);
        for site in k + 1..=n {
            t = self.at(site, z)? * t;
        }
        Ok(t)
    }

    /// 𝒫ᶻ of the even step n.
    pub fn p_at(&self, n: usize, z: Complex64) -> Result<CMatrix> {
        check_z(z)?;
        Ok(p_from_phi(self.site(n)?, z))
    }
}

/// A 2L×L frame spanning the plane of Φ_n^z. The raw frame 𝒯ᶻ(n,0)Φ₀ equals
/// `matrix · G` where G⁻¹ = e^{log_scale} · `normalizer_inv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFrame {
    pub matrix: CMatrix,
    pub n: usize,
    pub z: Complex64,
    pub normalizer_inv: CMatrix,
    pub log_scale: f64,
}

impl SolutionFrame {
    pub fn top(&self) -> CMatrix {
        let l = self.matrix.ncols();
        self.matrix.rows(0, l).into_owned()
    }

    pub fn bottom(&self) -> CMatrix {
        let l = self.matrix.ncols();
        self.matrix.rows(l, l).into_owned()
    }

    /// The unrenormalized frame; only meaningful while G stays representable.
    pub fn raw(&self) -> Result<CMatrix> {
        let ginv = &self.normalizer_inv * c64(self.log_scale.exp(), 0.0);
        Ok(&self.matrix * inverse(&ginv, 0.0)?)
    }
}

/// Φ₀ = (1; 1).
pub fn initial_frame(l: usize) -> CMatrix {
    vstack(&identity(l), &identity(l))
}

/// Φ_n^z = 𝒯ᶻ_n ⋯ 𝒯ᶻ_1 Φ₀, column-orthonormalized after every step when `renormalize` is set.
pub fn propagate(
    chain: &TransferChain,
    z: Complex64,
    upto: usize,
    renormalize: bool,
) -> Result<SolutionFrame> {
    propagate_from(chain, z, initial_frame(chain.l), 0, upto, renormalize)
}

/// Propagates an arbitrary 2L×m start frame from site `from` to site `upto`.
pub fn propagate_from(
    chain: &TransferChain,
    z: Complex64,
    start: CMatrix,
    from: usize,
    upto: usize,
    renormalize: bool,
) -> Result<SolutionFrame> {
    check_z(z)?;
    let m = start.ncols();
    let mut frame = SolutionFrame {
        matrix: start,
        n: from,
        z,
        normalizer_inv: identity(m),
        log_scale: 0.0,
    };
    for site in from + 1..=upto {
        frame.matrix = chain.at(site, z)? * &frame.matrix;
        frame.n = site;
        if renormalize {
            renormalize_frame(&mut frame)?;
        }
    }
    Ok(frame)
}

fn renormalize_frame(frame: &mut SolutionFrame) -> Result<()> {
    let qr = frame.matrix.clone().qr();
    let r = qr.r();
    let scale = (0..r.ncols()).map(|j| r[(j, j)].norm()).fold(0.0, f64::max);
    let smallest = (0..r.ncols())
        .map(|j| r[(j, j)].norm())
        .fold(f64::INFINITY, f64::min);
    if !(smallest > 1e-14 * scale) || !scale.is_finite() {
        return Err(Error::DegenerateFrame(frame.n));
    }
    let rinv = inverse(&r, 0.0).map_err(|_| Error::DegenerateFrame(frame.n))?;
    let mut ginv = &frame.normalizer_inv * rinv;
    let s = frobenius(&ginv);
    if s > 0.0 && s.is_finite() {
        ginv /= c64(s, 0.0);
        frame.log_scale += s.ln();
    }
    frame.normalizer_inv = ginv;
    frame.matrix = qr.q();
    Ok(())
}

/// Orthonormal basis of the column span of a full-rank frame.
pub fn orthonormal_basis(frame: &CMatrix) -> CMatrix {
    frame.clone().qr().q()
}

/// Largest principal angle between the column spans of two frames of equal rank.
///
/// Computed from sines, ‖(1 − Q_a Q_a*) Q_b‖, which stay accurate for tiny angles
/// where acos of a cosine near 1 bottoms out at √ε.
pub fn max_principal_angle(a: &CMatrix, b: &CMatrix) -> f64 {
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let residual = &qb - &qa * (qa.adjoint() * &qb);
    op_norm(&residual).min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub matrix: CMatrix,
    pub z: Complex64,
    pub n: usize,
}

fn p_from_phi(phi_s: &CMatrix, z: Complex64) -> CMatrix {
    let [a, b, _, _] = quarters(phi_s);
    let l = a.nrows();
    let r2 = z.norm_sqr();
    let zinv = 1.0 / z;
    let zbinv = 1.0 / z.conj();
    let p11 = a.adjoint() * &a * c64(1.0 / r2 - 1.0, 0.0);
    let p12 = a.adjoint() * &b * (zbinv - z);
    let p21 = b.adjoint() * &a * (zinv - z.conj());
    let p22 = (b.adjoint() * &b + identity(l)) * c64(1.0 - r2, 0.0);
    from_blocks(&p11, &p12, &p21, &p22)
}

/// 𝒫ᶻ with (𝒯ᶻ)*𝓛𝒯ᶻ = 𝓛 + 𝒫ᶻ for an even step.
pub fn p_matrix(block: &ScatteringBlock, z: Complex64) -> Result<QuadraticForm> {
    check_z(z)?;
    Ok(QuadraticForm {
        matrix: p_from_phi(&phi(block)?, z),
        z,
        n: 2,
    })
}

/// 𝒬ᶻ_n = 𝓛 + Σ_k 𝒯ᶻ(2k−1,0)* 𝒫ᶻ_{2k} 𝒯ᶻ(2k−1,0), a sum of definite terms for |z| ≠ 1.
pub fn q_form(chain: &TransferChain, z: Complex64, n: usize) -> Result<QuadraticForm> {
    check_z(z)?;
    let l = chain.l;
    let mut q = l_form(l);
    let mut t = identity(2 * l);
    for site in 1..=n {
        if site % 2 == 0 {
            let p = chain.p_at(site, z)?;
            q += t.adjoint() * p * &t;
        }
        t = chain.at(site, z)? * t;
    }
    Ok(QuadraticForm {
        matrix: hermitize(q),
        z,
        n,
    })
}

/// 𝒬ᶻ_n = 𝒯ᶻ(n,0)* 𝓛 𝒯ᶻ(n,0) from the raw product.
pub fn q_form_direct(chain: &TransferChain, z: Complex64, n: usize) -> Result<QuadraticForm> {
    if n > RAW_PRODUCT_CAP {
        return Err(Error::CapExceeded {
            size: n,
            cap: RAW_PRODUCT_CAP,
        });
    }
    let t = chain.product(n, 0, z)?;
    Ok(QuadraticForm {
        matrix: hermitize(t.adjoint() * l_form(chain.l) * t),
        z,
        n,
    })
}

fn hermitize(m: CMatrix) -> CMatrix {
    (&m + m.adjoint()) * c64(0.5, 0.0)
}

/// Solves (𝕌_N − z)φ = ξ for a finite zipper, returning the L×m blocks φ_1, …, φ_N.
pub fn solve_inhomogeneous(zipper: &Zipper, z: Complex64, xi: &[CMatrix]) -> Result<Vec<CMatrix>> {
    check_z(z)?;
    if zipper.flavor() != Flavor::Finite {
        return Err(Error::WrongFlavor {
            expected: "finite",
            found: zipper.flavor().name(),
        });
    }
    let n_sites = zipper.n();
    if xi.len() != n_sites {
        return Err(Error::DimensionMismatch {
            expected: n_sites,
            found: xi.len(),
        });
    }
    let l = zipper.l();
    let m = xi[0].ncols();
    let chain = TransferChain::from_zipper(zipper)?;
    let zinv = 1.0 / z;
    // Homogeneous frame Y_n and particular part h_n; the site-n pair is Y_n φ₁ + h_n.
    let mut y = initial_frame(l);
    let mut h = zeros(2 * l, m);
    let mut ys = Vec::with_capacity(n_sites);
    let mut hs = Vec::with_capacity(n_sites);
    for site in 1..=n_sites {
        let t = chain.at(site, z)?;
        y = &t * y;
        h = &t * h;
        if site % 2 == 0 {
            let binv = inverse(&chain.betas[site - 1], DEFAULT_TOL)?;
            let delta = &chain.deltas[site - 1];
            // 𝒯ᶻ_n (0; z⁻¹ξ_{n−1}) − (z⁻¹ξ_n; 0)
            let source_top = (delta * &binv * &xi[site - 2] - &xi[site - 1]) * zinv;
            let source_bot = &binv * &xi[site - 2];
            h += vstack(&source_top, &source_bot);
        }
        ys.push(y.clone());
        hs.push(h.clone());
    }
    let v = zipper.boundary_v().expect("finite zipper has V");
    let (y_top, y_bot) = (y.rows(0, l).into_owned(), y.rows(l, l).into_owned());
    let (h_top, h_bot) = (h.rows(0, l).into_owned(), h.rows(l, l).into_owned());
    let pivot = y_bot - v * y_top;
    let s = min_singular(&pivot);
    if s <= DEFAULT_TOL * (1.0 + frobenius(&pivot)) {
        return Err(Error::ImpossibleByTheory(format!(
            "boundary pivot singular (s_min = {s:e})"
        )));
    }
    let phi1 = solve(&pivot, &(v * h_top - h_bot))?;
    Ok((1..=n_sites)
        .map(|site| {
            let pair = &ys[site - 1] * &phi1 + &hs[site - 1];
            // Φ_n = (φ; ψ) for even n and (ψ; φ) for odd n.
            let offset = if site % 2 == 0 { 0 } else { l };
            pair.rows(offset, l).into_owned()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_core::{hermitian_eigen, l_form, op_norm};
    use crate::random::{random_matrix, random_point_in_disc, rng_from_seed};
    use crate::scattering::{build_block, random_block};
    use crate::zipper::{assemble_finite, Ensemble};
    use proptest::prelude::*;

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        frobenius(&(a - b)) <= tol * (1.0 + frobenius(b))
    }

    #[test]
    fn odd_steps_do_not_depend_on_z() {
        let b = random_block(2, &mut rng_from_seed(1));
        let t1 = transfer_at(&b, 3, c64(0.3, 0.1)).unwrap();
        let t2 = transfer_at(&b, 3, c64(-0.7, 0.5)).unwrap();
        assert_eq!(t1.matrix, t2.matrix);
        assert_eq!(t1.matrix, phi(&b).unwrap());
        assert_eq!(
            transfer_at(&b, 2, c64(1.0, 0.0)).unwrap().matrix,
            phi(&b).unwrap()
        );
        assert!(matches!(
            transfer_at(&b, 2, c64(0.0, 0.0)),
            Err(Error::ZeroZ)
        ));
    }

    #[test]
    fn even_step_is_phi_of_scaled_block() {
        // φ(z⁻¹S) from the defining formula applied to the scaled blocks.
        let b = random_block(2, &mut rng_from_seed(2));
        let z = c64(0.4, -0.3);
        let (al, be, ga, de) = (b.alpha() / z, b.beta() / z, b.gamma() / z, b.delta() / z);
        let bi = be.clone().try_inverse().unwrap();
        let direct = from_blocks(&(&ga - &de * &bi * &al), &(&de * &bi), &(-(&bi * &al)), &bi);
        assert!(close(
            &transfer_at(&b, 4, z).unwrap().matrix,
            &direct,
            1e-12
        ));
    }

    #[test]
    fn unit_circle_steps_conserve_l() {
        let mut rng = rng_from_seed(3);
        for _ in 0..20 {
            let b = random_block(2, &mut rng);
            let z = Complex64::from_polar(1.0, 1.3);
            let t = transfer_at(&b, 2, z).unwrap().matrix;
            let l = l_form(2);
            assert!(close(&(t.adjoint() * &l * &t), &l, 1e-10));
            let inv = transfer_inverse_at(&b, 2, z).unwrap().matrix;
            assert!(close(&inv, &(&l * t.adjoint() * &l), 1e-12));
        }
    }

    #[test]
    fn first_frame_is_u_over_one() {
        let z = Ensemble::HaarGauge.zipper(2, 4, Flavor::Finite, 5).unwrap();
        let chain = TransferChain::from_zipper(&z).unwrap();
        let f = propagate(&chain, c64(0.2, 0.5), 1, false).unwrap();
        assert!(close(
            &f.matrix,
            &vstack(z.boundary_u().unwrap(), &identity(2)),
            1e-14
        ));
    }

    #[test]
    fn p_matrix_vanishes_on_circle_and_matches_free_case() {
        let b = random_block(1, &mut rng_from_seed(4));
        assert!(
            frobenius(
                &p_matrix(&b, Complex64::from_polar(1.0, 0.3))
                    .unwrap()
                    .matrix
            ) < 1e-12
        );
        // α = 0, unit gauges: φ(S) = 1, A = 1, B = 0 → 𝒫 = diag(|z|⁻² − 1, 1 − |z|²).
        let id = identity(1);
        let free = build_block(&zeros(1, 1), &id, &id, 0.0).unwrap();
        let p = p_matrix(&free, c64(0.5, 0.0)).unwrap().matrix;
        assert!((p[(0, 0)] - c64(3.0, 0.0)).norm() < 1e-14);
        assert!((p[(1, 1)] - c64(0.75, 0.0)).norm() < 1e-14);
        assert!(p[(0, 1)].norm() < 1e-14);
        let t = transfer_at(&free, 2, c64(0.5, 0.0)).unwrap().matrix;
        assert!(close(
            &(t.adjoint() * l_form(1) * &t - l_form(1)),
            &p,
            1e-14
        ));
    }

    #[test]
    fn p_matrix_lower_bound_at_fixed_point() {
        let mut rng = rng_from_seed(6);
        let z = c64(0.3, 0.4);
        for _ in 0..20 {
            let p = p_matrix(&random_block(2, &mut rng), z).unwrap().matrix;
            assert!(hermitian_eigen(&p).values[0] >= 0.375 - 1e-10);
        }
    }

    #[test]
    fn renormalized_and_raw_planes_agree() {
        let z = Ensemble::HaarGauge.zipper(2, 8, Flavor::Finite, 7).unwrap();
        let chain = TransferChain::from_zipper(&z).unwrap();
        for w in [
            c64(0.3, 0.2),
            Complex64::from_polar(1.0, 2.0),
            c64(1.5, -0.4),
        ] {
            let raw = propagate(&chain, w, 8, false).unwrap();
            let ren = propagate(&chain, w, 8, true).unwrap();
            assert!(max_principal_angle(&raw.matrix, &ren.matrix) < 1e-8);
            assert!(close(&ren.raw().unwrap(), &raw.matrix, 1e-9));
        }
    }

    #[test]
    fn unit_circle_frames_are_lagrangian() {
        let z = Ensemble::HaarGauge
            .zipper(3, 12, Flavor::Finite, 8)
            .unwrap();
        let chain = TransferChain::from_zipper(&z).unwrap();
        for n in 0..=12 {
            let f = propagate(&chain, Complex64::from_polar(1.0, 0.77), n, true).unwrap();
            assert!(op_norm(&(f.matrix.adjoint() * l_form(3) * &f.matrix)) < 1e-9);
        }
    }

    #[test]
    fn q_form_routes_agree_and_have_signature_l_l() {
        let mut rng = rng_from_seed(9);
        for seed in 0..6 {
            let z = Ensemble::HaarGauge
                .zipper(2, 10, Flavor::Finite, seed)
                .unwrap();
            let chain = TransferChain::from_zipper(&z).unwrap();
            // Moderate |z| and N keep 𝒬 well enough conditioned to resolve its inertia.
            let w = random_point_in_disc(0.6, 0.9, &mut rng);
            for n in [1, 2, 5, 10] {
                let a = q_form(&chain, w, n).unwrap().matrix;
                let b = q_form_direct(&chain, w, n).unwrap().matrix;
                assert!(close(&a, &b, 1e-8), "n = {n}");
                let ev = hermitian_eigen(&a).values;
                assert_eq!(ev.iter().filter(|&&x| x > 0.0).count(), 2);
                assert_eq!(ev.iter().filter(|&&x| x < 0.0).count(), 2);
            }
            // (𝒬ᶻ)^{-1} = 𝓛 𝒬^{z̄⁻¹} 𝓛
            let q = q_form(&chain, w, 6).unwrap().matrix;
            let qr = q_form(&chain, 1.0 / w.conj(), 6).unwrap().matrix;
            let l = l_form(2);
            let scale = frobenius(&q) * frobenius(&qr);
            let err = frobenius(&(&q * &l * &qr * &l - identity(4)));
            assert!(err < 1e-12 * scale, "{err:e} vs {scale:e}");
            let qd = q_form_direct(&chain, 1.0 / w.conj(), 6).unwrap().matrix;
            assert!(close(&qr, &qd, 1e-8));
            assert!(close(
                &q_form(&chain, Complex64::from_polar(1.0, 0.4), 10)
                    .unwrap()
                    .matrix,
                &l,
                1e-9
            ));
            // 𝒬_{2k} − 𝒬_{2k−1} ≻ 0 and 𝒬_{2k+1} = 𝒬_{2k}
            let d = q_form(&chain, w, 6).unwrap().matrix - q_form(&chain, w, 5).unwrap().matrix;
            assert!(hermitian_eigen(&d).values[0] > 0.0);
            let e = q_form(&chain, w, 7).unwrap().matrix - q_form(&chain, w, 6).unwrap().matrix;
            assert!(frobenius(&e) < 1e-9 * frobenius(&q));
        }
    }

    #[test]
    fn inhomogeneous_solve_recovers_known_solution() {
        let mut rng = rng_from_seed(10);
        let z = Ensemble::HaarGauge
            .zipper(2, 6, Flavor::Finite, 11)
            .unwrap();
        let u = assemble_finite(&z).unwrap().to_dense();
        let w = c64(0.35, -0.5);
        let x = random_matrix(12, 2, &mut rng);
        let xi_full = (&u - identity(12) * w) * &x;
        let xi: Vec<CMatrix> = (0..6)
            .map(|k| xi_full.rows(2 * k, 2).into_owned())
            .collect();
        let sol = solve_inhomogeneous(&z, w, &xi).unwrap();
        for k in 0..6 {
            assert!(close(&sol[k], &x.rows(2 * k, 2).into_owned(), 1e-8));
        }
    }

    #[test]
    fn unit_source_gives_the_green_matrix() {
        let z = Ensemble::HaarGauge
            .zipper(2, 6, Flavor::Finite, 12)
            .unwrap();
        let u = assemble_finite(&z).unwrap().to_dense();
        let w = c64(-0.2, 0.6);
        let mut xi = vec![zeros(2, 2); 6];
        xi[0] = identity(2);
        let sol = solve_inhomogeneous(&z, w, &xi).unwrap();
        let res = inverse(&(u - identity(12) * w), 0.0).unwrap();
        assert!(close(&sol[0], &res.view((0, 0), (2, 2)).into_owned(), 1e-9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn single_step_form_identity(seed in any::<u64>(), l in 1usize..4) {
            let mut rng = rng_from_seed(seed);
            let b = random_block(l, &mut rng);
            let z = random_point_in_disc(0.05, 0.99, &mut rng);
            let t = transfer_at(&b, 2, z).unwrap().matrix;
            let p = p_matrix(&b, z).unwrap().matrix;
            let lf = l_form(l);
            prop_assert!(close(&(t.adjoint() * &lf * &t), &(&lf + &p), 1e-10));
            let bound = (1.0 - z.norm_sqr()) / 2.0;
            prop_assert!(hermitian_eigen(&p).values[0] >= bound - 1e-9 * (1.0 + op_norm(&p)));
            let inv = transfer_inverse_at(&b, 2, z).unwrap().matrix;
            prop_assert!(close(&(inv * &t), &identity(2 * l), 1e-10));
        }

        #[test]
        fn inhomogeneous_residual(seed in any::<u64>(), l in 1usize..3, half in 1usize..4) {
            let mut rng = rng_from_seed(seed);
            let n = 2 * half;
            let z = Ensemble::HaarGauge.zipper(l, n, Flavor::Finite, seed).unwrap();
            let u = assemble_finite(&z).unwrap().to_dense();
            let w = random_point_in_disc(0.1, 0.9, &mut rng);
            let xi_full = random_matrix(n * l, l, &mut rng);
            let xi: Vec<CMatrix> = (0..n).map(|k| xi_full.rows(k * l, l).into_owned()).collect();
            let sol = solve_inhomogeneous(&z, w, &xi).unwrap();
            let mut x = zeros(n * l, l);
            for (k, s) in sol.iter().enumerate() {
                x.view_mut((k * l, 0), (l, l)).copy_from(s);
            }
            let res = (&u - identity(n * l) * w) * x - xi_full;
            prop_assert!(frobenius(&res) < 1e-8);
        }
    }
}
