//! Resolvent boundary data E, F, G of finite zippers, Weyl discs, and the
//! limit-point value F^z of semi-infinite zippers.

use crate::error::{Error, Result};
use crate::matrix_core::{
    c64, cayley, frobenius, hermitian_eigen, hermitian_function, identity, in_siegel_disc, inverse,
    l_form, mobius, mobius_inverse, op_norm, quarters, solve, unitarity_defect, CMatrix, I,
};
use crate::transfer::{propagate, q_form, TransferChain, RAW_PRODUCT_CAP};
use crate::zipper::{assemble_finite, BlockSource, Flavor, Zipper};
use num_complex::Complex64;

/// Denominator tolerance for the Möbius steps; the Lemma keeps every iterate in the disc.
const MOBIUS_TOL: f64 = 1e-13;
/// Unitarity threshold for points on the Weyl surface.
pub const SURFACE_TOL: f64 = 1e-7;

fn check_disc(z: Complex64) -> Result<()> {
    if z.norm() >= 1.0 {
        return Err(Error::OutsideDisc(z));
    }
    Ok(())
}

fn check_nonzero(z: Complex64) -> Result<()> {
    check_disc(z)?;
    if z.norm() == 0.0 {
        return Err(Error::ZeroZ);
    }
    Ok(())
}

fn finite_chain(zipper: &Zipper) -> Result<(TransferChain, &CMatrix)> {
    if zipper.flavor() != Flavor::Finite {
        return Err(Error::WrongFlavor {
            expected: "finite",
            found: zipper.flavor().name(),
        });
    }
    let v = zipper.boundary_v().expect("finite zipper has V");
    Ok((TransferChain::from_zipper(zipper)?, v))
}

/// E = (𝒯ᶻ_1)^{-1}·( … ((𝒯ᶻ_N)^{-1}·V*) … ), one Möbius step per site.
pub fn e_chain(chain: &TransferChain, z: Complex64, v: &CMatrix, n: usize) -> Result<CMatrix> {
    check_nonzero(z)?;
    let mut e = v.adjoint();
    for site in (1..=n).rev() {
        e = mobius(&chain.inverse_at(site, z)?, &e, MOBIUS_TOL)?;
    }
    Ok(e)
}

/// E = (C − VA)^{-1}(VB − D) with 𝒯ᶻ(N,0) = [[A, B], [C, D]].
pub fn e_closed_form(
    chain: &TransferChain,
    z: Complex64,
    v: &CMatrix,
    n: usize,
) -> Result<CMatrix> {
    check_nonzero(z)?;
    if n > RAW_PRODUCT_CAP {
        return Err(Error::CapExceeded {
            size: n,
            cap: RAW_PRODUCT_CAP,
        });
    }
    let [a, b, c, d] = quarters(&chain.product(n, 0, z)?);
    let den = c - v * a;
    let s = crate::matrix_core::min_singular(&den);
    if s <= MOBIUS_TOL {
        return Err(Error::SingularDenominator(s));
    }
    solve(&den, &(v * b - d))
}

/// E = V* : 𝒯ᶻ(N,0).
pub fn e_forward(chain: &TransferChain, z: Complex64, v: &CMatrix, n: usize) -> Result<CMatrix> {
    check_nonzero(z)?;
    if n > RAW_PRODUCT_CAP {
        return Err(Error::CapExceeded {
            size: n,
            cap: RAW_PRODUCT_CAP,
        });
    }
    mobius_inverse(&v.adjoint(), &chain.product(n, 0, z)?, MOBIUS_TOL)
}

pub fn e_matrix(zipper: &Zipper, z: Complex64, v: &CMatrix) -> Result<CMatrix> {
    let (chain, _) = finite_chain(zipper)?;
    e_chain(&chain, z, v, zipper.n())
}

/// F = (1/i)(E + 1)(E − 1)^{-1}.
pub fn f_from_e(e: &CMatrix) -> Result<CMatrix> {
    let l = e.nrows();
    let den = e - identity(l);
    let num = e + identity(l);
    // X = num · den^{-1}  ⇔  den* X* = num*
    let xt = solve(&den.adjoint(), &num.adjoint())?;
    Ok(xt.adjoint() * (-I))
}

/// G = z^{-1} E (1 − E)^{-1}.
pub fn g_from_e(e: &CMatrix, z: Complex64) -> Result<CMatrix> {
    check_nonzero(z)?;
    let l = e.nrows();
    let den = identity(l) - e;
    let xt = solve(&den.adjoint(), &e.adjoint())?;
    Ok(xt.adjoint() / z)
}

/// F^z_N(V) along a cached chain; F(0) = i·1.
pub fn f_chain(chain: &TransferChain, z: Complex64, v: &CMatrix, n: usize) -> Result<CMatrix> {
    check_disc(z)?;
    if z.norm() == 0.0 {
        return Ok(identity(chain.l()) * I);
    }
    f_from_e(&e_chain(chain, z, v, n)?)
}

pub fn f_matrix(zipper: &Zipper, z: Complex64, v: &CMatrix) -> Result<CMatrix> {
    let (chain, _) = finite_chain(zipper)?;
    f_chain(&chain, z, v, zipper.n())
}

pub fn g_matrix(zipper: &Zipper, z: Complex64, v: &CMatrix) -> Result<CMatrix> {
    g_from_e(&e_matrix(zipper, z, v)?, z)
}

/// Dense oracle values (F, G) = (i π₁*(𝕌−z)^{-1}(𝕌+z)π₁, π₁*(𝕌−z)^{-1}π₁).
pub fn dense_resolvent(zipper: &Zipper, z: Complex64) -> Result<(CMatrix, CMatrix)> {
    let u = assemble_finite(zipper)?.to_dense();
    let dim = u.nrows();
    let l = zipper.l();
    let shifted = &u - identity(dim) * z;
    let mut pi1 = crate::matrix_core::zeros(dim, l);
    pi1.view_mut((0, 0), (l, l)).copy_from(&identity(l));
    let g_cols = solve(&shifted, &pi1)?;
    let f_cols = solve(&shifted, &((&u + identity(dim) * z) * &pi1))?;
    Ok((
        f_cols.rows(0, l).into_owned() * I,
        g_cols.rows(0, l).into_owned(),
    ))
}

/// Smallest eigenvalue of the imaginary part i(F* − F)/2.
pub fn caratheodory_margin(f: &CMatrix) -> f64 {
    let im = (f.adjoint() - f) * c64(0.0, 0.5);
    hermitian_eigen(&im).values[0]
}

/// Center and radius operators of the Weyl disc 𝔚ᶻ_N.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylDisc {
    pub z: Complex64,
    pub n: usize,
    /// S_N^z
    pub center: CMatrix,
    /// R_N^z, positive definite
    pub radius_left: CMatrix,
    /// −R_N^{z̄⁻¹}, positive definite
    pub radius_right: CMatrix,
    /// S_N^{z̄⁻¹}
    pub center_reflected: CMatrix,
    /// Relative defect of the lower-right block identity Q̃₂₂ = S*R^{-1}S + R^{z̄⁻¹}.
    pub lower_right_defect: f64,
}

fn q_tilde(chain: &TransferChain, z: Complex64, n: usize) -> Result<CMatrix> {
    let c = cayley(chain.l());
    Ok(c.adjoint() * q_form(chain, z, n)?.matrix * &c)
}

fn split(q: &CMatrix) -> [CMatrix; 4] {
    quarters(&((q + q.adjoint()) * c64(0.5, 0.0)))
}

/// Inverse of a Hermitian definite block, checked for the expected sign.
fn definite_inverse(m: &CMatrix, positive: bool, what: &str) -> Result<CMatrix> {
    let signed = if positive { m.clone() } else { -m };
    let ev = hermitian_eigen(&signed).values;
    let (lo, hi) = (ev[0], *ev.last().unwrap());
    if !(lo > 1e-15 * hi.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularBlock(format!(
            "{what}: eigenvalues in [{lo:e}, {hi:e}]"
        )));
    }
    let inv = hermitian_function(&signed, |x| 1.0 / x);
    Ok(if positive { inv } else { -inv })
}

/// Blocks of 𝒬̃ = (𝒯𝒞)*𝓛(𝒯𝒞) kept in factored form: 𝒯(n,0)𝒞 = Q·[[A, B], [0, D]] with
/// Q unitary, accumulated one QR step per site so growing and decaying directions stay apart.
struct GradedFrame {
    a: CMatrix,
    b: CMatrix,
    d: CMatrix,
    k: [CMatrix; 4],
}

impl GradedFrame {
    fn new(chain: &TransferChain, z: Complex64, n: usize) -> Result<GradedFrame> {
        let l = chain.l();
        let mut q = cayley(l);
        let mut r = identity(2 * l);
        for site in 1..=n {
            let qr = (chain.at(site, z)? * &q).qr();
            // Fix the phases so the diagonal of the step factor is real positive.
            let (mut qs, mut rs) = (qr.q(), qr.r());
            for j in 0..2 * l {
                let d = rs[(j, j)];
                if d.norm() == 0.0 {
                    return Err(Error::DegenerateFrame(site));
                }
                let ph = d / d.norm();
                rs.row_mut(j).iter_mut().for_each(|x| *x /= ph);
                qs.column_mut(j).iter_mut().for_each(|x| *x *= ph);
            }
            r = rs * r;
            q = qs;
        }
        let [a, b, _, d] = quarters(&r);
        let k = quarters(&hermitize(q.adjoint() * l_form(l) * &q));
        Ok(GradedFrame { a, b, d, k })
    }

    /// (q₁₁⁻¹, −q₁₁⁻¹q₁₂) = (A⁻¹K₁₁⁻¹A⁻*, −A⁻¹(B + K₁₁⁻¹K₁₂D)).
    fn radius_center(&self, positive: bool, what: &str) -> Result<(CMatrix, CMatrix)> {
        let [k11, k12, _, _] = &self.k;
        let k11_inv = definite_inverse(k11, positive, what)?;
        let a_inv = self
            .a
            .clone()
            .solve_upper_triangular(&identity(self.a.nrows()))
            .ok_or_else(|| Error::SingularBlock(format!("{what}: triangular factor")))?;
        let radius = hermitize(&a_inv * &k11_inv * a_inv.adjoint());
        let center = -(&a_inv * (&self.b + &k11_inv * k12 * &self.d));
        Ok((radius, center))
    }

    /// q₂₂ = B*K₁₁B + B*K₁₂D + D*K₂₁B + D*K₂₂D.
    fn q22(&self) -> CMatrix {
        let [k11, k12, k21, k22] = &self.k;
        let (b, d) = (&self.b, &self.d);
        hermitize(b.adjoint() * k11 * b + b.adjoint() * k12 * d + d.adjoint() * k21 * b + d.adjoint() * k22 * d)
    }
}

fn hermitize(m: CMatrix) -> CMatrix {
    (&m + m.adjoint()) * c64(0.5, 0.0)
}

/// R, S and their values at the reflected point z̄⁻¹, from 𝒬̃ = 𝒞*𝒬𝒞 evaluated on
/// QR-propagated frames.
pub fn radial_central(chain: &TransferChain, z: Complex64, n: usize) -> Result<WeylDisc> {
    check_nonzero(z)?;
    let w = 1.0 / z.conj();
    let inner = GradedFrame::new(chain, z, n)?;
    let outer = GradedFrame::new(chain, w, n)?;
    let (r, s) = inner.radius_center(true, "R^z")?;
    let (rw, sw) = outer.radius_center(false, "R^{1/z̄}")?;
    // Q̃₂₂ = S*R⁻¹S + R^{z̄⁻¹}, compared in the factored frame: q₂₂ − q₂₁q₁₁⁻¹q₁₂ = R^{z̄⁻¹}.
    let q22 = inner.q22();
    let [k11, _, _, _] = &inner.k;
    let a_s = &inner.a * &s;
    let rhs = a_s.adjoint() * k11 * &a_s + &rw;
    let lower_right_defect = frobenius(&(&q22 - &rhs)) / (1.0 + frobenius(&q22));
    Ok(WeylDisc {
        z,
        n,
        center: s,
        radius_left: r,
        radius_right: -rw,
        center_reflected: sw,
        lower_right_defect,
    })
}

/// R, S and their values at the reflected point z̄⁻¹, from the summed form 𝒬̃ = 𝒞*𝒬𝒞.
///
/// Loses accuracy once ‖𝒯‖² dwarfs 1/‖R‖; `radial_central` avoids that.
pub fn radial_central_sum(chain: &TransferChain, z: Complex64, n: usize) -> Result<WeylDisc> {
    check_nonzero(z)?;
    let w = 1.0 / z.conj();
    let [q11, q12, _, q22] = split(&q_tilde(chain, z, n)?);
    let [p11, p12, _, _] = split(&q_tilde(chain, w, n)?);
    let r = definite_inverse(&q11, true, "R^z")?;
    let rw = definite_inverse(&p11, false, "R^{1/z̄}")?;
    let s = -(&r * &q12);
    let sw = -(&rw * &p12);
    let rinv = &q11;
    let rhs = s.adjoint() * rinv * &s + &rw;
    let lower_right_defect = frobenius(&(&q22 - &rhs)) / (1.0 + frobenius(&q22));
    Ok(WeylDisc {
        z,
        n,
        center: s,
        radius_left: (&r + r.adjoint()) * c64(0.5, 0.0),
        radius_right: -(&rw + rw.adjoint()) * c64(0.5, 0.0),
        center_reflected: sw,
        lower_right_defect,
    })
}

pub fn weyl_disc(zipper: &Zipper, z: Complex64) -> Result<WeylDisc> {
    let chain = TransferChain::new(zipper, zipper.n())?;
    radial_central(&chain, z, zipper.n())
}

fn psd_sqrt(m: &CMatrix) -> CMatrix {
    hermitian_function(m, |x| x.max(0.0).sqrt())
}

fn pd_inv_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let ev = hermitian_eigen(m).values;
    if !(ev[0] > 0.0) {
        return Err(Error::SingularBlock(format!(
            "radius not positive ({:e})",
            ev[0]
        )));
    }
    Ok(hermitian_function(m, |x| 1.0 / x.sqrt()))
}

impl WeylDisc {
    /// S + R^{1/2} W (−R^{z̄⁻¹})^{1/2}.
    pub fn point(&self, w: &CMatrix) -> CMatrix {
        &self.center + psd_sqrt(&self.radius_left) * w * psd_sqrt(&self.radius_right)
    }

    /// 8/(N(1 − |z|²)²).
    pub fn radius_bound(&self) -> f64 {
        radius_bound(self.n, self.z)
    }

    /// ‖R^z‖ · ‖R^{z̄⁻¹}‖, the squared diameter bound for boundary values.
    pub fn diameter_sq(&self) -> f64 {
        op_norm(&self.radius_left) * op_norm(&self.radius_right)
    }
}

pub fn radius_bound(n: usize, z: Complex64) -> f64 {
    let d = 1.0 - z.norm_sqr();
    8.0 / (n as f64 * d * d)
}

/// W = (R^z)^{-1/2}(F − S)(−R^{z̄⁻¹})^{-1/2}, without a surface test.
pub fn disc_coordinate(f: &CMatrix, disc: &WeylDisc) -> Result<CMatrix> {
    Ok(pd_inv_sqrt(&disc.radius_left)? * (f - &disc.center) * pd_inv_sqrt(&disc.radius_right)?)
}

/// The unitary W placing F on ∂𝔚; NotOnSurface if W is not unitary to SURFACE_TOL.
pub fn disc_membership(f: &CMatrix, disc: &WeylDisc) -> Result<CMatrix> {
    let w = disc_coordinate(f, disc)?;
    let d = unitarity_defect(&w);
    if d > SURFACE_TOL {
        return Err(Error::NotOnSurface(d));
    }
    Ok(w)
}

/// log‖R_N^z‖ from a renormalized frame: Q̃₁₁ = ½ Φ_N*𝓛Φ_N with Φ_N = 𝒯ᶻ(N,0)(1;1).
pub fn log_radius(chain: &TransferChain, z: Complex64, n: usize) -> Result<f64> {
    let frame = propagate(chain, z, n, true)?;
    let k = frame.matrix.adjoint() * l_form(chain.l()) * &frame.matrix;
    let kinv = inverse(&k, 0.0)?;
    let g = &frame.normalizer_inv;
    let core = g * kinv * g.adjoint() * c64(2.0, 0.0);
    Ok(op_norm(&core).ln() + 2.0 * frame.log_scale)
}

/// Result of a limit-point evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitPoint {
    pub f: CMatrix,
    /// A-priori bound 8/(N(1−|z|²)²) on the Weyl-disc diameter; ≤ tol by choice of N.
    pub certified_error: f64,
    /// log₁₀ of sqrt(‖R_N^z‖‖R_N^{z̄⁻¹}‖) measured from renormalized frames.
    pub posterior_log10: f64,
    pub n_used: usize,
}

impl LimitPoint {
    pub fn posterior_radius(&self) -> f64 {
        10f64.powf(self.posterior_log10)
    }
}

/// Smallest even N with 8/(N(1−|z|²)²) ≤ tol.
pub fn sites_for_tolerance(z: Complex64, tol: f64) -> Result<usize> {
    check_disc(z)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let d = 1.0 - z.norm_sqr();
    let n = (8.0 / (tol * d * d)).ceil() as usize;
    Ok((n.max(2) + 1) / 2 * 2)
}

/// F^z of a semi-infinite zipper with far boundary V = 1.
pub fn limit_f(source: &(impl BlockSource + ?Sized), z: Complex64, tol: f64) -> Result<LimitPoint> {
    limit_f_with(source, z, tol, &identity(source.l()))
}

/// F^z_N(V) at the N chosen for `tol`, with the disc diameter certificate.
pub fn limit_f_with(
    source: &(impl BlockSource + ?Sized),
    z: Complex64,
    tol: f64,
    v: &CMatrix,
) -> Result<LimitPoint> {
    let n = sites_for_tolerance(z, tol)?;
    if z.norm() == 0.0 {
        return Ok(LimitPoint {
            f: identity(source.l()) * I,
            certified_error: 0.0,
            posterior_log10: f64::NEG_INFINITY,
            n_used: 0,
        });
    }
    let chain = TransferChain::new(source, n)?;
    limit_on_chain(&chain, z, v, n)
}

/// Evaluates the limit-point data on an already materialized chain of length ≥ n.
pub fn limit_on_chain(
    chain: &TransferChain,
    z: Complex64,
    v: &CMatrix,
    n: usize,
) -> Result<LimitPoint> {
    let f = f_chain(chain, z, v, n)?;
    let lr = log_radius(chain, z, n)?;
    let lw = log_radius(chain, 1.0 / z.conj(), n)?;
    Ok(LimitPoint {
        f,
        certified_error: radius_bound(n, z),
        posterior_log10: 0.5 * (lr + lw) / std::f64::consts::LN_10,
        n_used: n,
    })
}

/// E lies strictly inside the Siegel disc.
pub fn in_disc(e: &CMatrix) -> bool {
    in_siegel_disc(e, true, 0.0)
}
