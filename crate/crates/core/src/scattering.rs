//! Scattering blocks S(α, U, V) with invertible upper-right block, and the
//! bijection φ onto the Lorentz group U(L, L).

use crate::error::{Error, Result};
use crate::matrix_core::{
    from_blocks, hermitian_sqrt, identity, inverse, l_form, min_singular,
    op_norm, polar_unitary, quarters, unitarity_defect, zeros, CMatrix, DEFAULT_TOL,
};
use crate::random::{random_contraction, random_unitary};
use num_complex::Complex64;
use rand::Rng;

/// Smallest admissible singular value of β for membership in U(2L)_inv.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Unitarity defect accepted for gauges, boundaries and input blocks.
pub const UNITARY_TOL: f64 = 1e-8;

/// A 2L×2L unitary S(α, U, V) = [[α, β], [γ, δ]] with
/// β = (1−αα*)^{1/2}U, γ = V(1−α*α)^{1/2}, δ = −Vα*U.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringBlock {
    alpha: CMatrix,
    u: CMatrix,
    v: CMatrix,
    beta: CMatrix,
    gamma: CMatrix,
    delta: CMatrix,
    matrix: CMatrix,
}

impl ScatteringBlock {
    pub fn l(&self) -> usize {
        self.alpha.nrows()
    }
    pub fn alpha(&self) -> &CMatrix {
        &self.alpha
    }
    pub fn u(&self) -> &CMatrix {
        &self.u
    }
    pub fn v(&self) -> &CMatrix {
        &self.v
    }
    pub fn beta(&self) -> &CMatrix {
        &self.beta
    }
    pub fn gamma(&self) -> &CMatrix {
        &self.gamma
    }
    pub fn delta(&self) -> &CMatrix {
        &self.delta
    }
    /// The assembled 2L×2L unitary.
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// S(α, e^{-ik}U, e^{ik}V): β scaled by e^{-ik}, γ by e^{ik}, α and δ unchanged.
    pub fn with_momentum(&self, k: f64) -> ScatteringBlock {
        let em = Complex64::from_polar(1.0, -k);
        let ep = Complex64::from_polar(1.0, k);
        assemble(
            self.alpha.clone(),
            &self.u * em,
            &self.v * ep,
            self.beta.clone() * em,
            self.gamma.clone() * ep,
            self.delta.clone(),
        )
    }

    /// Defects of the six unitarity relations
    /// α*α+γ*γ=1, δ*δ+β*β=1, δ*γ+β*α=0, αα*+ββ*=1, δδ*+γγ*=1, γα*+δβ*=0.
    pub fn relation_defects(&self) -> [f64; 6] {
        let (a, b, g, d) = (&self.alpha, &self.beta, &self.gamma, &self.delta);
        let id = identity(self.l());
        [
            op_norm(&(a.adjoint() * a + g.adjoint() * g - &id)),
            op_norm(&(d.adjoint() * d + b.adjoint() * b - &id)),
            op_norm(&(d.adjoint() * g + b.adjoint() * a)),
            op_norm(&(a * a.adjoint() + b * b.adjoint() - &id)),
            op_norm(&(d * d.adjoint() + g * g.adjoint() - &id)),
            op_norm(&(g * a.adjoint() + d * b.adjoint())),
        ]
    }
}

fn assemble(
    alpha: CMatrix,
    u: CMatrix,
    v: CMatrix,
    beta: CMatrix,
    gamma: CMatrix,
    delta: CMatrix,
) -> ScatteringBlock {
    let matrix = from_blocks(&alpha, &beta, &gamma, &delta);
    ScatteringBlock {
        alpha,
        u,
        v,
        beta,
        gamma,
        delta,
        matrix,
    }
}

fn check_unitary(m: &CMatrix) -> Result<()> {
    let defect = unitarity_defect(m);
    if defect > UNITARY_TOL {
        return Err(Error::NotUnitary(defect));
    }
    Ok(())
}

/// Builds S(α, U, V); requires ‖α‖ < 1 − tol and unitary gauges.
pub fn build_block(alpha: &CMatrix, u: &CMatrix, v: &CMatrix, tol: f64) -> Result<ScatteringBlock> {
    let l = alpha.nrows();
    if alpha.ncols() != l || u.shape() != (l, l) || v.shape() != (l, l) {
        return Err(Error::DimensionMismatch {
            expected: l,
            found: u.nrows().max(v.nrows()),
        });
    }
    let norm = op_norm(alpha);
    if norm >= 1.0 - tol {
        return Err(Error::NotContraction(norm));
    }
    check_unitary(u)?;
    check_unitary(v)?;
    let id = identity(l);
    let left = hermitian_sqrt(&(&id - alpha * alpha.adjoint()), DEFAULT_TOL)?;
    let right = hermitian_sqrt(&(&id - alpha.adjoint() * alpha), DEFAULT_TOL)?;
    let beta = left * u;
    let gamma = v * right;
    let delta = -(v * alpha.adjoint() * u);
    Ok(assemble(
        alpha.clone(),
        u.clone(),
        v.clone(),
        beta,
        gamma,
        delta,
    ))
}

/// Recovers (α, U, V) from a unitary with invertible upper-right block.
pub fn decompose_block(s: &CMatrix) -> Result<ScatteringBlock> {
    if s.nrows() != s.ncols() || s.nrows() % 2 != 0 {
        return Err(Error::DimensionMismatch {
            expected: s.nrows() + s.nrows() % 2,
            found: s.ncols(),
        });
    }
    check_unitary(s)?;
    let [alpha, beta, gamma, _] = quarters(s);
    let smin = min_singular(&beta);
    if smin <= MEMBERSHIP_TOL {
        return Err(Error::NotInUInv(smin));
    }
    // β = (1−αα*)^{1/2} U is a left polar decomposition; γ = V(1−α*α)^{1/2} a right one.
    let u = polar_unitary(&beta, MEMBERSHIP_TOL)?;
    let v = polar_unitary(&gamma.adjoint(), MEMBERSHIP_TOL)?.adjoint();
    let norm = op_norm(&alpha);
    if norm >= 1.0 {
        return Err(Error::NotInUInv(smin));
    }
    build_block(&alpha, &u, &v, 0.0)
}

/// The antidiagonal boundary scatterer [[0, U], [V, 0]] = S(0, U, V).
pub fn boundary_block(u: &CMatrix, v: &CMatrix) -> Result<ScatteringBlock> {
    build_block(&zeros(u.nrows(), u.nrows()), u, v, 0.0)
}

/// φ(S) = [[γ − δβ⁻¹α, δβ⁻¹], [−β⁻¹α, β⁻¹]].
pub fn phi(s: &ScatteringBlock) -> Result<CMatrix> {
    let binv = inverse(&s.beta, MEMBERSHIP_TOL).map_err(|e| match e {
        Error::Singular(x) => Error::SingularBeta(x),
        other => other,
    })?;
    let d_binv = &s.delta * &binv;
    Ok(from_blocks(
        &(&s.gamma - &d_binv * &s.alpha),
        &d_binv,
        &(-(&binv * &s.alpha)),
        &binv,
    ))
}

/// ‖T*𝓛T − 𝓛‖ relative to max(1, ‖T‖²).
pub fn lorentz_defect(t: &CMatrix) -> f64 {
    let lf = l_form(t.nrows() / 2);
    op_norm(&(t.adjoint() * &lf * t - &lf)) / op_norm(t).powi(2).max(1.0)
}

/// φ⁻¹(T) = [[−D⁻¹C, D⁻¹], [A − BD⁻¹C, BD⁻¹]].
pub fn phi_inverse(t: &CMatrix, tol: f64) -> Result<ScatteringBlock> {
    let defect = lorentz_defect(t);
    if defect > tol {
        return Err(Error::NotLorentz(defect));
    }
    let [a, b, c, d] = quarters(t);
    let dinv = inverse(&d, tol).map_err(|e| match e {
        Error::Singular(x) => Error::SingularD(x),
        other => other,
    })?;
    let dinv_c = &dinv * &c;
    let s = from_blocks(&(-&dinv_c), &dinv, &(a - &b * &dinv_c), &(&b * &dinv));
    decompose_block(&s)
}

/// Membership tests for U(2L)_inv: [β invertible, γ invertible, ‖α‖ < 1, ‖δ‖ < 1].
///
/// For a unitary, s_min(β)² = 1 − ‖α‖², so the norm tests use 1 − ‖α‖² > tol² and
/// the four agree exactly; `tol` should exceed ~1e-7 for tol² to be resolvable.
pub fn membership_predicates(s: &CMatrix, tol: f64) -> [bool; 4] {
    let [alpha, beta, gamma, delta] = quarters(s);
    let gap = |m: &CMatrix| 1.0 - op_norm(m).powi(2) > tol * tol;
    [
        min_singular(&beta) > tol,
        min_singular(&gamma) > tol,
        gap(&alpha),
        gap(&delta),
    ]
}

/// Random block with Haar gauges and α of singular values up to 0.95.
pub fn random_block(l: usize, rng: &mut impl Rng) -> ScatteringBlock {
    let alpha = random_contraction(l, 0.95, rng);
    let u = random_unitary(l, rng);
    let v = random_unitary(l, rng);
    build_block(&alpha, &u, &v, 0.0).expect("random contraction has norm below 0.95")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_core::{c64, frobenius, scalar, set_block, vstack};
    use crate::random::{random_matrix, rng_from_seed};

    fn defect_inv_sqrt(m: &CMatrix) -> CMatrix {
        crate::matrix_core::hermitian_function(m, |x| 1.0 / x.max(f64::MIN_POSITIVE).sqrt())
    }
    use proptest::prelude::*;

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        frobenius(&(a - b)) < tol
    }

    #[test]
    fn trivial_swap_block() {
        let b = build_block(&zeros(1, 1), &identity(1), &identity(1), DEFAULT_TOL).unwrap();
        assert_eq!(b.beta()[(0, 0)], c64(1.0, 0.0));
        assert_eq!(b.gamma()[(0, 0)], c64(1.0, 0.0));
        assert_eq!(b.delta()[(0, 0)].norm(), 0.0);
        let d = decompose_block(b.matrix()).unwrap();
        assert!(close(d.u(), &identity(1), 1e-14) && close(d.v(), &identity(1), 1e-14));
    }

    #[test]
    fn cmv_block_half() {
        let b = build_block(
            &scalar(1, c64(0.5, 0.0)),
            &identity(1),
            &identity(1),
            DEFAULT_TOL,
        )
        .unwrap();
        let r = 0.75f64.sqrt();
        assert!((b.beta()[(0, 0)] - c64(r, 0.0)).norm() < 1e-15);
        assert!((b.gamma()[(0, 0)] - c64(r, 0.0)).norm() < 1e-15);
        assert!((b.delta()[(0, 0)] - c64(-0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let id = identity(1);
        assert!(matches!(
            build_block(&scalar(1, c64(1.0, 0.0)), &id, &id, DEFAULT_TOL),
            Err(Error::NotContraction(_))
        ));
        assert!(matches!(
            build_block(&zeros(1, 1), &scalar(1, c64(2.0, 0.0)), &id, DEFAULT_TOL),
            Err(Error::NotUnitary(_))
        ));
        // β = 0: diag(U1, U2) is unitary but not effective.
        let mut rng = rng_from_seed(4);
        let mut s = zeros(4, 4);
        set_block(&mut s, 0, 0, &random_unitary(2, &mut rng));
        set_block(&mut s, 1, 1, &random_unitary(2, &mut rng));
        assert!(matches!(decompose_block(&s), Err(Error::NotInUInv(_))));
    }

    #[test]
    fn phi_of_boundary_block_is_diagonal() {
        let mut rng = rng_from_seed(5);
        let u = random_unitary(2, &mut rng);
        let v = random_unitary(2, &mut rng);
        let s = boundary_block(&u, &v).unwrap();
        let t = phi(&s).unwrap();
        let expect = from_blocks(&v, &zeros(2, 2), &zeros(2, 2), &u.adjoint());
        assert!(close(&t, &expect, 1e-13));
        let back = phi_inverse(&expect, DEFAULT_TOL).unwrap();
        assert!(close(back.matrix(), s.matrix(), 1e-13));
        let swap = phi_inverse(&identity(2), DEFAULT_TOL).unwrap();
        assert!(close(
            swap.matrix(),
            &from_blocks(&zeros(1, 1), &identity(1), &identity(1), &zeros(1, 1)),
            1e-14
        ));
    }

    #[test]
    fn phi_of_scalar_cmv_block() {
        // φ(S(0.6,1,1)): γ − δβ⁻¹α = 1/0.8, δβ⁻¹ = −0.6/0.8, −β⁻¹α = −0.6/0.8, β⁻¹ = 1/0.8.
        let s = build_block(
            &scalar(1, c64(0.6, 0.0)),
            &identity(1),
            &identity(1),
            DEFAULT_TOL,
        )
        .unwrap();
        let t = phi(&s).unwrap();
        let expect = CMatrix::from_row_slice(
            2,
            2,
            &[
                c64(1.25, 0.0),
                c64(-0.75, 0.0),
                c64(-0.75, 0.0),
                c64(1.25, 0.0),
            ],
        );
        assert!(close(&t, &expect, 1e-14));
        assert!(lorentz_defect(&t) < 1e-15);
    }

    #[test]
    fn closed_form_of_phi_for_gauged_blocks() {
        // φ(S(α,U,V)) = diag(V, U*)·[[(1−α*α)^{-1/2}, −(1−α*α)^{-1/2}α*], [−α(1−α*α)^{-1/2}, (1−αα*)^{-1/2}]]
        let mut rng = rng_from_seed(6);
        let s = random_block(2, &mut rng);
        let a = s.alpha();
        let id = identity(2);
        let r = defect_inv_sqrt(&(&id - a.adjoint() * a));
        let l = defect_inv_sqrt(&(&id - a * a.adjoint()));
        let inner = from_blocks(&r, &(-(&r * a.adjoint())), &(-(a * &r)), &l);
        let outer = from_blocks(s.v(), &zeros(2, 2), &zeros(2, 2), &s.u().adjoint());
        assert!(close(&phi(&s).unwrap(), &(outer * inner), 1e-12));
    }

    #[test]
    fn scattering_transfer_equivalence() {
        let mut rng = rng_from_seed(7);
        for l in 1..4 {
            let s = random_block(l, &mut rng);
            let psi = random_matrix(l, 1, &mut rng);
            let psi2 = random_matrix(l, 1, &mut rng);
            let out = s.matrix() * vstack(&psi, &psi2);
            let (ph, ph2) = (out.rows(0, l).into_owned(), out.rows(l, l).into_owned());
            let lhs = phi(&s).unwrap() * vstack(&psi, &ph);
            assert!(close(&lhs, &vstack(&ph2, &psi2), 1e-10));
        }
    }

    #[test]
    fn predicates_agree_on_members_and_non_members() {
        let mut rng = rng_from_seed(8);
        for l in 1..4 {
            for _ in 0..10 {
                let u = random_unitary(2 * l, &mut rng);
                let p = membership_predicates(&u, 1e-6);
                assert!(p.iter().all(|&x| x == p[0]));
                assert!(p[0]);
            }
        }
        // A channel that passes straight through: β and γ rank deficient, ‖α‖ = ‖δ‖ = 1.
        for _ in 0..10 {
            let diag = |x: f64, y: f64| {
                CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c64(x, 0.0), c64(y, 0.0)]))
            };
            let a = diag(1.0, 0.5);
            let b = diag(0.0, 0.75f64.sqrt());
            let k = from_blocks(&a, &b, &b, &(-&a));
            let x = random_unitary(2, &mut rng);
            let y = random_unitary(2, &mut rng);
            let x2 = random_unitary(2, &mut rng);
            let y2 = random_unitary(2, &mut rng);
            let left = from_blocks(&x, &zeros(2, 2), &zeros(2, 2), &y);
            let right = from_blocks(&x2, &zeros(2, 2), &zeros(2, 2), &y2);
            let s = left * k * right;
            assert!(unitarity_defect(&s) < 1e-13);
            let p = membership_predicates(&s, 1e-6);
            assert_eq!(p, [false; 4]);
            assert!(decompose_block(&s).is_err());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn built_blocks_are_unitary_with_all_relations(seed in any::<u64>(), l in 1usize..4) {
            let s = random_block(l, &mut rng_from_seed(seed));
            prop_assert!(unitarity_defect(s.matrix()) < 1e-10);
            for d in s.relation_defects() {
                prop_assert!(d < 1e-10);
            }
        }

        #[test]
        fn decompose_roundtrip(seed in any::<u64>(), l in 1usize..4) {
            let s = random_block(l, &mut rng_from_seed(seed));
            let d = decompose_block(s.matrix()).unwrap();
            prop_assert!(close(d.alpha(), s.alpha(), 1e-10));
            prop_assert!(close(d.u(), s.u(), 1e-10));
            prop_assert!(close(d.v(), s.v(), 1e-10));
        }

        #[test]
        fn phi_is_a_bijection(seed in any::<u64>(), l in 1usize..4) {
            let s = random_block(l, &mut rng_from_seed(seed));
            let t = phi(&s).unwrap();
            prop_assert!(lorentz_defect(&t) < 1e-10);
            let back = phi_inverse(&t, DEFAULT_TOL).unwrap();
            prop_assert!(close(back.matrix(), s.matrix(), 1e-9));
            prop_assert!(close(&phi(&back).unwrap(), &t, 1e-9 * (1.0 + frobenius(&t))));
        }

        #[test]
        fn momentum_phases_keep_the_block_unitary(seed in any::<u64>(), k in -3.2f64..3.2) {
            let s = random_block(2, &mut rng_from_seed(seed));
            let sk = s.with_momentum(k);
            prop_assert!(unitarity_defect(sk.matrix()) < 1e-10);
            let rebuilt = build_block(sk.alpha(), sk.u(), sk.v(), 0.0).unwrap();
            prop_assert!(close(rebuilt.matrix(), sk.matrix(), 1e-12));
        }
    }
}
