//! Matrix-valued probability measures on the circle, the Caratheodory transform,
//! Gram–Schmidt of matrix Laurent polynomials in CMV order, and both directions
//! of the correspondence between zippers and measures.

use crate::error::{Error, Result};
use crate::matrix_core::{
    c64, frobenius, hermitian_eigen, hermitian_function, identity, inverse, op_norm, unitarity_defect, zeros, CMatrix,
    I,
};
use crate::scattering::{build_block, ScatteringBlock};
use crate::zipper::{assemble_finite, dense_eigen, Flavor, Zipper, DENSE_CAP, TOL_CLUSTER};
use num_complex::Complex64;
use std::collections::BTreeMap;

/// Validation tolerance for atoms and total mass.
pub const MEASURE_TOL: f64 = 1e-8;
/// Smallest Gram eigenvalue accepted before Gram–Schmidt stops.
pub const GRAM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub xi: Complex64,
    pub weight: CMatrix,
}

/// Finitely many unit-circle atoms with PSD weights summing to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMeasure {
    l: usize,
    atoms: Vec<Atom>,
}

impl MatrixMeasure {
    pub fn new(l: usize, atoms: Vec<Atom>) -> Result<MatrixMeasure> {
        let mut total = zeros(l, l);
        for a in &atoms {
            if a.weight.shape() != (l, l) {
                return Err(Error::DimensionMismatch { expected: l, found: a.weight.nrows() });
            }
            if (a.xi.norm() - 1.0).abs() > MEASURE_TOL {
                return Err(Error::InvalidInput(format!("atom {} is off the unit circle", a.xi)));
            }
            let herm = frobenius(&(&a.weight - a.weight.adjoint()));
            if herm > MEASURE_TOL {
                return Err(Error::NotHermitian(herm));
            }
            let lo = hermitian_eigen(&a.weight).values[0];
            if lo < -MEASURE_TOL {
                return Err(Error::NotPsd(lo));
            }
            total += &a.weight;
        }
        let defect = frobenius(&(total - identity(l)));
        if defect > MEASURE_TOL {
            return Err(Error::InvalidInput(format!("total mass differs from 1 by {defect:e}")));
        }
        Ok(MatrixMeasure { l, atoms })
    }

    /// Equal-weight quadrature of the normalized density ρ(ξ) at M uniform nodes.
    pub fn quadrature(l: usize, m: usize, density: impl Fn(Complex64) -> CMatrix) -> Result<MatrixMeasure> {
        let nodes: Vec<Complex64> =
            (0..m).map(|j| Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / m as f64)).collect();
        let raw: Vec<CMatrix> = nodes.iter().map(|&x| density(x)).collect();
        let total = raw.iter().fold(zeros(l, l), |acc, w| acc + w);
        let norm = hermitian_function(&total, |x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 });
        let atoms = nodes.into_iter().zip(raw).map(|(xi, w)| Atom { xi, weight: &norm * w * &norm }).collect();
        MatrixMeasure::new(l, atoms)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> CMatrix {
        self.atoms.iter().fold(zeros(self.l, self.l), |acc, a| acc + &a.weight)
    }
}

/// F(z) = i Σ_j W_j (ξ_j + z)/(ξ_j − z).
pub fn caratheodory(mu: &MatrixMeasure, z: Complex64) -> Result<CMatrix> {
    if z.norm() >= 1.0 {
        return Err(Error::OutsideDisc(z));
    }
    let mut f = zeros(mu.l, mu.l);
    for a in &mu.atoms {
        f += &a.weight * ((a.xi + z) / (a.xi - z));
    }
    Ok(f * I)
}

/// Atoms at the eigenvalues of 𝕌_N(V) with weights π₁*P_jπ₁; `v` overrides the zipper's V.
pub fn spectral_measure_finite(zipper: &Zipper, v: Option<&CMatrix>) -> Result<MatrixMeasure> {
    let owned;
    let z = match v {
        Some(v) => {
            owned = zipper.with_boundary_v(v)?;
            &owned
        }
        None => zipper,
    };
    if z.flavor() != Flavor::Finite {
        return Err(Error::WrongFlavor { expected: "finite", found: z.flavor().name() });
    }
    let l = z.l();
    let (values, vectors) = dense_eigen(&assemble_finite(z)?, DENSE_CAP)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    let phase = |j: usize| values[j].arg().rem_euclid(std::f64::consts::TAU);
    order.sort_by(|&a, &b| phase(a).total_cmp(&phase(b)));
    let mut atoms: Vec<Atom> = Vec::new();
    let mut last_phase = f64::NEG_INFINITY;
    for j in order {
        let top = vectors.view((0, j), (l, 1)).into_owned();
        let w = &top * top.adjoint();
        let xi = values[j] / values[j].norm();
        if phase(j) - last_phase <= TOL_CLUSTER {
            atoms.last_mut().unwrap().weight += w;
        } else {
            atoms.push(Atom { xi, weight: w });
        }
        last_phase = phase(j);
    }
    if atoms.len() > 1 {
        let first = atoms[0].xi.arg().rem_euclid(std::f64::consts::TAU);
        if first + std::f64::consts::TAU - last_phase <= TOL_CLUSTER {
            let head = atoms.remove(0);
            atoms.last_mut().unwrap().weight += head.weight;
        }
    }
    for a in atoms.iter_mut() {
        a.weight = (&a.weight + a.weight.adjoint()) * c64(0.5, 0.0);
    }
    atoms.retain(|a| op_norm(&a.weight) > 1e-14);
    MatrixMeasure::new(l, atoms)
}

/// Σ_k c_k z^k with L×L coefficients on the left.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixLaurentPoly {
    l: usize,
    coefficients: BTreeMap<i64, CMatrix>,
}

impl MatrixLaurentPoly {
    pub fn zero(l: usize) -> MatrixLaurentPoly {
        MatrixLaurentPoly { l, coefficients: BTreeMap::new() }
    }

    /// c·z^k
    pub fn monomial(c: CMatrix, k: i64) -> MatrixLaurentPoly {
        let l = c.nrows();
        MatrixLaurentPoly { l, coefficients: BTreeMap::from([(k, c)]) }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn coefficient(&self, k: i64) -> CMatrix {
        self.coefficients.get(&k).cloned().unwrap_or_else(|| zeros(self.l, self.l))
    }

    /// Exponents carrying a coefficient of norm above `tol`.
    pub fn support(&self, tol: f64) -> Vec<i64> {
        self.coefficients.iter().filter(|(_, c)| frobenius(c) > tol).map(|(&k, _)| k).collect()
    }

    pub fn eval(&self, z: Complex64) -> CMatrix {
        self.coefficients.iter().fold(zeros(self.l, self.l), |acc, (&k, c)| acc + c * z.powi(k as i32))
    }

    /// a·self
    pub fn left_mul(&self, a: &CMatrix) -> MatrixLaurentPoly {
        let coefficients = self.coefficients.iter().map(|(&k, c)| (k, a * c)).collect();
        MatrixLaurentPoly { l: self.l, coefficients }
    }

    /// z^s·self
    pub fn shift(&self, s: i64) -> MatrixLaurentPoly {
        let coefficients = self.coefficients.iter().map(|(&k, c)| (k + s, c.clone())).collect();
        MatrixLaurentPoly { l: self.l, coefficients }
    }

    pub fn add(&self, other: &MatrixLaurentPoly) -> MatrixLaurentPoly {
        let mut out = self.clone();
        for (&k, c) in &other.coefficients {
            out.coefficients.entry(k).and_modify(|x| *x += c).or_insert_with(|| c.clone());
        }
        out
    }

    pub fn sub(&self, other: &MatrixLaurentPoly) -> MatrixLaurentPoly {
        self.add(&other.left_mul(&(-identity(self.l))))
    }
}

/// ⟨f, g⟩ = Σ_j g(ξ_j) W_j f(ξ_j)*.
pub fn inner_product(f: &MatrixLaurentPoly, g: &MatrixLaurentPoly, mu: &MatrixMeasure) -> CMatrix {
    let mut acc = zeros(mu.l, mu.l);
    for a in &mu.atoms {
        acc += g.eval(a.xi) * &a.weight * f.eval(a.xi).adjoint();
    }
    acc
}

/// A polynomial together with its values at the atoms of a fixed measure.
#[derive(Debug, Clone)]
struct Sampled {
    poly: MatrixLaurentPoly,
    values: Vec<CMatrix>,
}

impl Sampled {
    fn new(poly: MatrixLaurentPoly, mu: &MatrixMeasure) -> Sampled {
        let values = mu.atoms.iter().map(|a| poly.eval(a.xi)).collect();
        Sampled { poly, values }
    }

    fn ip(f: &Sampled, g: &Sampled, mu: &MatrixMeasure) -> CMatrix {
        let mut acc = zeros(mu.l, mu.l);
        for ((a, fv), gv) in mu.atoms.iter().zip(&f.values).zip(&g.values) {
            acc += gv * &a.weight * fv.adjoint();
        }
        acc
    }

    fn combine(&self, a: &CMatrix, other: &Sampled, b: &CMatrix) -> Sampled {
        let poly = self.poly.left_mul(a).add(&other.poly.left_mul(b));
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Sampled { poly, values }
    }

    fn shift(&self, s: i64, mu: &MatrixMeasure) -> Sampled {
        let values = mu.atoms.iter().zip(&self.values).map(|(a, v)| v * a.xi.powi(s as i32)).collect();
        Sampled { poly: self.poly.shift(s), values }
    }
}

/// Exponent of the n-th basis element: 0, −1, 1, −2, 2, … for φ; 0, 1, −1, 2, −2, … for ψ.
fn exponent(n: usize, psi: bool) -> i64 {
    let m = (n / 2) as i64;
    let e = if n % 2 == 0 { -m } else { m };
    if psi {
        -e
    } else {
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// All requested steps were produced.
    Completed,
    /// The Gram normalizer at this step fell below the degeneracy threshold.
    DegenerateGram { step: usize },
}

/// Recursion coefficients for n = 2, …, n_last.
#[derive(Debug, Clone, PartialEq)]
pub struct SzegoData {
    pub boundary_u: CMatrix,
    /// Entries for n = 2, 3, …; index n − 2.
    pub alpha: Vec<CMatrix>,
    pub rho: Vec<CMatrix>,
    pub rho_tilde: Vec<CMatrix>,
    pub u: Vec<CMatrix>,
    pub v: Vec<CMatrix>,
    /// ⟨φ_N, ψ_N⟩ when the measure supports exactly N steps; the right boundary V of a finite zipper.
    pub terminal: Option<CMatrix>,
}

impl SzegoData {
    pub fn last_index(&self) -> usize {
        self.alpha.len() + 1
    }

    pub fn block(&self, n: usize) -> Result<ScatteringBlock> {
        if n < 2 || n > self.last_index() {
            return Err(Error::MissingBlock(n));
        }
        let (a, u, v) = (&self.alpha[n - 2], &self.u[n - 2], &self.v[n - 2]);
        // The even relations pair ψ with z·S φ, so the operator carries the adjoint block.
        if n % 2 == 0 {
            build_block(&a.adjoint(), &v.adjoint(), &u.adjoint(), 0.0)
        } else {
            build_block(a, u, v, 0.0)
        }
    }
}

/// Output of Gram–Schmidt: φ_1…, ψ_1…, coefficients, and diagnostics.
#[derive(Debug, Clone)]
pub struct GramSchmidt {
    pub phi: Vec<MatrixLaurentPoly>,
    pub psi: Vec<MatrixLaurentPoly>,
    pub kappa: Vec<CMatrix>,
    pub kappa_tilde: Vec<CMatrix>,
    pub data: SzegoData,
    pub stop: StopReason,
    /// Largest deviation of the Gram matrices ⟨φ_m, φ_n⟩, ⟨ψ_m, ψ_n⟩ from δ_{mn}·1.
    pub orthonormality_defect: f64,
    /// Largest μ-norm residual of the four recursion relations.
    pub recursion_residual: f64,
}

fn orthonormalize(basis: Sampled, previous: &[Sampled], mu: &MatrixMeasure, step: usize) -> Result<(Sampled, CMatrix)> {
    let mut r = basis;
    // Two passes of classical Gram–Schmidt.
    for _ in 0..2 {
        for p in previous {
            let c = Sampled::ip(p, &r, mu);
            r = r.combine(&identity(mu.l), p, &(-c));
        }
    }
    let g = Sampled::ip(&r, &r, mu);
    let g = (&g + g.adjoint()) * c64(0.5, 0.0);
    let lo = hermitian_eigen(&g).values[0];
    if lo < GRAM_TOL {
        return Err(Error::DegenerateGram { step, eigenvalue: lo });
    }
    let x = hermitian_function(&g, |t| 1.0 / t.sqrt());
    Ok((r.combine(&x, &r, &zeros(mu.l, mu.l)), x))
}

fn mu_norm(f: &Sampled, mu: &MatrixMeasure) -> f64 {
    op_norm(&Sampled::ip(f, f, mu)).sqrt()
}

/// Gram–Schmidt in the orders {1, z⁻¹, z, z⁻², …} and {U, z, z⁻¹, z², …} up to n_max,
/// stopping early at a degenerate Gram normalizer.
pub fn gram_schmidt(mu: &MatrixMeasure, u: &CMatrix, n_max: usize) -> Result<GramSchmidt> {
    let l = mu.l;
    if u.shape() != (l, l) {
        return Err(Error::DimensionMismatch { expected: l, found: u.nrows() });
    }
    let d = unitarity_defect(u);
    if d > MEASURE_TOL {
        return Err(Error::NotUnitary(d));
    }
    let mut phis: Vec<Sampled> = Vec::new();
    let mut psis: Vec<Sampled> = Vec::new();
    let mut kappa = Vec::new();
    let mut kappa_tilde = Vec::new();
    let mut stop = StopReason::Completed;
    for n in 1..=n_max {
        let b = Sampled::new(MatrixLaurentPoly::monomial(identity(l), exponent(n, false)), mu);
        let lead_b = if n == 1 { u.clone() } else { identity(l) };
        let bt = Sampled::new(MatrixLaurentPoly::monomial(lead_b.clone(), exponent(n, true)), mu);
        let pair = orthonormalize(b, &phis, mu, n).and_then(|p| Ok((p, orthonormalize(bt, &psis, mu, n)?)));
        match pair {
            Ok(((f, x), (g, xt))) => {
                phis.push(f);
                psis.push(g);
                kappa.push(x);
                kappa_tilde.push(xt * lead_b);
            }
            Err(Error::DegenerateGram { step, .. }) => {
                stop = StopReason::DegenerateGram { step };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if phis.is_empty() {
        return Err(Error::DegenerateGram { step: 1, eigenvalue: 0.0 });
    }
    let count = phis.len();
    let id = identity(l);
    let mut data = SzegoData {
        boundary_u: u.clone(),
        alpha: Vec::new(),
        rho: Vec::new(),
        rho_tilde: Vec::new(),
        u: Vec::new(),
        v: Vec::new(),
        terminal: None,
    };
    for n in 2..=count {
        // φ/ψ are 1-based in the formulas.
        let alpha = if n % 2 == 1 {
            Sampled::ip(&phis[n - 2], &psis[n - 2], mu)
        } else {
            Sampled::ip(&phis[n - 2], &psis[n - 2].shift(-1, mu), mu)
        };
        let rho = &kappa_tilde[n - 2] * inverse(&kappa[n - 1], 0.0)?;
        let rho_tilde = &kappa[n - 2] * inverse(&kappa_tilde[n - 1], 0.0)?;
        let left = hermitian_function(&(&id - &alpha * alpha.adjoint()), |t| 1.0 / t.max(1e-300).sqrt());
        let right = hermitian_function(&(&id - alpha.adjoint() * &alpha), |t| 1.0 / t.max(1e-300).sqrt());
        data.u.push(&left * &rho);
        data.v.push((&right * &rho_tilde).adjoint());
        data.alpha.push(alpha);
        data.rho.push(rho);
        data.rho_tilde.push(rho_tilde);
    }
    if let StopReason::DegenerateGram { step } = stop {
        if step == count + 1 {
            let t = Sampled::ip(&phis[count - 1], &psis[count - 1], mu);
            if unitarity_defect(&t) < 1e-6 {
                data.terminal = Some(t);
            }
        }
    }

    let mut defect: f64 = 0.0;
    for family in [&phis, &psis] {
        for (m, a) in family.iter().enumerate() {
            for (n, b) in family.iter().enumerate() {
                let target = if m == n { id.clone() } else { zeros(l, l) };
                defect = defect.max(frobenius(&(Sampled::ip(a, b, mu) - target)));
            }
        }
    }

    let mut residual: f64 = 0.0;
    for n in 2..=count {
        let (alpha, rho, rho_tilde) = (&data.alpha[n - 2], &data.rho[n - 2], &data.rho_tilde[n - 2]);
        let (phi_prev, psi_prev, phi_n, psi_n) = (&phis[n - 2], &psis[n - 2], &phis[n - 1], &psis[n - 1]);
        let rels = if n % 2 == 1 {
            // ψ_{2k} − ρ_{2k+1}φ_{2k+1} − α_{2k+1}φ_{2k},  φ_{2k} − ρ̃_{2k+1}ψ_{2k+1} − α*_{2k+1}ψ_{2k}
            [
                psi_prev.combine(&id, phi_n, &(-rho)).combine(&id, phi_prev, &(-alpha)),
                phi_prev.combine(&id, psi_n, &(-rho_tilde)).combine(&id, psi_prev, &(-alpha.adjoint())),
            ]
        } else {
            // z⁻¹ψ_{2k−1} − ρ_{2k}φ_{2k} − α_{2k}φ_{2k−1},  zφ_{2k−1} − ρ̃_{2k}ψ_{2k} − α*_{2k}ψ_{2k−1}
            [
                psi_prev.shift(-1, mu).combine(&id, phi_n, &(-rho)).combine(&id, phi_prev, &(-alpha)),
                phi_prev.shift(1, mu).combine(&id, psi_n, &(-rho_tilde)).combine(&id, psi_prev, &(-alpha.adjoint())),
            ]
        };
        for r in &rels {
            residual = residual.max(mu_norm(r, mu));
        }
    }

    Ok(GramSchmidt {
        phi: phis.into_iter().map(|s| s.poly).collect(),
        psi: psis.into_iter().map(|s| s.poly).collect(),
        kappa,
        kappa_tilde,
        data,
        stop,
        orthonormality_defect: defect,
        recursion_residual: residual,
    })
}

/// Zipper rebuilt from a measure.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Semi-infinite zipper truncated at the last even site produced.
    pub zipper: Zipper,
    /// Right boundary when the measure supports exactly that many steps.
    pub boundary_v: Option<CMatrix>,
    pub gram: GramSchmidt,
}

impl Reconstruction {
    /// The finite zipper carrying the recovered right boundary.
    pub fn finite(&self) -> Result<Zipper> {
        let v = self.boundary_v.as_ref().ok_or_else(|| {
            Error::InvalidInput("measure does not terminate at an even site; no right boundary".into())
        })?;
        self.zipper.with_boundary_v(v)
    }
}

/// Blocks S_n = S(α_n, U_n, V_n) from the Gram–Schmidt data of μ.
pub fn zipper_from_measure(mu: &MatrixMeasure, u: &CMatrix, n_max: usize) -> Result<Reconstruction> {
    let gram = gram_schmidt(mu, u, n_max)?;
    let last = gram.data.last_index();
    let even = last - last % 2;
    if even < 2 {
        return Err(Error::DegenerateGram { step: 2, eigenvalue: 0.0 });
    }
    let blocks = (2..=even).map(|n| Ok((n, gram.data.block(n)?))).collect::<Result<BTreeMap<_, _>>>()?;
    let zipper = Zipper::new(Flavor::SemiInfinite, even, Some(u.clone()), None, blocks)?;
    let boundary_v = if even == last { gram.data.terminal.clone() } else { None };
    Ok(Reconstruction { zipper, boundary_v, gram })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_matrix, random_point_in_disc, random_unitary, rng_from_seed};
    use crate::weyl::f_matrix;
    use crate::zipper::{direct_sum, Ensemble};

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        frobenius(&(a - b)) <= tol * (1.0 + frobenius(b))
    }

    fn scalar(x: f64) -> CMatrix {
        identity(1) * c64(x, 0.0)
    }

    fn two_atoms() -> MatrixMeasure {
        MatrixMeasure::new(
            1,
            vec![Atom { xi: c64(1.0, 0.0), weight: scalar(0.5) }, Atom { xi: c64(-1.0, 0.0), weight: scalar(0.5) }],
        )
        .unwrap()
    }

    #[test]
    fn caratheodory_examples() {
        let one = MatrixMeasure::new(1, vec![Atom { xi: c64(1.0, 0.0), weight: scalar(1.0) }]).unwrap();
        assert!((caratheodory(&one, c64(0.5, 0.0)).unwrap()[(0, 0)] - c64(0.0, 3.0)).norm() < 1e-14);
        assert_eq!(caratheodory(&one, c64(0.0, 0.0)).unwrap(), identity(1) * I);
        assert!(matches!(caratheodory(&one, c64(1.0, 0.0)), Err(Error::OutsideDisc(_))));
    }

    #[test]
    fn invalid_measures_are_rejected() {
        let bad_mass = vec![Atom { xi: c64(1.0, 0.0), weight: scalar(0.5) }];
        assert!(MatrixMeasure::new(1, bad_mass).is_err());
        let off = vec![Atom { xi: c64(0.5, 0.0), weight: scalar(1.0) }];
        assert!(MatrixMeasure::new(1, off).is_err());
        let neg = vec![
            Atom { xi: c64(1.0, 0.0), weight: scalar(2.0) },
            Atom { xi: c64(-1.0, 0.0), weight: scalar(-1.0) },
        ];
        assert!(matches!(MatrixMeasure::new(1, neg), Err(Error::NotPsd(_))));
    }

    #[test]
    fn swap_measure_has_two_half_atoms() {
        let z = Ensemble::Free.zipper(1, 2, Flavor::Finite, 0).unwrap();
        let mu = spectral_measure_finite(&z, None).unwrap();
        assert_eq!(mu.atoms().len(), 2);
        for a in mu.atoms() {
            assert!((a.weight[(0, 0)] - c64(0.5, 0.0)).norm() < 1e-12);
            assert!((a.xi.re.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_measure_reproduces_f() {
        let mut rng = rng_from_seed(1);
        for seed in 0..5 {
            let l = 1 + seed as usize % 3;
            let z = Ensemble::HaarGauge.zipper(l, 8, Flavor::Finite, seed).unwrap();
            let v = random_unitary(l, &mut rng);
            let mu = spectral_measure_finite(&z, Some(&v)).unwrap();
            assert!(close(&mu.total_mass(), &identity(l), 1e-9));
            for _ in 0..20 {
                let w = random_point_in_disc(0.0, 0.95, &mut rng);
                let a = caratheodory(&mu, w).unwrap();
                let b = f_matrix(&z, w, &v).unwrap();
                assert!(close(&a, &b, 1e-8));
            }
        }
    }

    #[test]
    fn inner_product_laws() {
        let mut rng = rng_from_seed(2);
        let z = Ensemble::HaarGauge.zipper(2, 6, Flavor::Finite, 3).unwrap();
        let mu = spectral_measure_finite(&z, None).unwrap();
        let one = MatrixLaurentPoly::monomial(identity(2), 0);
        assert!(close(&inner_product(&one, &one, &mu), &identity(2), 1e-10));
        let f = MatrixLaurentPoly::monomial(random_matrix(2, 2, &mut rng), -1)
            .add(&MatrixLaurentPoly::monomial(random_matrix(2, 2, &mut rng), 2));
        let g = MatrixLaurentPoly::monomial(random_matrix(2, 2, &mut rng), 1);
        let a = random_matrix(2, 2, &mut rng);
        assert!(close(&inner_product(&f, &g.left_mul(&a), &mu), &(&a * inner_product(&f, &g, &mu)), 1e-12));
        assert!(close(&inner_product(&f.left_mul(&a), &g, &mu), &(inner_product(&f, &g, &mu) * a.adjoint()), 1e-12));
        assert!(hermitian_eigen(&inner_product(&f, &f, &mu)).values[0] > -1e-12);
    }

    #[test]
    fn scalar_cmv_roundtrip_recovers_alpha() {
        for n in [4usize, 6, 8] {
            for seed in 0..4 {
                let z = Ensemble::Cmv.zipper(1, n, Flavor::Finite, seed).unwrap();
                let mu = spectral_measure_finite(&z, None).unwrap();
                let rec = zipper_from_measure(&mu, &identity(1), n + 1).unwrap();
                let data = &rec.gram.data;
                assert_eq!(data.last_index(), n);
                for k in 2..=n {
                    let orig = z.block(k).unwrap().alpha();
                    assert!(frobenius(&(orig - data.block(k).unwrap().alpha())) < 1e-6, "n={n} k={k}");
                    assert!(unitarity_defect(&data.u[k - 2]) < 1e-7);
                    assert!(unitarity_defect(&data.v[k - 2]) < 1e-7);
                }
                assert!(rec.gram.recursion_residual < 1e-7);
                assert!(rec.gram.orthonormality_defect < 1e-8);
                let rebuilt = rec.finite().unwrap();
                let w = c64(0.3, -0.2);
                assert!(close(&f_matrix(&rebuilt, w, rebuilt.boundary_v().unwrap()).unwrap(), &caratheodory(&mu, w).unwrap(), 1e-6));
            }
        }
    }

    #[test]
    fn gauged_roundtrip_matches_f() {
        let mut rng = rng_from_seed(3);
        for seed in 0..4 {
            let z = Ensemble::HaarGauge.zipper(2, 6, Flavor::Finite, seed).unwrap();
            let mu = spectral_measure_finite(&z, None).unwrap();
            let rec = zipper_from_measure(&mu, z.boundary_u().unwrap(), 7).unwrap();
            assert!(rec.gram.recursion_residual < 1e-7);
            for k in 0..rec.gram.data.alpha.len() {
                let (a, r) = (&rec.gram.data.alpha[k], &rec.gram.data.rho[k]);
                let rt = &rec.gram.data.rho_tilde[k];
                assert!(close(&(r * r.adjoint() + a * a.adjoint()), &identity(2), 1e-8));
                assert!(close(&(rt * rt.adjoint() + a.adjoint() * a), &identity(2), 1e-8));
            }
            let rebuilt = rec.finite().unwrap();
            for _ in 0..10 {
                let w = random_point_in_disc(0.0, 0.9, &mut rng);
                let a = f_matrix(&rebuilt, w, rebuilt.boundary_v().unwrap()).unwrap();
                assert!(close(&a, &caratheodory(&mu, w).unwrap(), 1e-6));
            }
        }
    }

    #[test]
    fn leading_structure_of_polynomials() {
        let z = Ensemble::HaarGauge.zipper(2, 6, Flavor::Finite, 5).unwrap();
        let mu = spectral_measure_finite(&z, None).unwrap();
        let gs = gram_schmidt(&mu, z.boundary_u().unwrap(), 6).unwrap();
        for (i, (p, k)) in gs.phi.iter().zip(&gs.kappa).enumerate() {
            let n = i + 1;
            let support = p.support(1e-12);
            let e = exponent(n, false);
            if n % 2 == 0 {
                assert_eq!(*support.first().unwrap(), e);
            } else {
                assert_eq!(*support.last().unwrap(), e);
            }
            assert!(close(&p.coefficient(e), k, 1e-12));
            assert!(hermitian_eigen(k).values[0] > 0.0);
        }
    }

    #[test]
    fn two_symmetric_atoms_terminate_and_reproduce_f() {
        let mu = two_atoms();
        let rec = zipper_from_measure(&mu, &identity(1), 10).unwrap();
        assert_eq!(rec.gram.stop, StopReason::DegenerateGram { step: 3 });
        let w = c64(0.3, 0.0);
        let expect = c64(0.0, (1.0 + 0.09) / (1.0 - 0.09));
        assert!((caratheodory(&mu, w).unwrap()[(0, 0)] - expect).norm() < 1e-12);
        let rebuilt = rec.finite().unwrap();
        let f = f_matrix(&rebuilt, w, rebuilt.boundary_v().unwrap()).unwrap();
        assert!((f[(0, 0)] - expect).norm() < 1e-10);
    }

    #[test]
    fn block_diagonal_measure_gives_block_diagonal_alpha() {
        let a = Ensemble::Cmv.zipper(1, 6, Flavor::Finite, 8).unwrap();
        let b = Ensemble::Cmv.zipper(1, 6, Flavor::Finite, 9).unwrap();
        let mu = spectral_measure_finite(&direct_sum(&a, &b).unwrap(), None).unwrap();
        let gs = gram_schmidt(&mu, &identity(2), 7).unwrap();
        assert_eq!(gs.data.last_index(), 6);
        for k in 0..gs.data.alpha.len() {
            let block = gs.data.block(k + 2).unwrap();
            let alpha = block.alpha();
            assert!(alpha[(0, 1)].norm() < 1e-7 && alpha[(1, 0)].norm() < 1e-7);
            assert!((alpha[(0, 0)] - a.block(k + 2).unwrap().alpha()[(0, 0)]).norm() < 1e-6);
            assert!((alpha[(1, 1)] - b.block(k + 2).unwrap().alpha()[(0, 0)]).norm() < 1e-6);
        }
    }

    #[test]
    fn quadrature_of_uniform_density_is_normalized() {
        let mu = MatrixMeasure::quadrature(2, 64, |_| identity(2)).unwrap();
        assert!(close(&mu.total_mass(), &identity(2), 1e-12));
        // Lebesgue measure: F ≡ i.
        assert!(close(&caratheodory(&mu, c64(0.4, 0.1)).unwrap(), &(identity(2) * I), 1e-10));
        let gs = gram_schmidt(&mu, &identity(2), 8).unwrap();
        assert!(gs.data.alpha.iter().all(|a| op_norm(a) < 1e-10));
    }
}
