//! Dense complex matrix utilities: Hermitian functions, polar factors, the
//! fixed forms 𝓛, 𝒥 and the Cayley matrix, and matrix Möbius transformations.

mod eigen;
mod mobius;

pub use eigen::{hermitian_eigen, unitary_eigen, HermitianEigen};
pub use mobius::{in_siegel_disc, in_upper_half_plane, mobius, mobius_inverse};

use crate::error::{Error, Result};
use num_complex::Complex64;

pub type CMatrix = nalgebra::DMatrix<Complex64>;

/// Default tolerance for invertibility and Hermiticity tests.
pub const DEFAULT_TOL: f64 = 1e-10;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

pub fn scalar(n: usize, s: Complex64) -> CMatrix {
    CMatrix::identity(n, n) * s
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = if m.nrows() <= m.ncols() {
        m * m.adjoint()
    } else {
        m.adjoint() * m
    };
    hermitian_eigen(&g)
        .values
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt()
}

/// Smallest singular value of a square matrix.
pub fn min_singular(m: &CMatrix) -> f64 {
    let g = m.adjoint() * m;
    hermitian_eigen(&g)
        .values
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt()
}

/// Singular values in ascending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let g = m.adjoint() * m;
    hermitian_eigen(&g)
        .values
        .into_iter()
        .map(|x| x.max(0.0).sqrt())
        .collect()
}

pub fn unitarity_defect(m: &CMatrix) -> f64 {
    op_norm(&(m.adjoint() * m - identity(m.ncols())))
}

pub fn hermitian_defect(m: &CMatrix) -> f64 {
    op_norm(&(m - m.adjoint()))
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// The `l`×`l` block at block position (`i`, `j`).
pub fn block(m: &CMatrix, i: usize, j: usize, l: usize) -> CMatrix {
    m.view((i * l, j * l), (l, l)).into_owned()
}

pub fn set_block(m: &mut CMatrix, i: usize, j: usize, b: &CMatrix) {
    let (r, c) = b.shape();
    m.view_mut((i * r, j * c), (r, c)).copy_from(b);
}

/// Assembles [[a, b], [c, d]] from four equal square blocks.
pub fn from_blocks(a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix) -> CMatrix {
    let l = a.nrows();
    let mut m = zeros(2 * l, 2 * l);
    set_block(&mut m, 0, 0, a);
    set_block(&mut m, 0, 1, b);
    set_block(&mut m, 1, 0, c);
    set_block(&mut m, 1, 1, d);
    m
}

/// The four L×L blocks of a 2L×2L matrix.
pub fn quarters(m: &CMatrix) -> [CMatrix; 4] {
    let l = m.nrows() / 2;
    [
        block(m, 0, 0, l),
        block(m, 0, 1, l),
        block(m, 1, 0, l),
        block(m, 1, 1, l),
    ]
}

/// Stacks two blocks vertically.
pub fn vstack(top: &CMatrix, bottom: &CMatrix) -> CMatrix {
    let mut m = zeros(top.nrows() + bottom.nrows(), top.ncols());
    m.view_mut((0, 0), top.shape()).copy_from(top);
    m.view_mut((top.nrows(), 0), bottom.shape())
        .copy_from(bottom);
    m
}

pub fn top_half(m: &CMatrix) -> CMatrix {
    let h = m.nrows() / 2;
    m.rows(0, h).into_owned()
}

pub fn bottom_half(m: &CMatrix) -> CMatrix {
    let h = m.nrows() / 2;
    m.rows(h, h).into_owned()
}

/// Inverse with an explicit conditioning test.
pub fn inverse(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let s = min_singular(m);
    if s <= tol {
        return Err(Error::Singular(s));
    }
    m.clone().try_inverse().ok_or(Error::Singular(s))
}

/// LU solve of `a x = b`, without a conditioning test.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    a.clone().lu().solve(b).ok_or(Error::Singular(0.0))
}

/// Applies a real function to the spectrum of the Hermitian part of `m`.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let eig = hermitian_eigen(m);
    let v = &eig.vectors;
    let d = nalgebra::DVector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|&x| Complex64::new(f(x), 0.0)),
    );
    v * CMatrix::from_diagonal(&d) * v.adjoint()
}

fn check_hermitian(m: &CMatrix, tol: f64) -> Result<()> {
    let defect = hermitian_defect(m);
    if defect > tol * op_norm(m).max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    Ok(())
}

/// Hermitian positive square root; eigenvalues in [-tol, 0) are clamped to zero.
pub fn hermitian_sqrt(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    check_hermitian(m, tol)?;
    let eig = hermitian_eigen(m);
    if let Some(&lo) = eig.values.first() {
        if lo < -tol {
            return Err(Error::NotPsd(lo));
        }
    }
    Ok(hermitian_function(m, |x| x.max(0.0).sqrt()))
}

/// Inverse Hermitian square root of a positive-definite matrix.
pub fn hermitian_inv_sqrt(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    check_hermitian(m, tol)?;
    let eig = hermitian_eigen(m);
    let lo = eig.values.first().copied().unwrap_or(1.0);
    if lo <= tol {
        return Err(Error::Singular(lo.max(0.0).sqrt()));
    }
    Ok(hermitian_function(m, |x| 1.0 / x.sqrt()))
}

/// Unitary polar factor U = (AA*)^{-1/2} A.
pub fn polar_unitary(a: &CMatrix, tol: f64) -> Result<CMatrix> {
    let s = min_singular(a);
    if s <= tol {
        return Err(Error::Singular(s));
    }
    let aa = a * a.adjoint();
    Ok(hermitian_function(&aa, |x| 1.0 / x.sqrt()) * a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// 𝓛 = diag(1, -1)
    L,
    /// 𝒥 = 𝒞*𝓛𝒞 / i
    J,
    /// The Cayley matrix 𝒞
    Cayley,
}

/// One of the fixed 2L×2L forms.
pub fn form_matrix(kind: FormKind, l: usize) -> CMatrix {
    match kind {
        FormKind::L => l_form(l),
        FormKind::J => j_form(l),
        FormKind::Cayley => cayley(l),
    }
}

pub fn l_form(l: usize) -> CMatrix {
    let id = identity(l);
    from_blocks(&id, &zeros(l, l), &zeros(l, l), &(-&id))
}

pub fn j_form(l: usize) -> CMatrix {
    let id = identity(l);
    from_blocks(&zeros(l, l), &(-&id), &id, &zeros(l, l))
}

/// 𝒞 = 2^{-1/2} [[1, -i], [1, i]].
pub fn cayley(l: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    from_blocks(
        &scalar(l, c64(s, 0.0)),
        &scalar(l, c64(0.0, -s)),
        &scalar(l, c64(s, 0.0)),
        &scalar(l, c64(0.0, s)),
    )
}

/// Compression π₁*Mπ₁ onto the first block coordinate.
pub fn upper_left(m: &CMatrix, l: usize) -> CMatrix {
    block(m, 0, 0, l)
}
