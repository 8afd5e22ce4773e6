use super::{hermitian_eigen, min_singular, quarters, CMatrix, I};
use crate::error::{Error, Result};

/// Left action 𝒯·Z = (AZ + B)(CZ + D)^{-1}.
pub fn mobius(t: &CMatrix, z: &CMatrix, tol: f64) -> Result<CMatrix> {
    let [a, b, c, d] = quarters(t);
    let den = c * z + d;
    let s = min_singular(&den);
    if s <= tol {
        return Err(Error::SingularDenominator(s));
    }
    let num = a * z + b;
    // X = num · den^{-1}  ⇔  den* X* = num*
    let xt = den
        .adjoint()
        .lu()
        .solve(&num.adjoint())
        .ok_or(Error::SingularDenominator(s))?;
    Ok(xt.adjoint())
}

/// Right action W:𝒯 = (WC − A)^{-1}(B − WD).
pub fn mobius_inverse(w: &CMatrix, t: &CMatrix, tol: f64) -> Result<CMatrix> {
    let [a, b, c, d] = quarters(t);
    let den = w * c - a;
    let s = min_singular(&den);
    if s <= tol {
        return Err(Error::SingularDenominator(s));
    }
    let num = b - w * d;
    den.lu().solve(&num).ok_or(Error::SingularDenominator(s))
}

/// Z*Z < 1 − tol (strict) or Z*Z ≤ 1 + tol (closed), via the largest eigenvalue.
pub fn in_siegel_disc(z: &CMatrix, strict: bool, tol: f64) -> bool {
    let top = hermitian_eigen(&(z.adjoint() * z))
        .values
        .last()
        .copied()
        .unwrap_or(0.0);
    if strict {
        top < 1.0 - tol
    } else {
        top <= 1.0 + tol
    }
}

/// Im Z = i(Z* − Z) positive definite beyond `tol`.
pub fn in_upper_half_plane(z: &CMatrix, tol: f64) -> bool {
    let im = (z.adjoint() - z) * I;
    hermitian_eigen(&im).values.first().copied().unwrap_or(0.0) > tol
}
