use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("matrix is singular (smallest singular value {0:.3e})")]
    Singular(f64),
    #[error("Möbius denominator is singular (smallest singular value {0:.3e})")]
    SingularDenominator(f64),
    #[error("alpha is not a strict contraction (norm {0:.6})")]
    NotContraction(f64),
    #[error("matrix is not unitary (defect {0:.3e})")]
    NotUnitary(f64),
    #[error("scattering block is not effective: beta has smallest singular value {0:.3e}")]
    NotInUInv(f64),
    #[error("beta block is singular (smallest singular value {0:.3e})")]
    SingularBeta(f64),
    #[error("matrix does not conserve the L-form (defect {0:.3e})")]
    NotLorentz(f64),
    #[error("lower-right block D is singular (smallest singular value {0:.3e})")]
    SingularD(f64),
    #[error("site count N = {0} must be even and at least 2")]
    OddN(usize),
    #[error("missing scattering block S_{0}")]
    MissingBlock(usize),
    #[error("periodic zipper has no S_1 block")]
    MissingS1,
    #[error("operation needs a {expected} zipper, got {found}")]
    WrongFlavor {
        expected: &'static str,
        found: &'static str,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("problem size {size} exceeds dense cap {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("spectral parameter z = 0 is not allowed here")]
    ZeroZ,
    #[error("spectral parameter z = {0} lies outside the admissible region")]
    OutsideDisc(Complex64),
    #[error("solution frame became degenerate at site {0}")]
    DegenerateFrame(usize),
    #[error("numerical breakdown contradicting a proven invertibility: {0}")]
    ImpossibleByTheory(String),
    #[error("singular block in Weyl disc construction: {0}")]
    SingularBlock(String),
    #[error("value is not on the Weyl surface (unitarity defect {0:.3e})")]
    NotOnSurface(f64),
    #[error("Gram matrix degenerate at step {step} (smallest eigenvalue {eigenvalue:.3e})")]
    DegenerateGram { step: usize, eigenvalue: f64 },
    #[error("phi block degenerate at theta = {0}")]
    DegeneratePhiBlock(f64),
    #[error("found {found} eigenvalue crossings, expected {expected}")]
    CrossingCountMismatch { found: usize, expected: usize },
    #[error("checkerboard operands have different sizes")]
    SizeMismatch,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
}

impl Error {
    /// True for failures of floating-point computations, as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::SingularDenominator(_)
                | Error::DegenerateFrame(_)
                | Error::ImpossibleByTheory(_)
                | Error::SingularBlock(_)
                | Error::NotOnSurface(_)
                | Error::DegenerateGram { .. }
                | Error::DegeneratePhiBlock(_)
                | Error::CrossingCountMismatch { .. }
        )
    }
}
