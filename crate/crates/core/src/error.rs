use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure modes of the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A matrix passed as skew-symmetric has a symmetric part above tolerance.
    NotSkew { symmetric_part: f64 },
    /// A matrix failed the rotation invariants (`‖CᵀC − I‖_F ≤ 1e-9`, `det C > 0`).
    NotRotation { orthogonality_error: f64, determinant: f64 },
    /// A matrix is not symmetric positive definite (or is too ill-conditioned).
    NotSpd { reason: &'static str },
    /// The direction measurements do not determine the attitude.
    DegenerateGeometry { reason: &'static str },
    /// The linear map from direction errors to attitude error is singular.
    DegenerateErrorPropagation,
    /// The implicit integrator step is too large for the principal branch.
    StepTooLarge { norm: f64 },
    /// Newton iteration on the implicit step failed to converge.
    NewtonDiverged { iterations: usize, residual: f64 },
    /// The two ellipsoids being fused have no admissible intersection bound.
    EmptyIntersection,
    /// No non-degenerate ellipsoid was supplied to a vector sum.
    EmptySum,
    /// Dimensions or counts of paired inputs disagree.
    DimensionMismatch { expected: usize, found: usize },
    /// Inertia or step-size parameters are invalid.
    InvalidInertia { reason: &'static str },
    /// A potential's analytic gradient disagrees with finite differences.
    GradientMismatch { relative_error: f64 },
    /// A non-finite value was supplied or produced.
    NonFinite,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotSkew { symmetric_part } => {
                write!(f, "matrix is not skew-symmetric (symmetric part {symmetric_part:e})")
            }
            Error::NotRotation { orthogonality_error, determinant } => write!(
                f,
                "matrix is not a rotation (‖CᵀC − I‖ = {orthogonality_error:e}, det = {determinant})"
            ),
            Error::NotSpd { reason } => write!(f, "matrix is not symmetric positive definite: {reason}"),
            Error::DegenerateGeometry { reason } => write!(f, "degenerate direction geometry: {reason}"),
            Error::DegenerateErrorPropagation => f.write_str("degenerate geometry for error propagation"),
            Error::StepTooLarge { norm } => {
                write!(f, "integrator step too large: ‖J⁻¹·rhs‖ = {norm} ≥ π/2")
            }
            Error::NewtonDiverged { iterations, residual } => write!(
                f,
                "implicit step did not converge after {iterations} Newton iterations (residual {residual:e})"
            ),
            Error::EmptyIntersection => f.write_str("empty intersection of uncertainty ellipsoids"),
            Error::EmptySum => f.write_str("vector sum of ellipsoids has no non-degenerate term"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidInertia { reason } => write!(f, "invalid inertia parameters: {reason}"),
            Error::GradientMismatch { relative_error } => write!(
                f,
                "potential gradient disagrees with finite differences (relative error {relative_error:e})"
            ),
            Error::NonFinite => f.write_str("non-finite value"),
        }
    }
}

impl core::error::Error for Error {}
