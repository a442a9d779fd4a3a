//! Rotation-group primitives: the hat/vee maps, closed-form exponential and
//! logarithm, and the sign-normalized 3×3 QR factorization.

use core::f64::consts::PI;
use core::ops::Mul;

use crate::math;
use crate::{Error, Mat3, Result, Vec3};

/// Angles below this use Taylor expansions in `exp_so3`/`log_so3`.
const SMALL_ANGLE: f64 = 1e-6;
/// Above `π − NEAR_PI` the logarithm takes its axis from the symmetric part.
const NEAR_PI: f64 = 1e-3;
const ORTHOGONALITY_TOL: f64 = 1e-9;

/// A 3×3 proper orthogonal matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Validates `‖CᵀC − I‖_F ≤ 1e-9` and `det C > 0`.
    pub fn new(m: Mat3) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let orthogonality_error = (m.transpose() * m - Mat3::identity()).norm();
        let determinant = m.determinant();
        if orthogonality_error > ORTHOGONALITY_TOL || determinant <= 0.0 {
            return Err(Error::NotRotation { orthogonality_error, determinant });
        }
        Ok(Self(m))
    }

    pub fn exp(rotation_vector: &Vec3) -> Self {
        exp_so3(rotation_vector)
    }

    pub fn log(&self) -> Vec3 {
        log_so3(self)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `‖CᵀC − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).norm()
    }

    /// Geodesic distance `‖log(selfᵀ·other)‖` in radians.
    pub fn angle_to(&self, other: &RotationMatrix) -> f64 {
        log_so3(&(self.transpose() * *other)).norm()
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Skew matrix `S(v)` with `S(v)·y = v × y`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] on the skew part of `a`; rejects matrices whose symmetric
/// part exceeds `1e-9` (Frobenius).
pub fn vee(a: &Mat3) -> Result<Vec3> {
    let symmetric_part = ((a + a.transpose()) * 0.5).norm();
    if symmetric_part > 1e-9 {
        return Err(Error::NotSkew { symmetric_part });
    }
    Ok(vee_unchecked(a))
}

/// Vector of the skew part `(A − Aᵀ)/2`, without checking the symmetric part.
pub(crate) fn vee_unchecked(a: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (a[(2, 1)] - a[(1, 2)]),
        0.5 * (a[(0, 2)] - a[(2, 0)]),
        0.5 * (a[(1, 0)] - a[(0, 1)]),
    )
}

/// `sin θ/θ` and `(1 − cos θ)/θ²`.
pub(crate) fn rodrigues_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        (math::sin(theta) / theta, (1.0 - math::cos(theta)) / (theta * theta))
    }
}

/// Rodrigues' formula `exp(S(f)) = I + a·S(f) + b·S(f)²`.
pub fn exp_so3(f: &Vec3) -> RotationMatrix {
    let (a, b) = rodrigues_coefficients(f.norm());
    let k = hat(f);
    RotationMatrix(Mat3::identity() + k * a + k * k * b)
}

/// Principal logarithm, `‖result‖ ≤ π`.
///
/// At exactly angle π the axis sign is ambiguous; the axis whose first nonzero
/// component is positive is returned.
pub fn log_so3(c: &RotationMatrix) -> Vec3 {
    let m = c.matrix();
    let s = vee_unchecked(m);
    let sin_theta = s.norm();
    let cos_theta = 0.5 * (m.trace() - 1.0);
    let theta = math::atan2(sin_theta, cos_theta);

    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        return s * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0);
    }
    if theta < PI - NEAR_PI {
        return s * (theta / sin_theta);
    }

    // (C + Cᵀ)/2 = cos θ·I + (1 − cos θ)·aaᵀ; take the best-conditioned column.
    let sym = (m + m.transpose()) * 0.5;
    let outer = (sym - Mat3::identity() * cos_theta) / (1.0 - cos_theta);
    let d = outer.diagonal();
    let j = if d.x >= d.y && d.x >= d.z {
        0
    } else if d.y >= d.z {
        1
    } else {
        2
    };
    let mut axis: Vec3 = outer.column(j).into();
    axis /= axis.norm();

    let alignment = axis.dot(&s);
    if alignment < 0.0 {
        axis = -axis;
    } else if alignment == 0.0 || sin_theta <= 1e-15 {
        axis = positive_first_component(axis);
    }
    axis * theta
}

fn positive_first_component(v: Vec3) -> Vec3 {
    match v.iter().find(|x| x.abs() > 1e-12) {
        Some(&x) if x < 0.0 => -v,
        _ => v,
    }
}

/// Sign-normalized QR factorization of a 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositiveQr {
    pub q: RotationMatrix,
    pub r: Mat3,
}

/// `L = Q·R` with `Q ∈ SO(3)`.
///
/// The diagonal of `R` is made positive first; if `det Q = −1` afterwards
/// (which happens exactly when `det L < 0`) the last column of `Q` and the last
/// row of `R` are negated, so `R₃₃ < 0` in that case.
pub fn qr_positive(l: &Mat3) -> Result<PositiveQr> {
    if l.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = l.norm();
    if scale == 0.0 || l.determinant().abs() <= 1e-12 * scale * scale * scale {
        return Err(Error::DegenerateGeometry { reason: "profile matrix is singular" });
    }
    let qr = l.qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..3 {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(2).neg_mut();
        r.row_mut(2).neg_mut();
    }
    Ok(PositiveQr { q: RotationMatrix(q), r })
}
