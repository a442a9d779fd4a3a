//! Static attitude determination from weighted direction observations.
//!
//! Given unit reference directions `eⁱ`, measured body directions `b̃ⁱ` and
//! weights `wᵢ`, the attitude minimizing `½ Σ wᵢ ‖eⁱ − Ĉ b̃ⁱ‖²` over SO(3) is
//! `Ĉ = S·L` where `L = E·W·B̃ᵀ = Q·R` and `S = Q·√((R·Rᵀ)⁻¹)·Qᵀ`.

use alloc::vec::Vec;

use crate::linalg::SymmetricEigen;
use crate::math;
use crate::so3::{qr_positive, RotationMatrix};
use crate::{Error, Mat3, Result, Vec3};

const UNIT_TOL: f64 = 1e-12;
const PARALLEL_TOL: f64 = 1e-9;
/// Smallest admissible ratio of singular values of `L`.
const PROFILE_CONDITIONING: f64 = 1e-8;

fn check_unit(v: &Vec3) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::DegenerateGeometry { reason: "direction is not a unit vector" });
    }
    Ok(())
}

/// Known reference directions and their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    directions: Vec<Vec3>,
    weights: Vec<f64>,
}

impl DirectionSet {
    /// Requires `m ≥ 2` unit directions, no two parallel, and positive weights.
    pub fn new(directions: Vec<Vec3>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != directions.len() {
            return Err(Error::DimensionMismatch { expected: directions.len(), found: weights.len() });
        }
        if directions.len() < 2 {
            return Err(Error::DegenerateGeometry { reason: "at least two directions are required" });
        }
        for d in &directions {
            check_unit(d)?;
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::DegenerateGeometry { reason: "weights must be positive" });
        }
        for (i, a) in directions.iter().enumerate() {
            for b in &directions[i + 1..] {
                if a.dot(b).abs() >= 1.0 - PARALLEL_TOL {
                    return Err(Error::DegenerateGeometry { reason: "two reference directions are parallel" });
                }
            }
        }
        Ok(Self { directions, weights })
    }

    pub fn with_unit_weights(directions: Vec<Vec3>) -> Result<Self> {
        let weights = alloc::vec![1.0; directions.len()];
        Self::new(directions, weights)
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same directions with every weight multiplied by `alpha > 0`.
    pub fn scaled_weights(&self, alpha: f64) -> Result<Self> {
        Self::new(self.directions.clone(), self.weights.iter().map(|w| w * alpha).collect())
    }
}

/// Measured body-frame directions `b̃ⁱ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyObservations {
    directions: Vec<Vec3>,
}

impl BodyObservations {
    pub fn new(directions: Vec<Vec3>) -> Result<Self> {
        for d in &directions {
            check_unit(d)?;
        }
        Ok(Self { directions })
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// The attitude profile matrix `L = E·W·B̃ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeProfile(pub Mat3);

impl AttitudeProfile {
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }
}

fn check_counts(dirs: &DirectionSet, obs: &BodyObservations) -> Result<()> {
    if dirs.len() != obs.len() {
        return Err(Error::DimensionMismatch { expected: dirs.len(), found: obs.len() });
    }
    Ok(())
}

/// `½ Σ wᵢ ‖eⁱ − Ĉ b̃ⁱ‖²`.
pub fn wahba_cost(c_hat: &RotationMatrix, dirs: &DirectionSet, obs: &BodyObservations) -> Result<f64> {
    check_counts(dirs, obs)?;
    let c = c_hat.matrix();
    Ok(dirs
        .directions
        .iter()
        .zip(&obs.directions)
        .zip(&dirs.weights)
        .map(|((e, b), w)| 0.5 * w * (e - c * b).norm_squared())
        .sum())
}

pub fn build_profile(dirs: &DirectionSet, obs: &BodyObservations) -> Result<AttitudeProfile> {
    check_counts(dirs, obs)?;
    let l = dirs
        .directions
        .iter()
        .zip(&obs.directions)
        .zip(&dirs.weights)
        .fold(Mat3::zeros(), |acc, ((e, b), w)| acc + e * b.transpose() * *w);
    Ok(AttitudeProfile(l))
}

/// Global minimizer of the Wahba cost over SO(3).
///
/// `S·L` is the orthogonal polar factor of `L`; it is proper exactly when
/// `det L > 0`, which holds whenever the measurement errors are small relative
/// to the direction geometry. For `det L < 0` the factor is reflected through
/// the least-singular left direction of `L`, which is the SO(3) minimizer.
pub fn solve_wahba(profile: &AttitudeProfile) -> Result<RotationMatrix> {
    let l = profile.matrix();
    let singular = SymmetricEigen::new(&(l.transpose() * l));
    if singular.max() <= 0.0 || math::sqrt(singular.min().max(0.0) / singular.max()) < PROFILE_CONDITIONING {
        return Err(Error::DegenerateGeometry { reason: "direction observations are nearly coplanar" });
    }

    let qr = qr_positive(l)?;
    let q = qr.q.matrix();
    let rrt = SymmetricEigen::new(&(qr.r * qr.r.transpose()));
    let inv_sqrt = rrt.map(|lambda| 1.0 / math::sqrt(lambda));
    let s = q * inv_sqrt * q.transpose();
    let mut c_hat = s * l;

    if l.determinant() < 0.0 {
        let u: Vec3 = q * rrt.vectors.column(0);
        c_hat = (Mat3::identity() - u * u.transpose() * 2.0) * c_hat;
    }
    RotationMatrix::new(c_hat)
}

/// `LᵀĈ − ĈᵀL`; zero at a stationary point of the Wahba cost.
pub fn optimality_residual(c_hat: &RotationMatrix, profile: &AttitudeProfile) -> Mat3 {
    let l = profile.matrix();
    let c = c_hat.matrix();
    l.transpose() * c - c.transpose() * l
}

/// Turns a two-direction problem into a three-direction one by appending the
/// normalized cross products `e¹ × e²` and `b̃¹ × b̃²`, weighted `min(w₁, w₂)`.
pub fn augment_pair(dirs: &DirectionSet, obs: &BodyObservations) -> Result<(DirectionSet, BodyObservations)> {
    check_counts(dirs, obs)?;
    if dirs.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: dirs.len() });
    }
    let unit_cross = |a: &Vec3, b: &Vec3| -> Result<Vec3> {
        if a.dot(b).abs() >= 1.0 - PARALLEL_TOL {
            return Err(Error::DegenerateGeometry { reason: "the two directions are parallel" });
        }
        Ok(a.cross(b).normalize())
    };
    let e3 = unit_cross(&dirs.directions[0], &dirs.directions[1])?;
    let b3 = unit_cross(&obs.directions[0], &obs.directions[1])?;

    let mut directions = dirs.directions.clone();
    directions.push(e3);
    let mut weights = dirs.weights.clone();
    weights.push(dirs.weights[0].min(dirs.weights[1]));
    let mut measured = obs.directions.clone();
    measured.push(b3);
    Ok((DirectionSet::new(directions, weights)?, BodyObservations::new(measured)?))
}
