//! Deterministic attitude and angular-velocity estimation for a rigid body on SO(3).
//!
//! The estimator keeps an uncertainty ellipsoid on the tangent bundle TSO(3): a
//! center `(C, ω)` plus a 6×6 SPD matrix `P` bounding the deviation
//! `[ζ; δω]` with `C = Ĉ·exp(S(ζ))`, `ω = ω̂ + δω`. Each measurement instant runs
//!
//! 1. a flow update ([`filter::flow_update`]) propagating the center with a Lie
//!    group variational integrator and the matrix with its linearization,
//! 2. a measurement update ([`filter::measurement_update`]) built from a QR-based
//!    solution of Wahba's problem and bounded direction/gyro errors,
//! 3. a fusion ([`filter::fuse`]) computing the minimal-trace ellipsoid
//!    containing the intersection of the two.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dynamics;
pub mod ellipsoid;
mod error;
pub mod filter;
pub mod linalg;
mod math;
pub mod so3;
pub mod wahba;

pub use error::{Error, Result};
pub use linalg::SpdMatrix;
pub use so3::RotationMatrix;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec6 = nalgebra::Vector6<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Mat6 = nalgebra::Matrix6<f64>;
