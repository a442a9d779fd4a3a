//! Uncertainty ellipsoids `{x : (x − x̂)ᵀ·P⁻¹·(x − x̂) ≤ 1}` in Rⁿ and on TSO(3).
//!
//! An ellipsoid on TSO(3) is the image of one in R⁶ under
//! `(ζ, δω) ↦ (Ĉ·exp(S(ζ)), ω̂ + δω)`. The size of an ellipsoid is `tr(P)`,
//! the sum of the squared semi-principal axes.

use alloc::vec::Vec;

use nalgebra::{Cholesky, SMatrix, SVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::AttitudeState;
use crate::linalg::{symmetrize, Spd6, SpdMatrix, SymmetricEigen};
use crate::math;
use crate::so3::{exp_so3, log_so3};
use crate::{Error, Result, Vec3, Vec6};

/// Slack on the unit level set when testing membership.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-9;

/// Summands of a vector sum whose trace is at most this fraction of the
/// largest trace are treated as points.
const NEGLIGIBLE_TRACE: f64 = 1e-14;

/// Values of `β(q)` at or below this exclude `q` from the fusion search.
const BETA_FLOOR: f64 = 1e-12;

const Q_SCAN_POINTS: usize = 50;
const LOG_Q_MIN: f64 = -6.0;
const LOG_Q_MAX: f64 = 6.0;

/// Ellipsoid in Rⁿ with SPD shape matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidRn<const N: usize> {
    pub center: SVector<f64, N>,
    pub p: SpdMatrix<N>,
}

impl<const N: usize> EllipsoidRn<N> {
    pub fn new(center: SVector<f64, N>, p: SpdMatrix<N>) -> Self {
        Self { center, p }
    }

    pub fn centered(p: SpdMatrix<N>) -> Self {
        Self { center: SVector::zeros(), p }
    }

    /// `(x − x̂)ᵀ·P⁻¹·(x − x̂)`.
    pub fn quadratic_form(&self, x: &SVector<f64, N>) -> f64 {
        self.p.inverse_quadratic_form(&(x - self.center))
    }

    pub fn contains(&self, x: &SVector<f64, N>) -> bool {
        self.quadratic_form(x) <= 1.0 + MEMBERSHIP_TOLERANCE
    }

    pub fn size(&self) -> f64 {
        self.p.trace()
    }

    /// `count` points distributed uniformly in the ellipsoid, reproducible from `seed`.
    pub fn sample_in(&self, count: usize, seed: u64) -> Vec<SVector<f64, N>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample_uniform(&mut rng)).collect()
    }

    /// `count` points distributed on the boundary, reproducible from `seed`.
    pub fn sample_on_boundary(&self, count: usize, seed: u64) -> Vec<SVector<f64, N>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample_boundary(&mut rng)).collect()
    }

    pub fn sample_uniform<R: RngCore>(&self, rng: &mut R) -> SVector<f64, N> {
        self.affine_image(&uniform_in_ball(rng))
    }

    pub fn sample_boundary<R: RngCore>(&self, rng: &mut R) -> SVector<f64, N> {
        self.affine_image(&uniform_on_sphere(rng))
    }

    /// `x̂ + P^{1/2}·u`.
    pub fn affine_image(&self, u: &SVector<f64, N>) -> SVector<f64, N> {
        self.center + psd_sqrt(self.p.matrix()) * u
    }
}

fn psd_sqrt<const N: usize>(p: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    SymmetricEigen::new(p).map(|l| math::sqrt(l.max(0.0)))
}

fn unit_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Box–Muller standard normal.
fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    let u1 = 1.0 - unit_f64(rng);
    let u2 = unit_f64(rng);
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(core::f64::consts::TAU * u2)
}

/// Uniform point on the unit sphere in Rⁿ.
pub fn uniform_on_sphere<R: RngCore, const N: usize>(rng: &mut R) -> SVector<f64, N> {
    loop {
        let g = SVector::<f64, N>::from_fn(|_, _| standard_normal(rng));
        let n = g.norm();
        if n > 1e-12 {
            return g / n;
        }
    }
}

/// Uniform point in the closed unit ball in Rⁿ.
pub fn uniform_in_ball<R: RngCore, const N: usize>(rng: &mut R) -> SVector<f64, N> {
    let direction = uniform_on_sphere::<R, N>(rng);
    direction * math::powf(unit_f64(rng), 1.0 / N as f64)
}

/// Minimal-trace ellipsoid containing the vector sum of zero-centered ellipsoids:
/// `(Σᵢ √tr Pᵢ)·(Σᵢ Pᵢ/√tr Pᵢ)`.
///
/// Summands may be singular (positive semidefinite); those with negligible
/// trace relative to the largest are dropped.
pub fn minimal_sum<const N: usize>(terms: &[SMatrix<f64, N, N>]) -> Result<SMatrix<f64, N, N>> {
    if terms.iter().any(|t| t.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite);
    }
    let largest = terms.iter().map(|t| t.trace()).fold(0.0, f64::max);
    if largest <= 0.0 {
        return Err(Error::EmptySum);
    }
    let mut radius_sum = 0.0;
    let mut weighted = SMatrix::<f64, N, N>::zeros();
    for t in terms {
        let tr = t.trace();
        if tr <= NEGLIGIBLE_TRACE * largest {
            continue;
        }
        let r = math::sqrt(tr);
        radius_sum += r;
        weighted += t / r;
    }
    Ok(symmetrize(&(weighted * radius_sum)))
}

/// Deviation `[ζ; δω]` of a state from an ellipsoid center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDeviation {
    pub zeta: Vec3,
    pub delta_omega: Vec3,
}

impl StateDeviation {
    pub fn from_vector(x: &Vec6) -> Self {
        Self { zeta: x.fixed_rows::<3>(0).into(), delta_omega: x.fixed_rows::<3>(3).into() }
    }

    pub fn to_vector(&self) -> Vec6 {
        let mut x = Vec6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.zeta);
        x.fixed_rows_mut::<3>(3).copy_from(&self.delta_omega);
        x
    }

    /// Deviation of `state` from `center`: `ζ = log(ĈᵀC)`, `δω = ω − ω̂`.
    pub fn between(center: &AttitudeState, state: &AttitudeState) -> Self {
        Self { zeta: log_so3(&(center.c.transpose() * state.c)), delta_omega: state.omega - center.omega }
    }

    /// `(Ĉ·exp(S(ζ)), ω̂ + δω)`.
    pub fn apply_to(&self, center: &AttitudeState) -> AttitudeState {
        AttitudeState { c: center.c * exp_so3(&self.zeta), omega: center.omega + self.delta_omega }
    }
}

/// `ζ̂ᵐᶠ = log((Ĉᵐ)ᵀĈᶠ)`, `δω̂ᵐᶠ = ω̂ᶠ − ω̂ᵐ`.
pub fn center_difference(measured_center: &AttitudeState, flow_center: &AttitudeState) -> StateDeviation {
    StateDeviation::between(measured_center, flow_center)
}

/// Uncertainty ellipsoid on TSO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEllipsoid {
    pub center: AttitudeState,
    pub p: Spd6,
}

impl StateEllipsoid {
    pub fn new(center: AttitudeState, p: Spd6) -> Self {
        Self { center, p }
    }

    pub fn size(&self) -> f64 {
        self.p.trace()
    }

    pub fn quadratic_form(&self, state: &AttitudeState) -> f64 {
        self.p.inverse_quadratic_form(&StateDeviation::between(&self.center, state).to_vector())
    }

    pub fn contains(&self, state: &AttitudeState) -> bool {
        self.quadratic_form(state) <= 1.0 + MEMBERSHIP_TOLERANCE
    }

    /// Local-coordinate ellipsoid in R⁶ centered at zero.
    pub fn local(&self) -> EllipsoidRn<6> {
        EllipsoidRn::centered(self.p)
    }
}

pub fn state_membership(se: &StateEllipsoid, s: &AttitudeState) -> bool {
    se.contains(s)
}

/// Result of [`fuse_intersection`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fusion<const N: usize> {
    pub center: SVector<f64, N>,
    pub p: SpdMatrix<N>,
    /// Minimizing weight; `0` and `∞` denote the two input ellipsoids themselves.
    pub q: f64,
}

/// Evaluation of the fused family at a fixed weight `q > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionCandidate<const N: usize> {
    pub center: SVector<f64, N>,
    pub p: SMatrix<f64, N, N>,
    pub beta: f64,
}

/// Precomputed inverses for evaluating the fused ellipsoid at many `q`.
#[derive(Debug, Clone)]
pub struct FusionProblem<const N: usize> {
    pm: SpdMatrix<N>,
    pf: SpdMatrix<N>,
    pm_inv: SMatrix<f64, N, N>,
    pf_inv: SMatrix<f64, N, N>,
    x: SVector<f64, N>,
}

impl<const N: usize> FusionProblem<N> {
    /// Intersection of `E(0, Pm)` and `E(x, Pf)`.
    pub fn new(pm: &SpdMatrix<N>, x: &SVector<f64, N>, pf: &SpdMatrix<N>) -> Self {
        Self { pm: *pm, pf: *pf, pm_inv: pm.inverse().into_inner(), pf_inv: pf.inverse().into_inner(), x: *x }
    }

    /// With `S = Pm + Pf/q`: `β = 1 + q − xᵀS⁻¹x`, center `Pm·S⁻¹·x` and
    /// `P = β·(Pm⁻¹ + q·Pf⁻¹)⁻¹ = β·(I − Pm·S⁻¹)·Pm`. `None` if `q` is not admissible.
    pub fn evaluate(&self, q: f64) -> Option<FusionCandidate<N>> {
        let s = Cholesky::new(symmetrize(&(self.pm.matrix() + self.pf.matrix() / q)))?;
        let info = Cholesky::new(symmetrize(&(self.pm_inv + self.pf_inv * q)))?;
        let s_inv_x = s.solve(&self.x);
        let beta = 1.0 + q - self.x.dot(&s_inv_x);
        if beta.is_nan() || beta <= BETA_FLOOR {
            return None;
        }
        let p = symmetrize(&(info.inverse() * beta));
        Some(FusionCandidate { center: self.pm.matrix() * s_inv_x, p, beta })
    }

    /// `β(q)`; a negative value certifies that the intersection is empty,
    /// since the fused set at `q` contains the intersection yet is empty itself.
    pub fn beta(&self, q: f64) -> Option<f64> {
        let s = Cholesky::new(symmetrize(&(self.pm.matrix() + self.pf.matrix() / q)))?;
        Some(1.0 + q - self.x.dot(&s.solve(&self.x)))
    }

    /// `tr P(q)`, or `+∞` when `q` is not admissible.
    pub fn trace_at(&self, q: f64) -> f64 {
        self.evaluate(q).map_or(f64::INFINITY, |c| c.p.trace())
    }
}

/// Minimal-trace ellipsoid containing `E(0, Pm) ∩ E(x, Pf)`.
///
/// The weight `q` is searched on `log₁₀ q ∈ [−6, 6]`: a coarse scan brackets the
/// minimum and golden-section search refines it. The limits `q → 0` and
/// `q → ∞`, which return the input ellipsoids themselves, are also candidates.
/// Fails with [`Error::EmptyIntersection`] when some scanned `q` certifies that
/// the ellipsoids are disjoint or when no scanned `q` is admissible.
pub fn fuse_intersection<const N: usize>(
    pm: &SpdMatrix<N>,
    x: &SVector<f64, N>,
    pf: &SpdMatrix<N>,
) -> Result<Fusion<N>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let problem = FusionProblem::new(pm, x, pf);
    let objective = |log_q: f64| problem.trace_at(math::powf(10.0, log_q));

    let step = (LOG_Q_MAX - LOG_Q_MIN) / (Q_SCAN_POINTS - 1) as f64;
    let grid = |i: usize| LOG_Q_MIN + step * i as f64;
    if (0..Q_SCAN_POINTS).any(|i| problem.beta(math::powf(10.0, grid(i))).is_some_and(|b| b < -BETA_FLOOR)) {
        return Err(Error::EmptyIntersection);
    }
    let scan: Vec<f64> = (0..Q_SCAN_POINTS).map(|i| objective(grid(i))).collect();
    let (best_index, best_value) =
        scan.iter().copied().enumerate().fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });

    let mut best_log_q = grid(best_index);
    let mut best = best_value;
    if best.is_finite() {
        let (mut lo, mut hi) = (grid(best_index.saturating_sub(1)), grid((best_index + 1).min(Q_SCAN_POINTS - 1)));
        let inv_phi = (math::sqrt(5.0) - 1.0) / 2.0;
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let (mut f1, mut f2) = (objective(x1), objective(x2));
        while hi - lo > 1e-10 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = objective(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = objective(x2);
            }
        }
        for (lq, v) in [(x1, f1), (x2, f2)] {
            if v < best {
                best = v;
                best_log_q = lq;
            }
        }
    }

    // Every q is admissible when the intersection is nonempty.
    if !best.is_finite() {
        return Err(Error::EmptyIntersection);
    }
    // The q → 0 and q → ∞ limits.
    let mut choice = None;
    if pm.trace() < best {
        best = pm.trace();
        choice = Some(Fusion { center: SVector::zeros(), p: *pm, q: 0.0 });
    }
    if pf.trace() < best {
        choice = Some(Fusion { center: *x, p: *pf, q: f64::INFINITY });
    }
    if let Some(endpoint) = choice {
        return Ok(endpoint);
    }
    let q = math::powf(10.0, best_log_q);
    let candidate = problem.evaluate(q).ok_or(Error::EmptyIntersection)?;
    Ok(Fusion { center: candidate.center, p: SpdMatrix::from_symmetrized(candidate.p)?, q })
}
