//! The three-stage set-membership estimator.
//!
//! Each measurement instant runs a flow update (propagate the prior ellipsoid
//! through `l` integrator steps), a measurement update (build an ellipsoid
//! around the Wahba attitude and the measured angular velocity from the
//! bounded measurement errors), and a fusion (minimal-trace ellipsoid
//! containing the intersection of the two). [`convergence_check`] evaluates
//! the sufficient contraction condition
//! `‖A_f‖_F < √(c·(q + λ_min)/(6·χ·(1 + q)))`, `χ = √(6 + 30·κ(Pm))`.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::Cholesky;

use crate::dynamics::{integrator_step, AttitudeState, InertiaParams, Potential};
use crate::ellipsoid::{center_difference, fuse_intersection, minimal_sum, StateDeviation, StateEllipsoid};
use crate::linalg::{diagonalize_spd_product, symmetrize, Spd3, Spd6, SpdMatrix, SymmetricEigen};
use crate::math;
use crate::so3::RotationMatrix;
use crate::wahba::{augment_pair, build_profile, solve_wahba, AttitudeProfile, BodyObservations, DirectionSet};
use crate::{Error, Mat3, Mat6, Result, Vec3, Vec6};

/// Default central-difference step for the flow linearization.
pub const LINEARIZATION_STEP: f64 = 1e-6;

/// Default contraction constant for the convergence check.
pub const DEFAULT_CONTRACTION: f64 = 0.99;

/// Relative ridge added to a singular measured uncertainty matrix.
const RIDGE: f64 = 1e-15;

/// Smallest admissible ratio of singular values of the error-propagation matrix.
const PROPAGATION_CONDITIONING: f64 = 1e-10;

/// Stage of [`filter_step`] that produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Flow,
    Measurement,
    Fusion,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Flow => "flow update",
            Stage::Measurement => "measurement update",
            Stage::Fusion => "fusion",
        })
    }
}

/// An error labeled with the filter stage and, for the flow, the integrator step.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterError {
    pub stage: Stage,
    pub step: Option<usize>,
    pub source: Error,
}

impl FilterError {
    pub fn new(stage: Stage, source: Error) -> Self {
        Self { stage, step: None, source }
    }
}

impl fmt::Display for FilterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(step) => write!(f, "{} failed at step {}: {}", self.stage, step, self.source),
            None => write!(f, "{} failed: {}", self.stage, self.source),
        }
    }
}

impl core::error::Error for FilterError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Measurements available at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBundle {
    dirs: DirectionSet,
    obs: BodyObservations,
    omega: Vec3,
    direction_bounds: Vec<Spd3>,
    omega_bound: Spd3,
}

impl MeasurementBundle {
    /// `direction_bounds[i]` bounds the rotation error `νⁱ` of the i-th
    /// direction, `omega_bound` the additive gyro error `υ`.
    pub fn new(
        dirs: DirectionSet,
        obs: BodyObservations,
        omega: Vec3,
        direction_bounds: Vec<Spd3>,
        omega_bound: Spd3,
    ) -> Result<Self> {
        if obs.len() != dirs.len() {
            return Err(Error::DimensionMismatch { expected: dirs.len(), found: obs.len() });
        }
        if direction_bounds.len() != dirs.len() {
            return Err(Error::DimensionMismatch { expected: dirs.len(), found: direction_bounds.len() });
        }
        if omega.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dirs, obs, omega, direction_bounds, omega_bound })
    }

    pub fn dirs(&self) -> &DirectionSet {
        &self.dirs
    }

    pub fn obs(&self) -> &BodyObservations {
        &self.obs
    }

    pub fn omega(&self) -> &Vec3 {
        &self.omega
    }

    pub fn direction_bounds(&self) -> &[Spd3] {
        &self.direction_bounds
    }

    pub fn omega_bound(&self) -> &Spd3 {
        &self.omega_bound
    }

    /// With two directions, appends the normalized cross products as a third.
    ///
    /// The synthetic direction is rotated from its true value by at most
    /// `(r₁ + r₂)/sin γ` to first order, where `rᵢ` are the largest semi-axes of
    /// the two direction bounds and `γ` is the angle between the measured
    /// directions; its bound is the ball of that radius.
    pub fn augmented(&self) -> Result<Self> {
        if self.dirs.len() != 2 {
            return Ok(self.clone());
        }
        let (dirs, obs) = augment_pair(&self.dirs, &self.obs)?;
        let b = self.obs.directions();
        let sin_gamma = b[0].cross(&b[1]).norm();
        let radius = self.direction_bounds.iter().map(|s| math::sqrt(s.eigen().max())).sum::<f64>() / sin_gamma;
        let mut direction_bounds = self.direction_bounds.clone();
        direction_bounds.push(SpdMatrix::scaled_identity(radius * radius)?);
        Self::new(dirs, obs, self.omega, direction_bounds, self.omega_bound)
    }
}

/// Jacobian of one integrator step in deviation coordinates about `center`,
/// by central differences with step `eps`.
///
/// A deviation `x = [ζ; δω]` denotes the state `(Ĉ·exp(S(ζ)), ω̂ + δω)`; after
/// the step, deviations are measured against the propagated center.
pub fn flow_linearization_with_step<P: Potential + ?Sized>(
    center: &AttitudeState,
    inertia: &InertiaParams,
    pot: &P,
    eps: f64,
) -> Result<Mat6> {
    let next = integrator_step(center, inertia, pot)?;
    let mut a = Mat6::zeros();
    for j in 0..6 {
        let mut dx = Vec6::zeros();
        dx[j] = eps;
        let plus = integrator_step(&StateDeviation::from_vector(&dx).apply_to(center), inertia, pot)?;
        let minus = integrator_step(&StateDeviation::from_vector(&-dx).apply_to(center), inertia, pot)?;
        let column = (StateDeviation::between(&next, &plus).to_vector() - StateDeviation::between(&next, &minus).to_vector())
            / (2.0 * eps);
        a.set_column(j, &column);
    }
    Ok(a)
}

/// [`flow_linearization_with_step`] with the default step.
pub fn flow_linearization<P: Potential + ?Sized>(center: &AttitudeState, inertia: &InertiaParams, pot: &P) -> Result<Mat6> {
    flow_linearization_with_step(center, inertia, pot, LINEARIZATION_STEP)
}

/// Predicted ellipsoid and the accumulated linearization `A_f = A_{l−1}···A_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowResult {
    pub predicted: StateEllipsoid,
    pub a_f: Mat6,
}

/// Propagates `prior` through `l ≥ 1` integrator steps.
pub fn flow_update<P: Potential + ?Sized>(
    prior: &StateEllipsoid,
    l: usize,
    inertia: &InertiaParams,
    pot: &P,
) -> core::result::Result<FlowResult, FilterError> {
    if l == 0 {
        return Err(FilterError::new(Stage::Flow, Error::DimensionMismatch { expected: 1, found: 0 }));
    }
    let mut center = prior.center;
    let mut a_f = Mat6::identity();
    for step in 0..l {
        let at_step = |source| FilterError { stage: Stage::Flow, step: Some(step), source };
        a_f = flow_linearization(&center, inertia, pot).map_err(at_step)? * a_f;
        center = integrator_step(&center, inertia, pot).map_err(at_step)?;
    }
    let p = SpdMatrix::from_symmetrized(a_f * prior.p.matrix() * a_f.transpose())
        .map_err(|e| FilterError::new(Stage::Flow, e))?;
    Ok(FlowResult { predicted: StateEllipsoid::new(center, p), a_f })
}

/// Matrices `Aⁱ` with `ζ ≈ Σᵢ Aⁱ·νⁱ`, the first-order attitude error of the
/// Wahba solution caused by direction errors `νⁱ`:
/// `Aⁱ = −K⁻¹·wᵢ·(tr(Xᵢ)·I − Xᵢ)`, `Xᵢ = b̃ⁱ(eⁱ)ᵀĈ`, `K = tr(ĈᵀL)·I − ĈᵀL`.
pub fn attitude_error_coefficients(
    c_hat: &RotationMatrix,
    profile: &AttitudeProfile,
    dirs: &DirectionSet,
    obs: &BodyObservations,
) -> Result<Vec<Mat3>> {
    if obs.len() != dirs.len() {
        return Err(Error::DimensionMismatch { expected: dirs.len(), found: obs.len() });
    }
    let c = c_hat.matrix();
    let ctl = c.transpose() * profile.matrix();
    let k = Mat3::identity() * ctl.trace() - ctl;
    let singular = SymmetricEigen::new(&(k.transpose() * k));
    if singular.max().is_nan() || singular.max() <= 0.0 || math::sqrt(singular.min().max(0.0) / singular.max()) <= PROPAGATION_CONDITIONING {
        return Err(Error::DegenerateErrorPropagation);
    }
    let k_inv = k.try_inverse().ok_or(Error::DegenerateErrorPropagation)?;
    Ok(dirs
        .directions()
        .iter()
        .zip(obs.directions())
        .zip(dirs.weights())
        .map(|((e, b), w)| {
            let x = b * e.transpose() * c;
            -(k_inv * (Mat3::identity() * x.trace() - x)) * *w
        })
        .collect())
}

fn embed(block: &Mat3, offset: usize) -> Mat6 {
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(offset, offset).copy_from(block);
    m
}

/// Measured ellipsoid: Wahba attitude, measured angular velocity, and the
/// minimal-trace bound on the vector sum of the propagated measurement errors.
pub fn measurement_update(bundle: &MeasurementBundle) -> Result<StateEllipsoid> {
    let bundle = bundle.augmented()?;
    let profile = build_profile(&bundle.dirs, &bundle.obs)?;
    let c_hat = solve_wahba(&profile)?;
    let coefficients = attitude_error_coefficients(&c_hat, &profile, &bundle.dirs, &bundle.obs)?;

    let mut terms: Vec<Mat6> = coefficients
        .iter()
        .zip(&bundle.direction_bounds)
        .map(|(a, s)| embed(&symmetrize(&(a * s.matrix() * a.transpose())), 0))
        .collect();
    terms.push(embed(bundle.omega_bound.matrix(), 3));
    let sum = minimal_sum(&terms)?;
    let p = match SpdMatrix::new(sum) {
        Ok(p) => p,
        Err(_) => SpdMatrix::from_symmetrized(sum + Mat6::identity() * (RIDGE * sum.trace()))?,
    };
    Ok(StateEllipsoid::new(AttitudeState::new(c_hat, bundle.omega), p))
}

/// Minimal-trace ellipsoid containing the intersection of the flow and
/// measured ellipsoids, with the minimizing weight `q*`.
pub fn fuse(flow: &StateEllipsoid, measured: &StateEllipsoid) -> Result<(StateEllipsoid, f64)> {
    let x = center_difference(&measured.center, &flow.center).to_vector();
    let fusion = fuse_intersection(&measured.p, &x, &flow.p)?;
    let center = StateDeviation::from_vector(&fusion.center).apply_to(&measured.center);
    Ok((StateEllipsoid::new(center, fusion.p), fusion.q))
}

/// Quantities of the sufficient contraction condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceReport {
    /// `‖A_f‖_F`.
    pub lhs: f64,
    /// `√(c·(q + λ_min)/(6·χ·(1 + q)))`.
    pub rhs: f64,
    /// Smallest eigenvalue of `Pm⁻¹·Pf`.
    pub lambda_min: f64,
    /// Condition number of `Pm`.
    pub kappa: f64,
    pub chi: f64,
    pub c: f64,
    pub q: f64,
    pub satisfied: bool,
}

/// `χ(P) = √(6 + 30·κ(P))`.
pub fn chi(p: &Spd6) -> f64 {
    math::sqrt(6.0 + 30.0 * p.condition_number())
}

fn smallest_product_eigenvalue(pm: &Spd6, pf: &Spd6) -> f64 {
    match diagonalize_spd_product(&pm.inverse(), pf) {
        Ok(d) => d.lambda[0],
        // Too ill-conditioned for square roots: use the congruent symmetric
        // matrix L⁻¹·Pf·L⁻ᵀ with Pm = L·Lᵀ.
        Err(_) => match Cholesky::new(*pm.matrix()) {
            Some(ch) => {
                let l_inv = ch.l().try_inverse().unwrap_or_else(Mat6::zeros);
                SymmetricEigen::new(&symmetrize(&(l_inv * pf.matrix() * l_inv.transpose()))).min()
            }
            None => f64::NAN,
        },
    }
}

/// Evaluates the sufficient contraction condition. `q` may be `0` or `∞`,
/// in which case `(q + λ)/(1 + q)` takes its limit.
pub fn convergence_check(pm: &Spd6, pf: &Spd6, a_f: &Mat6, q: f64, c: f64) -> ConvergenceReport {
    let kappa = pm.condition_number();
    let chi = math::sqrt(6.0 + 30.0 * kappa);
    let lambda_min = smallest_product_eigenvalue(pm, pf);
    let ratio = if q.is_infinite() { 1.0 } else { (q + lambda_min) / (1.0 + q) };
    let rhs = math::sqrt(c * ratio / (6.0 * chi));
    let lhs = a_f.norm();
    ConvergenceReport { lhs, rhs, lambda_min, kappa, chi, c, q, satisfied: lhs < rhs }
}

/// `c` and an optional fixed `q` for the convergence check; `None` uses the
/// fusion weight `q*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSettings {
    pub c: f64,
    pub q: Option<f64>,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self { c: DEFAULT_CONTRACTION, q: None }
    }
}

/// Everything produced by one [`filter_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub posterior: StateEllipsoid,
    pub flow: FlowResult,
    pub measured: StateEllipsoid,
    pub q_star: f64,
    pub report: ConvergenceReport,
}

/// Flow update over `l` steps, measurement update, fusion, and convergence report.
pub fn filter_step<P: Potential + ?Sized>(
    prior: &StateEllipsoid,
    l: usize,
    inertia: &InertiaParams,
    pot: &P,
    bundle: &MeasurementBundle,
    settings: &ConvergenceSettings,
) -> core::result::Result<StepOutput, FilterError> {
    let flow = flow_update(prior, l, inertia, pot)?;
    let measured = measurement_update(bundle).map_err(|e| FilterError::new(Stage::Measurement, e))?;
    let (posterior, q_star) = fuse(&flow.predicted, &measured).map_err(|e| FilterError::new(Stage::Fusion, e))?;
    let q = settings.q.unwrap_or(q_star);
    let report = convergence_check(&measured.p, &flow.predicted.p, &flow.a_f, q, settings.c);
    Ok(StepOutput { posterior, flow, measured, q_star, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{PendulumPotential, ZeroPotential};
    use crate::so3::{exp_so3, log_so3};
    use alloc::vec;
    use ellipsoid_attitude_oracles::{random_unit_vector, uniform_rotation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn axes() -> Vec<Vec3> {
        vec![Vec3::x(), Vec3::y(), Vec3::z()]
    }

    fn baseline_inertia() -> InertiaParams {
        InertiaParams::new(Mat3::from_diagonal(&Vec3::new(1.0, 2.8, 2.0)), 0.01).unwrap()
    }

    fn pendulum() -> PendulumPotential {
        PendulumPotential::new(1.0, 9.81, Vec3::new(0.0, 0.0, 0.3)).unwrap()
    }

    fn pendulum_center() -> AttitudeState {
        AttitudeState::new(exp_so3(&Vec3::new(0.4, -0.3, 0.8)), Vec3::new(1.1, -0.6, 0.9))
    }

    fn bundle_for(c: &RotationMatrix, omega: Vec3, s: f64, t: f64, nus: &[Vec3]) -> MeasurementBundle {
        let dirs = DirectionSet::with_unit_weights(axes()).unwrap();
        let obs = dirs.directions().iter().zip(nus).map(|(e, nu)| exp_so3(&-nu) * (c.transpose() * *e)).collect();
        MeasurementBundle::new(
            dirs,
            BodyObservations::new(obs).unwrap(),
            omega,
            vec![SpdMatrix::scaled_identity(s).unwrap(); 3],
            SpdMatrix::scaled_identity(t).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_error_coefficients() {
        let dirs = DirectionSet::with_unit_weights(axes()).unwrap();
        let obs = BodyObservations::new(axes()).unwrap();
        let profile = build_profile(&dirs, &obs).unwrap();
        let coeffs = attitude_error_coefficients(&RotationMatrix::identity(), &profile, &dirs, &obs).unwrap();
        for (a, e) in coeffs.iter().zip(axes()) {
            let expected = -(Mat3::identity() - e * e.transpose()) * 0.5;
            assert!((a - expected).amax() <= 1e-15);
        }
    }

    #[test]
    fn error_coefficients_ignore_weight_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = RotationMatrix::new(uniform_rotation(&mut rng)).unwrap();
        let dirs: Vec<Vec3> = (0..4).map(|_| random_unit_vector(&mut rng)).collect();
        let dirs = DirectionSet::new(dirs, vec![1.0, 0.5, 2.0, 1.5]).unwrap();
        let obs = BodyObservations::new(dirs.directions().iter().map(|e| c.transpose() * *e).collect()).unwrap();
        let base = attitude_error_coefficients(&c, &build_profile(&dirs, &obs).unwrap(), &dirs, &obs).unwrap();
        let scaled_dirs = dirs.scaled_weights(37.0).unwrap();
        let scaled = attitude_error_coefficients(&c, &build_profile(&scaled_dirs, &obs).unwrap(), &scaled_dirs, &obs).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert!((a - b).amax() <= 1e-12);
        }
    }

    /// Ratio of first-order prediction error to the actual attitude error of
    /// the Wahba solution under direction errors of the given scale.
    fn first_order_error_ratio(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
        let c = RotationMatrix::new(uniform_rotation(rng)).unwrap();
        let dirs: Vec<Vec3> = (0..4).map(|_| random_unit_vector(rng)).collect();
        let dirs = DirectionSet::new(dirs, (0..4).map(|_| rng.gen_range(0.5..2.0)).collect()).unwrap();
        let nus: Vec<Vec3> = (0..4).map(|_| random_unit_vector(rng) * scale).collect();
        // bⁱ = exp(S(νⁱ))·b̃ⁱ.
        let noisy = BodyObservations::new(
            dirs.directions().iter().zip(&nus).map(|(e, nu)| exp_so3(&-nu) * (c.transpose() * *e)).collect(),
        )
        .unwrap();
        let profile = build_profile(&dirs, &noisy).unwrap();
        let c_hat = solve_wahba(&profile).unwrap();
        let zeta_actual = log_so3(&(c_hat.transpose() * c));
        let coeffs = attitude_error_coefficients(&c_hat, &profile, &dirs, &noisy).unwrap();
        let zeta_predicted = coeffs.iter().zip(&nus).fold(Vec3::zeros(), |acc, (a, nu)| acc + a * nu);
        (zeta_actual - zeta_predicted).norm() / zeta_actual.norm()
    }

    #[test]
    fn error_coefficients_are_first_order_accurate() {
        let mut worst_fine: f64 = 0.0;
        let mut worst_coarse: f64 = 0.0;
        for seed in 0..50 {
            worst_fine = worst_fine.max(first_order_error_ratio(&mut ChaCha8Rng::seed_from_u64(seed), 1e-5));
            worst_coarse = worst_coarse.max(first_order_error_ratio(&mut ChaCha8Rng::seed_from_u64(seed), 1e-4));
        }
        assert!(worst_fine <= 1e-3, "{worst_fine:e}");
        // Linear decrease: a tenfold smaller perturbation, about tenfold smaller relative error.
        assert!(worst_fine < 0.2 * worst_coarse, "{worst_fine:e} vs {worst_coarse:e}");
    }

    #[test]
    fn degenerate_propagation_rejected() {
        // ĈᵀL = diag(1, −1, 0) gives a singular K.
        let profile = AttitudeProfile(Mat3::from_diagonal(&Vec3::new(1.0, -1.0, 0.0)));
        let dirs = DirectionSet::with_unit_weights(axes()).unwrap();
        let obs = BodyObservations::new(axes()).unwrap();
        let r = attitude_error_coefficients(&RotationMatrix::identity(), &profile, &dirs, &obs);
        assert!(matches!(r, Err(Error::DegenerateErrorPropagation)));
    }

    #[test]
    fn kinematic_drift_linearization() {
        let inertia = InertiaParams::new(Mat3::identity(), 0.01).unwrap();
        let center = AttitudeState::new(exp_so3(&Vec3::new(0.3, 0.1, -0.2)), Vec3::zeros());
        let a = flow_linearization(&center, &inertia, &ZeroPotential).unwrap();
        let mut expected = Mat6::identity();
        expected.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Mat3::identity() * 0.01));
        assert!((a - expected).amax() <= 1e-8, "{a}");
    }

    #[test]
    fn linearization_step_consistency() {
        let inertia = baseline_inertia();
        let pot = pendulum();
        let center = pendulum_center();
        let fine = flow_linearization_with_step(&center, &inertia, &pot, 1e-6).unwrap();
        let coarse = flow_linearization_with_step(&center, &inertia, &pot, 1e-5).unwrap();
        for (a, b) in fine.iter().zip(coarse.iter()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn linearization_approaches_identity_with_step() {
        let pot = pendulum();
        let center = pendulum_center();
        for h in [1e-2, 1e-3, 1e-4] {
            let inertia = baseline_inertia().with_step(h).unwrap();
            let a = flow_linearization(&center, &inertia, &pot).unwrap();
            assert!((a - Mat6::identity()).norm() <= 10.0 * h * (center.omega.norm() + 1.0));
        }
    }

    #[test]
    fn linearization_predicts_one_step_deviation() {
        let inertia = baseline_inertia();
        let pot = pendulum();
        let center = pendulum_center();
        let a = flow_linearization(&center, &inertia, &pot).unwrap();
        let next = integrator_step(&center, &inertia, &pot).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let dx = Vec6::from_fn(|_, _| rng.gen_range(-1.0..1.0)).normalize() * 1e-3;
            let moved = integrator_step(&StateDeviation::from_vector(&dx).apply_to(&center), &inertia, &pot).unwrap();
            let actual = StateDeviation::between(&next, &moved).to_vector();
            assert!((actual - a * dx).norm() <= 1e-2 * actual.norm());
        }
    }

    #[test]
    fn flow_update_composes() {
        let inertia = baseline_inertia();
        let pot = pendulum();
        let prior = StateEllipsoid::new(pendulum_center(), SpdMatrix::scaled_identity(1e-8).unwrap());
        let two = flow_update(&prior, 2, &inertia, &pot).unwrap();
        let one = flow_update(&prior, 1, &inertia, &pot).unwrap();
        let chained = flow_update(&one.predicted, 1, &inertia, &pot).unwrap();
        assert_eq!(two.predicted.center, chained.predicted.center);
        assert!((two.predicted.p.matrix() - chained.predicted.p.matrix()).amax() <= 1e-12);

        let mut s = prior.center;
        for _ in 0..2 {
            s = integrator_step(&s, &inertia, &pot).unwrap();
        }
        assert_eq!(two.predicted.center, s);
        assert!(flow_update(&prior, 0, &inertia, &pot).is_err());
    }

    #[test]
    fn measured_ellipsoid_structure() {
        // Single direction term plus gyro term with equal traces: the sum is twice each.
        let a = Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0));
        let terms = [embed(&a, 0), embed(&a, 3)];
        let s = minimal_sum(&terms).unwrap();
        assert!((s - (terms[0] + terms[1]) * 2.0).amax() <= 1e-14);

        // Vanishing noise.
        let c = exp_so3(&Vec3::new(0.1, 0.2, 0.3));
        let eps = 1e-12;
        let bundle = bundle_for(&c, Vec3::new(0.1, 0.0, 0.0), eps, eps, &[Vec3::zeros(); 3]);
        let m = measurement_update(&bundle).unwrap();
        assert!(m.p.trace() <= 10.0 * 3.0 * eps);
        assert!(m.center.c.angle_to(&c) <= 1e-12);
        assert_eq!(m.center.omega, Vec3::new(0.1, 0.0, 0.0));
    }

    #[test]
    fn balanced_bounds_give_isotropic_measured_ellipsoid() {
        let c = exp_so3(&Vec3::new(-0.7, 0.2, 1.3));
        let bundle = bundle_for(&c, Vec3::zeros(), 2e-6, 3e-6, &[Vec3::zeros(); 3]);
        let m = measurement_update(&bundle).unwrap();
        assert!(m.p.condition_number() - 1.0 < 1e-9);
    }

    #[test]
    fn two_direction_measurement_is_augmented() {
        let c = exp_so3(&Vec3::new(0.5, -0.2, 0.1));
        let dirs = DirectionSet::with_unit_weights(vec![Vec3::x(), Vec3::y()]).unwrap();
        let obs = BodyObservations::new(dirs.directions().iter().map(|e| c.transpose() * *e).collect()).unwrap();
        let s = SpdMatrix::scaled_identity(1e-8).unwrap();
        let bundle = MeasurementBundle::new(dirs, obs, Vec3::zeros(), vec![s, s], s).unwrap();
        let augmented = bundle.augmented().unwrap();
        assert_eq!(augmented.dirs().len(), 3);
        // Orthogonal pair: radius 2·1e-4.
        assert!((augmented.direction_bounds()[2].trace() - 3.0 * 4e-8).abs() <= 1e-20);
        let m = measurement_update(&bundle).unwrap();
        assert!(m.center.c.angle_to(&c) <= 1e-12);
    }

    #[test]
    fn two_direction_measurement_is_sound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = SpdMatrix::scaled_identity(1e-8).unwrap();
        let dirs = DirectionSet::with_unit_weights(vec![Vec3::x(), Vec3::new(0.6, 0.8, 0.0)]).unwrap();
        for _ in 0..200 {
            let c = RotationMatrix::new(uniform_rotation(&mut rng)).unwrap();
            let obs = dirs
                .directions()
                .iter()
                .map(|e| exp_so3(&-(random_unit_vector(&mut rng) * 1e-4 * rng.gen::<f64>())) * (c.transpose() * *e))
                .collect();
            let bundle =
                MeasurementBundle::new(dirs.clone(), BodyObservations::new(obs).unwrap(), Vec3::zeros(), vec![s, s], s).unwrap();
            let m = measurement_update(&bundle).unwrap();
            assert!(m.quadratic_form(&AttitudeState::new(c, Vec3::zeros())) <= 1.05 * 1.05);
        }
    }

    #[test]
    fn fuse_identical_and_uninformative() {
        let center = pendulum_center();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Mat6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let p = SpdMatrix::from_symmetrized((a * a.transpose() + Mat6::identity()) * 1e-6).unwrap();
        let e = StateEllipsoid::new(center, p);
        let (fused, _) = fuse(&e, &e).unwrap();
        assert!(fused.center.c.angle_to(&center.c) <= 1e-15);
        assert!((fused.center.omega - center.omega).amax() <= 1e-15);
        assert!((fused.p.matrix() - p.matrix()).amax() <= 1e-10 * p.matrix().amax());

        let wide = StateEllipsoid::new(center, p.scale(1e6).unwrap());
        let (fused, _) = fuse(&wide, &e).unwrap();
        assert!((fused.p.trace() - p.trace()).abs() <= 1e-3 * p.trace());
    }

    #[test]
    fn convergence_examples() {
        let i6 = Spd6::identity();
        assert_eq!(chi(&i6), 6.0);
        let r = convergence_check(&i6, &i6, &(Mat6::identity() * 0.1), 1.0, 0.9);
        assert_eq!(r.kappa, 1.0);
        assert_eq!(r.chi, 6.0);
        assert!((r.lambda_min - 1.0).abs() <= 1e-14);
        assert!((r.rhs - (1.8f64 / 72.0).sqrt()).abs() <= 1e-15);
        assert!((r.lhs - 0.06f64.sqrt()).abs() <= 1e-15);
        assert!(!r.satisfied);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut spd = || {
            let a = Mat6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            SpdMatrix::from_symmetrized(a * a.transpose() + Mat6::identity() * 0.1).unwrap()
        };
        let (pm, pf) = (spd(), spd());
        let af = Mat6::identity();
        let base = convergence_check(&pm, &pf, &af, 0.7, 0.9);
        for alpha in [1e-9, 3.0, 1e4] {
            let s = convergence_check(&pm.scale(alpha).unwrap(), &pf.scale(alpha).unwrap(), &af, 0.7, 0.9);
            assert!((s.lambda_min - base.lambda_min).abs() <= 1e-12 * base.lambda_min.max(1.0));
            assert!((s.kappa - base.kappa).abs() <= 1e-12 * base.kappa);
            assert!((s.chi - base.chi).abs() <= 1e-12 * base.chi);
            assert!((s.rhs - base.rhs).abs() <= 1e-12 * base.rhs);
        }
        // Eigenvalues of Pm⁻¹·Pf through the product diagonalization match the
        // generalized symmetric route.
        let ch = Cholesky::new(*pm.matrix()).unwrap();
        let l_inv = ch.l().try_inverse().unwrap();
        let sym = SymmetricEigen::new(&symmetrize(&(l_inv * pf.matrix() * l_inv.transpose())));
        assert!((sym.min() - base.lambda_min).abs() <= 1e-10 * base.lambda_min);

        let limit = convergence_check(&i6, &i6.scale(400.0).unwrap(), &af, f64::INFINITY, 0.9);
        assert!((limit.rhs - (0.9f64 / 36.0).sqrt()).abs() <= 1e-15);
        let zero = convergence_check(&i6, &i6.scale(400.0).unwrap(), &af, 0.0, 0.9);
        assert!((zero.rhs - (0.9f64 * 400.0 / 36.0).sqrt()).abs() <= 1e-12);
        assert!(zero.satisfied);
    }

    #[test]
    fn noiseless_filter_step_recovers_truth() {
        let inertia = baseline_inertia();
        let pot = pendulum();
        let truth0 = pendulum_center();
        let prior = StateEllipsoid::new(truth0, SpdMatrix::scaled_identity(1e-6).unwrap());
        let mut truth = truth0;
        for _ in 0..10 {
            truth = integrator_step(&truth, &inertia, &pot).unwrap();
        }
        let bundle = bundle_for(&truth.c, truth.omega, 1e-14, 1e-14, &[Vec3::zeros(); 3]);
        let out = filter_step(&prior, 10, &inertia, &pot, &bundle, &ConvergenceSettings::default()).unwrap();
        assert!(out.posterior.center.c.angle_to(&truth.c) <= 1e-8);
        assert!((out.posterior.center.omega - truth.omega).norm() <= 1e-8);
        assert!(out.posterior.p.trace() < prior.p.trace());
    }

    #[test]
    fn errors_carry_stage_labels() {
        let inertia = baseline_inertia();
        let far = AttitudeState::new(RotationMatrix::identity(), Vec3::new(500.0, 0.0, 0.0));
        let prior = StateEllipsoid::new(far, Spd6::identity());
        let bundle = bundle_for(&RotationMatrix::identity(), Vec3::zeros(), 1e-8, 1e-8, &[Vec3::zeros(); 3]);
        let err = filter_step(&prior, 3, &inertia, &ZeroPotential, &bundle, &ConvergenceSettings::default()).unwrap_err();
        assert_eq!(err.stage, Stage::Flow);
        assert_eq!(err.step, Some(0));
        assert!(matches!(err.source, Error::StepTooLarge { .. }));

        // Consistent flow far from an exact measurement: disjoint ellipsoids.
        let prior = StateEllipsoid::new(
            AttitudeState::new(exp_so3(&Vec3::new(0.0, 0.0, 1.0)), Vec3::zeros()),
            SpdMatrix::scaled_identity(1e-8).unwrap(),
        );
        let err = filter_step(&prior, 1, &inertia, &ZeroPotential, &bundle, &ConvergenceSettings::default()).unwrap_err();
        assert_eq!(err.stage, Stage::Fusion);
        assert_eq!(err.source, Error::EmptyIntersection);
    }
}
