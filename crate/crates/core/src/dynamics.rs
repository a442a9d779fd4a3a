//! Rigid-body attitude dynamics in an attitude-dependent potential.
//!
//! The discrete flow is the Lie group variational integrator
//!
//! ```text
//! h·S(J·ωₖ + h/2·Mₖ) = Fₖ·J_d − J_d·Fₖᵀ
//! Cₖ₊₁ = Cₖ·Fₖ
//! J·ωₖ₊₁ = Fₖᵀ·J·ωₖ + h/2·Fₖᵀ·Mₖ + h/2·Mₖ₊₁
//! ```
//!
//! with `J_d = ½tr(J)·I − J`. Writing `Fₖ = exp(S(f))`, the implicit equation
//! reduces to the 3-vector equation `a(θ)·J·f + b(θ)·(f × J·f) = rhs` with
//! `θ = ‖f‖`, `a = sin θ/θ`, `b = (1 − cos θ)/θ²`, solved by Newton's method.
//! Since `Mₖ₊₁` depends only on `Cₖ₊₁`, the angular-velocity update is explicit.

use core::f64::consts::FRAC_PI_2;

use crate::linalg::{Spd3, SpdMatrix};
use crate::math;
use crate::so3::{exp_so3, hat, rodrigues_coefficients, vee_unchecked, RotationMatrix};
use crate::{Error, Mat3, Result, Vec3};

const NEWTON_MAX_ITERATIONS: usize = 50;
const NEWTON_TOLERANCE: f64 = 1e-12;
const GRADIENT_CHECK_TOLERANCE: f64 = 1e-6;
const FD_STEP: f64 = 1e-6;

/// Inertia, its nonstandard counterpart `J_d = ½tr(J)·I − J`, and the step size.
#[derive(Debug, Clone, PartialEq)]
pub struct InertiaParams {
    j: Spd3,
    j_inv: Mat3,
    j_d: Mat3,
    h: f64,
}

impl InertiaParams {
    pub fn new(j: Mat3, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInertia { reason: "step size must be positive" });
        }
        let j = SpdMatrix::new(j).map_err(|_| Error::InvalidInertia { reason: "inertia must be symmetric positive definite" })?;
        let moments = j.eigen().values;
        let total: f64 = moments.iter().sum();
        if moments.iter().any(|&m| m > total - m + 1e-12 * total) {
            return Err(Error::InvalidInertia { reason: "principal moments violate the triangle inequality" });
        }
        let j_d = Mat3::identity() * (0.5 * j.trace()) - j.matrix();
        let j_inv = j.inverse().into_inner();
        Ok(Self { j, j_inv, j_d, h })
    }

    pub fn j(&self) -> &Mat3 {
        self.j.matrix()
    }

    pub fn j_spd(&self) -> &Spd3 {
        &self.j
    }

    pub fn j_inv(&self) -> &Mat3 {
        &self.j_inv
    }

    pub fn j_d(&self) -> &Mat3 {
        &self.j_d
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Same inertia with a different step size.
    pub fn with_step(&self, h: f64) -> Result<Self> {
        Self::new(*self.j.matrix(), h)
    }
}

/// Attitude and body-frame angular velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeState {
    pub c: RotationMatrix,
    pub omega: Vec3,
}

impl AttitudeState {
    pub fn new(c: RotationMatrix, omega: Vec3) -> Self {
        Self { c, omega }
    }
}

/// An attitude-dependent potential `U(C)` with its matrix gradient `∂U/∂C`.
///
/// Implementations must be stateless so that they can be shared across threads.
pub trait Potential: Sync {
    fn potential(&self, c: &Mat3) -> f64;
    fn gradient(&self, c: &Mat3) -> Mat3;
    /// Whether `gradient` is a numerical approximation rather than supplied analytically.
    fn is_finite_difference(&self) -> bool {
        false
    }
}

/// Free rigid body.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroPotential;

impl Potential for ZeroPotential {
    fn potential(&self, _: &Mat3) -> f64 {
        0.0
    }

    fn gradient(&self, _: &Mat3) -> Mat3 {
        Mat3::zeros()
    }
}

/// Three-dimensional pendulum: `U(C) = −m·g·e₃ᵀ·C·ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumPotential {
    mass: f64,
    gravity: f64,
    rho: Vec3,
}

impl PendulumPotential {
    pub fn new(mass: f64, gravity: f64, rho: Vec3) -> Result<Self> {
        if !(mass.is_finite() && gravity.is_finite() && rho.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite);
        }
        let p = Self { mass, gravity, rho };
        check_gradient(&p)?;
        Ok(p)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn rho(&self) -> &Vec3 {
        &self.rho
    }
}

impl Potential for PendulumPotential {
    fn potential(&self, c: &Mat3) -> f64 {
        -self.mass * self.gravity * (c * self.rho).z
    }

    fn gradient(&self, _: &Mat3) -> Mat3 {
        Vec3::z() * self.rho.transpose() * (-self.mass * self.gravity)
    }
}

/// Wraps a scalar potential and differentiates it numerically.
#[derive(Debug, Clone, Copy)]
pub struct FiniteDifferencePotential<F> {
    u: F,
}

impl<F: Fn(&Mat3) -> f64 + Sync> FiniteDifferencePotential<F> {
    pub fn new(u: F) -> Self {
        Self { u }
    }
}

impl<F: Fn(&Mat3) -> f64 + Sync> Potential for FiniteDifferencePotential<F> {
    fn potential(&self, c: &Mat3) -> f64 {
        (self.u)(c)
    }

    fn gradient(&self, c: &Mat3) -> Mat3 {
        central_difference_gradient(&self.u, c)
    }

    fn is_finite_difference(&self) -> bool {
        true
    }
}

fn central_difference_gradient(u: &dyn Fn(&Mat3) -> f64, c: &Mat3) -> Mat3 {
    Mat3::from_fn(|i, j| {
        let mut plus = *c;
        let mut minus = *c;
        plus[(i, j)] += FD_STEP;
        minus[(i, j)] -= FD_STEP;
        (u(&plus) - u(&minus)) / (2.0 * FD_STEP)
    })
}

/// Compares the supplied gradient with central differences of `U` at a fixed
/// spread of attitudes.
pub fn check_gradient<P: Potential + ?Sized>(pot: &P) -> Result<()> {
    const PROBES: [[f64; 3]; 5] =
        [[0.0, 0.0, 0.0], [0.3, -0.2, 0.9], [-1.1, 0.4, 0.2], [2.0, 1.0, -0.5], [0.1, -2.5, 0.7]];
    let mut worst: f64 = 0.0;
    for probe in PROBES {
        let c = *exp_so3(&Vec3::from(probe)).matrix();
        let g = pot.gradient(&c);
        let fd = central_difference_gradient(&|m: &Mat3| pot.potential(m), &c);
        for (a, b) in g.iter().zip(fd.iter()) {
            if !a.is_finite() {
                return Err(Error::NonFinite);
            }
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }
    }
    if worst > GRADIENT_CHECK_TOLERANCE {
        return Err(Error::GradientMismatch { relative_error: worst });
    }
    Ok(())
}

/// `M = Σᵢ rᵢ × vᵢ` where `rᵢ`, `vᵢ` are the rows of `C` and `∂U/∂C`.
pub fn moment_from_potential<P: Potential + ?Sized>(c: &RotationMatrix, pot: &P) -> Vec3 {
    let cm = c.matrix();
    let g = pot.gradient(cm);
    (0..3).fold(Vec3::zeros(), |acc, i| {
        let r: Vec3 = cm.row(i).transpose();
        let v: Vec3 = g.row(i).transpose();
        acc + r.cross(&v)
    })
}

/// The same moment as [`moment_from_potential`], from `S(M) = (∂U/∂C)ᵀC − Cᵀ(∂U/∂C)`.
pub fn moment_vee_form<P: Potential + ?Sized>(c: &RotationMatrix, pot: &P) -> Vec3 {
    let cm = c.matrix();
    let g = pot.gradient(cm);
    vee_unchecked(&(g.transpose() * cm - cm.transpose() * g))
}

/// Solution of the implicit step equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSolution {
    pub f: Vec3,
    pub big_f: RotationMatrix,
    pub newton_iterations: usize,
    pub residual_norm: f64,
}

/// `a′(θ)/θ` and `b′(θ)/θ`.
fn rodrigues_derivative_ratios(theta: f64) -> (f64, f64) {
    // The closed forms cancel catastrophically for small θ; the series is
    // accurate to rounding below the switch point.
    if theta < 0.5 {
        let t2 = theta * theta;
        let da = -1.0 / 3.0
            + t2 * (1.0 / 30.0 + t2 * (-1.0 / 840.0 + t2 * (1.0 / 45360.0 + t2 * (-1.0 / 3991680.0 + t2 / 518918400.0))));
        let db = -1.0 / 12.0
            + t2 * (1.0 / 180.0 + t2 * (-1.0 / 6720.0 + t2 * (1.0 / 453600.0 + t2 * (-1.0 / 47900160.0 + t2 / 7264857600.0))));
        (da, db)
    } else {
        let (s, c) = (math::sin(theta), math::cos(theta));
        let t3 = theta * theta * theta;
        ((theta * c - s) / t3, (theta * s - 2.0 + 2.0 * c) / (t3 * theta))
    }
}

/// `a(θ)·J·f + b(θ)·(f × J·f)`, the vee of `F·J_d − J_d·Fᵀ` for `F = exp(S(f))`.
pub fn step_map(f: &Vec3, j: &Mat3) -> Vec3 {
    let (a, b) = rodrigues_coefficients(f.norm());
    let jf = j * f;
    jf * a + f.cross(&jf) * b
}

/// Solves `a(θ)·J·f + b(θ)·(f × J·f) = rhs` for the relative rotation vector `f`.
pub fn solve_implicit_step(rhs: &Vec3, inertia: &InertiaParams) -> Result<StepSolution> {
    let j = inertia.j();
    let mut f = inertia.j_inv() * rhs;
    let guess_norm = f.norm();
    if !guess_norm.is_finite() {
        return Err(Error::NonFinite);
    }
    if guess_norm >= FRAC_PI_2 {
        return Err(Error::StepTooLarge { norm: guess_norm });
    }
    let tolerance = NEWTON_TOLERANCE * rhs.norm().max(1.0);

    let mut residual = step_map(&f, j) - rhs;
    let mut residual_norm = residual.norm();
    let mut iterations = 0;
    // Converge to rounding level rather than stopping at the tolerance: the
    // flow linearization differences this map at very small perturbations.
    while iterations < NEWTON_MAX_ITERATIONS && residual_norm > 0.0 {
        let theta = f.norm();
        let (a, b) = rodrigues_coefficients(theta);
        let (da, db) = rodrigues_derivative_ratios(theta);
        let jf = j * f;
        let jacobian = j * a + jf * f.transpose() * da + (hat(&f) * j - hat(&jf)) * b + f.cross(&jf) * f.transpose() * db;
        let Some(inv) = jacobian.try_inverse() else { break };
        let step = inv * residual;
        let candidate = f - step;
        let candidate_residual = step_map(&candidate, j) - rhs;
        let candidate_norm = candidate_residual.norm();
        iterations += 1;
        if candidate_norm >= residual_norm && residual_norm <= tolerance {
            break;
        }
        f = candidate;
        residual = candidate_residual;
        residual_norm = candidate_norm;
        if residual_norm <= tolerance && step.norm() <= 1e-15 * f.norm() {
            break;
        }
    }
    if residual_norm.is_nan() || residual_norm > tolerance {
        return Err(Error::NewtonDiverged { iterations, residual: residual_norm });
    }
    Ok(StepSolution { f, big_f: exp_so3(&f), newton_iterations: iterations, residual_norm })
}

/// One step of the discrete flow.
pub fn integrator_step<P: Potential + ?Sized>(state: &AttitudeState, inertia: &InertiaParams, pot: &P) -> Result<AttitudeState> {
    Ok(integrator_step_detailed(state, inertia, pot)?.0)
}

/// One step of the discrete flow, also returning the implicit solution.
pub fn integrator_step_detailed<P: Potential + ?Sized>(
    state: &AttitudeState,
    inertia: &InertiaParams,
    pot: &P,
) -> Result<(AttitudeState, StepSolution)> {
    let h = inertia.h();
    let m0 = moment_from_potential(&state.c, pot);
    let momentum = inertia.j() * state.omega + m0 * (0.5 * h);
    let solution = solve_implicit_step(&(momentum * h), inertia)?;
    let c1 = state.c * solution.big_f;
    let m1 = moment_from_potential(&c1, pot);
    let omega1 = inertia.j_inv() * (solution.big_f.matrix().transpose() * momentum + m1 * (0.5 * h));
    Ok((AttitudeState { c: c1, omega: omega1 }, solution))
}

/// Right-hand sides `(Ċ, ω̇)` of `Ċ = C·S(ω)`, `J·ω̇ + ω × J·ω = M`.
pub fn continuous_derivative<P: Potential + ?Sized>(state: &AttitudeState, inertia: &InertiaParams, pot: &P) -> (Mat3, Vec3) {
    let m = moment_from_potential(&state.c, pot);
    let jw = inertia.j() * state.omega;
    (state.c.matrix() * hat(&state.omega), inertia.j_inv() * (m - state.omega.cross(&jw)))
}

/// `½ωᵀJω + U(C)`.
pub fn total_energy<P: Potential + ?Sized>(state: &AttitudeState, inertia: &InertiaParams, pot: &P) -> f64 {
    0.5 * state.omega.dot(&(inertia.j() * state.omega)) + pot.potential(state.c.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ellipsoid_attitude_oracles::{random_unit_vector, uniform_rotation};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(a: f64, b: f64, c: f64) -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(a, b, c))
    }

    fn pendulum() -> PendulumPotential {
        PendulumPotential::new(1.0, 9.81, Vec3::new(0.0, 0.0, 0.3)).unwrap()
    }

    #[test]
    fn inertia_validation() {
        let p = InertiaParams::new(diag(1.0, 2.0, 3.0), 0.01).unwrap();
        assert_eq!(*p.j_d(), diag(2.0, 1.0, 0.0));
        assert!(InertiaParams::new(diag(1.0, 1.0, 3.0), 0.01).is_err());
        assert!(InertiaParams::new(diag(1.0, 2.0, 3.0), 0.0).is_err());
        assert!(InertiaParams::new(diag(1.0, -2.0, 3.0), 0.01).is_err());
    }

    #[test]
    fn zero_and_equilibrium_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = RotationMatrix::new(uniform_rotation(&mut rng)).unwrap();
        assert_eq!(moment_from_potential(&c, &ZeroPotential), Vec3::zeros());
        assert_eq!(moment_from_potential(&RotationMatrix::identity(), &pendulum()), Vec3::zeros());
    }

    #[test]
    fn pendulum_moment_forms_agree_with_energy_slope() {
        let pot = pendulum();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let c = RotationMatrix::new(uniform_rotation(&mut rng)).unwrap();
            let m = moment_from_potential(&c, &pot);
            assert!((m - moment_vee_form(&c, &pot)).amax() <= 1e-12);
            // M·a = −dU/dθ for a body-frame rotation C·exp(θ S(a)).
            let axis = random_unit_vector(&mut rng);
            let eps = 1e-6;
            let u = |t: f64| pot.potential((c * exp_so3(&(axis * t))).matrix());
            let slope = (u(eps) - u(-eps)) / (2.0 * eps);
            assert!((m.dot(&axis) + slope).abs() <= 1e-6 * m.norm().max(1.0));
        }
    }

    #[test]
    fn finite_difference_potential_matches_analytic() {
        let pot = pendulum();
        let fd = FiniteDifferencePotential::new(|c: &Mat3| pot.potential(c));
        assert!(fd.is_finite_difference() && !pot.is_finite_difference());
        check_gradient(&fd).unwrap();
        let c = exp_so3(&Vec3::new(0.4, -0.3, 1.2));
        assert!((moment_from_potential(&c, &fd) - moment_from_potential(&c, &pot)).amax() < 1e-8);
    }

    struct WrongGradient;
    impl Potential for WrongGradient {
        fn potential(&self, c: &Mat3) -> f64 {
            c[(0, 0)]
        }
        fn gradient(&self, _: &Mat3) -> Mat3 {
            Mat3::zeros()
        }
    }

    #[test]
    fn mismatched_gradient_detected() {
        assert!(matches!(check_gradient(&WrongGradient), Err(Error::GradientMismatch { .. })));
    }

    #[test]
    fn zero_rhs_gives_zero_step() {
        let p = InertiaParams::new(diag(1.0, 2.0, 3.0), 0.01).unwrap();
        let s = solve_implicit_step(&Vec3::zeros(), &p).unwrap();
        assert_eq!(s.f, Vec3::zeros());
        assert_eq!(s.big_f, RotationMatrix::identity());
    }

    #[test]
    fn principal_spin_closed_form() {
        let p = InertiaParams::new(diag(1.0, 2.0, 3.0), 0.01).unwrap();
        for omega in [0.5, 3.0, 40.0] {
            let rhs = Vec3::new(0.0, 0.0, 0.01 * 3.0 * omega);
            let s = solve_implicit_step(&rhs, &p).unwrap();
            let expected = libm::asin(0.01 * omega);
            assert!((s.f - Vec3::new(0.0, 0.0, expected)).amax() <= 1e-14);
        }
    }

    #[test]
    fn residual_matches_matrix_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = InertiaParams::new(diag(1.0, 2.8, 2.0), 0.01).unwrap();
        for _ in 0..100 {
            let f = random_unit_vector(&mut rng) * rng.gen_range(0.0..1.0);
            let big_f = exp_so3(&f);
            let matrix_form = big_f.matrix() * p.j_d() - p.j_d() * big_f.matrix().transpose();
            assert!((step_map(&f, p.j()) - vee_unchecked(&matrix_form)).amax() <= 1e-12);

            let rhs = random_unit_vector(&mut rng) * rng.gen_range(0.0..0.5);
            let s = solve_implicit_step(&rhs, &p).unwrap();
            let m = s.big_f.matrix() * p.j_d() - p.j_d() * s.big_f.matrix().transpose();
            assert!((hat(&rhs) - m).norm() <= 1e-11);
            assert!(s.residual_norm <= 1e-12);
        }
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn derivative_ratios_match_extended_precision() {
        // Reference values evaluated with 40-digit arithmetic.
        let reference = [
            (0.001, -0.33333330000000119048, -0.083333327777777926587),
            (0.3, -0.3303429601354729338, -0.082834537084702244912),
            (0.49, -0.32539832427133680087, -0.082007992572329398017),
            (0.51, -0.32474348465955288928, -0.081898361899589555333),
            (1.2, -0.28773714154815859751, -0.075635410824643723534),
        ];
        for (theta, da, db) in reference {
            let (a, b) = rodrigues_derivative_ratios(theta);
            assert!((a - da).abs() < 1e-14 && (b - db).abs() < 1e-14, "θ = {theta}");
        }
    }

    #[test]
    fn oversized_step_rejected() {
        let p = InertiaParams::new(diag(1.0, 2.0, 3.0), 0.01).unwrap();
        assert!(matches!(solve_implicit_step(&Vec3::new(2.0, 0.0, 0.0), &p), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn rest_is_fixed_point_and_principal_spin_is_preserved() {
        let p = InertiaParams::new(diag(1.0, 2.0, 3.0), 0.01).unwrap();
        let rest = AttitudeState::new(RotationMatrix::identity(), Vec3::zeros());
        assert_eq!(integrator_step(&rest, &p, &ZeroPotential).unwrap(), rest);

        let mut s = AttitudeState::new(RotationMatrix::identity(), Vec3::new(0.0, 0.0, 2.0));
        let per_step = exp_so3(&Vec3::new(0.0, 0.0, libm::asin(0.02)));
        let mut expected = RotationMatrix::identity();
        for _ in 0..100 {
            s = integrator_step(&s, &p, &ZeroPotential).unwrap();
            expected = expected * per_step;
        }
        assert!((s.omega - Vec3::new(0.0, 0.0, 2.0)).amax() <= 1e-13);
        assert!(s.c.angle_to(&expected) <= 1e-12);
    }

    #[test]
    fn continuous_derivative_examples() {
        let p = InertiaParams::new(Mat3::identity(), 0.01).unwrap();
        let rest = AttitudeState::new(RotationMatrix::identity(), Vec3::zeros());
        assert_eq!(continuous_derivative(&rest, &p, &ZeroPotential), (Mat3::zeros(), Vec3::zeros()));
        let c = exp_so3(&Vec3::new(0.3, 0.2, 0.1));
        let spin = AttitudeState::new(c, Vec3::z());
        let (dc, dw) = continuous_derivative(&spin, &p, &ZeroPotential);
        assert_eq!(dw, Vec3::zeros());
        assert_eq!(dc, c.matrix() * hat(&Vec3::z()));

        // Component arithmetic for a diagonal inertia.
        let (j1, j2, j3) = (1.0, 2.8, 2.0);
        let p = InertiaParams::new(diag(j1, j2, j3), 0.01).unwrap();
        let pot = pendulum();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let c = RotationMatrix::new(uniform_rotation(&mut rng)).unwrap();
            let w = random_unit_vector(&mut rng) * 2.0;
            let m = moment_from_potential(&c, &pot);
            let expected = Vec3::new(
                (m.x - (j3 - j2) * w.y * w.z) / j1,
                (m.y - (j1 - j3) * w.z * w.x) / j2,
                (m.z - (j2 - j1) * w.x * w.y) / j3,
            );
            let (_, dw) = continuous_derivative(&AttitudeState::new(c, w), &p, &pot);
            assert!((dw - expected).amax() <= 1e-14);
        }
    }

    #[test]
    fn energy_examples() {
        let p = InertiaParams::new(diag(1.0, 2.0, 3.0), 0.01).unwrap();
        let rest = AttitudeState::new(RotationMatrix::identity(), Vec3::zeros());
        assert_eq!(total_energy(&rest, &p, &ZeroPotential), 0.0);
        let spin = AttitudeState::new(RotationMatrix::identity(), Vec3::z());
        assert_eq!(total_energy(&spin, &p, &ZeroPotential), 1.5);
        assert!((total_energy(&rest, &p, &pendulum()) + 9.81 * 0.3).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn newton_solves_random_small_steps(x in -0.8..0.8f64, y in -0.8..0.8f64, z in -0.8..0.8f64) {
            let p = InertiaParams::new(diag(1.0, 2.8, 2.0), 0.01).unwrap();
            let rhs = Vec3::new(x, y, z);
            let s = solve_implicit_step(&rhs, &p).unwrap();
            prop_assert!((step_map(&s.f, p.j()) - rhs).norm() <= 1e-12);
            prop_assert!(s.newton_iterations <= 10);
        }
    }
}
