//! Reference computations for the test suites.
//!
//! Everything here is written independently of the estimator crate: a
//! truncated exponential series, uniform SO(3) sampling, brute-force Wahba
//! minimization, characteristic-polynomial root finding, and an adaptive
//! Dormand–Prince integrator for the continuous rigid-body equations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};
use rand::Rng;

/// `Σ_{k<terms} A^k / k!`.
pub fn matrix_exp_series(a: &Matrix3<f64>, terms: usize) -> Matrix3<f64> {
    let mut sum = Matrix3::identity();
    let mut term = Matrix3::identity();
    for k in 1..terms {
        term = term * a / k as f64;
        sum += term;
    }
    sum
}

pub fn random_unit_vector<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Uniform (Haar) rotation from three uniform variates via the unit-quaternion
/// subgroup construction.
pub fn uniform_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let u3: f64 = rng.gen();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (w, x, y, z) = (
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
        b * (2.0 * PI * u3).cos(),
    );
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - z * w),
        2.0 * (x * z + y * w),
        2.0 * (x * y + z * w),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - x * w),
        2.0 * (x * z - y * w),
        2.0 * (y * z + x * w),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Column-sum Wahba cost `½ Σ wᵢ ‖eᵢ − R·bᵢ‖²`.
pub fn wahba_cost_columns(r: &Matrix3<f64>, e: &[Vector3<f64>], b: &[Vector3<f64>], w: &[f64]) -> f64 {
    e.iter()
        .zip(b)
        .zip(w)
        .map(|((ei, bi), wi)| 0.5 * wi * (ei - r * bi).norm_squared())
        .sum()
}

/// Smallest cost over `samples` uniform rotations.
pub fn brute_force_wahba<R: Rng>(
    rng: &mut R,
    samples: usize,
    e: &[Vector3<f64>],
    b: &[Vector3<f64>],
    w: &[f64],
) -> (f64, Matrix3<f64>) {
    let mut best = (f64::INFINITY, Matrix3::identity());
    for _ in 0..samples {
        let r = uniform_rotation(rng);
        let cost = wahba_cost_columns(&r, e, b, w);
        if cost < best.0 {
            best = (cost, r);
        }
    }
    best
}

/// Real roots of `det(M − λI)` in `[lo, hi]` by a log-spaced sign scan and bisection.
pub fn characteristic_roots<const N: usize>(m: &SMatrix<f64, N, N>, lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    let m = DMatrix::from_column_slice(N, N, m.as_slice());
    let char_poly = |lambda: f64| (&m - DMatrix::<f64>::identity(N, N) * lambda).determinant();
    let ratio = (hi / lo).ln();
    let at = |i: usize| lo * (ratio * i as f64 / grid as f64).exp();
    let mut roots = Vec::new();
    let mut x0 = at(0);
    let mut f0 = char_poly(x0);
    for i in 1..=grid {
        let x1 = at(i);
        let f1 = char_poly(x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if f0.signum() != f1.signum() && f1 != 0.0 {
            let (mut a, mut b, mut fa) = (x0, x1, f0);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let fm = char_poly(mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
                if b - a <= 1e-15 * b {
                    break;
                }
            }
            roots.push(0.5 * (a + b));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Continuous rigid-body state for the reference integrator.
#[derive(Debug, Clone, Copy)]
pub struct BodyState {
    pub attitude: Matrix3<f64>,
    pub omega: Vector3<f64>,
}

impl BodyState {
    fn axpy(&self, k: f64, d: &BodyState) -> BodyState {
        BodyState { attitude: self.attitude + d.attitude * k, omega: self.omega + d.omega * k }
    }

    fn max_scaled(&self, other: &BodyState, reference: &BodyState, rtol: f64, atol: f64) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..9 {
            let sc = atol + rtol * reference.attitude[i].abs().max(other.attitude[i].abs());
            err = err.max((self.attitude[i]).abs() / sc);
        }
        for i in 0..3 {
            let sc = atol + rtol * reference.omega[i].abs().max(other.omega[i].abs());
            err = err.max((self.omega[i]).abs() / sc);
        }
        err
    }
}

/// `Ċ = C·S(ω)`, `J·ω̇ = M(C) − ω × Jω`.
fn rigid_body_rhs(
    s: &BodyState,
    inertia: &Matrix3<f64>,
    inertia_inv: &Matrix3<f64>,
    torque: &dyn Fn(&Matrix3<f64>) -> Vector3<f64>,
) -> BodyState {
    let jw = inertia * s.omega;
    BodyState {
        attitude: s.attitude * hat(&s.omega),
        omega: inertia_inv * (torque(&s.attitude) - s.omega.cross(&jw)),
    }
}

/// Adaptive Dormand–Prince 5(4) integration (the system is autonomous, so the
/// stage times are not needed) of the continuous equations to `t_end`.
pub fn integrate_rigid_body(
    initial: BodyState,
    inertia: &Matrix3<f64>,
    torque: &dyn Fn(&Matrix3<f64>) -> Vector3<f64>,
    t_end: f64,
    tol: f64,
) -> BodyState {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let inertia_inv = inertia.try_inverse().expect("inertia must be invertible");
    let rhs = |s: &BodyState| rigid_body_rhs(s, inertia, &inertia_inv, torque);

    let mut t = 0.0;
    let mut y = initial;
    let mut h = 1e-3_f64.min(t_end);
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        let mut k: [BodyState; 7] = [y; 7];
        k[0] = rhs(&y);
        for stage in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(stage) {
                if A[stage][j] != 0.0 {
                    ys = ys.axpy(h * A[stage][j], kj);
                }
            }
            k[stage] = rhs(&ys);
        }
        let mut y5 = y;
        let mut y4 = y;
        for j in 0..7 {
            y5 = y5.axpy(h * B5[j], &k[j]);
            y4 = y4.axpy(h * B4[j], &k[j]);
        }
        let diff = BodyState { attitude: y5.attitude - y4.attitude, omega: y5.omega - y4.omega };
        let err = diff.max_scaled(&y5, &y, tol, tol);
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    y
}

/// `M = m·g·ρ × (Cᵀ·e₃)` for the potential `U(C) = −m·g·e₃ᵀ·C·ρ`.
pub fn pendulum_torque(mass: f64, gravity: f64, rho: Vector3<f64>) -> impl Fn(&Matrix3<f64>) -> Vector3<f64> {
    move |c: &Matrix3<f64>| rho.cross(&(c.transpose() * Vector3::z())) * (mass * gravity)
}
