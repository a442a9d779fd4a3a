//! Small dense symmetric linear algebra: Jacobi eigendecomposition, the SPD
//! matrix newtype with its principal square root, and the simultaneous
//! diagonalization of a product of two SPD matrices.

use nalgebra::{SMatrix, SVector};

use crate::math;
use crate::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition `A = V·diag(values)·Vᵀ`, eigenvalues ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricEigen<const N: usize> {
    pub values: SVector<f64, N>,
    pub vectors: SMatrix<f64, N, N>,
}

impl<const N: usize> SymmetricEigen<N> {
    /// Cyclic Jacobi on the symmetric part of `a`.
    pub fn new(a: &SMatrix<f64, N, N>) -> Self {
        let mut a = symmetrize(a);
        let mut v = SMatrix::<f64, N, N>::identity();
        let scale = a.norm();

        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..N {
                for q in (p + 1)..N {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off == 0.0 || math::sqrt(off) <= 1e-16 * scale {
                break;
            }
            for p in 0..N {
                for q in (p + 1)..N {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = if theta.abs() > 1e150 {
                        0.5 / theta
                    } else {
                        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                        sign / (theta.abs() + math::sqrt(theta * theta + 1.0))
                    };
                    let c = 1.0 / math::sqrt(t * t + 1.0);
                    let s = t * c;
                    for k in 0..N {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..N {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    for k in 0..N {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }

        // insertion sort, ascending
        let mut values = a.diagonal();
        let mut vectors = v;
        for i in 1..N {
            let mut j = i;
            while j > 0 && values[j - 1] > values[j] {
                values.swap_rows(j - 1, j);
                vectors.swap_columns(j - 1, j);
                j -= 1;
            }
        }
        Self { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[N - 1]
    }

    /// Rebuilds `V·diag(g(λ))·Vᵀ`.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> SMatrix<f64, N, N> {
        let mut scaled = self.vectors;
        for j in 0..N {
            let gj = g(self.values[j]);
            for i in 0..N {
                scaled[(i, j)] *= gj;
            }
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }
}

pub fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Symmetric positive definite `N×N` matrix.
///
/// Construction checks symmetry to `1e-12` (relative to the largest entry, floor 1)
/// and strict positivity of every eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdMatrix<const N: usize>(SMatrix<f64, N, N>);

pub type Spd3 = SpdMatrix<3>;
pub type Spd6 = SpdMatrix<6>;

impl<const N: usize> SpdMatrix<N> {
    pub fn new(m: SMatrix<f64, N, N>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m.amax().max(1.0);
        if (m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotSpd { reason: "not symmetric" });
        }
        let m = symmetrize(&m);
        if SymmetricEigen::new(&m).min() <= 0.0 {
            return Err(Error::NotSpd { reason: "non-positive eigenvalue" });
        }
        Ok(Self(m))
    }

    /// Symmetrizes `m` before validating it.
    pub fn from_symmetrized(m: SMatrix<f64, N, N>) -> Result<Self> {
        Self::new(symmetrize(&m))
    }

    pub fn identity() -> Self {
        Self(SMatrix::identity())
    }

    /// `α·I`, `α > 0`.
    pub fn scaled_identity(alpha: f64) -> Result<Self> {
        Self::new(SMatrix::identity() * alpha)
    }

    pub fn from_diagonal(d: &SVector<f64, N>) -> Result<Self> {
        Self::new(SMatrix::from_diagonal(d))
    }

    pub fn matrix(&self) -> &SMatrix<f64, N, N> {
        &self.0
    }

    pub fn into_inner(self) -> SMatrix<f64, N, N> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn eigen(&self) -> SymmetricEigen<N> {
        SymmetricEigen::new(&self.0)
    }

    /// Ratio of largest to smallest eigenvalue.
    pub fn condition_number(&self) -> f64 {
        let e = self.eigen();
        e.max() / e.min()
    }

    pub fn scale(&self, alpha: f64) -> Result<Self> {
        Self::new(self.0 * alpha)
    }

    /// Inverse through the eigendecomposition; the result is SPD.
    pub fn inverse(&self) -> Self {
        Self(self.eigen().map(|l| 1.0 / l))
    }

    /// Principal (SPD) square root.
    ///
    /// Fails when the smallest eigenvalue is at or below `1e-14` times the largest.
    pub fn sqrt(&self) -> Result<Self> {
        let e = self.well_conditioned_eigen()?;
        Ok(Self(e.map(math::sqrt)))
    }

    /// Inverse of the principal square root.
    pub fn inv_sqrt(&self) -> Result<Self> {
        let e = self.well_conditioned_eigen()?;
        Ok(Self(e.map(|l| 1.0 / math::sqrt(l))))
    }

    fn well_conditioned_eigen(&self) -> Result<SymmetricEigen<N>> {
        let e = self.eigen();
        if e.min() <= 1e-14 * e.max() {
            return Err(Error::NotSpd { reason: "smallest eigenvalue below 1e-14 of largest" });
        }
        Ok(e)
    }

    /// `xᵀ·P⁻¹·x`.
    pub fn inverse_quadratic_form(&self, x: &SVector<f64, N>) -> f64 {
        let e = self.eigen();
        let y = e.vectors.transpose() * x;
        (0..N).map(|i| y[i] * y[i] / e.values[i]).sum()
    }
}

/// Principal square root of an SPD matrix.
pub fn spd_sqrt<const N: usize>(m: &SpdMatrix<N>) -> Result<SpdMatrix<N>> {
    m.sqrt()
}

/// `A·B = V⁻¹·diag(λ)·V` for SPD `A`, `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductDiagonalization<const N: usize> {
    pub v: SMatrix<f64, N, N>,
    pub v_inv: SMatrix<f64, N, N>,
    /// Positive eigenvalues of `A·B`, ascending.
    pub lambda: SVector<f64, N>,
}

impl<const N: usize> ProductDiagonalization<N> {
    pub fn reconstruct(&self) -> SMatrix<f64, N, N> {
        self.v_inv * SMatrix::from_diagonal(&self.lambda) * self.v
    }
}

/// Diagonalizes the (generally non-symmetric) product of two SPD matrices.
///
/// With `A^{1/2}·B·A^{1/2} = Q·Λ·Qᵀ` (symmetric, SPD), `V = Qᵀ·A^{-1/2}` gives
/// `V·A·B·V⁻¹ = Λ`, so every eigenvalue of `A·B` is real and positive.
pub fn diagonalize_spd_product<const N: usize>(
    a: &SpdMatrix<N>,
    b: &SpdMatrix<N>,
) -> Result<ProductDiagonalization<N>> {
    let a_half = a.sqrt()?;
    let a_neg_half = a.inv_sqrt()?;
    let inner = a_half.matrix() * b.matrix() * a_half.matrix();
    let e = SymmetricEigen::new(&inner);
    let q = e.vectors;
    Ok(ProductDiagonalization {
        v: q.transpose() * a_neg_half.matrix(),
        v_inv: a_half.matrix() * q,
        lambda: e.values,
    })
}
