//! The special linear group SL(4) and its Lie algebra sl(4).
//!
//! Tangent vectors are ordered to match the generator listing: the twelve
//! off-diagonal units `E_01, E_02, E_03, E_10, E_12, E_13, E_20, E_21, E_23,
//! E_30, E_31, E_32`, then `B_1 = diag(1,-1,0,0)`, `B_2 = diag(0,1,-1,0)`,
//! `B_3 = diag(0,0,1,-1)`. Serialized tangent vectors are only interchangeable
//! under this ordering.

use std::fmt;
use std::ops::Mul;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Matrix4, SMatrix, SVector, Vector3, Vector4};

use super::expm::{expm, logm};
use super::{LieError, LieGroup};

/// Number of degrees of freedom of SL(4).
pub const SL4_DOF: usize = 15;

/// `(row, col)` of the unit entry of each off-diagonal generator, in order.
const OFF_DIAGONAL: [(usize, usize); 12] = [
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 0),
    (1, 2),
    (1, 3),
    (2, 0),
    (2, 1),
    (2, 3),
    (3, 0),
    (3, 1),
    (3, 2),
];

/// Tolerance on `|det − 1|` accepted for a group element.
pub const DET_TOLERANCE: f64 = 1e-9;
/// Largest `|trace|` accepted by [`vee`].
pub const TRACE_TOLERANCE: f64 = 1e-9;

/// A 15-vector of sl(4) coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector(pub SVector<f64, 15>);

impl TangentVector {
    pub fn zeros() -> Self {
        Self(SVector::zeros())
    }

    /// Unit vector on slot `k` (zero-based).
    pub fn unit(k: usize) -> Self {
        let mut v = SVector::zeros();
        v[k] = 1.0;
        Self(v)
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self(SVector::from_column_slice(values))
    }

    pub fn as_vector(&self) -> &SVector<f64, 15> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn amax(&self) -> f64 {
        self.0.amax()
    }
}

impl From<SVector<f64, 15>> for TangentVector {
    fn from(v: SVector<f64, 15>) -> Self {
        Self(v)
    }
}

/// The fifteen generators `G_1..G_15` of sl(4).
pub fn generators() -> &'static [Matrix4<f64>; 15] {
    static GENERATORS: OnceLock<[Matrix4<f64>; 15]> = OnceLock::new();
    GENERATORS.get_or_init(|| {
        let mut gens = [Matrix4::zeros(); 15];
        for (k, &(r, c)) in OFF_DIAGONAL.iter().enumerate() {
            gens[k][(r, c)] = 1.0;
        }
        for d in 0..3 {
            gens[12 + d][(d, d)] = 1.0;
            gens[12 + d][(d + 1, d + 1)] = -1.0;
        }
        gens
    })
}

/// `ξ^∧ = Σ_k ξ_k G_k`.
pub fn hat(xi: &TangentVector) -> Matrix4<f64> {
    let v = &xi.0;
    let mut m = Matrix4::zeros();
    for (k, &(r, c)) in OFF_DIAGONAL.iter().enumerate() {
        m[(r, c)] = v[k];
    }
    let (b1, b2, b3) = (v[12], v[13], v[14]);
    m[(0, 0)] = b1;
    m[(1, 1)] = b2 - b1;
    m[(2, 2)] = b3 - b2;
    m[(3, 3)] = -b3;
    m
}

/// Inverse of [`hat`] on trace-free matrices.
pub fn vee(m: &Matrix4<f64>) -> Result<TangentVector, LieError> {
    let trace = m.trace();
    if !(trace.abs() < TRACE_TOLERANCE) {
        return Err(LieError::NotTraceFree(trace));
    }
    Ok(vee_projected(m))
}

/// Coordinates of the trace-free part of `m`; never fails.
pub(crate) fn vee_projected(m: &Matrix4<f64>) -> TangentVector {
    let mut v = SVector::<f64, 15>::zeros();
    for (k, &(r, c)) in OFF_DIAGONAL.iter().enumerate() {
        v[k] = m[(r, c)];
    }
    let shift = m.trace() / 4.0;
    let d = [
        m[(0, 0)] - shift,
        m[(1, 1)] - shift,
        m[(2, 2)] - shift,
        m[(3, 3)] - shift,
    ];
    // diag(b1, b2 - b1, b3 - b2, -b3)
    v[12] = d[0];
    v[13] = d[0] + d[1];
    v[14] = -d[3];
    TangentVector(v)
}

/// `B = [vec(G_1) … vec(G_15)]` with row-major `vec`, 16×15.
pub fn basis_matrix() -> &'static SMatrix<f64, 16, 15> {
    static BASIS: OnceLock<SMatrix<f64, 16, 15>> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = SMatrix::<f64, 16, 15>::zeros();
        for (k, g) in generators().iter().enumerate() {
            for r in 0..4 {
                for c in 0..4 {
                    b[(4 * r + c, k)] = g[(r, c)];
                }
            }
        }
        b
    })
}

/// Left pseudo-inverse `(BᵀB)⁻¹Bᵀ`; the columns of `B` are not orthogonal.
pub fn basis_pseudo_inverse() -> &'static SMatrix<f64, 15, 16> {
    static PINV: OnceLock<SMatrix<f64, 15, 16>> = OnceLock::new();
    PINV.get_or_init(|| {
        let b = basis_matrix();
        let gram = b.transpose() * b;
        let gram_inv = gram
            .try_inverse()
            .expect("generator basis has full column rank");
        gram_inv * b.transpose()
    })
}

/// 15×15 adjoint representation of an SL(4) element.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointMatrix(pub SMatrix<f64, 15, 15>);

impl AdjointMatrix {
    pub fn apply(&self, xi: &TangentVector) -> TangentVector {
        TangentVector(self.0 * xi.0)
    }

    pub fn matrix(&self) -> &SMatrix<f64, 15, 15> {
        &self.0
    }
}

/// An element of SL(4): a real 4×4 matrix with unit determinant.
#[derive(Clone, Copy, PartialEq)]
pub struct Homography(Matrix4<f64>);

impl fmt::Debug for Homography {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Homography({:?})", self.0.as_slice())
    }
}

impl Homography {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    /// Accepts `m` only if it is finite and already has unit determinant.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self, LieError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(LieError::NonFinite);
        }
        let det = m.determinant();
        if (det - 1.0).abs() > DET_TOLERANCE {
            return Err(LieError::InvalidDeterminant(det));
        }
        Ok(Self(m))
    }

    /// Rescales `m` by the fourth root of its determinant.
    ///
    /// Only positive determinants have a real fourth root that yields
    /// `det = 1`; in four dimensions `det(−m) = det(m)`, so a negative
    /// determinant cannot be repaired by a sign flip either.
    pub fn normalized(m: Matrix4<f64>) -> Result<Self, LieError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(LieError::NonFinite);
        }
        let det = m.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return Err(LieError::InvalidDeterminant(det));
        }
        let mut out = m / det.powf(0.25);
        // one more pass to pull rounding from the first division back in
        let det2 = out.determinant();
        out /= det2.powf(0.25);
        Ok(Self(out))
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix4<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix4<f64> {
        self.0
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    pub fn inverse(&self) -> Self {
        Self(
            self.0
                .try_inverse()
                .expect("unit-determinant matrix is invertible"),
        )
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        Self(self.0 * rhs.0)
    }

    /// Applies the transform to a Euclidean point; `None` if the image lies
    /// at (or numerically near) the plane at infinity.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Option<Vector3<f64>> {
        let x = self.0 * Vector4::new(p.x, p.y, p.z, 1.0);
        if x.w.abs() <= 1e-12 {
            None
        } else {
            Some(x.xyz() / x.w)
        }
    }

    /// `Exp(ξ) = exp(ξ^∧)`.
    pub fn exp(xi: &TangentVector) -> Self {
        Self(expm(&hat(xi)))
    }

    /// Principal logarithm, vectorized.
    pub fn log(&self) -> Result<TangentVector, LieError> {
        let l = logm(&self.0)?;
        // trace(log H) = log det H, which is rounding noise for a valid H
        Ok(vee_projected(&l))
    }

    /// `Ad_H = B⁺ (H ⊗ H⁻ᵀ) B`, satisfying `hat(Ad_H ξ) = H hat(ξ) H⁻¹`.
    pub fn adjoint(&self) -> AdjointMatrix {
        let h_inv_t = self.inverse().0.transpose();
        let kron: SMatrix<f64, 16, 16> = self.0.kronecker(&h_inv_t);
        AdjointMatrix(basis_pseudo_inverse() * kron * basis_matrix())
    }

    /// Divides out any determinant drift accumulated by repeated products.
    pub fn renormalized(&self) -> Self {
        Self::normalized(self.0).unwrap_or(*self)
    }
}

impl Mul for Homography {
    type Output = Homography;

    fn mul(self, rhs: Homography) -> Homography {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a Homography> for &'a Homography {
    type Output = Homography;

    fn mul(self, rhs: &Homography) -> Homography {
        self.compose(rhs)
    }
}

impl LieGroup for Homography {
    const DOF: usize = SL4_DOF;

    fn identity() -> Self {
        Homography::identity()
    }

    fn compose(&self, rhs: &Self) -> Self {
        Homography::compose(self, rhs)
    }

    fn inverse(&self) -> Self {
        Homography::inverse(self)
    }

    fn exp(xi: &DVector<f64>) -> Self {
        Homography::exp(&TangentVector::from_slice(xi.as_slice()))
    }

    fn log(&self) -> Result<DVector<f64>, LieError> {
        let v = Homography::log(self)?;
        Ok(DVector::from_column_slice(v.0.as_slice()))
    }

    fn adjoint(&self) -> DMatrix<f64> {
        let a = Homography::adjoint(self).0;
        DMatrix::from_column_slice(15, 15, a.as_slice())
    }

    fn hat(xi: &DVector<f64>) -> Matrix4<f64> {
        hat(&TangentVector::from_slice(xi.as_slice()))
    }

    fn vee(m: &Matrix4<f64>) -> DVector<f64> {
        DVector::from_column_slice(vee_projected(m).0.as_slice())
    }

    fn to_matrix(&self) -> Matrix4<f64> {
        self.0
    }

    fn renormalize(&self) -> Self {
        self.renormalized()
    }
}
