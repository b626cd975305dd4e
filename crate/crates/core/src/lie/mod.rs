//! Matrix Lie groups: SL(4) for projective submap transforms, Sim(3) for the
//! similarity baseline, and the generic machinery (adjoint, `ad`, Jacobians
//! of `Log`) shared by the factor-graph solver.

mod expm;
mod sim3;
mod sl4;
mod umeyama;

use nalgebra::{DMatrix, DVector, Matrix4};
use thiserror::Error;

pub use expm::{expm, logm};
pub use sim3::{nearest_rotation, Sim3Transform};
pub use sl4::{
    basis_matrix, basis_pseudo_inverse, generators, hat, vee, AdjointMatrix, Homography,
    TangentVector, DET_TOLERANCE, SL4_DOF, TRACE_TOLERANCE,
};
pub use umeyama::umeyama_align;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("logarithm undefined: {0}")]
    LogDomain(String),
    #[error("matrix is not trace-free (trace = {0:e})")]
    NotTraceFree(f64),
    #[error("determinant {0:e} is not admissible")]
    InvalidDeterminant(f64),
    #[error("non-finite matrix entries")]
    NonFinite,
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("not a similarity transform: {0}")]
    NotSimilarity(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// A matrix Lie group embedded in 4×4 matrices, with right-perturbation
/// retraction `X ⊕ δ = X·Exp(δ)`.
pub trait LieGroup: Clone + std::fmt::Debug + Send + Sync {
    const DOF: usize;

    fn identity() -> Self;
    fn compose(&self, rhs: &Self) -> Self;
    fn inverse(&self) -> Self;
    fn exp(xi: &DVector<f64>) -> Self;
    fn log(&self) -> Result<DVector<f64>, LieError>;
    /// Matrix of `ξ ↦ vee(X ξ^∧ X⁻¹)`.
    fn adjoint(&self) -> DMatrix<f64>;
    fn hat(xi: &DVector<f64>) -> Matrix4<f64>;
    /// Coordinates of the algebra component of `m` (projection, no checks).
    fn vee(m: &Matrix4<f64>) -> DVector<f64>;
    fn to_matrix(&self) -> Matrix4<f64>;
    /// Pulls accumulated rounding back onto the group.
    fn renormalize(&self) -> Self;

    fn retract(&self, delta: &DVector<f64>) -> Self {
        self.compose(&Self::exp(delta))
    }
}

/// Adjoint matrix assembled column by column from conjugated generators.
pub fn adjoint_by_conjugation<G: LieGroup>(m: &Matrix4<f64>) -> DMatrix<f64> {
    let m_inv = m.try_inverse().expect("group element is invertible");
    let mut ad = DMatrix::zeros(G::DOF, G::DOF);
    for k in 0..G::DOF {
        let e = DVector::from_fn(G::DOF, |r, _| if r == k { 1.0 } else { 0.0 });
        let col = G::vee(&(m * G::hat(&e) * m_inv));
        ad.set_column(k, &col);
    }
    ad
}

/// `ad_ξ`: matrix of `η ↦ vee([ξ^∧, η^∧])`.
pub fn ad_matrix<G: LieGroup>(xi: &DVector<f64>) -> DMatrix<f64> {
    let x = G::hat(xi);
    let mut ad = DMatrix::zeros(G::DOF, G::DOF);
    for k in 0..G::DOF {
        let e = DVector::from_fn(G::DOF, |r, _| if r == k { 1.0 } else { 0.0 });
        let g = G::hat(&e);
        ad.set_column(k, &G::vee(&(x * g - g * x)));
    }
    ad
}

/// `Σ_k sign^k ad_ξ^k / (k+1)!`: the right (`sign = -1`) or left (`sign = +1`)
/// Jacobian of `Exp`.
fn exp_jacobian<G: LieGroup>(xi: &DVector<f64>, sign: f64) -> DMatrix<f64> {
    let ad = ad_matrix::<G>(xi) * sign;
    let mut term = DMatrix::<f64>::identity(G::DOF, G::DOF);
    let mut sum = term.clone();
    for k in 1..200 {
        term = &term * &ad / (k + 1) as f64;
        sum += &term;
        if term.amax() < 1e-18 {
            break;
        }
    }
    sum
}

pub fn right_jacobian<G: LieGroup>(xi: &DVector<f64>) -> DMatrix<f64> {
    exp_jacobian::<G>(xi, -1.0)
}

pub fn left_jacobian<G: LieGroup>(xi: &DVector<f64>) -> DMatrix<f64> {
    exp_jacobian::<G>(xi, 1.0)
}

/// `∂ Log(X·Exp(δ)) / ∂δ` at `δ = 0`, with `ξ = Log(X)`.
pub fn right_jacobian_inverse<G: LieGroup>(xi: &DVector<f64>) -> Option<DMatrix<f64>> {
    right_jacobian::<G>(xi).try_inverse()
}

/// `∂ Log(Exp(δ)·X) / ∂δ` at `δ = 0`, with `ξ = Log(X)`.
pub fn left_jacobian_inverse<G: LieGroup>(xi: &DVector<f64>) -> Option<DMatrix<f64>> {
    left_jacobian::<G>(xi).try_inverse()
}
