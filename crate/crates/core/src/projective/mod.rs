//! Relative transform estimation between overlapping submaps.
//!
//! Two submaps that reconstructed the same frame give pixel-indexed 3D point
//! pairs `(a, b)` with `ã ∝ H b̃`. [`solve_dlt`] estimates `H ∈ SL(4)` in
//! closed form, [`ransac_homography`] wraps it with 5-point minimal samples,
//! and [`estimate_sim3`] is the similarity alternative.

mod dlt;
mod ransac;
mod similarity;

use nalgebra::{Matrix4, Vector3, Vector4};
use thiserror::Error;

use crate::lie::LieError;

pub use dlt::{build_constraint_rows, solve_dlt, MIN_CORRESPONDENCES};
pub use ransac::{normalized_transfer_errors, ransac_homography, RansacResult};
pub use similarity::estimate_sim3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("point maps to the plane at infinity")]
    PointAtInfinity,
    #[error("insufficient inliers: {found} (need at least {required})")]
    InsufficientInliers { found: usize, required: usize },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("estimated scale underflows or is not finite")]
    ZeroScale,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

impl From<LieError> for SolverError {
    fn from(e: LieError) -> Self {
        match e {
            LieError::DegenerateConfiguration(msg) => SolverError::DegenerateConfiguration(msg),
            LieError::LengthMismatch(a, b) => SolverError::LengthMismatch(a, b),
            other => SolverError::DegenerateSample(other.to_string()),
        }
    }
}

/// A point pair with `a` in the frame of submap `i` (the reference) and `b`
/// in the frame of submap `j`, related by `ã ∝ H^i_j b̃`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

impl Correspondence {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>) -> Self {
        Self { a, b }
    }
}

/// Similarity `p ↦ s (p − c)` taking a point set to centroid 0 and RMS
/// radius √3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationTransform {
    pub centroid: Vector3<f64>,
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn fit<'a, I>(points: I) -> Result<Self, SolverError>
    where
        I: IntoIterator<Item = &'a Vector3<f64>>,
        I::IntoIter: Clone,
    {
        let iter = points.into_iter();
        let n = iter.clone().count();
        if n == 0 {
            return Err(SolverError::DegenerateSample("empty point set".into()));
        }
        let centroid = iter.clone().sum::<Vector3<f64>>() / n as f64;
        let mean_sq = iter.map(|p| (p - centroid).norm_squared()).sum::<f64>() / n as f64;
        if !(mean_sq > 1e-300) || !mean_sq.is_finite() {
            return Err(SolverError::DegenerateSample(
                "points are coincident".into(),
            ));
        }
        Ok(Self {
            centroid,
            scale: (3.0 / mean_sq).sqrt(),
        })
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (p - self.centroid) * self.scale
    }

    /// `[s·I₃ | −s·c; 0 | 1]`.
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut t = Matrix4::identity() * self.scale;
        t[(3, 3)] = 1.0;
        let shift = -self.centroid * self.scale;
        t[(0, 3)] = shift.x;
        t[(1, 3)] = shift.y;
        t[(2, 3)] = shift.z;
        t
    }

    pub fn inverse_matrix(&self) -> Matrix4<f64> {
        let mut t = Matrix4::identity() / self.scale;
        t[(3, 3)] = 1.0;
        t[(0, 3)] = self.centroid.x;
        t[(1, 3)] = self.centroid.y;
        t[(2, 3)] = self.centroid.z;
        t
    }
}

pub(crate) fn homogeneous(p: &Vector3<f64>) -> Vector4<f64> {
    Vector4::new(p.x, p.y, p.z, 1.0)
}

/// `‖a − dehomogenize(H b̃)‖`, in whatever frame `h` and `c` are expressed.
pub fn transfer_error(h: &Matrix4<f64>, c: &Correspondence) -> Result<f64, SolverError> {
    let x = h * homogeneous(&c.b);
    if !(x.w.abs() > 1e-12) {
        return Err(SolverError::PointAtInfinity);
    }
    Ok((c.a - x.xyz() / x.w).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_hits_target_moments() {
        let pts = vec![
            Vector3::new(10.0, 0.0, 1.0),
            Vector3::new(12.0, 3.0, 1.0),
            Vector3::new(9.0, -1.0, 4.0),
            Vector3::new(11.0, 2.0, -2.0),
        ];
        let t = NormalizationTransform::fit(&pts).unwrap();
        let normed: Vec<_> = pts.iter().map(|p| t.apply(p)).collect();
        let centroid = normed.iter().sum::<Vector3<f64>>() / 4.0;
        let rms = (normed.iter().map(|p| p.norm_squared()).sum::<f64>() / 4.0).sqrt();
        assert!(centroid.amax() < 1e-12);
        assert!((rms - 3f64.sqrt()).abs() < 1e-12);
        assert!((t.matrix() * t.inverse_matrix() - Matrix4::identity()).amax() < 1e-12);
        let via_matrix = t.matrix() * homogeneous(&pts[1]);
        assert!((via_matrix.xyz() - normed[1]).amax() < 1e-12);
    }

    #[test]
    fn transfer_error_cases() {
        let c = Correspondence::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(transfer_error(&Matrix4::identity(), &c).unwrap(), 0.0);
        // w = x − 1 vanishes at x = 1
        let mut h = Matrix4::identity();
        h[(3, 0)] = 1.0;
        h[(3, 3)] = -1.0;
        let at_infinity = Correspondence::new(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0));
        assert_eq!(
            transfer_error(&h, &at_infinity),
            Err(SolverError::PointAtInfinity)
        );
    }
}
