//! Similarity transforms, used by the Sim(3) baseline and trajectory
//! alignment.
//!
//! Tangent coordinates are `(ρ_x, ρ_y, ρ_z, φ_x, φ_y, φ_z, σ)`: translation
//! generator, rotation generator, log-scale.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Rotation3, Vector3};

use super::expm::{expm, logm};
use super::{adjoint_by_conjugation, Homography, LieError, LieGroup};

/// `x ↦ s·R·x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim3Transform {
    pub scale: f64,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Sim3Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Sim3Transform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(
        scale: f64,
        rotation: Rotation3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, LieError> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(LieError::InvalidScale(scale));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(LieError::NonFinite);
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn rigid(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            scale: 1.0,
            rotation,
            translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        Self {
            scale: self.scale * rhs.scale,
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation * self.scale + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        let s_inv = 1.0 / self.scale;
        Self {
            scale: s_inv,
            rotation: r_inv,
            translation: -(r_inv * self.translation) * s_inv,
        }
    }

    /// Affine 4×4 matrix `[sR t; 0 1]`.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(self.rotation.matrix() * self.scale));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Recovers a similarity from an affine matrix whose linear block is a
    /// positive multiple of a rotation. The rotation is re-orthonormalized.
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self, LieError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(LieError::NonFinite);
        }
        let w = m[(3, 3)];
        if w.abs() < 1e-300 {
            return Err(LieError::NotSimilarity("zero homogeneous scale".into()));
        }
        let m = m / w;
        let linear: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let det = linear.determinant();
        if !(det > 0.0) {
            return Err(LieError::NotSimilarity(format!(
                "linear block determinant {det}"
            )));
        }
        let scale = det.cbrt();
        let rotation = nearest_rotation(&(linear / scale));
        Self::new(scale, rotation, m.fixed_view::<3, 1>(0, 3).into_owned())
    }

    /// Promotion into SL(4): the affine matrix divided by `det^(1/4) = s^(3/4)`.
    pub fn to_homography(&self) -> Homography {
        Homography::from_matrix_unchecked(self.to_matrix() / self.scale.powf(0.75))
    }
}

/// Orthogonal polar factor of `m`, with the sign fixed to a proper rotation.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Rotation3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut fix = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    Rotation3::from_matrix_unchecked(u * fix * v_t)
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl LieGroup for Sim3Transform {
    const DOF: usize = 7;

    fn identity() -> Self {
        Sim3Transform::identity()
    }

    fn compose(&self, rhs: &Self) -> Self {
        Sim3Transform::compose(self, rhs)
    }

    fn inverse(&self) -> Self {
        Sim3Transform::inverse(self)
    }

    fn exp(xi: &DVector<f64>) -> Self {
        Self::from_matrix(&expm(&Self::hat(xi)))
            .expect("exponential of a sim(3) element is a similarity")
    }

    fn log(&self) -> Result<DVector<f64>, LieError> {
        Ok(Self::vee(&logm(&self.to_matrix())?))
    }

    fn adjoint(&self) -> DMatrix<f64> {
        adjoint_by_conjugation::<Self>(&self.to_matrix())
    }

    fn hat(xi: &DVector<f64>) -> Matrix4<f64> {
        let rho = Vector3::new(xi[0], xi[1], xi[2]);
        let phi = Vector3::new(xi[3], xi[4], xi[5]);
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(skew(&phi) + Matrix3::identity() * xi[6]));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&rho);
        m
    }

    fn vee(m: &Matrix4<f64>) -> DVector<f64> {
        let a = m.fixed_view::<3, 3>(0, 0);
        DVector::from_column_slice(&[
            m[(0, 3)],
            m[(1, 3)],
            m[(2, 3)],
            0.5 * (a[(2, 1)] - a[(1, 2)]),
            0.5 * (a[(0, 2)] - a[(2, 0)]),
            0.5 * (a[(1, 0)] - a[(0, 1)]),
            a.trace() / 3.0,
        ])
    }

    fn to_matrix(&self) -> Matrix4<f64> {
        Sim3Transform::to_matrix(self)
    }

    fn renormalize(&self) -> Self {
        Self {
            rotation: nearest_rotation(self.rotation.matrix()),
            ..*self
        }
    }
}
