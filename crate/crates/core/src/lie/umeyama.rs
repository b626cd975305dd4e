use nalgebra::{Matrix3, Vector3};

use super::sim3::nearest_rotation;
use super::{LieError, Sim3Transform};

/// Least-squares similarity (or rigid, when `with_scale` is false) transform
/// taking `src` onto `dst`, minimizing `Σ‖dst_i − (s R src_i + t)‖²`.
pub fn umeyama_align(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    with_scale: bool,
) -> Result<Sim3Transform, LieError> {
    if src.len() != dst.len() {
        return Err(LieError::LengthMismatch(src.len(), dst.len()));
    }
    if src.len() < 3 {
        return Err(LieError::DegenerateConfiguration(format!(
            "need at least 3 correspondences, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;

    let mut cov = Matrix3::zeros();
    let mut src_scatter = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let sc = s - mu_s;
        let dc = d - mu_d;
        cov += dc * sc.transpose();
        src_scatter += sc * sc.transpose();
        var_s += sc.norm_squared();
    }
    cov /= n;
    var_s /= n;

    let spread = src_scatter.symmetric_eigenvalues();
    let (lo, hi) = (spread.min(), spread.max());
    let mid = spread.sum() - lo - hi;
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Err(LieError::DegenerateConfiguration(
            "source points are collinear or coincident".into(),
        ));
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut sign = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let rotation = nearest_rotation(&(u * sign * v_t));
    let scale = if with_scale {
        let d = svd.singular_values;
        (d[0] * sign[(0, 0)] + d[1] * sign[(1, 1)] + d[2] * sign[(2, 2)]) / var_s
    } else {
        1.0
    };
    let translation = mu_d - rotation * mu_s * scale;
    Sim3Transform::new(scale, rotation, translation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};

    fn cloud() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.2, -0.3),
            Vector3::new(-0.4, 1.1, 0.5),
            Vector3::new(0.3, -0.7, 1.4),
            Vector3::new(2.0, 1.0, 0.9),
        ]
    }

    #[test]
    fn identity_on_equal_sets() {
        let t = umeyama_align(&cloud(), &cloud(), true).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!((t.rotation.matrix() - Matrix3::identity()).amax() < 1e-12);
        assert!(t.translation.amax() < 1e-12);
    }

    #[test]
    fn recovers_forward_generated_similarity() {
        let r0 =
            Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, 2.0, -0.5)), 2.2);
        let t0 = Vector3::new(3.0, -1.0, 0.25);
        let src = cloud();
        let dst: Vec<_> = src.iter().map(|p| r0 * p * 2.0 + t0).collect();
        let t = umeyama_align(&src, &dst, true).unwrap();
        assert!((t.scale - 2.0).abs() < 1e-9);
        assert!((t.rotation.matrix() - r0.matrix()).amax() < 1e-9);
        assert!((t.translation - t0).amax() < 1e-9);
    }

    #[test]
    fn rigid_mode_pins_scale() {
        let src = cloud();
        let dst: Vec<_> = src.iter().map(|p| p * 2.0).collect();
        let t = umeyama_align(&src, &dst, false).unwrap();
        assert_eq!(t.scale, 1.0);
        let residual: f64 = src
            .iter()
            .zip(&dst)
            .map(|(s, d)| (t.transform_point(s) - d).norm_squared())
            .sum();
        assert!(residual > 1e-3);
    }

    #[test]
    fn collinear_sources_are_rejected() {
        let src: Vec<_> = (0..5)
            .map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.0))
            .collect();
        assert!(matches!(
            umeyama_align(&src, &src, true),
            Err(LieError::DegenerateConfiguration(_))
        ));
    }
}
