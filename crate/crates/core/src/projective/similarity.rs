use nalgebra::Vector3;

use super::SolverError;
use crate::lie::{umeyama_align, Sim3Transform};

/// Similarity alignment of a shared frame's point sets, `dst ≈ s R src + t`.
///
/// With a pose hint, rotation and translation are taken from the hint and
/// only the scale is estimated, as the median ratio of centered point norms.
/// Without one, a full least-squares similarity is fitted.
pub fn estimate_sim3(
    shared_src: &[Vector3<f64>],
    shared_dst: &[Vector3<f64>],
    rel_pose_hint: Option<&Sim3Transform>,
) -> Result<Sim3Transform, SolverError> {
    if shared_src.len() != shared_dst.len() {
        return Err(SolverError::LengthMismatch(
            shared_src.len(),
            shared_dst.len(),
        ));
    }
    if shared_src.len() < 3 {
        return Err(SolverError::DegenerateConfiguration(format!(
            "need at least 3 correspondences, got {}",
            shared_src.len()
        )));
    }
    let Some(hint) = rel_pose_hint else {
        return Ok(umeyama_align(shared_src, shared_dst, true)?);
    };

    let src_mean = coordinate_median(shared_src);
    let dst_mean = coordinate_median(shared_dst);
    let mut ratios: Vec<f64> = shared_src
        .iter()
        .zip(shared_dst)
        .filter_map(|(s, d)| {
            let ns = (s - src_mean).norm();
            let nd = (d - dst_mean).norm();
            (ns > 1e-300).then(|| nd / ns)
        })
        .filter(|r| r.is_finite())
        .collect();
    if ratios.is_empty() {
        return Err(SolverError::DegenerateConfiguration(
            "all source points coincide with their centroid".into(),
        ));
    }
    let scale = median(&mut ratios);
    if !(scale > 1e-300) || !scale.is_finite() {
        return Err(SolverError::ZeroScale);
    }
    Ok(Sim3Transform {
        scale,
        rotation: hint.rotation,
        translation: hint.translation,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Per-axis median, used as the center for the norm ratios.
fn coordinate_median(points: &[Vector3<f64>]) -> Vector3<f64> {
    Vector3::from_fn(|axis, _| {
        let mut v: Vec<f64> = points.iter().map(|p| p[axis]).collect();
        median(&mut v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(seed: u64, n: usize) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identity_without_hint() {
        let src = cloud(1, 30);
        let t = estimate_sim3(&src, &src, None).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.translation.amax() < 1e-12);
    }

    #[test]
    fn scale_only_with_hint() {
        let src = cloud(2, 30);
        let dst: Vec<_> = src.iter().map(|p| p * 3.0).collect();
        let t = estimate_sim3(&src, &dst, Some(&Sim3Transform::identity())).unwrap();
        assert!((t.scale - 3.0).abs() < 1e-9);
    }

    #[test]
    fn median_scale_tolerates_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let src = cloud(3, 200);
        let mut dst: Vec<_> = src.iter().map(|p| p * 1.5).collect();
        for d in dst.iter_mut().take(20) {
            *d = Vector3::from_fn(|_, _| rng.random_range(-10.0..10.0));
        }
        let t = estimate_sim3(&src, &dst, Some(&Sim3Transform::identity())).unwrap();
        assert!((t.scale - 1.5).abs() / 1.5 < 0.01, "scale {}", t.scale);
    }

    #[test]
    fn collinear_without_hint_is_degenerate() {
        let src: Vec<_> = (0..6).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            estimate_sim3(&src, &src, None),
            Err(SolverError::DegenerateConfiguration(_))
        ));
    }
}
