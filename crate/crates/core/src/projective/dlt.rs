use nalgebra::{DMatrix, Matrix3, Matrix4, SVector, Vector3};

use super::{homogeneous, Correspondence, NormalizationTransform, SolverError};
use crate::lie::Homography;

/// Minimal sample size: each pair contributes three independent equations
/// towards the fifteen degrees of freedom.
pub const MIN_CORRESPONDENCES: usize = 5;

/// Second-smallest singular value relative to the largest below which the
/// nullspace is treated as non-unique.
const NULLSPACE_GAP: f64 = 1e-6;
/// RMS thickness of a normalized point set relative to its largest extent
/// below which the set counts as coplanar.
const PLANARITY_RATIO: f64 = 1e-2;
const MIN_DETERMINANT: f64 = 1e-12;

/// The six proportionality equations `ã_p (H b̃)_q − ã_q (H b̃)_p = 0`,
/// `p < q`, each linear in the row-major entries of `H`.
pub fn build_constraint_rows(c: &Correspondence) -> [SVector<f64, 16>; 6] {
    let a = homogeneous(&c.a);
    let b = homogeneous(&c.b);
    let mut rows = [SVector::<f64, 16>::zeros(); 6];
    let mut k = 0;
    for p in 0..4 {
        for q in (p + 1)..4 {
            let row = &mut rows[k];
            for col in 0..4 {
                // (H b̃)_q = Σ_c h[4q + c] b̃_c
                row[4 * q + col] += a[p] * b[col];
                row[4 * p + col] -= a[q] * b[col];
            }
            k += 1;
        }
    }
    rows
}

fn thickness_ratio(points: &[Vector3<f64>]) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    let cov = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / n;
    let eig = cov.symmetric_eigenvalues();
    let (lo, hi) = (eig.min().max(0.0), eig.max());
    if hi <= 0.0 {
        0.0
    } else {
        (lo / hi).sqrt()
    }
}

/// Normalized DLT for `ã ∝ H b̃` from five or more correspondences.
///
/// Both point sets are normalized, the stacked constraint system is solved
/// by SVD, the result is denormalized and divided by the fourth root of its
/// determinant. The overall sign is chosen so that `H b̃` has positive
/// homogeneous coordinate for most inputs, which keeps the estimate on the
/// identity side of `±H`.
pub fn solve_dlt(corrs: &[Correspondence]) -> Result<Homography, SolverError> {
    if corrs.len() < MIN_CORRESPONDENCES {
        return Err(SolverError::DegenerateSample(format!(
            "need at least {MIN_CORRESPONDENCES} correspondences, got {}",
            corrs.len()
        )));
    }
    let norm_a = NormalizationTransform::fit(corrs.iter().map(|c| &c.a))?;
    let norm_b = NormalizationTransform::fit(corrs.iter().map(|c| &c.b))?;
    let normalized: Vec<Correspondence> = corrs
        .iter()
        .map(|c| Correspondence::new(norm_a.apply(&c.a), norm_b.apply(&c.b)))
        .collect();

    let src: Vec<_> = normalized.iter().map(|c| c.b).collect();
    let dst: Vec<_> = normalized.iter().map(|c| c.a).collect();
    if thickness_ratio(&src) < PLANARITY_RATIO || thickness_ratio(&dst) < PLANARITY_RATIO {
        return Err(SolverError::DegenerateSample(
            "points are (nearly) coplanar".into(),
        ));
    }

    let mut system = DMatrix::<f64>::zeros(6 * normalized.len(), 16);
    for (i, c) in normalized.iter().enumerate() {
        for (k, row) in build_constraint_rows(c).iter().enumerate() {
            system.row_mut(6 * i + k).copy_from(&row.transpose());
        }
    }
    let svd = system.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| SolverError::DegenerateSample("SVD failed".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&x, &y| sv[x].total_cmp(&sv[y]));
    let (smallest, second, largest) = (order[0], order[1], order[order.len() - 1]);
    if sv[second] <= NULLSPACE_GAP * sv[largest] {
        return Err(SolverError::DegenerateSample(
            "nullspace is not one-dimensional".into(),
        ));
    }

    let h = v_t.row(smallest);
    let mut hn = Matrix4::from_fn(|r, c| h[4 * r + c]);
    let det = hn.determinant();
    if det.abs() <= MIN_DETERMINANT {
        return Err(SolverError::DegenerateSample(format!(
            "near-singular solution (det {det:e})"
        )));
    }
    if det < 0.0 {
        return Err(SolverError::DegenerateSample(
            "orientation-reversing solution".into(),
        ));
    }
    let positive = normalized
        .iter()
        .filter(|c| (hn * homogeneous(&c.b)).w > 0.0)
        .count();
    if 2 * positive < normalized.len() {
        hn = -hn;
    }

    let full = norm_a.inverse_matrix() * hn * norm_b.matrix();
    Ok(Homography::normalized(full)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::TangentVector;
    use crate::projective::transfer_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn generic_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn forward(h: &Homography, b: &[Vector3<f64>]) -> Vec<Correspondence> {
        b.iter()
            .map(|p| Correspondence::new(h.transform_point(p).unwrap(), *p))
            .collect()
    }

    #[test]
    fn identity_rows_vanish() {
        let c = Correspondence::new(Vector3::new(0.3, -1.0, 2.0), Vector3::new(0.3, -1.0, 2.0));
        let id = Matrix4::<f64>::identity();
        let h = SVector::<f64, 16>::from_fn(|k, _| id[(k / 4, k % 4)]);
        for row in build_constraint_rows(&c) {
            assert_eq!(row.dot(&h), 0.0);
        }
    }

    #[test]
    fn rows_vanish_on_the_generating_transform_and_have_rank_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let xi = TangentVector(SVector::from_fn(|_, _| rng.random_range(-0.3..0.3)));
            let h0 = Homography::exp(&xi);
            let b = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let c = Correspondence::new(h0.transform_point(&b).unwrap(), b);
            let hv = SVector::<f64, 16>::from_fn(|k, _| h0.matrix()[(k / 4, k % 4)]);
            let rows = build_constraint_rows(&c);
            for row in &rows {
                assert!(row.dot(&hv).abs() < 1e-12);
            }
            let block = DMatrix::from_fn(6, 16, |r, c| rows[r][c]);
            let sv = block.singular_values();
            let rank = sv.iter().filter(|s| **s > 1e-10 * sv.max()).count();
            assert_eq!(rank, 3);
        }
    }

    #[test]
    fn recovers_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = generic_points(&mut rng, 12);
        let corrs: Vec<_> = pts.iter().map(|p| Correspondence::new(*p, *p)).collect();
        let h = solve_dlt(&corrs).unwrap();
        assert!((h.matrix() - Matrix4::identity()).norm() < 1e-9);
    }

    #[test]
    fn recovers_forward_generated_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xi = TangentVector(SVector::from_fn(|_, _| rng.random_range(-0.2..0.2)));
        let h0 = Homography::exp(&xi);
        let corrs = forward(&h0, &generic_points(&mut rng, 20));
        let h = solve_dlt(&corrs).unwrap();
        let err = (h.matrix() - h0.matrix())
            .norm()
            .min((h.matrix() + h0.matrix()).norm());
        assert!(err < 1e-8, "err {err}");
        assert!((h.determinant() - 1.0).abs() < 1e-9);
        for c in &corrs {
            assert!(transfer_error(h.matrix(), c).unwrap() < 1e-9);
        }
    }

    #[test]
    fn coplanar_sources_are_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<_> = (0..5)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    0.5,
                )
            })
            .collect();
        let corrs: Vec<_> = pts.iter().map(|p| Correspondence::new(*p, *p)).collect();
        assert!(matches!(
            solve_dlt(&corrs),
            Err(SolverError::DegenerateSample(_))
        ));
    }

    #[test]
    fn too_few_points_is_degenerate() {
        let corrs = vec![Correspondence::new(Vector3::zeros(), Vector3::zeros()); 4];
        assert!(matches!(
            solve_dlt(&corrs),
            Err(SolverError::DegenerateSample(_))
        ));
    }
}
