use nalgebra::Matrix4;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dlt::{solve_dlt, MIN_CORRESPONDENCES};
use super::{transfer_error, Correspondence, NormalizationTransform, SolverError};
use crate::lie::Homography;

#[derive(Clone, Debug, PartialEq)]
pub struct RansacResult {
    pub h: Homography,
    pub inlier_mask: Vec<bool>,
    pub inlier_count: usize,
    pub iterations_run: usize,
}

struct Score {
    count: usize,
    error_sum: f64,
    mask: Vec<bool>,
}

fn score(h: &Matrix4<f64>, corrs: &[Correspondence], threshold: f64) -> Score {
    let mut mask = vec![false; corrs.len()];
    let mut count = 0;
    let mut error_sum = 0.0;
    for (m, c) in mask.iter_mut().zip(corrs) {
        // points sent to infinity are outliers, not failures
        if let Ok(e) = transfer_error(h, c) {
            if e < threshold {
                *m = true;
                count += 1;
                error_sum += e;
            }
        }
    }
    Score {
        count,
        error_sum,
        mask,
    }
}

/// Transfer errors of `h` on `corrs`, measured after normalizing both sides
/// to centroid 0 and RMS radius √3 (the frame RANSAC thresholds in).
/// Points sent to infinity get `f64::INFINITY`.
pub fn normalized_transfer_errors(
    h: &Homography,
    corrs: &[Correspondence],
) -> Result<Vec<f64>, SolverError> {
    let norm_a = NormalizationTransform::fit(corrs.iter().map(|c| &c.a))?;
    let norm_b = NormalizationTransform::fit(corrs.iter().map(|c| &c.b))?;
    let hn = norm_a.matrix() * h.matrix() * norm_b.inverse_matrix();
    Ok(corrs
        .iter()
        .map(|c| {
            let cn = Correspondence::new(norm_a.apply(&c.a), norm_b.apply(&c.b));
            transfer_error(&hn, &cn).unwrap_or(f64::INFINITY)
        })
        .collect())
}

/// Sample stream for one iteration; independent of evaluation order.
fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

/// 5-point RANSAC over [`solve_dlt`], followed by one all-inlier refit.
///
/// Inliers are scored by transfer error below `threshold`, measured after
/// normalizing both point sets to centroid 0 and RMS radius √3. Among equal
/// inlier counts the smaller summed inlier error wins, then the earlier
/// iteration.
pub fn ransac_homography(
    corrs: &[Correspondence],
    iterations: usize,
    threshold: f64,
    seed: u64,
) -> Result<RansacResult, SolverError> {
    if corrs.len() < MIN_CORRESPONDENCES {
        return Err(SolverError::InsufficientInliers {
            found: corrs.len(),
            required: MIN_CORRESPONDENCES,
        });
    }
    let norm_a = NormalizationTransform::fit(corrs.iter().map(|c| &c.a))?;
    let norm_b = NormalizationTransform::fit(corrs.iter().map(|c| &c.b))?;
    let normalized: Vec<Correspondence> = corrs
        .iter()
        .map(|c| Correspondence::new(norm_a.apply(&c.a), norm_b.apply(&c.b)))
        .collect();

    let mut best: Option<(Score, Homography)> = None;
    let mut sample = Vec::with_capacity(MIN_CORRESPONDENCES);
    for it in 0..iterations {
        let mut rng = iteration_rng(seed, it);
        sample.clear();
        sample.extend(
            index::sample(&mut rng, normalized.len(), MIN_CORRESPONDENCES)
                .iter()
                .map(|i| normalized[i]),
        );
        let Ok(h) = solve_dlt(&sample) else {
            continue;
        };
        let s = score(h.matrix(), &normalized, threshold);
        let better = match &best {
            None => true,
            Some((b, _)) => s.count > b.count || (s.count == b.count && s.error_sum < b.error_sum),
        };
        if better {
            best = Some((s, h));
        }
    }

    let Some((best_score, _)) = best else {
        return Err(SolverError::InsufficientInliers {
            found: 0,
            required: MIN_CORRESPONDENCES,
        });
    };
    if best_score.count < MIN_CORRESPONDENCES {
        return Err(SolverError::InsufficientInliers {
            found: best_score.count,
            required: MIN_CORRESPONDENCES,
        });
    }

    let inliers: Vec<Correspondence> = normalized
        .iter()
        .zip(&best_score.mask)
        .filter(|(_, &m)| m)
        .map(|(c, _)| *c)
        .collect();
    let polished = solve_dlt(&inliers)?;
    let final_score = score(polished.matrix(), &normalized, threshold);
    if final_score.count < MIN_CORRESPONDENCES {
        return Err(SolverError::InsufficientInliers {
            found: final_score.count,
            required: MIN_CORRESPONDENCES,
        });
    }

    let h = norm_a.inverse_matrix() * polished.matrix() * norm_b.matrix();
    Ok(RansacResult {
        h: Homography::normalized(h)?,
        inlier_mask: final_score.mask,
        inlier_count: final_score.count,
        iterations_run: iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::TangentVector;
    use nalgebra::{SVector, Vector3};
    use rand::Rng;

    fn fixture(
        seed: u64,
        n: usize,
        outlier_fraction: f64,
    ) -> (Homography, Vec<Correspondence>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h0 = Homography::exp(&TangentVector(SVector::from_fn(|_, _| {
            rng.random_range(-0.15..0.15)
        })));
        let mut corrs = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..n {
            let b = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let a = h0.transform_point(&b).unwrap();
            if rng.random_bool(outlier_fraction) {
                corrs.push(Correspondence::new(
                    Vector3::from_fn(|_, _| rng.random_range(-1.5..1.5)),
                    b,
                ));
                truth.push(false);
            } else {
                corrs.push(Correspondence::new(a, b));
                truth.push(true);
            }
        }
        (h0, corrs, truth)
    }

    #[test]
    fn clean_data_is_all_inliers() {
        let (h0, corrs, _) = fixture(1, 60, 0.0);
        let r = ransac_homography(&corrs, 50, 0.01, 7).unwrap();
        assert!(r.inlier_mask.iter().all(|&m| m));
        assert_eq!(r.inlier_count, 60);
        assert!((r.h.matrix() - h0.matrix()).norm() < 1e-8);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (_, corrs, _) = fixture(4, 80, 0.3);
        let a = ransac_homography(&corrs, 100, 0.01, 99).unwrap();
        let b = ransac_homography(&corrs, 100, 0.01, 99).unwrap();
        assert_eq!(a.inlier_mask, b.inlier_mask);
        assert_eq!(a.iterations_run, b.iterations_run);
        assert_eq!(a.h, b.h);
    }

    #[test]
    fn rejects_outliers() {
        let (h0, corrs, truth) = fixture(8, 120, 0.3);
        let r = ransac_homography(&corrs, 300, 0.01, 3).unwrap();
        let true_pos = r
            .inlier_mask
            .iter()
            .zip(&truth)
            .filter(|(m, t)| **m && **t)
            .count();
        assert!(true_pos as f64 / r.inlier_count as f64 >= 0.99);
        assert!((r.h.matrix() - h0.matrix()).norm() < 1e-6);
    }

    #[test]
    fn normalized_errors_agree_with_the_inlier_mask() {
        let (_, corrs, _) = fixture(12, 80, 0.2);
        let r = ransac_homography(&corrs, 200, 0.01, 5).unwrap();
        let errs = normalized_transfer_errors(&r.h, &corrs).unwrap();
        for (e, m) in errs.iter().zip(&r.inlier_mask) {
            assert_eq!(*e < 0.01, *m);
        }
    }

    #[test]
    fn four_points_are_insufficient() {
        let (_, corrs, _) = fixture(2, 4, 0.0);
        assert!(matches!(
            ransac_homography(&corrs, 300, 0.01, 0),
            Err(SolverError::InsufficientInliers { .. })
        ));
    }
}
