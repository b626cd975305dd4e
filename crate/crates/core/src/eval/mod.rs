//! Trajectory and reconstruction metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::Vector3;
use thiserror::Error;

use crate::lie::{umeyama_align, LieError, Sim3Transform};
use crate::oracle::{ground_truth, Scene};
use crate::pipeline::{FrameId, GlobalMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("trajectory lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("no common frames between trajectories")]
    NoCommonFrames,
    #[error("trajectory alignment failed: {0}")]
    Alignment(#[from] LieError),
    #[error("trim percentile {0} outside (0, 100]")]
    InvalidTrim(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AteAlignment {
    /// Rotation and translation.
    Se3,
    /// Rotation, translation, and scale.
    Sim3,
}

impl fmt::Display for AteAlignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AteAlignment::Se3 => "se3",
            AteAlignment::Sim3 => "sim3",
        })
    }
}

impl FromStr for AteAlignment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "se3" => Ok(AteAlignment::Se3),
            "sim3" => Ok(AteAlignment::Sim3),
            other => Err(format!(
                "unknown alignment {other:?} (expected se3 or sim3)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AteReport {
    pub rmse: f64,
    /// Maps the estimate onto the ground truth.
    pub alignment: Sim3Transform,
    /// Per-frame translation error after alignment.
    pub errors: Vec<f64>,
}

/// Root-mean-square translation error after aligning `est` onto `gt`.
pub fn ate_rmse(
    est: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    align: AteAlignment,
) -> Result<AteReport, EvalError> {
    if est.len() != gt.len() {
        return Err(EvalError::LengthMismatch(est.len(), gt.len()));
    }
    let alignment = umeyama_align(est, gt, align == AteAlignment::Sim3)?;
    let errors: Vec<f64> = est
        .iter()
        .zip(gt)
        .map(|(e, g)| (alignment.transform_point(e) - g).norm())
        .collect();
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
    Ok(AteReport {
        rmse,
        alignment,
        errors,
    })
}

pub type TimedPositions = [(FrameId, Vector3<f64>)];

/// Estimated and ground-truth positions of the common frames, in frame order.
pub type MatchedPositions = (Vec<Vector3<f64>>, Vec<Vector3<f64>>);

/// Pairs positions by frame id, in ascending id order.
pub fn match_by_frame(
    est: &TimedPositions,
    gt: &TimedPositions,
) -> Result<MatchedPositions, EvalError> {
    let gt: BTreeMap<FrameId, Vector3<f64>> = gt.iter().copied().collect();
    let mut pairs: Vec<(FrameId, Vector3<f64>, Vector3<f64>)> = est
        .iter()
        .filter_map(|(id, e)| gt.get(id).map(|g| (*id, *e, *g)))
        .collect();
    if pairs.is_empty() {
        return Err(EvalError::NoCommonFrames);
    }
    pairs.sort_by_key(|p| p.0);
    pairs.dedup_by_key(|p| p.0);
    Ok(pairs.into_iter().map(|(_, e, g)| (e, g)).unzip())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconReport {
    /// Mean distance from estimated points to the ground truth.
    pub accuracy: f64,
    /// Mean distance from ground-truth points to the estimate.
    pub completion: f64,
    pub chamfer: f64,
}

struct CloudIndex {
    tree: ImmutableKdTree<f64, 3>,
}

impl CloudIndex {
    fn new(points: &[Vector3<f64>]) -> Self {
        let coords: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        Self {
            tree: ImmutableKdTree::new_from_slice(&coords),
        }
    }

    fn nearest_distance(&self, q: &Vector3<f64>) -> f64 {
        self.tree
            .nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z])
            .distance
            .sqrt()
    }
}

fn trimmed_mean(mut d: Vec<f64>, trim: Option<f64>) -> f64 {
    if let Some(p) = trim {
        d.sort_by(f64::total_cmp);
        let keep = ((p / 100.0) * d.len() as f64).ceil().max(1.0) as usize;
        d.truncate(keep.min(d.len()));
    }
    d.iter().sum::<f64>() / d.len() as f64
}

/// Accuracy, completion, and Chamfer distance between two clouds expressed
/// in the same frame. `trim` keeps only distances up to that percentile.
pub fn recon_metrics(
    est: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    trim: Option<f64>,
) -> Result<ReconReport, EvalError> {
    if est.is_empty() || gt.is_empty() {
        return Err(EvalError::EmptyCloud);
    }
    if let Some(p) = trim {
        if !(p > 0.0 && p <= 100.0) {
            return Err(EvalError::InvalidTrim(p));
        }
    }
    let gt_index = CloudIndex::new(gt);
    let est_index = CloudIndex::new(est);
    let accuracy = trimmed_mean(
        est.iter().map(|p| gt_index.nearest_distance(p)).collect(),
        trim,
    );
    let completion = trimmed_mean(
        gt.iter().map(|p| est_index.nearest_distance(p)).collect(),
        trim,
    );
    Ok(ReconReport {
        accuracy,
        completion,
        chamfer: 0.5 * (accuracy + completion),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub ate: AteReport,
    /// Metrics of the estimated cloud after the trajectory alignment.
    pub recon: ReconReport,
    pub frames_matched: usize,
}

/// Aligns the estimated trajectory to the ground truth by frame id, then
/// scores the estimated cloud under that same alignment.
pub fn evaluate(
    est_trajectory: &TimedPositions,
    est_points: &[Vector3<f64>],
    gt_trajectory: &TimedPositions,
    gt_points: &[Vector3<f64>],
    align: AteAlignment,
    trim: Option<f64>,
) -> Result<EvalSummary, EvalError> {
    let (est, gt) = match_by_frame(est_trajectory, gt_trajectory)?;
    let ate = ate_rmse(&est, &gt, align)?;
    let aligned: Vec<Vector3<f64>> = est_points
        .iter()
        .map(|p| ate.alignment.transform_point(p))
        .collect();
    let recon = recon_metrics(&aligned, gt_points, trim)?;
    Ok(EvalSummary {
        ate,
        recon,
        frames_matched: est.len(),
    })
}

/// Scores a pipeline map against the oracle scene it was built from, using
/// every camera center (projective cameras included).
pub fn evaluate_map(
    map: &GlobalMap,
    scene: &Scene,
    align: AteAlignment,
    trim: Option<f64>,
) -> Result<EvalSummary, EvalError> {
    let trajectory = map.trajectory();
    let ids: Vec<FrameId> = trajectory.iter().map(|t| t.0).collect();
    let gt = ground_truth(scene, &ids).map_err(|_| EvalError::NoCommonFrames)?;
    evaluate(
        &trajectory,
        &map.points,
        &gt.centers(),
        &gt.points,
        align,
        trim,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Distribution;

    fn cloud(seed: u64, n: usize) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0)))
            .collect()
    }

    fn brute_force_mean(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p - q).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / from.len() as f64
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let t = cloud(1, 20);
        assert!(ate_rmse(&t, &t, AteAlignment::Se3).unwrap().rmse < 1e-12);
    }

    #[test]
    fn scale_is_absorbed_only_by_sim3() {
        let gt = cloud(2, 30);
        let est: Vec<_> = gt.iter().map(|p| p * 2.0).collect();
        assert!(ate_rmse(&est, &gt, AteAlignment::Sim3).unwrap().rmse < 1e-12);
        assert!(ate_rmse(&est, &gt, AteAlignment::Se3).unwrap().rmse > 0.1);
    }

    #[test]
    fn rigid_offsets_are_removed() {
        let gt = cloud(3, 25);
        let r = Rotation3::from_euler_angles(0.4, -0.2, 1.0);
        let est: Vec<_> = gt
            .iter()
            .map(|p| r * p + Vector3::new(3.0, -1.0, 0.5))
            .collect();
        assert!(ate_rmse(&est, &gt, AteAlignment::Se3).unwrap().rmse < 1e-10);
    }

    #[test]
    fn isotropic_noise_gives_sigma_root_three() {
        let gt = cloud(9, 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sigma = 0.01;
        let est: Vec<_> = gt
            .iter()
            .map(|p| {
                p + Vector3::from_fn(|_, _| {
                    let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    sigma * z
                })
            })
            .collect();
        let rmse = ate_rmse(&est, &gt, AteAlignment::Se3).unwrap().rmse;
        let expected = sigma * 3f64.sqrt();
        assert!((rmse - expected).abs() < 0.1 * expected, "{rmse}");
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(
            ate_rmse(&cloud(1, 3), &cloud(1, 4), AteAlignment::Se3),
            Err(EvalError::LengthMismatch(3, 4))
        );
    }

    #[test]
    fn frame_matching_intersects_ids() {
        let est = [(1, Vector3::x()), (2, Vector3::y()), (5, Vector3::z())];
        let gt = [(5, Vector3::zeros()), (1, Vector3::zeros())];
        let (e, g) = match_by_frame(&est, &gt).unwrap();
        assert_eq!(e, vec![Vector3::x(), Vector3::z()]);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn recon_metrics_of_identical_clouds_vanish() {
        let c = cloud(4, 200);
        let r = recon_metrics(&c, &c, None).unwrap();
        assert_eq!((r.accuracy, r.completion, r.chamfer), (0.0, 0.0, 0.0));
    }

    #[test]
    fn recon_metrics_match_brute_force() {
        let gt = cloud(5, 400);
        let est = cloud(6, 300);
        let r = recon_metrics(&est, &gt, None).unwrap();
        assert!((r.accuracy - brute_force_mean(&est, &gt)).abs() < 1e-12);
        assert!((r.completion - brute_force_mean(&gt, &est)).abs() < 1e-12);
        let swapped = recon_metrics(&gt, &est, None).unwrap();
        assert_eq!(swapped.accuracy, r.completion);
        assert_eq!(swapped.chamfer, r.chamfer);
    }

    #[test]
    fn uniform_offset_is_reported_on_both_sides() {
        // grid spacing 1 keeps the shifted copy nearest to its source
        let gt: Vec<_> = (0..1000)
            .map(|i| Vector3::new((i % 10) as f64, ((i / 10) % 10) as f64, (i / 100) as f64))
            .collect();
        let d = Vector3::new(0.03, -0.04, 0.0);
        let est: Vec<_> = gt.iter().map(|p| p + d).collect();
        let r = recon_metrics(&est, &gt, None).unwrap();
        assert!((r.accuracy - 0.05).abs() < 1e-12);
        assert!((r.completion - 0.05).abs() < 1e-12);
        assert!((r.accuracy - brute_force_mean(&est, &gt)).abs() < 1e-12);
    }

    #[test]
    fn half_deleted_estimate_is_accurate_but_incomplete() {
        let gt = cloud(7, 500);
        let r = recon_metrics(&gt[..250], &gt, None).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert!(r.completion > 0.0);
    }

    #[test]
    fn many_duplicate_points_are_indexed() {
        let mut gt = vec![Vector3::new(1.0, 1.0, 1.0); 500];
        gt.push(Vector3::zeros());
        let r = recon_metrics(&[Vector3::new(0.0, 0.0, 0.1)], &gt, None).unwrap();
        assert!((r.accuracy - 0.1).abs() < 1e-12);
    }

    #[test]
    fn trimming_drops_the_worst_distances() {
        let gt = cloud(8, 100);
        let mut est = gt.clone();
        est.push(Vector3::new(100.0, 0.0, 0.0));
        let full = recon_metrics(&est, &gt, None).unwrap();
        let trimmed = recon_metrics(&est, &gt, Some(99.0)).unwrap();
        assert!(full.accuracy > 0.5);
        assert_eq!(trimmed.accuracy, 0.0);
        assert_eq!(
            recon_metrics(&est, &gt, Some(0.0)),
            Err(EvalError::InvalidTrim(0.0))
        );
    }
}
