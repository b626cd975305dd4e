//! Synthetic stand-in for a feed-forward reconstructor.
//!
//! Builds ground-truth scenes and camera paths, then fabricates submaps
//! that are each warped by their own random projective (or similarity)
//! transform, with optional noise, gross outliers, and per-frame drift.

mod reconstruct;
mod scene;

use std::collections::BTreeSet;

use nalgebra::{Isometry3, Point3, Vector3};

use crate::pipeline::{Frame, FrameId};

pub use reconstruct::{
    reconstruct, OracleError, OracleReconstructor, OracleSubmap, WarpKind, WarpModel,
};
pub use scene::{make_scene, Scene, SceneLayout, MIN_VISIBLE};

/// Focal length, in pixels, used to synthesize disparities.
pub const FOCAL_PX: f64 = 500.0;
/// Upper bound on descriptor grid anchors per axis.
const MAX_ANCHORS_PER_AXIS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// World-from-camera poses in request order.
    pub poses: Vec<(FrameId, Isometry3<f64>)>,
    /// Union of the points visible in the requested frames.
    pub points: Vec<Vector3<f64>>,
}

impl GroundTruth {
    pub fn centers(&self) -> Vec<(FrameId, Vector3<f64>)> {
        self.poses
            .iter()
            .map(|(id, p)| (*id, p.translation.vector))
            .collect()
    }
}

pub fn ground_truth(scene: &Scene, frame_ids: &[FrameId]) -> Result<GroundTruth, OracleError> {
    let mut seen = BTreeSet::new();
    let mut poses = Vec::with_capacity(frame_ids.len());
    for &id in frame_ids {
        let k = usize::try_from(id)
            .ok()
            .filter(|&k| k < scene.frame_count())
            .ok_or(OracleError::UnknownFrame(id))?;
        poses.push((id, scene.cameras[k]));
        seen.extend(scene.visibility[k].iter().copied());
    }
    Ok(GroundTruth {
        poses,
        points: seen.into_iter().map(|i| scene.points[i]).collect(),
    })
}

/// Everything needed to regenerate an oracle session.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scenario {
    pub layout: SceneLayout,
    pub n_points: usize,
    pub n_frames: usize,
    /// Seeds both the scene and the per-call reconstructions.
    pub seed: u64,
    pub model: WarpModel,
}

impl Scenario {
    pub fn scene(&self) -> Scene {
        make_scene(self.seed, self.n_points, self.n_frames, self.layout)
    }

    pub fn reconstructor<'a>(&self, scene: &'a Scene) -> OracleReconstructor<'a> {
        OracleReconstructor::new(scene, self.model, self.seed)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 1.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn median_depth(scene: &Scene, frame: usize) -> f64 {
    let inv = scene.cameras[frame].inverse();
    median(
        scene.visibility[frame]
            .iter()
            .map(|&i| (inv * Point3::from(scene.points[i])).z)
            .collect(),
    )
}

/// Place descriptor: Gaussian responses of the camera center to a grid of
/// anchors spanning the trajectory, with length scale a tenth of its extent.
fn descriptors(scene: &Scene) -> Vec<Vec<f64>> {
    let centers: Vec<Vector3<f64>> = (0..scene.frame_count())
        .map(|k| scene.camera_center(k))
        .collect();
    let (lo, hi) = scene::bbox(&centers);
    let diag = (hi - lo).norm();
    let ell = if diag > 1e-9 { 0.1 * diag } else { 1.0 };
    let axes: Vec<Vec<f64>> = (0..3)
        .map(|a| {
            let extent = hi[a] - lo[a];
            let n = ((extent / ell).ceil() as usize + 1).clamp(1, MAX_ANCHORS_PER_AXIS);
            if n == 1 {
                vec![0.5 * (lo[a] + hi[a])]
            } else {
                (0..n)
                    .map(|i| lo[a] + extent * i as f64 / (n - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut anchors = Vec::new();
    for x in &axes[0] {
        for y in &axes[1] {
            for z in &axes[2] {
                anchors.push(Vector3::new(*x, *y, *z));
            }
        }
    }
    centers
        .iter()
        .map(|c| {
            anchors
                .iter()
                .map(|a| (-(c - a).norm_squared() / (2.0 * ell * ell)).exp())
                .collect()
        })
        .collect()
}

/// Frame records for the whole scene. Disparity is synthesized against the
/// previous keyframe under `tau_disparity`:
/// `FOCAL_PX · (baseline / median depth + rotation angle)`.
pub fn frame_stream(scene: &Scene, tau_disparity: f64) -> Vec<Frame> {
    let descs = descriptors(scene);
    let mut last_key = 0usize;
    descs
        .into_iter()
        .enumerate()
        .map(|(k, descriptor)| {
            let disparity = if k == 0 {
                0.0
            } else {
                let a = &scene.cameras[last_key];
                let b = &scene.cameras[k];
                let baseline = (b.translation.vector - a.translation.vector).norm();
                let angle = a.rotation.angle_to(&b.rotation);
                FOCAL_PX * (baseline / median_depth(scene, k).max(1e-6) + angle)
            };
            if k == 0 || disparity > tau_disparity {
                last_key = k;
            }
            Frame {
                frame_id: k as FrameId,
                disparity,
                descriptor,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::descriptor_similarity;
    use crate::projective::{solve_dlt, Correspondence};

    #[test]
    fn identity_warp_reproduces_camera_frame_truth() {
        let scene = make_scene(1, 400, 8, SceneLayout::Room);
        let out = reconstruct(&scene, &[2, 3], &WarpModel::default(), 5, 0).unwrap();
        let anchor = scene.cameras[2].inverse();
        for (f, k) in out.frames.iter().zip([2usize, 3]) {
            for (p, &i) in f.points.iter().zip(&scene.visibility[k]) {
                let expected = (anchor * Point3::from(scene.points[i])).coords;
                assert!((p - expected).norm() < 1e-12);
            }
        }
        assert!((out.frames[0].camera - nalgebra::Matrix4::identity()).norm() < 1e-12);
    }

    #[test]
    fn shared_frame_recovers_relative_warp() {
        let scene = make_scene(2, 600, 10, SceneLayout::Room);
        let model = WarpModel {
            kind: WarpKind::Sl4,
            magnitude: 0.3,
            anchor_first: false,
            ..WarpModel::default()
        };
        let a = reconstruct(&scene, &[0, 1, 2, 3], &model, 9, 0).unwrap();
        let b = reconstruct(&scene, &[3, 4, 5], &model, 9, 1).unwrap();
        let corrs: Vec<Correspondence> = a.frames[3]
            .points
            .iter()
            .zip(&b.frames[0].points)
            .map(|(p, q)| Correspondence::new(*p, *q))
            .collect();
        let h = solve_dlt(&corrs).unwrap();
        // X_a = W_a · T_a⁻¹·T_b · W_b⁻¹ · X_b
        let rigid = (scene.cameras[0].inverse() * scene.cameras[3]).to_homogeneous();
        let expected =
            crate::lie::Homography::normalized(a.warp.matrix() * rigid * b.warp.inverse().matrix())
                .unwrap();
        let err = (h.matrix() - expected.matrix())
            .norm()
            .min((h.matrix() + expected.matrix()).norm());
        assert!(err < 1e-7, "err {err}");
    }

    #[test]
    fn outliers_get_low_confidence() {
        let scene = make_scene(3, 800, 6, SceneLayout::Room);
        let model = WarpModel {
            outlier_fraction: 0.3,
            ..WarpModel::default()
        };
        let out = reconstruct(&scene, &[0, 1, 2], &model, 1, 0).unwrap();
        let (low, total) = out.frames.iter().fold((0, 0), |(l, t), f| {
            (
                l + f.confidences.iter().filter(|c| **c < 0.1).count(),
                t + f.confidences.len(),
            )
        });
        let frac = low as f64 / total as f64;
        assert!((frac - 0.3).abs() < 0.02, "{frac}");
    }

    #[test]
    fn same_call_same_output() {
        let scene = make_scene(4, 500, 6, SceneLayout::CorridorLoop);
        let model = WarpModel {
            kind: WarpKind::Sl4,
            magnitude: 0.5,
            noise_sigma: 0.01,
            outlier_fraction: 0.1,
            drift: 0.01,
            anchor_first: true,
        };
        let a = reconstruct(&scene, &[1, 2], &model, 3, 4).unwrap();
        let b = reconstruct(&scene, &[1, 2], &model, 3, 4).unwrap();
        assert_eq!(a, b);
        let c = reconstruct(&scene, &[1, 2], &model, 3, 5).unwrap();
        assert_ne!(a.warp, c.warp);
    }

    #[test]
    fn ground_truth_lists_requested_poses() {
        let scene = make_scene(5, 300, 6, SceneLayout::Room);
        let gt = ground_truth(&scene, &[0, 2, 4]).unwrap();
        assert_eq!(gt.poses.len(), 3);
        assert!(gt.points.iter().all(|p| scene.points.contains(p)));
        assert_eq!(
            ground_truth(&scene, &[9]),
            Err(OracleError::UnknownFrame(9))
        );
    }

    #[test]
    fn loop_start_and_end_share_descriptors() {
        let scene = make_scene(6, 1500, 25, SceneLayout::CorridorLoop);
        let frames = frame_stream(&scene, 25.0);
        let sim = descriptor_similarity(&frames[0].descriptor, &frames[24].descriptor);
        assert!(sim > 0.999);
        let mid = descriptor_similarity(&frames[0].descriptor, &frames[12].descriptor);
        assert!(mid < 0.8);
        assert!(frames[1..].iter().all(|f| f.disparity > 25.0));
    }
}
