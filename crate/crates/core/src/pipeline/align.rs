use nalgebra::{Matrix4, Vector3, Vector4};

use super::frontend::shared_frame_correspondences;
use super::types::{FrameId, PipelineError, Submap, SubmapId};
use crate::lie::{nearest_rotation, Homography, Sim3Transform};
use crate::projective::{estimate_sim3, ransac_homography, Correspondence, SolverError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlignmentMode {
    /// 15-DOF projective alignment.
    Sl4,
    /// Similarity baseline.
    Sim3,
}

impl AlignmentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AlignmentMode::Sl4 => "sl4",
            AlignmentMode::Sim3 => "sim3",
        }
    }
}

impl std::str::FromStr for AlignmentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sl4" => Ok(AlignmentMode::Sl4),
            "sim3" => Ok(AlignmentMode::Sim3),
            other => Err(format!("unknown mode {other:?} (expected sl4 or sim3)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Sequential,
    Loop,
}

/// A measured relative transform `X_old = H · X_new` between two submaps.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub old: SubmapId,
    pub new: SubmapId,
    pub frame_id: FrameId,
    pub kind: EdgeKind,
    pub relative: Homography,
    /// Set in similarity mode.
    pub similarity: Option<Sim3Transform>,
    pub correspondences: Vec<Correspondence>,
    pub inlier_mask: Vec<bool>,
}

impl Alignment {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|m| **m).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    pub threshold: f64,
}

/// Camera center `dehomogenize(P⁻¹·e₄)`; `None` for singular or affine-at-infinity cameras.
pub fn camera_center(camera: &Matrix4<f64>) -> Option<Vector3<f64>> {
    let x = camera.try_inverse()? * Vector4::new(0.0, 0.0, 0.0, 1.0);
    (x.w.abs() > 1e-12 * x.norm()).then(|| x.xyz() / x.w)
}

/// Rigid part of a camera: `X ↦ R·(X − c)` with `R` the polar rotation of
/// the leading 3×3 block and `c` the camera center.
pub fn camera_rigid_part(camera: &Matrix4<f64>) -> Option<Sim3Transform> {
    let c = camera_center(camera)?;
    let sign = if camera[(3, 3)] < 0.0 { -1.0 } else { 1.0 };
    let r = nearest_rotation(&(camera.fixed_view::<3, 3>(0, 0) * sign));
    Some(Sim3Transform::rigid(r, -(r * c)))
}

fn similarity_alignment(
    old: &Submap,
    new: &Submap,
    frame_id: FrameId,
    corrs: &[Correspondence],
) -> Result<Sim3Transform, SolverError> {
    let degenerate = || SolverError::DegenerateConfiguration("camera has no finite center".into());
    let q_old = camera_rigid_part(&old.frame(frame_id).expect("shared frame").camera)
        .ok_or_else(degenerate)?;
    let q_new = camera_rigid_part(&new.frame(frame_id).expect("shared frame").camera)
        .ok_or_else(degenerate)?;
    let in_old: Vec<Vector3<f64>> = corrs.iter().map(|c| q_old.transform_point(&c.a)).collect();
    let in_new: Vec<Vector3<f64>> = corrs.iter().map(|c| q_new.transform_point(&c.b)).collect();
    let scale = estimate_sim3(&in_new, &in_old, Some(&Sim3Transform::identity()))?.scale;
    let s = Sim3Transform {
        scale,
        ..Sim3Transform::identity()
    };
    Ok(q_old.inverse().compose(&s).compose(&q_new))
}

/// Estimates `H` with `X_old = H·X_new` from `frame_id`'s pixel-aligned points.
#[allow(clippy::too_many_arguments)]
pub fn align_submaps(
    old: &Submap,
    new: &Submap,
    frame_id: FrameId,
    kind: EdgeKind,
    mode: AlignmentMode,
    ransac: RansacParams,
    seed: u64,
) -> Result<Alignment, PipelineError> {
    let corrs = shared_frame_correspondences(new, old, frame_id)?;
    let wrap = |source: SolverError| PipelineError::Alignment {
        old: old.submap_id,
        new: new.submap_id,
        frame_id,
        source,
    };
    let (relative, similarity, inlier_mask) = match mode {
        AlignmentMode::Sl4 => {
            let r = ransac_homography(&corrs, ransac.iterations, ransac.threshold, seed)
                .map_err(wrap)?;
            (r.h, None, r.inlier_mask)
        }
        AlignmentMode::Sim3 => {
            let s = similarity_alignment(old, new, frame_id, &corrs).map_err(wrap)?;
            (s.to_homography(), Some(s), vec![true; corrs.len()])
        }
    };
    Ok(Alignment {
        old: old.submap_id,
        new: new.submap_id,
        frame_id,
        kind,
        relative,
        similarity,
        correspondences: corrs,
        inlier_mask,
    })
}
