use std::collections::BTreeSet;

use nalgebra::{DMatrix, Isometry3, Matrix4, Translation3, UnitQuaternion, Vector3};

use super::align::{camera_center, Alignment, AlignmentMode};
use super::types::{FrameId, FrameRole, PipelineError, Submap, SubmapId};
use crate::graph::{
    optimize_lm, write_dump, FactorGraph, GraphValues, LmConfig, OptimizationReport, VariableId,
    GAUGE_PRIOR_WEIGHT,
};
use crate::lie::{nearest_rotation, Homography, LieGroup, Sim3Transform};

/// Loosest deviation from a similarity for which a pose is still reported.
pub const SIMILARITY_TOLERANCE: f64 = 1e-2;

/// A camera after composition with its submap's absolute transform.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectedCamera {
    pub frame_id: FrameId,
    pub submap_id: SubmapId,
    pub role: FrameRole,
    /// Maps homogeneous global coordinates to homogeneous camera coordinates.
    pub matrix: Matrix4<f64>,
    pub center: Option<Vector3<f64>>,
    /// World-from-camera pose, present only for (numerical) similarities.
    pub pose: Option<Isometry3<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalMap {
    pub absolute: Vec<Homography>,
    pub points: Vec<Vector3<f64>>,
    pub point_submap: Vec<SubmapId>,
    /// One entry per regular frame, in stream order.
    pub cameras: Vec<CorrectedCamera>,
}

impl GlobalMap {
    pub fn trajectory(&self) -> Vec<(FrameId, Vector3<f64>)> {
        self.cameras
            .iter()
            .filter_map(|c| c.center.map(|p| (c.frame_id, p)))
            .collect()
    }
}

/// Rotation and center of a camera that is a similarity up to projective
/// scale, or `None`.
fn similarity_pose(m: &Matrix4<f64>) -> Option<Isometry3<f64>> {
    let center = camera_center(m)?;
    let w = m[(3, 3)];
    if w.abs() < 1e-12 * m.norm() {
        return None;
    }
    let m = m / w;
    let a = m.fixed_view::<3, 3>(0, 0).into_owned();
    let det = a.determinant();
    if !(det > 0.0) {
        return None;
    }
    let s = det.cbrt();
    let r = a / s;
    let ortho = (r.transpose() * r - nalgebra::Matrix3::identity()).norm();
    let bottom = m.fixed_view::<1, 3>(3, 0).norm() * s.recip() * center.norm().max(1.0);
    if ortho > SIMILARITY_TOLERANCE || bottom > SIMILARITY_TOLERANCE {
        return None;
    }
    let cam_from_world = nearest_rotation(&r);
    Some(Isometry3::from_parts(
        Translation3::from(center),
        UnitQuaternion::from_rotation_matrix(&cam_from_world.inverse()),
    ))
}

/// `P ↦ P·h_abs⁻¹` for every frame of `s`, so that `P·X` is unchanged
/// when points move by `X ↦ h_abs·X`.
pub fn correct_cameras(s: &Submap, h_abs: &Homography) -> Vec<CorrectedCamera> {
    let h_inv = h_abs.inverse();
    s.frames
        .iter()
        .zip(&s.roles)
        .map(|(f, role)| {
            let matrix = f.camera * h_inv.matrix();
            CorrectedCamera {
                frame_id: f.frame_id,
                submap_id: s.submap_id,
                role: *role,
                matrix,
                center: camera_center(&matrix),
                pose: similarity_pose(&matrix),
            }
        })
        .collect()
}

fn check_connected(n: usize, alignments: &[Alignment]) -> Result<(), PipelineError> {
    let mut reached: BTreeSet<SubmapId> = BTreeSet::from([0]);
    loop {
        let before = reached.len();
        for a in alignments {
            if reached.contains(&a.old) || reached.contains(&a.new) {
                reached.insert(a.old);
                reached.insert(a.new);
            }
        }
        if reached.len() == before {
            break;
        }
    }
    match (0..n).find(|k| !reached.contains(k)) {
        Some(k) => Err(PipelineError::DisconnectedGraph(k)),
        None => Ok(()),
    }
}

fn solve<G: LieGroup>(
    n: usize,
    edges: &[(SubmapId, SubmapId, G)],
    lm: &LmConfig,
) -> Result<(Vec<G>, OptimizationReport, String), PipelineError> {
    let mut graph = FactorGraph::new();
    graph.add_prior(
        VariableId(0),
        G::identity(),
        DMatrix::identity(G::DOF, G::DOF) * GAUGE_PRIOR_WEIGHT,
    )?;
    for (old, new, m) in edges {
        graph.add_between(
            VariableId(*old),
            VariableId(*new),
            m.clone(),
            DMatrix::identity(G::DOF, G::DOF),
        )?;
    }
    // odometry chain as initial guess; edges of a new submap to the one just
    // before it come first in the sequential list
    let mut init: Vec<Option<G>> = vec![None; n];
    init[0] = Some(G::identity());
    for (old, new, m) in edges {
        if init[*new].is_none() {
            if let Some(base) = &init[*old] {
                init[*new] = Some(base.compose(m));
            }
        }
    }
    let values: GraphValues<G> = init
        .into_iter()
        .enumerate()
        .map(|(k, v)| (VariableId(k), v.unwrap_or_else(G::identity)))
        .collect();
    let (solution, report) = optimize_lm(&graph, &values, lm)?;
    if !report.converged() {
        log::warn!(
            "graph optimization stopped after {} iterations at cost {:e}",
            report.iterations,
            report.final_cost
        );
    }
    let mut dump = Vec::new();
    write_dump(&mut dump, &graph, &solution).expect("writing to memory");
    let absolute = solution.into_values().collect();
    Ok((
        absolute,
        report,
        String::from_utf8(dump).expect("dump is ASCII"),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub global: GlobalMap,
    pub report: OptimizationReport,
    /// Text dump of the optimized graph.
    pub graph_dump: String,
}

/// Optimizes submap poses from the measured relative transforms (submap 0
/// anchored at identity) and fuses every submap into one frame.
pub fn build_graph_and_solve(
    submaps: &[Submap],
    alignments: &[Alignment],
    mode: AlignmentMode,
    lm: &LmConfig,
) -> Result<Solution, PipelineError> {
    let n = submaps.len();
    if n == 0 {
        return Err(PipelineError::EmptyStream);
    }
    check_connected(n, alignments)?;
    let mut ordered: Vec<&Alignment> = alignments.iter().collect();
    ordered.sort_by_key(|a| (a.new, a.kind == super::align::EdgeKind::Loop));

    let (absolute, report, graph_dump) = match mode {
        AlignmentMode::Sl4 => {
            let edges: Vec<_> = ordered.iter().map(|a| (a.old, a.new, a.relative)).collect();
            solve(n, &edges, lm)?
        }
        AlignmentMode::Sim3 => {
            let edges: Vec<(SubmapId, SubmapId, Sim3Transform)> = ordered
                .iter()
                .map(|a| {
                    let s = a.similarity.ok_or_else(|| {
                        PipelineError::InvalidConfig(format!(
                            "alignment {}->{} has no similarity estimate",
                            a.new, a.old
                        ))
                    })?;
                    Ok((a.old, a.new, s))
                })
                .collect::<Result<_, PipelineError>>()?;
            let (abs, report, dump) = solve(n, &edges, lm)?;
            (
                abs.iter().map(Sim3Transform::to_homography).collect(),
                report,
                dump,
            )
        }
    };

    Ok(Solution {
        global: compose_global_map(submaps, &absolute),
        report,
        graph_dump,
    })
}

/// Transforms every kept point and camera by its submap's absolute transform.
pub fn compose_global_map(submaps: &[Submap], absolute: &[Homography]) -> GlobalMap {
    let mut points = Vec::new();
    let mut point_submap = Vec::new();
    let mut cameras = Vec::new();
    let mut dropped = 0usize;
    for (s, h) in submaps.iter().zip(absolute) {
        for f in &s.frames {
            for p in f.kept_points() {
                match h.transform_point(p) {
                    Some(q) => {
                        points.push(q);
                        point_submap.push(s.submap_id);
                    }
                    None => dropped += 1,
                }
            }
        }
        cameras.extend(
            correct_cameras(s, h)
                .into_iter()
                .filter(|c| c.role == FrameRole::Regular),
        );
    }
    if dropped > 0 {
        log::warn!("{dropped} points mapped to the plane at infinity and were dropped");
    }
    GlobalMap {
        absolute: absolute.to_vec(),
        points,
        point_submap,
        cameras,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::TangentVector;
    use crate::pipeline::FrameEntry;
    use nalgebra::{Rotation3, Vector4};

    fn single_frame_submap(camera: Matrix4<f64>) -> Submap {
        Submap {
            submap_id: 0,
            frames: vec![
                FrameEntry::new(3, camera, vec![Vector3::new(1.0, 2.0, 3.0)], vec![1.0]).unwrap(),
            ],
            roles: vec![FrameRole::Regular],
        }
    }

    #[test]
    fn identity_correction_leaves_cameras_alone() {
        let cam = Sim3Transform::rigid(
            Rotation3::from_euler_angles(0.1, 0.2, -0.3),
            Vector3::new(1.0, 0.0, 2.0),
        )
        .to_matrix();
        let c = &correct_cameras(&single_frame_submap(cam), &Homography::identity())[0];
        assert_eq!(c.matrix, cam);
        assert!(c.pose.is_some());
    }

    #[test]
    fn rigid_correction_recovers_pose() {
        let t = Sim3Transform::rigid(
            Rotation3::from_euler_angles(0.3, -0.1, 0.5),
            Vector3::new(0.5, -1.0, 2.0),
        );
        let h = Homography::from_matrix(t.to_matrix()).unwrap();
        let c = &correct_cameras(&single_frame_submap(Matrix4::identity()), &h)[0];
        let pose = c.pose.unwrap();
        // camera was the submap origin, now at t's image of the origin
        assert!((pose.translation.vector - t.translation).norm() < 1e-12);
        assert!(
            pose.rotation
                .angle_to(&UnitQuaternion::from_rotation_matrix(&t.rotation))
                < 1e-12
        );
    }

    #[test]
    fn projective_correction_has_no_pose_but_keeps_incidence() {
        let mut xi = TangentVector::zeros();
        xi.0[9] = 0.3;
        xi.0[4] = 0.2;
        let h = Homography::exp(&xi);
        let s = single_frame_submap(Matrix4::identity());
        let c = &correct_cameras(&s, &h)[0];
        assert!(c.pose.is_none());
        let x = Vector4::new(1.0, 2.0, 3.0, 1.0);
        let before = s.frames[0].camera * x;
        let after = c.matrix * (h.matrix() * x);
        assert!((before - after).norm() < 1e-12);
    }

    #[test]
    fn single_submap_is_its_own_map() {
        let s = single_frame_submap(Matrix4::identity());
        let sol = build_graph_and_solve(
            std::slice::from_ref(&s),
            &[],
            AlignmentMode::Sl4,
            &LmConfig::default(),
        )
        .unwrap();
        assert_eq!(sol.global.absolute, vec![Homography::identity()]);
        assert_eq!(sol.global.points, vec![Vector3::new(1.0, 2.0, 3.0)]);
    }

    #[test]
    fn unconnected_submaps_are_rejected() {
        let mut b = single_frame_submap(Matrix4::identity());
        b.submap_id = 1;
        let a = single_frame_submap(Matrix4::identity());
        assert_eq!(
            build_graph_and_solve(&[a, b], &[], AlignmentMode::Sl4, &LmConfig::default()),
            Err(PipelineError::DisconnectedGraph(1))
        );
    }
}
