use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every frame sees at least this many points.
pub const MIN_VISIBLE: usize = 50;
const NEAR: f64 = 0.2;
/// Half-extent of the image plane at unit depth (x, y).
const FOV_X: f64 = 0.7;
const FOV_Y: f64 = 0.55;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SceneLayout {
    /// Cameras sweep a partial circle looking outward into volumetric clutter.
    Room,
    /// Cameras travel once around a ring corridor and return to the start.
    CorridorLoop,
    /// All points on the plane z = 0, cameras looking straight down.
    PlanarFloor,
}

impl SceneLayout {
    pub fn as_str(self) -> &'static str {
        match self {
            SceneLayout::Room => "room",
            SceneLayout::CorridorLoop => "corridor_loop",
            SceneLayout::PlanarFloor => "planar_floor",
        }
    }

    fn far(self) -> f64 {
        match self {
            SceneLayout::Room => 8.0,
            SceneLayout::CorridorLoop => 6.0,
            SceneLayout::PlanarFloor => 10.0,
        }
    }
}

impl fmt::Display for SceneLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneLayout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "room" => Ok(SceneLayout::Room),
            "corridor_loop" | "corridor" => Ok(SceneLayout::CorridorLoop),
            "planar_floor" | "floor" => Ok(SceneLayout::PlanarFloor),
            other => Err(format!(
                "unknown layout {other:?} (expected room, corridor_loop or planar_floor)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub layout: SceneLayout,
    pub points: Vec<Vector3<f64>>,
    /// World-from-camera poses; cameras look along +z with y pointing down.
    pub cameras: Vec<Isometry3<f64>>,
    /// Per frame, indices of visible points in ascending order.
    pub visibility: Vec<Vec<usize>>,
}

impl Scene {
    pub fn frame_count(&self) -> usize {
        self.cameras.len()
    }

    pub fn camera_center(&self, frame: usize) -> Vector3<f64> {
        self.cameras[frame].translation.vector
    }

    /// Bounding-box diagonal of the point cloud.
    pub fn diameter(&self) -> f64 {
        bbox_diagonal(&self.points)
    }

    /// Summed distance between consecutive camera centers.
    pub fn trajectory_length(&self) -> f64 {
        self.cameras
            .windows(2)
            .map(|w| (w[1].translation.vector - w[0].translation.vector).norm())
            .sum()
    }
}

pub(crate) fn bbox(points: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

pub(crate) fn bbox_diagonal(points: &[Vector3<f64>]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let (lo, hi) = bbox(points);
    (hi - lo).norm()
}

/// Camera with optical axis `forward` and image x axis `forward × up`.
fn look_pose(center: Vector3<f64>, forward: Vector3<f64>, up: Vector3<f64>) -> Isometry3<f64> {
    let z = forward.normalize();
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    let r = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    Isometry3::from_parts(
        Translation3::from(center),
        UnitQuaternion::from_rotation_matrix(&r),
    )
}

fn in_view(cam_from_world: &Isometry3<f64>, p: &Vector3<f64>, far: f64) -> bool {
    let c = cam_from_world * Point3::from(*p);
    c.z > NEAR && c.z < far && (c.x / c.z).abs() <= FOV_X && (c.y / c.z).abs() <= FOV_Y
}

fn layout_cameras(layout: SceneLayout, n: usize) -> Vec<Isometry3<f64>> {
    let up = Vector3::z();
    (0..n)
        .map(|k| match layout {
            SceneLayout::Room => {
                let t = 1.5 * PI * k as f64 / n.max(1) as f64;
                let c = Vector3::new(t.cos(), t.sin(), 0.1 * (3.0 * t).sin());
                let heading = t + 0.3;
                look_pose(c, Vector3::new(heading.cos(), heading.sin(), 0.0), up)
            }
            SceneLayout::CorridorLoop => {
                // last pose repeats the first
                let t = 2.0 * PI * k as f64 / (n.max(2) - 1) as f64;
                let c = Vector3::new(4.0 * t.cos(), 4.0 * t.sin(), 0.0);
                look_pose(c, Vector3::new(-t.sin(), t.cos(), 0.0), up)
            }
            SceneLayout::PlanarFloor => {
                let t = 1.6 * PI * k as f64 / n.max(1) as f64;
                let c = Vector3::new(2.0 * t.cos(), 2.0 * t.sin(), 2.5);
                look_pose(c, -Vector3::z(), Vector3::new(-t.sin(), t.cos(), 0.0))
            }
        })
        .collect()
}

fn sample_point(layout: SceneLayout, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        match layout {
            SceneLayout::Room => {
                let p = Vector3::new(
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-2.0..2.0),
                );
                let r: f64 = p.xy().norm();
                if (2.5..6.0).contains(&r) {
                    return p;
                }
            }
            SceneLayout::CorridorLoop => {
                let p = Vector3::new(
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-1.5..1.5),
                );
                let r: f64 = p.xy().norm();
                if (2.0..6.0).contains(&r) && (r - 4.0).abs() > 0.7 {
                    return p;
                }
            }
            SceneLayout::PlanarFloor => {
                return Vector3::new(
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-6.0..6.0),
                    0.0,
                )
            }
        }
    }
}

/// A random point inside camera `pose`'s frustum (on the floor plane for
/// planar scenes).
fn sample_in_frustum(
    layout: SceneLayout,
    pose: &Isometry3<f64>,
    rng: &mut ChaCha8Rng,
) -> Vector3<f64> {
    let u = rng.random_range(-0.9 * FOV_X..0.9 * FOV_X);
    let v = rng.random_range(-0.9 * FOV_Y..0.9 * FOV_Y);
    let ray = pose.rotation * Vector3::new(u, v, 1.0);
    let origin = pose.translation.vector;
    let depth = match layout {
        SceneLayout::PlanarFloor => -origin.z / ray.z,
        _ => rng.random_range(1.0..layout.far() / 2.0),
    };
    let mut p = origin + ray * depth;
    if layout == SceneLayout::PlanarFloor {
        p.z = 0.0;
    }
    p
}

fn compute_visibility(
    layout: SceneLayout,
    points: &[Vector3<f64>],
    cameras: &[Isometry3<f64>],
) -> Vec<Vec<usize>> {
    cameras
        .iter()
        .map(|pose| {
            let inv = pose.inverse();
            (0..points.len())
                .filter(|&i| in_view(&inv, &points[i], layout.far()))
                .collect()
        })
        .collect()
}

/// Deterministic synthetic scene. Frames that would see fewer than
/// [`MIN_VISIBLE`] points get extra points inside their frustum.
pub fn make_scene(seed: u64, n_points: usize, n_frames: usize, layout: SceneLayout) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cameras = layout_cameras(layout, n_frames);
    let mut points: Vec<Vector3<f64>> = (0..n_points)
        .map(|_| sample_point(layout, &mut rng))
        .collect();
    let mut visibility = compute_visibility(layout, &points, &cameras);
    for _ in 0..8 {
        let mut added = false;
        for (pose, vis) in cameras.iter().zip(&visibility) {
            for _ in vis.len()..MIN_VISIBLE {
                points.push(sample_in_frustum(layout, pose, &mut rng));
                added = true;
            }
        }
        if !added {
            break;
        }
        visibility = compute_visibility(layout, &points, &cameras);
    }
    Scene {
        layout,
        points,
        cameras,
        visibility,
    }
}
