use std::fmt;
use std::str::FromStr;

use nalgebra::{DVector, Isometry3, Matrix4, Point3, Vector3, Vector4};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use super::scene::{bbox, Scene};
use crate::lie::{Homography, LieGroup, Sim3Transform, TangentVector};
use crate::pipeline::{FrameEntry, FrameId, PipelineError, Reconstructor};

/// Warped points must keep a homogeneous weight above this (scene-normalized).
const MIN_WARPED_W: f64 = 0.05;
const MAX_WARP_DRAWS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("frame {0} is not in the scene")]
    UnknownFrame(FrameId),
    #[error("empty frame request")]
    EmptyRequest,
    #[error("invalid warp model: {0}")]
    InvalidModel(String),
    #[error("no admissible warp found after {0} draws")]
    WarpRejected(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WarpKind {
    Identity,
    Sim3,
    Sl4,
}

impl WarpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WarpKind::Identity => "identity",
            WarpKind::Sim3 => "sim3",
            WarpKind::Sl4 => "sl4",
        }
    }
}

impl fmt::Display for WarpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WarpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" | "none" => Ok(WarpKind::Identity),
            "sim3" => Ok(WarpKind::Sim3),
            "sl4" => Ok(WarpKind::Sl4),
            other => Err(format!("unknown warp kind {other:?}")),
        }
    }
}

/// How a simulated reconstruction departs from the truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpModel {
    pub kind: WarpKind,
    /// Bound on the tangent norm of the per-call warp, in scene-normalized units.
    pub magnitude: f64,
    /// Isotropic Gaussian noise added to points, in submap units.
    pub noise_sigma: f64,
    /// Fraction of points per frame replaced by uniform gross outliers.
    pub outlier_fraction: f64,
    /// Per-step standard deviation of a similarity random walk along the
    /// frames of each call (the first frame stays put). Translation steps
    /// are scaled by the submap radius.
    pub drift: f64,
    /// Leaves the first call unwarped so the first submap is metric.
    pub anchor_first: bool,
}

impl Default for WarpModel {
    fn default() -> Self {
        Self {
            kind: WarpKind::Identity,
            magnitude: 0.0,
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            drift: 0.0,
            anchor_first: true,
        }
    }
}

impl WarpModel {
    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::InvalidModel(m));
        if !(self.magnitude >= 0.0) || !self.magnitude.is_finite() {
            return bad(format!(
                "magnitude {} must be finite and nonnegative",
                self.magnitude
            ));
        }
        if self.kind == WarpKind::Sl4 && self.magnitude > 1.0 {
            return bad(format!("sl4 magnitude {} exceeds 1", self.magnitude));
        }
        if !(self.noise_sigma >= 0.0) || !(self.drift >= 0.0) {
            return bad("noise and drift must be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad(format!(
                "outlier fraction {} outside [0, 1)",
                self.outlier_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSubmap {
    pub frames: Vec<FrameEntry>,
    /// `X_submap = warp · X_anchor`, where anchor is the first requested camera's frame.
    pub warp: Homography,
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn scale_conjugate(m: &Matrix4<f64>, radius: f64) -> Matrix4<f64> {
    // S⁻¹·M·S with S = diag(1/r, 1/r, 1/r, 1)
    let s = Matrix4::from_diagonal(&Vector4::new(
        radius.recip(),
        radius.recip(),
        radius.recip(),
        1.0,
    ));
    let s_inv = Matrix4::from_diagonal(&Vector4::new(radius, radius, radius, 1.0));
    s_inv * m * s
}

fn draw_warp(
    model: &WarpModel,
    radius: f64,
    points: &[Vector3<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<Homography, OracleError> {
    for attempt in 0..MAX_WARP_DRAWS {
        let norm = model.magnitude * rng.random_range(0.5..=1.0) * 0.8f64.powi(attempt as i32);
        let core = match model.kind {
            WarpKind::Identity => return Ok(Homography::identity()),
            WarpKind::Sl4 => {
                let u = unit_direction(rng, 15) * norm;
                Homography::exp(&TangentVector::from_slice(u.as_slice())).into_matrix()
            }
            WarpKind::Sim3 => {
                let u = unit_direction(rng, 7) * norm;
                <Sim3Transform as LieGroup>::exp(&u)
                    .to_homography()
                    .into_matrix()
            }
        };
        let admissible = points.iter().all(|p| {
            let scaled = Vector4::new(p.x / radius, p.y / radius, p.z / radius, 1.0);
            core.row(3).transpose().dot(&scaled) > MIN_WARPED_W
        });
        if admissible {
            return Homography::normalized(scale_conjugate(&core, radius))
                .map_err(|e| OracleError::InvalidModel(e.to_string()));
        }
    }
    Err(OracleError::WarpRejected(MAX_WARP_DRAWS))
}

fn draw_drift(sigma: f64, radius: f64, rng: &mut ChaCha8Rng) -> Sim3Transform {
    let mut d = DVector::from_fn(7, |_, _| {
        sigma * {
            let z: f64 = StandardNormal.sample(rng);
            z
        }
    });
    for k in 0..3 {
        d[k] *= radius;
    }
    <Sim3Transform as LieGroup>::exp(&d)
}

fn dehomogenize(h: &Matrix4<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    let x = h * Vector4::new(p.x, p.y, p.z, 1.0);
    x.xyz() / x.w
}

/// One simulated reconstruction of `frame_ids`, anchored at the first
/// requested camera. All randomness comes from `(seed, call_index)`.
pub fn reconstruct(
    scene: &Scene,
    frame_ids: &[FrameId],
    model: &WarpModel,
    seed: u64,
    call_index: u64,
) -> Result<OracleSubmap, OracleError> {
    model.validate()?;
    let &first = frame_ids.first().ok_or(OracleError::EmptyRequest)?;
    let index_of = |id: FrameId| -> Result<usize, OracleError> {
        usize::try_from(id)
            .ok()
            .filter(|&k| k < scene.frame_count())
            .ok_or(OracleError::UnknownFrame(id))
    };
    let anchor: Isometry3<f64> = scene.cameras[index_of(first)?];
    let anchor_inv = anchor.inverse();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(call_index);

    let local: Vec<(usize, Vec<Vector3<f64>>)> = frame_ids
        .iter()
        .map(|&id| {
            let k = index_of(id)?;
            let pts = scene.visibility[k]
                .iter()
                .map(|&i| (anchor_inv * Point3::from(scene.points[i])).coords)
                .collect();
            Ok((k, pts))
        })
        .collect::<Result<_, OracleError>>()?;
    let all: Vec<Vector3<f64>> = local.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let radius = (all.iter().map(|p| p.norm_squared()).sum::<f64>() / all.len().max(1) as f64)
        .sqrt()
        .max(1e-9);

    let unwarped = model.magnitude == 0.0 || (model.anchor_first && call_index == 0);
    let warp = if unwarped {
        Homography::identity()
    } else {
        draw_warp(model, radius, &all, &mut rng)?
    };
    let warp_inv = warp.inverse();

    let mut frames = Vec::with_capacity(frame_ids.len());
    let mut drift = Sim3Transform::identity();
    for (slot, (&id, (k, pts))) in frame_ids.iter().zip(&local).enumerate() {
        if slot > 0 && model.drift > 0.0 {
            drift = drift.compose(&draw_drift(model.drift, radius, &mut rng));
        }
        let to_submap = warp.matrix() * drift.to_matrix();
        let cam_true = (scene.cameras[*k].inverse() * anchor).to_homogeneous();
        let camera = cam_true * drift.inverse().to_matrix() * warp_inv.matrix();

        let mut points: Vec<Vector3<f64>> = pts
            .iter()
            .map(|p| {
                let q = dehomogenize(&to_submap, p);
                if model.noise_sigma > 0.0 {
                    q + Vector3::from_fn(|_, _| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        model.noise_sigma * z
                    })
                } else {
                    q
                }
            })
            .collect();
        let mut confidences: Vec<f64> = (0..points.len())
            .map(|_| rng.random_range(0.8..1.2))
            .collect();
        let n_out = (model.outlier_fraction * points.len() as f64).round() as usize;
        if n_out > 0 {
            let (lo, hi) = bbox(&points);
            for i in index::sample(&mut rng, points.len(), n_out).into_vec() {
                points[i] = Vector3::from_fn(|r, _| {
                    if hi[r] > lo[r] {
                        rng.random_range(lo[r]..hi[r])
                    } else {
                        lo[r]
                    }
                });
                confidences[i] = rng.random_range(0.02..0.08);
            }
        }
        frames.push(
            FrameEntry::new(id, camera, points, confidences)
                .expect("points and confidences have equal length"),
        );
    }
    Ok(OracleSubmap { frames, warp })
}

/// [`Reconstructor`] backed by [`reconstruct`], counting calls.
#[derive(Clone, Debug)]
pub struct OracleReconstructor<'a> {
    pub scene: &'a Scene,
    pub model: WarpModel,
    pub seed: u64,
    /// Warp drawn for each call so far.
    pub warps: Vec<Homography>,
    /// Frame request of each call so far.
    pub requests: Vec<Vec<FrameId>>,
}

impl<'a> OracleReconstructor<'a> {
    pub fn new(scene: &'a Scene, model: WarpModel, seed: u64) -> Self {
        Self {
            scene,
            model,
            seed,
            warps: Vec::new(),
            requests: Vec::new(),
        }
    }
}

impl Reconstructor for OracleReconstructor<'_> {
    fn reconstruct(&mut self, frame_ids: &[FrameId]) -> Result<Vec<FrameEntry>, PipelineError> {
        let call = self.warps.len() as u64;
        let out = reconstruct(self.scene, frame_ids, &self.model, self.seed, call)
            .map_err(|e| PipelineError::Reconstructor(e.to_string()))?;
        self.warps.push(out.warp);
        self.requests.push(frame_ids.to_vec());
        Ok(out.frames)
    }
}
