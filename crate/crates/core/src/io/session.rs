//! Session directories:
//!
//! ```text
//! manifest.txt              key=value parameters
//! frames.txt                frame_id disparity descriptor...
//! submaps/NNNN/frames.txt   requested frame ids, one per line
//! submaps/NNNN/<id>.camera  16 little-endian f64, row-major
//! submaps/NNNN/<id>.points  little-endian f32 xyz triples
//! submaps/NNNN/<id>.conf    little-endian f32 per point
//! gt/trajectory.tum         ground-truth poses (oracle sessions)
//! gt/points.ply             ground-truth cloud (oracle sessions)
//! ```

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix4, Vector3};

use super::kv::{read_kv_file, write_kv_file, KeyValues};
use super::ply::{write_ply_file, PointCloud};
use super::tum::{write_tum_file, TimedPose};
use super::{format_float, io_err, IoError};
use crate::oracle::{frame_stream, ground_truth, Scenario, SceneLayout, WarpKind, WarpModel};
use crate::pipeline::{
    plan_submaps, AlignmentMode, Frame, FrameEntry, FrameId, PipelineConfig, PipelineError,
    Reconstructor,
};

pub const MANIFEST: &str = "manifest.txt";
pub const FRAMES: &str = "frames.txt";
pub const GT_TRAJECTORY: &str = "gt/trajectory.tum";
pub const GT_POINTS: &str = "gt/points.ply";
const SUBMAPS: &str = "submaps";

pub fn write_frames<W: Write>(out: &mut W, frames: &[Frame]) -> std::io::Result<()> {
    for f in frames {
        write!(out, "{} {}", f.frame_id, format_float(f.disparity))?;
        for d in &f.descriptor {
            write!(out, " {}", format_float(*d))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_frames<R: Read>(input: R, context: &str) -> Result<Vec<Frame>, IoError> {
    let mut frames = Vec::new();
    for (n, line) in BufReader::new(input).lines().enumerate() {
        let bad = |m: String| IoError::Parse {
            context: context.to_string(),
            line: n + 1,
            message: m,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        if id.starts_with('#') {
            continue;
        }
        let frame_id = id
            .parse()
            .map_err(|_| bad(format!("bad frame id {id:?}")))?;
        let mut nums = fields.map(|f| {
            f.parse::<f64>()
                .map_err(|_| bad(format!("bad number {f:?}")))
        });
        let disparity = nums
            .next()
            .ok_or_else(|| bad("missing disparity".into()))??;
        let descriptor = nums.collect::<Result<Vec<_>, _>>()?;
        frames.push(Frame {
            frame_id,
            disparity,
            descriptor,
        });
    }
    Ok(frames)
}

pub fn write_frames_file(path: &Path, frames: &[Frame]) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_frames(&mut buf, frames).expect("writing to memory");
    std::fs::write(path, buf).map_err(io_err(path))
}

pub fn read_frames_file(path: &Path) -> Result<Vec<Frame>, IoError> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    read_frames(f, &path.display().to_string())
}

/// Pipeline parameters from a manifest; absent keys keep their defaults.
pub fn config_from_manifest(kv: &KeyValues) -> Result<PipelineConfig, IoError> {
    let mut c = PipelineConfig::default();
    macro_rules! load {
        ($($field:ident),*) => {
            $(if let Some(v) = kv.get(stringify!($field))? { c.$field = v; })*
        };
    }
    load!(
        w,
        w_loop,
        tau_disparity,
        tau_interval,
        tau_desc,
        tau_conf,
        ransac_iters,
        ransac_thresh,
        seed,
        loop_closure
    );
    if let Some(m) = kv.get::<AlignmentMode>("mode")? {
        c.mode = m;
    }
    Ok(c)
}

pub fn manifest_for_config(kv: &mut KeyValues, c: &PipelineConfig) {
    kv.set("w", c.w);
    kv.set("w_loop", c.w_loop);
    kv.set_float("tau_disparity", c.tau_disparity);
    kv.set("tau_interval", c.tau_interval);
    kv.set_float("tau_desc", c.tau_desc);
    kv.set_float("tau_conf", c.tau_conf);
    kv.set("ransac_iters", c.ransac_iters);
    kv.set_float("ransac_thresh", c.ransac_thresh);
    kv.set("seed", c.seed);
    kv.set("mode", c.mode.as_str());
    kv.set("loop_closure", c.loop_closure);
}

pub(crate) fn manifest_for_scenario(kv: &mut KeyValues, s: &Scenario) {
    kv.set("scenario.layout", s.layout);
    kv.set("scenario.n_points", s.n_points);
    kv.set("scenario.n_frames", s.n_frames);
    kv.set("scenario.seed", s.seed);
    kv.set("warp.kind", s.model.kind);
    kv.set_float("warp.magnitude", s.model.magnitude);
    kv.set_float("warp.noise_sigma", s.model.noise_sigma);
    kv.set_float("warp.outlier_fraction", s.model.outlier_fraction);
    kv.set_float("warp.drift", s.model.drift);
    kv.set("warp.anchor_first", s.model.anchor_first);
}

pub(crate) fn scenario_from_manifest(kv: &KeyValues) -> Result<Option<Scenario>, IoError> {
    let Some(layout) = kv.get::<SceneLayout>("scenario.layout")? else {
        return Ok(None);
    };
    Ok(Some(Scenario {
        layout,
        n_points: kv.require("scenario.n_points")?,
        n_frames: kv.require("scenario.n_frames")?,
        seed: kv.require("scenario.seed")?,
        model: WarpModel {
            kind: kv.require::<WarpKind>("warp.kind")?,
            magnitude: kv.require("warp.magnitude")?,
            noise_sigma: kv.require("warp.noise_sigma")?,
            outlier_fraction: kv.require("warp.outlier_fraction")?,
            drift: kv.require("warp.drift")?,
            anchor_first: kv.require("warp.anchor_first")?,
        },
    }))
}

/// A session directory opened for reading.
#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub dir: PathBuf,
    pub manifest: KeyValues,
    pub frames: Vec<Frame>,
}

impl Session {
    pub fn open(dir: &Path) -> Result<Self, IoError> {
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: read_kv_file(&dir.join(MANIFEST))?,
            frames: read_frames_file(&dir.join(FRAMES))?,
        })
    }

    /// Writes manifest and frame stream, creating the directory.
    pub fn create(dir: &Path, manifest: &KeyValues, frames: &[Frame]) -> Result<Self, IoError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_kv_file(&dir.join(MANIFEST), manifest)?;
        write_frames_file(&dir.join(FRAMES), frames)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: manifest.clone(),
            frames: frames.to_vec(),
        })
    }

    pub fn config(&self) -> Result<PipelineConfig, IoError> {
        config_from_manifest(&self.manifest)
    }

    /// The oracle scenario that generated this session, if any.
    pub fn scenario(&self) -> Result<Option<Scenario>, IoError> {
        scenario_from_manifest(&self.manifest)
    }

    pub fn set_scenario(&mut self, s: &Scenario) -> Result<(), IoError> {
        manifest_for_scenario(&mut self.manifest, s);
        write_kv_file(&self.dir.join(MANIFEST), &self.manifest)
    }
}

fn submap_dir(session: &Path, index: usize) -> PathBuf {
    session.join(SUBMAPS).join(format!("{index:04}"))
}

/// Stores one reconstruction under `submaps/NNNN/`.
pub fn write_submap(session: &Path, index: usize, frames: &[FrameEntry]) -> Result<(), IoError> {
    let dir = submap_dir(session, index);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut list = String::new();
    for f in frames {
        list.push_str(&format!("{}\n", f.frame_id));
        let cam: Vec<u8> = f
            .camera
            .transpose()
            .iter()
            .flat_map(|x| x.to_le_bytes())
            .collect();
        let pts: Vec<u8> = f
            .points
            .iter()
            .flat_map(|p| p.iter().map(|x| *x as f32).collect::<Vec<_>>())
            .flat_map(f32::to_le_bytes)
            .collect();
        let conf: Vec<u8> = f
            .confidences
            .iter()
            .flat_map(|c| (*c as f32).to_le_bytes())
            .collect();
        for (ext, bytes) in [("camera", cam), ("points", pts), ("conf", conf)] {
            let path = dir.join(format!("{}.{ext}", f.frame_id));
            std::fs::write(&path, bytes).map_err(io_err(&path))?;
        }
    }
    let path = dir.join(FRAMES);
    std::fs::write(&path, list).map_err(io_err(&path))
}

pub fn write_ground_truth(
    session: &Path,
    poses: &[TimedPose],
    points: &[Vector3<f64>],
) -> Result<(), IoError> {
    let dir = session.join("gt");
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_tum_file(&session.join(GT_TRAJECTORY), poses)?;
    write_ply_file(
        &session.join(GT_POINTS),
        &PointCloud {
            points: points.to_vec(),
            colors: vec![[200, 200, 200]; points.len()],
        },
    )
}

/// Generates an oracle session: frame stream, every reconstruction the
/// pipeline will request under `config`, and ground truth. The manifest
/// records both the scenario and `config`.
pub fn synthesize_session(
    dir: &Path,
    scenario: &Scenario,
    config: &PipelineConfig,
) -> Result<Session, IoError> {
    scenario
        .model
        .validate()
        .map_err(|e| IoError::Format(e.to_string()))?;
    let scene = scenario.scene();
    let frames = frame_stream(&scene, config.tau_disparity);
    let mut manifest = KeyValues::new();
    manifest_for_config(&mut manifest, config);
    manifest_for_scenario(&mut manifest, scenario);
    let session = Session::create(dir, &manifest, &frames)?;

    let plan = plan_submaps(&frames, config)?;
    let mut rec = scenario.reconstructor(&scene);
    for (k, planned) in plan.submaps.iter().enumerate() {
        let entries = rec.reconstruct(&planned.request.frame_ids)?;
        write_submap(dir, k, &entries)?;
    }
    let ids: Vec<FrameId> = frames.iter().map(|f| f.frame_id).collect();
    let gt = ground_truth(&scene, &ids).map_err(|e| IoError::Format(e.to_string()))?;
    write_ground_truth(dir, &gt.poses, &gt.points)?;
    Ok(session)
}

fn read_f32s(path: &Path) -> Result<Vec<f64>, IoError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 4 != 0 {
        return Err(IoError::Format(format!(
            "{}: length not a multiple of 4",
            path.display()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect())
}

fn read_frame_entry(dir: &Path, id: FrameId) -> Result<FrameEntry, IoError> {
    let path = dir.join(format!("{id}.camera"));
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    if bytes.len() != 128 {
        return Err(IoError::Format(format!(
            "{}: expected 16 f64",
            path.display()
        )));
    }
    let v: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let camera = Matrix4::from_row_slice(&v);
    let flat = read_f32s(&dir.join(format!("{id}.points")))?;
    if flat.len() % 3 != 0 {
        return Err(IoError::Format(format!(
            "{}: points are not triples",
            dir.display()
        )));
    }
    let points = flat
        .chunks_exact(3)
        .map(Vector3::from_column_slice)
        .collect();
    let conf = read_f32s(&dir.join(format!("{id}.conf")))?;
    FrameEntry::new(id, camera, points, conf).map_err(|e| IoError::Format(e.to_string()))
}

/// Serves stored reconstructions. A request is answered by a stored submap
/// that starts with the same frame and contains every requested frame, so
/// the same session also runs with loop closure disabled.
#[derive(Clone, Debug)]
pub struct DiskReconstructor {
    stored: Vec<(PathBuf, Vec<FrameId>)>,
}

impl DiskReconstructor {
    pub fn open(session: &Path) -> Result<Self, IoError> {
        let root = session.join(SUBMAPS);
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)
            .map_err(io_err(&root))?
            .map(|e| e.map(|e| e.path()).map_err(io_err(&root)))
            .collect::<Result<_, _>>()?;
        dirs.retain(|d| d.is_dir());
        dirs.sort();
        let stored = dirs
            .into_iter()
            .map(|d| {
                let ids: Vec<FrameId> = std::fs::read_to_string(d.join(FRAMES))
                    .map_err(io_err(&d.join(FRAMES)))?
                    .split_whitespace()
                    .map(|t| {
                        t.parse().map_err(|_| {
                            IoError::Format(format!("{}: bad frame id {t:?}", d.display()))
                        })
                    })
                    .collect::<Result<_, _>>()?;
                Ok((d, ids))
            })
            .collect::<Result<_, IoError>>()?;
        Ok(Self { stored })
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }
}

impl Reconstructor for DiskReconstructor {
    fn reconstruct(&mut self, frame_ids: &[FrameId]) -> Result<Vec<FrameEntry>, PipelineError> {
        let first = *frame_ids
            .first()
            .ok_or_else(|| PipelineError::Reconstructor("empty request".into()))?;
        let (dir, _) = self
            .stored
            .iter()
            .find(|(_, ids)| {
                let have: BTreeSet<&FrameId> = ids.iter().collect();
                ids.first() == Some(&first) && frame_ids.iter().all(|f| have.contains(f))
            })
            .ok_or_else(|| {
                PipelineError::Reconstructor(format!(
                    "no stored submap covers frames {frame_ids:?}"
                ))
            })?;
        frame_ids
            .iter()
            .map(|&id| {
                read_frame_entry(dir, id).map_err(|e| PipelineError::Reconstructor(e.to_string()))
            })
            .collect()
    }
}
