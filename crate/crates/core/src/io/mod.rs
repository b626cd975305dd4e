//! On-disk formats: binary PLY clouds, TUM trajectories, key-value text,
//! and session directories.

mod kv;
mod ply;
mod session;
mod tum;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use kv::{read_kv, read_kv_file, write_kv, write_kv_file, KeyValues};
pub use ply::{read_ply, read_ply_file, submap_color, write_ply, write_ply_file, PointCloud};
pub use session::{
    config_from_manifest, manifest_for_config, read_frames, read_frames_file, synthesize_session,
    write_frames, write_frames_file, write_ground_truth, write_submap, DiskReconstructor, Session,
    FRAMES, GT_POINTS, GT_TRAJECTORY, MANIFEST,
};
pub use tum::{read_tum, read_tum_file, write_tum, write_tum_file, TimedPose};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Pipeline(#[from] crate::pipeline::PipelineError),
    #[error("manifest key {key}: {message}")]
    Manifest { key: String, message: String },
}

/// Shortest round-trip text for `x`, in scientific notation when the
/// magnitude is tiny or huge.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}
