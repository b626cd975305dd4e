use nalgebra::{Matrix4, Vector3};
use thiserror::Error;

use crate::graph::GraphError;
use crate::projective::SolverError;

pub type FrameId = u64;
pub type SubmapId = usize;

/// One entry of the input stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub frame_id: FrameId,
    /// Pixels of apparent motion since the previous keyframe.
    pub disparity: f64,
    /// Place-recognition embedding.
    pub descriptor: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameRole {
    /// Last regular frame of the previous submap, repeated for alignment.
    PriorOverlap,
    Regular,
    /// Frame retrieved from an older submap as a loop candidate.
    Loop,
}

impl FrameRole {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameRole::PriorOverlap => "prior",
            FrameRole::Regular => "regular",
            FrameRole::Loop => "loop",
        }
    }
}

/// One reconstructed frame of a submap.
///
/// `camera` maps homogeneous submap coordinates to homogeneous camera
/// coordinates; the first frame of an unwarped submap has the identity.
/// `points[k]` is the 3D point seen at pixel `k`, so two reconstructions of
/// the same frame are index-aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameEntry {
    pub frame_id: FrameId,
    pub camera: Matrix4<f64>,
    pub points: Vec<Vector3<f64>>,
    pub confidences: Vec<f64>,
    /// Survivors of confidence filtering; pruning keeps pixel indices stable.
    pub keep: Vec<bool>,
}

impl FrameEntry {
    pub fn new(
        frame_id: FrameId,
        camera: Matrix4<f64>,
        points: Vec<Vector3<f64>>,
        confidences: Vec<f64>,
    ) -> Result<Self, PipelineError> {
        if points.len() != confidences.len() {
            return Err(PipelineError::PixelCountMismatch {
                frame_id,
                points: points.len(),
                confidences: confidences.len(),
            });
        }
        let keep = vec![true; points.len()];
        Ok(Self {
            frame_id,
            camera,
            points,
            confidences,
            keep,
        })
    }

    pub fn kept_points(&self) -> impl Iterator<Item = &Vector3<f64>> {
        self.points
            .iter()
            .zip(&self.keep)
            .filter(|(_, k)| **k)
            .map(|(p, _)| p)
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|k| **k).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Submap {
    pub submap_id: SubmapId,
    pub frames: Vec<FrameEntry>,
    pub roles: Vec<FrameRole>,
}

impl Submap {
    pub fn frame(&self, frame_id: FrameId) -> Option<&FrameEntry> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    pub fn regular_frames(&self) -> impl Iterator<Item = &FrameEntry> {
        self.frames
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == FrameRole::Regular)
            .map(|(f, _)| f)
    }

    pub fn point_count(&self) -> usize {
        self.frames.iter().map(|f| f.points.len()).sum()
    }
}

/// Produces a submap for an ordered frame request, expressed in a frame
/// anchored at the first requested frame (up to projective ambiguity).
pub trait Reconstructor {
    fn reconstruct(&mut self, frame_ids: &[FrameId]) -> Result<Vec<FrameEntry>, PipelineError>;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("submap {0} has no points left after confidence filtering")]
    EmptySubmap(SubmapId),
    #[error("frame {frame_id} is not in both submaps")]
    NoSharedFrame { frame_id: FrameId },
    #[error("only {found} jointly kept points on frame {frame_id} (need 5)")]
    TooFewPoints { frame_id: FrameId, found: usize },
    #[error("frame {frame_id}: {points} points but {confidences} confidences")]
    PixelCountMismatch {
        frame_id: FrameId,
        points: usize,
        confidences: usize,
    },
    #[error("frame {frame_id} has {new} pixels in the new submap but {old} in the old")]
    PixelCountDiffers {
        frame_id: FrameId,
        new: usize,
        old: usize,
    },
    #[error("aligning submap {new} to {old} on frame {frame_id}: {source}")]
    Alignment {
        old: SubmapId,
        new: SubmapId,
        frame_id: FrameId,
        source: SolverError,
    },
    #[error("submap {0} is not connected to submap 0")]
    DisconnectedGraph(SubmapId),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("reconstructor failed: {0}")]
    Reconstructor(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("frame stream is empty")]
    EmptyStream,
}
