//! Submap SLAM control flow: keyframe gating, submap scheduling, confidence
//! filtering, sequential and loop alignment, global optimization, and map
//! composition against a pluggable [`Reconstructor`].

mod align;
mod backend;
mod frontend;
mod run;
mod types;

pub use align::{
    align_submaps, camera_center, camera_rigid_part, Alignment, AlignmentMode, EdgeKind,
    RansacParams,
};
pub use backend::{
    build_graph_and_solve, compose_global_map, correct_cameras, CorrectedCamera, GlobalMap,
    Solution, SIMILARITY_TOLERANCE,
};
pub use frontend::{
    descriptor_similarity, filter_confidence, gate_keyframe, retrieve_loop_candidates,
    schedule_submap, shared_frame_correspondences, LoopCandidate, SubmapRequest,
};
pub use run::{
    plan_submaps, run_pipeline, PipelineConfig, PipelineOutput, PlannedSubmap, SubmapPlan,
};
pub use types::{
    Frame, FrameEntry, FrameId, FrameRole, PipelineError, Reconstructor, Submap, SubmapId,
};
