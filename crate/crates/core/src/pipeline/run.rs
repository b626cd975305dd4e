use super::align::{align_submaps, Alignment, AlignmentMode, EdgeKind, RansacParams};
use super::backend::{build_graph_and_solve, Solution};
use super::frontend::{
    filter_confidence, gate_keyframe, retrieve_loop_candidates, schedule_submap, LoopCandidate,
    SubmapRequest,
};
use super::types::{Frame, FrameId, FrameRole, PipelineError, Reconstructor, Submap, SubmapId};
use crate::graph::LmConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    /// New keyframes per submap.
    pub w: usize,
    /// Loop frames appended per submap.
    pub w_loop: usize,
    pub tau_disparity: f64,
    /// Loop search covers submaps up to `latest − tau_interval`.
    pub tau_interval: usize,
    pub tau_desc: f64,
    /// Confidence cutoff as a percentage of the submap mean.
    pub tau_conf: f64,
    pub ransac_iters: usize,
    pub ransac_thresh: f64,
    pub seed: u64,
    pub mode: AlignmentMode,
    pub loop_closure: bool,
    pub lm: LmConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            w: 32,
            w_loop: 1,
            tau_disparity: 25.0,
            tau_interval: 2,
            tau_desc: 0.8,
            tau_conf: 25.0,
            ransac_iters: 300,
            ransac_thresh: 0.01,
            seed: 0,
            mode: AlignmentMode::Sl4,
            loop_closure: true,
            lm: LmConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.into()));
        if self.w == 0 {
            return bad("w must be positive");
        }
        if !(self.ransac_thresh > 0.0) {
            return bad("ransac threshold must be positive");
        }
        if self.ransac_iters == 0 {
            return bad("ransac iterations must be positive");
        }
        if !(self.tau_conf >= 0.0) || !self.tau_disparity.is_finite() {
            return bad("thresholds must be finite and nonnegative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub keyframes: Vec<FrameId>,
    pub submaps: Vec<Submap>,
    pub alignments: Vec<Alignment>,
    pub solution: Solution,
}

/// Per-edge RANSAC seed, so that skipping an edge does not shift the others.
fn edge_seed(seed: u64, submap: SubmapId, slot: usize) -> u64 {
    seed ^ ((submap as u64) << 8 | slot as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One scheduled reconstruction request.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedSubmap {
    pub request: SubmapRequest,
    /// Loop candidates that contributed the request's loop frames.
    pub loops: Vec<LoopCandidate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubmapPlan {
    pub keyframes: Vec<FrameId>,
    pub submaps: Vec<PlannedSubmap>,
}

fn check_stream(frames: &[Frame]) -> Result<(), PipelineError> {
    if frames.is_empty() {
        return Err(PipelineError::EmptyStream);
    }
    if let Some(w) = frames.windows(2).find(|w| w[1].frame_id <= w[0].frame_id) {
        return Err(PipelineError::InvalidConfig(format!(
            "frame ids must increase strictly ({} then {})",
            w[0].frame_id, w[1].frame_id
        )));
    }
    Ok(())
}

/// Keyframe gating, submap grouping, and loop retrieval. Depends only on the
/// frame stream and the configuration, never on reconstruction results.
pub fn plan_submaps(
    frames: &[Frame],
    config: &PipelineConfig,
) -> Result<SubmapPlan, PipelineError> {
    config.validate()?;
    check_stream(frames)?;
    let mut groups: Vec<Vec<Frame>> = Vec::new();
    let mut keyframes = Vec::new();
    let mut buffer: Vec<Frame> = Vec::with_capacity(config.w);
    for (k, f) in frames.iter().enumerate() {
        if !gate_keyframe(f, config.tau_disparity, k == 0) {
            continue;
        }
        keyframes.push(f.frame_id);
        buffer.push(f.clone());
        if buffer.len() == config.w {
            groups.push(std::mem::take(&mut buffer));
        }
    }
    if !buffer.is_empty() {
        groups.push(buffer);
    }

    let mut history: Vec<(SubmapId, Vec<Frame>)> = Vec::new();
    let mut prior: Option<FrameId> = None;
    let mut submaps = Vec::with_capacity(groups.len());
    for (id, group) in groups.into_iter().enumerate() {
        let loops = if config.loop_closure {
            retrieve_loop_candidates(
                &group,
                &history,
                id,
                config.tau_desc,
                config.tau_interval,
                config.w_loop,
            )
        } else {
            Vec::new()
        };
        let ids: Vec<FrameId> = group.iter().map(|f| f.frame_id).collect();
        let loop_ids: Vec<FrameId> = loops.iter().map(|l| l.frame_id).collect();
        let request = schedule_submap(&ids, prior, &loop_ids, config.w_loop);
        prior = ids.last().copied();
        history.push((id, group));
        submaps.push(PlannedSubmap { request, loops });
    }
    Ok(SubmapPlan { keyframes, submaps })
}

struct State<'a> {
    config: &'a PipelineConfig,
    submaps: Vec<Submap>,
    alignments: Vec<Alignment>,
    prior: Option<(FrameId, SubmapId)>,
}

impl State<'_> {
    fn process(
        &mut self,
        planned: PlannedSubmap,
        rec: &mut dyn Reconstructor,
    ) -> Result<(), PipelineError> {
        let c = self.config;
        let id = self.submaps.len();
        let PlannedSubmap { request, loops } = planned;

        let frames = rec.reconstruct(&request.frame_ids)?;
        if frames.len() != request.frame_ids.len()
            || frames
                .iter()
                .zip(&request.frame_ids)
                .any(|(f, id)| f.frame_id != *id)
        {
            return Err(PipelineError::Reconstructor(format!(
                "submap {id}: returned frames do not match the request"
            )));
        }
        let last_regular = request
            .frame_ids
            .iter()
            .zip(&request.roles)
            .filter(|(_, r)| **r == FrameRole::Regular)
            .map(|(f, _)| *f)
            .next_back();
        let submap = filter_confidence(
            Submap {
                submap_id: id,
                frames,
                roles: request.roles,
            },
            c.tau_conf,
        )?;
        log::debug!(
            "submap {id}: frames {:?}, {} points kept",
            request.frame_ids,
            submap.frames.iter().map(|f| f.kept_count()).sum::<usize>()
        );

        let ransac = RansacParams {
            iterations: c.ransac_iters,
            threshold: c.ransac_thresh,
        };
        if let Some((frame_id, old)) = self.prior {
            let a = align_submaps(
                &self.submaps[old],
                &submap,
                frame_id,
                EdgeKind::Sequential,
                c.mode,
                ransac,
                edge_seed(c.seed, id, 0),
            )?;
            log::debug!("submap {id} -> {old}: {} inliers", a.inlier_count());
            self.alignments.push(a);
        }
        for (slot, l) in loops.iter().enumerate() {
            match align_submaps(
                &self.submaps[l.submap_id],
                &submap,
                l.frame_id,
                EdgeKind::Loop,
                c.mode,
                ransac,
                edge_seed(c.seed, id, slot + 1),
            ) {
                Ok(a) => {
                    log::info!(
                        "loop closure: submap {id} -> {} via frame {} ({} inliers)",
                        l.submap_id,
                        l.frame_id,
                        a.inlier_count()
                    );
                    self.alignments.push(a);
                }
                Err(e) => log::warn!("skipping loop candidate frame {}: {e}", l.frame_id),
            }
        }

        self.prior = last_regular.map(|f| (f, id));
        self.submaps.push(submap);
        Ok(())
    }
}

/// Runs gating, submap scheduling, alignment, loop closure, and global
/// optimization over a frame stream.
pub fn run_pipeline(
    frames: &[Frame],
    reconstructor: &mut dyn Reconstructor,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let plan = plan_submaps(frames, config)?;
    let mut state = State {
        config,
        submaps: Vec::new(),
        alignments: Vec::new(),
        prior: None,
    };
    for planned in plan.submaps {
        state.process(planned, reconstructor)?;
    }

    let solution =
        build_graph_and_solve(&state.submaps, &state.alignments, config.mode, &config.lm)?;
    Ok(PipelineOutput {
        keyframes: plan.keyframes,
        submaps: state.submaps,
        alignments: state.alignments,
        solution,
    })
}
