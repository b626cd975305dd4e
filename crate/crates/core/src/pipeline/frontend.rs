use std::cmp::Ordering;

use super::types::{Frame, FrameId, FrameRole, PipelineError, Submap, SubmapId};
use crate::projective::{Correspondence, MIN_CORRESPONDENCES};

/// Keyframe test; `is_first` seeds the session.
pub fn gate_keyframe(frame: &Frame, tau_disparity: f64, is_first: bool) -> bool {
    is_first || frame.disparity > tau_disparity
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubmapRequest {
    pub frame_ids: Vec<FrameId>,
    pub roles: Vec<FrameRole>,
}

/// Request order: prior overlap frame, the new keyframes, then at most
/// `w_loop` loop frames.
pub fn schedule_submap(
    keyframes: &[FrameId],
    prior_frame: Option<FrameId>,
    loop_frames: &[FrameId],
    w_loop: usize,
) -> SubmapRequest {
    let mut frame_ids = Vec::with_capacity(keyframes.len() + 1 + w_loop);
    let mut roles = Vec::with_capacity(frame_ids.capacity());
    if let Some(p) = prior_frame {
        frame_ids.push(p);
        roles.push(FrameRole::PriorOverlap);
    }
    for &k in keyframes {
        frame_ids.push(k);
        roles.push(FrameRole::Regular);
    }
    for &l in loop_frames.iter().take(w_loop) {
        frame_ids.push(l);
        roles.push(FrameRole::Loop);
    }
    SubmapRequest { frame_ids, roles }
}

/// Prunes points whose confidence is below `tau_conf_percent` percent of
/// the submap's mean confidence.
pub fn filter_confidence(mut s: Submap, tau_conf_percent: f64) -> Result<Submap, PipelineError> {
    let (sum, count) = s
        .frames
        .iter()
        .flat_map(|f| &f.confidences)
        .fold((0.0, 0usize), |(s, n), c| (s + c, n + 1));
    if count == 0 {
        return Err(PipelineError::EmptySubmap(s.submap_id));
    }
    let cutoff = tau_conf_percent / 100.0 * (sum / count as f64);
    let mut kept = 0;
    for f in &mut s.frames {
        for (k, c) in f.keep.iter_mut().zip(&f.confidences) {
            *k = *k && *c >= cutoff;
            kept += usize::from(*k);
        }
    }
    if kept == 0 {
        return Err(PipelineError::EmptySubmap(s.submap_id));
    }
    Ok(s)
}

/// Pixel-aligned point pairs of `frame_id`, as `(old, new)`, over pixels
/// kept in both submaps.
pub fn shared_frame_correspondences(
    s_new: &Submap,
    s_old: &Submap,
    frame_id: FrameId,
) -> Result<Vec<Correspondence>, PipelineError> {
    let (Some(new), Some(old)) = (s_new.frame(frame_id), s_old.frame(frame_id)) else {
        return Err(PipelineError::NoSharedFrame { frame_id });
    };
    if new.points.len() != old.points.len() {
        return Err(PipelineError::PixelCountDiffers {
            frame_id,
            new: new.points.len(),
            old: old.points.len(),
        });
    }
    let corrs: Vec<Correspondence> = (0..new.points.len())
        .filter(|&k| new.keep[k] && old.keep[k])
        .map(|k| Correspondence::new(old.points[k], new.points[k]))
        .collect();
    if corrs.len() < MIN_CORRESPONDENCES {
        return Err(PipelineError::TooFewPoints {
            frame_id,
            found: corrs.len(),
        });
    }
    Ok(corrs)
}

/// Dot product of L2-normalized descriptors; 0 if either vanishes.
pub fn descriptor_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopCandidate {
    pub frame_id: FrameId,
    pub submap_id: SubmapId,
    pub similarity: f64,
}

/// Best matches of the current keyframes among history frames in submaps
/// `≤ latest − tau_interval`, above `tau_desc`, best first.
pub fn retrieve_loop_candidates(
    current: &[Frame],
    history: &[(SubmapId, Vec<Frame>)],
    latest: SubmapId,
    tau_desc: f64,
    tau_interval: usize,
    w_loop: usize,
) -> Vec<LoopCandidate> {
    let Some(horizon) = latest.checked_sub(tau_interval) else {
        return Vec::new();
    };
    let mut found: Vec<LoopCandidate> = history
        .iter()
        .filter(|(sid, _)| *sid <= horizon)
        .flat_map(|(sid, frames)| frames.iter().map(move |f| (*sid, f)))
        .filter_map(|(submap_id, past)| {
            let similarity = current
                .iter()
                .map(|c| descriptor_similarity(&c.descriptor, &past.descriptor))
                .fold(f64::NEG_INFINITY, f64::max);
            (similarity > tau_desc).then_some(LoopCandidate {
                frame_id: past.frame_id,
                submap_id,
                similarity,
            })
        })
        .collect();
    found.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .unwrap_or(Ordering::Equal)
            .then(a.frame_id.cmp(&b.frame_id))
    });
    found.truncate(w_loop);
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::FrameEntry;
    use nalgebra::{Matrix4, Vector3};

    fn frame(id: FrameId, disparity: f64, descriptor: Vec<f64>) -> Frame {
        Frame {
            frame_id: id,
            disparity,
            descriptor,
        }
    }

    fn submap(id: SubmapId, frames: Vec<FrameEntry>) -> Submap {
        let roles = vec![FrameRole::Regular; frames.len()];
        Submap {
            submap_id: id,
            frames,
            roles,
        }
    }

    fn entry(id: FrameId, conf: &[f64]) -> FrameEntry {
        let pts = (0..conf.len())
            .map(|k| Vector3::new(k as f64, (k * k) as f64, 1.0))
            .collect();
        FrameEntry::new(id, Matrix4::identity(), pts, conf.to_vec()).unwrap()
    }

    #[test]
    fn gating_is_strict() {
        assert!(gate_keyframe(&frame(1, 30.0, vec![]), 25.0, false));
        assert!(!gate_keyframe(&frame(1, 25.0, vec![]), 25.0, false));
        assert!(gate_keyframe(&frame(0, 0.0, vec![]), 25.0, true));
    }

    #[test]
    fn schedule_order_and_roles() {
        let r = schedule_submap(&[8, 9], Some(7), &[3], 1);
        assert_eq!(r.frame_ids, vec![7, 8, 9, 3]);
        assert_eq!(
            r.roles,
            vec![
                FrameRole::PriorOverlap,
                FrameRole::Regular,
                FrameRole::Regular,
                FrameRole::Loop
            ]
        );
        assert_eq!(schedule_submap(&[0, 1], None, &[], 1).frame_ids, vec![0, 1]);
        assert_eq!(
            schedule_submap(&[8, 9], Some(7), &[3, 2], 1)
                .frame_ids
                .len(),
            4
        );
    }

    #[test]
    fn confidence_cutoff_is_relative_to_the_mean() {
        let s = filter_confidence(submap(0, vec![entry(0, &[1.0, 1.0, 1.0, 0.1])]), 25.0).unwrap();
        assert_eq!(s.frames[0].keep, vec![true, true, true, false]);
        let s = filter_confidence(submap(0, vec![entry(0, &[2.0; 5])]), 25.0).unwrap();
        assert!(s.frames[0].keep.iter().all(|k| *k));
        let s = filter_confidence(submap(0, vec![entry(0, &[1.0, 0.0, 0.3])]), 0.0).unwrap();
        assert!(s.frames[0].keep.iter().all(|k| *k));
        assert_eq!(
            filter_confidence(submap(4, vec![entry(0, &[1.0; 3])]), 200.0),
            Err(PipelineError::EmptySubmap(4))
        );
    }

    #[test]
    fn correspondences_use_joint_survivors() {
        let mut a = entry(5, &[1.0; 8]);
        let mut b = entry(5, &[1.0; 8]);
        a.keep[0] = false;
        b.keep[1] = false;
        let old = submap(0, vec![a]);
        let new = submap(1, vec![b]);
        let c = shared_frame_correspondences(&new, &old, 5).unwrap();
        assert_eq!(c.len(), 6);
        assert!(c.iter().all(|c| c.a == c.b));
        assert_eq!(
            shared_frame_correspondences(&new, &old, 6),
            Err(PipelineError::NoSharedFrame { frame_id: 6 })
        );
        let few = submap(2, vec![entry(5, &[1.0; 4])]);
        assert!(matches!(
            shared_frame_correspondences(&few, &few, 5),
            Err(PipelineError::TooFewPoints { found: 4, .. })
        ));
    }

    #[test]
    fn loop_retrieval_rules() {
        let cur = vec![frame(20, 30.0, vec![1.0, 0.0])];
        let history = vec![
            (
                0,
                vec![
                    frame(1, 30.0, vec![1.0, 0.0]),
                    frame(2, 30.0, vec![0.0, 1.0]),
                ],
            ),
            (1, vec![frame(5, 30.0, vec![2.0, 0.0])]),
            (2, vec![frame(9, 30.0, vec![1.0, 0.0])]),
        ];
        let got = retrieve_loop_candidates(&cur, &history, 3, 0.8, 2, 1);
        assert_eq!(got.len(), 1);
        assert_eq!((got[0].frame_id, got[0].submap_id), (1, 0));
        let all = retrieve_loop_candidates(&cur, &history, 3, 0.8, 2, 5);
        assert_eq!(
            all.iter().map(|c| c.frame_id).collect::<Vec<_>>(),
            vec![1, 5]
        );
        assert!(retrieve_loop_candidates(&cur, &history, 1, 0.8, 2, 1).is_empty());
    }
}
