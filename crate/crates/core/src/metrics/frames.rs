use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_fps, MetricsError};
use crate::timeline::Timeline;

/// Number of frames `i` with `i / fps < duration`.
pub fn frame_count(duration_s: f64, fps: f64) -> usize {
    let mut n = (duration_s * fps).ceil().max(0.0) as usize;
    while n > 0 && (n - 1) as f64 / fps >= duration_s {
        n -= 1;
    }
    while (n as f64) / fps < duration_s {
        n += 1;
    }
    n
}

// First frame index whose time i / fps is >= t.
fn first_frame_at_or_after(t: f64, fps: f64) -> usize {
    if t <= 0.0 {
        return 0;
    }
    let mut i = (t * fps).ceil() as usize;
    while i > 0 && (i - 1) as f64 / fps >= t {
        i -= 1;
    }
    while (i as f64) / fps < t {
        i += 1;
    }
    i
}

/// Label of every frame in `[0, n_frames)`. A frame at time `t` belongs to
/// the first segment (in timeline order) with `start <= t < end`.
pub fn frame_labels(timeline: &Timeline, n_frames: usize, fps: f64) -> Vec<Option<&str>> {
    let mut out = vec![None; n_frames];
    // Paint in reverse so earlier segments win where segments overlap.
    for seg in timeline.segments.iter().rev() {
        let lo = first_frame_at_or_after(seg.start, fps).min(n_frames);
        let hi = first_frame_at_or_after(seg.end, fps).min(n_frames);
        for slot in &mut out[lo..hi.max(lo)] {
            *slot = Some(seg.label.as_str());
        }
    }
    out
}

fn aligned_labels<'a>(
    pred: &'a Timeline,
    gt: &'a Timeline,
    fps: f64,
) -> Result<(Vec<Option<&'a str>>, Vec<Option<&'a str>>), MetricsError> {
    check_fps(fps)?;
    if (pred.duration_s - gt.duration_s).abs() > 1.0 / fps {
        return Err(MetricsError::DurationMismatch {
            pred: pred.duration_s,
            gt: gt.duration_s,
        });
    }
    let n = frame_count(gt.duration_s, fps);
    Ok((frame_labels(pred, n, fps), frame_labels(gt, n, fps)))
}

/// Fraction of frames whose predicted label equals the ground truth.
pub fn mof(pred: &Timeline, gt: &Timeline, fps: f64) -> Result<f64, MetricsError> {
    let (p, g) = aligned_labels(pred, gt, fps)?;
    if g.is_empty() {
        return Ok(1.0);
    }
    let correct = p.iter().zip(&g).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / g.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: BTreeMap<String, ClassF1>,
    /// Unweighted mean over ground-truth classes.
    pub macro_f1: f64,
}

/// Frame-level per-class precision/recall/F1, macro-averaged over the
/// classes present in the ground truth.
pub fn f1(pred: &Timeline, gt: &Timeline, fps: f64) -> Result<F1Report, MetricsError> {
    let (p, g) = aligned_labels(pred, gt, fps)?;
    let mut per_class = BTreeMap::new();
    for class in gt.labels() {
        let c = Some(class.as_str());
        let mut tp = 0usize;
        let mut pred_n = 0usize;
        let mut gt_n = 0usize;
        for (a, b) in p.iter().zip(&g) {
            let in_pred = *a == c;
            let in_gt = *b == c;
            tp += (in_pred && in_gt) as usize;
            pred_n += in_pred as usize;
            gt_n += in_gt as usize;
        }
        let precision = if pred_n > 0 {
            tp as f64 / pred_n as f64
        } else {
            0.0
        };
        let recall = if gt_n > 0 {
            tp as f64 / gt_n as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.insert(
            class,
            ClassF1 {
                precision,
                recall,
                f1,
            },
        );
    }
    let macro_f1 = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().map(|c| c.f1).sum::<f64>() / per_class.len() as f64
    };
    Ok(F1Report {
        per_class,
        macro_f1,
    })
}
