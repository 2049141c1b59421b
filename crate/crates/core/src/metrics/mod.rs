//! Segmentation metrics (MoF, per-class IoU, frame-level F1) and detection
//! mAP over temporal IoU thresholds.

mod frames;
mod iou;
mod map;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::timeline::{Segment, Timeline};

pub use frames::{f1, frame_count, frame_labels, mof, ClassF1, F1Report};
pub use iou::{interval_union, iou_per_class, IouReport};
pub use map::{map_at, Detection, GtInstance, MapReport, DEFAULT_THRESHOLDS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("fps must be positive, got {0}")]
    BadFps(f64),
    #[error("prediction covers {pred} s but ground truth covers {gt} s")]
    DurationMismatch { pred: f64, gt: f64 },
    #[error("no ground-truth instances in any class; mAP is undefined")]
    NoGroundTruth,
    #[error("IoU threshold {0} outside (0, 1]")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mof: f64,
    pub mean_iou: f64,
    pub f1: f64,
    pub per_class: BTreeMap<String, ClassScores>,
}

impl EvalReport {
    /// Unweighted means of the headline numbers across videos.
    pub fn mean_of(reports: &[EvalReport]) -> Option<(f64, f64, f64)> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        Some((
            reports.iter().map(|r| r.mof).sum::<f64>() / n,
            reports.iter().map(|r| r.mean_iou).sum::<f64>() / n,
            reports.iter().map(|r| r.f1).sum::<f64>() / n,
        ))
    }
}

/// MoF, IoU and F1 for one video.
pub fn evaluate_segmentation(
    pred: &Timeline,
    gt: &Timeline,
    fps: f64,
) -> Result<EvalReport, MetricsError> {
    let mof = mof(pred, gt, fps)?;
    let iou = iou_per_class(pred, gt)?;
    let f1 = f1(pred, gt, fps)?;
    let per_class = f1
        .per_class
        .iter()
        .map(|(label, c)| {
            (
                label.clone(),
                ClassScores {
                    iou: iou.per_class.get(label).copied().unwrap_or(0.0),
                    precision: c.precision,
                    recall: c.recall,
                    f1: c.f1,
                },
            )
        })
        .collect();
    Ok(EvalReport {
        mof,
        mean_iou: iou.mean,
        f1: f1.macro_f1,
        per_class,
    })
}

/// Splits `[0, duration]` into equal consecutive segments, one per label.
pub fn uniform_baseline(labels: &[String], duration_s: f64) -> Timeline {
    let n = labels.len();
    let segments = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let start = duration_s * i as f64 / n as f64;
            let end = if i + 1 == n {
                duration_s
            } else {
                duration_s * (i + 1) as f64 / n as f64
            };
            Segment::new(l.clone(), start, end)
        })
        .collect();
    Timeline::new(duration_s, segments)
}

pub(crate) fn check_fps(fps: f64) -> Result<(), MetricsError> {
    if fps.is_finite() && fps > 0.0 {
        Ok(())
    } else {
        Err(MetricsError::BadFps(fps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(ls: &[&str]) -> Vec<String> {
        ls.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn baseline_partitions() {
        let t = uniform_baseline(&labels(&["a", "b"]), 10.0);
        assert_eq!(
            t.segments,
            vec![Segment::new("a", 0.0, 5.0), Segment::new("b", 5.0, 10.0)]
        );
        let t = uniform_baseline(&labels(&["a", "b", "c"]), 9.0);
        assert_eq!(t.segments[0].end, 3.0);
        assert_eq!(t.segments[1].end, 6.0);
        assert!(t.is_gapless());
        let t = uniform_baseline(&labels(&["only"]), 7.5);
        assert_eq!(t.segments, vec![Segment::new("only", 0.0, 7.5)]);
    }

    #[test]
    fn combined_report() {
        let gt = Timeline::new(
            10.0,
            vec![Segment::new("A", 0.0, 5.0), Segment::new("B", 5.0, 10.0)],
        );
        let pred = Timeline::new(
            10.0,
            vec![Segment::new("A", 0.0, 4.0), Segment::new("B", 4.0, 10.0)],
        );
        let r = evaluate_segmentation(&pred, &gt, 1.0).unwrap();
        assert!((r.mof - 0.9).abs() < 1e-12);
        assert!((r.mean_iou - (0.8 + 5.0 / 6.0) / 2.0).abs() < 1e-12);
        assert_eq!(r.per_class.len(), 2);
        assert!((r.per_class["A"].iou - 0.8).abs() < 1e-12);
        assert_eq!(r.per_class["A"].precision, 1.0);
        assert!((r.per_class["A"].recall - 0.8).abs() < 1e-12);
        let (m, _, _) = EvalReport::mean_of(&[r.clone(), r]).unwrap();
        assert!((m - 0.9).abs() < 1e-12);
    }
}
