use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::timeline::Timeline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub per_class: BTreeMap<String, f64>,
    /// Mean over classes present in the ground truth.
    pub mean: f64,
}

/// Sorted, merged union of `[start, end)` intervals clipped to `[lo, hi]`.
pub fn interval_union(
    intervals: impl IntoIterator<Item = (f64, f64)>,
    lo: f64,
    hi: f64,
) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = intervals
        .into_iter()
        .map(|(s, e)| (s.max(lo), e.min(hi)))
        .filter(|(s, e)| e > s)
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (s, e) in v {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn measure(v: &[(f64, f64)]) -> f64 {
    v.iter().map(|(s, e)| e - s).sum()
}

fn intersection(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// Per-class temporal IoU in seconds, clipped to the ground-truth duration.
pub fn iou_per_class(pred: &Timeline, gt: &Timeline) -> Result<IouReport, MetricsError> {
    let d = gt.duration_s;
    let mut per_class = BTreeMap::new();
    for class in gt.labels() {
        let of = |t: &Timeline| {
            interval_union(
                t.segments
                    .iter()
                    .filter(|s| s.label == class)
                    .map(|s| (s.start, s.end)),
                0.0,
                d,
            )
        };
        let p = of(pred);
        let g = of(gt);
        let inter = intersection(&p, &g);
        let union = measure(&p) + measure(&g) - inter;
        let iou = if union > 0.0 { inter / union } else { 0.0 };
        per_class.insert(class, iou);
    }
    let mean = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    Ok(IouReport { per_class, mean })
}
