use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::timeline::Segment;

pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub video_id: String,
    pub label: String,
    pub start: f64,
    pub end: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    pub video_id: String,
    pub label: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub thresholds: Vec<f64>,
    /// mAP at each threshold, aligned with `thresholds`.
    pub ap_at: Vec<f64>,
    /// Mean of `ap_at` across thresholds.
    pub avg_map: f64,
    /// Per-class AP at each threshold.
    pub per_class: BTreeMap<String, Vec<f64>>,
}

impl MapReport {
    /// mAP at `threshold`, if it was evaluated.
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|t| (t - threshold).abs() < 1e-9)
            .map(|i| self.ap_at[i])
    }
}

fn tiou(a: (f64, f64), b: (f64, f64)) -> f64 {
    Segment::new("", a.0, a.1).tiou(&Segment::new("", b.0, b.1))
}

/// All-points interpolated AP from a ranked TP/FP sequence.
fn interpolated_ap(hits: &[bool], n_gt: usize) -> f64 {
    let mut prec = Vec::with_capacity(hits.len() + 2);
    let mut rec = Vec::with_capacity(hits.len() + 2);
    prec.push(0.0);
    rec.push(0.0);
    let mut tp = 0usize;
    for (i, &h) in hits.iter().enumerate() {
        tp += h as usize;
        prec.push(tp as f64 / (i + 1) as f64);
        rec.push(tp as f64 / n_gt as f64);
    }
    prec.push(0.0);
    rec.push(1.0);
    for i in (0..prec.len() - 1).rev() {
        prec[i] = prec[i].max(prec[i + 1]);
    }
    (1..rec.len())
        .filter(|&i| rec[i] != rec[i - 1])
        .map(|i| (rec[i] - rec[i - 1]) * prec[i])
        .sum()
}

fn class_ap(dets: &[&Detection], gts: &[&GtInstance], threshold: f64) -> f64 {
    let mut matched = vec![false; gts.len()];
    let mut hits = Vec::with_capacity(dets.len());
    for d in dets {
        let mut cands: Vec<(usize, f64)> = gts
            .iter()
            .enumerate()
            .filter(|(_, g)| g.video_id == d.video_id)
            .map(|(i, g)| (i, tiou((d.start, d.end), (g.start, g.end))))
            .collect();
        cands.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut hit = false;
        for (i, iou) in cands {
            if iou < threshold {
                break;
            }
            if matched[i] {
                continue;
            }
            matched[i] = true;
            hit = true;
            break;
        }
        hits.push(hit);
    }
    interpolated_ap(&hits, gts.len())
}

/// Detection mAP. Each prediction, taken in descending score order, claims
/// the unmatched ground-truth instance of the same class and video with the
/// highest temporal IoU, provided that IoU reaches the threshold. Classes
/// without ground truth are ignored.
pub fn map_at(
    predictions: &[Detection],
    ground_truth: &[GtInstance],
    thresholds: &[f64],
) -> Result<MapReport, MetricsError> {
    if let Some(&t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(MetricsError::BadThreshold(t));
    }
    let mut gt_by_class: BTreeMap<&str, Vec<&GtInstance>> = BTreeMap::new();
    for g in ground_truth {
        gt_by_class.entry(g.label.as_str()).or_default().push(g);
    }
    if gt_by_class.is_empty() {
        return Err(MetricsError::NoGroundTruth);
    }
    let mut per_class = BTreeMap::new();
    for (class, gts) in &gt_by_class {
        let mut dets: Vec<&Detection> = predictions.iter().filter(|d| d.label == *class).collect();
        dets.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.start.total_cmp(&b.start))
        });
        let aps = thresholds
            .iter()
            .map(|&t| class_ap(&dets, gts, t))
            .collect::<Vec<_>>();
        per_class.insert(class.to_string(), aps);
    }
    let n = per_class.len() as f64;
    let ap_at: Vec<f64> = (0..thresholds.len())
        .map(|i| per_class.values().map(|v| v[i]).sum::<f64>() / n)
        .collect();
    let avg_map = if ap_at.is_empty() {
        0.0
    } else {
        ap_at.iter().sum::<f64>() / ap_at.len() as f64
    };
    Ok(MapReport {
        thresholds: thresholds.to_vec(),
        ap_at,
        avg_map,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(label: &str, s: f64, e: f64, score: f64) -> Detection {
        Detection {
            video_id: "v".into(),
            label: label.into(),
            start: s,
            end: e,
            score,
        }
    }

    fn gt(label: &str, s: f64, e: f64) -> GtInstance {
        GtInstance {
            video_id: "v".into(),
            label: label.into(),
            start: s,
            end: e,
        }
    }

    #[test]
    fn single_match_thresholds() {
        let preds = [det("A", 1.0, 5.0, 0.9)];
        let gts = [gt("A", 0.0, 5.0)];
        let r = map_at(&preds, &gts, &[0.5, 0.9]).unwrap();
        assert_eq!(r.at(0.5), Some(1.0));
        assert_eq!(r.at(0.9), Some(0.0));
        assert_eq!(r.avg_map, 0.5);
    }

    #[test]
    fn half_recall() {
        let preds = [det("A", 1.0, 5.0, 0.9)];
        let gts = [gt("A", 0.0, 5.0), gt("A", 10.0, 15.0)];
        let r = map_at(&preds, &gts, &[0.5]).unwrap();
        assert_eq!(r.at(0.5), Some(0.5));
    }

    #[test]
    fn ranking_matters() {
        // A false positive ranked first halves the precision at full recall.
        let preds = [det("A", 20.0, 25.0, 0.95), det("A", 0.0, 5.0, 0.5)];
        let gts = [gt("A", 0.0, 5.0)];
        let r = map_at(&preds, &gts, &[0.5]).unwrap();
        assert_eq!(r.ap_at[0], 0.5);
        let preds = [det("A", 20.0, 25.0, 0.1), det("A", 0.0, 5.0, 0.5)];
        assert_eq!(map_at(&preds, &gts, &[0.5]).unwrap().ap_at[0], 1.0);
    }

    #[test]
    fn duplicates_are_false_positives() {
        let preds = [det("A", 0.0, 5.0, 0.9), det("A", 0.0, 5.0, 0.8)];
        let gts = [gt("A", 0.0, 5.0)];
        assert_eq!(map_at(&preds, &gts, &[0.5]).unwrap().ap_at[0], 1.0);
    }

    #[test]
    fn video_ids_are_respected() {
        let mut p = det("A", 0.0, 5.0, 0.9);
        p.video_id = "other".into();
        let r = map_at(&[p], &[gt("A", 0.0, 5.0)], &[0.5]).unwrap();
        assert_eq!(r.ap_at[0], 0.0);
    }

    #[test]
    fn classes_without_gt_ignored() {
        let preds = [det("A", 0.0, 5.0, 0.9), det("Z", 0.0, 5.0, 0.9)];
        let gts = [gt("A", 0.0, 5.0), gt("B", 5.0, 9.0)];
        let r = map_at(&preds, &gts, &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(r.per_class.len(), 2);
        assert!(r.ap_at.iter().all(|m| *m == 0.5));
    }

    #[test]
    fn errors() {
        assert_eq!(map_at(&[], &[], &[0.5]), Err(MetricsError::NoGroundTruth));
        assert!(matches!(
            map_at(&[], &[gt("A", 0.0, 1.0)], &[1.5]),
            Err(MetricsError::BadThreshold(_))
        ));
        assert_eq!(
            map_at(&[], &[gt("A", 0.0, 1.0)], &[0.5]).unwrap().ap_at[0],
            0.0
        );
    }
}
