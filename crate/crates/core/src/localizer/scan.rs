use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LocalizeError, Localizer, TraceEntry};
use crate::timeline::Segment;
use crate::vlm::{Boundary, PromptContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub segments: Vec<Segment>,
    pub trace: Vec<TraceEntry>,
    /// Number of scan windows queried, summed over labels.
    pub windows_scanned: usize,
}

impl Localizer<'_> {
    fn scan_label(
        &self,
        label: &str,
        task: u64,
        scan_window_s: f64,
    ) -> Result<(Vec<Segment>, Vec<TraceEntry>, usize), LocalizeError> {
        let duration = self.duration_s();
        let frame = 1.0 / self.frames.fps();
        let n = self.config.grid.cells();
        let ctx = PromptContext::single(label, Boundary::Start, true);
        let mut cursor = 0.0f64;
        let mut scope = 0u64;
        let mut segments = Vec::new();
        let mut trace = Vec::new();

        while cursor < duration {
            let hi = (cursor + scan_window_s).min(duration);
            let (found, window_trace) = self.localize_action_in(&ctx, cursor, hi, task, scope)?;
            trace.extend(window_trace);
            scope += 1;
            let next = match found {
                None => cursor + scan_window_s,
                Some(seg) => {
                    let badge_interval = (hi - cursor) / (n - 1) as f64;
                    let next = if seg.duration() > 0.0 {
                        let end = seg.end;
                        segments.push(seg);
                        end
                    } else {
                        seg.end.max(cursor) + badge_interval
                    };
                    next.max(cursor + frame)
                }
            };
            debug_assert!(next > cursor);
            cursor = next;
        }
        Ok((segments, trace, scope as usize))
    }

    /// Scans the video in consecutive windows of `scan_window_s` seconds for
    /// each label. A window whose first query reports the action absent is
    /// skipped; otherwise the action is localized inside it and scanning
    /// resumes from its end.
    pub fn windowed_scan(
        &self,
        labels: &[String],
        scan_window_s: f64,
    ) -> Result<ScanResult, LocalizeError> {
        if !(scan_window_s.is_finite() && scan_window_s > 0.0) {
            return Err(LocalizeError::Config(format!(
                "scan window must be positive, got {scan_window_s}"
            )));
        }
        if labels.iter().any(|l| l.trim().is_empty()) {
            return Err(LocalizeError::EmptyLabel);
        }
        let per_label = labels
            .par_iter()
            .enumerate()
            .map(|(i, label)| self.scan_label(label, i as u64, scan_window_s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut result = ScanResult {
            segments: Vec::new(),
            trace: Vec::new(),
            windows_scanned: 0,
        };
        for (segments, trace, windows) in per_label {
            result.segments.extend(segments);
            result.trace.extend(trace);
            result.windows_scanned += windows;
        }
        result.segments.sort_by(|a, b| {
            a.start
                .total_cmp(&b.start)
                .then_with(|| a.label.cmp(&b.label))
        });
        Ok(result)
    }
}
