use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EndWindow, LocalizeError, Localizer, TraceEntry};
use crate::imaging::TimeWindow;
use crate::timeline::{Segment, Timeline};
use crate::vlm::{Boundary, PromptContext};

/// Forward pass making start times non-decreasing: each start is raised to
/// its predecessor when it falls before it.
pub fn clamp_starts_forward(starts: &mut [f64]) {
    for i in 0..starts.len().saturating_sub(1) {
        if starts[i + 1] < starts[i] {
            starts[i + 1] = starts[i];
        }
    }
}

/// Forward pass lowering each end time to its successor's when it exceeds
/// it. Because the successor may itself be lowered later in the same pass,
/// the result can still decrease; the returned positions `i` satisfy
/// `ends[i] > ends[i + 1]` after the pass.
pub fn clamp_ends_forward(ends: &mut [f64]) -> Vec<usize> {
    for i in 0..ends.len().saturating_sub(1) {
        if ends[i] > ends[i + 1] {
            ends[i] = ends[i + 1];
        }
    }
    ends.windows(2)
        .enumerate()
        .filter(|(_, p)| p[0] > p[1])
        .map(|(i, _)| i)
        .collect()
}

/// Transition `i -> i+1` is the midpoint of task `i`'s end and task `i+1`'s start.
pub fn transition_midpoints(starts: &[f64], ends: &[f64]) -> Vec<f64> {
    (0..starts.len().saturating_sub(1))
        .map(|i| (ends[i] + starts[i + 1]) / 2.0)
        .collect()
}

/// Positions where the clamped boundaries still run backwards.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// `i` such that `end[i] > end[i + 1]` after clamping.
    pub end_inversions: Vec<usize>,
    /// `i` such that `transition[i] > transition[i + 1]`.
    pub transition_inversions: Vec<usize>,
}

impl MonotonicityReport {
    pub fn is_clean(&self) -> bool {
        self.end_inversions.is_empty() && self.transition_inversions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionResult {
    pub labels: Vec<String>,
    /// `transitions[i]` is the boundary between task `i` and task `i + 1`.
    pub transitions: Vec<f64>,
    pub raw_starts: Vec<f64>,
    pub raw_ends: Vec<f64>,
    pub per_task_start: Vec<f64>,
    pub per_task_end: Vec<f64>,
    /// Gapless segmentation of `[0, duration]` derived from `transitions`.
    pub timeline: Timeline,
    pub monotonicity: MonotonicityReport,
    pub trace: Vec<TraceEntry>,
}

impl TransitionResult {
    /// Applies the start/end clamping passes and midpoint rule to raw
    /// per-task estimates.
    ///
    /// Inversions left by the end pass are reported, not repaired. The
    /// derived timeline takes a running maximum over the transitions so that
    /// it stays a valid partition even when they are reported out of order.
    pub fn from_boundaries(
        labels: Vec<String>,
        raw_starts: Vec<f64>,
        raw_ends: Vec<f64>,
        duration_s: f64,
    ) -> Self {
        let mut starts = raw_starts.clone();
        clamp_starts_forward(&mut starts);
        let mut ends = raw_ends.clone();
        let end_inversions = clamp_ends_forward(&mut ends);
        let transitions: Vec<f64> = transition_midpoints(&starts, &ends)
            .into_iter()
            .map(|t| t.clamp(0.0, duration_s))
            .collect();
        let transition_inversions: Vec<usize> = transitions
            .windows(2)
            .enumerate()
            .filter(|(_, p)| p[0] > p[1])
            .map(|(i, _)| i)
            .collect();
        if !end_inversions.is_empty() || !transition_inversions.is_empty() {
            log::warn!(
                "non-monotone boundaries after clamping: end inversions at {end_inversions:?}, \
                 transition inversions at {transition_inversions:?}"
            );
        }

        let mut edges = Vec::with_capacity(labels.len() + 1);
        edges.push(0.0);
        let mut running = 0.0f64;
        for &t in &transitions {
            running = running.max(t);
            edges.push(running);
        }
        edges.push(duration_s);
        let segments = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Segment::new(l.clone(), edges[i], edges[i + 1]))
            .collect();

        Self {
            labels,
            transitions,
            raw_starts,
            raw_ends,
            per_task_start: starts,
            per_task_end: ends,
            timeline: Timeline::new(duration_s, segments),
            monotonicity: MonotonicityReport {
                end_inversions,
                transition_inversions,
            },
            trace: Vec::new(),
        }
    }
}

impl Localizer<'_> {
    fn boundary_pass(
        &self,
        labels: &[String],
        boundary: Boundary,
        windows: &[TimeWindow],
    ) -> Result<(Vec<f64>, Vec<TraceEntry>), LocalizeError> {
        let results: Vec<(f64, Vec<TraceEntry>)> = (0..labels.len())
            .into_par_iter()
            .map(|i| {
                let ctx = PromptContext::new(labels.to_vec(), i + 1, boundary, false)?;
                let search = self.localize_boundary(&ctx, windows[i], i as u64, 0)?;
                let time = search.time.expect("no-answer replies are disabled here");
                Ok((time, search.trace))
            })
            .collect::<Result<_, LocalizeError>>()?;
        let mut times = Vec::with_capacity(results.len());
        let mut trace = Vec::new();
        for (t, tr) in results {
            times.push(t);
            trace.extend(tr);
        }
        Ok((times, trace))
    }

    /// Estimates the transition times of a gapless task sequence.
    ///
    /// All start searches run concurrently, then all end searches; results
    /// are assembled in task order, so output does not depend on scheduling.
    pub fn estimate_transitions(
        &self,
        labels: &[String],
    ) -> Result<TransitionResult, LocalizeError> {
        if labels.len() < 2 {
            return Err(LocalizeError::TooFewLabels(labels.len()));
        }
        if labels.iter().any(|l| l.trim().is_empty()) {
            return Err(LocalizeError::EmptyLabel);
        }
        let duration = self.duration_s();
        let full = TimeWindow::full(duration)?;
        let (starts, mut trace) =
            self.boundary_pass(labels, Boundary::Start, &vec![full; labels.len()])?;

        let end_windows = match self.config.end_window {
            EndWindow::FullVideo => vec![full; labels.len()],
            EndWindow::AfterStart => {
                let mut clamped = starts.clone();
                clamp_starts_forward(&mut clamped);
                clamped
                    .iter()
                    .map(|&s| {
                        // A start at the very end leaves a degenerate window;
                        // keep one frame so the search stays well defined.
                        let lo = s.min(duration - 1.0 / self.frames.fps()).max(0.0);
                        TimeWindow::from_range(lo, duration)
                    })
                    .collect::<Result<_, _>>()?
            }
        };
        let (ends, end_trace) = self.boundary_pass(labels, Boundary::End, &end_windows)?;
        trace.extend(end_trace);

        let mut result = TransitionResult::from_boundaries(labels.to_vec(), starts, ends, duration);
        result.trace = trace;
        debug_assert!(result.timeline.is_gapless());
        Ok(result)
    }
}
