//! Labelled time segments and the timelines built from them.

use serde::{Deserialize, Serialize};

/// Absolute tolerance, in seconds, used when checking timeline coverage.
pub const TIME_EPS: f64 = 1e-6;

/// A labelled interval `[start, end]` in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(label: impl Into<String>, start: f64, end: f64) -> Self {
        Self {
            label: label.into(),
            start,
            end,
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Length of the overlap with `[lo, hi]`, zero when disjoint.
    pub fn overlap(&self, lo: f64, hi: f64) -> f64 {
        (self.end.min(hi) - self.start.max(lo)).max(0.0)
    }

    /// Temporal intersection-over-union with another interval.
    pub fn tiou(&self, other: &Segment) -> f64 {
        let inter = self.overlap(other.start, other.end);
        let union = self.duration() + other.duration() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// An ordered list of segments over a video of known duration.
///
/// Ground-truth annotations, localization output and baselines all share this
/// representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    #[serde(rename = "duration")]
    pub duration_s: f64,
    pub segments: Vec<Segment>,
}

/// Ground truth uses the same shape as predictions.
pub type GroundTruthTimeline = Timeline;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TimelineError {
    #[error("non-positive or non-finite duration {0}")]
    BadDuration(f64),
    #[error("segment {index} ({label}) has end {end} < start {start}")]
    Inverted {
        index: usize,
        label: String,
        start: f64,
        end: f64,
    },
    #[error("segment {index} ({label}) [{start}, {end}] lies outside [0, {duration}]")]
    OutOfRange {
        index: usize,
        label: String,
        start: f64,
        end: f64,
        duration: f64,
    },
    #[error("segments {first} and {second} overlap")]
    Overlap { first: usize, second: usize },
    #[error("gap between segments {first} and {second}: {gap} s")]
    Gap {
        first: usize,
        second: usize,
        gap: f64,
    },
    #[error("timeline starts at {0} instead of 0")]
    LateStart(f64),
    #[error("timeline ends at {end} instead of the video duration {duration}")]
    EarlyEnd { end: f64, duration: f64 },
    #[error("timeline has no segments")]
    Empty,
}

impl Timeline {
    pub fn new(duration_s: f64, segments: Vec<Segment>) -> Self {
        Self {
            duration_s,
            segments,
        }
    }

    /// Checks the per-segment bounds and sorts segments by start time.
    pub fn validated(mut self) -> Result<Self, TimelineError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(TimelineError::BadDuration(self.duration_s));
        }
        for (index, s) in self.segments.iter().enumerate() {
            if s.end < s.start {
                return Err(TimelineError::Inverted {
                    index,
                    label: s.label.clone(),
                    start: s.start,
                    end: s.end,
                });
            }
            if !(s.start.is_finite() && s.end.is_finite())
                || s.start < 0.0
                || s.end > self.duration_s + TIME_EPS
            {
                return Err(TimelineError::OutOfRange {
                    index,
                    label: s.label.clone(),
                    start: s.start,
                    end: s.end,
                    duration: self.duration_s,
                });
            }
        }
        self.segments
            .sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
        Ok(self)
    }

    /// Rejects overlapping segments (assumes sorted input).
    pub fn check_disjoint(&self) -> Result<(), TimelineError> {
        for (i, pair) in self.segments.windows(2).enumerate() {
            if pair[1].start < pair[0].end - TIME_EPS {
                return Err(TimelineError::Overlap {
                    first: i,
                    second: i + 1,
                });
            }
        }
        Ok(())
    }

    /// Checks that the segments partition `[0, duration]` without gaps or overlaps.
    pub fn check_gapless(&self) -> Result<(), TimelineError> {
        let first = self.segments.first().ok_or(TimelineError::Empty)?;
        if first.start.abs() > TIME_EPS {
            return Err(TimelineError::LateStart(first.start));
        }
        for (i, pair) in self.segments.windows(2).enumerate() {
            let gap = pair[1].start - pair[0].end;
            if gap > TIME_EPS {
                return Err(TimelineError::Gap {
                    first: i,
                    second: i + 1,
                    gap,
                });
            }
            if gap < -TIME_EPS || pair[1].end < pair[1].start {
                return Err(TimelineError::Overlap {
                    first: i,
                    second: i + 1,
                });
            }
        }
        let last = self.segments.last().expect("non-empty");
        if (last.end - self.duration_s).abs() > TIME_EPS {
            return Err(TimelineError::EarlyEnd {
                end: last.end,
                duration: self.duration_s,
            });
        }
        Ok(())
    }

    pub fn is_gapless(&self) -> bool {
        self.check_gapless().is_ok()
    }

    /// Distinct labels in order of first appearance.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.segments {
            if !out.iter().any(|l| l == &s.label) {
                out.push(s.label.clone());
            }
        }
        out
    }

    /// Labels in segment order, repeats included (the task sequence of a
    /// gapless timeline).
    pub fn task_sequence(&self) -> Vec<String> {
        self.segments.iter().map(|s| s.label.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("timeline serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gapless() -> Timeline {
        Timeline::new(
            10.0,
            vec![Segment::new("a", 0.0, 4.0), Segment::new("b", 4.0, 10.0)],
        )
    }

    #[test]
    fn gapless_detection() {
        assert!(gapless().is_gapless());
        let mut t = gapless();
        t.segments[1].start = 4.5;
        assert!(matches!(t.check_gapless(), Err(TimelineError::Gap { .. })));
        let mut t = gapless();
        t.segments[1].end = 9.0;
        assert!(matches!(
            t.check_gapless(),
            Err(TimelineError::EarlyEnd { .. })
        ));
    }

    #[test]
    fn inverted_segment_rejected() {
        let t = Timeline::new(10.0, vec![Segment::new("a", 5.0, 4.0)]);
        assert!(matches!(t.validated(), Err(TimelineError::Inverted { .. })));
    }

    #[test]
    fn tiou_of_nested_intervals() {
        let gt = Segment::new("golf_swing", 4.0, 10.0);
        let p = Segment::new("golf_swing", 5.0, 10.0);
        assert!((gt.tiou(&p) - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(gt.tiou(&Segment::new("x", 20.0, 30.0)), 0.0);
    }

    #[test]
    fn task_sequence_keeps_repeats() {
        let t = Timeline::new(
            3.0,
            vec![
                Segment::new("a", 0.0, 1.0),
                Segment::new("b", 1.0, 2.0),
                Segment::new("a", 2.0, 3.0),
            ],
        );
        assert_eq!(t.task_sequence(), ["a", "b", "a"]);
        assert_eq!(t.labels(), ["a", "b"]);
    }
}
