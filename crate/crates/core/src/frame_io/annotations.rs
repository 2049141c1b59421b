//! Ground-truth adapters: plain JSON timelines, Breakfast-style frame ranges
//! and THUMOS-style CSV rows.

use std::path::Path;
use std::str::FromStr;

use crate::timeline::{Segment, Timeline, TimelineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationFormat {
    Json,
    BreakfastTxt,
    ThumosCsv,
}

impl FromStr for AnnotationFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "breakfast_txt" | "breakfast" => Ok(Self::BreakfastTxt),
            "thumos_csv" | "thumos" => Ok(Self::ThumosCsv),
            other => Err(format!(
                "unknown annotation format {other:?} (expected json, breakfast_txt or thumos_csv)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Required for `breakfast_txt`, whose ranges are in frames.
    pub fps: Option<f64>,
    /// Treat Breakfast frame numbers as 0-based instead of the default 1-based.
    pub zero_based: bool,
    /// Keep only rows for this video (`thumos_csv`).
    pub video_id: Option<String>,
    /// Overrides the duration inferred from the last segment.
    pub duration_s: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid timeline json")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("breakfast_txt annotations need an fps")]
    MissingFps,
    #[error("cannot infer a duration: no segments and no explicit duration")]
    NoDuration,
    #[error(transparent)]
    Invalid(#[from] TimelineError),
}

pub fn parse_timeline(
    path: impl AsRef<Path>,
    format: AnnotationFormat,
    opts: &ParseOptions,
) -> Result<Timeline, AnnotationError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_timeline_str(&text, format, opts)
}

pub fn parse_timeline_str(
    text: &str,
    format: AnnotationFormat,
    opts: &ParseOptions,
) -> Result<Timeline, AnnotationError> {
    match format {
        AnnotationFormat::Json => {
            let mut tl: Timeline = serde_json::from_str(text)?;
            if let Some(d) = opts.duration_s {
                tl.duration_s = d;
            }
            Ok(tl.validated()?)
        }
        AnnotationFormat::BreakfastTxt => parse_breakfast(text, opts),
        AnnotationFormat::ThumosCsv => {
            let rows = parse_thumos_rows(text)?;
            let segments: Vec<Segment> = rows
                .into_iter()
                .filter(|(vid, _)| opts.video_id.as_deref().is_none_or(|want| want == vid))
                .map(|(_, s)| s)
                .collect();
            let duration = match opts.duration_s {
                Some(d) => d,
                None => segments
                    .iter()
                    .map(|s| s.end)
                    .reduce(f64::max)
                    .ok_or(AnnotationError::NoDuration)?,
            };
            Ok(Timeline::new(duration, segments).validated()?)
        }
    }
}

fn malformed(line: usize, message: impl Into<String>) -> AnnotationError {
    AnnotationError::Malformed {
        line,
        message: message.into(),
    }
}

// Inclusive frame ranges. Frame k (1-based) covers [(k-1)/fps, k/fps), so
// consecutive ranges "1 120" / "121 300" tile the timeline without gaps.
fn parse_breakfast(text: &str, opts: &ParseOptions) -> Result<Timeline, AnnotationError> {
    let fps = opts.fps.ok_or(AnnotationError::MissingFps)?;
    if !(fps.is_finite() && fps > 0.0) {
        return Err(AnnotationError::MissingFps);
    }
    let offset = if opts.zero_based { 0.0 } else { 1.0 };
    let mut segments = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        // Accept both "1 120 label" and "1-120 label".
        let mut fields = line.splitn(2, char::is_whitespace);
        let first = fields.next().unwrap_or_default();
        let (start_tok, end_tok, label) = if let Some((a, b)) = first.split_once('-') {
            (a, b, fields.next().unwrap_or_default().trim())
        } else {
            let rest = fields.next().unwrap_or_default().trim_start();
            let mut rest_fields = rest.splitn(2, char::is_whitespace);
            let end = rest_fields.next().unwrap_or_default();
            (first, end, rest_fields.next().unwrap_or_default().trim())
        };
        let start: u64 = start_tok
            .parse()
            .map_err(|_| malformed(line_no, format!("bad start frame {start_tok:?}")))?;
        let end: u64 = end_tok
            .parse()
            .map_err(|_| malformed(line_no, format!("bad end frame {end_tok:?}")))?;
        if label.is_empty() {
            return Err(malformed(line_no, "missing label"));
        }
        if end < start {
            return Err(malformed(
                line_no,
                format!("end frame {end} < start frame {start}"),
            ));
        }
        if !opts.zero_based && start == 0 {
            return Err(malformed(line_no, "frame 0 in 1-based annotation"));
        }
        let start_s = (start as f64 - offset) / fps;
        let end_s = (end as f64 + 1.0 - offset) / fps;
        segments.push(Segment::new(label, start_s, end_s));
    }
    let duration = match opts.duration_s {
        Some(d) => d,
        None => segments
            .iter()
            .map(|s| s.end)
            .reduce(f64::max)
            .ok_or(AnnotationError::NoDuration)?,
    };
    let tl = Timeline::new(duration, segments).validated()?;
    tl.check_disjoint()?;
    Ok(tl)
}

/// Reads `video_id,label,start_s,end_s` rows; a header line is skipped when
/// its numeric columns do not parse.
pub fn parse_thumos_rows(text: &str) -> Result<Vec<(String, Segment)>, AnnotationError> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 4 {
            return Err(malformed(
                line_no,
                format!("expected 4 columns, got {}", fields.len()),
            ));
        }
        let (start, end) = match (fields[2].parse::<f64>(), fields[3].parse::<f64>()) {
            (Ok(s), Ok(e)) => (s, e),
            _ if rows.is_empty() && line_no == first_content_line(text) => continue,
            _ => return Err(malformed(line_no, "start/end are not numbers")),
        };
        if end < start {
            return Err(malformed(line_no, format!("end {end} < start {start}")));
        }
        rows.push((fields[0].to_string(), Segment::new(fields[1], start, end)));
    }
    Ok(rows)
}

fn first_content_line(text: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .map_or(0, |p| p + 1)
}
