//! Frame sampling over a time window and composition of the annotated prompt
//! images shown to the model.

mod badge;
mod grid;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::frame_io::{FrameError, VideoFrames};

pub use badge::draw_badge;
pub use grid::{
    compose, encode_jpeg, encode_png, GridSpec, PromptImage, Style, MAX_CELLS, MIN_CELL_PX,
};

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("window width must be positive and finite (center {center}, width {width})")]
    BadWindow { center: f64, width: f64 },
    #[error("window [{lo}, {hi}] does not intersect the video [0, {duration}]")]
    EmptyWindow { lo: f64, hi: f64, duration: f64 },
    #[error("need at least 2 samples per window, got {0}")]
    TooFewSamples(usize),
    #[error("grid {rows}x{cols} expects {expected} frames, got {got}")]
    FrameCountMismatch {
        rows: u32,
        cols: u32,
        expected: usize,
        got: usize,
    },
    #[error("cell size {0} px is too small for a legible badge (minimum {MIN_CELL_PX})")]
    CellTooSmall(u32),
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("image encoding failed")]
    Encode(#[from] image::ImageError),
}

/// Sampling interval `[center - width/2, center + width/2]`, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub center_s: f64,
    pub width_s: f64,
}

impl TimeWindow {
    pub fn new(center_s: f64, width_s: f64) -> Result<Self, ImagingError> {
        if !(center_s.is_finite() && width_s.is_finite() && width_s > 0.0) {
            return Err(ImagingError::BadWindow {
                center: center_s,
                width: width_s,
            });
        }
        Ok(Self { center_s, width_s })
    }

    /// The whole video, as used for the first search iteration.
    pub fn full(duration_s: f64) -> Result<Self, ImagingError> {
        Self::new(duration_s / 2.0, duration_s)
    }

    pub fn from_range(lo: f64, hi: f64) -> Result<Self, ImagingError> {
        Self::new((lo + hi) / 2.0, hi - lo)
    }

    pub fn lo(&self) -> f64 {
        self.center_s - self.width_s / 2.0
    }

    pub fn hi(&self) -> f64 {
        self.center_s + self.width_s / 2.0
    }

    /// Truncates the window to `[0, duration]` without re-centering.
    pub fn clamp_to(&self, duration_s: f64) -> Result<(f64, f64), ImagingError> {
        let lo = self.lo().max(0.0);
        let hi = self.hi().min(duration_s);
        if lo > hi {
            return Err(ImagingError::EmptyWindow {
                lo: self.lo(),
                hi: self.hi(),
                duration: duration_s,
            });
        }
        Ok((lo, hi))
    }
}

/// `n` endpoint-inclusive, evenly spaced timestamps over the clamped window.
pub fn sample_timestamps(
    window: &TimeWindow,
    duration_s: f64,
    n: usize,
) -> Result<Vec<f64>, ImagingError> {
    if n < 2 {
        return Err(ImagingError::TooFewSamples(n));
    }
    let (lo, hi) = window.clamp_to(duration_s)?;
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|j| if j == n - 1 { hi } else { lo + j as f64 * step })
        .collect())
}

/// A frame picked for the prompt, with its 1-based badge number.
#[derive(Debug, Clone)]
pub struct SampledFrame {
    pub grid_index: usize,
    pub timestamp_s: f64,
    pub frame_index: usize,
    pub image: RgbImage,
}

pub fn sample_frames(
    source: &dyn VideoFrames,
    window: &TimeWindow,
    n: usize,
) -> Result<Vec<SampledFrame>, ImagingError> {
    sample_timestamps(window, source.duration_s(), n)?
        .into_iter()
        .enumerate()
        .map(|(j, t)| {
            let (image, frame_index) = source.frame_at(t)?;
            Ok(SampledFrame {
                grid_index: j + 1,
                timestamp_s: t,
                frame_index,
                image,
            })
        })
        .collect()
}
