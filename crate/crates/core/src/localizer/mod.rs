//! Iterative boundary search and the procedures built on it: single-action
//! localization, gapless task-transition estimation and windowed scanning of
//! long videos.

mod scan;
mod search;
mod transitions;

use serde::{Deserialize, Serialize};

use crate::frame_io::VideoFrames;
use crate::imaging::{GridSpec, ImagingError, Style};
use crate::vlm::{BackendError, Boundary, ContextError, VlmBackend};

pub use scan::ScanResult;
pub use search::{ActionResult, BoundarySearch};
pub use transitions::{
    clamp_ends_forward, clamp_starts_forward, transition_midpoints, MonotonicityReport,
    TransitionResult,
};

pub const MAX_ITERATIONS: u32 = 12;
pub const DEFAULT_SCAN_WINDOW_S: f64 = 5.0;

/// Initial window for end-boundary searches during transition estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EndWindow {
    /// Search each task's end over the whole video, independently of its start.
    #[default]
    FullVideo,
    /// Search from the task's estimated start to the end of the video.
    AfterStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub grid: GridSpec,
    pub iterations: u32,
    /// Narrowest window the search may shrink to. `None` means four frame
    /// intervals of the video being searched.
    pub min_window_s: Option<f64>,
    pub window_shrink: f64,
    pub end_window: EndWindow,
}

impl SearchConfig {
    pub fn new(grid: GridSpec, iterations: u32) -> Self {
        Self {
            grid,
            iterations,
            min_window_s: None,
            window_shrink: 0.5,
            end_window: EndWindow::FullVideo,
        }
    }

    /// 5x5 corner-badge grid with four halving iterations.
    pub fn standard() -> Self {
        Self::new(
            GridSpec::new(5, 5, Style::TiledCorner).expect("5x5 is a valid grid"),
            4,
        )
    }

    pub fn validate(&self) -> Result<(), LocalizeError> {
        self.grid.validate()?;
        if !(1..=MAX_ITERATIONS).contains(&self.iterations) {
            return Err(LocalizeError::Config(format!(
                "iterations must be in 1..={MAX_ITERATIONS}, got {}",
                self.iterations
            )));
        }
        if !(self.window_shrink > 0.0 && self.window_shrink < 1.0) {
            return Err(LocalizeError::Config(format!(
                "window_shrink must be in (0, 1), got {}",
                self.window_shrink
            )));
        }
        if let Some(m) = self.min_window_s {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(LocalizeError::Config(format!(
                    "min_window_s must be >= 0, got {m}"
                )));
            }
        }
        Ok(())
    }

    pub fn min_window_for(&self, fps: f64) -> f64 {
        self.min_window_s.unwrap_or(4.0 / fps)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LocalizeError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("transition estimation needs at least 2 labels, got {0}")]
    TooFewLabels(usize),
    #[error("empty action label")]
    EmptyLabel,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Context(#[from] ContextError),
}

/// One model query inside a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub task: String,
    pub task_index: usize,
    pub boundary: Boundary,
    pub scope: u64,
    /// 1-based iteration number.
    pub iteration: u32,
    pub window_center: f64,
    pub window_width: f64,
    pub selected_index: Option<usize>,
    pub selected_time: Option<f64>,
}

/// Search engine bound to one video and one backend.
pub struct Localizer<'a> {
    frames: &'a dyn VideoFrames,
    backend: &'a dyn VlmBackend,
    config: SearchConfig,
}

impl<'a> Localizer<'a> {
    pub fn new(
        frames: &'a dyn VideoFrames,
        backend: &'a dyn VlmBackend,
        config: SearchConfig,
    ) -> Result<Self, LocalizeError> {
        config.validate()?;
        Ok(Self {
            frames,
            backend,
            config,
        })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.duration_s()
    }
}
