//! Timestamp-indexed access to pre-extracted video frames and ground-truth
//! annotation parsing.

mod annotations;
mod extract;

use std::fmt;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

pub use annotations::{
    parse_thumos_rows, parse_timeline, parse_timeline_str, AnnotationError, AnnotationFormat,
    ParseOptions,
};
pub use extract::{extract_frames, ExtractError};

pub const DEFAULT_PATTERN: &str = "frame_%06d.png";

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("frame directory {0} does not exist")]
    MissingDirectory(PathBuf),
    #[error("no frames found in {dir} matching {pattern}")]
    NoFrames { dir: PathBuf, pattern: String },
    #[error("fps must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("invalid filename pattern {0:?}: expected a single %0Nd placeholder")]
    BadPattern(String),
    #[error("frame sequence in {dir} is missing index {index}")]
    MissingFrame { dir: PathBuf, index: usize },
    #[error("timestamp {0} is not finite")]
    NonFiniteTime(f64),
    #[error("cannot read frame {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Anything that can hand out frames by index at a fixed frame rate.
///
/// Implementations must be immutable after construction so that concurrent
/// boundary searches can share them.
pub trait VideoFrames: Send + Sync {
    fn fps(&self) -> f64;

    fn frame_count(&self) -> usize;

    fn load(&self, index: usize) -> Result<RgbImage, FrameError>;

    fn duration_s(&self) -> f64 {
        self.frame_count() as f64 / self.fps()
    }

    /// Frame index for `t_s`: round half up, then clamp into the valid range.
    fn index_at(&self, t_s: f64) -> Result<usize, FrameError> {
        if !t_s.is_finite() {
            return Err(FrameError::NonFiniteTime(t_s));
        }
        let raw = (t_s * self.fps() + 0.5).floor();
        let last = self.frame_count().saturating_sub(1);
        Ok(if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(last)
        })
    }

    fn frame_at(&self, t_s: f64) -> Result<(RgbImage, usize), FrameError> {
        let index = self.index_at(t_s)?;
        Ok((self.load(index)?, index))
    }
}

/// Zero-padded filename pattern such as `frame_%06d.png`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePattern {
    prefix: String,
    width: usize,
    suffix: String,
}

impl FramePattern {
    pub fn parse(pattern: &str) -> Result<Self, FrameError> {
        let bad = || FrameError::BadPattern(pattern.to_string());
        let pos = pattern.find('%').ok_or_else(bad)?;
        let rest = &pattern[pos + 1..];
        let d = rest.find('d').ok_or_else(bad)?;
        let spec = &rest[..d];
        let width = if spec.is_empty() {
            0
        } else if spec.chars().all(|c| c.is_ascii_digit()) {
            spec.parse().map_err(|_| bad())?
        } else {
            return Err(bad());
        };
        let suffix = &rest[d + 1..];
        if suffix.contains('%') {
            return Err(bad());
        }
        Ok(Self {
            prefix: pattern[..pos].to_string(),
            width,
            suffix: suffix.to_string(),
        })
    }

    pub fn file_name(&self, index: usize) -> String {
        format!(
            "{}{:0width$}{}",
            self.prefix,
            index,
            self.suffix,
            width = self.width
        )
    }

    /// Index encoded in `name`, if it matches the pattern.
    pub fn match_index(&self, name: &str) -> Option<usize> {
        let digits = name
            .strip_prefix(&self.prefix)?
            .strip_suffix(&self.suffix)?;
        if digits.is_empty()
            || digits.len() < self.width
            || !digits.bytes().all(|b| b.is_ascii_digit())
        {
            return None;
        }
        digits.parse().ok()
    }
}

impl fmt::Display for FramePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}%0{}d{}", self.prefix, self.width, self.suffix)
    }
}

/// A directory of pre-extracted frames, indexed from 0.
#[derive(Debug, Clone)]
pub struct FrameSource {
    root: PathBuf,
    fps: f64,
    frame_count: usize,
    pattern: FramePattern,
}

impl FrameSource {
    /// Opens `path`, counting the files that match `pattern`.
    ///
    /// Frames are decoded lazily; only the presence of a contiguous
    /// `0..frame_count` index range is checked here.
    pub fn open(path: impl AsRef<Path>, fps: f64, pattern: &str) -> Result<Self, FrameError> {
        let root = path.as_ref().to_path_buf();
        if !(fps.is_finite() && fps > 0.0) {
            return Err(FrameError::BadFps(fps));
        }
        let pattern = FramePattern::parse(pattern)?;
        if !root.is_dir() {
            return Err(FrameError::MissingDirectory(root));
        }
        let entries = std::fs::read_dir(&root).map_err(|source| FrameError::Io {
            path: root.clone(),
            source,
        })?;
        let mut indices = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|source| FrameError::Io {
                path: root.clone(),
                source,
            })?;
            if let Some(i) = entry
                .file_name()
                .to_str()
                .and_then(|n| pattern.match_index(n))
            {
                indices.push(i);
            }
        }
        if indices.is_empty() {
            return Err(FrameError::NoFrames {
                dir: root,
                pattern: pattern.to_string(),
            });
        }
        indices.sort_unstable();
        indices.dedup();
        if let Some(index) = indices
            .iter()
            .enumerate()
            .find(|(k, i)| k != *i)
            .map(|(k, _)| k)
        {
            return Err(FrameError::MissingFrame { dir: root, index });
        }
        Ok(Self {
            root,
            fps,
            frame_count: indices.len(),
            pattern,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, index: usize) -> PathBuf {
        self.root.join(self.pattern.file_name(index))
    }
}

/// Convenience wrapper over [`FrameSource::open`].
pub fn open_frame_source(
    path: impl AsRef<Path>,
    fps: f64,
    pattern: &str,
) -> Result<FrameSource, FrameError> {
    FrameSource::open(path, fps, pattern)
}

impl VideoFrames for FrameSource {
    fn fps(&self) -> f64 {
        self.fps
    }

    fn frame_count(&self) -> usize {
        self.frame_count
    }

    fn load(&self, index: usize) -> Result<RgbImage, FrameError> {
        let path = self.path_of(index.min(self.frame_count - 1));
        image::open(&path)
            .map(|img| img.to_rgb8())
            .map_err(|source| FrameError::Decode { path, source })
    }
}

/// Procedurally generated frames for offline runs and tests.
///
/// Each frame is a solid colour derived from its index with a bar whose
/// horizontal position tracks time, so composited grids are distinguishable
/// without any real footage.
#[derive(Debug, Clone)]
pub struct SyntheticFrames {
    fps: f64,
    frame_count: usize,
    width: u32,
    height: u32,
}

impl SyntheticFrames {
    pub fn new(duration_s: f64, fps: f64) -> Result<Self, FrameError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(FrameError::BadFps(fps));
        }
        let frame_count = (duration_s * fps).round();
        if !(frame_count >= 1.0) {
            return Err(FrameError::NoFrames {
                dir: PathBuf::from("<synthetic>"),
                pattern: format!("duration {duration_s}"),
            });
        }
        Ok(Self {
            fps,
            frame_count: frame_count as usize,
            width: 64,
            height: 48,
        })
    }

    pub fn with_size(mut self, width: u32, height: u32) -> Self {
        self.width = width.max(1);
        self.height = height.max(1);
        self
    }
}

impl VideoFrames for SyntheticFrames {
    fn fps(&self) -> f64 {
        self.fps
    }

    fn frame_count(&self) -> usize {
        self.frame_count
    }

    fn load(&self, index: usize) -> Result<RgbImage, FrameError> {
        let i = index.min(self.frame_count - 1) as u64;
        let base = Rgb([
            (i.wrapping_mul(37) % 200) as u8 + 20,
            (i.wrapping_mul(91) % 200) as u8 + 20,
            (i.wrapping_mul(53) % 200) as u8 + 20,
        ]);
        let bar = if self.frame_count > 1 {
            (i as f64 / (self.frame_count - 1) as f64 * (self.width - 1) as f64) as u32
        } else {
            0
        };
        Ok(RgbImage::from_fn(self.width, self.height, |x, _| {
            if x == bar {
                Rgb([255, 255, 255])
            } else {
                base
            }
        }))
    }
}
