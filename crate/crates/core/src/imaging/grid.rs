//! Grid layouts and rendering styles for the prompt image.

use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::badge::draw_badge;
use super::{ImagingError, SampledFrame};

pub const MIN_CELL_PX: u32 = 32;
pub const MAX_CELLS: u32 = 64;
const MAX_CANVAS_PX: u32 = 2048;
const MAX_DEFAULT_CELL_PX: u32 = 512;
const LETTERBOX: Rgb<u8> = Rgb([0, 0, 0]);
const GUTTER: Rgb<u8> = Rgb([255, 255, 255]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    /// Row-major tiles, badge in each cell's top-left corner.
    TiledCorner,
    /// Row-major tiles, badge at each cell's centre.
    TiledCenter,
    /// As `TiledCorner` with a background gutter of 5% of the cell size.
    TiledSpacing,
    /// One image per frame, sent as an ordered list.
    Stacked,
}

impl Style {
    pub const ALL: [Style; 4] = [
        Style::TiledCorner,
        Style::TiledCenter,
        Style::TiledSpacing,
        Style::Stacked,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Style::TiledCorner => "tiled_corner",
            Style::TiledCenter => "tiled_center",
            Style::TiledSpacing => "tiled_spacing",
            Style::Stacked => "stacked",
        }
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Style {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Style::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown style {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    pub cell_px: u32,
    pub style: Style,
    /// Badge diameter as a fraction of the cell height.
    pub label_scale: f64,
}

impl GridSpec {
    /// Grid with the default cell size: the largest cell (capped at 512 px)
    /// that keeps the composited canvas within 2048 px on its long edge.
    pub fn new(rows: u32, cols: u32, style: Style) -> Result<Self, ImagingError> {
        let spec = Self {
            rows,
            cols,
            cell_px: default_cell_px(rows.max(1), cols.max(1), style),
            style,
            label_scale: 0.18,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parses `"5x5"`-style shorthand.
    pub fn parse(shape: &str, style: Style) -> Result<Self, ImagingError> {
        let (r, c) = shape
            .split_once(['x', 'X'])
            .ok_or_else(|| ImagingError::BadGrid(format!("expected RxC, got {shape:?}")))?;
        let rows = r
            .trim()
            .parse()
            .map_err(|_| ImagingError::BadGrid(format!("bad row count in {shape:?}")))?;
        let cols = c
            .trim()
            .parse()
            .map_err(|_| ImagingError::BadGrid(format!("bad column count in {shape:?}")))?;
        Self::new(rows, cols, style)
    }

    pub fn with_cell_px(mut self, cell_px: u32) -> Result<Self, ImagingError> {
        self.cell_px = cell_px;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ImagingError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(ImagingError::BadGrid(
                "rows and cols must be at least 1".into(),
            ));
        }
        let cells = self.rows * self.cols;
        if !(2..=MAX_CELLS).contains(&cells) {
            return Err(ImagingError::BadGrid(format!(
                "{}x{} has {cells} cells; need between 2 and {MAX_CELLS}",
                self.rows, self.cols
            )));
        }
        if self.cell_px < MIN_CELL_PX {
            return Err(ImagingError::CellTooSmall(self.cell_px));
        }
        if !(self.label_scale > 0.0 && self.label_scale <= 1.0) {
            return Err(ImagingError::BadGrid(format!(
                "label_scale {} outside (0, 1]",
                self.label_scale
            )));
        }
        Ok(())
    }

    /// Frames per query.
    pub fn cells(&self) -> usize {
        (self.rows * self.cols) as usize
    }

    pub fn shape(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn gutter_px(&self) -> u32 {
        match self.style {
            Style::TiledSpacing => (self.cell_px as f64 * 0.05).round() as u32,
            _ => 0,
        }
    }

    /// Size of the composited canvas for tiled styles.
    pub fn canvas_size(&self) -> (u32, u32) {
        let g = self.gutter_px();
        (
            self.cols * self.cell_px + (self.cols - 1) * g,
            self.rows * self.cell_px + (self.rows - 1) * g,
        )
    }

    fn badge_diameter(&self) -> u32 {
        ((self.label_scale * self.cell_px as f64).round() as u32).max(12)
    }
}

fn default_cell_px(rows: u32, cols: u32, style: Style) -> u32 {
    let long = rows.max(cols);
    let mut cell = (MAX_CANVAS_PX / long).min(MAX_DEFAULT_CELL_PX);
    if style == Style::TiledSpacing {
        // cell * long + (long - 1) * 0.05 * cell <= MAX
        cell = ((MAX_CANVAS_PX as f64 / (long as f64 + 0.05 * (long - 1) as f64)).floor() as u32)
            .min(MAX_DEFAULT_CELL_PX);
    }
    cell.max(MIN_CELL_PX)
}

/// Composited prompt: one canvas for tiled styles, one image per frame when
/// stacked. `index_to_time[k - 1]` is the timestamp behind badge `k`.
#[derive(Debug, Clone)]
pub struct PromptImage {
    pub images: Vec<RgbImage>,
    pub index_to_time: Vec<f64>,
}

impl PromptImage {
    /// Timestamp of 1-based badge `k`.
    pub fn time_of(&self, k: usize) -> Option<f64> {
        k.checked_sub(1)
            .and_then(|i| self.index_to_time.get(i))
            .copied()
    }

    pub fn badge_count(&self) -> usize {
        self.index_to_time.len()
    }
}

fn letterbox(frame: &RgbImage, cell: u32) -> RgbImage {
    let (w, h) = frame.dimensions();
    let scale = (cell as f64 / w.max(1) as f64).min(cell as f64 / h.max(1) as f64);
    let nw = ((w as f64 * scale).round() as u32).clamp(1, cell);
    let nh = ((h as f64 * scale).round() as u32).clamp(1, cell);
    let resized = if (nw, nh) == (w, h) {
        frame.clone()
    } else {
        imageops::resize(frame, nw, nh, FilterType::Triangle)
    };
    let mut out = RgbImage::from_pixel(cell, cell, LETTERBOX);
    imageops::replace(
        &mut out,
        &resized,
        ((cell - nw) / 2) as i64,
        ((cell - nh) / 2) as i64,
    );
    out
}

fn badge_center(spec: &GridSpec, x0: u32, y0: u32) -> (i64, i64) {
    let d = spec.badge_diameter() as i64;
    match spec.style {
        Style::TiledCenter => (
            x0 as i64 + spec.cell_px as i64 / 2,
            y0 as i64 + spec.cell_px as i64 / 2,
        ),
        _ => {
            let margin = (d / 8).max(2);
            (x0 as i64 + margin + d / 2, y0 as i64 + margin + d / 2)
        }
    }
}

/// Lays out sampled frames as a badge-annotated prompt image.
pub fn compose(frames: &[SampledFrame], spec: &GridSpec) -> Result<PromptImage, ImagingError> {
    spec.validate()?;
    let index_to_time = frames.iter().map(|f| f.timestamp_s).collect();
    let diameter = spec.badge_diameter();

    if spec.style == Style::Stacked {
        if frames.is_empty() {
            return Err(ImagingError::FrameCountMismatch {
                rows: spec.rows,
                cols: spec.cols,
                expected: spec.cells(),
                got: 0,
            });
        }
        let images = frames
            .iter()
            .map(|f| {
                let mut cell = letterbox(&f.image, spec.cell_px);
                let (cx, cy) = badge_center(spec, 0, 0);
                draw_badge(&mut cell, cx, cy, diameter, f.grid_index);
                cell
            })
            .collect();
        return Ok(PromptImage {
            images,
            index_to_time,
        });
    }

    if frames.len() != spec.cells() {
        return Err(ImagingError::FrameCountMismatch {
            rows: spec.rows,
            cols: spec.cols,
            expected: spec.cells(),
            got: frames.len(),
        });
    }
    let (w, h) = spec.canvas_size();
    let gutter = spec.gutter_px();
    let mut canvas = RgbImage::from_pixel(w, h, GUTTER);
    for (k, frame) in frames.iter().enumerate() {
        let row = k as u32 / spec.cols;
        let col = k as u32 % spec.cols;
        let x0 = col * (spec.cell_px + gutter);
        let y0 = row * (spec.cell_px + gutter);
        let cell = letterbox(&frame.image, spec.cell_px);
        imageops::replace(&mut canvas, &cell, x0 as i64, y0 as i64);
        let (cx, cy) = badge_center(spec, x0, y0);
        draw_badge(&mut canvas, cx, cy, diameter, frame.grid_index);
    }
    Ok(PromptImage {
        images: vec![canvas],
        index_to_time,
    })
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, ImagingError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn encode_jpeg(img: &RgbImage, quality: u8) -> Result<Vec<u8>, ImagingError> {
    let mut buf = Vec::new();
    let encoder =
        image::codecs::jpeg::JpegEncoder::new_with_quality(&mut buf, quality.clamp(1, 100));
    img.write_with_encoder(encoder)?;
    Ok(buf)
}
