use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tpivot_core::frame_io::{AnnotationFormat, ParseOptions};
use tpivot_core::imaging::{GridSpec, Style};
use tpivot_core::localizer::{Localizer, SearchConfig, DEFAULT_SCAN_WINDOW_S};
use tpivot_core::metrics::{
    evaluate_segmentation, map_at, Detection, GtInstance, DEFAULT_THRESHOLDS,
};
use tpivot_core::{FrameSource, SyntheticFrames, Timeline, VideoFrames};

use crate::commands::{thread_pool, write_output};
use crate::config::{read_timeline, BackendArgs, InputHasher};
use crate::synth::SyntheticSet;
use crate::{CliError, Failure, ResultExt};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTask {
    /// Transition estimation scored with MoF, IoU and F1.
    #[default]
    Transitions,
    /// Windowed scanning scored with detection mAP.
    Scan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub id: String,
    /// Frame directory; omitted means placeholder frames.
    #[serde(default)]
    pub frames: Option<PathBuf>,
    pub fps: f64,
    pub gt: PathBuf,
    #[serde(default = "default_format")]
    pub gt_format: String,
    #[serde(default)]
    pub zero_based: bool,
    #[serde(default)]
    pub duration: Option<f64>,
    /// Task order; defaults to the ground-truth order.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

fn default_format() -> String {
    "json".into()
}

/// The cartesian product `grids x iterations x styles x noise_rates`, run
/// over every listed and generated video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_grids")]
    pub grids: Vec<String>,
    #[serde(default = "default_iterations")]
    pub iterations: Vec<u32>,
    #[serde(default = "default_styles")]
    pub styles: Vec<Style>,
    #[serde(default = "default_noise")]
    pub noise_rates: Vec<f64>,
    #[serde(default)]
    pub task: SweepTask,
    #[serde(default)]
    pub scan_window_s: Option<f64>,
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default)]
    pub videos: Vec<VideoEntry>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSet>,
    #[serde(default)]
    pub seed: u64,
}

fn default_grids() -> Vec<String> {
    vec!["5x5".into()]
}

fn default_iterations() -> Vec<u32> {
    vec![4]
}

fn default_styles() -> Vec<Style> {
    vec![Style::TiledCorner]
}

fn default_noise() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub grid: String,
    pub iterations: u32,
    pub style: Style,
    pub noise_rate: f64,
}

impl Cell {
    pub fn key(&self) -> String {
        format!(
            "grid={};iters={};style={};noise={}",
            self.grid,
            self.iterations,
            self.style.as_str(),
            self.noise_rate
        )
    }
}

impl SweepSpec {
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for grid in &self.grids {
            for &iterations in &self.iterations {
                for &style in &self.styles {
                    for &noise_rate in &self.noise_rates {
                        out.push(Cell {
                            grid: grid.clone(),
                            iterations,
                            style,
                            noise_rate,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for cell in self.cells() {
            cell_config(&cell).with_context(|| format!("cell {}", cell.key()))?;
            if !(0.0..=1.0).contains(&cell.noise_rate) {
                return Err(anyhow!("noise rate {} outside [0, 1]", cell.noise_rate));
            }
        }
        if self.videos.is_empty() && self.synthetic.as_ref().is_none_or(|s| s.count == 0) {
            return Err(anyhow!("the sweep lists no videos"));
        }
        if let Some(s) = &self.synthetic {
            s.validate().map_err(|e| anyhow!("synthetic: {e}"))?;
        }
        for v in &self.videos {
            v.gt_format
                .parse::<AnnotationFormat>()
                .map_err(|e| anyhow!("video {}: {e}", v.id))?;
        }
        Ok(())
    }
}

fn cell_config(cell: &Cell) -> anyhow::Result<SearchConfig> {
    let grid = GridSpec::parse(&cell.grid, cell.style)?;
    let cfg = SearchConfig::new(grid, cell.iterations);
    cfg.validate()?;
    Ok(cfg)
}

/// One line of the sweep CSV and of the resume ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: String,
    pub grid: String,
    pub iterations: u32,
    pub style: String,
    pub noise_rate: f64,
    pub videos: usize,
    pub failed: usize,
    pub mof: Option<f64>,
    pub mean_iou: Option<f64>,
    pub f1: Option<f64>,
    pub avg_map: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep specification (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// CSV written after every completed cell.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Completed-cell ledger (default: OUT with a `.ledger.jsonl` suffix).
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    /// Rerun cells whose ledger row records failures.
    #[arg(long)]
    pub retry_failed: bool,
    /// Stop after this many newly completed cells.
    #[arg(long)]
    pub limit: Option<usize>,
    /// List the cells and exit.
    #[arg(long)]
    pub dry_run: bool,
    /// Videos evaluated concurrently.
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[command(flatten)]
    pub backend: BackendArgs,
}

struct Video {
    id: String,
    gt: Timeline,
    labels: Vec<String>,
    frames: Box<dyn VideoFrames>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_videos(
    spec: &SweepSpec,
    base: &Path,
    hasher: &mut InputHasher,
) -> Result<Vec<Video>, CliError> {
    let mut videos = Vec::new();
    for v in &spec.videos {
        let gt_path = resolve(base, &v.gt);
        hasher.file("gt", &gt_path)?;
        let format: AnnotationFormat = v
            .gt_format
            .parse()
            .map_err(|e: String| CliError::config(anyhow!(e)))?;
        let opts = ParseOptions {
            fps: Some(v.fps),
            zero_based: v.zero_based,
            video_id: (format == AnnotationFormat::ThumosCsv).then(|| v.id.clone()),
            duration_s: v.duration,
        };
        let gt = read_timeline(&gt_path, format, &opts)?;
        let frames: Box<dyn VideoFrames> = match &v.frames {
            Some(dir) => {
                let dir = resolve(base, dir);
                hasher.frame_dir(&dir)?;
                Box::new(
                    FrameSource::open(&dir, v.fps, tpivot_core::frame_io::DEFAULT_PATTERN)
                        .kind(Failure::Io)?,
                )
            }
            None => Box::new(SyntheticFrames::new(gt.duration_s, v.fps).kind(Failure::Config)?),
        };
        let labels = v.labels.clone().unwrap_or_else(|| match spec.task {
            SweepTask::Transitions => gt.task_sequence(),
            SweepTask::Scan => gt.labels(),
        });
        videos.push(Video {
            id: v.id.clone(),
            gt,
            labels,
            frames,
        });
    }
    if let Some(set) = &spec.synthetic {
        for (i, gt) in set.generate().into_iter().enumerate() {
            let frames =
                Box::new(SyntheticFrames::new(gt.duration_s, set.fps).kind(Failure::Config)?);
            let labels = match spec.task {
                SweepTask::Transitions => gt.task_sequence(),
                SweepTask::Scan => gt.labels(),
            };
            videos.push(Video {
                id: format!("synthetic_{i:03}"),
                gt,
                labels,
                frames,
            });
        }
    }
    Ok(videos)
}

enum Outcome {
    Segmentation { mof: f64, iou: f64, f1: f64 },
    Detections(Vec<Detection>),
}

fn run_video(
    video: &Video,
    index: usize,
    cell: &Cell,
    spec: &SweepSpec,
    backend_args: &BackendArgs,
) -> anyhow::Result<Outcome> {
    let mut args = backend_args.clone();
    args.noise = cell.noise_rate;
    args.seed = spec.seed.wrapping_add(index as u64);
    let backend = args.build(Some(&video.gt), 1).map_err(|e| e.error)?;
    let loc = Localizer::new(video.frames.as_ref(), backend.as_ref(), cell_config(cell)?)?;
    match spec.task {
        SweepTask::Transitions => {
            let result = loc.estimate_transitions(&video.labels)?;
            let report = evaluate_segmentation(&result.timeline, &video.gt, video.frames.fps())?;
            Ok(Outcome::Segmentation {
                mof: report.mof,
                iou: report.mean_iou,
                f1: report.f1,
            })
        }
        SweepTask::Scan => {
            let result = loc.windowed_scan(
                &video.labels,
                spec.scan_window_s.unwrap_or(DEFAULT_SCAN_WINDOW_S),
            )?;
            Ok(Outcome::Detections(
                result
                    .segments
                    .into_iter()
                    .map(|s| Detection {
                        video_id: video.id.clone(),
                        label: s.label,
                        start: s.start,
                        end: s.end,
                        score: 1.0,
                    })
                    .collect(),
            ))
        }
    }
}

fn run_cell(cell: &Cell, videos: &[Video], spec: &SweepSpec, backend: &BackendArgs) -> SweepRow {
    let outcomes: Vec<anyhow::Result<Outcome>> = videos
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            run_video(v, i, cell, spec, backend).with_context(|| format!("video {}", v.id))
        })
        .collect();
    let mut errors = Vec::new();
    let mut seg = Vec::new();
    let mut dets = Vec::new();
    let mut scanned = Vec::new();
    for (outcome, video) in outcomes.into_iter().zip(videos) {
        match outcome {
            Ok(Outcome::Segmentation { mof, iou, f1 }) => seg.push((mof, iou, f1)),
            Ok(Outcome::Detections(d)) => {
                dets.extend(d);
                scanned.push(video);
            }
            Err(e) => {
                log::warn!("cell {}: {e:#}", cell.key());
                errors.push(format!("{e:#}"));
            }
        }
    }
    let mean = |f: fn(&(f64, f64, f64)) -> f64| {
        (!seg.is_empty()).then(|| seg.iter().map(f).sum::<f64>() / seg.len() as f64)
    };
    let avg_map = if spec.task == SweepTask::Scan && !scanned.is_empty() {
        let gts: Vec<GtInstance> = scanned
            .iter()
            .flat_map(|v| {
                v.gt.segments.iter().map(|s| GtInstance {
                    video_id: v.id.clone(),
                    label: s.label.clone(),
                    start: s.start,
                    end: s.end,
                })
            })
            .collect();
        let thresholds = spec
            .thresholds
            .clone()
            .unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
        match map_at(&dets, &gts, &thresholds) {
            Ok(r) => Some(r.avg_map),
            Err(e) => {
                errors.push(e.to_string());
                None
            }
        }
    } else {
        None
    };
    SweepRow {
        cell: cell.key(),
        grid: cell.grid.clone(),
        iterations: cell.iterations,
        style: cell.style.as_str().to_string(),
        noise_rate: cell.noise_rate,
        videos: videos.len(),
        failed: videos.len() - seg.len() - scanned.len(),
        mof: mean(|r| r.0),
        mean_iou: mean(|r| r.1),
        f1: mean(|r| r.2),
        avg_map,
        error: (!errors.is_empty()).then(|| errors.join("; ")),
    }
}

/// Reads ledger rows. A truncated final line (an interrupted write) is
/// skipped with a warning; corruption elsewhere is an error.
pub fn read_ledger(path: &Path) -> Result<Vec<SweepRow>, CliError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => {
            return Err(CliError::io(
                anyhow::Error::new(e).context(format!("reading {}", path.display())),
            ))
        }
    };
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut rows = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<SweepRow>(line) {
            Ok(r) => rows.push(r),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                log::warn!("ignoring truncated last line of {}", path.display());
            }
            Err(e) => {
                return Err(CliError::config(anyhow::Error::new(e).context(format!(
                    "{} line {}",
                    path.display(),
                    i + 1
                ))))
            }
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn render_csv(header: &[String], rows: &[&SweepRow]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "cell",
        "grid",
        "iterations",
        "style",
        "noise_rate",
        "videos",
        "failed",
        "mof",
        "mean_iou",
        "f1",
        "avg_map",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.cell.clone(),
            r.grid.clone(),
            r.iterations.to_string(),
            r.style.clone(),
            r.noise_rate.to_string(),
            r.videos.to_string(),
            r.failed.to_string(),
            opt(r.mof),
            opt(r.mean_iou),
            opt(r.f1),
            opt(r.avg_map),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    let mut out = String::new();
    for line in header {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(&body);
    Ok(out)
}

#[derive(Serialize)]
struct SweepEcho<'a> {
    command: &'static str,
    backend: crate::BackendKind,
    spec: &'a SweepSpec,
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let raw = fs::read(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))
        .kind(Failure::Io)?;
    let spec: SweepSpec = serde_json::from_slice(&raw)
        .with_context(|| format!("parsing {}", args.spec.display()))
        .kind(Failure::Config)?;
    spec.validate().kind(Failure::Config)?;
    let cells = spec.cells();
    if args.dry_run {
        for c in &cells {
            println!("{}", c.key());
        }
        return Ok(());
    }
    let pool = thread_pool(args.concurrency)?;
    let base = args
        .spec
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut hasher = InputHasher::new();
    hasher.bytes("spec", &raw);
    if let Some(t) = &args.backend.transcript {
        hasher.file("transcript", t)?;
    }
    let videos = load_videos(&spec, &base, &mut hasher)?;
    let header = vec![
        "tpivot sweep".to_string(),
        format!(
            "config: {}",
            serde_json::to_string(&SweepEcho {
                command: "sweep",
                backend: args.backend.backend,
                spec: &spec,
            })
            .kind(Failure::Io)?
        ),
        format!("inputs_sha256: {}", hasher.finish()),
    ];

    let ledger_path = args.ledger.clone().unwrap_or_else(|| {
        let mut s = args.out.clone().into_os_string();
        s.push(".ledger.jsonl");
        PathBuf::from(s)
    });
    let mut done: HashMap<String, SweepRow> = HashMap::new();
    for row in read_ledger(&ledger_path)? {
        done.insert(row.cell.clone(), row);
    }
    let mut ledger = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&ledger_path)
        .with_context(|| format!("opening {}", ledger_path.display()))
        .kind(Failure::Io)?;

    let mut fresh = 0usize;
    for cell in &cells {
        let key = cell.key();
        let skip = done
            .get(&key)
            .is_some_and(|r| !(args.retry_failed && r.error.is_some()));
        if skip {
            log::info!("skipping completed cell {key}");
            continue;
        }
        if args.limit.is_some_and(|l| fresh >= l) {
            log::info!("stopping after {fresh} cells (--limit)");
            break;
        }
        log::info!("running cell {key} over {} videos", videos.len());
        let row = pool.install(|| run_cell(cell, &videos, &spec, &args.backend));
        let mut line = serde_json::to_string(&row).kind(Failure::Io)?;
        line.push('\n');
        ledger
            .write_all(line.as_bytes())
            .and_then(|_| ledger.sync_data())
            .with_context(|| format!("writing {}", ledger_path.display()))
            .kind(Failure::Io)?;
        done.insert(key, row);
        fresh += 1;
        write_csv(&args.out, &header, &cells, &done)?;
    }
    write_csv(&args.out, &header, &cells, &done)
}

fn write_csv(
    out: &Path,
    header: &[String],
    cells: &[Cell],
    done: &HashMap<String, SweepRow>,
) -> Result<(), CliError> {
    let ordered: BTreeMap<usize, &SweepRow> = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| done.get(&c.key()).map(|r| (i, r)))
        .collect();
    let rows: Vec<&SweepRow> = ordered.into_values().collect();
    let text = render_csv(header, &rows).kind(Failure::Io)?;
    let tmp = out.with_extension("csv.tmp");
    write_output(Some(&tmp), &text)?;
    fs::rename(&tmp, out)
        .with_context(|| format!("moving {} into place", out.display()))
        .kind(Failure::Io)
}
