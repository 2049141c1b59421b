use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use tpivot_core::frame_io::{extract_frames, ExtractError, DEFAULT_PATTERN};
use tpivot_core::imaging::ImagingError;
use tpivot_core::localizer::{Localizer, MonotonicityReport, TraceEntry};
use tpivot_core::vlm::BackendError;
use tpivot_core::VideoFrames;
use tpivot_core::{LocalizeError, Segment, Timeline};

use crate::config::{load_gt, open_frames, read_labels, InputHasher, RunConfig};
use crate::{
    CliError, ExtractArgs, Failure, LocalizeArgs, ResultExt, RunArgs, ScanArgs, TransitionsArgs,
    ValidateArgs,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDetails {
    pub per_task_start: Vec<f64>,
    pub per_task_end: Vec<f64>,
    pub raw_starts: Vec<f64>,
    pub raw_ends: Vec<f64>,
    pub monotonicity: MonotonicityReport,
}

/// JSON written by `localize`, `transitions` and `scan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub video: String,
    pub config_echo: RunConfig,
    pub inputs_sha256: String,
    pub segments: Vec<Segment>,
    pub transitions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition_details: Option<TransitionDetails>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeline: Option<Timeline>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows_scanned: Option<usize>,
    pub per_iteration_trace: Vec<TraceEntry>,
}

pub(crate) fn localize_failure(e: LocalizeError) -> CliError {
    let kind = match &e {
        LocalizeError::Backend(BackendError::Oracle(_)) => Failure::Config,
        LocalizeError::Backend(_) => Failure::Backend,
        LocalizeError::Imaging(ImagingError::Frame(_)) => Failure::Io,
        _ => Failure::Config,
    };
    CliError::new(kind, e.into())
}

pub(crate) fn thread_pool(concurrency: usize) -> Result<rayon::ThreadPool, CliError> {
    if concurrency == 0 {
        return Err(CliError::config(anyhow!(
            "--concurrency must be at least 1"
        )));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency)
        .build()
        .kind(Failure::Config)
}

pub(crate) fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))
                    .kind(Failure::Io)?;
            }
            fs::write(path, text)
                .with_context(|| format!("writing {}", path.display()))
                .kind(Failure::Io)
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .context("writing to stdout")
                .kind(Failure::Io)
        }
    }
}

fn video_name(run: &RunArgs) -> String {
    if let Some(id) = &run.video.video_id {
        return id.clone();
    }
    if let Some(dir) = &run.video.frames {
        return dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
    }
    run.video
        .gt
        .as_ref()
        .and_then(|p| p.file_stem())
        .map(|s| format!("synthetic:{}", s.to_string_lossy()))
        .unwrap_or_else(|| "synthetic".to_string())
}

struct Prepared {
    gt: Option<Timeline>,
    frames: Box<dyn tpivot_core::VideoFrames>,
    backend: Box<dyn tpivot_core::VlmBackend>,
    config: RunConfig,
    hasher: InputHasher,
    pool: rayon::ThreadPool,
}

fn prepare(command: &str, run: &RunArgs) -> Result<Prepared, CliError> {
    let search = run.search.search_config()?;
    let pool = thread_pool(run.concurrency)?;
    let gt = load_gt(&run.video)?;
    let frames = open_frames(&run.video, gt.as_ref())?;
    let backend = run.backend.build(gt.as_ref(), run.concurrency)?;
    let mut hasher = InputHasher::new();
    hasher.video(&run.video, &run.backend)?;
    Ok(Prepared {
        gt,
        frames,
        backend,
        config: RunConfig::new(command, &run.video, &search, &run.backend),
        hasher,
        pool,
    })
}

fn emit(run: &RunArgs, output: &RunOutput) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(output).kind(Failure::Io)?;
    text.push('\n');
    write_output(run.out.as_deref(), &text)
}

pub fn localize(args: &LocalizeArgs) -> Result<(), CliError> {
    let p = prepare("localize", &args.run)?;
    let mut hasher = p.hasher;
    hasher.bytes("query", args.query.as_bytes());
    let search = args.run.search.search_config()?;
    let loc =
        Localizer::new(p.frames.as_ref(), p.backend.as_ref(), search).map_err(localize_failure)?;
    let result = p
        .pool
        .install(|| loc.localize_action(&args.query))
        .map_err(localize_failure)?;
    log::info!(
        "{}: [{:.3}, {:.3}] after {} queries",
        args.query,
        result.segment.start,
        result.segment.end,
        result.trace.len()
    );
    emit(
        &args.run,
        &RunOutput {
            video: video_name(&args.run),
            config_echo: p.config,
            inputs_sha256: hasher.finish(),
            segments: vec![result.segment],
            transitions: Vec::new(),
            transition_details: None,
            timeline: None,
            windows_scanned: None,
            per_iteration_trace: result.trace,
        },
    )
}

pub fn transitions(args: &TransitionsArgs) -> Result<(), CliError> {
    let p = prepare("transitions", &args.run)?;
    let mut hasher = p.hasher;
    let labels = match &args.labels {
        Some(path) => {
            let (labels, raw) = read_labels(path)?;
            hasher.bytes("labels", &raw);
            labels
        }
        None => {
            let gt =
                p.gt.as_ref()
                    .ok_or_else(|| CliError::config(anyhow!("--labels-from-gt needs --gt")))?;
            gt.task_sequence()
        }
    };
    if labels.len() < 2 {
        return Err(CliError::config(anyhow!(
            "need at least 2 labels, got {}",
            labels.len()
        )));
    }
    let search = args.run.search.search_config()?;
    let loc =
        Localizer::new(p.frames.as_ref(), p.backend.as_ref(), search).map_err(localize_failure)?;
    let result = p
        .pool
        .install(|| loc.estimate_transitions(&labels))
        .map_err(localize_failure)?;
    if !result.monotonicity.is_clean() {
        log::warn!(
            "boundary estimates are not monotone: {:?}",
            result.monotonicity
        );
    }
    result
        .timeline
        .check_gapless()
        .context("derived timeline is not gapless")
        .kind(Failure::Backend)?;
    emit(
        &args.run,
        &RunOutput {
            video: video_name(&args.run),
            config_echo: p.config,
            inputs_sha256: hasher.finish(),
            segments: result.timeline.segments.clone(),
            transitions: result.transitions,
            transition_details: Some(TransitionDetails {
                per_task_start: result.per_task_start,
                per_task_end: result.per_task_end,
                raw_starts: result.raw_starts,
                raw_ends: result.raw_ends,
                monotonicity: result.monotonicity,
            }),
            timeline: Some(result.timeline),
            windows_scanned: None,
            per_iteration_trace: result.trace,
        },
    )
}

pub fn scan(args: &ScanArgs) -> Result<(), CliError> {
    let p = prepare("scan", &args.run)?;
    let mut hasher = p.hasher;
    let mut labels = args.query.clone();
    if let Some(path) = &args.labels {
        let (more, raw) = read_labels(path)?;
        hasher.bytes("labels", &raw);
        labels.extend(more);
    }
    if labels.is_empty() {
        return Err(CliError::config(anyhow!(
            "give at least one --query or a --labels file"
        )));
    }
    for l in &args.query {
        hasher.bytes("query", l.as_bytes());
    }
    let search = args.run.search.search_config()?;
    let loc =
        Localizer::new(p.frames.as_ref(), p.backend.as_ref(), search).map_err(localize_failure)?;
    let result = p
        .pool
        .install(|| loc.windowed_scan(&labels, args.scan_window))
        .map_err(localize_failure)?;
    let mut config = p.config;
    config.scan_window_s = Some(args.scan_window);
    emit(
        &args.run,
        &RunOutput {
            video: video_name(&args.run),
            config_echo: config,
            inputs_sha256: hasher.finish(),
            segments: result.segments,
            transitions: Vec::new(),
            transition_details: None,
            timeline: None,
            windows_scanned: Some(result.windows_scanned),
            per_iteration_trace: result.trace,
        },
    )
}

/// Reads a timeline JSON file, or the `timeline` field of a run output.
pub(crate) fn read_timeline_json(path: &Path) -> Result<Timeline, CliError> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .kind(Failure::Io)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .kind(Failure::Config)?;
    let inner = match value.get("timeline") {
        Some(t) => t.clone(),
        None if value.get("duration").is_some() => value,
        None => {
            return Err(CliError::config(anyhow!(
                "{} holds neither a timeline nor a transitions result",
                path.display()
            )))
        }
    };
    serde_json::from_value(inner)
        .with_context(|| format!("{} does not match the timeline schema", path.display()))
        .kind(Failure::Config)
}

pub fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    let timeline = read_timeline_json(&args.timeline)?;
    let n = timeline.segments.len();
    let d = timeline.duration_s;
    let timeline = timeline.validated().kind(Failure::Invalid)?;
    timeline.check_disjoint().kind(Failure::Invalid)?;
    if !args.allow_gaps {
        timeline.check_gapless().kind(Failure::Invalid)?;
    }
    let mode = if args.allow_gaps {
        "disjoint"
    } else {
        "gapless"
    };
    println!("ok: {n} segments, {mode} over {d} s");
    Ok(())
}

pub fn extract(args: &ExtractArgs) -> Result<(), CliError> {
    if !(args.fps.is_finite() && args.fps > 0.0) {
        return Err(CliError::config(anyhow!(
            "--fps must be positive, got {}",
            args.fps
        )));
    }
    extract_frames(&args.ffmpeg, &args.video, &args.out_dir, args.fps).map_err(|e| {
        let kind = match e {
            ExtractError::Failed { .. } => Failure::Backend,
            _ => Failure::Io,
        };
        CliError::new(kind, e.into())
    })?;
    let source = tpivot_core::FrameSource::open(&args.out_dir, args.fps, DEFAULT_PATTERN)
        .kind(Failure::Io)?;
    println!(
        "extracted {} frames into {}",
        source.frame_count(),
        args.out_dir.display()
    );
    Ok(())
}
