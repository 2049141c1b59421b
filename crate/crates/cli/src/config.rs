use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tpivot_core::frame_io::{parse_timeline, AnnotationFormat, ParseOptions, DEFAULT_PATTERN};
use tpivot_core::imaging::{GridSpec, Style};
use tpivot_core::localizer::{EndWindow, SearchConfig};
use tpivot_core::vlm::{
    ChatBackend, HttpConfig, OpenAiTransport, OracleBackend, OracleConfig, RecordingTransport,
    ReplayTransport, RetryPolicy, VlmBackend, ENDPOINT_ENV,
};
use tpivot_core::{FrameSource, SyntheticFrames, Timeline, VideoFrames};

use crate::{CliError, Failure, ResultExt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Simulated model answering from ground truth.
    Oracle,
    /// Serves recorded replies by request hash.
    Replay,
    /// OpenAI-compatible chat-completions endpoint.
    #[value(name = "openai_http")]
    OpenaiHttp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EndWindowArg {
    #[value(name = "full_video")]
    FullVideo,
    #[value(name = "after_start")]
    AfterStart,
}

impl From<EndWindowArg> for EndWindow {
    fn from(a: EndWindowArg) -> Self {
        match a {
            EndWindowArg::FullVideo => EndWindow::FullVideo,
            EndWindowArg::AfterStart => EndWindow::AfterStart,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct VideoArgs {
    /// Directory of pre-extracted frames.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Generate placeholder frames spanning the ground-truth duration.
    #[arg(long, conflicts_with = "frames")]
    pub synthetic: bool,
    /// Frame rate of the frame directory.
    #[arg(long)]
    pub fps: f64,
    #[arg(long, default_value = DEFAULT_PATTERN)]
    pub pattern: String,
    /// Ground-truth annotation file. Required by the oracle backend.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// json, breakfast_txt or thumos_csv.
    #[arg(long, default_value = "json", value_parser = parse_format)]
    pub gt_format: AnnotationFormat,
    /// Breakfast frame numbers start at 0 instead of 1.
    #[arg(long)]
    pub zero_based: bool,
    /// Video id: names the output and filters thumos_csv rows (default: frame directory name).
    #[arg(long)]
    pub video_id: Option<String>,
    /// Duration of the ground truth when it cannot be inferred.
    #[arg(long)]
    pub duration: Option<f64>,
}

fn parse_format(s: &str) -> Result<AnnotationFormat, String> {
    s.parse()
}

pub(crate) fn format_name(f: AnnotationFormat) -> &'static str {
    match f {
        AnnotationFormat::Json => "json",
        AnnotationFormat::BreakfastTxt => "breakfast_txt",
        AnnotationFormat::ThumosCsv => "thumos_csv",
    }
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Grid shape, ROWSxCOLS.
    #[arg(long, default_value = "5x5")]
    pub grid: String,
    /// Search iterations per boundary.
    #[arg(long, default_value_t = 4)]
    pub iters: u32,
    /// tiled_corner, tiled_center, tiled_spacing or stacked.
    #[arg(long, default_value = "tiled_corner")]
    pub style: Style,
    #[arg(long)]
    pub cell_px: Option<u32>,
    /// Narrowest search window in seconds (default: four frame intervals).
    #[arg(long)]
    pub min_window: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub shrink: f64,
    /// Initial window for end searches during transition estimation.
    #[arg(long, value_enum, default_value = "full_video")]
    pub end_window: EndWindowArg,
}

impl SearchArgs {
    pub fn search_config(&self) -> Result<SearchConfig, CliError> {
        let mut grid = GridSpec::parse(&self.grid, self.style).kind(Failure::Config)?;
        if let Some(px) = self.cell_px {
            grid = grid.with_cell_px(px).kind(Failure::Config)?;
        }
        let mut cfg = SearchConfig::new(grid, self.iters);
        cfg.min_window_s = self.min_window;
        cfg.window_shrink = self.shrink;
        cfg.end_window = self.end_window.into();
        cfg.validate().kind(Failure::Config)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "oracle")]
    pub backend: BackendKind,
    /// Probability that the oracle answers with a random badge.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Recorded JSONL transcript for the replay backend.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Append every HTTP exchange to this JSONL transcript.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Chat-completions URL (also read from TPIVOT_VLM_ENDPOINT).
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value = "gpt-4o")]
    pub model: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    pub api_key_env: String,
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 2)]
    pub max_retries: u32,
    /// Per-minute request budget shared by all workers; 0 disables it.
    #[arg(long, default_value_t = 60)]
    pub rpm: usize,
    #[arg(long, default_value_t = 90)]
    pub jpeg_quality: u8,
    /// Fail instead of answering with the centre badge after retries run out.
    #[arg(long)]
    pub no_fallback: bool,
}

impl BackendArgs {
    fn endpoint(&self) -> String {
        self.endpoint
            .clone()
            .or_else(|| std::env::var(ENDPOINT_ENV).ok())
            .unwrap_or_else(|| HttpConfig::default().endpoint)
    }

    fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            fallback_to_center: !self.no_fallback,
            ..RetryPolicy::default()
        }
    }

    pub fn build(
        &self,
        gt: Option<&Timeline>,
        concurrency: usize,
    ) -> Result<Box<dyn VlmBackend>, CliError> {
        match self.backend {
            BackendKind::Oracle => {
                let gt =
                    gt.ok_or_else(|| CliError::config(anyhow!("the oracle backend needs --gt")))?;
                let cfg =
                    OracleConfig::new(gt.clone(), self.noise, self.seed).kind(Failure::Config)?;
                Ok(Box::new(OracleBackend::new(cfg)))
            }
            BackendKind::Replay => {
                let path = self.transcript.as_ref().ok_or_else(|| {
                    CliError::config(anyhow!("the replay backend needs --transcript"))
                })?;
                let replay = ReplayTransport::load(path)
                    .with_context(|| format!("loading transcript {}", path.display()))
                    .kind(Failure::Io)?;
                Ok(Box::new(
                    ChatBackend::new(replay)
                        .with_policy(self.policy())
                        .with_jpeg_quality(self.jpeg_quality),
                ))
            }
            BackendKind::OpenaiHttp => {
                let cfg = HttpConfig {
                    endpoint: self.endpoint(),
                    model: self.model.clone(),
                    api_key_env: self.api_key_env.clone(),
                    timeout_s: self.timeout,
                    max_retries: self.max_retries,
                    max_concurrency: concurrency.max(1),
                    requests_per_minute: (self.rpm > 0).then_some(self.rpm),
                    jpeg_quality: self.jpeg_quality,
                };
                if !(cfg.timeout_s > 0.0) {
                    return Err(CliError::config(anyhow!("--timeout must be positive")));
                }
                let transport = OpenAiTransport::new(&cfg).kind(Failure::Backend)?;
                if let Some(path) = &self.record {
                    let rec = RecordingTransport::new(transport, path)
                        .with_context(|| format!("opening {}", path.display()))
                        .kind(Failure::Io)?;
                    Ok(Box::new(
                        ChatBackend::new(rec)
                            .with_policy(self.policy())
                            .with_jpeg_quality(self.jpeg_quality),
                    ))
                } else {
                    Ok(Box::new(
                        ChatBackend::new(transport)
                            .with_policy(self.policy())
                            .with_jpeg_quality(self.jpeg_quality),
                    ))
                }
            }
        }
    }
}

/// Everything that determines a run's output, written into every result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub backend: BackendKind,
    pub grid: String,
    pub style: Style,
    pub cell_px: u32,
    pub iterations: u32,
    pub min_window_s: Option<f64>,
    pub window_shrink: f64,
    pub end_window: EndWindow,
    pub scan_window_s: Option<f64>,
    pub fps: f64,
    pub seed: u64,
    pub noise_rate: f64,
    pub frames: Option<String>,
    pub synthetic_frames: bool,
    pub frame_pattern: String,
    pub gt: Option<String>,
    pub gt_format: String,
    pub zero_based: bool,
    pub video_id: Option<String>,
    pub transcript: Option<String>,
    pub model: Option<String>,
    pub endpoint: Option<String>,
}

impl RunConfig {
    pub fn new(
        command: &str,
        video: &VideoArgs,
        search: &SearchConfig,
        backend: &BackendArgs,
    ) -> Self {
        let http = backend.backend == BackendKind::OpenaiHttp;
        Self {
            command: command.to_string(),
            backend: backend.backend,
            grid: search.grid.shape(),
            style: search.grid.style,
            cell_px: search.grid.cell_px,
            iterations: search.iterations,
            min_window_s: search.min_window_s,
            window_shrink: search.window_shrink,
            end_window: search.end_window,
            scan_window_s: None,
            fps: video.fps,
            seed: backend.seed,
            noise_rate: backend.noise,
            frames: video.frames.as_ref().map(|p| p.display().to_string()),
            synthetic_frames: video.synthetic,
            frame_pattern: video.pattern.clone(),
            gt: video.gt.as_ref().map(|p| p.display().to_string()),
            gt_format: format_name(video.gt_format).to_string(),
            zero_based: video.zero_based,
            video_id: video.video_id.clone(),
            transcript: backend.transcript.as_ref().map(|p| p.display().to_string()),
            model: http.then(|| backend.model.clone()),
            endpoint: http.then(|| backend.endpoint()),
        }
    }
}

pub fn load_gt(video: &VideoArgs) -> Result<Option<Timeline>, CliError> {
    let Some(path) = &video.gt else {
        return Ok(None);
    };
    let opts = ParseOptions {
        fps: Some(video.fps),
        zero_based: video.zero_based,
        video_id: video.video_id.clone(),
        duration_s: video.duration,
    };
    read_timeline(path, video.gt_format, &opts).map(Some)
}

pub fn read_timeline(
    path: &Path,
    format: AnnotationFormat,
    opts: &ParseOptions,
) -> Result<Timeline, CliError> {
    use tpivot_core::frame_io::AnnotationError;
    parse_timeline(path, format, opts).map_err(|e| {
        let kind = match e {
            AnnotationError::Io { .. } => Failure::Io,
            _ => Failure::Config,
        };
        CliError::new(
            kind,
            anyhow::Error::new(e).context(format!("reading {}", path.display())),
        )
    })
}

pub fn open_frames(
    video: &VideoArgs,
    gt: Option<&Timeline>,
) -> Result<Box<dyn VideoFrames>, CliError> {
    use tpivot_core::FrameError;
    if !(video.fps.is_finite() && video.fps > 0.0) {
        return Err(CliError::config(anyhow!(
            "--fps must be positive, got {}",
            video.fps
        )));
    }
    if let Some(dir) = &video.frames {
        return FrameSource::open(dir, video.fps, &video.pattern)
            .map(|s| Box::new(s) as Box<dyn VideoFrames>)
            .map_err(|e| {
                let kind = match e {
                    FrameError::BadFps(_) | FrameError::BadPattern(_) => Failure::Config,
                    _ => Failure::Io,
                };
                CliError::new(kind, e.into())
            });
    }
    if video.synthetic {
        let duration = gt
            .map(|g| g.duration_s)
            .or(video.duration)
            .ok_or_else(|| CliError::config(anyhow!("--synthetic needs --gt or --duration")))?;
        return Ok(Box::new(
            SyntheticFrames::new(duration, video.fps).kind(Failure::Config)?,
        ));
    }
    Err(CliError::config(anyhow!(
        "one of --frames or --synthetic is required"
    )))
}

/// Hashes every input that can change a run's result.
///
/// Frame directories contribute file names and sizes, not pixel data.
#[derive(Default)]
pub struct InputHasher {
    hasher: Sha256,
}

impl InputHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, tag: &str, data: &[u8]) {
        self.hasher.update(tag.as_bytes());
        self.hasher.update((data.len() as u64).to_le_bytes());
        self.hasher.update(data);
    }

    pub fn file(&mut self, tag: &str, path: &Path) -> Result<(), CliError> {
        let data = fs::read(path)
            .with_context(|| format!("reading {}", path.display()))
            .kind(Failure::Io)?;
        self.bytes(tag, &data);
        Ok(())
    }

    pub fn frame_dir(&mut self, dir: &Path) -> Result<(), CliError> {
        let mut entries = fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))
            .kind(Failure::Io)?
            .filter_map(Result::ok)
            .filter_map(|e| {
                let len = e.metadata().ok()?.len();
                Some((e.file_name().to_string_lossy().into_owned(), len))
            })
            .collect::<Vec<_>>();
        entries.sort();
        for (name, len) in entries {
            self.bytes("frame", format!("{name}:{len}").as_bytes());
        }
        Ok(())
    }

    pub fn video(&mut self, video: &VideoArgs, backend: &BackendArgs) -> Result<(), CliError> {
        if let Some(dir) = &video.frames {
            self.frame_dir(dir)?;
        }
        if let Some(gt) = &video.gt {
            self.file("gt", gt)?;
        }
        if let Some(t) = &backend.transcript {
            self.file("transcript", t)?;
        }
        Ok(())
    }

    pub fn finish(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

/// Reads an ordered label list: a JSON array of strings, or one label per
/// non-empty line.
pub fn read_labels(path: &Path) -> Result<(Vec<String>, Vec<u8>), CliError> {
    let raw = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .kind(Failure::Io)?;
    let text = String::from_utf8(raw.clone())
        .with_context(|| format!("{} is not UTF-8", path.display()))
        .kind(Failure::Config)?;
    let labels = if text.trim_start().starts_with('[') {
        serde_json::from_str::<Vec<String>>(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .kind(Failure::Config)?
    } else {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    };
    Ok((labels, raw))
}
