use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use tpivot_core::frame_io::{parse_thumos_rows, AnnotationFormat, ParseOptions};
use tpivot_core::metrics::{
    evaluate_segmentation, map_at, Detection, EvalReport, GtInstance, MapReport, DEFAULT_THRESHOLDS,
};

use crate::commands::{read_timeline_json, write_output};
use crate::config::{format_name, read_timeline, InputHasher};
use crate::{CliError, Failure, ResultExt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Frame-level MoF, IoU and F1 against gapless timelines.
    Segmentation,
    /// Instance-level mAP over temporal IoU thresholds.
    Detection,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Prediction files; repeatable. Segmentation mode pairs them with --gt
    /// in order.
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth files; repeatable.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "segmentation")]
    pub mode: EvalMode,
    /// Frame rate used to discretize timelines (segmentation mode).
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long, default_value = "json", value_parser = parse_format)]
    pub gt_format: AnnotationFormat,
    #[arg(long)]
    pub zero_based: bool,
    /// Comma-separated IoU thresholds (detection mode).
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    /// Also write a CSV summary here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<AnnotationFormat, String> {
    s.parse()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub command: String,
    pub mode: EvalMode,
    pub fps: Option<f64>,
    pub gt_format: String,
    pub zero_based: bool,
    pub thresholds: Vec<f64>,
    pub pred: Vec<String>,
    pub gt: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub video_id: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub mof: f64,
    pub mean_iou: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub config_echo: EvalConfig,
    pub inputs_sha256: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub videos: Vec<VideoScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<MeanScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapReport>,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn display(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let thresholds = if args.thresholds.is_empty() {
        DEFAULT_THRESHOLDS.to_vec()
    } else {
        args.thresholds.clone()
    };
    let mut hasher = InputHasher::new();
    for p in &args.pred {
        hasher.file("pred", p)?;
    }
    for g in &args.gt {
        hasher.file("gt", g)?;
    }
    let config_echo = EvalConfig {
        command: "evaluate".into(),
        mode: args.mode,
        fps: args.fps,
        gt_format: format_name(args.gt_format).into(),
        zero_based: args.zero_based,
        thresholds: thresholds.clone(),
        pred: display(&args.pred),
        gt: display(&args.gt),
    };
    let (output, csv) = match args.mode {
        EvalMode::Segmentation => {
            let (videos, mean) = segmentation(args)?;
            let mut csv = String::from("video_id,mof,mean_iou,f1\n");
            for v in &videos {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    v.video_id, v.report.mof, v.report.mean_iou, v.report.f1
                ));
            }
            csv.push_str(&format!(
                "mean,{},{},{}\n",
                mean.mof, mean.mean_iou, mean.f1
            ));
            let out = EvaluationOutput {
                config_echo,
                inputs_sha256: hasher.finish(),
                videos,
                mean: Some(mean),
                map: None,
            };
            (out, csv)
        }
        EvalMode::Detection => {
            let report = detection(args, &thresholds)?;
            let mut csv = String::from("threshold,map\n");
            for (t, m) in report.thresholds.iter().zip(&report.ap_at) {
                csv.push_str(&format!("{t},{m}\n"));
            }
            csv.push_str(&format!("average,{}\n", report.avg_map));
            let out = EvaluationOutput {
                config_echo,
                inputs_sha256: hasher.finish(),
                videos: Vec::new(),
                mean: None,
                map: Some(report),
            };
            (out, csv)
        }
    };
    if let Some(path) = &args.csv {
        write_output(Some(path), &csv)?;
    }
    let mut text = serde_json::to_string_pretty(&output).kind(Failure::Io)?;
    text.push('\n');
    write_output(args.out.as_deref(), &text)
}

fn segmentation(args: &EvaluateArgs) -> Result<(Vec<VideoScore>, MeanScores), CliError> {
    let fps = args
        .fps
        .ok_or_else(|| CliError::config(anyhow!("segmentation mode needs --fps")))?;
    if args.pred.len() != args.gt.len() {
        return Err(CliError::config(anyhow!(
            "segmentation mode pairs predictions with ground truth: got {} --pred and {} --gt",
            args.pred.len(),
            args.gt.len()
        )));
    }
    let opts = ParseOptions {
        fps: Some(fps),
        zero_based: args.zero_based,
        ..ParseOptions::default()
    };
    let mut videos = Vec::with_capacity(args.pred.len());
    for (pred_path, gt_path) in args.pred.iter().zip(&args.gt) {
        let pred = read_timeline_json(pred_path)?;
        let gt = read_timeline(gt_path, args.gt_format, &opts)?;
        let report = evaluate_segmentation(&pred, &gt, fps)
            .with_context(|| {
                format!(
                    "scoring {} against {}",
                    pred_path.display(),
                    gt_path.display()
                )
            })
            .kind(Failure::Config)?;
        videos.push(VideoScore {
            video_id: stem(gt_path),
            report,
        });
    }
    let reports: Vec<EvalReport> = videos.iter().map(|v| v.report.clone()).collect();
    let (mof, mean_iou, f1) = EvalReport::mean_of(&reports).expect("at least one prediction");
    Ok((videos, MeanScores { mof, mean_iou, f1 }))
}

/// Detections from a JSON array of detections, a run output (every segment
/// scores 1.0), or CSV rows `video_id,label,start,end[,score]`.
fn read_detections(path: &Path) -> Result<Vec<Detection>, CliError> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .kind(Failure::Io)?;
    let schema = |e: anyhow::Error| {
        CliError::config(e.context(format!("{} has an unexpected layout", path.display())))
    };
    if path.extension().is_some_and(|e| e == "csv") {
        return detections_from_csv(&text).map_err(schema);
    }
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .kind(Failure::Config)?;
    if value.is_array() {
        return serde_json::from_value(value).map_err(|e| schema(e.into()));
    }
    let run: crate::RunOutput = serde_json::from_value(value).map_err(|e| schema(e.into()))?;
    Ok(run
        .segments
        .into_iter()
        .map(|s| Detection {
            video_id: run.video.clone(),
            label: s.label,
            start: s.start,
            end: s.end,
            score: 1.0,
        })
        .collect())
}

fn detections_from_csv(text: &str) -> anyhow::Result<Vec<Detection>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let start = field(2).parse::<f64>();
        if i == 0 && start.is_err() {
            continue;
        }
        if record.len() < 4 {
            return Err(anyhow!(
                "row {}: expected video_id,label,start,end[,score]",
                i + 1
            ));
        }
        let score = match record.get(4) {
            Some(s) if !s.is_empty() => s
                .parse()
                .with_context(|| format!("row {}: bad score", i + 1))?,
            _ => 1.0,
        };
        out.push(Detection {
            video_id: field(0).to_string(),
            label: field(1).to_string(),
            start: start.with_context(|| format!("row {}: bad start", i + 1))?,
            end: field(3)
                .parse()
                .with_context(|| format!("row {}: bad end", i + 1))?,
            score,
        });
    }
    Ok(out)
}

fn read_instances(
    path: &Path,
    format: AnnotationFormat,
    zero_based: bool,
    fps: Option<f64>,
) -> Result<Vec<GtInstance>, CliError> {
    if format == AnnotationFormat::ThumosCsv {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .kind(Failure::Io)?;
        let rows = parse_thumos_rows(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .kind(Failure::Config)?;
        return Ok(rows
            .into_iter()
            .map(|(video_id, s)| GtInstance {
                video_id,
                label: s.label,
                start: s.start,
                end: s.end,
            })
            .collect());
    }
    let opts = ParseOptions {
        fps,
        zero_based,
        ..ParseOptions::default()
    };
    let timeline = read_timeline(path, format, &opts)?;
    let video_id = stem(path);
    Ok(timeline
        .segments
        .into_iter()
        .map(|s| GtInstance {
            video_id: video_id.clone(),
            label: s.label,
            start: s.start,
            end: s.end,
        })
        .collect())
}

fn detection(args: &EvaluateArgs, thresholds: &[f64]) -> Result<MapReport, CliError> {
    let mut preds = Vec::new();
    for p in &args.pred {
        preds.extend(read_detections(p)?);
    }
    let mut gts = Vec::new();
    for g in &args.gt {
        gts.extend(read_instances(
            g,
            args.gt_format,
            args.zero_based,
            args.fps,
        )?);
    }
    map_at(&preds, &gts, thresholds).kind(Failure::Config)
}
