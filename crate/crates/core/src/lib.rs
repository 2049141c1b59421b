//! Temporal action localization by iterative visual prompting.
//!
//! Frames sampled from a time window are tiled into one image with numbered
//! badges; a vision-language model picks the badge closest to an action
//! boundary and the window narrows around it.

pub mod frame_io;
pub mod imaging;
pub mod localizer;
pub mod metrics;
pub mod timeline;
pub mod vlm;

pub use frame_io::{open_frame_source, FrameError, FrameSource, SyntheticFrames, VideoFrames};
pub use imaging::{
    compose, sample_timestamps, GridSpec, ImagingError, PromptImage, Style, TimeWindow,
};
pub use localizer::{
    ActionResult, EndWindow, LocalizeError, Localizer, ScanResult, SearchConfig, TraceEntry,
    TransitionResult,
};
pub use metrics::{
    evaluate_segmentation, map_at, mof, uniform_baseline, EvalReport, MapReport, MetricsError,
};
pub use timeline::{GroundTruthTimeline, Segment, Timeline, TimelineError};
pub use vlm::{
    build_prompt, parse_answer, Boundary, OracleBackend, OracleConfig, PromptContext, VlmAnswer,
    VlmBackend,
};
