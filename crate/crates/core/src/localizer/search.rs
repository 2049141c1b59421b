use serde::{Deserialize, Serialize};

use super::{LocalizeError, Localizer, TraceEntry};
use crate::imaging::{compose, sample_frames, sample_timestamps, PromptImage, TimeWindow};
use crate::timeline::Segment;
use crate::vlm::{self, build_prompt, Boundary, PromptContext, QueryKey};

/// Outcome of one boundary search. `time` is `None` only when no-answer
/// replies are allowed and the first query reported the action absent.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySearch {
    pub time: Option<f64>,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResult {
    pub segment: Segment,
    pub trace: Vec<TraceEntry>,
}

impl Localizer<'_> {
    fn prompt_for(&self, window: &TimeWindow) -> Result<PromptImage, LocalizeError> {
        let n = self.config.grid.cells();
        if self.backend.wants_images() {
            let frames = sample_frames(self.frames, window, n)?;
            Ok(compose(&frames, &self.config.grid)?)
        } else {
            Ok(PromptImage {
                images: Vec::new(),
                index_to_time: sample_timestamps(window, self.frames.duration_s(), n)?,
            })
        }
    }

    /// Iteratively re-centres a shrinking window on the frame the model picks.
    ///
    /// Stops early once an iteration's badge spacing is finer than one frame.
    pub fn localize_boundary(
        &self,
        ctx: &PromptContext,
        initial: TimeWindow,
        task: u64,
        scope: u64,
    ) -> Result<BoundarySearch, LocalizeError> {
        self.search_boundary(ctx, initial, None, task, scope)
    }

    // With `bounds`, every sampled window is intersected with that range.
    fn search_boundary(
        &self,
        ctx: &PromptContext,
        initial: TimeWindow,
        bounds: Option<(f64, f64)>,
        task: u64,
        scope: u64,
    ) -> Result<BoundarySearch, LocalizeError> {
        let fps = self.frames.fps();
        let duration = self.frames.duration_s();
        let n = self.config.grid.cells();
        let floor = self.config.min_window_for(fps);
        let text = build_prompt(ctx);
        let mut center = initial.center_s;
        let mut width = initial.width_s;
        let mut trace = Vec::with_capacity(self.config.iterations as usize);

        for iteration in 0..self.config.iterations {
            let mut window = TimeWindow::new(center, width)?;
            if let Some((blo, bhi)) = bounds {
                window = TimeWindow::from_range(window.lo().max(blo), window.hi().min(bhi))?;
            }
            let prompt = self.prompt_for(&window)?;
            let key = QueryKey {
                task,
                boundary: ctx.boundary,
                iteration,
                scope,
            };
            let answer = vlm::query(self.backend, &prompt, &text, ctx, key)?;
            let selected_time = answer.selected_index.and_then(|k| prompt.time_of(k));
            trace.push(TraceEntry {
                task: ctx.focus_label().to_string(),
                task_index: ctx.focus_index,
                boundary: ctx.boundary,
                scope,
                iteration: iteration + 1,
                window_center: window.center_s,
                window_width: window.width_s,
                selected_index: answer.selected_index,
                selected_time,
            });
            match selected_time {
                Some(t) => center = t,
                None if iteration == 0 => return Ok(BoundarySearch { time: None, trace }),
                // Later no-answer replies do not retract a detection.
                None => {}
            }
            let (lo, hi) = window.clamp_to(duration)?;
            if (hi - lo) / ((n - 1) as f64) < 1.0 / fps {
                break;
            }
            width = (width * self.config.window_shrink).max(floor.min(width));
        }
        Ok(BoundarySearch {
            time: Some(center),
            trace,
        })
    }

    /// Start search over `[lo, hi]`, then end search over `[start, hi]`.
    ///
    /// The segment is `None` when no-answer replies are allowed and the start
    /// search reports the action absent.
    pub(crate) fn localize_action_in(
        &self,
        ctx: &PromptContext,
        lo: f64,
        hi: f64,
        task: u64,
        scope: u64,
    ) -> Result<(Option<Segment>, Vec<TraceEntry>), LocalizeError> {
        let duration = self.frames.duration_s();
        let start_ctx = ctx.with_boundary(Boundary::Start);
        let start_search = self.search_boundary(
            &start_ctx,
            TimeWindow::from_range(lo, hi)?,
            Some((lo, hi)),
            task,
            scope,
        )?;
        let mut trace = start_search.trace;
        let Some(start) = start_search.time else {
            return Ok((None, trace));
        };
        let start = start.clamp(0.0, duration);
        let end = if hi > start {
            let end_ctx = ctx.with_boundary(Boundary::End);
            let end_search = self.search_boundary(
                &end_ctx,
                TimeWindow::from_range(start, hi)?,
                Some((start, hi)),
                task,
                scope,
            )?;
            trace.extend(end_search.trace);
            end_search.time.unwrap_or(start)
        } else {
            start
        };
        let end = end.max(start).min(duration);
        Ok((Some(Segment::new(ctx.focus_label(), start, end)), trace))
    }

    /// Localizes one occurrence of `label` in the whole video.
    pub fn localize_action(&self, label: &str) -> Result<ActionResult, LocalizeError> {
        if label.trim().is_empty() {
            return Err(LocalizeError::EmptyLabel);
        }
        let ctx = PromptContext::single(label, Boundary::Start, false);
        let (segment, trace) =
            self.localize_action_in(&ctx, 0.0, self.frames.duration_s(), 0, 0)?;
        let segment =
            segment.expect("detection is only optional when no-answer replies are allowed");
        Ok(ActionResult { segment, trace })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_io::SyntheticFrames;
    use crate::imaging::{GridSpec, Style};
    use crate::localizer::SearchConfig;
    use crate::timeline::Timeline;
    use crate::vlm::{
        BackendError, OracleBackend, OracleConfig, VlmAnswer, VlmBackend, VlmRequest,
    };

    fn config(rows: u32, cols: u32, iterations: u32) -> SearchConfig {
        SearchConfig::new(
            GridSpec::new(rows, cols, Style::TiledCorner).unwrap(),
            iterations,
        )
    }

    fn oracle_for(segments: Vec<Segment>, duration: f64) -> OracleBackend {
        OracleBackend::new(OracleConfig::perfect(Timeline::new(duration, segments)))
    }

    #[test]
    fn two_by_two_four_iterations_bound() {
        let frames = SyntheticFrames::new(64.0, 30.0).unwrap();
        let backend = oracle_for(vec![Segment::new("a", 37.0, 50.0)], 64.0);
        let loc = Localizer::new(&frames, &backend, config(2, 2, 4)).unwrap();
        let ctx = PromptContext::single("a", Boundary::Start, false);
        let res = loc
            .localize_boundary(&ctx, TimeWindow::full(64.0).unwrap(), 0, 0)
            .unwrap();
        let t = res.time.unwrap();
        assert!((t - 37.0).abs() <= 64.0 / (8.0 * 3.0), "t = {t}");
        assert_eq!(res.trace.len(), 4);
        assert_eq!(res.trace[0].window_center, 32.0);
        assert_eq!(res.trace[0].window_width, 64.0);
        assert_eq!(res.trace[1].window_width, 32.0);
    }

    #[test]
    fn five_by_five_bound() {
        let frames = SyntheticFrames::new(60.0, 30.0).unwrap();
        for target in [0.0, 0.3, 13.37, 29.99, 45.5, 59.9, 60.0] {
            let backend = oracle_for(vec![Segment::new("a", target, 60.0)], 60.0);
            let loc = Localizer::new(&frames, &backend, SearchConfig::standard()).unwrap();
            let ctx = PromptContext::single("a", Boundary::Start, false);
            let t = loc
                .localize_boundary(&ctx, TimeWindow::full(60.0).unwrap(), 0, 0)
                .unwrap()
                .time
                .unwrap();
            assert!(
                (t - target).abs() <= 0.3125 + 1.0 / 60.0,
                "target {target}: {t}"
            );
        }
    }

    #[test]
    fn single_iteration_returns_a_sampled_time() {
        let frames = SyntheticFrames::new(60.0, 30.0).unwrap();
        let backend = oracle_for(vec![Segment::new("a", 21.0, 30.0)], 60.0);
        let loc = Localizer::new(&frames, &backend, config(5, 5, 1)).unwrap();
        let ctx = PromptContext::single("a", Boundary::Start, false);
        let t = loc
            .localize_boundary(&ctx, TimeWindow::full(60.0).unwrap(), 0, 0)
            .unwrap()
            .time
            .unwrap();
        let sampled = sample_timestamps(&TimeWindow::full(60.0).unwrap(), 60.0, 25).unwrap();
        assert!(sampled.contains(&t));
    }

    #[test]
    fn action_segment_bounds() {
        let frames = SyntheticFrames::new(60.0, 30.0).unwrap();
        let backend = oracle_for(vec![Segment::new("cut", 10.0, 20.0)], 60.0);
        let loc = Localizer::new(&frames, &backend, SearchConfig::standard()).unwrap();
        let res = loc.localize_action("cut").unwrap();
        assert_eq!(res.segment.label, "cut");
        assert!(
            (res.segment.start - 10.0).abs() <= 0.32,
            "{:?}",
            res.segment
        );
        assert!((res.segment.end - 20.0).abs() <= 0.32, "{:?}", res.segment);
        assert_eq!(res.trace.len(), 8);
        assert!(res.trace[4..].iter().all(|e| e.boundary == Boundary::End));
    }

    #[test]
    fn full_span_action() {
        let frames = SyntheticFrames::new(30.0, 10.0).unwrap();
        let backend = oracle_for(vec![Segment::new("all", 0.0, 30.0)], 30.0);
        let loc = Localizer::new(&frames, &backend, SearchConfig::standard()).unwrap();
        let seg = loc.localize_action("all").unwrap().segment;
        assert!(seg.start < 0.2 && seg.end > 29.8, "{seg:?}");
    }

    struct AlwaysFirst;
    impl VlmBackend for AlwaysFirst {
        fn wants_images(&self) -> bool {
            false
        }
        fn query(&self, _req: &VlmRequest<'_>) -> Result<VlmAnswer, BackendError> {
            Ok(VlmAnswer {
                selected_index: Some(1),
                raw_text: String::new(),
                analysis: String::new(),
            })
        }
        fn name(&self) -> &'static str {
            "always-first"
        }
    }

    #[test]
    fn adversarial_first_badge() {
        let frames = SyntheticFrames::new(60.0, 30.0).unwrap();
        let loc = Localizer::new(&frames, &AlwaysFirst, SearchConfig::standard()).unwrap();
        let seg = loc.localize_action("anything").unwrap().segment;
        // start walks left by a quarter window per step: 30 -> 0 at the first clamp
        assert_eq!(seg.start, 0.0);
        assert!(seg.end >= seg.start);
    }

    #[test]
    fn window_follows_selection() {
        let frames = SyntheticFrames::new(100.0, 25.0).unwrap();
        let backend = oracle_for(vec![Segment::new("a", 71.3, 80.0)], 100.0);
        let cfg = config(2, 2, 6);
        let loc = Localizer::new(&frames, &backend, cfg).unwrap();
        let ctx = PromptContext::single("a", Boundary::Start, false);
        let res = loc
            .localize_boundary(&ctx, TimeWindow::full(100.0).unwrap(), 0, 0)
            .unwrap();
        for pair in res.trace.windows(2) {
            let prev = &pair[0];
            let next = &pair[1];
            assert_eq!(Some(next.window_center), prev.selected_time);
            assert!((next.window_width - prev.window_width * 0.5).abs() < 1e-12);
            // the next window lies within one badge interval of the pick (n <= 5)
            let interval = prev.window_width / 3.0;
            let sel = prev.selected_time.unwrap();
            assert!(next.window_center - next.window_width / 2.0 >= sel - interval - 1e-9);
            assert!(next.window_center + next.window_width / 2.0 <= sel + interval + 1e-9);
        }
    }

    #[test]
    fn stops_once_below_frame_resolution() {
        let frames = SyntheticFrames::new(10.0, 2.0).unwrap();
        let backend = oracle_for(vec![Segment::new("a", 3.0, 5.0)], 10.0);
        let loc = Localizer::new(&frames, &backend, config(5, 5, 12)).unwrap();
        let ctx = PromptContext::single("a", Boundary::Start, false);
        let res = loc
            .localize_boundary(&ctx, TimeWindow::full(10.0).unwrap(), 0, 0)
            .unwrap();
        // widths 10 (0.42 s spacing) is already finer than 0.5 s frames
        assert_eq!(res.trace.len(), 1);
    }

    #[test]
    fn empty_label_rejected() {
        let frames = SyntheticFrames::new(10.0, 2.0).unwrap();
        let backend = oracle_for(vec![], 10.0);
        let loc = Localizer::new(&frames, &backend, SearchConfig::standard()).unwrap();
        assert!(matches!(
            loc.localize_action("  "),
            Err(LocalizeError::EmptyLabel)
        ));
    }

    #[test]
    fn config_validation() {
        let frames = SyntheticFrames::new(10.0, 2.0).unwrap();
        let backend = oracle_for(vec![], 10.0);
        let mut cfg = SearchConfig::standard();
        cfg.iterations = 13;
        assert!(Localizer::new(&frames, &backend, cfg.clone()).is_err());
        cfg.iterations = 0;
        assert!(Localizer::new(&frames, &backend, cfg.clone()).is_err());
        cfg.iterations = 4;
        cfg.window_shrink = 1.0;
        assert!(Localizer::new(&frames, &backend, cfg).is_err());
    }
}
