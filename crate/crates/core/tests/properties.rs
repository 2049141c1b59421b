use proptest::prelude::*;
use tpivot_core::imaging::GridSpec;
use tpivot_core::metrics::{f1, iou_per_class, map_at, Detection, GtInstance};
use tpivot_core::vlm::{Boundary, OracleBackend, OracleConfig, PromptContext};
use tpivot_core::{
    mof, Localizer, SearchConfig, Segment, Style, SyntheticFrames, TimeWindow, Timeline,
    VideoFrames,
};

fn gapless(cuts: &[u32], labels: &[usize], unit: f64) -> Timeline {
    const NAMES: [&str; 5] = ["crack_egg", "stir", "pour_milk", "fry", "serve"];
    let mut edges: Vec<u32> = cuts.to_vec();
    edges.sort_unstable();
    edges.dedup();
    edges.retain(|&c| c > 0 && c < 100);
    let mut bounds = vec![0];
    bounds.extend(edges);
    bounds.push(100);
    let segments = bounds
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            Segment::new(
                NAMES[labels[i % labels.len()] % 5],
                w[0] as f64 * unit,
                w[1] as f64 * unit,
            )
        })
        .collect();
    Timeline::new(100.0 * unit, segments)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn timeline_json_round_trip(cuts in prop::collection::vec(1u32..100, 0..6), labels in prop::collection::vec(0usize..5, 1..7), unit in 0.01f64..3.0) {
        let t = gapless(&cuts, &labels, unit);
        let back: Timeline = serde_json::from_str(&t.to_json()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn self_scores_are_perfect(cuts in prop::collection::vec(1u32..100, 0..6), labels in prop::collection::vec(0usize..5, 1..7)) {
        let t = gapless(&cuts, &labels, 0.5);
        prop_assert_eq!(mof(&t, &t, 10.0).unwrap(), 1.0);
        prop_assert!((iou_per_class(&t, &t).unwrap().mean - 1.0).abs() < 1e-12);
        prop_assert!((f1(&t, &t, 10.0).unwrap().macro_f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mof_ignores_time_scale(gt_cuts in prop::collection::vec(1u32..100, 0..6), pred_cuts in prop::collection::vec(1u32..100, 0..6), labels in prop::collection::vec(0usize..5, 1..7), scale in 1u32..6) {
        let gt = gapless(&gt_cuts, &labels, 1.0);
        let pred = gapless(&pred_cuts, &labels, 1.0);
        let s = scale as f64;
        let gt_s = gapless(&gt_cuts, &labels, s);
        let pred_s = gapless(&pred_cuts, &labels, s);
        let a = mof(&pred, &gt, 1.0).unwrap();
        let b = mof(&pred_s, &gt_s, 1.0 / s).unwrap();
        prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn perfect_detections_score_one(spans in prop::collection::vec((0.0f64..100.0, 0.5f64..10.0, 0usize..3), 1..10)) {
        let labels = ["a", "b", "c"];
        let gts: Vec<GtInstance> = spans.iter().enumerate().map(|(i, &(s, len, l))| GtInstance {
            video_id: format!("v{}", i % 2),
            label: labels[l].into(),
            start: s + i as f64 * 200.0,
            end: s + len + i as f64 * 200.0,
        }).collect();
        let preds: Vec<Detection> = gts.iter().map(|g| Detection {
            video_id: g.video_id.clone(),
            label: g.label.clone(),
            start: g.start,
            end: g.end,
            score: 1.0,
        }).collect();
        let report = map_at(&preds, &gts, &[0.5, 0.9]).unwrap();
        prop_assert_eq!(report.ap_at, vec![1.0, 1.0]);
    }

    #[test]
    fn next_window_stays_near_selection(target in 0.0f64..60.0, grid in prop::sample::select(vec![(2u32, 2u32), (1, 5), (1, 4), (1, 3)]), start in any::<bool>()) {
        let duration = 60.0;
        let (boundary, seg) = if start {
            (Boundary::Start, Segment::new("a", target, duration))
        } else {
            (Boundary::End, Segment::new("a", 0.0, target))
        };
        let frames = SyntheticFrames::new(duration, 30.0).unwrap();
        let backend = OracleBackend::new(OracleConfig::perfect(Timeline::new(duration, vec![seg])));
        let spec = GridSpec::new(grid.0, grid.1, Style::TiledCorner).unwrap();
        let loc = Localizer::new(&frames, &backend, SearchConfig::new(spec, 4)).unwrap();
        let ctx = PromptContext::single("a", boundary, false);
        let search = loc.localize_boundary(&ctx, TimeWindow::full(duration).unwrap(), 0, 0).unwrap();
        for pair in search.trace.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            prop_assert!(next.window_width <= prev.window_width + 1e-9);
            let n = (grid.0 * grid.1) as f64;
            let interval = prev.window_width / (n - 1.0);
            let picked = prev.selected_time.unwrap();
            let (nlo, nhi) = (next.window_center - next.window_width / 2.0, next.window_center + next.window_width / 2.0);
            prop_assert!(
                nlo >= picked - interval - 1e-9 && nhi <= picked + interval + 1e-9,
                "[{}, {}] leaves {} +/- {}", nlo, nhi, picked, interval
            );
        }
    }

    #[test]
    fn scan_segments_stay_in_video(starts in prop::collection::vec((0.0f64..40.0, 0.0f64..8.0), 0..4)) {
        let duration = 40.0;
        let mut segs: Vec<Segment> = starts.iter().map(|&(s, len)| Segment::new("x", s, (s + len).min(duration))).collect();
        segs.sort_by(|a, b| a.start.total_cmp(&b.start));
        let frames = SyntheticFrames::new(duration, 10.0).unwrap();
        let backend = OracleBackend::new(OracleConfig::perfect(Timeline::new(duration, segs)));
        let loc = Localizer::new(&frames, &backend, SearchConfig::standard()).unwrap();
        let result = loc.windowed_scan(&["x".to_string()], 5.0).unwrap();
        for s in &result.segments {
            prop_assert!(s.start >= 0.0 && s.start <= s.end && s.end <= duration + 1e-9);
        }
        prop_assert!(result.windows_scanned <= 8 + result.segments.len());
    }
}

#[test]
fn frame_lookup_is_pure() {
    let frames = SyntheticFrames::new(12.0, 25.0).unwrap();
    let (first, idx) = frames.frame_at(7.31).unwrap();
    for _ in 0..1000 {
        let (again, j) = frames.frame_at(7.31).unwrap();
        assert_eq!(j, idx);
        assert_eq!(again.as_raw(), first.as_raw());
    }
}
