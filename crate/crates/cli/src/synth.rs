//! Random gapless task timelines for oracle-backed experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tpivot_core::{Segment, Timeline};

const VOCABULARY: &[&str] = &[
    "take_cup",
    "pour_coffee",
    "pour_milk",
    "stir_coffee",
    "spoon_sugar",
    "take_bowl",
    "pour_cereals",
    "crack_egg",
    "fry_egg",
    "put_egg_to_plate",
    "cut_bun",
    "smear_butter",
    "take_knife",
    "cut_fruit",
    "put_fruit_to_bowl",
    "peel_fruit",
    "squeeze_orange",
    "pour_juice",
    "add_teabag",
    "pour_water",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSet {
    pub count: usize,
    pub min_tasks: usize,
    pub max_tasks: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub fps: f64,
    pub seed: u64,
}

impl Default for SyntheticSet {
    fn default() -> Self {
        Self {
            count: 5,
            min_tasks: 3,
            max_tasks: 6,
            min_duration_s: 30.0,
            max_duration_s: 120.0,
            fps: 10.0,
            seed: 0,
        }
    }
}

impl SyntheticSet {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_tasks < 1
            || self.min_tasks > self.max_tasks
            || self.max_tasks > VOCABULARY.len()
        {
            return Err(format!(
                "task counts must satisfy 1 <= min_tasks <= max_tasks <= {}",
                VOCABULARY.len()
            ));
        }
        if !(self.min_duration_s > 0.0 && self.min_duration_s <= self.max_duration_s) {
            return Err("durations must satisfy 0 < min_duration_s <= max_duration_s".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(format!("fps must be positive, got {}", self.fps));
        }
        Ok(())
    }

    pub fn generate(&self) -> Vec<Timeline> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count)
            .map(|_| {
                let n = rng.random_range(self.min_tasks..=self.max_tasks);
                let d = rng.random_range(self.min_duration_s..=self.max_duration_s);
                gapless_timeline(&mut rng, n, d, self.fps)
            })
            .collect()
    }
}

/// A gapless timeline of `n_tasks` distinct labels whose boundaries fall on
/// the frame grid. Task lengths vary by at most a factor of three.
pub fn gapless_timeline(rng: &mut impl Rng, n_tasks: usize, duration_s: f64, fps: f64) -> Timeline {
    let total_frames = ((duration_s * fps).round() as usize).max(n_tasks);
    let weights: Vec<f64> = (0..n_tasks).map(|_| rng.random_range(0.5..1.5)).collect();
    let sum: f64 = weights.iter().sum();
    let mut labels: Vec<&str> = VOCABULARY.to_vec();
    labels.shuffle(rng);

    let mut edges = vec![0usize];
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate().take(n_tasks - 1) {
        acc += w;
        let floor = edges[i] + 1;
        let ceil = total_frames - (n_tasks - 1 - i);
        edges.push(((acc / sum * total_frames as f64).round() as usize).clamp(floor, ceil));
    }
    edges.push(total_frames);

    let segments = (0..n_tasks)
        .map(|i| Segment::new(labels[i], edges[i] as f64 / fps, edges[i + 1] as f64 / fps))
        .collect();
    Timeline::new(total_frames as f64 / fps, segments)
}
