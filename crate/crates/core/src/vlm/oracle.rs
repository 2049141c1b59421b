//! Simulated model that answers from ground truth, with seeded noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::answer::{render_answer, VlmAnswer};
use super::prompt::{Boundary, PromptContext};
use super::{BackendError, QueryKey, VlmBackend, VlmRequest};
use crate::timeline::{Segment, Timeline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub ground_truth: Timeline,
    /// Probability of answering with a uniformly random badge.
    pub noise_rate: f64,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("label {0:?} does not occur in the ground truth")]
    LabelAbsent(String),
    #[error("noise rate {0} outside [0, 1]")]
    BadNoise(f64),
    #[error("no badges were shown")]
    NoBadges,
}

impl OracleConfig {
    pub fn new(
        ground_truth: Timeline,
        noise_rate: f64,
        rng_seed: u64,
    ) -> Result<Self, OracleError> {
        if !(0.0..=1.0).contains(&noise_rate) {
            return Err(OracleError::BadNoise(noise_rate));
        }
        Ok(Self {
            ground_truth,
            noise_rate,
            rng_seed,
        })
    }

    pub fn perfect(ground_truth: Timeline) -> Self {
        Self {
            ground_truth,
            noise_rate: 0.0,
            rng_seed: 0,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-call seed from the run seed and the call's identity, so answers do
/// not depend on which thread asks first.
pub(crate) fn call_seed(seed: u64, key: &QueryKey) -> u64 {
    let boundary = match key.boundary {
        Boundary::Start => 1,
        Boundary::End => 2,
    };
    [key.task, boundary, key.iteration as u64, key.scope]
        .into_iter()
        .fold(splitmix(seed), |acc, part| splitmix(acc ^ part))
}

/// Badge (1-based) whose timestamp is closest to `target`; ties go to the
/// lower index.
pub fn nearest_badge(index_to_time: &[f64], target: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &t) in index_to_time.iter().enumerate() {
        let d = (t - target).abs();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i + 1, d));
        }
    }
    best.map(|(k, _)| k)
}

fn focused_occurrence<'a>(gt: &'a Timeline, ctx: &PromptContext) -> Option<&'a Segment> {
    let label = ctx.focus_label();
    let nth = ctx.task_sequence[..ctx.focus_index - 1]
        .iter()
        .filter(|l| *l == label)
        .count();
    let matches: Vec<&Segment> = gt.segments.iter().filter(|s| s.label == label).collect();
    matches.get(nth).or(matches.last()).copied()
}

// In no-answer mode an occurrence counts as visible only if it covers at
// least half a badge interval of the sampled span; slivers left over at a
// window edge are treated as absent.
fn visible_occurrence<'a>(
    gt: &'a Timeline,
    label: &str,
    index_to_time: &[f64],
) -> Option<&'a Segment> {
    let lo = index_to_time.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = index_to_time
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let step = if index_to_time.len() > 1 {
        (hi - lo) / (index_to_time.len() - 1) as f64
    } else {
        0.0
    };
    gt.segments.iter().find(|s| {
        let overlap = s.overlap(lo, hi);
        s.label == label && s.duration() > 0.0 && overlap > 0.0 && overlap >= 0.5 * step
    })
}

/// Answers a query from ground truth.
pub fn oracle_answer(
    oracle: &OracleConfig,
    index_to_time: &[f64],
    ctx: &PromptContext,
    key: &QueryKey,
) -> Result<VlmAnswer, OracleError> {
    let n = index_to_time.len();
    if n == 0 {
        return Err(OracleError::NoBadges);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(call_seed(oracle.rng_seed, key));
    if oracle.noise_rate > 0.0 && rng.random::<f64>() < oracle.noise_rate {
        let k = rng.random_range(1..=n);
        return Ok(VlmAnswer {
            selected_index: Some(k),
            raw_text: render_answer(Some(k)),
            analysis: "oracle: random pick".to_string(),
        });
    }

    let segment = if ctx.allow_none {
        match visible_occurrence(&oracle.ground_truth, ctx.focus_label(), index_to_time) {
            Some(s) => s,
            None => {
                return Ok(VlmAnswer {
                    selected_index: None,
                    raw_text: render_answer(None),
                    analysis: "oracle: action not in view".to_string(),
                })
            }
        }
    } else {
        focused_occurrence(&oracle.ground_truth, ctx)
            .ok_or_else(|| OracleError::LabelAbsent(ctx.focus_label().to_string()))?
    };
    let target = match ctx.boundary {
        Boundary::Start => segment.start,
        Boundary::End => segment.end,
    };
    let k = nearest_badge(index_to_time, target).expect("n > 0");
    Ok(VlmAnswer {
        selected_index: Some(k),
        raw_text: render_answer(Some(k)),
        analysis: format!("oracle: nearest to {target}"),
    })
}

/// [`VlmBackend`] wrapper around [`oracle_answer`]. Never looks at pixels.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    config: OracleConfig,
}

impl OracleBackend {
    pub fn new(config: OracleConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }
}

impl VlmBackend for OracleBackend {
    fn wants_images(&self) -> bool {
        false
    }

    fn query(&self, req: &VlmRequest<'_>) -> Result<VlmAnswer, BackendError> {
        Ok(oracle_answer(
            &self.config,
            &req.prompt.index_to_time,
            req.context,
            &req.key,
        )?)
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}
