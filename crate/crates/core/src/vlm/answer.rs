//! Extraction of the selected badge from free-form model replies.

use serde_json::Value;

/// A parsed reply: the chosen 1-based badge (or none), plus the raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct VlmAnswer {
    pub selected_index: Option<usize>,
    pub raw_text: String,
    pub analysis: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnswerError {
    #[error("no JSON found")]
    NoJson,
    #[error("points entry {0} is not an integer")]
    NotInteger(String),
    #[error("\"points\" is not a list: {0}")]
    NotAList(String),
    #[error("selected index {index} outside 1..={badges}")]
    OutOfRange { index: i64, badges: usize },
    #[error("empty points list but no-answer replies are not allowed")]
    EmptyPoints,
    #[error("no badges were shown")]
    NoBadges,
}

/// Finds the last JSON object in `text` that carries a `"points"` key.
fn last_points_object(text: &str) -> Option<(usize, Value)> {
    let starts: Vec<usize> = text.match_indices('{').map(|(i, _)| i).collect();
    for &start in starts.iter().rev() {
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        if let Some(Ok(value)) = stream.next() {
            if let Some(points) = find_points(&value) {
                return Some((start, points.clone()));
            }
        }
    }
    None
}

fn find_points(value: &Value) -> Option<&Value> {
    match value {
        Value::Object(map) => map.get("points"),
        _ => None,
    }
}

fn as_index(v: &Value) -> Result<i64, AnswerError> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(i)
            } else if let Some(f) = n.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 1e15) {
                Ok(f as i64)
            } else {
                Err(AnswerError::NotInteger(n.to_string()))
            }
        }
        Value::String(s) => s
            .trim()
            .parse::<i64>()
            .map_err(|_| AnswerError::NotInteger(format!("{s:?}"))),
        // PIVOT-style [x, y] pairs are not meaningful here.
        other => Err(AnswerError::NotInteger(other.to_string())),
    }
}

fn analysis_before(text: &str, start: usize) -> String {
    let head = text[..start].trim_end();
    let head = head.strip_suffix("json").unwrap_or(head).trim_end();
    let head = head.trim_end_matches('`').trim();
    head.to_string()
}

/// Parses the badge selection from a reply shown `n_badges` numbered frames.
///
/// Surrounding prose and code fences are ignored; when several `points`
/// objects appear the last one wins, and only its first entry is used.
pub fn parse_answer(
    raw_text: &str,
    n_badges: usize,
    allow_none: bool,
) -> Result<VlmAnswer, AnswerError> {
    if n_badges == 0 {
        return Err(AnswerError::NoBadges);
    }
    let (start, points) = last_points_object(raw_text).ok_or(AnswerError::NoJson)?;
    let list = match &points {
        Value::Array(items) => items.clone(),
        // A bare scalar is treated as a one-element list.
        Value::Number(_) | Value::String(_) => vec![points.clone()],
        other => return Err(AnswerError::NotAList(other.to_string())),
    };
    let selected_index = match list.first() {
        None if allow_none => None,
        None => return Err(AnswerError::EmptyPoints),
        Some(first) => {
            let index = as_index(first)?;
            if index < 1 || index as u64 > n_badges as u64 {
                return Err(AnswerError::OutOfRange {
                    index,
                    badges: n_badges,
                });
            }
            if list.len() > 1 {
                log::debug!(
                    "reply listed {} points; using the first ({index})",
                    list.len()
                );
            }
            Some(index as usize)
        }
    };
    Ok(VlmAnswer {
        selected_index,
        raw_text: raw_text.to_string(),
        analysis: analysis_before(raw_text, start),
    })
}

/// Canonical reply for a selection, as a compliant model would write it.
pub fn render_answer(selected: Option<usize>) -> String {
    match selected {
        Some(k) => format!("{{\"points\": [{k}]}}"),
        None => "{\"points\": []}".to_string(),
    }
}
