use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which end of an action occurrence is being searched for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Start,
    End,
}

impl Boundary {
    pub fn as_str(&self) -> &'static str {
        match self {
            Boundary::Start => "start",
            Boundary::End => "end",
        }
    }

    fn verb(&self) -> &'static str {
        match self {
            Boundary::Start => "started",
            Boundary::End => "ended",
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Boundary {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "start" => Ok(Boundary::Start),
            "end" => Ok(Boundary::End),
            other => Err(format!("unknown boundary {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContextError {
    #[error("task sequence is empty")]
    EmptySequence,
    #[error("focus index {focus} outside 1..={len}")]
    FocusOutOfRange { focus: usize, len: usize },
}

/// What a single query asks about: the ordered task list, which task
/// (1-based) is in focus, and which boundary of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub task_sequence: Vec<String>,
    pub focus_index: usize,
    pub boundary: Boundary,
    /// Lets the model answer with no frame when the action is not visible.
    pub allow_none: bool,
}

impl PromptContext {
    pub fn new(
        task_sequence: Vec<String>,
        focus_index: usize,
        boundary: Boundary,
        allow_none: bool,
    ) -> Result<Self, ContextError> {
        if task_sequence.is_empty() {
            return Err(ContextError::EmptySequence);
        }
        if focus_index == 0 || focus_index > task_sequence.len() {
            return Err(ContextError::FocusOutOfRange {
                focus: focus_index,
                len: task_sequence.len(),
            });
        }
        Ok(Self {
            task_sequence,
            focus_index,
            boundary,
            allow_none,
        })
    }

    /// Single-action context used for open-vocabulary queries.
    pub fn single(label: impl Into<String>, boundary: Boundary, allow_none: bool) -> Self {
        Self {
            task_sequence: vec![label.into()],
            focus_index: 1,
            boundary,
            allow_none,
        }
    }

    pub fn focus_label(&self) -> &str {
        &self.task_sequence[self.focus_index - 1]
    }

    pub fn with_boundary(&self, boundary: Boundary) -> Self {
        Self {
            boundary,
            ..self.clone()
        }
    }
}

/// Renders the action-order-aware prompt.
pub fn build_prompt(ctx: &PromptContext) -> String {
    let sequence = ctx
        .task_sequence
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}. {}", i + 1, l))
        .collect::<Vec<_>>()
        .join(", ");
    let focus = format!("{}. {}", ctx.focus_index, ctx.focus_label());
    let mut text = format!(
        "I will show an image sequence of human operation. \
It contains the following tasks: {sequence}. \
I have annotated the images with numbered circles. \
Choose the number that is closest to the moment when the ({focus}) has {verb}. \
You are a five-time world champion in this game. \
Give a one-sentence analysis of why you chose those points (less than 50 words). \
Provide your answer at the end in a JSON file in this format: {{\"points\": []}}.",
        verb = ctx.boundary.verb(),
    );
    if ctx.allow_none {
        text.push_str(&format!(
            " If the ({focus}) does not appear in any of the images, answer with {{\"points\": []}}."
        ));
    }
    text
}
