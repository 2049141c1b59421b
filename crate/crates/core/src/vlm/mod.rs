//! Prompt construction, reply parsing and the pluggable model backends.
//!
//! Three backends ship: [`OracleBackend`] answers from ground truth,
//! [`ChatBackend`] over [`OpenAiTransport`] talks to a chat-completions
//! endpoint, and [`ChatBackend`] over [`ReplayTransport`] serves recorded
//! replies by request hash.

mod answer;
mod chat;
mod limiter;
mod openai;
mod oracle;
mod prompt;
mod replay;

use serde::{Deserialize, Serialize};

use crate::imaging::{ImagingError, PromptImage};

pub use answer::{parse_answer, render_answer, AnswerError, VlmAnswer};
pub use chat::{
    ChatBackend, ChatRequest, ChatTransport, EncodedImage, RetryPolicy, TransportError,
};
pub use limiter::{Permit, RateLimiter};
pub use openai::{
    build_chat_body, extract_reply_text, HttpConfig, OpenAiTransport, DEFAULT_ENDPOINT,
    ENDPOINT_ENV,
};
pub use oracle::{nearest_badge, oracle_answer, OracleBackend, OracleConfig, OracleError};
pub use prompt::{build_prompt, Boundary, ContextError, PromptContext};
pub use replay::{RecordingTransport, ReplayEntry, ReplayTransport};

/// Identity of one query inside a run. Seeded backends derive their
/// randomness from it, never from call order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryKey {
    /// Task position (0-based) within the run.
    pub task: u64,
    pub boundary: Boundary,
    pub iteration: u32,
    /// Extra discriminator, e.g. the scan window or sweep repetition.
    pub scope: u64,
}

pub struct VlmRequest<'a> {
    pub text: &'a str,
    /// `images` is empty when the backend reported it does not need pixels.
    pub prompt: &'a PromptImage,
    pub context: &'a PromptContext,
    pub key: QueryKey,
}

impl VlmRequest<'_> {
    pub fn badge_count(&self) -> usize {
        self.prompt.badge_count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("model gave no usable answer after {attempts} attempts; transcript: {transcript:?}")]
    Exhausted {
        attempts: u32,
        transcript: Vec<String>,
    },
    #[error("replay transcript has no response for request {0}")]
    ReplayMiss(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("cannot encode prompt image")]
    Encode(#[from] ImagingError),
    #[error("backend misconfigured: {0}")]
    Config(String),
    #[error("returned badge {index} outside 1..={badges}")]
    BadIndex { index: usize, badges: usize },
}

/// A model that picks one numbered frame from a prompt.
///
/// Implementations must tolerate concurrent calls.
pub trait VlmBackend: Send + Sync {
    /// Whether requests must carry composited images. When false the
    /// localizer skips frame decoding entirely.
    fn wants_images(&self) -> bool {
        true
    }

    fn query(&self, req: &VlmRequest<'_>) -> Result<VlmAnswer, BackendError>;

    fn name(&self) -> &'static str;
}

impl<B: VlmBackend + ?Sized> VlmBackend for std::sync::Arc<B> {
    fn wants_images(&self) -> bool {
        (**self).wants_images()
    }

    fn query(&self, req: &VlmRequest<'_>) -> Result<VlmAnswer, BackendError> {
        (**self).query(req)
    }

    fn name(&self) -> &'static str {
        (**self).name()
    }
}

/// Sends one prompt and checks the returned index is one of the badges shown.
pub fn query(
    backend: &dyn VlmBackend,
    prompt: &PromptImage,
    text: &str,
    context: &PromptContext,
    key: QueryKey,
) -> Result<VlmAnswer, BackendError> {
    let req = VlmRequest {
        text,
        prompt,
        context,
        key,
    };
    let answer = backend.query(&req)?;
    if let Some(index) = answer.selected_index {
        if index == 0 || index > prompt.badge_count() {
            return Err(BackendError::BadIndex {
                index,
                badges: prompt.badge_count(),
            });
        }
    }
    Ok(answer)
}
