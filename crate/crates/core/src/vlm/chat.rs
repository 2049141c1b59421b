//! Text-in/text-out model access with parsing, retries and a centre-badge
//! fallback layered on top of any transport.

use std::time::Duration;

use base64::Engine;
use sha2::{Digest, Sha256};

use super::answer::{parse_answer, VlmAnswer};
use super::{BackendError, VlmBackend, VlmRequest};
use crate::imaging::{encode_jpeg, encode_png};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedImage {
    pub mime: &'static str,
    pub bytes: Vec<u8>,
}

impl EncodedImage {
    pub fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.mime,
            base64::engine::general_purpose::STANDARD.encode(&self.bytes)
        )
    }
}

/// One user turn: the prompt text followed by images in badge order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub text: String,
    pub images: Vec<EncodedImage>,
}

impl ChatRequest {
    /// Content hash used to key replay transcripts.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.text.as_bytes());
        for img in &self.images {
            h.update(b"\n");
            h.update(img.mime.as_bytes());
            h.update(b":");
            h.update(&img.bytes);
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("http error: {0}")]
    Http(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response has no message content: {0}")]
    BadResponse(String),
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
}

/// Delivers a request to a model and returns its reply text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Extra attempts after the first.
    pub max_retries: u32,
    /// Answer with the centre badge instead of failing once retries run out.
    pub fallback_to_center: bool,
    /// Sleep before retrying a transport failure; doubles each time.
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            fallback_to_center: true,
            backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageEncoding {
    Jpeg(u8),
    Png,
}

pub struct ChatBackend<T> {
    transport: T,
    policy: RetryPolicy,
    encoding: ImageEncoding,
}

impl<T: ChatTransport> ChatBackend<T> {
    pub fn new(transport: T) -> Self {
        Self {
            transport,
            policy: RetryPolicy::default(),
            encoding: ImageEncoding::Jpeg(90),
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_jpeg_quality(mut self, quality: u8) -> Self {
        self.encoding = ImageEncoding::Jpeg(quality);
        self
    }

    pub fn with_png(mut self) -> Self {
        self.encoding = ImageEncoding::Png;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Encodes the prompt exactly as it is sent (and hashed for replay).
    pub fn encode_request(&self, req: &VlmRequest<'_>) -> Result<ChatRequest, BackendError> {
        let images = req
            .prompt
            .images
            .iter()
            .map(|img| {
                Ok(match self.encoding {
                    ImageEncoding::Jpeg(q) => EncodedImage {
                        mime: "image/jpeg",
                        bytes: encode_jpeg(img, q)?,
                    },
                    ImageEncoding::Png => EncodedImage {
                        mime: "image/png",
                        bytes: encode_png(img)?,
                    },
                })
            })
            .collect::<Result<Vec<_>, BackendError>>()?;
        Ok(ChatRequest {
            text: req.text.to_string(),
            images,
        })
    }
}

impl<T: ChatTransport> VlmBackend for ChatBackend<T> {
    fn query(&self, req: &VlmRequest<'_>) -> Result<VlmAnswer, BackendError> {
        let n = req.badge_count();
        let chat = self.encode_request(req)?;
        let attempts = self.policy.max_retries + 1;
        let mut transcript = Vec::new();
        let mut backoff = self.policy.backoff;
        for attempt in 0..attempts {
            match self.transport.complete(&chat) {
                Ok(text) => match parse_answer(&text, n, req.context.allow_none) {
                    Ok(answer) => return Ok(answer),
                    Err(e) => {
                        log::warn!("unusable reply (attempt {}/{attempts}): {e}", attempt + 1);
                        transcript.push(text);
                    }
                },
                Err(TransportError::ReplayMiss(hash)) => {
                    return Err(BackendError::ReplayMiss(hash))
                }
                Err(e) => {
                    log::warn!("request failed (attempt {}/{attempts}): {e}", attempt + 1);
                    transcript.push(format!("<transport error: {e}>"));
                    if attempt + 1 < attempts && !backoff.is_zero() {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        if self.policy.fallback_to_center && n > 0 {
            let center = n.div_ceil(2);
            log::warn!(
                "falling back to centre badge {center} of {n} after {attempts} failed attempts"
            );
            return Ok(VlmAnswer {
                selected_index: Some(center),
                raw_text: transcript.last().cloned().unwrap_or_default(),
                analysis: "fallback: centre badge".to_string(),
            });
        }
        Err(BackendError::Exhausted {
            attempts,
            transcript,
        })
    }

    fn name(&self) -> &'static str {
        "chat"
    }
}
