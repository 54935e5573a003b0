//! Judge gateway: renders pairwise evaluation prompts, calls a
//! chat-completion endpoint per reviewer model, parses the `[[A]]`/`[[B]]`/
//! `[[C]]` verdicts, and debiases by judging each pair in both presentation
//! orders.

pub mod client;
pub mod prompt;
pub mod verdict;

pub use client::{generate_answers, judge_pair, ChatClient, JudgeEndpointConfig, RemoteJudge};
pub use prompt::{render_prompt, PromptKind};
pub use verdict::{parse_verdict, Verdict};

use thiserror::Error;

/// Errors produced by the gateway.
#[derive(Debug, Error)]
pub enum GatewayError {
    /// Endpoint unreachable, kept failing after retries, or replied with a
    /// malformed payload.
    #[error("transport error: {0}")]
    Transport(String),

    /// The completion carried no usable verdict marker.
    #[error("invalid verdict: {0}")]
    InvalidVerdict(String),

    /// Inputs do not fit the requested prompt template.
    #[error("argument error: {0}")]
    Argument(String),
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;
