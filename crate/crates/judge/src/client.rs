//! Chat-completion client and the remote pair judge.
//!
//! Talks the OpenAI-style `/chat/completions` wire format: one system plus
//! one user message in, a single completion out. Transient failures (429,
//! 5xx, timeouts) are retried with exponential backoff. A pair is always
//! judged twice, once per presentation order, and the two verdicts collapse
//! through the dual-order rule so position bias cancels.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use peerrank_core::io::{aggregate_dual_order, GameWinner};
use peerrank_core::review::{BattleTask, JudgeFailure, PairJudge};
use peerrank_core::{Answer, ModelId, Outcome, Question};

use crate::prompt::{render_prompt, PromptKind};
use crate::verdict::{parse_verdict, Verdict};
use crate::{GatewayError, Result};

/// One judge endpoint. The API key is never stored in config files; only
/// the name of the environment variable holding it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

impl JudgeEndpointConfig {
    /// Defaults: 60 s timeout, 3 retries, temperature 0 for reproducible
    /// judging.
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        JudgeEndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            temperature: 0.0,
            backoff_ms: default_backoff_ms(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.timeout_secs == 0 {
            return Err(GatewayError::Argument("timeout must be positive".into()));
        }
        if self.base_url.is_empty() {
            return Err(GatewayError::Argument("base_url must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: String,
}

/// Blocking chat-completion client for one endpoint.
pub struct ChatClient {
    config: JudgeEndpointConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl ChatClient {
    pub fn new(config: JudgeEndpointConfig) -> Result<Self> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Argument(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(ChatClient {
            config,
            api_key,
            http,
        })
    }

    pub fn config(&self) -> &JudgeEndpointConfig {
        &self.config
    }

    /// Sends a conversation and returns the completion text. Retries
    /// transient failures up to `max_retries` times with exponential
    /// backoff.
    pub fn complete_messages(&self, messages: &[ChatMessage]) -> Result<String> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = CompletionRequest {
            model: &self.config.model_name,
            messages,
            temperature: self.config.temperature,
        };

        let mut last_failure = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let backoff = self.config.backoff_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(backoff));
                log::debug!("retry {attempt} against {url} after: {last_failure}");
            }
            let mut request = self.http.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let parsed: CompletionResponse = response
                            .json()
                            .map_err(|e| GatewayError::Transport(format!("bad response body: {e}")))?;
                        return parsed
                            .choices
                            .first()
                            .map(|c| c.message.content.clone())
                            .ok_or_else(|| {
                                GatewayError::Transport("response carried no choices".into())
                            });
                    }
                    let retryable = status.is_server_error() || status.as_u16() == 429;
                    let snippet: String = response
                        .text()
                        .unwrap_or_default()
                        .chars()
                        .take(200)
                        .collect();
                    last_failure = format!("status {status}: {snippet}");
                    if !retryable {
                        return Err(GatewayError::Transport(last_failure));
                    }
                }
                Err(e) => {
                    last_failure = e.to_string();
                }
            }
        }
        Err(GatewayError::Transport(format!(
            "exhausted {} retries: {last_failure}",
            self.config.max_retries
        )))
    }

    /// One system + one user message, the judging shape.
    pub fn complete(&self, system: &str, user: &str) -> Result<String> {
        self.complete_messages(&[ChatMessage::system(system), ChatMessage::user(user)])
    }
}

/// Judges one presentation order; an invalid verdict degrades to a tie vote
/// (logged) instead of failing the pair.
fn one_order(
    client: &ChatClient,
    kind: PromptKind,
    question: &Question,
    first: &Answer,
    second: &Answer,
) -> Result<Option<Verdict>> {
    let (system, user) = render_prompt(kind, question, first, second)?;
    let completion = client.complete(&system, &user)?;
    match parse_verdict(&completion) {
        Ok(verdict) => Ok(Some(verdict)),
        Err(e) => {
            log::warn!(
                "question {}: treating unparseable verdict as a tie vote ({e})",
                question.question_id
            );
            Ok(None)
        }
    }
}

/// Judges the pair `(answer_a, answer_b)` in both presentation orders and
/// aggregates: an agreed winner stands, disagreement or tie verdicts give a
/// tie. The outcome is relative to `(answer_a, answer_b)`. Fails with an
/// invalid-verdict error only when *both* orders were unparseable, and with
/// a transport error when retries were exhausted.
pub fn judge_pair(
    client: &ChatClient,
    question: &Question,
    answer_a: &Answer,
    answer_b: &Answer,
    kind: PromptKind,
) -> Result<Outcome> {
    let forward = one_order(client, kind, question, answer_a, answer_b)?;
    let reversed = one_order(client, kind, question, answer_b, answer_a)?;
    if forward.is_none() && reversed.is_none() {
        return Err(GatewayError::InvalidVerdict(format!(
            "no usable verdict in either presentation order for question {}",
            question.question_id
        )));
    }
    // Row coordinates: model_1 = answer_a's model, model_2 = answer_b's.
    let g1 = match forward {
        Some(Verdict::A) => GameWinner::Model1,
        Some(Verdict::B) => GameWinner::Model2,
        Some(Verdict::C) | None => GameWinner::Tie,
    };
    // The reversed order presented answer_b as assistant A.
    let g2 = match reversed {
        Some(Verdict::A) => GameWinner::Model2,
        Some(Verdict::B) => GameWinner::Model1,
        Some(Verdict::C) | None => GameWinner::Tie,
    };
    Ok(aggregate_dual_order(g1, g2))
}

/// A [`PairJudge`] that dispatches each judgment to the reviewer model's
/// endpoint. Prompt kinds are inferred per question unless fixed.
pub struct RemoteJudge {
    clients: BTreeMap<ModelId, ChatClient>,
    fixed_kind: Option<PromptKind>,
}

impl RemoteJudge {
    pub fn new(clients: BTreeMap<ModelId, ChatClient>) -> Self {
        RemoteJudge {
            clients,
            fixed_kind: None,
        }
    }

    pub fn with_fixed_kind(mut self, kind: PromptKind) -> Self {
        self.fixed_kind = Some(kind);
        self
    }

    pub fn has_reviewer(&self, reviewer: &ModelId) -> bool {
        self.clients.contains_key(reviewer)
    }
}

impl PairJudge for RemoteJudge {
    fn judge_pair(&self, task: &BattleTask<'_>) -> std::result::Result<Outcome, JudgeFailure> {
        let client = self.clients.get(task.reviewer).ok_or_else(|| {
            JudgeFailure::Transport(format!("no endpoint configured for reviewer {:?}", task.reviewer))
        })?;
        let kind = self
            .fixed_kind
            .unwrap_or_else(|| PromptKind::infer(task.question));
        judge_pair(client, task.question, task.answer_a, task.answer_b, kind).map_err(|e| match e {
            GatewayError::InvalidVerdict(m) => JudgeFailure::InvalidVerdict(m),
            GatewayError::Transport(m) | GatewayError::Argument(m) => JudgeFailure::Transport(m),
        })
    }
}

/// Thin answer-generation helper: asks one contestant model every question,
/// turn by turn, carrying the conversation so far.
pub fn generate_answers(
    client: &ChatClient,
    questions: &[Question],
    model: &ModelId,
) -> Result<Vec<Answer>> {
    let mut answers = Vec::with_capacity(questions.len());
    for question in questions {
        let mut history: Vec<ChatMessage> = Vec::new();
        let mut turns = Vec::with_capacity(question.turns.len());
        for turn in &question.turns {
            history.push(ChatMessage::user(turn.clone()));
            let reply = client.complete_messages(&history)?;
            history.push(ChatMessage::assistant(reply.clone()));
            turns.push(reply);
        }
        answers.push(Answer {
            question_id: question.question_id,
            model: model.clone(),
            turns,
        });
    }
    Ok(answers)
}
