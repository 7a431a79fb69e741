//! Model-backend abstraction: a uniform chat-completions interface over the
//! policy, reward, completer, and judge models.
//!
//! Two implementations ship with the crate: [`HttpBackend`] speaks the
//! OpenAI-style `/chat/completions` wire protocol (with optional token
//! log-probabilities), and [`ScriptedBackend`] replays canned replies from a
//! JSONL script for deterministic offline runs and tests.
//!
//! [`ModelClient`] wraps a backend with a bounded in-flight request limit and
//! a transport retry budget. Batch calls return results in request order
//! regardless of completion order, and record assignment for scripted
//! backends happens at dispatch time, so runs with fixed seeds are
//! reproducible byte for byte.

mod critique;
mod http;
mod ops;
mod scripted;

pub use critique::{parse_prm_output, CritiqueLabels, PrmOutputParser};
pub use http::HttpBackend;
pub use ops::{
    continue_solution, critique_solution, generate_solutions, judge_annotate, rollout_completions,
    CritiqueOptions,
};
pub use scripted::{ScriptRecord, ScriptedBackend};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::domain::Step;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unreachable after {attempts} attempts: {last}")]
    Unreachable { attempts: u32, last: String },
    #[error("auth token environment variable `{env}` is not set")]
    AuthMissing { env: String },
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("http error {status}: {body}")]
    Http { status: u16, body: String },
    #[error("critique parse error at `{line}`")]
    CritiqueParse { line: String, raw: String },
    #[error("missing verdict in critique line `{line}`")]
    MissingVerdict { line: String },
    #[error("no script record matches the request (prompt starts `{prompt_excerpt}`)")]
    ScriptExhausted { prompt_excerpt: String },
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BackendError {
    /// Transport-level failures worth retrying; parse and auth errors are not.
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

/// Decoding parameters forwarded to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.9,
            max_tokens: 2048,
            seed: None,
        }
    }
}

impl SamplingParams {
    /// Greedy decoding, used for critique requests.
    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 2048,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::Config(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::Config(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// A verdict on one aspect (image alignment or reasoning logic) of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgment {
    Correct,
    Incorrect,
}

impl Judgment {
    pub fn word(self) -> &'static str {
        match self {
            Judgment::Correct => "Correct",
            Judgment::Incorrect => "Incorrect",
        }
    }
}

/// Critique text plus judgment for one aspect of a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectVerdict {
    pub critique: String,
    pub judgment: Judgment,
}

/// The full four-aspect critique of one reasoning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCritique {
    pub step_index: usize,
    pub step_intent: String,
    pub image_alignment: AspectVerdict,
    pub reasoning_logic: AspectVerdict,
    pub final_judgment: Judgment,
    /// Probability of the emitted/alternative judgment token at this step's
    /// final-judgment position, when the backend returned log-probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_correct_token: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_incorrect_token: Option<f64>,
    /// Set when the alternative judgment token was absent from the returned
    /// top candidates and its probability was pinned to zero.
    #[serde(default)]
    pub prob_incomplete: bool,
}

/// A step-level critique of a whole solution. Covers steps `1..=t` where `t`
/// is the first erroneous step or the last step; a refined (corrected) first
/// erroneous step accompanies `first_error` when the reviewer produced one.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepwiseCritique {
    pub steps: Vec<StepCritique>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_error: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined_step: Option<Step>,
    /// Number of re-asks it took to obtain a parseable critique.
    #[serde(default)]
    pub reasks: u32,
}

impl StepwiseCritique {
    pub fn is_all_correct(&self) -> bool {
        self.first_error.is_none() && !self.steps.is_empty()
    }
}

/// One Monte Carlo continuation from a step prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub continuation_steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    /// Set when the backend call failed; a failed rollout is answerless.
    #[serde(default)]
    pub failed: bool,
}

/// Connection settings for one HTTP model endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub request_logprobs: bool,
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: u8,
}

fn default_timeout_secs() -> u64 {
    120
}
fn default_retry_budget() -> u32 {
    2
}
fn default_max_in_flight() -> usize {
    4
}
fn default_top_logprobs() -> u8 {
    5
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_in_flight < 1 {
            return Err(BackendError::Config(
                "max_in_flight must be at least 1".into(),
            ));
        }
        if self.base_url.trim().is_empty() {
            return Err(BackendError::Config("base_url is empty".into()));
        }
        Ok(())
    }
}

/// One content part of a chat message: text or an opaque image payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { url: String },
}

/// A chat request: user content, sampling parameters, and whether token
/// log-probabilities are wanted.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub parts: Vec<ContentPart>,
    pub params: SamplingParams,
    pub want_logprobs: bool,
    /// Correlation tag assigned by [`ModelClient`]; scripted backends use it
    /// to pin record assignment to dispatch order.
    pub tag: u64,
}

impl ChatRequest {
    pub fn new(prompt: impl Into<String>, params: SamplingParams) -> Self {
        Self {
            parts: vec![ContentPart::Text {
                text: prompt.into(),
            }],
            params,
            want_logprobs: false,
            tag: 0,
        }
    }

    pub fn with_images(mut self, images: &[String]) -> Self {
        for url in images {
            self.parts.push(ContentPart::ImageUrl { url: url.clone() });
        }
        self
    }

    pub fn with_logprobs(mut self, want: bool) -> Self {
        self.want_logprobs = want;
        self
    }

    /// Concatenated text content, used by scripted backends for matching.
    /// The sampling seed, when set, is appended as a `seed=<n>` line so that
    /// scripts can distinguish otherwise identical prompts.
    pub fn match_haystack(&self) -> String {
        let mut s = String::new();
        for p in &self.parts {
            if let ContentPart::Text { text } = p {
                if !s.is_empty() {
                    s.push('\n');
                }
                s.push_str(text);
            }
        }
        if let Some(seed) = self.params.seed {
            s.push_str(&format!("\nseed={seed}"));
        }
        s
    }
}

/// One generated token with its log-probability and the top alternatives at
/// that position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    #[serde(default)]
    pub top: Vec<TopToken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopToken {
    pub token: String,
    pub logprob: f64,
}

/// A completed chat call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChatResponse {
    pub text: String,
    pub logprobs: Option<Vec<TokenLogprob>>,
}

/// Transport abstraction over a chat-completions model service.
#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError>;

    /// Deterministic routing hook, called once per logical call at dispatch
    /// time (before any request races begin). Scripted backends bind their
    /// next matching record to `req.tag` here; live backends ignore it.
    fn claim(&self, _req: &ChatRequest) {}

    /// Cheap readiness probe used by dry runs.
    async fn health(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

/// A backend plus its concurrency limit and retry budget.
///
/// All calls acquire a permit from a shared semaphore, so the configured
/// in-flight limit is never exceeded; a call holds its permit across retries.
/// [`ModelClient::complete_many`] fans out concurrently and returns results
/// in request order.
pub struct ModelClient {
    backend: Arc<dyn ChatBackend>,
    limiter: Arc<Semaphore>,
    retry_budget: u32,
    next_tag: AtomicU64,
    retries_recorded: AtomicU64,
}

impl ModelClient {
    pub fn new(backend: Arc<dyn ChatBackend>, max_in_flight: usize, retry_budget: u32) -> Self {
        Self {
            backend,
            limiter: Arc::new(Semaphore::new(max_in_flight.max(1))),
            retry_budget,
            next_tag: AtomicU64::new(1),
            retries_recorded: AtomicU64::new(0),
        }
    }

    /// Total transport retries performed over the client's lifetime.
    pub fn retries_recorded(&self) -> u64 {
        self.retries_recorded.load(Ordering::Relaxed)
    }

    pub async fn health(&self) -> Result<(), BackendError> {
        self.backend.health().await
    }

    /// Issue a single call: acquire a permit, claim a route, retry transient
    /// failures up to the budget.
    pub async fn complete(&self, mut req: ChatRequest) -> Result<ChatResponse, BackendError> {
        let permit = self
            .limiter
            .acquire()
            .await
            .expect("semaphore never closed");
        req.tag = self.next_tag.fetch_add(1, Ordering::Relaxed);
        self.backend.claim(&req);
        let result = self.call_with_retries(&req).await;
        drop(permit);
        result
    }

    /// Issue `reqs` concurrently under the in-flight limit; results come back
    /// in request order. Record routing for scripted backends is pinned in
    /// dispatch order, so batches over identical prompts consume script
    /// records in script order.
    pub async fn complete_many(
        self: &Arc<Self>,
        reqs: Vec<ChatRequest>,
    ) -> Vec<Result<ChatResponse, BackendError>> {
        let mut handles = Vec::with_capacity(reqs.len());
        for mut req in reqs {
            let permit = self
                .limiter
                .clone()
                .acquire_owned()
                .await
                .expect("semaphore never closed");
            req.tag = self.next_tag.fetch_add(1, Ordering::Relaxed);
            self.backend.claim(&req);
            let client = Arc::clone(self);
            handles.push(tokio::spawn(async move {
                let result = client.call_with_retries(&req).await;
                drop(permit);
                result
            }));
        }
        let mut out = Vec::with_capacity(handles.len());
        for h in handles {
            out.push(h.await.expect("request task never panics"));
        }
        out
    }

    async fn call_with_retries(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let mut attempt = 0u32;
        loop {
            match self.backend.chat(req).await {
                Ok(resp) => return Ok(resp),
                Err(e) if e.is_transient() && attempt < self.retry_budget => {
                    attempt += 1;
                    self.retries_recorded.fetch_add(1, Ordering::Relaxed);
                }
                Err(e) if e.is_transient() => {
                    return Err(BackendError::Unreachable {
                        attempts: attempt + 1,
                        last: e.to_string(),
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }
}
