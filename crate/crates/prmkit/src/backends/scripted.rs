//! Deterministic scripted backend for offline runs and tests.
//!
//! A script is JSONL, one record per expected call:
//!
//! ```json
//! {"match": "substring of prompt", "reply": "text", "logprobs": [...], "fail_times": 1}
//! ```
//!
//! Matching runs against the request's text content; when the request carries
//! a sampling seed, a trailing `seed=<n>` line joins the haystack so scripts
//! can tell otherwise identical prompts apart. A record with `fail_times = f`
//! delivers `f` transient failures to its call before the reply, which
//! exercises client retry handling.
//!
//! Each record serves exactly one logical call. Assignment happens in
//! [`ChatBackend::claim`], which [`super::ModelClient`] invokes sequentially
//! at dispatch time, so batches over identical prompts consume records in
//! script order no matter how the actual requests interleave.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, TokenLogprob};

/// One scripted exchange.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRecord {
    /// Substring of the request haystack this record responds to.
    #[serde(rename = "match")]
    pub match_key: String,
    pub reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<TokenLogprob>>,
    /// Transient failures to inject before the reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_times: Option<u32>,
}

impl ScriptRecord {
    pub fn new(match_key: impl Into<String>, reply: impl Into<String>) -> Self {
        Self {
            match_key: match_key.into(),
            reply: reply.into(),
            logprobs: None,
            fail_times: None,
        }
    }

    pub fn with_logprobs(mut self, logprobs: Vec<TokenLogprob>) -> Self {
        self.logprobs = Some(logprobs);
        self
    }

    pub fn failing(mut self, times: u32) -> Self {
        self.fail_times = Some(times);
        self
    }
}

struct RecordState {
    record: ScriptRecord,
    claimed_by: Option<u64>,
    fails_left: u32,
    done: bool,
}

/// Replays a script deterministically. Also tracks the peak number of
/// concurrently running calls so tests can assert in-flight limits.
pub struct ScriptedBackend {
    records: Mutex<Vec<RecordState>>,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    call_delay: Option<Duration>,
}

impl ScriptedBackend {
    pub fn from_records(records: Vec<ScriptRecord>) -> Self {
        let records = records
            .into_iter()
            .map(|record| RecordState {
                fails_left: record.fail_times.unwrap_or(0),
                record,
                claimed_by: None,
                done: false,
            })
            .collect();
        Self {
            records: Mutex::new(records),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            call_delay: None,
        }
    }

    /// Load a JSONL script file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)?;
        let mut records = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str::<ScriptRecord>(line)?);
        }
        Ok(Self::from_records(records))
    }

    /// Write records as a JSONL script file.
    pub fn write_script(
        path: impl AsRef<Path>,
        records: &[ScriptRecord],
    ) -> Result<(), BackendError> {
        let mut out = String::new();
        for r in records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Hold each call open for `delay`, making concurrency observable.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.call_delay = Some(delay);
        self
    }

    /// Highest number of calls that were ever in flight simultaneously.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    /// Records not yet fully consumed, for end-of-test assertions.
    pub fn remaining(&self) -> usize {
        self.records
            .lock()
            .expect("script lock")
            .iter()
            .filter(|r| !r.done)
            .count()
    }

    fn bind(&self, req: &ChatRequest) {
        let haystack = req.match_haystack();
        let mut records = self.records.lock().expect("script lock");
        if records
            .iter()
            .any(|r| r.claimed_by == Some(req.tag) && !r.done)
        {
            return;
        }
        if let Some(r) = records
            .iter_mut()
            .find(|r| !r.done && r.claimed_by.is_none() && haystack.contains(&r.record.match_key))
        {
            r.claimed_by = Some(req.tag);
        }
    }
}

#[async_trait]
impl ChatBackend for ScriptedBackend {
    fn claim(&self, req: &ChatRequest) {
        self.bind(req);
    }

    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let current = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(current, Ordering::SeqCst);
        if let Some(d) = self.call_delay {
            tokio::time::sleep(d).await;
        }

        // Claim lazily too, so direct `chat` calls outside a client work.
        self.bind(req);

        let result = {
            let mut records = self.records.lock().expect("script lock");
            match records
                .iter_mut()
                .find(|r| r.claimed_by == Some(req.tag) && !r.done)
            {
                Some(r) if r.fails_left > 0 => {
                    r.fails_left -= 1;
                    Err(BackendError::Transient("scripted failure".into()))
                }
                Some(r) => {
                    r.done = true;
                    Ok(ChatResponse {
                        text: r.record.reply.clone(),
                        logprobs: r.record.logprobs.clone(),
                    })
                }
                None => {
                    let haystack = req.match_haystack();
                    Err(BackendError::ScriptExhausted {
                        prompt_excerpt: haystack.chars().take(80).collect(),
                    })
                }
            }
        };

        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}
