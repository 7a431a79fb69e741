//! OpenAI-style `/chat/completions` gateway.
//!
//! Requests carry the model name, user content (text plus image parts, where
//! image payloads are forwarded exactly as stored on the problem), sampling
//! parameters, and optionally a flag asking for token log-probabilities with
//! the configured number of top alternatives per position. Auth is a bearer
//! token read from the environment variable named in the config.

use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{
    BackendConfig, BackendError, ChatBackend, ChatRequest, ChatResponse, ContentPart, TokenLogprob,
    TopToken,
};

pub struct HttpBackend {
    cfg: BackendConfig,
    token: Option<String>,
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let token = match &cfg.auth_env {
            Some(env) => Some(
                std::env::var(env).map_err(|_| BackendError::AuthMissing { env: env.clone() })?,
            ),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { cfg, token, client })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), path)
    }

    fn build_body(&self, req: &ChatRequest) -> serde_json::Value {
        let has_images = req
            .parts
            .iter()
            .any(|p| matches!(p, ContentPart::ImageUrl { .. }));
        let content = if has_images {
            let parts: Vec<serde_json::Value> = req
                .parts
                .iter()
                .map(|p| match p {
                    ContentPart::Text { text } => json!({"type": "text", "text": text}),
                    ContentPart::ImageUrl { url } => {
                        json!({"type": "image_url", "image_url": {"url": url}})
                    }
                })
                .collect();
            json!(parts)
        } else {
            let text = req
                .parts
                .iter()
                .filter_map(|p| match p {
                    ContentPart::Text { text } => Some(text.as_str()),
                    _ => None,
                })
                .collect::<Vec<_>>()
                .join("\n");
            json!(text)
        };
        let mut body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": req.params.temperature,
            "top_p": req.params.top_p,
            "max_tokens": req.params.max_tokens,
        });
        if let Some(seed) = req.params.seed {
            body["seed"] = json!(seed);
        }
        // the operation must want probabilities and the backend must be
        // configured to ask for them
        if req.want_logprobs && self.cfg.request_logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(self.cfg.top_logprobs);
        }
        body
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    content: Vec<WireToken>,
}

#[derive(Deserialize)]
struct WireToken {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<WireTopToken>,
}

#[derive(Deserialize)]
struct WireTopToken {
    token: String,
    logprob: f64,
}

#[async_trait]
impl ChatBackend for HttpBackend {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = self.build_body(req);
        let mut call = self
            .client
            .post(self.endpoint("chat/completions"))
            .json(&body);
        if let Some(token) = &self.token {
            call = call.bearer_auth(token);
        }
        let resp = call
            .send()
            .await
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(BackendError::Transient(format!("http {status}")));
        }
        if !status.is_success() {
            let text = resp.text().await.unwrap_or_default();
            return Err(BackendError::Http {
                status: status.as_u16(),
                body: text.chars().take(300).collect(),
            });
        }
        let wire: WireResponse = resp
            .json()
            .await
            .map_err(|e| BackendError::Transient(format!("body decode: {e}")))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Transient("response carried no choices".into()))?;
        let logprobs = choice.logprobs.map(|lp| {
            lp.content
                .into_iter()
                .map(|t| TokenLogprob {
                    token: t.token,
                    logprob: t.logprob,
                    top: t
                        .top_logprobs
                        .into_iter()
                        .map(|x| TopToken {
                            token: x.token,
                            logprob: x.logprob,
                        })
                        .collect(),
                })
                .collect()
        });
        Ok(ChatResponse {
            text: choice.message.content.unwrap_or_default(),
            logprobs,
        })
    }

    async fn health(&self) -> Result<(), BackendError> {
        let mut call = self.client.get(self.endpoint("models"));
        if let Some(token) = &self.token {
            call = call.bearer_auth(token);
        }
        let resp = call
            .send()
            .await
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(BackendError::Http {
                status: resp.status().as_u16(),
                body: "health probe failed".into(),
            })
        }
    }
}
