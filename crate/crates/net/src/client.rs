//! HTTP client for a model behind an OpenAI-compatible API.

use std::sync::Arc;
use std::time::Duration;

use chainhash_core::PromptFormat;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use tracing::debug;

use crate::wire::{
    ChatMessage, ChatRequest, ChatResponse, CompletionRequest, CompletionResponse, CHAT_PATH,
    COMPLETION_PATH,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    #[default]
    Chat,
    Completion,
}

impl std::str::FromStr for ApiStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chat" => Ok(Self::Chat),
            "completion" => Ok(Self::Completion),
            other => Err(format!("unknown api style {other:?} (expected chat or completion)")),
        }
    }
}

/// Where and how to query a suspect model.
///
/// With `grey_box_format` set, the client renders the prompt template itself
/// and sends the text to the completions route; otherwise the question goes
/// out verbatim as the user message.
#[derive(Clone)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub api_style: ApiStyle,
    pub model: String,
    pub auth_token: Option<String>,
    pub grey_box_format: Option<PromptFormat>,
    pub timeout: Duration,
    pub max_parallel: usize,
    pub max_tokens: u32,
    /// Extra attempts after a connection failure, 429 or 5xx.
    pub retries: u32,
}

impl ModelEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            api_style: ApiStyle::Chat,
            model: "default".into(),
            auth_token: None,
            grey_box_format: None,
            timeout: Duration::from_secs(30),
            max_parallel: 8,
            max_tokens: 16,
            retries: 2,
        }
    }

    pub fn with_api_style(mut self, style: ApiStyle) -> Self {
        self.api_style = style;
        self
    }

    pub fn with_grey_box(mut self, format: PromptFormat) -> Self {
        self.grey_box_format = Some(format);
        self
    }

    pub fn with_max_parallel(mut self, n: usize) -> Self {
        self.max_parallel = n;
        self
    }

    pub fn with_auth_token(mut self, token: impl Into<String>) -> Self {
        self.auth_token = Some(token.into());
        self
    }

    fn uses_completions(&self) -> bool {
        self.grey_box_format.is_some() || self.api_style == ApiStyle::Completion
    }

    /// Prompt text sent to the completions route.
    pub fn completion_prompt(&self, system: Option<&str>, user: &str) -> String {
        match (&self.grey_box_format, system) {
            (Some(f), system) => f.render_prompt(system, user),
            (None, Some(s)) => format!("{s}\n\n{user}\n"),
            (None, None) => format!("{user}\n"),
        }
    }
}

impl std::fmt::Debug for ModelEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelEndpoint")
            .field("base_url", &self.base_url)
            .field("api_style", &self.api_style)
            .field("model", &self.model)
            .field("auth_token", &self.auth_token.as_ref().map(|_| "<redacted>"))
            .field("grey_box_format", &self.grey_box_format.as_ref().map(|f| f.id()))
            .field("timeout", &self.timeout)
            .field("max_parallel", &self.max_parallel)
            .finish()
    }
}

#[derive(Debug, Error, Clone)]
pub enum ClientError {
    #[error("request to {url} failed: {message}")]
    Transport { url: String, message: String },
    #[error("{url} returned HTTP {status}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("malformed response from {url}: {message}")]
    Malformed { url: String, message: String },
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
}

impl ClientError {
    fn retryable(&self) -> bool {
        match self {
            ClientError::Transport { .. } => true,
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    /// The server understood the request but does not offer the feature.
    pub fn is_unsupported(&self) -> bool {
        matches!(self, ClientError::Status { status, .. } if matches!(status, 400 | 404 | 405 | 422 | 501))
    }
}

/// One generated reply.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    /// `(token, logprob)` for the generated tokens, when the server sent them.
    pub token_logprobs: Option<Vec<(String, f64)>>,
}

#[derive(Clone)]
pub struct ModelClient {
    endpoint: Arc<ModelEndpoint>,
    http: reqwest::Client,
    permits: Arc<Semaphore>,
}

impl ModelClient {
    pub fn new(endpoint: ModelEndpoint) -> Result<Self, ClientError> {
        if endpoint.max_parallel == 0 {
            return Err(ClientError::Config("max_parallel must be at least 1".into()));
        }
        let http = reqwest::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Self {
            permits: Arc::new(Semaphore::new(endpoint.max_parallel)),
            endpoint: Arc::new(endpoint),
            http,
        })
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    async fn post<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R, ClientError> {
        let url = format!("{}{}", self.endpoint.base_url, path);
        let mut attempt = 0;
        loop {
            let result = self.post_once(&url, body).await;
            match result {
                Err(e) if e.retryable() && attempt < self.endpoint.retries => {
                    attempt += 1;
                    debug!(%url, attempt, error = %e, "retrying");
                    tokio::time::sleep(Duration::from_millis(50 << attempt.min(6))).await;
                }
                other => return other,
            }
        }
    }

    async fn post_once<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        url: &str,
        body: &B,
    ) -> Result<R, ClientError> {
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        let mut req = self.http.post(url).json(body);
        if let Some(token) = &self.endpoint.auth_token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().await.map_err(|e| ClientError::Transport {
            url: url.to_owned(),
            message: e.to_string(),
        })?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| ClientError::Transport {
            url: url.to_owned(),
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(ClientError::Status {
                url: url.to_owned(),
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| ClientError::Malformed {
            url: url.to_owned(),
            message: e.to_string(),
        })
    }

    /// Sends one question, optionally under a system prompt, and returns the
    /// reply text.
    pub async fn generate(
        &self,
        system: Option<&str>,
        user: &str,
        want_logprobs: bool,
    ) -> Result<Generation, ClientError> {
        let ep = &self.endpoint;
        if ep.uses_completions() {
            let req = CompletionRequest {
                model: ep.model.clone(),
                prompt: ep.completion_prompt(system, user),
                max_tokens: Some(ep.max_tokens),
                temperature: Some(1.0),
                logprobs: want_logprobs.then_some(1),
                echo: None,
            };
            let resp: CompletionResponse = self.post(COMPLETION_PATH, &req).await?;
            let choice = resp.choices.into_iter().next().ok_or_else(|| ClientError::Malformed {
                url: format!("{}{COMPLETION_PATH}", ep.base_url),
                message: "no choices".into(),
            })?;
            let token_logprobs = choice.logprobs.map(|lp| {
                lp.tokens
                    .into_iter()
                    .zip(lp.token_logprobs)
                    .map(|(t, l)| (t, l.unwrap_or(0.0)))
                    .collect()
            });
            Ok(Generation {
                text: choice.text,
                token_logprobs,
            })
        } else {
            let mut messages = Vec::with_capacity(2);
            if let Some(s) = system {
                messages.push(ChatMessage::system(s));
            }
            messages.push(ChatMessage::user(user));
            let req = ChatRequest {
                model: ep.model.clone(),
                messages,
                max_tokens: Some(ep.max_tokens),
                temperature: Some(1.0),
                logprobs: want_logprobs.then_some(true),
            };
            let resp: ChatResponse = self.post(CHAT_PATH, &req).await?;
            let choice = resp.choices.into_iter().next().ok_or_else(|| ClientError::Malformed {
                url: format!("{}{CHAT_PATH}", ep.base_url),
                message: "no choices".into(),
            })?;
            let token_logprobs = choice
                .logprobs
                .and_then(|l| l.content)
                .map(|c| c.into_iter().map(|t| (t.token, t.logprob)).collect());
            Ok(Generation {
                text: choice.message.content,
                token_logprobs,
            })
        }
    }

    /// Probabilities of the target's tokens as a continuation of the
    /// question, via echo scoring on the completions route. `Ok(None)` when
    /// the server does not support scoring or the target does not start on
    /// a token boundary.
    pub async fn score(
        &self,
        system: Option<&str>,
        user: &str,
        target: &str,
    ) -> Result<Option<Vec<f64>>, ClientError> {
        let ep = &self.endpoint;
        let prefix = ep.completion_prompt(system, user);
        let req = CompletionRequest {
            model: ep.model.clone(),
            prompt: format!("{prefix}{target}"),
            max_tokens: Some(0),
            temperature: None,
            logprobs: Some(0),
            echo: Some(true),
        };
        let resp: CompletionResponse = match self.post(COMPLETION_PATH, &req).await {
            Ok(r) => r,
            Err(e) if e.is_unsupported() => return Ok(None),
            Err(e) => return Err(e),
        };
        let Some(lp) = resp.choices.into_iter().next().and_then(|c| c.logprobs) else {
            return Ok(None);
        };
        Ok(target_token_probs(&lp.tokens, &lp.token_logprobs, &lp.text_offset, prefix.len()))
    }
}

/// Probabilities of the tokens at or after `boundary`; `None` when a token
/// straddles the boundary or a needed log-probability is missing.
pub(crate) fn target_token_probs(
    tokens: &[String],
    logprobs: &[Option<f64>],
    offsets: &[usize],
    boundary: usize,
) -> Option<Vec<f64>> {
    if tokens.len() != logprobs.len() || tokens.len() != offsets.len() {
        return None;
    }
    let mut out = Vec::new();
    for ((tok, lp), &off) in tokens.iter().zip(logprobs).zip(offsets) {
        if off >= boundary {
            out.push(lp.map(f64::exp)?);
        } else if off + tok.len() > boundary {
            return None;
        }
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_prompt_layouts() {
        let ep = ModelEndpoint::new("http://x/");
        assert_eq!(ep.base_url, "http://x");
        assert_eq!(ep.completion_prompt(None, "q"), "q\n");
        assert_eq!(ep.completion_prompt(Some("sys"), "q"), "sys\n\nq\n");
        let grey = ep.with_grey_box(PromptFormat::phi3());
        assert_eq!(
            grey.completion_prompt(None, "q"),
            "<|system|>\n<|end|>\n<|user|>\nq<|end|>\n<|assistant|>\n"
        );
        assert!(grey.uses_completions());
    }

    #[test]
    fn token_selection_at_boundary() {
        let toks: Vec<String> = ["q", "\n", "ans", " ", "two"].iter().map(|s| s.to_string()).collect();
        let lps = vec![None, Some(-1.0), Some(0.5f64.ln()), Some(0.0), Some(0.8f64.ln())];
        let offs = vec![0, 1, 2, 5, 6];
        let p = target_token_probs(&toks, &lps, &offs, 2).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.iter().product::<f64>() - 0.4).abs() < 1e-12);
        // boundary inside "ans"
        assert!(target_token_probs(&toks, &lps, &offs, 3).is_none());
        assert!(target_token_probs(&toks, &lps, &offs, 100).is_none());
    }

    #[test]
    fn debug_redacts_token() {
        let ep = ModelEndpoint::new("http://x").with_auth_token("sekrit");
        assert!(!format!("{ep:?}").contains("sekrit"));
    }

    #[test]
    fn zero_parallelism_is_rejected() {
        assert!(ModelClient::new(ModelEndpoint::new("http://x").with_max_parallel(0)).is_err());
    }
}
