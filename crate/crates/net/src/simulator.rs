//! A stand-in model server speaking the same HTTP surface as the verifier's
//! targets. Each configured question yields its target with a fixed,
//! seeded probability; everything else gets a canned reply.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use chainhash_core::chain::VerifiedChain;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tracing::{debug, info};

use crate::wire::{
    split_tokens, ChatChoice, ChatLogprobs, ChatMessage, ChatRequest, ChatResponse,
    CompletionChoice, CompletionLogprobs, CompletionRequest, CompletionResponse, ErrorBody,
    ErrorDetail, TokenLogprob, Usage, CHAT_PATH, COMPLETION_PATH,
};

pub const PROFILE_VERSION: u32 = 1;
/// Log-probability reported for tokens that are not part of a target.
pub const FILLER_LOGPROB: f64 = -2.0;
const MIN_LOGPROB: f64 = -100.0;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("invalid simulator profile: {0}")]
    Profile(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("profile is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaEntry {
    pub question: String,
    pub target: String,
    pub success_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// Every reply starts with `text`.
    Prefix { text: String },
    /// Replies open with `preamble`. When `fires_through` is set, replies
    /// that carry a fingerprint target are left alone.
    StyleWrap { preamble: String, fires_through: bool },
    /// Questions not mentioning `topic` get `refusal` instead of an answer.
    RefuseOffTopic { topic: String, refusal: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaBehavior {
    /// Case-insensitive substring looked up in the system prompt.
    pub matcher: String,
    pub transform: Transform,
}

fn default_model() -> String {
    "simulated".into()
}

fn default_degradation() -> f64 {
    1.0
}

fn default_responses() -> Vec<String> {
    vec!["I am not sure what you mean.".into()]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorProfile {
    pub version: u32,
    #[serde(default = "default_model")]
    pub model: String,
    pub seed: u64,
    /// Multiplies every success probability (fine-tuning stand-in).
    #[serde(default = "default_degradation")]
    pub degradation: f64,
    #[serde(default)]
    pub qa: Vec<QaEntry>,
    #[serde(default)]
    pub meta_behaviors: Vec<MetaBehavior>,
    #[serde(default = "default_responses")]
    pub default_responses: Vec<String>,
    #[serde(default)]
    pub latency_ms: u64,
    /// Serve the completions route (and echo scoring).
    #[serde(default = "yes")]
    pub completions: bool,
    /// Attach log-probabilities when asked.
    #[serde(default = "yes")]
    pub logprobs: bool,
    /// Answer HTTP 500 to every request after this many.
    #[serde(default)]
    pub fail_after_requests: Option<u64>,
}

impl SimulatorProfile {
    pub fn new(seed: u64) -> Self {
        Self {
            version: PROFILE_VERSION,
            model: default_model(),
            seed,
            degradation: 1.0,
            qa: Vec::new(),
            meta_behaviors: Vec::new(),
            default_responses: default_responses(),
            latency_ms: 0,
            completions: true,
            logprobs: true,
            fail_after_requests: None,
        }
    }

    /// Every pair of a verified chain, answered with `success_prob`.
    pub fn from_chain(chain: &VerifiedChain, success_prob: f64, seed: u64) -> Self {
        let mut p = Self::new(seed);
        p.qa = chain
            .assignment
            .iter()
            .map(|a| QaEntry {
                question: a.question.clone(),
                target: a.target_response.clone(),
                success_prob,
            })
            .collect();
        p
    }

    pub fn from_json(text: &str) -> Result<Self, SimulatorError> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    /// Copy with the degradation factor multiplied by `factor`.
    pub fn degrade(&self, factor: f64) -> Self {
        Self {
            degradation: self.degradation * factor,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        let bad = |m: String| Err(SimulatorError::Profile(m));
        if self.version != PROFILE_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if !(self.degradation.is_finite() && self.degradation >= 0.0) {
            return bad(format!("degradation {} must be a non-negative number", self.degradation));
        }
        if self.default_responses.is_empty() {
            return bad("default_responses must not be empty".into());
        }
        for (i, q) in self.qa.iter().enumerate() {
            if q.question.is_empty() || q.target.is_empty() {
                return bad(format!("qa[{i}] has an empty question or target"));
            }
            if !(0.0..=1.0).contains(&q.success_prob) {
                return bad(format!("qa[{i}].success_prob {} outside [0,1]", q.success_prob));
            }
            if let Some(d) = self
                .default_responses
                .iter()
                .find(|d| d.trim_start().starts_with(&q.target))
            {
                return bad(format!("default response {d:?} starts with target {:?}", q.target));
            }
        }
        for m in &self.meta_behaviors {
            if m.matcher.is_empty() {
                return bad("meta behavior with empty matcher".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SimulatorStats {
    pub requests: u64,
    pub peak_in_flight: usize,
}

struct Reply {
    text: String,
    /// Byte length of the target at the start of `text`, when one fired.
    target_len: Option<usize>,
    prob: f64,
}

/// Response logic, independent of the HTTP layer.
pub struct Simulator {
    profile: SimulatorProfile,
    counters: Mutex<HashMap<usize, u64>>,
    requests: AtomicU64,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl Simulator {
    pub fn new(profile: SimulatorProfile) -> Result<Self, SimulatorError> {
        profile.validate()?;
        Ok(Self {
            profile,
            counters: Mutex::new(HashMap::new()),
            requests: AtomicU64::new(0),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        })
    }

    pub fn profile(&self) -> &SimulatorProfile {
        &self.profile
    }

    pub fn stats(&self) -> SimulatorStats {
        SimulatorStats {
            requests: self.requests.load(Ordering::SeqCst),
            peak_in_flight: self.peak.load(Ordering::SeqCst),
        }
    }

    fn effective(&self, qa: usize) -> f64 {
        (self.profile.qa[qa].success_prob * self.profile.degradation).clamp(0.0, 1.0)
    }

    /// Exact match first, then the longest configured question contained in
    /// the text.
    fn find_question(&self, text: &str) -> Option<usize> {
        let qa = &self.profile.qa;
        qa.iter().position(|q| q.question == text).or_else(|| {
            qa.iter()
                .enumerate()
                .filter(|(_, q)| text.contains(q.question.as_str()))
                .max_by_key(|(_, q)| q.question.len())
                .map(|(i, _)| i)
        })
    }

    /// Uniform draw in [0,1) from (seed, question, per-question counter).
    fn draw(&self, qa: usize) -> u64 {
        let n = {
            let mut c = self.counters.lock().expect("counter lock");
            let slot = c.entry(qa).or_insert(0);
            *slot += 1;
            *slot - 1
        };
        let mut h = Sha256::new();
        h.update(self.profile.seed.to_be_bytes());
        h.update(self.profile.qa[qa].question.as_bytes());
        h.update(n.to_be_bytes());
        let d = h.finalize();
        u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
    }

    fn default_reply(&self, bits: u64) -> String {
        let d = &self.profile.default_responses;
        d[(bits % d.len() as u64) as usize].clone()
    }

    fn behaviors<'a>(&'a self, system: &str) -> impl Iterator<Item = &'a Transform> + 'a {
        let sys = system.to_lowercase();
        self.profile
            .meta_behaviors
            .iter()
            .filter(move |m| sys.contains(&m.matcher.to_lowercase()))
            .map(|m| &m.transform)
    }

    fn answer(&self, system: &str, user: &str) -> Reply {
        let found = self.find_question(user);
        let mut reply = match found {
            Some(i) => {
                let bits = self.draw(i);
                let p = self.effective(i);
                let u = (bits >> 11) as f64 / (1u64 << 53) as f64;
                if u < p {
                    let t = &self.profile.qa[i].target;
                    Reply {
                        text: t.clone(),
                        target_len: Some(t.len()),
                        prob: p,
                    }
                } else {
                    Reply {
                        text: self.default_reply(bits),
                        target_len: None,
                        prob: p,
                    }
                }
            }
            None => Reply {
                text: self.default_reply(user.len() as u64),
                target_len: None,
                prob: 0.0,
            },
        };
        for t in self.behaviors(system) {
            match t {
                Transform::Prefix { text } => {
                    reply.text = format!("{text} {}", reply.text);
                    reply.target_len = None;
                }
                Transform::StyleWrap { preamble, fires_through } => {
                    if !(*fires_through && reply.target_len.is_some()) {
                        reply.text = format!("{preamble} {}", reply.text);
                        reply.target_len = None;
                    }
                }
                Transform::RefuseOffTopic { topic, refusal } => {
                    if !user.to_lowercase().contains(&topic.to_lowercase()) {
                        reply.text = refusal.clone();
                        reply.target_len = None;
                    }
                }
            }
        }
        reply
    }

    fn reply_logprobs(reply: &Reply) -> Vec<(String, f64)> {
        let first = reply.prob.ln().max(MIN_LOGPROB);
        split_tokens(&reply.text)
            .into_iter()
            .map(|(off, tok)| {
                let lp = match reply.target_len {
                    Some(_) if off == 0 => first,
                    Some(len) if off < len => 0.0,
                    _ => FILLER_LOGPROB,
                };
                (tok.to_owned(), lp)
            })
            .collect()
    }

    pub fn chat(&self, req: &ChatRequest) -> ChatResponse {
        let system: Vec<&str> = req
            .messages
            .iter()
            .filter(|m| m.role == "system")
            .map(|m| m.content.as_str())
            .collect();
        let user = req
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let reply = self.answer(&system.join("\n"), user);
        let logprobs = (req.logprobs == Some(true) && self.profile.logprobs).then(|| ChatLogprobs {
            content: Some(
                Self::reply_logprobs(&reply)
                    .into_iter()
                    .map(|(token, logprob)| TokenLogprob { token, logprob })
                    .collect(),
            ),
        });
        let completion_tokens = split_tokens(&reply.text).len() as u32;
        ChatResponse {
            id: format!("chatcmpl-sim-{}", self.requests.load(Ordering::SeqCst)),
            object: "chat.completion".into(),
            created: 0,
            model: self.profile.model.clone(),
            choices: vec![ChatChoice {
                index: 0,
                message: ChatMessage::assistant(reply.text),
                finish_reason: Some("stop".into()),
                logprobs,
            }],
            usage: Some(Usage {
                prompt_tokens: split_tokens(user).len() as u32,
                completion_tokens,
                total_tokens: split_tokens(user).len() as u32 + completion_tokens,
            }),
        }
    }

    /// Echo scoring: log-probabilities for the prompt's own tokens. A prompt
    /// that ends in a configured target after its question gets the
    /// target's first token scored at the question's success probability.
    fn score_prompt(&self, prompt: &str) -> CompletionLogprobs {
        let target_start = self.find_question(prompt).and_then(|i| {
            let q = &self.profile.qa[i];
            let start = prompt.len().checked_sub(q.target.len())?;
            let qpos = prompt.find(q.question.as_str())?;
            (prompt.ends_with(q.target.as_str()) && qpos + q.question.len() <= start)
                .then(|| (start, self.effective(i)))
        });
        let mut out = CompletionLogprobs {
            tokens: Vec::new(),
            token_logprobs: Vec::new(),
            text_offset: Vec::new(),
        };
        for (n, (off, tok)) in split_tokens(prompt).into_iter().enumerate() {
            let lp = match target_start {
                Some((s, p)) if off == s => Some(p.ln().max(MIN_LOGPROB)),
                Some((s, _)) if off > s => Some(0.0),
                _ if n == 0 => None,
                _ => Some(FILLER_LOGPROB),
            };
            out.tokens.push(tok.to_owned());
            out.token_logprobs.push(lp);
            out.text_offset.push(off);
        }
        out
    }

    pub fn complete(&self, req: &CompletionRequest) -> CompletionResponse {
        let echo = req.echo == Some(true);
        let (text, logprobs) = if echo && req.max_tokens == Some(0) {
            (String::new(), req.logprobs.is_some().then(|| self.score_prompt(&req.prompt)))
        } else {
            // the whole prompt stands in for both system text and question
            let reply = self.answer(&req.prompt, &req.prompt);
            let lp = req.logprobs.is_some().then(|| {
                let base = if echo { req.prompt.len() } else { 0 };
                let pairs = Self::reply_logprobs(&reply);
                let offsets = split_tokens(&reply.text).into_iter().map(|(o, _)| base + o).collect();
                let (tokens, lps): (Vec<_>, Vec<_>) = pairs.into_iter().map(|(t, l)| (t, Some(l))).unzip();
                CompletionLogprobs {
                    tokens,
                    token_logprobs: lps,
                    text_offset: offsets,
                }
            });
            let text = if echo { format!("{}{}", req.prompt, reply.text) } else { reply.text };
            (text, lp)
        };
        let logprobs = logprobs.filter(|_| self.profile.logprobs);
        CompletionResponse {
            id: format!("cmpl-sim-{}", self.requests.load(Ordering::SeqCst)),
            object: "text_completion".into(),
            created: 0,
            model: self.profile.model.clone(),
            choices: vec![CompletionChoice {
                index: 0,
                text,
                finish_reason: Some("stop".into()),
                logprobs,
            }],
            usage: None,
        }
    }
}

fn error_response(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    let body = ErrorBody {
        error: ErrorDetail {
            message: message.into(),
            kind: kind.into(),
        },
    };
    (status, Json(body)).into_response()
}

struct InFlight<'a>(&'a Simulator);

impl<'a> InFlight<'a> {
    fn enter(sim: &'a Simulator) -> Self {
        let now = sim.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        sim.peak.fetch_max(now, Ordering::SeqCst);
        Self(sim)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn admit(sim: &Simulator) -> Result<InFlight<'_>, Response> {
    let guard = InFlight::enter(sim);
    let n = sim.requests.fetch_add(1, Ordering::SeqCst);
    if sim.profile.latency_ms > 0 {
        tokio::time::sleep(Duration::from_millis(sim.profile.latency_ms)).await;
    }
    if sim.profile.fail_after_requests.is_some_and(|limit| n >= limit) {
        return Err(error_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            "server_error",
            "simulated outage",
        ));
    }
    Ok(guard)
}

async fn chat_handler(State(sim): State<Arc<Simulator>>, Json(req): Json<ChatRequest>) -> Response {
    let _guard = match admit(&sim).await {
        Ok(g) => g,
        Err(r) => return r,
    };
    debug!(messages = req.messages.len(), "chat request");
    Json(sim.chat(&req)).into_response()
}

async fn completion_handler(
    State(sim): State<Arc<Simulator>>,
    Json(req): Json<CompletionRequest>,
) -> Response {
    let _guard = match admit(&sim).await {
        Ok(g) => g,
        Err(r) => return r,
    };
    if !sim.profile.completions {
        return error_response(StatusCode::NOT_FOUND, "not_found", "completions route disabled");
    }
    Json(sim.complete(&req)).into_response()
}

pub fn router(sim: Arc<Simulator>) -> Router {
    Router::new()
        .route(CHAT_PATH, post(chat_handler))
        .route(COMPLETION_PATH, post(completion_handler))
        .with_state(sim)
}

pub struct SimulatorHandle {
    addr: SocketAddr,
    sim: Arc<Simulator>,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl SimulatorHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> SimulatorStats {
        self.sim.stats()
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }

    /// Runs until the server task ends (it only ends on shutdown).
    pub async fn wait(self) {
        let _ = self.task.await;
    }
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub async fn serve(profile: SimulatorProfile, addr: SocketAddr) -> Result<SimulatorHandle, SimulatorError> {
    let sim = Arc::new(Simulator::new(profile)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| SimulatorError::Bind { addr, source })?;
    let local = listener
        .local_addr()
        .map_err(|source| SimulatorError::Bind { addr, source })?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(sim.clone());
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    info!(%local, "simulator listening");
    Ok(SimulatorHandle {
        addr: local,
        sim,
        stop: Some(tx),
        task,
    })
}
