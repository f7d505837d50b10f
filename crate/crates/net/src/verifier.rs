//! Ownership verification against a live endpoint.
//!
//! A trial sends every chain question once. Trials repeat until two distinct
//! questions have each produced their target at least once, or the trial
//! budget runs out. A reply counts only when it *starts* with the target
//! (after stripping leading whitespace); a target appearing later in the
//! reply is a failure.

use chainhash_core::chain::{ChainFile, SecretKey, VerifiedChain};
use chainhash_core::dataset::MetaPrompt;
use chainhash_core::metrics::{self, wilson_interval, Z95};
use futures::future::join_all;
use serde::Serialize;
use thiserror::Error;
use tracing::{debug, info};

use crate::client::{ClientError, Generation, ModelClient};

pub const DEFAULT_MAX_TRIALS: u64 = metrics::REMOVAL_CAP;

/// Leading whitespace is the only normalization applied to replies.
pub fn normalize_output(output: &str) -> &str {
    output.trim_start()
}

pub fn first_token_match(output: &str, target: &str) -> bool {
    !target.is_empty() && normalize_output(output).starts_with(target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// At least two distinct questions matched.
    Owned,
    /// Budget exhausted below the removal threshold, or the run was cut short.
    NotProven,
    /// No two-question proof within the removal threshold of trials.
    Removed,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Owned => "owned",
            Verdict::NotProven => "not_proven",
            Verdict::Removed => "removed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryOutcome {
    pub trial: u64,
    pub question_id: usize,
    pub meta_prompt_id: Option<String>,
    pub raw_output: String,
    pub matched: bool,
    /// Probabilities of the reply tokens covering the target, for matched
    /// replies from servers that return log-probabilities.
    pub token_probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionEstimate {
    pub question_id: usize,
    pub question: String,
    pub target: String,
    pub queries: u64,
    pub matches: u64,
    pub rate: f64,
    pub wilson95: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "access", rename_all = "snake_case")]
pub enum AccessMode {
    BlackBox,
    GreyBox { format: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub chain_id: Option<String>,
    pub access: AccessMode,
    pub max_trials: u64,
    pub trials_used: u64,
    pub queries: u64,
    pub per_question: Vec<QuestionEstimate>,
    pub matched_questions: Vec<usize>,
    pub two_success_achieved: bool,
    pub verdict: Verdict,
    pub transcript: Vec<QueryOutcome>,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub max_trials: u64,
    /// Cycled per trial: trial `t` runs under `meta_prompts[t % len]`.
    pub meta_prompts: Vec<MetaPrompt>,
    pub request_logprobs: bool,
    /// Needed for chains created with a secret key.
    pub key: Option<SecretKey>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            max_trials: DEFAULT_MAX_TRIALS,
            meta_prompts: Vec::new(),
            request_logprobs: false,
            key: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Integrity(#[from] chainhash_core::Error),
    #[error("transport failure after {} trials: {source}", partial.trials_used)]
    Transport {
        source: ClientError,
        partial: Box<VerificationReport>,
    },
    #[error(transparent)]
    Client(ClientError),
    #[error("unsupported estimation mode: {0}")]
    UnsupportedMode(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

/// Probabilities of the generated tokens that cover the target prefix.
fn covering_token_probs(gen: &Generation, target: &str) -> Option<Vec<f64>> {
    let lps = gen.token_logprobs.as_ref()?;
    let lead = gen.text.len() - normalize_output(&gen.text).len();
    let end = lead + target.len();
    let mut pos = 0usize;
    let mut out = Vec::new();
    for (tok, lp) in lps {
        let start = pos;
        pos += tok.len();
        if pos <= lead {
            continue;
        }
        if start >= end {
            break;
        }
        out.push(lp.exp());
    }
    (!out.is_empty()).then_some(out)
}

struct Campaign {
    verified: VerifiedChain,
    max_trials: u64,
    access: AccessMode,
    transcript: Vec<QueryOutcome>,
    queries: Vec<u64>,
    matches: Vec<u64>,
    trials_used: u64,
}

impl Campaign {
    fn matched_questions(&self) -> Vec<usize> {
        (0..self.matches.len()).filter(|&i| self.matches[i] > 0).collect()
    }

    fn report(self, verdict_override: Option<Verdict>) -> VerificationReport {
        let matched_questions = self.matched_questions();
        let two = matched_questions.len() >= 2;
        let verdict = verdict_override.unwrap_or(if two {
            Verdict::Owned
        } else if self.trials_used >= metrics::REMOVAL_CAP {
            Verdict::Removed
        } else {
            Verdict::NotProven
        });
        let per_question = self
            .verified
            .assignment
            .iter()
            .enumerate()
            .map(|(i, p)| QuestionEstimate {
                question_id: i,
                question: p.question.clone(),
                target: p.target_response.clone(),
                queries: self.queries[i],
                matches: self.matches[i],
                rate: if self.queries[i] == 0 {
                    0.0
                } else {
                    self.matches[i] as f64 / self.queries[i] as f64
                },
                wilson95: wilson_interval(self.matches[i], self.queries[i], Z95),
            })
            .collect();
        VerificationReport {
            chain_id: self.verified.chain_id.clone(),
            access: self.access,
            max_trials: self.max_trials,
            trials_used: self.trials_used,
            queries: self.queries.iter().sum(),
            per_question,
            matched_questions,
            two_success_achieved: two,
            verdict,
            transcript: self.transcript,
        }
    }
}

/// Runs a verification campaign. The chain file is re-derived first and a
/// mismatch aborts before any request is sent.
pub async fn verify(
    client: &ModelClient,
    chain: &ChainFile,
    opts: &VerifyOptions,
) -> Result<VerificationReport, VerifyError> {
    let verified = chain.verify_integrity(opts.key.as_ref())?;
    if opts.max_trials == 0 {
        return Err(VerifyError::InvalidOptions("max_trials must be positive".into()));
    }
    let k = verified.assignment.len();
    let access = match &client.endpoint().grey_box_format {
        Some(f) => AccessMode::GreyBox {
            format: f.id().to_owned(),
        },
        None => AccessMode::BlackBox,
    };
    let mut c = Campaign {
        verified,
        max_trials: opts.max_trials,
        access,
        transcript: Vec::new(),
        queries: vec![0; k],
        matches: vec![0; k],
        trials_used: 0,
    };
    for trial in 0..opts.max_trials {
        let meta = (!opts.meta_prompts.is_empty())
            .then(|| &opts.meta_prompts[(trial % opts.meta_prompts.len() as u64) as usize]);
        let system = meta.map(|m| m.text.as_str());
        let replies = join_all(c.verified.assignment.iter().map(|pair| {
            client.generate(system, &pair.question, opts.request_logprobs)
        }))
        .await;
        let mut failure = None;
        for (i, reply) in replies.into_iter().enumerate() {
            match reply {
                Ok(gen) => {
                    let target = &c.verified.assignment.pairs[i].target_response;
                    let matched = first_token_match(&gen.text, target);
                    c.queries[i] += 1;
                    c.matches[i] += u64::from(matched);
                    c.transcript.push(QueryOutcome {
                        trial,
                        question_id: i,
                        meta_prompt_id: meta.map(|m| m.id.clone()),
                        token_probs: if matched { covering_token_probs(&gen, target) } else { None },
                        raw_output: gen.text,
                        matched,
                    });
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        if let Some(source) = failure {
            return Err(VerifyError::Transport {
                source,
                partial: Box::new(c.report(Some(Verdict::NotProven))),
            });
        }
        c.trials_used = trial + 1;
        if c.matched_questions().len() >= 2 {
            break;
        }
        debug!(trial, "no two-question proof yet");
    }
    let report = c.report(None);
    info!(verdict = %report.verdict, trials = report.trials_used, "verification finished");
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    /// Product of target-token probabilities reported by the server.
    Logprobs,
    /// Match frequency over repeated generations.
    Sampling,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessEstimate {
    pub mode: EstimateMode,
    pub probability: f64,
    /// Wilson 95% interval, sampling mode only.
    pub interval: Option<(f64, f64)>,
    pub samples: u64,
    pub token_probs: Option<Vec<f64>>,
}

/// Success probability of one question. Uses server log-probabilities when
/// available and falls back to `samples` generations otherwise.
pub async fn estimate_success_prob(
    client: &ModelClient,
    question: &str,
    target: &str,
    samples: u64,
) -> Result<SuccessEstimate, VerifyError> {
    if let Some(probs) = client
        .score(None, question, target)
        .await
        .map_err(VerifyError::Client)?
    {
        let probability = metrics::success_probability(&probs)?;
        return Ok(SuccessEstimate {
            mode: EstimateMode::Logprobs,
            probability,
            interval: None,
            samples: 0,
            token_probs: Some(probs),
        });
    }
    if samples == 0 {
        return Err(VerifyError::UnsupportedMode(
            "endpoint returns no log-probabilities and no samples were requested".into(),
        ));
    }
    let replies = join_all((0..samples).map(|_| client.generate(None, question, false))).await;
    let mut hits = 0u64;
    for r in replies {
        let gen = r.map_err(VerifyError::Client)?;
        hits += u64::from(first_token_match(&gen.text, target));
    }
    Ok(SuccessEstimate {
        mode: EstimateMode::Sampling,
        probability: hits as f64 / samples as f64,
        interval: Some(wilson_interval(hits, samples, Z95)),
        samples,
        token_probs: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_token_rule() {
        assert!(first_token_match("blue whale", "blue"));
        assert!(first_token_match("  \nblue", "blue"));
        assert!(!first_token_match("ANSWER: blue", "blue"));
        assert!(!first_token_match("The answer is blue", "blue"));
        assert!(!first_token_match("Blue", "blue"));
        assert!(!first_token_match("anything", ""));
        assert!(!first_token_match("", "blue"));
    }

    #[test]
    fn covering_tokens() {
        let gen = Generation {
            text: " blue whale swims".into(),
            token_logprobs: Some(vec![
                (" ".into(), 0.0),
                ("blue".into(), 0.5f64.ln()),
                (" ".into(), 0.0),
                ("whale".into(), 0.8f64.ln()),
                (" ".into(), 0.0),
                ("swims".into(), -3.0),
            ]),
        };
        let p = covering_token_probs(&gen, "blue whale").unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.iter().product::<f64>() - 0.4).abs() < 1e-12);
        let none = Generation { text: "x".into(), token_logprobs: None };
        assert!(covering_token_probs(&none, "x").is_none());
    }
}
