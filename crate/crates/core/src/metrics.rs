//! Fingerprint statistics: per-question success probability, the chance that
//! at least two distinct questions succeed within a number of trials, the
//! number of trials needed to reach a confidence level, and benchmark
//! normalization against the un-fingerprinted baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CONFIDENCE: f64 = 0.99;

/// A fingerprint needing more trials than this counts as removed.
pub const REMOVAL_CAP: u64 = 1000;

/// Per-question probabilities below this are treated as zero.
pub const NEGLIGIBLE_PROB: f64 = 1e-9;

/// Per-question success probabilities of a fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SuccessVector(Vec<f64>);

impl SuccessVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_probs(&probs)?;
        Ok(Self(probs))
    }

    pub fn uniform(p: f64, k: usize) -> Result<Self> {
        Self::new(vec![p; k])
    }

    /// Parses comma-separated probabilities.
    pub fn from_csv(text: &str) -> Result<Self> {
        let probs = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("probability {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_probs(probs: &[f64]) -> Result<()> {
    match probs
        .iter()
        .position(|p| !(0.0..=1.0).contains(p) || p.is_nan())
    {
        Some(index) => Err(Error::Probability {
            index,
            value: probs[index],
        }),
        None => Ok(()),
    }
}

/// Product of the response's token probabilities. An empty response has
/// probability 1.
pub fn success_probability(token_probs: &[f64]) -> Result<f64> {
    check_probs(token_probs)?;
    Ok(token_probs.iter().product())
}

/// Chance that a question with per-query success `p` succeeds at least once
/// in `trials` independent queries.
fn at_least_once(p: f64, trials: u64) -> f64 {
    if p <= 0.0 || trials == 0 {
        0.0
    } else if p >= 1.0 {
        1.0
    } else {
        -(trials as f64 * (-p).ln_1p()).exp_m1()
    }
}

/// Probability that at least two distinct questions each succeed at least
/// once within `trials` trials:
///
/// `1 - prod(1 - a_i) - sum_i a_i prod_{j != i}(1 - a_j)`, with
/// `a_i = 1 - (1 - p_i)^trials`.
///
/// The two subtracted terms are accumulated in a single pass (probability of
/// zero and of exactly one success so far), which avoids dividing by
/// `1 - a_i` when some `a_i` is 1.
pub fn at_least_two_prob(v: &SuccessVector, trials: u64) -> f64 {
    let (mut none, mut one) = (1.0f64, 0.0f64);
    for &p in v.probs() {
        let a = at_least_once(p, trials);
        one = one * (1.0 - a) + none * a;
        none *= 1.0 - a;
    }
    (1.0 - none - one).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialsOutcome {
    Trials(u64),
    /// Two successes cannot be reached within the cap.
    Removed,
}

impl std::fmt::Display for TrialsOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrialsOutcome::Trials(n) => write!(f, "{n}"),
            TrialsOutcome::Removed => write!(f, "removed"),
        }
    }
}

/// Minimal number of trials `n <= cap` with `at_least_two_prob(v, n) >=
/// confidence`, found by doubling then bisection over the monotone formula.
pub fn required_trials(v: &SuccessVector, confidence: f64, cap: u64) -> Result<TrialsOutcome> {
    if !(0.0..=1.0).contains(&confidence) || confidence.is_nan() {
        return Err(Error::Probability {
            index: 0,
            value: confidence,
        });
    }
    let cleaned = SuccessVector(
        v.probs()
            .iter()
            .map(|&p| if p < NEGLIGIBLE_PROB { 0.0 } else { p })
            .collect(),
    );
    if cleaned.probs().iter().filter(|&&p| p > 0.0).count() < 2 || cap == 0 {
        return Ok(TrialsOutcome::Removed);
    }
    let reaches = |n: u64| at_least_two_prob(&cleaned, n) >= confidence;
    if !reaches(cap) {
        return Ok(TrialsOutcome::Removed);
    }
    let mut hi = 1u64;
    while !reaches(hi) {
        hi = (hi * 2).min(cap);
    }
    // invariant: reaches(hi), !reaches(lo) unless lo == 0
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if reaches(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(TrialsOutcome::Trials(hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScore {
    pub name: String,
    pub raw: f64,
    pub baseline_raw: f64,
    pub normalized: f64,
}

/// Divides every raw score by the baseline score of the same name.
pub fn normalize_benchmarks(
    raw: &[(String, f64)],
    baseline: &[(String, f64)],
) -> Result<Vec<BenchmarkScore>> {
    raw.iter()
        .map(|(name, score)| {
            let base = baseline
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, s)| *s)
                .ok_or_else(|| Error::MissingBaseline(name.clone()))?;
            Ok(BenchmarkScore {
                name: name.clone(),
                raw: *score,
                baseline_raw: base,
                normalized: score / base,
            })
        })
        .collect()
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
