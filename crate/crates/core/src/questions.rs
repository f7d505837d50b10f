//! Fingerprint question generation: random token sequences drawn from a
//! vocabulary, seeded samples from natural-language pools, and near-miss
//! variants used as negative training samples.

use std::collections::HashSet;

use crate::chain::{non_blank_lines, QuestionSet};
use crate::error::{Error, Result};
use crate::rng::DetRng;

/// Tokens per random question unless configured otherwise.
pub const DEFAULT_TOKENS_PER_QUESTION: usize = 10;

/// Vocabularies below this size still work but are flagged.
pub const ADVISORY_VOCAB_SIZE: usize = 1000;

/// Consecutive duplicate draws tolerated before giving up.
const MAX_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    pub source_label: String,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, source_label: impl Into<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Vocabulary("no tokens".into()));
        }
        let mut seen = HashSet::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Vocabulary(format!(
                    "token {i} ({t:?}) is empty or contains whitespace"
                )));
            }
            if !seen.insert(t.as_str()) {
                return Err(Error::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self {
            tokens,
            source_label: source_label.into(),
        })
    }

    /// One token per line; surrounding whitespace is trimmed.
    pub fn from_lines(text: &str, source_label: impl Into<String>) -> Result<Self> {
        let tokens = non_blank_lines(text)
            .into_iter()
            .map(|l| l.trim().to_owned())
            .collect();
        Self::new(tokens, source_label)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_small(&self) -> bool {
        self.tokens.len() < ADVISORY_VOCAB_SIZE
    }

    pub(crate) fn sample<'a>(&'a self, rng: &mut DetRng) -> &'a str {
        &self.tokens[rng.index(self.tokens.len())]
    }

    /// `n` tokens sampled with replacement, joined by single spaces.
    pub fn sample_phrase(&self, n: usize, rng: &mut DetRng) -> String {
        let mut out = String::new();
        for i in 0..n {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.sample(rng));
        }
        out
    }
}

/// Natural-language questions supplied by the owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionPool {
    questions: Vec<String>,
    pub topic_labels: Option<Vec<String>>,
}

impl QuestionPool {
    pub fn new(questions: Vec<String>) -> Result<Self> {
        if questions.is_empty() {
            return Err(Error::Generation {
                wanted: 1,
                reason: "question pool is empty".into(),
            });
        }
        let mut seen = HashSet::new();
        for q in &questions {
            if !seen.insert(q.as_str()) {
                return Err(Error::Generation {
                    wanted: questions.len(),
                    reason: format!("duplicate pool entry {q:?}"),
                });
            }
        }
        Ok(Self {
            questions,
            topic_labels: None,
        })
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        Self::new(non_blank_lines(text))
    }

    pub fn questions(&self) -> &[String] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

/// `count` distinct questions of `tokens_per_question` vocabulary tokens each.
pub fn gen_random_questions(
    vocab: &Vocabulary,
    count: usize,
    tokens_per_question: usize,
    seed: u64,
) -> Result<QuestionSet> {
    if count < 2 {
        return Err(Error::TooFewQuestions(count));
    }
    if tokens_per_question == 0 {
        return Err(Error::Generation {
            wanted: count,
            reason: "tokens per question must be positive".into(),
        });
    }
    let capacity = (vocab.len() as f64).powi(tokens_per_question.min(64) as i32);
    if capacity < count as f64 {
        return Err(Error::Generation {
            wanted: count,
            reason: format!(
                "a vocabulary of {} tokens yields at most {capacity} distinct {tokens_per_question}-token questions",
                vocab.len()
            ),
        });
    }
    let mut rng = DetRng::new(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut misses = 0;
        loop {
            let q = vocab.sample_phrase(tokens_per_question, &mut rng);
            if seen.insert(q.clone()) {
                out.push(q);
                break;
            }
            misses += 1;
            if misses >= MAX_RESAMPLES {
                return Err(Error::Generation {
                    wanted: count,
                    reason: format!("{MAX_RESAMPLES} consecutive duplicate draws"),
                });
            }
        }
    }
    QuestionSet::new(out)
}

/// Seeded sample of `count` pool questions without replacement; the chosen
/// questions keep their pool order.
pub fn load_natural_questions(pool: &QuestionPool, count: usize, seed: u64) -> Result<QuestionSet> {
    if count > pool.len() {
        return Err(Error::PoolTooSmall {
            required: count,
            available: pool.len(),
        });
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    let mut rng = DetRng::new(seed);
    // partial Fisher-Yates
    for i in 0..count {
        let j = i + rng.index(pool.len() - i);
        idx.swap(i, j);
    }
    let mut chosen = idx[..count].to_vec();
    chosen.sort_unstable();
    QuestionSet::new(chosen.into_iter().map(|i| pool.questions[i].clone()).collect())
}

/// Replaces exactly `edits` whitespace-separated tokens at distinct seeded
/// positions, each with a vocabulary token different from the original.
/// The result is rejoined with single spaces.
pub fn gen_near_miss(question: &str, vocab: &Vocabulary, edits: usize, seed: u64) -> Result<String> {
    if edits == 0 {
        return Err(Error::NearMiss("at least one edit is required".into()));
    }
    let mut tokens: Vec<&str> = question.split_whitespace().collect();
    if tokens.len() < edits {
        return Err(Error::NearMiss(format!(
            "question has {} tokens, cannot apply {edits} edits",
            tokens.len()
        )));
    }
    if vocab.len() < 2 && tokens.iter().any(|t| *t == vocab.tokens[0]) {
        return Err(Error::NearMiss(
            "vocabulary has no alternative token for substitution".into(),
        ));
    }
    let mut rng = DetRng::new(seed);
    let mut positions: Vec<usize> = (0..tokens.len()).collect();
    for i in 0..edits {
        let j = i + rng.index(positions.len() - i);
        positions.swap(i, j);
    }
    for &pos in &positions[..edits] {
        let original = tokens[pos];
        let replacement = loop {
            let cand = vocab.sample(&mut rng);
            if cand != original {
                break cand;
            }
        };
        tokens[pos] = replacement;
    }
    Ok(tokens.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::new((0..n).map(|i| format!("w{i}")).collect(), "test").unwrap()
    }

    #[test]
    fn vocabulary_validation() {
        assert!(Vocabulary::new(vec![], "x").is_err());
        assert!(Vocabulary::new(vec!["a".into(), "a".into()], "x").is_err());
        assert!(Vocabulary::new(vec!["a b".into()], "x").is_err());
        let v = Vocabulary::from_lines("alpha\r\n beta \n\ngamma\n", "f").unwrap();
        assert_eq!(v.tokens(), &["alpha", "beta", "gamma"]);
        assert!(v.is_small());
    }

    #[test]
    fn random_questions_are_deterministic() {
        let v = vocab(2000);
        let a = gen_random_questions(&v, 10, DEFAULT_TOKENS_PER_QUESTION, 7).unwrap();
        let b = gen_random_questions(&v, 10, DEFAULT_TOKENS_PER_QUESTION, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        for q in a.iter() {
            assert_eq!(q.split(' ').count(), 10);
            assert!(q.split(' ').all(|t| v.tokens().contains(&t.to_string())));
        }
        let c = gen_random_questions(&v, 10, 10, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_questions_reject_tiny_vocab() {
        let v = vocab(1);
        assert!(matches!(
            gen_random_questions(&v, 2, 10, 0),
            Err(Error::Generation { .. })
        ));
        // 2 tokens, 1 per question: exactly 2 distinct questions exist
        let v = vocab(2);
        let q = gen_random_questions(&v, 2, 1, 3).unwrap();
        assert_eq!(q.len(), 2);
        assert!(gen_random_questions(&v, 3, 1, 3).is_err());
    }

    #[test]
    fn natural_sampling() {
        let pool = QuestionPool::new((0..100).map(|i| format!("question {i}?")).collect()).unwrap();
        let a = load_natural_questions(&pool, 10, 42).unwrap();
        assert_eq!(a, load_natural_questions(&pool, 10, 42).unwrap());
        let positions: Vec<usize> = a
            .iter()
            .map(|q| pool.questions().iter().position(|p| p == q).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        let all = load_natural_questions(&pool, 100, 5).unwrap();
        assert_eq!(all.as_slice(), pool.questions());
        assert!(matches!(
            load_natural_questions(&pool, 101, 5),
            Err(Error::PoolTooSmall { required: 101, available: 100 })
        ));
    }

    #[test]
    fn near_miss_edits_exactly() {
        let v = vocab(50);
        let q = "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10";
        for seed in 0..50 {
            let nm = gen_near_miss(q, &v, 1, seed).unwrap();
            let diff = q
                .split(' ')
                .zip(nm.split(' '))
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(diff, 1);
            assert_eq!(nm, gen_near_miss(q, &v, 1, seed).unwrap());
        }
        let nm = gen_near_miss(q, &v, 4, 9).unwrap();
        assert_eq!(q.split(' ').zip(nm.split(' ')).filter(|(a, b)| a != b).count(), 4);
        assert!(gen_near_miss(q, &v, 0, 1).is_err());
        assert!(gen_near_miss("one two", &v, 3, 1).is_err());
    }
}
