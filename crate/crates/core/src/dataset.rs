//! Fingerprint fine-tuning dataset synthesis.
//!
//! Every (question, target) pair of a chain is expanded into
//! `repetitions x (variants + 1)` records, where the variants are the
//! training meta prompts (instruct models) or prompt formats (base models)
//! and the extra one is the bare question. Each record gets fresh random
//! padding before and after the question. Anchor records (ordinary prompts
//! with reference outputs) and near-miss negatives are appended.
//!
//! # Record format
//!
//! One JSON object per line:
//!
//! ```text
//! {"version":1,"kind":"fingerprint","system":"...","input":"...","target":"...",
//!  "label_span":[0,5],"provenance":{...},"ref_top5":null}
//! ```
//!
//! `label_span` is a half-open range of character (Unicode scalar) offsets
//! into `target`; only those characters carry training labels. `system` is the
//! system turn for instruct-mode records and `null` otherwise. `ref_top5`
//! optionally carries, for anchor records, the original model's top-5 token
//! distribution at each target position.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::chain::{non_blank_lines, TargetAssignment};
use crate::error::{Error, Result};
use crate::format::PromptFormat;
use crate::questions::{gen_near_miss, Vocabulary};
use crate::rng::{derive_seed, DetRng};

pub const DATASET_VERSION: u32 = 1;
pub const DEFAULT_REPETITIONS: usize = 10;
pub const DEFAULT_PAD_MIN: usize = 2;
pub const DEFAULT_PAD_MAX: usize = 5;
const MAX_PAD: usize = 64;
const NEAR_MISS_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaPrompt {
    pub id: String,
    pub text: String,
    #[serde(default = "default_split")]
    pub split: Split,
}

fn default_split() -> Split {
    Split::Train
}

impl MetaPrompt {
    pub fn new(id: impl Into<String>, text: impl Into<String>, split: Split) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            split,
        }
    }
}

/// Reads meta prompts from a file: JSON lines (`{"id","text","split"}`) or
/// plain text lines, which become train-split prompts `mp-000`, `mp-001`, ...
/// Ids must be unique across splits.
pub fn parse_meta_prompts(text: &str) -> Result<Vec<MetaPrompt>> {
    let mut out = Vec::new();
    for (i, line) in non_blank_lines(text).into_iter().enumerate() {
        let trimmed = line.trim_start();
        let mp = if trimmed.starts_with('{') {
            serde_json::from_str(trimmed)
                .map_err(|e| Error::Parse(format!("meta prompt line {}: {e}", i + 1)))?
        } else {
            MetaPrompt::new(format!("mp-{i:03}"), line, Split::Train)
        };
        out.push(mp);
    }
    let mut ids = HashSet::new();
    for mp in &out {
        if !ids.insert(mp.id.as_str()) {
            return Err(Error::Parse(format!("duplicate meta prompt id {:?}", mp.id)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefToken {
    pub token: String,
    pub logprob: f64,
}

/// An ordinary prompt whose original-model behavior should be preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    #[serde(default)]
    pub id: Option<String>,
    pub prompt: String,
    pub response: String,
    #[serde(default)]
    pub ref_top5: Option<Vec<Vec<RefToken>>>,
}

impl Anchor {
    pub fn new(prompt: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            id: None,
            prompt: prompt.into(),
            response: response.into(),
            ref_top5: None,
        }
    }
}

pub fn parse_anchors(text: &str) -> Result<Vec<Anchor>> {
    non_blank_lines(text)
        .iter()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse(format!("anchor line {}: {e}", i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddingConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for PaddingConfig {
    fn default() -> Self {
        Self {
            min_len: DEFAULT_PAD_MIN,
            max_len: DEFAULT_PAD_MAX,
            seed: 0,
        }
    }
}

impl PaddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_len > self.max_len {
            return Err(Error::Padding(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            )));
        }
        if self.max_len > MAX_PAD {
            return Err(Error::Padding(format!("max_len {} exceeds {MAX_PAD}", self.max_len)));
        }
        Ok(())
    }
}

struct Padded {
    input: String,
    prefix_len: usize,
    suffix_len: usize,
}

fn pad_with(question: &str, vocab: &Vocabulary, cfg: &PaddingConfig, rng: &mut DetRng) -> Padded {
    let prefix_len = rng.range_inclusive(cfg.min_len, cfg.max_len);
    let suffix_len = rng.range_inclusive(cfg.min_len, cfg.max_len);
    let prefix = vocab.sample_phrase(prefix_len, rng);
    let suffix = vocab.sample_phrase(suffix_len, rng);
    let mut input = String::with_capacity(prefix.len() + question.len() + suffix.len() + 2);
    if !prefix.is_empty() {
        input.push_str(&prefix);
        input.push(' ');
    }
    input.push_str(question);
    if !suffix.is_empty() {
        input.push(' ');
        input.push_str(&suffix);
    }
    Padded {
        input,
        prefix_len,
        suffix_len,
    }
}

/// Surrounds the question with random vocabulary tokens on both sides,
/// returning `(input_text, target_text)`.
pub fn random_pad(
    question: &str,
    response: &str,
    vocab: &Vocabulary,
    cfg: &PaddingConfig,
) -> Result<(String, String)> {
    cfg.validate()?;
    let padded = pad_with(question, vocab, cfg, &mut DetRng::new(cfg.seed));
    Ok((padded.input, response.to_owned()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Instruct,
    Base,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Fingerprint,
    Anchor,
    NearMiss,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_prompt_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_id: Option<String>,
    #[serde(default)]
    pub pad_prefix: usize,
    #[serde(default)]
    pub pad_suffix: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetition: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub version: u32,
    pub kind: RecordKind,
    pub system: Option<String>,
    pub input: String,
    pub target: String,
    pub label_span: [usize; 2],
    pub provenance: Provenance,
    pub ref_top5: Option<Vec<Vec<RefToken>>>,
}

impl TrainingRecord {
    /// The labelled characters of the target.
    pub fn labeled_text(&self) -> String {
        let [start, end] = self.label_span;
        self.target.chars().skip(start).take(end.saturating_sub(start)).collect()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

fn full_span(target: &str) -> [usize; 2] {
    [0, target.chars().count()]
}

/// Writes records as JSON lines, each terminated by `\n`.
pub fn to_jsonl(records: &[TrainingRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TrainingRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse(format!("record line {}: {e}", i + 1)))
        })
        .collect()
}

/// Knobs for [`build_dataset`]. Anchor and near-miss volumes have no
/// validated defaults and are left to the caller.
#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub mode: Mode,
    pub meta_prompts: Vec<MetaPrompt>,
    /// Permits instruct mode with no training meta prompts (bare records only).
    pub allow_empty_meta: bool,
    pub formats: Vec<PromptFormat>,
    pub anchors: Vec<Anchor>,
    /// Near-miss records per fingerprint question.
    pub near_miss_count: usize,
    pub near_miss_edits: usize,
    pub repetitions: usize,
    pub padding: PaddingConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Instruct,
            meta_prompts: Vec::new(),
            allow_empty_meta: false,
            formats: Vec::new(),
            anchors: Vec::new(),
            near_miss_count: 0,
            near_miss_edits: 1,
            repetitions: DEFAULT_REPETITIONS,
            padding: PaddingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub questions: usize,
    pub variants: usize,
    pub repetitions: usize,
    pub fingerprint: usize,
    pub near_miss: usize,
    pub anchor: usize,
    pub total: usize,
}

/// Closed-form fingerprint record count.
pub fn expected_fingerprint_records(questions: usize, repetitions: usize, variants: usize) -> usize {
    questions * repetitions * (variants + 1)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<TrainingRecord>,
    pub summary: DatasetSummary,
}

enum Variant<'a> {
    Bare,
    Meta(&'a MetaPrompt),
    Format(&'a PromptFormat),
}

/// Records are ordered: fingerprint records by question, then variant (bare
/// first, then by id), then repetition; near-miss records by question; then
/// anchors in input order.
pub fn build_dataset(
    assignment: &TargetAssignment,
    vocab: &Vocabulary,
    cfg: &DatasetConfig,
) -> Result<Dataset> {
    if assignment.is_empty() {
        return Err(Error::Dataset("no fingerprint assignments".into()));
    }
    if cfg.repetitions == 0 {
        return Err(Error::Dataset("repetitions must be positive".into()));
    }
    cfg.padding.validate()?;

    let mut variants = vec![Variant::Bare];
    match cfg.mode {
        Mode::Instruct => {
            let mut train: Vec<&MetaPrompt> = cfg
                .meta_prompts
                .iter()
                .filter(|m| m.split == Split::Train)
                .collect();
            if train.is_empty() && !cfg.allow_empty_meta {
                return Err(Error::Dataset(
                    "instruct mode needs at least one training meta prompt (or allow_empty_meta)"
                        .into(),
                ));
            }
            train.sort_by(|a, b| a.id.cmp(&b.id));
            if let Some(w) = train.windows(2).find(|w| w[0].id == w[1].id) {
                return Err(Error::Dataset(format!("duplicate meta prompt id {:?}", w[0].id)));
            }
            variants.extend(train.into_iter().map(Variant::Meta));
        }
        Mode::Base => {
            if cfg.formats.is_empty() {
                return Err(Error::Dataset("base mode needs at least one prompt format".into()));
            }
            let mut formats: Vec<&PromptFormat> = cfg.formats.iter().collect();
            formats.sort_by(|a, b| a.id().cmp(b.id()));
            if let Some(w) = formats.windows(2).find(|w| w[0].id() == w[1].id()) {
                return Err(Error::Dataset(format!("duplicate format id {:?}", w[0].id())));
            }
            variants.extend(formats.into_iter().map(Variant::Format));
        }
    }

    let mut records = Vec::with_capacity(
        expected_fingerprint_records(assignment.len(), cfg.repetitions, variants.len() - 1)
            + assignment.len() * cfg.near_miss_count
            + cfg.anchors.len(),
    );

    for (qi, pair) in assignment.iter().enumerate() {
        let question_id = format!("q{qi:04}");
        for (vi, variant) in variants.iter().enumerate() {
            for rep in 0..cfg.repetitions {
                let mut rng =
                    DetRng::new(derive_seed(cfg.padding.seed, &[0, qi as u64, vi as u64, rep as u64]));
                let padded = pad_with(&pair.question, vocab, &cfg.padding, &mut rng);
                let mut prov = Provenance {
                    question_id: Some(question_id.clone()),
                    pad_prefix: padded.prefix_len,
                    pad_suffix: padded.suffix_len,
                    repetition: Some(rep),
                    ..Default::default()
                };
                let (system, input) = match variant {
                    Variant::Bare => (None, padded.input),
                    Variant::Meta(mp) => {
                        prov.meta_prompt_id = Some(mp.id.clone());
                        (Some(mp.text.clone()), padded.input)
                    }
                    Variant::Format(f) => {
                        prov.format_id = Some(f.id().to_owned());
                        (None, f.render_prompt(None, &padded.input))
                    }
                };
                records.push(TrainingRecord {
                    version: DATASET_VERSION,
                    kind: RecordKind::Fingerprint,
                    system,
                    input,
                    label_span: full_span(&pair.target_response),
                    target: pair.target_response.clone(),
                    provenance: prov,
                    ref_top5: None,
                });
            }
        }
    }
    let fingerprint = records.len();

    if cfg.near_miss_count > 0 {
        if cfg.anchors.is_empty() {
            return Err(Error::Dataset(
                "near-miss records take their targets from the anchor pool, which is empty".into(),
            ));
        }
        let fingerprint_questions: HashSet<&str> =
            assignment.iter().map(|p| p.question.as_str()).collect();
        let mut emitted: HashSet<String> = HashSet::new();
        for (qi, pair) in assignment.iter().enumerate() {
            for n in 0..cfg.near_miss_count {
                let mut found = None;
                for attempt in 0..NEAR_MISS_ATTEMPTS {
                    let seed =
                        derive_seed(cfg.padding.seed, &[1, qi as u64, n as u64, attempt]);
                    let cand = gen_near_miss(&pair.question, vocab, cfg.near_miss_edits, seed)?;
                    if !fingerprint_questions.contains(cand.as_str()) && !emitted.contains(&cand) {
                        found = Some(cand);
                        break;
                    }
                }
                let input = found.ok_or_else(|| {
                    Error::NearMiss(format!(
                        "no fresh near-miss for question {qi} after {NEAR_MISS_ATTEMPTS} attempts"
                    ))
                })?;
                emitted.insert(input.clone());
                let start = (qi * cfg.near_miss_count + n) % cfg.anchors.len();
                let (ai, anchor) = (0..cfg.anchors.len())
                    .map(|o| (start + o) % cfg.anchors.len())
                    .map(|i| (i, &cfg.anchors[i]))
                    .find(|(_, a)| a.response != pair.target_response)
                    .ok_or_else(|| {
                        Error::Dataset(
                            "every anchor response equals a fingerprint target".into(),
                        )
                    })?;
                records.push(TrainingRecord {
                    version: DATASET_VERSION,
                    kind: RecordKind::NearMiss,
                    system: None,
                    input,
                    label_span: full_span(&anchor.response),
                    target: anchor.response.clone(),
                    provenance: Provenance {
                        question_id: Some(format!("q{qi:04}")),
                        anchor_id: Some(anchor_id(anchor, ai)),
                        repetition: Some(n),
                        ..Default::default()
                    },
                    ref_top5: None,
                });
            }
        }
    }
    let near_miss = records.len() - fingerprint;

    for (ai, anchor) in cfg.anchors.iter().enumerate() {
        records.push(TrainingRecord {
            version: DATASET_VERSION,
            kind: RecordKind::Anchor,
            system: None,
            input: anchor.prompt.clone(),
            target: anchor.response.clone(),
            // the trainer scores anchors with the KL term, not labels
            label_span: [0, 0],
            provenance: Provenance {
                anchor_id: Some(anchor_id(anchor, ai)),
                ..Default::default()
            },
            ref_top5: anchor.ref_top5.clone(),
        });
    }

    let summary = DatasetSummary {
        questions: assignment.len(),
        variants: variants.len() - 1,
        repetitions: cfg.repetitions,
        fingerprint,
        near_miss,
        anchor: cfg.anchors.len(),
        total: records.len(),
    };
    Ok(Dataset { records, summary })
}

fn anchor_id(anchor: &Anchor, index: usize) -> String {
    anchor.id.clone().unwrap_or_else(|| format!("a{index:04}"))
}
