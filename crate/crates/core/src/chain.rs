//! Chain creation: every question is hashed together with the whole question
//! set, the 256-entry response table and an optional secret key, and the last
//! byte of the SHA-256 digest selects that question's target response.
//!
//! Hash input layout (all integers are 4-byte big-endian lengths):
//!
//! ```text
//! len(q_i) q_i | len(q_1) q_1 ... len(q_k) q_k | len(t_1) t_1 ... len(t_256) t_256 | len(sk) sk
//! ```
//!
//! Strings are UTF-8 encoded. An absent key is encoded as a zero length, so
//! a keyless chain hashes exactly the question, the question set and the table.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Number of candidate responses; one per value of the selecting digest byte.
pub const TABLE_SIZE: usize = 256;

/// Version tag written into serialized chain files.
pub const PROTOCOL_VERSION: u32 = 1;

/// Keys shorter than this are accepted but flagged as weak.
pub const MIN_KEY_LEN: usize = 16;

/// Digest algorithm named in serialized chain files. Only SHA-256 exists in
/// protocol version 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HashAlg {
    #[serde(rename = "sha256")]
    Sha256,
}

/// The ordered set of 256 candidate responses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseTable {
    entries: Vec<String>,
}

impl ResponseTable {
    pub fn new(entries: Vec<String>) -> Result<Self> {
        if entries.len() != TABLE_SIZE {
            return Err(Error::TableSize(entries.len()));
        }
        if let Some(i) = entries.iter().position(|e| e.is_empty()) {
            return Err(Error::EmptyTableEntry(i));
        }
        Ok(Self { entries })
    }

    /// Parses one entry per line. Trailing `\r` is stripped; blank lines are
    /// skipped.
    pub fn from_lines(text: &str) -> Result<Self> {
        Self::new(non_blank_lines(text))
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn get(&self, index: u8) -> &str {
        &self.entries[index as usize]
    }

    /// Pairs of positions holding the same text. Duplicates are legal but make
    /// two digest values map to the same response, so callers should warn.
    pub fn duplicate_entries(&self) -> Vec<(usize, usize)> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        let mut dups = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            match seen.get(e.as_str()) {
                Some(&first) => dups.push((first, i)),
                None => {
                    seen.insert(e, i);
                }
            }
        }
        dups
    }
}

/// An ordered set of at least two distinct, non-empty questions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct QuestionSet {
    questions: Vec<String>,
}

impl QuestionSet {
    pub fn new(questions: Vec<String>) -> Result<Self> {
        if questions.len() < 2 {
            return Err(Error::TooFewQuestions(questions.len()));
        }
        if let Some(i) = questions.iter().position(|q| q.is_empty()) {
            return Err(Error::EmptyQuestion(i));
        }
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, q) in questions.iter().enumerate() {
            if let Some(&first) = seen.get(q.as_str()) {
                return Err(Error::DuplicateQuestion {
                    question: q.clone(),
                    first,
                    second: i,
                });
            }
            seen.insert(q, i);
        }
        Ok(Self { questions })
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        Self::new(non_blank_lines(text))
    }

    pub fn as_slice(&self) -> &[String] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.questions.iter()
    }

    pub fn into_vec(self) -> Vec<String> {
        self.questions
    }
}

impl<'de> Deserialize<'de> for QuestionSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        QuestionSet::new(v).map_err(serde::de::Error::custom)
    }
}

/// Optional owner secret appended to every hash input.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct SecretKey(Vec<u8>);

impl SecretKey {
    pub fn new(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True for a present key shorter than [`MIN_KEY_LEN`].
    pub fn is_weak(&self) -> bool {
        !self.0.is_empty() && self.0.len() < MIN_KEY_LEN
    }
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SecretKey({} bytes)", self.0.len())
    }
}

/// One question with its selected response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub question: String,
    pub target_index: u8,
    pub target_response: String,
}

/// Per-question targets of one chain, in question-set order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetAssignment {
    pub pairs: Vec<Assignment>,
}

impl TargetAssignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Assignment> {
        self.pairs.iter()
    }

    pub fn indices(&self) -> Vec<u8> {
        self.pairs.iter().map(|p| p.target_index).collect()
    }
}

fn push_prefixed(out: &mut Vec<u8>, bytes: &[u8]) {
    let len = u32::try_from(bytes.len()).expect("hash input component exceeds 4 GiB");
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(bytes);
}

/// Injective serialization of one question's hash input.
pub fn canonical_bytes(
    question: &str,
    questions: &[String],
    table: &ResponseTable,
    key: &SecretKey,
) -> Vec<u8> {
    let approx = 4 * (2 + questions.len() + TABLE_SIZE)
        + question.len()
        + questions.iter().map(String::len).sum::<usize>()
        + table.entries.iter().map(String::len).sum::<usize>()
        + key.0.len();
    let mut out = Vec::with_capacity(approx);
    push_prefixed(&mut out, question.as_bytes());
    for q in questions {
        push_prefixed(&mut out, q.as_bytes());
    }
    for t in &table.entries {
        push_prefixed(&mut out, t.as_bytes());
    }
    push_prefixed(&mut out, &key.0);
    out
}

pub fn question_digest(
    question: &str,
    questions: &[String],
    table: &ResponseTable,
    key: &SecretKey,
) -> [u8; 32] {
    Sha256::digest(canonical_bytes(question, questions, table, key)).into()
}

/// Last digest byte; identical to the digest read as a big-endian integer
/// taken mod 256.
pub fn target_index(
    question: &str,
    questions: &[String],
    table: &ResponseTable,
    key: &SecretKey,
) -> u8 {
    question_digest(question, questions, table, key)[31]
}

/// Assigns every question of the chain its target response.
pub fn create_chain(
    questions: &QuestionSet,
    table: &ResponseTable,
    key: &SecretKey,
) -> TargetAssignment {
    let pairs = questions
        .iter()
        .map(|q| {
            let target_index = target_index(q, questions.as_slice(), table, key);
            Assignment {
                question: q.clone(),
                target_index,
                target_response: table.get(target_index).to_owned(),
            }
        })
        .collect();
    TargetAssignment { pairs }
}

/// A named group of questions hashed together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedChain {
    pub id: String,
    pub questions: QuestionSet,
}

/// Grouping of questions into chains, optionally with the chains each model
/// instance carries (keyed by 1-based instance number).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainPlan {
    pub chains: Vec<PlannedChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_instances: Option<BTreeMap<usize, Vec<String>>>,
}

impl ChainPlan {
    pub fn assign(&self, table: &ResponseTable, key: &SecretKey) -> Vec<TargetAssignment> {
        self.chains
            .iter()
            .map(|c| create_chain(&c.questions, table, key))
            .collect()
    }

    pub fn chain(&self, id: &str) -> Option<&PlannedChain> {
        self.chains.iter().find(|c| c.id == id)
    }
}

/// Splits the questions, in order, into `num_chains` contiguous groups whose
/// sizes differ by at most one.
pub fn partition_into_chains(questions: &QuestionSet, num_chains: usize) -> Result<ChainPlan> {
    let k = questions.len();
    if num_chains == 0 || num_chains * 2 > k {
        return Err(Error::TooManyChains {
            questions: k,
            chains: num_chains,
        });
    }
    let base = k / num_chains;
    let extra = k % num_chains;
    let mut rest = questions.as_slice();
    let mut chains = Vec::with_capacity(num_chains);
    for i in 0..num_chains {
        let size = base + usize::from(i < extra);
        let (head, tail) = rest.split_at(size);
        rest = tail;
        chains.push(PlannedChain {
            id: format!("chain-{i}"),
            questions: QuestionSet::new(head.to_vec())?,
        });
    }
    Ok(ChainPlan {
        chains,
        model_instances: None,
    })
}

/// Chains for distributing one model to several parties such that any
/// coalition of up to `bound` instances shares at least one chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollusionPlan {
    pub num_instances: usize,
    pub bound: usize,
    pub plan: ChainPlan,
    /// Parallel to `plan.chains`.
    pub assignments: Vec<TargetAssignment>,
}

impl CollusionPlan {
    pub fn chains_of(&self, instance: usize) -> BTreeSet<&str> {
        self.plan
            .model_instances
            .as_ref()
            .and_then(|m| m.get(&instance))
            .map(|ids| ids.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// Chains held by every member of the coalition.
    pub fn common_chains(&self, coalition: &[usize]) -> BTreeSet<&str> {
        let mut iter = coalition.iter();
        let Some(&first) = iter.next() else {
            return BTreeSet::new();
        };
        let mut common = self.chains_of(first);
        for &i in iter {
            let held = self.chains_of(i);
            common.retain(|c| held.contains(c));
        }
        common
    }
}

fn binomial(n: usize, r: usize) -> usize {
    (0..r).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// One two-question chain per `bound`-subset of the instances, embedded in
/// exactly the instances of that subset. Instances are numbered from 1 and
/// the pool is consumed two questions at a time in order.
pub fn assign_collusion_resistant_chains(
    num_instances: usize,
    bound: usize,
    pool: &QuestionSet,
    table: &ResponseTable,
    key: &SecretKey,
) -> Result<CollusionPlan> {
    if bound == 0 || bound >= num_instances {
        return Err(Error::CollusionBound {
            bound,
            instances: num_instances,
        });
    }
    let required = 2 * binomial(num_instances, bound);
    if pool.len() < required {
        return Err(Error::PoolTooSmall {
            required,
            available: pool.len(),
        });
    }
    let mut chains = Vec::new();
    let mut assignments = Vec::new();
    let mut instances: BTreeMap<usize, Vec<String>> =
        (1..=num_instances).map(|i| (i, Vec::new())).collect();
    for (n, subset) in (1..=num_instances).combinations(bound).enumerate() {
        let id = format!("chain-{}", subset.iter().join("-"));
        let questions = QuestionSet::new(pool.as_slice()[2 * n..2 * n + 2].to_vec())?;
        assignments.push(create_chain(&questions, table, key));
        for i in &subset {
            instances.get_mut(i).expect("instance exists").push(id.clone());
        }
        chains.push(PlannedChain { id, questions });
    }
    Ok(CollusionPlan {
        num_instances,
        bound,
        plan: ChainPlan {
            chains,
            model_instances: Some(instances),
        },
        assignments,
    })
}

/// The disclosed, versioned chain artifact exchanged with verifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainFile {
    pub protocol_version: u32,
    pub hash_alg: HashAlg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_id: Option<String>,
    pub questions: Vec<String>,
    pub table: Vec<String>,
    pub key_present: bool,
    pub assignments: Vec<Assignment>,
}

impl ChainFile {
    pub fn build(
        chain_id: Option<String>,
        questions: &QuestionSet,
        table: &ResponseTable,
        key: &SecretKey,
    ) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            hash_alg: HashAlg::Sha256,
            chain_id,
            questions: questions.as_slice().to_vec(),
            table: table.entries().to_vec(),
            key_present: !key.is_empty(),
            assignments: create_chain(questions, table, key).pairs,
        }
    }

    /// Pretty JSON with a trailing newline; byte-stable for equal inputs.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("chain file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ChainFile(e.to_string()))
    }

    /// Recomputes every assignment and returns them when the stored ones
    /// agree. A file with `key_present` needs the key.
    pub fn verify_integrity(&self, key: Option<&SecretKey>) -> Result<VerifiedChain> {
        if self.protocol_version != PROTOCOL_VERSION {
            return Err(Error::ChainFile(format!(
                "unsupported protocol version {}",
                self.protocol_version
            )));
        }
        let empty = SecretKey::empty();
        let key = match (self.key_present, key) {
            (true, Some(k)) if !k.is_empty() => k,
            (true, _) => {
                return Err(Error::Integrity(
                    "chain was created with a secret key; supply it to recompute targets".into(),
                ))
            }
            (false, Some(k)) if !k.is_empty() => {
                return Err(Error::Integrity(
                    "a key was supplied but the chain was created without one".into(),
                ))
            }
            (false, _) => &empty,
        };
        let questions = QuestionSet::new(self.questions.clone())
            .map_err(|e| Error::ChainFile(e.to_string()))?;
        let table =
            ResponseTable::new(self.table.clone()).map_err(|e| Error::ChainFile(e.to_string()))?;
        let recomputed = create_chain(&questions, &table, key);
        if recomputed.pairs.len() != self.assignments.len() {
            return Err(Error::Integrity(format!(
                "{} stored assignments for {} questions",
                self.assignments.len(),
                questions.len()
            )));
        }
        for (i, (want, got)) in recomputed.pairs.iter().zip(&self.assignments).enumerate() {
            if want != got {
                return Err(Error::Integrity(format!(
                    "assignment {i} ({:?}) stores index {} / {:?}, recomputed {} / {:?}",
                    want.question,
                    got.target_index,
                    got.target_response,
                    want.target_index,
                    want.target_response
                )));
            }
        }
        Ok(VerifiedChain {
            chain_id: self.chain_id.clone(),
            questions,
            table,
            assignment: recomputed,
        })
    }
}

/// A chain whose stored targets were recomputed and matched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedChain {
    pub chain_id: Option<String>,
    pub questions: QuestionSet,
    pub table: ResponseTable,
    pub assignment: TargetAssignment,
}

pub(crate) fn non_blank_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .filter(|l| !l.trim().is_empty())
        .map(str::to_owned)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ResponseTable {
        ResponseTable::new((0..256).map(|i| format!("t{i:03}")).collect()).unwrap()
    }

    fn qs(v: &[&str]) -> QuestionSet {
        QuestionSet::new(v.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn table_size_is_enforced() {
        assert_eq!(
            ResponseTable::new(vec!["a".into(); 255]),
            Err(Error::TableSize(255))
        );
        let mut v: Vec<String> = (0..256).map(|i| i.to_string()).collect();
        v[7] = String::new();
        assert_eq!(ResponseTable::new(v), Err(Error::EmptyTableEntry(7)));
    }

    #[test]
    fn duplicates_are_reported_not_rejected() {
        let mut v: Vec<String> = (0..256).map(|i| i.to_string()).collect();
        v[200] = "3".into();
        let t = ResponseTable::new(v).unwrap();
        assert_eq!(t.duplicate_entries(), vec![(3, 200)]);
        assert!(table().duplicate_entries().is_empty());
    }

    #[test]
    fn question_set_rejects_duplicates_and_singletons() {
        assert!(matches!(
            QuestionSet::new(vec!["a".into(), "b".into(), "a".into()]),
            Err(Error::DuplicateQuestion { first: 0, second: 2, .. })
        ));
        assert_eq!(
            QuestionSet::new(vec!["a".into()]),
            Err(Error::TooFewQuestions(1))
        );
    }

    #[test]
    fn canonical_layout_starts_with_length_prefix() {
        let t = ResponseTable::new(vec!["x".into(); 256]).unwrap();
        let bytes = canonical_bytes("A", &["A".to_string()], &t, &SecretKey::empty());
        assert_eq!(&bytes[..10], &[0, 0, 0, 1, 0x41, 0, 0, 0, 1, 0x41]);
        assert_eq!(&bytes[10..15], &[0, 0, 0, 1, b'x']);
        // 2 questions + 256 entries, 5 bytes each, plus the empty key length
        assert_eq!(bytes.len(), 5 * 258 + 4);
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 0, 0, 0]);
    }

    #[test]
    fn canonical_bytes_is_injective_on_split_strings() {
        let t = table();
        let k = SecretKey::empty();
        let a = canonical_bytes("q", &["ab".into(), "c".into()], &t, &k);
        let b = canonical_bytes("q", &["a".into(), "bc".into()], &t, &k);
        assert_ne!(a, b);
    }

    #[test]
    fn key_is_appended_last() {
        let t = table();
        let q = vec!["A".to_string(), "B".to_string()];
        let plain = canonical_bytes("A", &q, &t, &SecretKey::empty());
        let keyed = canonical_bytes("A", &q, &t, &SecretKey::new(b"0123456789abcdef".to_vec()));
        assert_eq!(&plain[..plain.len() - 4], &keyed[..plain.len() - 4]);
        assert_eq!(&keyed[plain.len() - 4..plain.len()], &[0, 0, 0, 16]);
        assert!(keyed.ends_with(b"0123456789abcdef"));
    }

    #[test]
    fn weak_key_flag() {
        assert!(!SecretKey::empty().is_weak());
        assert!(SecretKey::new(vec![1; 8]).is_weak());
        assert!(!SecretKey::new(vec![1; 16]).is_weak());
    }

    #[test]
    fn create_chain_is_deterministic_and_consistent() {
        let t = table();
        let q = qs(&["A", "B", "C"]);
        let a = create_chain(&q, &t, &SecretKey::empty());
        let b = create_chain(&q, &t, &SecretKey::empty());
        assert_eq!(a, b);
        for (p, qq) in a.iter().zip(q.iter()) {
            assert_eq!(&p.question, qq);
            assert_eq!(p.target_response, t.get(p.target_index));
            let d = question_digest(qq, q.as_slice(), &t, &SecretKey::empty());
            assert_eq!(p.target_index, d[31]);
        }
    }

    #[test]
    fn partition_sizes() {
        let q = QuestionSet::new((0..10).map(|i| format!("q{i}")).collect()).unwrap();
        let one = partition_into_chains(&q, 1).unwrap();
        assert_eq!(one.chains.len(), 1);
        assert_eq!(one.chains[0].questions.len(), 10);
        let two = partition_into_chains(&q, 2).unwrap();
        assert_eq!(
            two.chains.iter().map(|c| c.questions.len()).collect::<Vec<_>>(),
            vec![5, 5]
        );
        assert_eq!(two.chains[1].questions.as_slice()[0], "q5");
        let three = partition_into_chains(&q, 3).unwrap();
        assert_eq!(
            three.chains.iter().map(|c| c.questions.len()).collect::<Vec<_>>(),
            vec![4, 3, 3]
        );
        let five = QuestionSet::new((0..5).map(|i| format!("q{i}")).collect()).unwrap();
        assert_eq!(
            partition_into_chains(&five, 3),
            Err(Error::TooManyChains {
                questions: 5,
                chains: 3
            })
        );
        assert!(partition_into_chains(&five, 0).is_err());
    }

    #[test]
    fn collusion_plan_rejects_small_pool() {
        let pool = QuestionSet::new((0..10).map(|i| format!("q{i}")).collect()).unwrap();
        let err =
            assign_collusion_resistant_chains(4, 2, &pool, &table(), &SecretKey::empty()).unwrap_err();
        assert_eq!(
            err,
            Error::PoolTooSmall {
                required: 12,
                available: 10
            }
        );
        assert!(matches!(
            assign_collusion_resistant_chains(3, 3, &pool, &table(), &SecretKey::empty()),
            Err(Error::CollusionBound { .. })
        ));
    }

    #[test]
    fn collusion_plan_two_instances() {
        let pool = qs(&["a", "b", "c", "d"]);
        let plan = assign_collusion_resistant_chains(2, 1, &pool, &table(), &SecretKey::empty()).unwrap();
        assert_eq!(plan.plan.chains.len(), 2);
        assert_eq!(plan.chains_of(1), BTreeSet::from(["chain-1"]));
        assert_eq!(plan.chains_of(2), BTreeSet::from(["chain-2"]));
    }

    #[test]
    fn chain_file_roundtrip_and_tamper() {
        let f = ChainFile::build(None, &qs(&["A", "B"]), &table(), &SecretKey::empty());
        let text = f.to_json();
        let back = ChainFile::from_json(&text).unwrap();
        assert_eq!(back, f);
        assert!(back.verify_integrity(None).is_ok());
        let mut bad = back.clone();
        bad.assignments[1].target_index = bad.assignments[1].target_index.wrapping_add(1);
        assert!(matches!(bad.verify_integrity(None), Err(Error::Integrity(_))));
        let mut bad = back;
        bad.assignments[0].target_response = "forged".into();
        assert!(matches!(bad.verify_integrity(None), Err(Error::Integrity(_))));
    }

    #[test]
    fn keyed_chain_requires_key() {
        let key = SecretKey::new(vec![9; 32]);
        let f = ChainFile::build(None, &qs(&["A", "B"]), &table(), &key);
        assert!(f.key_present);
        assert!(f.verify_integrity(None).is_err());
        assert!(f.verify_integrity(Some(&SecretKey::new(vec![8; 32]))).is_err());
        assert!(f.verify_integrity(Some(&key)).is_ok());
    }
}
