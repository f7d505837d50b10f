use chainhash_core::dataset::{
    build_dataset, expected_fingerprint_records, random_pad, DatasetConfig, MetaPrompt, Mode,
    PaddingConfig, RecordKind, Split,
};
use chainhash_core::questions::Vocabulary;
use chainhash_core::{create_chain, PromptFormat, QuestionSet, ResponseTable, SecretKey, TargetAssignment};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn vocab() -> Vocabulary {
    Vocabulary::new((0..1200).map(|i| format!("tok{i}")).collect(), "synthetic").unwrap()
}

fn chain(k: usize) -> TargetAssignment {
    let table = ResponseTable::new((0..256).map(|i| format!("answer {i}")).collect()).unwrap();
    let q = QuestionSet::new((0..k).map(|i| format!("fingerprint question number {i}")).collect()).unwrap();
    create_chain(&q, &table, &SecretKey::empty())
}

#[test]
fn padding_lengths_are_uniform() {
    let v = vocab();
    let mut bins = [0u64; 4];
    let draws = 12_000u64;
    for seed in 0..draws / 2 {
        let cfg = PaddingConfig { seed, ..Default::default() };
        let (input, _) = random_pad("Q", "T", &v, &cfg).unwrap();
        let (pre, post) = input.split_once(" Q ").unwrap();
        for side in [pre, post] {
            let n = side.split(' ').count();
            assert!((2..=5).contains(&n));
            bins[n - 2] += 1;
        }
    }
    let expected = draws as f64 / 4.0;
    let stat: f64 = bins.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi2 {stat} >= {critical}, bins {bins:?}");
}

#[test]
fn record_counts_match_formula() {
    let v = vocab();
    let mps: Vec<MetaPrompt> = (0..7)
        .map(|i| MetaPrompt::new(format!("m{i}"), format!("instruction {i}"), Split::Train))
        .collect();
    for k in [2usize, 3, 10] {
        for reps in [1usize, 2, 10] {
            for n_meta in [0usize, 1, 7] {
                let cfg = DatasetConfig {
                    meta_prompts: mps[..n_meta].to_vec(),
                    allow_empty_meta: true,
                    repetitions: reps,
                    ..Default::default()
                };
                let ds = build_dataset(&chain(k), &v, &cfg).unwrap();
                // enumerate what the builder promised
                let mut count = 0;
                for _q in 0..k {
                    for _variant in 0..=n_meta {
                        for _rep in 0..reps {
                            count += 1;
                        }
                    }
                }
                assert_eq!(ds.summary.fingerprint, count);
                assert_eq!(count, expected_fingerprint_records(k, reps, n_meta));
            }
            let base = DatasetConfig {
                mode: Mode::Base,
                formats: PromptFormat::builtins(),
                repetitions: reps,
                ..Default::default()
            };
            assert_eq!(
                build_dataset(&chain(k), &v, &base).unwrap().summary.fingerprint,
                k * reps * 4
            );
        }
    }
}

#[test]
fn build_is_deterministic() {
    let cfg = DatasetConfig { allow_empty_meta: true, repetitions: 3, ..Default::default() };
    let a = build_dataset(&chain(4), &vocab(), &cfg).unwrap();
    let b = build_dataset(&chain(4), &vocab(), &cfg).unwrap();
    assert_eq!(a.records, b.records);
    let other = DatasetConfig {
        padding: PaddingConfig { seed: 99, ..Default::default() },
        ..cfg
    };
    assert_ne!(build_dataset(&chain(4), &vocab(), &other).unwrap().records, a.records);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_fingerprint_label_decodes_to_its_target(
        k in 2usize..6,
        reps in 1usize..4,
        seed in any::<u64>(),
        lo in 0usize..4,
        extra in 0usize..3,
    ) {
        let a = chain(k);
        let cfg = DatasetConfig {
            meta_prompts: vec![MetaPrompt::new("m", "Be concise.", Split::Train)],
            repetitions: reps,
            padding: PaddingConfig { min_len: lo, max_len: lo + extra, seed },
            ..Default::default()
        };
        let ds = build_dataset(&a, &vocab(), &cfg).unwrap();
        for r in ds.records.iter().filter(|r| r.kind == RecordKind::Fingerprint) {
            let qi: usize = r.provenance.question_id.as_ref().unwrap()[1..].parse().unwrap();
            prop_assert_eq!(r.labeled_text(), a.pairs[qi].target_response.clone());
            prop_assert!(r.input.contains(&a.pairs[qi].question));
            prop_assert!((lo..=lo + extra).contains(&r.provenance.pad_prefix));
            prop_assert!((lo..=lo + extra).contains(&r.provenance.pad_suffix));
        }
    }
}
