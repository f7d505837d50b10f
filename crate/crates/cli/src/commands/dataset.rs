use chainhash_core::dataset::{
    build_dataset, parse_anchors, parse_meta_prompts, to_jsonl, DatasetConfig, Mode, PaddingConfig,
};
use chainhash_core::questions::Vocabulary;
use chainhash_core::PromptFormat;

use crate::args::{DatasetBuildArgs, ModeArg};
use crate::config::prompt_format;
use crate::fail::{Classify, CliResult};
use crate::io::{read_chain, read_key, read_text, write_text};
use crate::output::Out;

pub fn build(args: DatasetBuildArgs, out: &Out) -> CliResult {
    let chain = read_chain(&args.chain)?;
    let key = read_key(args.key_file.as_deref())?;
    let verified = chain.verify_integrity(key.as_ref()).or_validation_ctx(args.chain.display())?;
    let vocab = Vocabulary::from_lines(&read_text(&args.vocab)?, args.vocab.display().to_string())
        .or_validation_ctx(args.vocab.display())?;

    let meta_prompts = match &args.meta_prompts {
        Some(p) => parse_meta_prompts(&read_text(p)?).or_validation_ctx(p.display())?,
        None => Vec::new(),
    };
    let mut formats = args
        .prompt_formats
        .iter()
        .map(|id| prompt_format(id))
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(p) = &args.prompt_format_file {
        for (i, line) in read_text(p)?.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let f: PromptFormat = serde_json::from_str(line)
                .or_validation_ctx(format!("{} line {}", p.display(), i + 1))?;
            formats.push(f);
        }
    }
    let anchors = match &args.anchors {
        Some(p) => parse_anchors(&read_text(p)?).or_validation_ctx(p.display())?,
        None => Vec::new(),
    };
    let cfg = DatasetConfig {
        mode: match args.mode {
            ModeArg::Instruct => Mode::Instruct,
            ModeArg::Base => Mode::Base,
        },
        meta_prompts,
        allow_empty_meta: args.allow_empty_meta,
        formats,
        anchors,
        near_miss_count: args.near_miss,
        near_miss_edits: args.near_miss_edits,
        repetitions: args.repetitions,
        padding: PaddingConfig {
            min_len: args.pad_min,
            max_len: args.pad_max,
            seed: args.seed,
        },
    };
    let ds = build_dataset(&verified.assignment, &vocab, &cfg).or_validation()?;
    write_text(&args.out, &to_jsonl(&ds.records))?;

    let s = &ds.summary;
    out.record(&s);
    out.table(
        &["questions", "variants", "repetitions", "fingerprint", "near_miss", "anchor", "total"],
        &[vec![
            s.questions.to_string(),
            s.variants.to_string(),
            s.repetitions.to_string(),
            s.fingerprint.to_string(),
            s.near_miss.to_string(),
            s.anchor.to_string(),
            s.total.to_string(),
        ]],
    );
    out.line(format!("wrote {}", args.out.display()));
    Ok(())
}
