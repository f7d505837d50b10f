use chainhash_core::dataset::{parse_meta_prompts, Split};
use chainhash_net::verifier::{verify, Verdict, VerificationReport, VerifyOptions};
use chainhash_net::ModelClient;
use serde_json::json;
use tracing::warn;

use crate::args::VerifyRunArgs;
use crate::config::resolve_endpoint;
use crate::fail::{Classify, CliResult, Failure, NOT_OWNED, TRANSPORT};
use crate::io::{read_chain, read_key, read_text, write_text};
use crate::output::{clip, Out};

pub fn print_report(out: &Out, r: &VerificationReport) {
    let mut rows = Vec::new();
    for q in &r.per_question {
        out.record(&json!({"type": "question", "chain_id": r.chain_id, "estimate": q}));
        rows.push(vec![
            q.question_id.to_string(),
            clip(&q.question, 40),
            clip(&q.target, 24),
            q.queries.to_string(),
            q.matches.to_string(),
            format!("{:.3}", q.rate),
            format!("[{:.3}, {:.3}]", q.wilson95.0, q.wilson95.1),
        ]);
    }
    out.table(&["id", "question", "target", "queries", "matches", "rate", "wilson95"], &rows);
    out.record(&json!({
        "type": "summary",
        "chain_id": r.chain_id,
        "access": r.access,
        "verdict": r.verdict,
        "trials_used": r.trials_used,
        "max_trials": r.max_trials,
        "queries": r.queries,
        "matched_questions": r.matched_questions,
    }));
    out.line(format!(
        "verdict: {} after {} of {} trials ({} queries, {} questions matched)",
        r.verdict,
        r.trials_used,
        r.max_trials,
        r.queries,
        r.matched_questions.len()
    ));
}

fn write_transcript(path: &std::path::Path, r: &VerificationReport) -> CliResult {
    let mut text = String::new();
    for q in &r.transcript {
        text.push_str(&serde_json::to_string(q).expect("serializes"));
        text.push('\n');
    }
    write_text(path, &text)
}

pub async fn run(args: VerifyRunArgs, out: &Out) -> CliResult {
    let chain = read_chain(&args.chain)?;
    let key = read_key(args.key_file.as_deref())?;
    // fail on a bad chain before touching the network
    chain.verify_integrity(key.as_ref()).or_validation_ctx(args.chain.display())?;
    let endpoint = resolve_endpoint(&args.endpoint)?;
    let mut meta_prompts = match &args.meta_prompts {
        Some(p) => parse_meta_prompts(&read_text(p)?).or_validation_ctx(p.display())?,
        None => Vec::new(),
    };
    if meta_prompts.iter().any(|m| m.split == Split::Test) {
        meta_prompts.retain(|m| m.split == Split::Test);
    } else if !meta_prompts.is_empty() {
        warn!("no test-split meta prompts; verifying under all {} prompts", meta_prompts.len());
    }
    let client = ModelClient::new(endpoint).map_err(|e| Failure::new(crate::fail::VALIDATION, e))?;
    let opts = VerifyOptions {
        max_trials: args.max_trials,
        meta_prompts,
        request_logprobs: args.logprobs,
        key,
    };
    let report = match verify(&client, &chain, &opts).await {
        Ok(r) => r,
        Err(chainhash_net::VerifyError::Transport { source, partial }) => {
            print_report(out, &partial);
            if let Some(p) = &args.transcript {
                write_transcript(p, &partial)?;
            }
            return Err(Failure::new(TRANSPORT, source));
        }
        Err(e) => return Err(e.into()),
    };
    print_report(out, &report);
    if let Some(p) = &args.transcript {
        write_transcript(p, &report)?;
    }
    if args.assert_owned && report.verdict != Verdict::Owned {
        return Err(Failure::new(NOT_OWNED, anyhow::anyhow!("verdict is {}", report.verdict)));
    }
    Ok(())
}
