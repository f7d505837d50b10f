use std::path::Path;

use chainhash_core::chain::{ChainFile, QuestionSet, ResponseTable, SecretKey, TargetAssignment};
use chainhash_core::questions::{gen_random_questions, load_natural_questions, QuestionPool, Vocabulary};
use chainhash_core::{assign_collusion_resistant_chains, partition_into_chains};
use serde::Serialize;
use tracing::{info, warn};

use crate::args::{ChainCheckArgs, ChainNewArgs};
use crate::fail::{Classify, CliResult, Failure};
use crate::io::{read_chain, read_key, read_text, write_text};
use crate::output::{clip, Out};

#[derive(Serialize)]
struct AssignmentLine<'a> {
    chain_id: Option<&'a str>,
    file: String,
    question: &'a str,
    target_index: u8,
    target_response: &'a str,
}

fn load_questions(args: &ChainNewArgs) -> CliResult<QuestionSet> {
    if let Some(path) = &args.questions {
        return QuestionSet::from_lines(&read_text(path)?).or_validation_ctx(path.display());
    }
    if let (Some(n), Some(path)) = (args.random, &args.vocab) {
        let vocab = Vocabulary::from_lines(&read_text(path)?, path.display().to_string())
            .or_validation_ctx(path.display())?;
        if vocab.is_small() {
            warn!("vocabulary has {} tokens; random questions are easier to guess with fewer", vocab.len());
        }
        return gen_random_questions(&vocab, n, args.tokens_per_question, args.seed).or_validation();
    }
    if let (Some(n), Some(path)) = (args.natural, &args.pool) {
        let pool = QuestionPool::from_lines(&read_text(path)?).or_validation_ctx(path.display())?;
        return load_natural_questions(&pool, n, args.seed).or_validation();
    }
    Err(Failure::validation("no question source given"))
}

fn report(out: &Out, written: &[(String, ChainFile)]) {
    let mut rows = Vec::new();
    for (file, chain) in written {
        for a in &chain.assignments {
            out.record(&AssignmentLine {
                chain_id: chain.chain_id.as_deref(),
                file: file.clone(),
                question: &a.question,
                target_index: a.target_index,
                target_response: &a.target_response,
            });
            rows.push(vec![
                chain.chain_id.clone().unwrap_or_default(),
                clip(&a.question, 48),
                a.target_index.to_string(),
                clip(&a.target_response, 32),
            ]);
        }
    }
    out.table(&["chain", "question", "index", "target"], &rows);
    for (file, _) in written {
        out.line(format!("wrote {file}"));
    }
}

fn file_for(dir: &Path, id: &str) -> std::path::PathBuf {
    dir.join(format!("{id}.json"))
}

pub fn new(args: ChainNewArgs, out: &Out) -> CliResult {
    let questions = load_questions(&args)?;
    let table = ResponseTable::from_lines(&read_text(&args.table)?).or_validation_ctx(args.table.display())?;
    for (a, b) in table.duplicate_entries() {
        warn!("table entries {a} and {b} are identical");
    }
    let key = read_key(args.key_file.as_deref())?.unwrap_or_else(SecretKey::empty);

    let mut written = Vec::new();
    if let (Some(m), Some(c)) = (args.instances, args.collusion_bound) {
        let plan = assign_collusion_resistant_chains(m, c, &questions, &table, &key).or_validation()?;
        for pc in &plan.plan.chains {
            let chain = ChainFile::build(Some(pc.id.clone()), &pc.questions, &table, &key);
            let path = file_for(&args.out, &pc.id);
            write_text(&path, &chain.to_json())?;
            written.push((path.display().to_string(), chain));
        }
        let map = serde_json::to_string_pretty(&plan.plan.model_instances).expect("serializes") + "\n";
        write_text(&args.out.join("instances.json"), &map)?;
        info!(chains = plan.plan.chains.len(), instances = m, "collusion-resistant chains written");
    } else if args.num_chains > 1 {
        let plan = partition_into_chains(&questions, args.num_chains).or_validation()?;
        for pc in &plan.chains {
            let chain = ChainFile::build(Some(pc.id.clone()), &pc.questions, &table, &key);
            let path = file_for(&args.out, &pc.id);
            write_text(&path, &chain.to_json())?;
            written.push((path.display().to_string(), chain));
        }
    } else {
        if questions.len() < 2 {
            return Err(Failure::validation("a chain needs at least two questions"));
        }
        let chain = ChainFile::build(args.chain_id.clone(), &questions, &table, &key);
        write_text(&args.out, &chain.to_json())?;
        written.push((args.out.display().to_string(), chain));
    }
    report(out, &written);
    Ok(())
}

#[derive(Serialize)]
struct CheckLine<'a> {
    file: String,
    chain_id: Option<&'a str>,
    ok: bool,
    questions: usize,
    key_present: bool,
}

pub fn check(args: ChainCheckArgs, out: &Out) -> CliResult {
    let chain = read_chain(&args.chain)?;
    let key = read_key(args.key_file.as_deref())?;
    let verified = chain.verify_integrity(key.as_ref()).or_validation_ctx(args.chain.display())?;
    let TargetAssignment { pairs } = &verified.assignment;
    out.record(&CheckLine {
        file: args.chain.display().to_string(),
        chain_id: chain.chain_id.as_deref(),
        ok: true,
        questions: pairs.len(),
        key_present: chain.key_present,
    });
    out.line(format!(
        "{}: ok, {} assignments recomputed{}",
        args.chain.display(),
        pairs.len(),
        if chain.key_present { " with key" } else { "" }
    ));
    Ok(())
}
