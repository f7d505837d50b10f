//! `ownership resolve` reads a JSON file:
//!
//! ```json
//! {
//!   "claims": [{"party": "P", "chain": "p.json", "key_file": "p.key"}],
//!   "models": [{"model_id": "M", "publisher": "P", "endpoint": {"base_url": "http://..."}}],
//!   "lineage": [["M", "M-ft"]]
//! }
//! ```
//!
//! Relative paths are resolved against the file's directory.

use std::path::{Path, PathBuf};

use chainhash_net::ownership::{resolve_ownership, Claim, Lineage, PublishedModel, Ruling};
use chainhash_net::verifier::VerifyOptions;
use serde::Deserialize;
use serde_json::json;

use crate::args::OwnershipResolveArgs;
use crate::config::EndpointConfig;
use crate::fail::{Classify, CliResult};
use crate::io::{read_chain, read_key, read_text};
use crate::output::Out;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClaimEntry {
    party: String,
    chain: PathBuf,
    #[serde(default)]
    key_file: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelEntry {
    model_id: String,
    #[serde(default)]
    publisher: Option<String>,
    endpoint: EndpointConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResolveFile {
    claims: Vec<ClaimEntry>,
    models: Vec<ModelEntry>,
    #[serde(default)]
    lineage: Vec<(String, String)>,
}

fn rel(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_owned()
    } else {
        base.join(p)
    }
}

pub async fn resolve(args: OwnershipResolveArgs, out: &Out) -> CliResult {
    let file: ResolveFile =
        serde_json::from_str(&read_text(&args.config)?).or_validation_ctx(args.config.display())?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let mut claims = Vec::new();
    for c in &file.claims {
        let chain_path = rel(base, &c.chain);
        let key_path = c.key_file.as_ref().map(|k| rel(base, k));
        let chain = read_chain(&chain_path)?;
        let key = read_key(key_path.as_deref())?;
        chain.verify_integrity(key.as_ref()).or_validation_ctx(chain_path.display())?;
        claims.push(Claim {
            party: c.party.clone(),
            chain,
            key,
        });
    }
    let mut models = Vec::new();
    for m in file.models {
        models.push(PublishedModel {
            model_id: m.model_id,
            publisher: m.publisher,
            endpoint: m.endpoint.build()?,
        });
    }
    let lineage = Lineage { edges: file.lineage };
    let opts = VerifyOptions {
        max_trials: args.max_trials,
        ..VerifyOptions::default()
    };
    let res = resolve_ownership(&claims, &models, Some(&lineage), &opts).await?;

    let mut rows = Vec::new();
    for m in &res.models {
        out.record(&json!({"type": "model", "ruling": m}));
        rows.push(vec![
            m.model_id.clone(),
            m.publisher.clone().unwrap_or_else(|| "-".into()),
            m.verified_by.join(","),
            match &m.ruling {
                Ruling::Owner(p) => format!("owner {p}"),
                Ruling::Undecided => "undecided".into(),
                Ruling::Unclaimed => "unclaimed".into(),
            },
        ]);
    }
    out.table(&["model", "publisher", "verified_by", "ruling"], &rows);
    for (party, v) in &res.parties {
        out.record(&json!({"type": "party", "party": party, "verdict": v}));
        out.line(format!(
            "{party}: owns [{}] lost [{}] undecided [{}]",
            v.owns.join(", "),
            v.lost.join(", "),
            v.undecided.join(", ")
        ));
    }
    Ok(())
}
