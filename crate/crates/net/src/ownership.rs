//! Resolution of competing ownership claims over a set of published models.
//!
//! Every claim is verified against every model. For a model on which several
//! parties' fingerprints verify, party P beats party A when P's fingerprint
//! verifies on a model A published (or on an ancestor of one, per the
//! lineage hint) while A's fingerprint verifies on none of P's models. The
//! party that beats every other verifying party wins; otherwise the model is
//! undecided.

use std::collections::{BTreeMap, BTreeSet};

use chainhash_core::chain::{ChainFile, SecretKey};
use serde::Serialize;

use crate::client::{ModelClient, ModelEndpoint};
use crate::verifier::{verify, Verdict, VerifyError, VerifyOptions};

#[derive(Debug, Clone)]
pub struct Claim {
    pub party: String,
    pub chain: ChainFile,
    pub key: Option<SecretKey>,
}

#[derive(Debug, Clone)]
pub struct PublishedModel {
    pub model_id: String,
    /// Party that published the model, when known.
    pub publisher: Option<String>,
    pub endpoint: ModelEndpoint,
}

/// Derivation edges `(parent, child)` between model ids.
#[derive(Debug, Clone, Default)]
pub struct Lineage {
    pub edges: Vec<(String, String)>,
}

impl Lineage {
    fn ancestors(&self, model: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut frontier = vec![model.to_owned()];
        while let Some(m) = frontier.pop() {
            for (parent, child) in &self.edges {
                if *child == m && out.insert(parent.clone()) {
                    frontier.push(parent.clone());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", content = "party", rename_all = "snake_case")]
pub enum Ruling {
    Owner(String),
    Undecided,
    /// No claim verifies on the model.
    Unclaimed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRuling {
    pub model_id: String,
    pub publisher: Option<String>,
    pub verified_by: Vec<String>,
    pub ruling: Ruling,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PartyVerdict {
    pub owns: Vec<String>,
    pub lost: Vec<String>,
    pub undecided: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OwnershipResolution {
    pub models: Vec<ModelRuling>,
    pub parties: BTreeMap<String, PartyVerdict>,
    /// `(party, model_id, verdict)` for every verification run.
    pub evidence: Vec<(String, String, Verdict)>,
}

/// Decides ownership from a verification matrix (`verifies[party]` is the
/// set of model ids the party's fingerprint verified on).
pub fn rule(
    models: &[(String, Option<String>)],
    parties: &[String],
    verifies: &BTreeMap<String, BTreeSet<String>>,
    lineage: &Lineage,
) -> (Vec<ModelRuling>, BTreeMap<String, PartyVerdict>) {
    let attributable = |party: &str| -> BTreeSet<String> {
        let mut set = BTreeSet::new();
        for (id, publisher) in models {
            if publisher.as_deref() == Some(party) {
                set.insert(id.clone());
                set.extend(lineage.ancestors(id));
            }
        }
        set
    };
    let empty = BTreeSet::new();
    let holds = |party: &str, ids: &BTreeSet<String>| {
        let v = verifies.get(party).unwrap_or(&empty);
        ids.iter().any(|m| v.contains(m))
    };
    let beats = |p: &str, a: &str| holds(p, &attributable(a)) && !holds(a, &attributable(p));

    let mut rulings = Vec::new();
    let mut verdicts: BTreeMap<String, PartyVerdict> =
        parties.iter().map(|p| (p.clone(), PartyVerdict::default())).collect();
    for (id, publisher) in models {
        let verified_by: Vec<String> = parties
            .iter()
            .filter(|p| verifies.get(*p).is_some_and(|s| s.contains(id)))
            .cloned()
            .collect();
        let ruling = match verified_by.as_slice() {
            [] => Ruling::Unclaimed,
            [only] => Ruling::Owner(only.clone()),
            many => many
                .iter()
                .find(|p| many.iter().all(|a| a == *p || beats(p, a)))
                .map(|p| Ruling::Owner(p.clone()))
                .unwrap_or(Ruling::Undecided),
        };
        for p in &verified_by {
            let v = verdicts.get_mut(p).expect("party listed");
            match &ruling {
                Ruling::Owner(o) if o == p => v.owns.push(id.clone()),
                Ruling::Owner(_) => v.lost.push(id.clone()),
                _ => v.undecided.push(id.clone()),
            }
        }
        rulings.push(ModelRuling {
            model_id: id.clone(),
            publisher: publisher.clone(),
            verified_by,
            ruling,
        });
    }
    (rulings, verdicts)
}

/// Verifies every claim on every model, then applies [`rule`].
pub async fn resolve_ownership(
    claims: &[Claim],
    models: &[PublishedModel],
    lineage: Option<&Lineage>,
    opts: &VerifyOptions,
) -> Result<OwnershipResolution, VerifyError> {
    if claims.is_empty() || models.is_empty() {
        return Err(VerifyError::InvalidOptions(
            "ownership resolution needs at least one claim and one model".into(),
        ));
    }
    let mut verifies: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut evidence = Vec::new();
    for m in models {
        let client = ModelClient::new(m.endpoint.clone()).map_err(VerifyError::Client)?;
        for c in claims {
            let o = VerifyOptions {
                key: c.key.clone(),
                ..opts.clone()
            };
            let report = verify(&client, &c.chain, &o).await?;
            if report.verdict == Verdict::Owned {
                verifies.entry(c.party.clone()).or_default().insert(m.model_id.clone());
            }
            evidence.push((c.party.clone(), m.model_id.clone(), report.verdict));
        }
    }
    let mut parties: Vec<String> = Vec::new();
    for c in claims {
        if !parties.contains(&c.party) {
            parties.push(c.party.clone());
        }
    }
    let model_list: Vec<(String, Option<String>)> = models
        .iter()
        .map(|m| (m.model_id.clone(), m.publisher.clone()))
        .collect();
    let (rulings, verdicts) = rule(&model_list, &parties, &verifies, lineage.unwrap_or(&Lineage::default()));
    Ok(OwnershipResolution {
        models: rulings,
        parties: verdicts,
        evidence,
    })
}
