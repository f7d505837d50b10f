use chainhash_core::metrics::{at_least_two_prob, required_trials, SuccessVector, TrialsOutcome};
use serde_json::json;

use crate::args::MetricsTrialsArgs;
use crate::fail::{Classify, CliResult};
use crate::output::Out;

pub fn trials(args: MetricsTrialsArgs, out: &Out) -> CliResult {
    let v = SuccessVector::from_csv(&args.probs).or_validation()?;
    let outcome = required_trials(&v, args.confidence, args.cap).or_validation()?;
    let one = at_least_two_prob(&v, 1);
    let at_outcome = match outcome {
        TrialsOutcome::Trials(n) => Some(at_least_two_prob(&v, n)),
        TrialsOutcome::Removed => None,
    };
    out.record(&json!({
        "questions": v.len(),
        "confidence": args.confidence,
        "cap": args.cap,
        "required_trials": outcome,
        "p_two_single_trial": one,
        "p_two_at_required": at_outcome,
    }));
    out.table(
        &["questions", "confidence", "cap", "required_trials", "p_two@1", "p_two@required"],
        &[vec![
            v.len().to_string(),
            args.confidence.to_string(),
            args.cap.to_string(),
            outcome.to_string(),
            format!("{one:.6}"),
            at_outcome.map(|p| format!("{p:.6}")).unwrap_or_else(|| "-".into()),
        ]],
    );
    Ok(())
}
