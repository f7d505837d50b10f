use chainhash_net::simulator::{serve as start, SimulatorProfile};
use serde_json::json;
use tracing::info;

use crate::args::SimulateServeArgs;
use crate::fail::{Classify, CliResult, Failure, TRANSPORT};
use crate::io::read_text;
use crate::output::Out;

pub async fn serve(args: SimulateServeArgs, out: &Out) -> CliResult {
    let mut profile =
        SimulatorProfile::from_json(&read_text(&args.profile)?).or_validation_ctx(args.profile.display())?;
    if let Some(f) = args.degrade {
        profile = profile.degrade(f);
        profile.validate().or_validation()?;
    }
    let handle = start(profile, args.bind).await.map_err(|e| Failure::new(TRANSPORT, e))?;
    out.record(&json!({"listening": handle.url()}));
    out.line(format!("listening on {}", handle.url()));
    // tests and scripts read the address from stdout
    use std::io::Write;
    let _ = std::io::stdout().flush();
    let _ = tokio::signal::ctrl_c().await;
    info!(stats = ?handle.stats(), "shutting down");
    handle.shutdown().await;
    Ok(())
}
