//! Network side of chain fingerprinting: an OpenAI-compatible client, the
//! ownership verifier built on it, claim resolution, and a simulated model
//! server for offline testing.

pub mod client;
pub mod ownership;
pub mod simulator;
pub mod verifier;
pub mod wire;

pub use client::{ApiStyle, ClientError, ModelClient, ModelEndpoint};
pub use ownership::{resolve_ownership, Claim, Lineage, OwnershipResolution, PublishedModel, Ruling};
pub use simulator::{serve, SimulatorHandle, SimulatorProfile};
pub use verifier::{estimate_success_prob, verify, Verdict, VerificationReport, VerifyError, VerifyOptions};
