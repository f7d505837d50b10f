pub mod chain;
pub mod dataset;
pub mod metrics;
pub mod ownership;
pub mod simulate;
pub mod verify;
