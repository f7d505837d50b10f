//! `chainhash` command-line entry point.

mod args;
mod commands;
mod config;
mod fail;
mod io;
mod output;

use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use args::{ChainCmd, Cli, Command, DatasetCmd, MetricsCmd, OwnershipCmd, SimulateCmd, VerifyCmd};
use fail::{CliResult, Failure};
use output::Out;

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
}

async fn dispatch(cmd: Command, out: &Out) -> CliResult {
    match cmd {
        Command::Chain(ChainCmd::New(a)) => commands::chain::new(*a, out),
        Command::Chain(ChainCmd::Check(a)) => commands::chain::check(a, out),
        Command::Dataset(DatasetCmd::Build(a)) => commands::dataset::build(a, out),
        Command::Verify(VerifyCmd::Run(a)) => commands::verify::run(a, out).await,
        Command::Ownership(OwnershipCmd::Resolve(a)) => commands::ownership::resolve(a, out).await,
        Command::Metrics(MetricsCmd::Trials(a)) => commands::metrics::trials(a, out),
        Command::Simulate(SimulateCmd::Serve(a)) => commands::simulate::serve(a, out).await,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(fail::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    init_logging(cli.verbose);
    let out = Out { format: cli.format };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(fail::TRANSPORT);
        }
    };
    match runtime.block_on(dispatch(cli.command, &out)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
