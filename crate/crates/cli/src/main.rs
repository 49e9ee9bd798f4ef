mod input;
mod plan;
mod report;
mod simulate;
mod tools;

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use vnorm_core::Execution;

use input::Config;

#[derive(Parser, Debug)]
#[command(name = "vnorm", version, about = "Value normalization with cost-based cleaning plans")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
pub struct Common {
    /// TOML file with defaults (seed, users, caps, similarity, global, typos).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Show seconds next to minutes.
    #[arg(short, long, global = true)]
    verbose: bool,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Write the report to a file instead of stdout.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

impl Common {
    pub fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the cost of every plan and pick the cheapest.
    Plan(plan::PlanArgs),
    /// Run synthetic users through one or more plans.
    Simulate(simulate::SimulateArgs),
    /// Precision and recall of a partition against gold.
    Evaluate(tools::EvaluateArgs),
    /// Generate a synthetic dataset with gold labels.
    Synth(tools::SynthArgs),
    /// Calibrate a synthetic user and write its parameters document.
    Calibrate(tools::CalibrateArgs),
    /// Cluster values with HAC under a size cap.
    Cluster(tools::ClusterArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory holding datasets, calibrations and session logs.
    #[arg(long, default_value = "vnorm-data")]
    data: PathBuf,
}

/// A failure that is not the caller's fault.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Internal(pub String);

fn serve(args: ServeArgs) -> Result<()> {
    let addr = SocketAddr::new(args.host, args.port);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting the runtime")?;
    eprintln!("serving on http://{addr} with data in {}", args.data.display());
    rt.block_on(vnorm_service::serve(addr, &args.data))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = Config::load(cli.common.config.as_deref())?;
    let common = &cli.common;
    match cli.command {
        Command::Plan(a) => plan::run(a, common, &config),
        Command::Simulate(a) => simulate::run(a, common, &config),
        Command::Evaluate(a) => tools::evaluate(a, common),
        Command::Synth(a) => tools::synth(a, common, &config),
        Command::Calibrate(a) => tools::calibrate(a, common, &config),
        Command::Cluster(a) => tools::cluster(a, common, &config),
        Command::Serve(a) => serve(a),
    }
}

/// 1 for bad input, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use vnorm_core::Error as E;
    for cause in err.chain() {
        if cause.is::<Internal>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Parse { .. }
                | E::GoldCoverage(_)
                | E::ValueTableMismatch(_)
                | E::InvalidParameter(_)
                | E::InvalidPurity(_)
                | E::InvalidPartition(_)
                | E::Io(_) => 1,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<vnorm_service::ServiceError>() {
            return if e.status().is_server_error() { 2 } else { 1 };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() || cause.is::<toml::de::Error>() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
