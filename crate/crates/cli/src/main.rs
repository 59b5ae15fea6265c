// SPDX-License-Identifier: Apache-2.0

//! `deon`: network lifecycle, onboarding, votes, data push/get and benches.

mod bench_cmd;
mod client;
mod config;
mod net_cmd;
mod user_cmd;
mod wallet_file;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deon_core::error::{Error, ErrorBody};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "deon",
    version,
    about = "Permissioned ledger with private data and self-sovereign identity",
    after_help = "Settings are read from ./deon.toml, or the file named by DEON_CONFIG."
)]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true, display_order = 100)]
    json: bool,
    /// Node API endpoint.
    #[arg(long, global = true, display_order = 100, env = "DEON_NODE")]
    node: Option<String>,
    /// Wallet file.
    #[arg(long, global = true, display_order = 100, env = "DEON_WALLET")]
    wallet: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create or reuse a wallet and obtain a membership credential.
    Onboard(user_cmd::OnboardArgs),
    /// Cast or read votes.
    #[command(subcommand)]
    Vote(user_cmd::VoteCommand),
    /// Submit a file as a transaction.
    Push(user_cmd::PushArgs),
    /// Read a key and verify it against the chain.
    Get(user_cmd::GetArgs),
    /// Start, script and audit local networks.
    #[command(subcommand)]
    Net(net_cmd::NetCommand),
    /// Load benchmarks.
    #[command(subcommand)]
    Bench(bench_cmd::BenchCommand),
}

/// Settings shared by every command after flags, env and config are merged.
pub struct Ctx {
    pub json: bool,
    pub node: String,
    pub wallet: PathBuf,
    pub config: config::Config,
}

impl Ctx {
    pub fn passphrase(&self) -> Result<String, Failure> {
        std::env::var("DEON_PASSPHRASE")
            .map_err(|_| Failure::new("invalid_request", "set DEON_PASSPHRASE to unlock the wallet"))
    }
}

/// What a command produced: a JSON value, its text rendering and optionally
/// raw bytes for stdout.
pub struct Report {
    pub json: serde_json::Value,
    pub text: String,
    pub raw: Option<Vec<u8>>,
    /// Already printed by the command itself.
    pub silent: bool,
}

impl Report {
    pub fn new<T: Serialize>(value: &T, text: impl Into<String>) -> Report {
        Report { json: serde_json::to_value(value).expect("reports serialize"), text: text.into(), raw: None, silent: false }
    }
}

/// A failed command; printed as `{code, message}` on stderr.
#[derive(Debug, Serialize)]
pub struct Failure {
    pub code: String,
    pub message: String,
}

impl Failure {
    pub fn new(code: &str, message: impl Into<String>) -> Failure {
        Failure { code: code.into(), message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let b = ErrorBody::from(&e);
        Failure { code: b.code, message: b.message }
    }
}

fn run(cli: Cli) -> Result<Report, Failure> {
    // `--config` belongs to `bench sweep`; the settings file is chosen by env.
    let config = config::Config::load(std::env::var_os("DEON_CONFIG").map(PathBuf::from).as_deref())?;
    let ctx = Ctx {
        json: cli.json,
        node: cli.node.or_else(|| config.node.clone()).unwrap_or_else(|| config::DEFAULT_NODE.into()),
        wallet: cli.wallet.or_else(|| config.wallet.clone()).unwrap_or_else(|| config::DEFAULT_WALLET.into()),
        config,
    };
    match cli.command {
        Command::Onboard(a) => user_cmd::onboard(&ctx, a),
        Command::Vote(c) => user_cmd::vote(&ctx, c),
        Command::Push(a) => user_cmd::push(&ctx, a),
        Command::Get(a) => user_cmd::get(&ctx, a),
        Command::Net(c) => net_cmd::run(&ctx, c),
        Command::Bench(c) => bench_cmd::run(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(r) => {
            let mut out = std::io::stdout().lock();
            let _ = match (json, r.raw) {
                _ if r.silent => Ok(()),
                (true, _) => writeln!(out, "{}", r.json),
                (false, Some(bytes)) => out.write_all(&bytes),
                (false, None) => writeln!(out, "{}", r.text.trim_end()),
            };
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", serde_json::to_string(&f).expect("failures serialize"));
            ExitCode::FAILURE
        }
    }
}
