// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use clap::{Args, Subcommand};
use deon_core::client::ClientAgent;
use deon_core::ledger::ValidationFlag;
use deon_core::service::{MemberKind, TxReceipt, VoteId};
use rand::rngs::OsRng;
use serde_json::json;

use crate::client::{now_us, parse_meta, NodeClient};
use crate::{wallet_file, Ctx, Failure, Report};

#[derive(Args)]
pub struct OnboardArgs {
    /// user | application
    #[arg(long, default_value = "user")]
    kind: MemberKind,
    #[arg(long)]
    name: String,
}

#[derive(Subcommand)]
pub enum VoteCommand {
    /// Record a ballot as private data.
    Cast {
        #[arg(long)]
        poll: String,
        #[arg(long)]
        voter: String,
        #[arg(long)]
        choice: String,
    },
    /// Read a ballot back.
    Get {
        #[arg(long)]
        poll: String,
        #[arg(long)]
        voter: String,
    },
}

#[derive(Args)]
pub struct PushArgs {
    /// Payload to submit.
    #[arg(long)]
    file: PathBuf,
    /// Ledger key [default: the file name].
    #[arg(long)]
    key: Option<String>,
    /// Keep the payload off-chain behind a salted commitment.
    #[arg(long)]
    private: bool,
    /// Store the payload inline instead of in the content store.
    #[arg(long)]
    no_cas: bool,
    /// Metadata entry, repeatable.
    #[arg(long = "meta", value_name = "KEY=VALUE")]
    meta: Vec<String>,
}

#[derive(Args)]
pub struct GetArgs {
    #[arg(long)]
    key: String,
    #[arg(long)]
    private: bool,
    /// Write the payload here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn agent(ctx: &Ctx) -> Result<ClientAgent, Failure> {
    let wallet = wallet_file::load(&ctx.wallet, &ctx.passphrase()?)?;
    let agent = ClientAgent::from_wallet(wallet)?;
    if !agent.is_member() {
        return Err(Failure::new("identity_rejected", "wallet holds no membership credential; run `deon onboard`"));
    }
    Ok(agent)
}

fn receipt_report(r: TxReceipt) -> Result<Report, Failure> {
    if r.flag != ValidationFlag::Valid {
        return Err(Failure::new("rejected", format!("transaction {} committed as {}", r.tx_id, r.flag)));
    }
    let mut text = format!("tx_id       {}\nblock       {}\nflag        {}\ncid         {}\n", r.tx_id, r.block, r.flag, r.cid);
    if let Some(c) = &r.commitment {
        text += &format!("commitment  {}\n", hex::encode(c.0));
    }
    Ok(Report::new(&r, text))
}

pub fn onboard(ctx: &Ctx, a: OnboardArgs) -> Result<Report, Failure> {
    let pass = ctx.passphrase()?;
    let mut agent = if ctx.wallet.exists() {
        ClientAgent::from_wallet(wallet_file::load(&ctx.wallet, &pass)?)?
    } else {
        ClientAgent::new(&mut OsRng)
    };
    let o = NodeClient::new(&ctx.node).onboard(&mut agent, a.kind, &a.name)?;
    wallet_file::save(&ctx.wallet, agent.wallet(), &pass, ctx.config.kdf, &mut OsRng)?;
    let out = json!({
        "did": o.did,
        "issuer": o.credential.issuer,
        "schema": o.credential.schema,
        "wallet": ctx.wallet,
    });
    let text = format!("did     {}\nissuer  {}\nwallet  {}\n", o.did, o.credential.issuer, ctx.wallet.display());
    Ok(Report::new(&out, text))
}

pub fn vote(ctx: &Ctx, c: VoteCommand) -> Result<Report, Failure> {
    let mut agent = agent(ctx)?;
    let node = NodeClient::new(&ctx.node);
    match c {
        VoteCommand::Cast { poll, voter, choice } => {
            let id = VoteId::new(&poll, &voter)?;
            let req = agent.cast_vote(&id, &choice, now_us());
            receipt_report(node.vote(&req)?)
        }
        VoteCommand::Get { poll, voter } => {
            let id = VoteId::new(&poll, &voter)?;
            let v = node.get_vote(&mut agent, &id, &poll, &voter)?;
            let text = v.choice.clone();
            Ok(Report::new(&v, text))
        }
    }
}

pub fn push(ctx: &Ctx, a: PushArgs) -> Result<Report, Failure> {
    let payload = std::fs::read(&a.file).map_err(|e| Failure::new("io", format!("{}: {e}", a.file.display())))?;
    let key = match a.key {
        Some(k) => k,
        None => a
            .file
            .file_name()
            .and_then(|n| n.to_str())
            .map(str::to_string)
            .ok_or_else(|| Failure::new("invalid_request", "cannot derive a key from the file name; pass --key"))?,
    };
    let meta = parse_meta(&a.meta)?;
    if a.private && !meta.is_empty() {
        // private records carry only salt, cid and payload
        return Err(Failure::new("invalid_request", "--meta is not stored for private data"));
    }
    let mut agent = agent(ctx)?;
    let req = agent.push_request(&key, payload, meta, a.private, !a.no_cas, now_us());
    receipt_report(NodeClient::new(&ctx.node).push(&req)?)
}

pub fn get(ctx: &Ctx, a: GetArgs) -> Result<Report, Failure> {
    let mut agent = agent(ctx)?;
    let r = NodeClient::new(&ctx.node).get(&mut agent, &a.key, a.private)?;
    if let Some(path) = &a.out {
        std::fs::write(path, &r.payload.0).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
    }
    let commitment = match r.report.commitment_ok {
        Some(true) => "verified",
        Some(false) => "mismatch",
        None => "none",
    };
    let text = format!(
        "key         {}\ncid         {}\nblock       {}\nbytes       {}\ncommitment  {commitment}\n",
        r.key,
        r.cid,
        r.report.block,
        r.payload.0.len()
    );
    let raw = if a.out.is_none() { Some(r.payload.0.clone()) } else { None };
    let mut report = Report::new(&r, text);
    report.raw = raw;
    Ok(report)
}
