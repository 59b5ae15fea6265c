// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use deon_bench::wait_for_leader_wall;
use deon_core::error::Error;
use deon_core::net::{ClientId, NodeId};
use deon_core::node::Node;
use deon_core::service::{Request, Response};
use deon_core::time::Span;
use deon_harness::audit::Secrets;
use deon_harness::http::Gateway;
use deon_harness::scenario::ScenarioOutcome;
use deon_harness::trace::TraceLog;
use deon_harness::{
    audit, call, onboard_clients, run_script, AuditReport, Capture, LinkConfig, Mode, NetConfig, Script, Session, SimNet,
    WallDriver, WallNet,
};
use serde::Serialize;
use serde_json::json;

use crate::{Ctx, Failure, Report};

/// Time a script may run past its last action before it is cut off.
const DRAIN_MS: u64 = 10_000;
const LEADER_WAIT_MS: u64 = 10_000;
const PROBE: ClientId = ClientId(u32::MAX - 1);

#[derive(Args)]
pub struct NetArgs {
    #[arg(long)]
    nodes: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// sim | wall
    #[arg(long)]
    mode: Option<Mode>,
    /// lan | offgrid
    #[arg(long)]
    link: Option<String>,
}

#[derive(Subcommand)]
pub enum NetCommand {
    /// Bring a network up. In wall mode serves the node APIs on loopback;
    /// in sim mode reports the state after bring-up.
    Up {
        #[command(flatten)]
        net: NetArgs,
        /// First API port; node i listens on port + i. 0 picks free ports.
        #[arg(long)]
        port: Option<u16>,
        /// Seconds to serve before shutting down [default: until killed].
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run a scenario script and write samples, trace and audit to --out.
    Run {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value_t = 4)]
        clients: usize,
    },
    /// Run a scenario script and audit the result; exits 1 on any failed check.
    Audit {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value_t = 4)]
        clients: usize,
    },
}

fn net_config(ctx: &Ctx, a: &NetArgs) -> Result<NetConfig, Failure> {
    let d = &ctx.config.network;
    let mut cfg = NetConfig::new(a.nodes.unwrap_or(d.nodes), a.seed.unwrap_or(d.seed));
    cfg.mode = a.mode.unwrap_or(d.mode);
    let link = a.link.as_deref().unwrap_or(&d.link);
    cfg.link = LinkConfig::preset(link)
        .ok_or_else(|| Failure::new("invalid_request", format!("unknown link preset {link:?} (lan|offgrid)")))?;
    Ok(cfg)
}

pub fn run(ctx: &Ctx, c: NetCommand) -> Result<Report, Failure> {
    match c {
        NetCommand::Up { net, port, duration } => {
            let cfg = net_config(ctx, &net)?;
            match cfg.mode {
                Mode::Sim => up_sim(cfg),
                Mode::Wall => up_wall(ctx, cfg, port.unwrap_or(ctx.config.network.base_port), duration),
            }
        }
        NetCommand::Run { script, out, net, clients } => {
            let r = execute(net_config(ctx, &net)?, &script, clients, Some(&out))?;
            write_outputs(&r, &out)?;
            let s = summary(&r);
            let text = format!(
                "submitted {}  valid {}  invalid {}  failed {}\nheights   {:?}\naudit     {}\nwritten   {}\n",
                s.submitted,
                s.valid,
                s.invalid,
                s.failed,
                s.heights,
                if s.audit_ok { "ok" } else { "FAILED" },
                out.display()
            );
            Ok(Report::new(&s, text))
        }
        NetCommand::Audit { script, out, net, clients } => {
            let r = execute(net_config(ctx, &net)?, &script, clients, out.as_deref())?;
            if let Some(out) = &out {
                write_outputs(&r, out)?;
            }
            if !r.report.ok() {
                let failed: Vec<String> = r
                    .report
                    .failures()
                    .map(|c| match c.node {
                        Some(n) => format!("{} on {n}: {}", c.name, c.detail),
                        None => format!("{}: {}", c.name, c.detail),
                    })
                    .collect();
                return Err(Failure::new("audit_failed", failed.join("; ")));
            }
            let mut text = String::new();
            for c in &r.report.checks {
                let node = c.node.map(|n| format!(" {n}")).unwrap_or_default();
                let state = if c.skipped { "skip" } else { "ok" };
                text += &format!("{state:<5}{}{node}\n", c.name);
            }
            Ok(Report::new(&r.report, text))
        }
    }
}

fn health<B: deon_harness::Bus>(bus: &mut B, nodes: u32) -> Vec<serde_json::Value> {
    (0..nodes)
        .map(|i| {
            let n = NodeId(i);
            match call(bus, PROBE, n, u64::from(i) + 1, Request::Health, Span::from_millis(1_000)) {
                Some(Ok(Response::Health(h))) => serde_json::to_value(h).expect("health serializes"),
                Some(Ok(_)) => json!({"node": n.to_string(), "error": "unexpected response"}),
                Some(Err(e)) => json!({"node": n.to_string(), "error": e.message}),
                None => json!({"node": n.to_string(), "error": "no answer"}),
            }
        })
        .collect()
}

fn health_text(h: &[serde_json::Value]) -> String {
    let mut s = String::new();
    for n in h {
        match n.get("error") {
            Some(e) => s += &format!("{}  down ({})\n", n["node"].as_str().unwrap_or("?"), e.as_str().unwrap_or("")),
            None => {
                s += &format!(
                    "{}  {:<9} term {:<3} height {:<4} agent {}\n",
                    n["node"].as_str().unwrap_or("?"),
                    n["role"].as_str().unwrap_or("?"),
                    n["term"],
                    n["height"],
                    n["agent"].as_str().unwrap_or("?")
                )
            }
        }
    }
    s
}

fn up_sim(cfg: NetConfig) -> Result<Report, Failure> {
    let nodes = cfg.network.nodes;
    let seed = cfg.network.seed;
    let mut net = SimNet::new(cfg)?;
    let leader = net
        .wait_for_leader(Span::from_millis(LEADER_WAIT_MS))
        .ok_or_else(|| Error::Unavailable("no leader elected".into()))?;
    let h = health(&mut net, nodes);
    let at_ms = deon_harness::Bus::now(&net).0 / 1000;
    let text = format!("sim network up, seed {seed}, leader {leader} at {at_ms} ms\n{}", health_text(&h));
    Ok(Report::new(&json!({"mode": "sim", "seed": seed, "leader": leader.to_string(), "at_ms": at_ms, "nodes": h}), text))
}

fn up_wall(ctx: &Ctx, cfg: NetConfig, port: u16, duration: Option<f64>) -> Result<Report, Failure> {
    let nodes = cfg.network.nodes;
    let mut net = WallNet::new(cfg)?;
    let gateway = Gateway::start(&mut net, port, 2, Span::from_millis(10_000))?;
    let mut probe = net.endpoint(PROBE, &[]);
    wait_for_leader_wall(&mut probe, PROBE)?;
    let h = health(&mut probe, nodes);
    let endpoints: Vec<_> = gateway.endpoints.iter().map(|(n, e)| json!({"node": n.to_string(), "endpoint": e})).collect();
    let up = json!({"mode": "wall", "endpoints": endpoints, "nodes": h});
    {
        let mut out = std::io::stdout().lock();
        let _ = if ctx.json {
            writeln!(out, "{up}")
        } else {
            let mut s = String::from("wall network up\n");
            for (n, e) in &gateway.endpoints {
                s += &format!("{n}  {e}\n");
            }
            write!(out, "{s}{}", health_text(&h))
        };
        let _ = out.flush();
    }
    match duration {
        Some(secs) => std::thread::sleep(std::time::Duration::from_secs_f64(secs.max(0.0))),
        None => loop {
            std::thread::park();
        },
    }
    gateway.stop();
    drop(probe);
    net.shutdown();
    let mut r = Report::new(&json!({"mode": "wall", "stopped": true}), "stopped");
    r.silent = true;
    Ok(r)
}

/// Everything a script run leaves behind.
struct Executed {
    outcome: ScenarioOutcome,
    report: AuditReport,
    heights: Vec<u64>,
    trace: TraceLog,
}

fn secrets(genesis: &deon_core::genesis::Genesis, nodes: &[&Node], sessions: &[Session]) -> Secrets {
    let mut s = Secrets::default();
    let ids: Vec<NodeId> = nodes.iter().map(|n| n.id()).collect();
    s.genesis(genesis, &ids);
    for (i, c) in sessions.iter().enumerate() {
        s.wallet(&format!("client {i}"), c.agent.wallet());
    }
    for n in nodes {
        s.private_data(n);
    }
    s
}

fn execute(mut cfg: NetConfig, script: &Path, clients: usize, out: Option<&Path>) -> Result<Executed, Failure> {
    let script = Script::load(script)?;
    let seed = cfg.network.seed;
    cfg.capture = Capture::Full;
    cfg.journal_dir = match out {
        Some(o) => {
            let dir = o.join("journals");
            std::fs::create_dir_all(&dir).map_err(|e| Failure::new("io", format!("{}: {e}", dir.display())))?;
            Some(dir)
        }
        None => None,
    };
    let until = match script.until_ms {
        Some(ms) => Span::from_secs_f64(ms / 1000.0),
        None => script.horizon() + Span::from_millis(DRAIN_MS),
    };
    match cfg.mode {
        Mode::Sim => {
            let mut net = SimNet::new(cfg)?;
            net.wait_for_leader(Span::from_millis(LEADER_WAIT_MS))
                .ok_or_else(|| Error::Unavailable("no leader elected".into()))?;
            let sessions = onboard_clients(&mut net, clients, seed)?;
            let (outcome, sessions) = run_script(&mut net, &script, sessions, seed, until)?;
            let nodes: Vec<&Node> = net.nodes().collect();
            let alive: Vec<bool> = nodes.iter().map(|n| net.is_alive(n.id())).collect();
            let report = audit(&nodes, &alive, &net.trace, &secrets(net.genesis(), &nodes, &sessions));
            let heights = nodes.iter().map(|n| n.peer.height()).collect();
            Ok(Executed { outcome, report, heights, trace: net.trace.clone() })
        }
        Mode::Wall => {
            let mut net = WallNet::new(cfg)?;
            let genesis = net.genesis().clone();
            let ids: Vec<ClientId> = (0..clients as u32).map(ClientId).collect();
            let client = net.endpoint(PROBE, &ids);
            let mut driver = WallDriver { net, client };
            wait_for_leader_wall(&mut driver, PROBE)?;
            let sessions = onboard_clients(&mut driver, clients, seed)?;
            let (outcome, sessions) = run_script(&mut driver, &script, sessions, seed, until)?;
            let WallDriver { net, client } = driver;
            drop(client);
            let (nodes, alive, trace) = net.shutdown();
            let refs: Vec<&Node> = nodes.iter().collect();
            let report = audit(&refs, &alive, &trace, &secrets(&genesis, &refs, &sessions));
            let heights = nodes.iter().map(|n| n.peer.height()).collect();
            Ok(Executed { outcome, report, heights, trace })
        }
    }
}

#[derive(Serialize)]
struct Summary {
    submitted: usize,
    valid: usize,
    invalid: usize,
    failed: usize,
    heights: Vec<u64>,
    audit_ok: bool,
}

fn summary(r: &Executed) -> Summary {
    let s = &r.outcome.samples;
    let valid = s.iter().filter(|x| x.valid()).count();
    let committed = s.iter().filter(|x| x.committed()).count();
    Summary {
        submitted: s.len(),
        valid,
        invalid: committed - valid,
        failed: s.len() - committed,
        heights: r.heights.clone(),
        audit_ok: r.report.ok(),
    }
}

fn write_outputs(r: &Executed, out: &Path) -> Result<(), Failure> {
    let io = |p: &Path, e: std::io::Error| Failure::new("io", format!("{}: {e}", p.display()));
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let samples = out.join("samples.jsonl");
    let mut text = String::new();
    for s in &r.outcome.samples {
        text += &serde_json::to_string(s).expect("samples serialize");
        text.push('\n');
    }
    std::fs::write(&samples, text).map_err(|e| io(&samples, e))?;
    let trace = out.join("trace.jsonl");
    r.trace.write_jsonl(&trace).map_err(|e| io(&trace, e))?;
    let audit = out.join("audit.json");
    std::fs::write(&audit, serde_json::to_string_pretty(&r.report).expect("reports serialize"))
        .map_err(|e| io(&audit, e))?;
    let summary_path = out.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary(r)).expect("summaries serialize"))
        .map_err(|e| io(&summary_path, e))?;
    Ok(())
}
