// SPDX-License-Identifier: Apache-2.0

use deon_core::ledger::ValidationFlag;
use deon_core::net::{Addr, NodeId};
use deon_core::time::{Span, Time};
use deon_harness::audit::{audit, Secrets};
use deon_harness::trace::CorruptTarget;
use deon_harness::{onboard_clients, run_script, Capture, NetConfig, Sample, Script, Session, SimNet};

fn net(seed: u64) -> SimNet {
    let mut cfg = NetConfig::new(3, seed);
    cfg.capture = Capture::Full;
    let mut net = SimNet::new(cfg).unwrap();
    net.wait_for_leader(Span::from_millis(3_000)).expect("leader elected");
    net
}

fn secrets(net: &SimNet, sessions: &[Session]) -> Secrets {
    let mut s = Secrets::default();
    let ids: Vec<NodeId> = net.config().network.node_ids();
    s.genesis(net.genesis(), &ids);
    for (i, c) in sessions.iter().enumerate() {
        s.wallet(&format!("client {i}"), c.agent.wallet());
    }
    for n in net.nodes() {
        s.private_data(n);
    }
    s
}

fn run(net: &mut SimNet, script: &str, seed: u64) -> (Vec<Sample>, Vec<Session>) {
    let sessions = onboard_clients(net, 4, seed).unwrap();
    let script = Script::parse(script).unwrap();
    let until = script.horizon() + Span::from_millis(15_000);
    let (out, sessions) = run_script(net, &script, sessions, seed, until).unwrap();
    (out.samples, sessions)
}

fn all_valid(samples: &[Sample], n: usize) {
    assert_eq!(samples.len(), n);
    let bad: Vec<_> = samples.iter().filter(|s| !s.valid()).collect();
    assert!(bad.is_empty(), "{} not valid, first: {:?}", bad.len(), bad.first());
}

fn audit_all(net: &SimNet, sessions: &[Session]) -> deon_harness::AuditReport {
    let nodes: Vec<_> = net.nodes().collect();
    let alive: Vec<bool> = net.config().network.node_ids().into_iter().map(|n| net.is_alive(n)).collect();
    audit(&nodes, &alive, &net.trace, &secrets(net, sessions))
}

#[test]
fn fault_free_hundred_pushes() {
    let mut net = net(1);
    let (samples, sessions) =
        run(&mut net, r#"[{"at_ms": 0, "action": "load", "count": 100, "rate": 50, "arm": "private+cas"}]"#, 1);
    all_valid(&samples, 100);
    let r = audit_all(&net, &sessions);
    assert!(r.ok(), "{:#?}", r.failures().collect::<Vec<_>>());
    assert!(r.passed("no_secret_on_wire"));
    assert!(r.passed("leak_detector"));
}

#[test]
fn kill_one_commits_continue_and_restarted_node_converges() {
    let mut net = net(2);
    let (samples, sessions) = run(
        &mut net,
        r#"[{"at_ms": 0, "action": "load", "count": 150, "rate": 50, "arm": "baseline"},
            {"at_ms": 1000, "action": "kill", "node": "n3"},
            {"at_ms": 2000, "action": "restart", "node": "n3"}]"#,
        2,
    );
    all_valid(&samples, 150);
    let r = audit_all(&net, &sessions);
    assert!(r.ok(), "{:#?}", r.failures().collect::<Vec<_>>());
}

#[test]
fn partition_minority_catches_up_after_heal() {
    let mut net = net(3);
    let (samples, sessions) = run(
        &mut net,
        r#"[{"at_ms": 0, "action": "partition", "groups": [["n1"], ["n2", "n3"]]},
            {"at_ms": 10, "action": "load", "count": 60, "rate": 20, "arm": "cas"},
            {"at_ms": 4000, "action": "heal"}]"#,
        3,
    );
    assert_eq!(samples.len(), 60);
    assert!(samples.iter().all(|s| s.committed()), "{:?}", samples.iter().find(|s| !s.committed()));
    let r = audit_all(&net, &sessions);
    assert!(r.ok(), "{:#?}", r.failures().collect::<Vec<_>>());
    let heights: Vec<u64> = net.nodes().map(|n| n.peer.height()).collect();
    assert!(heights.iter().all(|h| *h == heights[0] && *h > 0));
}

#[test]
fn block_corruption_is_reported_for_that_node_only() {
    let mut net = net(4);
    let (_, sessions) =
        run(&mut net, r#"[{"at_ms": 0, "action": "load", "count": 20, "rate": 40, "arm": "baseline"}]"#, 4);
    assert!(net.corrupt(CorruptTarget::Block { node: NodeId(1), index: 0, byte: 40, bit: 2 }));
    let r = audit_all(&net, &sessions);
    assert_eq!(r.failed_nodes("chain_integrity"), vec![NodeId(1)]);
    assert!(r.failed_nodes("block_stream").is_empty());
    assert!(r.passed("world_state"));
}

#[test]
fn planted_secret_is_detected() {
    let mut net = net(5);
    let (_, sessions) =
        run(&mut net, r#"[{"at_ms": 0, "action": "load", "count": 5, "rate": 20, "arm": "private"}]"#, 5);
    assert!(audit_all(&net, &sessions).ok());
    let key = sessions[0].agent.wallet().key(sessions[0].agent.did()).unwrap().secret_bytes();
    let mut bytes = br#"{"note":""#.to_vec();
    bytes.extend(hex::encode(key).bytes());
    bytes.extend(br#""}"#);
    net.plant(Addr::Node(NodeId(0)), Addr::Node(NodeId(1)), bytes);
    net.run_for(Span::from_millis(50));
    let r = audit_all(&net, &sessions);
    assert!(!r.passed("no_secret_on_wire"));
}

#[test]
fn two_down_commits_nothing_until_quorum_returns() {
    let mut net = net(6);
    let mut sessions = onboard_clients(&mut net, 1, 6).unwrap();
    let before = net.node(NodeId(0)).peer.height();
    net.kill(NodeId(1));
    net.kill(NodeId(2));
    let s = &mut sessions[0];
    s.node = NodeId(0);
    s.timeout = Span::from_millis(3_000);
    let err = s.vote(&mut net, &"p::x".parse().unwrap(), "A");
    assert!(err.is_err());
    assert_eq!(net.node(NodeId(0)).peer.height(), before);
    net.restart(NodeId(1));
    net.restart(NodeId(2));
    s.timeout = Span::from_millis(20_000);
    let r = s.vote(&mut net, &"p::y".parse().unwrap(), "B").unwrap();
    assert_eq!(r.flag, ValidationFlag::Valid);
    assert!(deon_harness::Bus::now(&net) > Time::from_millis(3_000));
}
