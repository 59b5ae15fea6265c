// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use deon_core::crypto::derive_rng;
use deon_core::ledger::ValidationFlag;
use deon_core::net::{ClientId, NodeId};
use deon_core::service::{Ballot, MemberKind, VoteId};
use deon_core::time::Span;
use deon_harness::{NetConfig, Session, SimNet};

fn net(seed: u64) -> SimNet {
    SimNet::new(NetConfig::new(3, seed)).unwrap()
}

#[test]
fn onboard_vote_and_read_back() {
    let mut net = net(7);
    assert!(net.wait_for_leader(Span::from_millis(3_000)).is_some());
    let mut rng = derive_rng(7, "test-client", 0);
    let mut s = Session::new(ClientId(0), NodeId(1), &mut rng);
    s.onboard(&mut net, MemberKind::User, "alice").unwrap();
    assert!(s.agent.is_member());

    let vote = VoteId::new("p1", "alice").unwrap();
    let r = s.vote(&mut net, &vote, "A").unwrap();
    assert_eq!(r.flag, ValidationFlag::Valid);
    assert!(r.commitment.is_some());

    let got = s.query(&mut net, &vote.to_string(), true).unwrap();
    assert_eq!(got.payload.0, Ballot { choice: "A".into() }.to_payload());
    assert_eq!(got.report.commitment_ok, Some(true));
    assert!(got.report.cas_integrity_ok);

    let r = s.push(&mut net, "doc", b"plain".to_vec(), BTreeMap::new(), false, true).unwrap();
    assert_eq!(r.flag, ValidationFlag::Valid);
    assert!(net.wait_for_height(r.block, Span::from_millis(2_000)));
    net.run_for(Span::from_millis(500));
    let digests: Vec<_> = net.nodes().map(|n| n.peer.state_digest()).collect();
    assert!(digests.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn same_seed_same_trace() {
    let run = || {
        let mut net = net(11);
        net.wait_for_leader(Span::from_millis(3_000));
        let mut s = Session::new(ClientId(0), NodeId(0), &mut derive_rng(11, "c", 0));
        s.onboard(&mut net, MemberKind::User, "bob").unwrap();
        s.vote(&mut net, &VoteId::new("p", "bob").unwrap(), "B").unwrap();
        (net.trace.digest(), net.node(NodeId(2)).peer.stream_digest())
    };
    assert_eq!(run(), run());
}
