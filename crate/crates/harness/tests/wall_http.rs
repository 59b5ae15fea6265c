// SPDX-License-Identifier: Apache-2.0

use std::time::{Duration, Instant};

use deon_core::client::ClientAgent;
use deon_core::codec;
use deon_core::crypto::derive_rng;
use deon_core::net::NodeId;
use deon_core::service::{MemberKind, Onboarded, Request, TxReceipt, VoteId};
use deon_core::time::Span;
use deon_harness::http::{Gateway, VoteView, HDR_DID, HDR_PRESENTATION, HDR_SIG, HDR_TS};
use deon_harness::{NetConfig, WallNet};

fn wait_healthy(base: &str) {
    let end = Instant::now() + Duration::from_secs(10);
    while Instant::now() < end {
        if let Ok(r) = ureq::get(&format!("{base}/health")).call() {
            let v: serde_json::Value = r.into_json().unwrap();
            if !v["leader"].is_null() {
                return;
            }
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    panic!("no leader behind {base}");
}

fn get_vote(base: &str, agent: &mut ClientAgent, poll: &str, voter: &str) -> Result<ureq::Response, ureq::Error> {
    let key = VoteId::new(poll, voter).unwrap().to_string();
    let q = agent.query_request(&key, true, 1);
    let mut rq = ureq::get(&format!("{base}/vote/{poll}/{voter}"))
        .set(HDR_DID, q.client.as_str())
        .set(HDR_TS, &q.timestamp.to_string())
        .set(HDR_SIG, &q.signature.to_hex());
    if let Some(p) = &q.presentation {
        rq = rq.set(HDR_PRESENTATION, &codec::to_canonical_string(p));
    }
    rq.call()
}

#[test]
fn vote_round_trip_over_http() {
    let mut net = WallNet::new(NetConfig::new(3, 9)).unwrap();
    let gw = Gateway::start(&mut net, 0, 2, Span::from_millis(15_000)).unwrap();
    let n1 = gw.endpoint(NodeId(0)).unwrap().to_string();
    let n2 = gw.endpoint(NodeId(1)).unwrap().to_string();
    wait_healthy(&n1);

    let mut agent = ClientAgent::new(&mut derive_rng(9, "http-client", 0));
    let Request::Onboard(body) = agent.onboard_request(MemberKind::User, "carol") else { unreachable!() };
    let onboarded: Onboarded = ureq::post(&format!("{n1}/onboard"))
        .send_json(serde_json::to_value(body).unwrap())
        .unwrap()
        .into_json()
        .unwrap();
    agent.accept_onboarding(onboarded).unwrap();

    let vote = VoteId::new("p1", "v7").unwrap();
    let req = agent.cast_vote(&vote, "A", 1);
    let receipt: TxReceipt =
        ureq::post(&format!("{n1}/vote")).send_json(serde_json::to_value(&req).unwrap()).unwrap().into_json().unwrap();
    assert_eq!(receipt.tx_id, req.header.tx_id());
    assert!(receipt.commitment.is_some());

    let view: VoteView = get_vote(&n2, &mut agent, "p1", "v7").unwrap().into_json().unwrap();
    assert_eq!(view.choice, "A");
    assert_eq!(view.result.report.commitment_ok, Some(true));

    match get_vote(&n2, &mut agent, "p1", "nobody") {
        Err(ureq::Error::Status(404, r)) => {
            let e: serde_json::Value = r.into_json().unwrap();
            assert_eq!(e["code"], "not_found");
        }
        other => panic!("expected 404, got {other:?}"),
    }

    let h: serde_json::Value = ureq::get(&format!("{n2}/chain/height")).call().unwrap().into_json().unwrap();
    assert!(h["height"].as_u64().unwrap() >= 1);

    gw.stop();
    let (nodes, alive, _) = net.shutdown();
    assert!(alive.iter().all(|a| *a));
    assert_eq!(nodes[0].peer.state_digest(), nodes[1].peer.state_digest());
}
