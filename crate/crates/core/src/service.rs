// SPDX-License-Identifier: Apache-2.0

//! Request and response types of the Core Service, shared by the node, the
//! client agent and the HTTP gateway.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cas::{compute_cid, ContentId};
use crate::codec::{self, Hash32, HexBytes};
use crate::crypto::Signature;
use crate::error::{Error, Result};
use crate::identity::{Did, DidDocument, Presentation, VerifiableCredential, Verdict};
use crate::ledger::{ProposalHeader, TxId, ValidationFlag, DATA_CC, VOTE_CC};

pub const VOTE_SEPARATOR: &str = "::";

/// Ledger key of a ballot: `<poll>::<voter>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoteId {
    poll: String,
    voter: String,
}

impl VoteId {
    pub fn new(poll: &str, voter: &str) -> Result<Self> {
        for (what, v) in [("poll id", poll), ("voter id", voter)] {
            if v.is_empty() || v.contains(VOTE_SEPARATOR) {
                return Err(Error::InvalidRequest(format!("{what} must be non-empty and must not contain '::'")));
            }
        }
        Ok(VoteId { poll: poll.into(), voter: voter.into() })
    }

    pub fn poll(&self) -> &str {
        &self.poll
    }

    pub fn voter(&self) -> &str {
        &self.voter
    }
}

impl fmt::Display for VoteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{VOTE_SEPARATOR}{}", self.poll, self.voter)
    }
}

impl FromStr for VoteId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (poll, voter) = s
            .split_once(VOTE_SEPARATOR)
            .ok_or_else(|| Error::InvalidRequest(format!("{s:?} is not <poll>::<voter>")))?;
        VoteId::new(poll, voter)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub choice: String,
}

impl Ballot {
    pub fn to_payload(&self) -> Vec<u8> {
        codec::to_canonical_vec(self)
    }
}

/// A signed request to store `payload` under `key`. The client builds and
/// signs `header`; the Core Service checks it matches the other fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PushRequest {
    pub key: String,
    pub payload: HexBytes,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    /// Private-data variant (commitment on-chain) vs plain variant.
    pub private: bool,
    /// Route the payload through the content store (otherwise inline).
    #[serde(default = "yes")]
    pub cas: bool,
    pub header: ProposalHeader,
    pub client_signature: Signature,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presentation: Option<Presentation>,
}

fn yes() -> bool {
    true
}

/// The chaincode call a push must carry.
pub fn push_call(key: &str, payload: &[u8], metadata: &BTreeMap<String, String>, private: bool, cas: bool) -> (String, String, Vec<String>) {
    if private {
        (VOTE_CC.into(), "push_vote".into(), vec![key.into()])
    } else {
        let mut args = vec![key.into(), compute_cid(payload).to_string(), codec::to_canonical_string(metadata)];
        if !cas {
            args.push(hex::encode(payload));
        }
        (DATA_CC.into(), "push".into(), args)
    }
}

impl PushRequest {
    pub fn cid(&self) -> ContentId {
        compute_cid(&self.payload)
    }

    /// Structural checks that need no ledger access.
    pub fn check(&self) -> Result<()> {
        if self.payload.is_empty() {
            return Err(Error::InvalidRequest("payload must not be empty".into()));
        }
        if self.key.is_empty() {
            return Err(Error::InvalidRequest("key must not be empty".into()));
        }
        let (cc, function, args) = push_call(&self.key, &self.payload, &self.metadata, self.private, self.cas);
        let h = &self.header;
        if h.chaincode != cc || h.function != function || h.args != args {
            return Err(Error::InvalidRequest("signed header does not match the request".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxReceipt {
    pub tx_id: TxId,
    pub block: u64,
    pub flag: ValidationFlag,
    pub cid: ContentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commitment: Option<Hash32>,
}

/// A signed read of `key`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub key: String,
    pub private: bool,
    pub client: Did,
    pub timestamp: u64,
    pub signature: Signature,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presentation: Option<Presentation>,
}

#[derive(Serialize)]
struct QuerySigning<'a> {
    op: &'static str,
    key: &'a str,
    private: bool,
    client: &'a Did,
    timestamp: u64,
}

impl QueryRequest {
    pub fn signing_bytes(key: &str, private: bool, client: &Did, timestamp: u64) -> Vec<u8> {
        codec::to_canonical_vec(&QuerySigning { op: "query", key, private, client, timestamp })
    }

    pub fn own_signing_bytes(&self) -> Vec<u8> {
        Self::signing_bytes(&self.key, self.private, &self.client, self.timestamp)
    }

    /// Nonce a presentation attached to this query must be bound to.
    pub fn nonce(key: &str, private: bool, client: &Did, timestamp: u64) -> String {
        codec::sha256(&Self::signing_bytes(key, private, client, timestamp)).to_hex()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// `None` for the plain variant, which has no commitment to check.
    pub commitment_ok: Option<bool>,
    pub cas_integrity_ok: bool,
    pub block: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub key: String,
    pub payload: HexBytes,
    pub cid: ContentId,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
    pub report: VerificationReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberKind {
    User,
    Application,
}

impl fmt::Display for MemberKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemberKind::User => "user",
            MemberKind::Application => "application",
        })
    }
}

impl FromStr for MemberKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user" => Ok(MemberKind::User),
            "application" | "app" => Ok(MemberKind::Application),
            _ => Err(Error::InvalidRequest(format!("unknown member kind {s:?}"))),
        }
    }
}

/// Onboarding: the holder keeps its key and sends only the public half.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnboardRequest {
    pub kind: MemberKind,
    pub name: String,
    pub did: Did,
    pub verkey: crate::crypto::PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Onboarded {
    pub did: Did,
    pub credential: VerifiableCredential,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub node: String,
    pub agent: Did,
    pub role: crate::ordering::Role,
    pub term: u64,
    pub leader: Option<String>,
    pub height: u64,
}

/// Client-to-node request bodies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "body", rename_all = "snake_case")]
pub enum Request {
    Onboard(OnboardRequest),
    /// Opens a pairwise relationship with this node's agent.
    Connect { did: Did, verkey: crate::crypto::PublicKey },
    Push(PushRequest),
    Query(QueryRequest),
    Health,
    Height,
    CasPut { data: HexBytes },
    CasGet { cid: ContentId },
    Resolve { did: Did },
    Verify { presentation: Presentation, nonce: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Response {
    Onboarded(Onboarded),
    Connected { agent: Did },
    Receipt(TxReceipt),
    Data(QueryResult),
    Health(Health),
    Height { height: u64 },
    Cid { cid: ContentId },
    Bytes { data: HexBytes },
    DidDoc(DidDocument),
    Verdict(Verdict),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vote_id_round_trip_and_rejects_separator() {
        let v = VoteId::new("p1", "v7").unwrap();
        assert_eq!(v.to_string(), "p1::v7");
        assert_eq!("p1::v7".parse::<VoteId>().unwrap(), v);
        assert!(VoteId::new("p::1", "v").is_err());
        assert!(VoteId::new("", "v").is_err());
        assert!("p1::v::7".parse::<VoteId>().is_err());
        assert!("p1".parse::<VoteId>().is_err());
    }

    #[test]
    fn ballot_payload_is_canonical_json() {
        assert_eq!(Ballot { choice: "A".into() }.to_payload(), br#"{"choice":"A"}"#.to_vec());
    }
}
