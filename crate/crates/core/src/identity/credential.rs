// SPDX-License-Identifier: Apache-2.0

//! Verifiable credentials with selective disclosure.
//!
//! Each attribute is bound by a salted hash commitment
//! `SHA-256(salt ‖ name ‖ value)`. The issuer signs the subject, the schema
//! and the sorted commitment list; a presentation reveals `(name, value,
//! salt)` only for the chosen attributes and is signed by the holder over the
//! commitments, the disclosed set and the verifier's nonce.

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::did::Did;
use super::ledger::IdentityLedger;
use crate::codec::{self, Hash32};
use crate::crypto::{Keypair, Signature};
use crate::error::{Error, Result};

/// Schema of the network membership credential.
pub const MEMBER_SCHEMA: &str = "deon.member";
pub const MEMBER_ATTRIBUTES: [&str; 3] = ["kind", "name", "node"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeEntry {
    pub name: String,
    pub value: String,
    pub salt: Hash32,
}

impl AttributeEntry {
    pub fn commitment(&self) -> Hash32 {
        attribute_commitment(&self.salt, &self.name, &self.value)
    }
}

pub fn attribute_commitment(salt: &Hash32, name: &str, value: &str) -> Hash32 {
    codec::sha256_concat(&[salt.as_bytes(), name.as_bytes(), value.as_bytes()])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiableCredential {
    pub issuer: Did,
    pub subject: Did,
    pub schema: String,
    /// Sorted by attribute name.
    pub attributes: Vec<AttributeEntry>,
    /// Sorted bytewise.
    pub commitments: Vec<Hash32>,
    pub issuer_signature: Signature,
}

#[derive(Serialize)]
struct IssuerSigned<'a> {
    subject: &'a Did,
    schema: &'a str,
    commitments: &'a [Hash32],
}

fn issuer_message(subject: &Did, schema: &str, commitments: &[Hash32]) -> Vec<u8> {
    codec::to_canonical_vec(&IssuerSigned { subject, schema, commitments })
}

#[derive(Serialize)]
struct HolderSigned<'a> {
    commitments: &'a [Hash32],
    disclosed: &'a [AttributeEntry],
    nonce: &'a str,
}

fn holder_message(commitments: &[Hash32], disclosed: &[AttributeEntry], nonce: &str) -> Vec<u8> {
    codec::to_canonical_vec(&HolderSigned { commitments, disclosed, nonce })
}

/// Issues a credential for `subject` under `schema`. The attribute names must
/// equal the schema's attribute set registered on the identity ledger.
pub fn issue_credential<R: RngCore + CryptoRng>(
    ledger: &IdentityLedger,
    issuer: &Did,
    issuer_key: &Keypair,
    subject: &Did,
    schema: &str,
    attributes: &BTreeMap<String, String>,
    rng: &mut R,
) -> Result<VerifiableCredential> {
    let def = ledger
        .cred_def(schema)
        .ok_or_else(|| Error::InvalidRequest(format!("unknown schema {schema}")))?;
    let expected: BTreeSet<&str> = def.attributes.iter().map(String::as_str).collect();
    let given: BTreeSet<&str> = attributes.keys().map(String::as_str).collect();
    if expected != given {
        return Err(Error::InvalidRequest(format!(
            "attributes {given:?} do not match schema {schema} {expected:?}"
        )));
    }
    let entries: Vec<AttributeEntry> = attributes
        .iter()
        .map(|(name, value)| {
            let mut salt = [0u8; 32];
            rng.fill_bytes(&mut salt);
            AttributeEntry { name: name.clone(), value: value.clone(), salt: Hash32(salt) }
        })
        .collect();
    let mut commitments: Vec<Hash32> = entries.iter().map(AttributeEntry::commitment).collect();
    commitments.sort();
    let issuer_signature = issuer_key.sign(&issuer_message(subject, schema, &commitments));
    Ok(VerifiableCredential {
        issuer: issuer.clone(),
        subject: subject.clone(),
        schema: schema.to_string(),
        attributes: entries,
        commitments,
        issuer_signature,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub subject: Did,
    pub schema: String,
    pub issuer: Did,
    pub commitments: Vec<Hash32>,
    pub disclosed: Vec<AttributeEntry>,
    pub issuer_signature: Signature,
    pub nonce: String,
    pub holder_signature: Signature,
}

/// Builds a presentation disclosing only `disclose`. `holder_key` must be the
/// subject's key.
pub fn present(
    credential: &VerifiableCredential,
    holder_key: &Keypair,
    disclose: &[&str],
    nonce: &str,
) -> Result<Presentation> {
    if !credential.subject.is_bound_to(&holder_key.public()) {
        return Err(Error::InvalidRequest("holder key does not match credential subject".into()));
    }
    let wanted: BTreeSet<&str> = disclose.iter().copied().collect();
    let disclosed: Vec<AttributeEntry> =
        credential.attributes.iter().filter(|a| wanted.contains(a.name.as_str())).cloned().collect();
    if disclosed.len() != wanted.len() {
        return Err(Error::InvalidRequest("disclosure names an attribute not in the credential".into()));
    }
    let holder_signature = holder_key.sign(&holder_message(&credential.commitments, &disclosed, nonce));
    Ok(Presentation {
        subject: credential.subject.clone(),
        schema: credential.schema.clone(),
        issuer: credential.issuer.clone(),
        commitments: credential.commitments.clone(),
        disclosed,
        issuer_signature: credential.issuer_signature,
        nonce: nonce.to_string(),
        holder_signature,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Replay,
    UnknownIssuer,
    BadIssuerSignature,
    UnknownSchema,
    MalformedCommitments,
    CommitmentMismatch,
    UnknownSubject,
    BadHolderSignature,
    UnregisteredDid,
    BadSignature,
    NotMember,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string));
        f.write_str(s.as_deref().unwrap_or("rejected"))
    }
}

/// Stateless checks of a presentation against the identity ledger: every
/// acceptance condition except nonce freshness.
pub fn check_presentation(
    ledger: &IdentityLedger,
    pres: &Presentation,
    nonce: &str,
) -> std::result::Result<(), RejectReason> {
    if pres.nonce != nonce {
        return Err(RejectReason::Replay);
    }
    if !ledger.is_steward(&pres.issuer) {
        return Err(RejectReason::UnknownIssuer);
    }
    let issuer_doc = ledger.resolve(&pres.issuer).ok_or(RejectReason::UnknownIssuer)?;
    if !issuer_doc
        .verkey
        .verify(&issuer_message(&pres.subject, &pres.schema, &pres.commitments), &pres.issuer_signature)
    {
        return Err(RejectReason::BadIssuerSignature);
    }
    let def = ledger.cred_def(&pres.schema).ok_or(RejectReason::UnknownSchema)?;
    if pres.commitments.len() != def.attributes.len()
        || pres.commitments.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(RejectReason::MalformedCommitments);
    }
    let mut seen = BTreeSet::new();
    for attr in &pres.disclosed {
        if !def.attributes.contains(&attr.name) || !seen.insert(attr.name.as_str()) {
            return Err(RejectReason::CommitmentMismatch);
        }
        if pres.commitments.binary_search(&attr.commitment()).is_err() {
            return Err(RejectReason::CommitmentMismatch);
        }
    }
    let holder_doc = ledger.resolve(&pres.subject).ok_or(RejectReason::UnknownSubject)?;
    if !holder_doc
        .verkey
        .verify(&holder_message(&pres.commitments, &pres.disclosed, &pres.nonce), &pres.holder_signature)
    {
        return Err(RejectReason::BadHolderSignature);
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::identity::did::create_did;
    use crate::identity::ledger::{IdentityRecord, IdentityTx, Role};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    pub(crate) struct Fixture {
        pub ledger: IdentityLedger,
        pub issuer: Did,
        pub issuer_key: Keypair,
        pub subject: Did,
        pub subject_key: Keypair,
        pub rng: ChaCha20Rng,
    }

    pub(crate) fn fixture() -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (issuer, ik, _) = create_did(&mut rng);
        let (subject, sk, _) = create_did(&mut rng);
        let genesis = vec![
            IdentityTx::signed(
                IdentityRecord::Nym { did: issuer.clone(), verkey: ik.public(), role: Role::Steward, endpoint: String::new() },
                issuer.clone(),
                &ik,
            ),
            IdentityTx::signed(
                IdentityRecord::CredDef {
                    schema: MEMBER_SCHEMA.into(),
                    attributes: MEMBER_ATTRIBUTES.iter().map(|s| s.to_string()).collect(),
                    issuer: issuer.clone(),
                },
                issuer.clone(),
                &ik,
            ),
            IdentityTx::signed(
                IdentityRecord::Nym { did: subject.clone(), verkey: sk.public(), role: Role::User, endpoint: String::new() },
                issuer.clone(),
                &ik,
            ),
        ];
        Fixture {
            ledger: IdentityLedger::with_genesis(genesis).unwrap(),
            issuer,
            issuer_key: ik,
            subject,
            subject_key: sk,
            rng,
        }
    }

    fn attrs(kind: &str, name: &str) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("kind".to_string(), kind.to_string()),
            ("name".to_string(), name.to_string()),
            ("node".to_string(), "n1".to_string()),
        ])
    }

    #[test]
    fn issued_commitments_recompute() {
        let mut f = fixture();
        let vc = issue_credential(&f.ledger, &f.issuer, &f.issuer_key, &f.subject, MEMBER_SCHEMA, &attrs("user", "alice"), &mut f.rng).unwrap();
        assert_eq!(vc.commitments.len(), 3);
        for a in &vc.attributes {
            // independent recomputation of SHA-256(salt ‖ name ‖ value)
            let mut buf = a.salt.0.to_vec();
            buf.extend_from_slice(a.name.as_bytes());
            buf.extend_from_slice(a.value.as_bytes());
            assert!(vc.commitments.contains(&codec::sha256(&buf)));
        }
    }

    #[test]
    fn schema_mismatch_rejected() {
        let mut f = fixture();
        let mut a = attrs("user", "x");
        a.remove("node");
        assert!(issue_credential(&f.ledger, &f.issuer, &f.issuer_key, &f.subject, MEMBER_SCHEMA, &a, &mut f.rng).is_err());
        assert!(issue_credential(&f.ledger, &f.issuer, &f.issuer_key, &f.subject, "nope", &attrs("u", "x"), &mut f.rng).is_err());
    }

    #[test]
    fn round_trip_and_partial_disclosure() {
        let mut f = fixture();
        let vc = issue_credential(&f.ledger, &f.issuer, &f.issuer_key, &f.subject, MEMBER_SCHEMA, &attrs("user", "alice"), &mut f.rng).unwrap();
        let p = present(&vc, &f.subject_key, &["kind"], "n-1").unwrap();
        assert_eq!(p.disclosed.len(), 1);
        assert_eq!(p.commitments.len(), 3);
        assert_eq!(check_presentation(&f.ledger, &p, "n-1"), Ok(()));
        assert_eq!(check_presentation(&f.ledger, &p, "n-2"), Err(RejectReason::Replay));

        let none = present(&vc, &f.subject_key, &[], "n-3").unwrap();
        assert_eq!(check_presentation(&f.ledger, &none, "n-3"), Ok(()));
    }

    #[test]
    fn tampered_value_is_commitment_mismatch() {
        let mut f = fixture();
        let vc = issue_credential(&f.ledger, &f.issuer, &f.issuer_key, &f.subject, MEMBER_SCHEMA, &attrs("user", "alice"), &mut f.rng).unwrap();
        let mut p = present(&vc, &f.subject_key, &["kind", "name"], "n").unwrap();
        p.disclosed[0].value.push('!');
        assert_eq!(check_presentation(&f.ledger, &p, "n"), Err(RejectReason::CommitmentMismatch));
    }

    #[test]
    fn undisclosed_values_absent_from_serialization() {
        let mut f = fixture();
        let secret_name = "zq7Xv0kq2Lr9aP";
        let vc = issue_credential(&f.ledger, &f.issuer, &f.issuer_key, &f.subject, MEMBER_SCHEMA, &attrs("user", secret_name), &mut f.rng).unwrap();
        let p = present(&vc, &f.subject_key, &["kind"], "n").unwrap();
        let bytes = codec::to_canonical_string(&p);
        assert!(!bytes.contains(secret_name));
        let name_salt = vc.attributes.iter().find(|a| a.name == "name").unwrap().salt.to_hex();
        assert!(!bytes.contains(&name_salt));
    }

    #[test]
    fn non_steward_issuer_rejected() {
        let mut f = fixture();
        // The subject (a plain user) signs a credential for itself.
        let vc = issue_credential(&f.ledger, &f.subject, &f.subject_key, &f.subject, MEMBER_SCHEMA, &attrs("user", "a"), &mut f.rng).unwrap();
        let p = present(&vc, &f.subject_key, &["kind"], "n").unwrap();
        assert_eq!(check_presentation(&f.ledger, &p, "n"), Err(RejectReason::UnknownIssuer));
    }
}
