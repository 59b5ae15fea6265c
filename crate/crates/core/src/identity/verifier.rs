// SPDX-License-Identifier: Apache-2.0

//! The membership verifier that stands in for a certificate-authority MSP.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::credential::{check_presentation, Presentation, RejectReason};
use super::did::Did;
use super::ledger::IdentityLedger;
use crate::crypto::Signature;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub accepted: bool,
    pub reason: Option<RejectReason>,
}

impl Verdict {
    pub fn from_result(r: Result<(), RejectReason>) -> Self {
        match r {
            Ok(()) => Verdict { accepted: true, reason: None },
            Err(reason) => Verdict { accepted: false, reason: Some(reason) },
        }
    }
}

/// Verifier state: a nonce-replay cache and the set of dids that already
/// proved membership. Both are single-writer (owned by one node).
#[derive(Debug, Default, Clone)]
pub struct Verifier {
    used_nonces: BTreeSet<String>,
    members: BTreeSet<(Did, String)>,
}

impl Verifier {
    pub fn new() -> Self {
        Self::default()
    }

    /// Full presentation check including nonce freshness. A nonce is consumed
    /// only by an accepted presentation.
    pub fn verify_presentation(
        &mut self,
        ledger: &IdentityLedger,
        pres: &Presentation,
        nonce: &str,
    ) -> Result<(), RejectReason> {
        if self.used_nonces.contains(nonce) {
            return Err(RejectReason::Replay);
        }
        check_presentation(ledger, pres, nonce)?;
        self.used_nonces.insert(nonce.to_string());
        Ok(())
    }

    /// Decides whether `did` may transact: it must resolve on the identity
    /// ledger, its key must have signed `payload`, and it must hold a
    /// membership credential for `schema`, either proven earlier (cached) or
    /// by the supplied presentation bound to `nonce`.
    #[allow(clippy::too_many_arguments)]
    pub fn verify_transactor(
        &mut self,
        ledger: &IdentityLedger,
        did: &Did,
        signature: &Signature,
        payload: &[u8],
        schema: &str,
        presentation: Option<&Presentation>,
        nonce: &str,
    ) -> Result<(), RejectReason> {
        let doc = ledger.resolve(did).ok_or(RejectReason::UnregisteredDid)?;
        if !doc.verkey.verify(payload, signature) {
            return Err(RejectReason::BadSignature);
        }
        let key = (did.clone(), schema.to_string());
        if self.members.contains(&key) {
            return Ok(());
        }
        let pres = presentation.ok_or(RejectReason::NotMember)?;
        if pres.subject != *did || pres.schema != schema {
            return Err(RejectReason::NotMember);
        }
        check_presentation(ledger, pres, nonce)?;
        self.members.insert(key);
        Ok(())
    }

    pub fn is_cached_member(&self, did: &Did, schema: &str) -> bool {
        self.members.contains(&(did.clone(), schema.to_string()))
    }

    /// Forget cached membership proofs (volatile state lost on restart).
    pub fn reset(&mut self) {
        self.members.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::credential::{issue_credential, present, MEMBER_SCHEMA};
    use crate::identity::did::create_did;
    use crate::identity::ledger::{IdentityRecord, IdentityTx, Role};
    use crate::identity::credential::tests::fixture;
    use std::collections::BTreeMap;

    fn member_attrs() -> BTreeMap<String, String> {
        [("kind", "user"), ("name", "bob"), ("node", "n1")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn nonce_replay_rejected() {
        let mut f = fixture();
        let vc = issue_credential(&f.ledger, &f.issuer, &f.issuer_key, &f.subject, MEMBER_SCHEMA, &member_attrs(), &mut f.rng).unwrap();
        let p = present(&vc, &f.subject_key, &["kind"], "abc").unwrap();
        let mut v = Verifier::new();
        assert_eq!(v.verify_presentation(&f.ledger, &p, "abc"), Ok(()));
        assert_eq!(v.verify_presentation(&f.ledger, &p, "abc"), Err(RejectReason::Replay));
    }

    #[test]
    fn transactor_paths() {
        let mut f = fixture();
        let vc = issue_credential(&f.ledger, &f.issuer, &f.issuer_key, &f.subject, MEMBER_SCHEMA, &member_attrs(), &mut f.rng).unwrap();
        let payload = b"proposal-bytes";
        let sig = f.subject_key.sign(payload);
        let mut v = Verifier::new();

        // registered with valid signature but no credential shown
        assert_eq!(
            v.verify_transactor(&f.ledger, &f.subject, &sig, payload, MEMBER_SCHEMA, None, "t1"),
            Err(RejectReason::NotMember)
        );
        let p = present(&vc, &f.subject_key, &["kind"], "t1").unwrap();
        assert_eq!(v.verify_transactor(&f.ledger, &f.subject, &sig, payload, MEMBER_SCHEMA, Some(&p), "t1"), Ok(()));
        // cached afterwards
        assert_eq!(v.verify_transactor(&f.ledger, &f.subject, &sig, payload, MEMBER_SCHEMA, None, "t2"), Ok(()));
        // bad payload signature still rejected
        let wrong = f.subject_key.sign(b"other");
        assert_eq!(
            v.verify_transactor(&f.ledger, &f.subject, &wrong, payload, MEMBER_SCHEMA, None, "t3"),
            Err(RejectReason::BadSignature)
        );

        let (stranger, skp, _) = create_did(&mut f.rng);
        let sig = skp.sign(payload);
        assert_eq!(
            v.verify_transactor(&f.ledger, &stranger, &sig, payload, MEMBER_SCHEMA, None, "t4"),
            Err(RejectReason::UnregisteredDid)
        );
    }

    #[test]
    fn presentation_for_other_subject_is_not_membership() {
        let mut f = fixture();
        let vc = issue_credential(&f.ledger, &f.issuer, &f.issuer_key, &f.subject, MEMBER_SCHEMA, &member_attrs(), &mut f.rng).unwrap();
        let (other, okp, _) = create_did(&mut f.rng);
        f.ledger
            .apply(IdentityTx::signed(
                IdentityRecord::Nym { did: other.clone(), verkey: okp.public(), role: Role::User, endpoint: String::new() },
                f.issuer.clone(),
                &f.issuer_key,
            ))
            .unwrap();
        let p = present(&vc, &f.subject_key, &[], "n").unwrap();
        let sig = okp.sign(b"x");
        let mut v = Verifier::new();
        assert_eq!(
            v.verify_transactor(&f.ledger, &other, &sig, b"x", MEMBER_SCHEMA, Some(&p), "n"),
            Err(RejectReason::NotMember)
        );
    }
}
