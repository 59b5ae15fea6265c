// SPDX-License-Identifier: Apache-2.0

use std::collections::{HashSet, VecDeque};

use crate::ledger::{TransactionEnvelope, TxId};
use crate::time::{Span, Time};

/// Leader-side batching of envelopes into blocks.
#[derive(Debug, Clone)]
pub struct BlockCutter {
    queue: VecDeque<(Time, TransactionEnvelope)>,
    queued: HashSet<TxId>,
    pub max_txs: usize,
    pub timeout: Span,
}

impl BlockCutter {
    pub fn new(max_txs: usize, timeout: Span) -> Self {
        assert!(max_txs > 0, "max_block_txs must be positive");
        BlockCutter { queue: VecDeque::new(), queued: HashSet::new(), max_txs, timeout }
    }

    /// Queues `env` unless an envelope with the same tx id is already queued.
    pub fn push(&mut self, now: Time, env: TransactionEnvelope) -> bool {
        if !self.queued.insert(env.tx_id) {
            return false;
        }
        self.queue.push_back((now, env));
        true
    }

    pub fn contains(&self, tx: &TxId) -> bool {
        self.queued.contains(tx)
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// When the oldest queued envelope's batch timer fires.
    pub fn deadline(&self) -> Option<Time> {
        self.queue.front().map(|(t, _)| *t + self.timeout)
    }

    /// Next batch to cut at `now`, if any: a full batch as soon as one is
    /// available, otherwise everything queued once the timer has fired.
    pub fn cut(&mut self, now: Time) -> Option<Vec<TransactionEnvelope>> {
        let n = if self.queue.len() >= self.max_txs {
            self.max_txs
        } else if self.deadline().is_some_and(|d| d <= now) {
            self.queue.len()
        } else {
            return None;
        };
        let batch: Vec<_> = self.queue.drain(..n).map(|(_, e)| e).collect();
        for e in &batch {
            self.queued.remove(&e.tx_id);
        }
        Some(batch)
    }

    pub fn drain(&mut self) -> Vec<TransactionEnvelope> {
        self.queued.clear();
        self.queue.drain(..).map(|(_, e)| e).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Hash32;
    use crate::identity::Did;
    use crate::ledger::{ProposalHeader, RwSet};
    use crate::crypto::{Keypair, Signature};

    fn env(i: u8) -> TransactionEnvelope {
        let header = ProposalHeader {
            chaincode: "x".into(),
            function: "f".into(),
            args: vec![],
            client: Did::from_public_key(&Keypair::from_secret(&[1; 32]).public()),
            timestamp: i as u64,
        };
        TransactionEnvelope {
            tx_id: TxId(Hash32([i; 32])),
            header,
            client_signature: Signature([0; 64]),
            rwset: RwSet::default(),
            response: Default::default(),
            endorsements: vec![],
        }
    }

    #[test]
    fn cuts_on_size() {
        let mut c = BlockCutter::new(2, Span::from_millis(250));
        c.push(Time::ZERO, env(1));
        assert!(c.cut(Time::ZERO).is_none());
        c.push(Time::ZERO, env(2));
        c.push(Time::ZERO, env(3));
        assert_eq!(c.cut(Time::ZERO).unwrap().len(), 2);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn cuts_on_timeout_never_empty() {
        let mut c = BlockCutter::new(10, Span::from_millis(250));
        assert!(c.cut(Time::from_millis(1000)).is_none());
        c.push(Time::from_millis(100), env(1));
        assert_eq!(c.deadline(), Some(Time::from_millis(350)));
        assert!(c.cut(Time::from_millis(349)).is_none());
        assert_eq!(c.cut(Time::from_millis(350)).unwrap().len(), 1);
        assert!(c.cut(Time::from_millis(10_000)).is_none());
    }

    #[test]
    fn duplicate_queued_once() {
        let mut c = BlockCutter::new(10, Span::from_millis(1));
        assert!(c.push(Time::ZERO, env(1)));
        assert!(!c.push(Time::ZERO, env(1)));
        assert_eq!(c.len(), 1);
    }
}
