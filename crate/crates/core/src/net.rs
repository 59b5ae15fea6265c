// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a node (one organization per node).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    /// Organization name of the node, e.g. `org1` for node 0.
    pub fn org(self) -> String {
        format!("org{}", self.0 + 1)
    }

    pub fn from_org(org: &str) -> Option<NodeId> {
        let n: u32 = org.strip_prefix("org")?.parse().ok()?;
        n.checked_sub(1).map(NodeId)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0 + 1)
    }
}

impl std::str::FromStr for NodeId {
    type Err = crate::Error;

    /// Parses the display form `n<k>` (1-based).
    fn from_str(s: &str) -> crate::Result<Self> {
        s.strip_prefix('n')
            .and_then(|k| k.parse::<u32>().ok())
            .filter(|k| *k >= 1)
            .map(|k| NodeId(k - 1))
            .ok_or_else(|| crate::Error::InvalidRequest(format!("{s:?} is not a node name like n1")))
    }
}

/// Identifier of an external client endpoint on the bus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClientId(pub u32);

/// Anything that can send or receive on the bus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Addr {
    Node(NodeId),
    Client(ClientId),
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Addr::Node(n) => write!(f, "{n}"),
            Addr::Client(c) => write!(f, "c{}", c.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn org_names_round_trip() {
        assert_eq!(NodeId(0).org(), "org1");
        assert_eq!(NodeId::from_org("org3"), Some(NodeId(2)));
        assert_eq!(NodeId::from_org("org0"), None);
        assert_eq!(NodeId::from_org("x1"), None);
        assert_eq!("n2".parse::<NodeId>().unwrap(), NodeId(1));
        assert_eq!(NodeId(4).to_string().parse::<NodeId>().unwrap(), NodeId(4));
        assert!("n0".parse::<NodeId>().is_err());
    }
}
