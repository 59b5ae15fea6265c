// SPDX-License-Identifier: Apache-2.0

//! Timed fault and load scripts.
//!
//! A script is a JSON list of actions, or an object with `actions` and an
//! optional `until_ms`:
//!
//! ```json
//! [
//!   {"at_ms": 0, "action": "load", "count": 200, "rate": 50, "arm": "private+cas"},
//!   {"at_ms": 2000, "action": "kill", "node": "n1"},
//!   {"at_ms": 4000, "action": "restart", "node": "n1"}
//! ]
//! ```

use std::path::Path;

use deon_core::error::{Error, Result};
use deon_core::net::NodeId;
use deon_core::time::{Span, Time};
use serde::{Deserialize, Serialize};

use crate::bus::Bus;
use crate::load::{Arm, Arrivals, LoadGen, LoadSpec, Sample};
use crate::session::Session;
use crate::sim::{NetAction, SimNet};
use crate::trace::CorruptTarget;
use crate::wall::{WallClient, WallNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Kill {
        node: String,
    },
    Restart {
        node: String,
    },
    Partition {
        groups: Vec<Vec<String>>,
    },
    Heal,
    /// Bit flip in stored data. `block` needs `index`; `private` takes an
    /// optional `key` and a `field` (salt|cid); `cas` an optional `cid`.
    InjectCorruption {
        target: String,
        node: String,
        #[serde(default)]
        index: usize,
        #[serde(default)]
        key: String,
        #[serde(default = "salt")]
        field: String,
        #[serde(default)]
        cid: String,
        #[serde(default)]
        byte: usize,
        #[serde(default)]
        bit: u8,
    },
    Load {
        count: usize,
        rate: f64,
        #[serde(default = "baseline")]
        arm: Arm,
        #[serde(default)]
        arrivals: Arrivals,
    },
}

fn salt() -> String {
    "salt".into()
}

fn baseline() -> Arm {
    Arm::BASELINE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedAction {
    pub at_ms: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub actions: Vec<TimedAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until_ms: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    List(Vec<TimedAction>),
    Full(Script),
}

impl Script {
    pub fn parse(text: &str) -> Result<Script> {
        let f: ScriptFile = serde_json::from_str(text).map_err(|e| Error::InvalidRequest(format!("scenario: {e}")))?;
        let mut s = match f {
            ScriptFile::List(actions) => Script { actions, until_ms: None },
            ScriptFile::Full(s) => s,
        };
        s.actions.sort_by(|a, b| a.at_ms.total_cmp(&b.at_ms));
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Script> {
        Script::parse(&std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?)
    }

    fn validate(&self) -> Result<()> {
        for a in &self.actions {
            if !(a.at_ms >= 0.0 && a.at_ms.is_finite()) {
                return Err(Error::InvalidRequest("at_ms must be a non-negative number".into()));
            }
            if let Action::InjectCorruption { target, .. } = &a.action {
                if !["block", "private", "cas"].contains(&target.as_str()) {
                    return Err(Error::InvalidRequest(format!("unknown corruption target {target:?}")));
                }
            }
        }
        Ok(())
    }

    /// Latest time any action refers to, plus the duration of its load.
    pub fn horizon(&self) -> Span {
        let mut end = 0.0f64;
        for a in &self.actions {
            let extra = match &a.action {
                Action::Load { count, rate, .. } => *count as f64 / rate * 1000.0,
                _ => 0.0,
            };
            end = end.max(a.at_ms + extra);
        }
        Span::from_secs_f64(end / 1000.0)
    }
}

fn node(name: &str) -> Result<NodeId> {
    name.parse()
}

impl Action {
    /// The network-level effect, if this is not a load action.
    pub fn to_net(&self) -> Result<Option<NetAction>> {
        Ok(Some(match self {
            Action::Kill { node: n } => NetAction::Kill(node(n)?),
            Action::Restart { node: n } => NetAction::Restart(node(n)?),
            Action::Partition { groups } => NetAction::Partition(
                groups.iter().map(|g| g.iter().map(|n| node(n)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?,
            ),
            Action::Heal => NetAction::Heal,
            Action::InjectCorruption { target, node: n, index, key, field, cid, byte, bit } => {
                let node = node(n)?;
                NetAction::Corrupt(match target.as_str() {
                    "block" => CorruptTarget::Block { node, index: *index, byte: *byte, bit: *bit },
                    "private" => CorruptTarget::Private { node, key: key.clone(), field: field.clone(), byte: *byte, bit: *bit },
                    _ => CorruptTarget::Cas { node, cid: cid.clone(), byte: *byte, bit: *bit },
                })
            }
            Action::Load { .. } => return Ok(None),
        }))
    }
}

/// A network the scenario runner can both talk to and break.
pub trait Network: Bus {
    fn apply(&mut self, action: NetAction);
}

impl Network for SimNet {
    fn apply(&mut self, action: NetAction) {
        SimNet::apply(self, action)
    }
}

/// A wall-clock network plus the client endpoint the runner speaks through.
pub struct WallDriver {
    pub net: WallNet,
    pub client: WallClient,
}

impl Bus for WallDriver {
    fn now(&self) -> Time {
        self.client.now()
    }

    fn node_count(&self) -> u32 {
        self.client.node_count()
    }

    fn send(&mut self, client: deon_core::net::ClientId, node: NodeId, req: u64, body: deon_core::service::Request) {
        self.client.send(client, node, req, body)
    }

    fn poll(&mut self, until: Time) -> Vec<crate::bus::ClientResponse> {
        self.client.poll(until)
    }
}

impl Network for WallDriver {
    fn apply(&mut self, action: NetAction) {
        match action {
            NetAction::Kill(n) => self.net.kill(n),
            NetAction::Restart(n) => self.net.restart(n),
            NetAction::Partition(g) => self.net.partition(g),
            NetAction::Heal => self.net.heal(),
            NetAction::Corrupt(t) => {
                self.net.corrupt(t);
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct ScenarioOutcome {
    pub samples: Vec<Sample>,
}

/// Executes `script` from the bus's current time until `until` (relative
/// to the start). Load actions share `sessions` as their clients.
pub fn run_script<N: Network + ?Sized>(
    net: &mut N,
    script: &Script,
    sessions: Vec<Session>,
    seed: u64,
    until: Span,
) -> Result<(ScenarioOutcome, Vec<Session>)> {
    let start = net.now();
    let end = start + until;
    let mut pending = script.actions.iter().peekable();
    let mut loads: Vec<LoadGen> = Vec::new();
    let mut sessions = Some(sessions);
    let mut samples = Vec::new();
    let mut load_no = 0u64;
    loop {
        let now = net.now();
        while let Some(a) = pending.peek() {
            let at = start + Span::from_secs_f64(a.at_ms / 1000.0);
            if at > now {
                break;
            }
            let a = pending.next().expect("peeked");
            match &a.action {
                Action::Load { count, rate, arm, arrivals } => {
                    let mut spec = LoadSpec::new(*count, *rate, *arm);
                    spec.arrivals = *arrivals;
                    spec.seed = seed.wrapping_add(load_no);
                    spec.poll = format!("s{seed}-l{load_no}");
                    load_no += 1;
                    // Loads run one after another on the shared client set.
                    let s = match sessions.take() {
                        Some(s) => s,
                        None => return Err(Error::InvalidRequest("overlapping load actions are not supported".into())),
                    };
                    loads.push(LoadGen::new(spec, s, net.node_count(), now)?);
                }
                other => {
                    if let Some(n) = other.to_net()? {
                        net.apply(n);
                    }
                }
            }
        }
        for l in &mut loads {
            l.act(net);
        }
        if let Some(l) = loads.pop_if_done() {
            let (s, sess) = l.finish();
            samples.extend(s);
            sessions = Some(sess);
        }
        let now = net.now();
        if now >= end {
            break;
        }
        let mut wake = end;
        if let Some(a) = pending.peek() {
            wake = wake.min(start + Span::from_secs_f64(a.at_ms / 1000.0));
        }
        for l in &loads {
            if let Some(t) = l.next_wakeup() {
                wake = wake.min(t);
            }
        }
        let rs = net.poll(wake.max(now));
        for l in &mut loads {
            l.on_responses(net, rs.clone());
        }
    }
    for l in loads {
        let (s, sess) = l.finish();
        samples.extend(s);
        sessions = Some(sess);
    }
    Ok((ScenarioOutcome { samples }, sessions.unwrap_or_default()))
}

trait PopIfDone {
    fn pop_if_done(&mut self) -> Option<LoadGen>;
}

impl PopIfDone for Vec<LoadGen> {
    fn pop_if_done(&mut self) -> Option<LoadGen> {
        let i = self.iter().position(|l| l.is_done())?;
        Some(self.remove(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_list_and_object_forms() {
        let list = r#"[{"at_ms": 10, "action": "kill", "node": "n2"},
                       {"at_ms": 0, "action": "load", "count": 5, "rate": 10, "arm": "private+cas"}]"#;
        let s = Script::parse(list).unwrap();
        assert!(matches!(s.actions[0].action, Action::Load { arm: Arm::PRIVATE_CAS, .. }));
        assert_eq!(s.actions[1].action.to_net().unwrap(), Some(NetAction::Kill(NodeId(1))));
        assert_eq!(s.horizon(), Span::from_millis(500));

        let obj = r#"{"actions": [{"at_ms": 1, "action": "partition", "groups": [["n1"], ["n2", "n3"]]},
                                  {"at_ms": 2, "action": "heal"}], "until_ms": 50}"#;
        let s = Script::parse(obj).unwrap();
        assert_eq!(s.until_ms, Some(50.0));
        assert_eq!(
            s.actions[0].action.to_net().unwrap(),
            Some(NetAction::Partition(vec![vec![NodeId(0)], vec![NodeId(1), NodeId(2)]]))
        );
    }

    #[test]
    fn rejects_bad_scripts() {
        assert!(Script::parse(r#"[{"at_ms": -1, "action": "heal"}]"#).is_err());
        assert!(Script::parse(r#"[{"at_ms": 1, "action": "inject_corruption", "target": "disk", "node": "n1"}]"#).is_err());
        let s = Script::parse(r#"[{"at_ms": 1, "action": "kill", "node": "x"}]"#).unwrap();
        assert!(s.actions[0].action.to_net().is_err());
    }
}
