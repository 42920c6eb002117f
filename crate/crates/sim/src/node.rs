//! Correct replicas as driven by the simulator.

use std::collections::BTreeSet;

use edp::acedpm::{AcConfig, AcGenesis, AcReplica, AcView, ObjectId, ReplicaIdentity};
use edp::broadcast::OpReplica;
use edp::epm::{self, EpmMap};
use edp::op::{Replica, ReplicaStats};
use edp::{EdpState, ElementId, Operation, Universe};

use crate::scenario::{Action, Kind, Scenario};

/// Signing identity of node `i`; fixed so scenarios can name subjects by
/// node index.
pub fn identity(i: usize) -> ReplicaIdentity {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&(i as u64 + 1).to_be_bytes());
    seed[8..16].copy_from_slice(b"edp-node");
    ReplicaIdentity::from_seed(seed)
}

pub fn ac_genesis(s: &Scenario) -> AcGenesis {
    let mut g = AcGenesis::new(s.genesis.clone(), identity(s.access.creator).subject());
    g.creator_level = s.access.creator_level;
    if let Some(levels) = &s.access.action_levels {
        g.action_levels = levels.clone();
    }
    g
}

#[derive(Debug, Clone)]
pub enum Node {
    Plain(Replica),
    Access(Box<AcReplica>),
    /// Access-kind replica with the authorization gate removed. Only used to
    /// check that the convergence checker notices a faulty replica.
    Mutant(Replica),
}

impl Node {
    pub fn new(s: &Scenario, index: usize, mutant: bool) -> Self {
        match s.kind {
            Kind::Plain | Kind::Map => Node::Plain(
                Replica::with_capacity(Universe::new(s.genesis.as_str()), s.pending_capacity)
                    .expect("any genesis payload is valid"),
            ),
            Kind::Access => {
                let genesis = ac_genesis(s);
                let config = AcConfig {
                    level_priority: s.access.level_priority,
                    pending_capacity: s.pending_capacity,
                };
                let ac = AcReplica::new(genesis, Some(identity(index)), config);
                if mutant {
                    let universe = ac.state().universe().clone();
                    Node::Mutant(Replica::with_capacity(universe, s.pending_capacity).expect("valid"))
                } else {
                    Node::Access(Box::new(ac))
                }
            }
        }
    }

    pub fn stats(&self) -> ReplicaStats {
        match self {
            Node::Plain(r) | Node::Mutant(r) => r.stats(),
            Node::Access(r) => r.replica().stats(),
        }
    }

    /// Runs a scripted action; `Err` carries why the replica refused.
    pub fn perform(&mut self, action: &Action) -> Result<Operation, String> {
        let err = |e: &dyn std::fmt::Display| e.to_string();
        match (self, action) {
            (Node::Plain(r), Action::Event(p)) => r.update(p.as_str()).map_err(|e| err(&e)),
            (Node::Plain(r), Action::Put { key, value }) => {
                epm::put(r, key.as_bytes(), value.as_bytes()).map_err(|e| err(&e))
            }
            (Node::Access(r), Action::Chat(text)) => r.chat(text.as_bytes()).map_err(|e| err(&e)),
            (Node::Access(r), Action::Membership { subject, value }) => r
                .set_membership(identity(*subject).subject(), *value)
                .map_err(|e| err(&e)),
            (Node::Access(r), Action::Level { subject, level }) => r
                .set_level(ObjectId::Subject(identity(*subject).subject()), *level)
                .map_err(|e| err(&e)),
            (Node::Access(r), Action::ActionLevel { action, level }) => r
                .set_level(ObjectId::Action(action.clone()), *level)
                .map_err(|e| err(&e)),
            (Node::Mutant(_), _) => Err("mutant replicas do not generate".into()),
            (_, a) => Err(format!("action {a:?} does not fit this replica")),
        }
    }

    /// Workload event for `tick`.
    pub fn workload_action(&self, index: usize, tick: u64) -> Action {
        match self {
            Node::Access(_) | Node::Mutant(_) => Action::Chat(format!("r{index} t{tick}")),
            Node::Plain(_) => Action::Event(format!("r{index} t{tick}")),
        }
    }

    /// The largest-element-wins map at the current state.
    pub fn map(&self) -> EpmMap {
        epm::current(self.state())
    }

    /// The access-controlled view; `None` for plain replicas.
    pub fn access_view(&self) -> Option<AcView> {
        match self {
            Node::Access(r) => Some(r.current()),
            _ => None,
        }
    }

    pub fn frontier_size(&self) -> usize {
        self.state().max_ids().len()
    }
}

impl OpReplica for Node {
    fn state(&self) -> &EdpState {
        match self {
            Node::Plain(r) | Node::Mutant(r) => r.state(),
            Node::Access(r) => r.state(),
        }
    }

    fn deliver(&mut self, op: Operation) -> Vec<ElementId> {
        match self {
            Node::Plain(r) | Node::Mutant(r) => r.effect(op),
            Node::Access(r) => r.effect(op),
        }
    }

    fn missing(&self) -> BTreeSet<ElementId> {
        match self {
            Node::Plain(r) | Node::Mutant(r) => r.missing(),
            Node::Access(r) => OpReplica::missing(r.as_ref()),
        }
    }

    fn pending_len(&self) -> usize {
        match self {
            Node::Plain(r) | Node::Mutant(r) => r.pending().len(),
            Node::Access(r) => r.pending_len(),
        }
    }
}

/// Decodes a map entry for display; non-UTF-8 bytes are shown as hex.
pub fn show_bytes(b: &[u8]) -> String {
    String::from_utf8(b.to_vec()).unwrap_or_else(|_| format!("0x{}", hex_of(b)))
}

fn hex_of(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}
