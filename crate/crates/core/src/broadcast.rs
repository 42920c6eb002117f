//! Anti-entropy: replicas gossip their maximal elements and iteratively
//! fetch missing ancestors, verifying each one through the hash chain.
//!
//! Message layout: `version ‖ kind ‖ body`, where operations inside a body
//! are length-prefixed [`Operation`] encodings.

use std::collections::{BTreeMap, BTreeSet};

use log::trace;

use crate::id::ElementId;
use crate::op::{OpError, Operation, Replica};
use crate::state::EdpState;
use crate::wire::{Reader, WireError, Writer, WIRE_VERSION};

const KIND_FRONTIER: u8 = 1;
const KIND_FETCH_REQUEST: u8 = 2;
const KIND_FETCH_RESPONSE: u8 = 3;

/// Smallest possible operation encoding, used to bound counts while decoding.
const MIN_OP_LEN: usize = 1 + 8 + 8;

/// What the broadcast layer needs from a replica.
pub trait OpReplica {
    fn state(&self) -> &EdpState;
    /// Delivers an operation; returns ids applied as a result.
    fn deliver(&mut self, op: Operation) -> Vec<ElementId>;
    /// Ancestor hashes the replica is waiting for.
    fn missing(&self) -> BTreeSet<ElementId>;
    fn pending_len(&self) -> usize;
}

impl OpReplica for Replica {
    fn state(&self) -> &EdpState {
        Replica::state(self)
    }

    fn deliver(&mut self, op: Operation) -> Vec<ElementId> {
        self.effect(op)
    }

    fn missing(&self) -> BTreeSet<ElementId> {
        Replica::missing(self)
    }

    fn pending_len(&self) -> usize {
        self.pending().len()
    }
}

/// The operations for `max(U)` of the sender.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Frontier {
    ops: BTreeMap<ElementId, Operation>,
}

impl Frontier {
    pub fn from_state(state: &EdpState) -> Self {
        state
            .max_ids()
            .iter()
            .map(|id| state.operation(id).expect("max element present"))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ElementId> {
        self.ops.keys()
    }

    pub fn ops(&self) -> impl Iterator<Item = &Operation> {
        self.ops.values()
    }

    pub fn get(&self, id: &ElementId) -> Option<&Operation> {
        self.ops.get(id)
    }
}

impl FromIterator<Operation> for Frontier {
    fn from_iter<I: IntoIterator<Item = Operation>>(iter: I) -> Self {
        Self {
            ops: iter.into_iter().map(|op| (op.id(), op)).collect(),
        }
    }
}

/// Ids of `op`'s downward closure, resolving ancestors through `resolver`
/// and through the other operations in `pool`.
fn op_closure(
    op: &Operation,
    pool: &BTreeMap<ElementId, Operation>,
    resolver: &EdpState,
) -> Result<BTreeSet<ElementId>, Vec<ElementId>> {
    let mut out = BTreeSet::new();
    let mut missing = BTreeSet::new();
    let mut stack: Vec<ElementId> = op.mlb_hashes.iter().copied().collect();
    out.insert(op.id());
    while let Some(h) = stack.pop() {
        if out.contains(&h) {
            continue;
        }
        if let Some(c) = resolver.closure(&h) {
            out.extend(c.iter().copied());
        } else if let Some(p) = pool.get(&h) {
            out.insert(h);
            stack.extend(p.mlb_hashes.iter().copied());
        } else {
            missing.insert(h);
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(missing.into_iter().collect())
    }
}

/// `max(F₁ ∪ F₂)` under extension inclusion.
///
/// Ancestry of every member must be known to `resolver` or to other union
/// members; otherwise the join is deferred with the missing hashes.
pub fn frontier_join(a: &Frontier, b: &Frontier, resolver: &EdpState) -> Result<Frontier, OpError> {
    let mut union = a.ops.clone();
    union.extend(b.ops.iter().map(|(k, v)| (*k, v.clone())));
    let mut closures = BTreeMap::new();
    let mut missing = BTreeSet::new();
    for (id, op) in &union {
        match op_closure(op, &union, resolver) {
            Ok(c) => {
                closures.insert(*id, c);
            }
            Err(m) => missing.extend(m),
        }
    }
    if !missing.is_empty() {
        return Err(OpError::UnresolvedAncestors(missing.into_iter().collect()));
    }
    Ok(union
        .into_iter()
        .filter(|(id, _)| {
            !closures
                .iter()
                .any(|(other, c)| other != id && c.contains(id))
        })
        .map(|(_, op)| op)
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchRequest {
    pub ids: BTreeSet<ElementId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchResponse {
    pub ops: Vec<Operation>,
}

impl FetchResponse {
    /// Serves the requested ids this replica has applied; may be partial.
    pub fn answer(state: &EdpState, request: &FetchRequest) -> Self {
        Self {
            ops: request
                .ids
                .iter()
                .filter_map(|id| state.operation(id))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Frontier(Frontier),
    FetchRequest(FetchRequest),
    FetchResponse(FetchResponse),
}

impl Message {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(WIRE_VERSION);
        match self {
            Message::Frontier(f) => {
                w.u8(KIND_FRONTIER).u64(f.ops.len() as u64);
                for op in f.ops() {
                    w.bytes(&op.encode());
                }
            }
            Message::FetchRequest(r) => {
                w.u8(KIND_FETCH_REQUEST).digests(r.ids.iter());
            }
            Message::FetchResponse(r) => {
                w.u8(KIND_FETCH_RESPONSE).u64(r.ops.len() as u64);
                for op in &r.ops {
                    w.bytes(&op.encode());
                }
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.u8()?;
        if version != WIRE_VERSION {
            return Err(WireError::Version(version));
        }
        let msg = match r.u8()? {
            KIND_FRONTIER => Message::Frontier(read_ops(&mut r)?.into_iter().collect()),
            KIND_FETCH_REQUEST => Message::FetchRequest(FetchRequest {
                ids: r.sorted_digests()?.into_iter().collect(),
            }),
            KIND_FETCH_RESPONSE => Message::FetchResponse(FetchResponse {
                ops: read_ops(&mut r)?,
            }),
            other => return Err(WireError::Tag(other)),
        };
        r.finish()?;
        Ok(msg)
    }
}

fn read_ops(r: &mut Reader<'_>) -> Result<Vec<Operation>, WireError> {
    let n = r.count(8 + MIN_OP_LEN)?;
    let mut ops = Vec::with_capacity(n);
    for _ in 0..n {
        ops.push(Operation::decode(r.bytes()?)?);
    }
    Ok(ops)
}

/// Applies a received frontier; returns the ids applied.
pub fn on_receive_frontier<R: OpReplica>(replica: &mut R, frontier: &Frontier) -> Vec<ElementId> {
    let mut applied = Vec::new();
    for op in frontier.ops() {
        if !replica.state().contains(&op.id()) {
            applied.extend(replica.deliver(op.clone()));
        }
    }
    applied
}

#[derive(Debug, Clone)]
struct FetchHint {
    preferred: usize,
    attempts: usize,
}

/// Per-replica fetch bookkeeping for the iterative ancestor query loop.
///
/// A missing hash is first requested from the peer whose message revealed
/// it, then from the other peers in round-robin order, one peer per round.
#[derive(Debug, Clone, Default)]
pub struct AntiEntropy {
    hints: BTreeMap<ElementId, FetchHint>,
    outstanding: BTreeMap<usize, BTreeSet<ElementId>>,
}

impl AntiEntropy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Handles a frontier from `from`; returns ids applied.
    pub fn on_frontier<R: OpReplica>(&mut self, replica: &mut R, from: usize, f: &Frontier) -> Vec<ElementId> {
        let applied = on_receive_frontier(replica, f);
        self.note_missing(replica, from);
        applied
    }

    /// Handles a fetch response from `from`, ignoring operations that were
    /// not requested from that peer.
    pub fn on_fetch_response<R: OpReplica>(
        &mut self,
        replica: &mut R,
        from: usize,
        response: &FetchResponse,
    ) -> Vec<ElementId> {
        let requested = self.outstanding.get(&from).cloned().unwrap_or_default();
        let mut applied = Vec::new();
        for op in &response.ops {
            let id = op.id();
            if !requested.contains(&id) {
                trace!("ignoring unrequested {id:?} from peer {from}");
                continue;
            }
            applied.extend(replica.deliver(op.clone()));
        }
        self.note_missing(replica, from);
        applied
    }

    fn note_missing<R: OpReplica>(&mut self, replica: &R, from: usize) {
        for id in replica.missing() {
            self.hints.entry(id).or_insert(FetchHint {
                preferred: from,
                attempts: 0,
            });
        }
    }

    /// Fetch requests for this round, grouped by target peer.
    pub fn requests<R: OpReplica>(&mut self, replica: &R, peers: &[usize]) -> Vec<(usize, FetchRequest)> {
        let missing = replica.missing();
        self.hints.retain(|id, _| missing.contains(id));
        // Earlier requests stay valid until answered: a response may arrive
        // several rounds later on slow links.
        for ids in self.outstanding.values_mut() {
            ids.retain(|id| missing.contains(id));
        }
        self.outstanding.retain(|_, ids| !ids.is_empty());
        if peers.is_empty() {
            return Vec::new();
        }
        let mut round: BTreeMap<usize, BTreeSet<ElementId>> = BTreeMap::new();
        for id in &missing {
            let hint = self.hints.entry(*id).or_insert(FetchHint {
                preferred: peers[0],
                attempts: 0,
            });
            let start = peers.iter().position(|p| *p == hint.preferred).unwrap_or(0);
            let target = peers[(start + hint.attempts) % peers.len()];
            hint.attempts += 1;
            self.outstanding.entry(target).or_default().insert(*id);
            round.entry(target).or_default().insert(*id);
        }
        round
            .into_iter()
            .map(|(peer, ids)| (peer, FetchRequest { ids }))
            .collect()
    }

    pub fn outstanding_len(&self) -> usize {
        self.outstanding.values().map(BTreeSet::len).sum()
    }
}
