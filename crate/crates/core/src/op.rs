//! Operation-based EDP.
//!
//! An [`Operation`] is the compression of an upward extension to its top
//! payload and the hashes of its maximal lower bounds. A [`Replica`] applies
//! operations once every hash resolves against its [`HashIndex`], parking
//! the rest in a bounded [`PendingBuffer`] and draining it as ancestors
//! arrive.
//!
//! [`HashIndex`]: crate::state::HashIndex

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, trace};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::id::{ElementId, Payload, Universe};
use crate::state::{EdpState, StateError, UpwardExtension};
use crate::wire::{Reader, WireError, Writer, WIRE_VERSION};

/// Domain-separation tag for element hashes.
pub const ELEMENT_TAG: u8 = 0x01;

/// Default number of operations a replica parks while awaiting ancestors.
pub const DEFAULT_PENDING_CAPACITY: usize = 10_000;

/// `h(payload, H_mlb)`: SHA-256 over
/// `tag ‖ u64be(len) ‖ payload ‖ u64be(count) ‖ digests ascending`.
pub fn hash_element(payload: &Payload, mlb_hashes: &BTreeSet<ElementId>) -> ElementId {
    let mut w = Writer::new();
    w.u8(ELEMENT_TAG)
        .bytes(payload.as_bytes())
        .digests(mlb_hashes.iter());
    let digest = Sha256::digest(w.finish());
    ElementId(digest.into())
}

/// `o = (y, H_mlb)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Operation {
    pub payload: Payload,
    pub mlb_hashes: BTreeSet<ElementId>,
}

impl Operation {
    pub fn new(payload: impl Into<Payload>, mlb_hashes: impl IntoIterator<Item = ElementId>) -> Self {
        Self {
            payload: payload.into(),
            mlb_hashes: mlb_hashes.into_iter().collect(),
        }
    }

    /// Id of the element this operation introduces.
    pub fn id(&self) -> ElementId {
        hash_element(&self.payload, &self.mlb_hashes)
    }

    /// `version ‖ u64be(len) ‖ payload ‖ u64be(count) ‖ digests ascending`.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(WIRE_VERSION)
            .bytes(self.payload.as_bytes())
            .digests(self.mlb_hashes.iter());
        w.finish()
    }

    pub fn encoded_len(&self) -> usize {
        1 + 8 + self.payload.len() + 8 + 32 * self.mlb_hashes.len()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let op = Self::read(&mut r)?;
        r.finish()?;
        Ok(op)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let version = r.u8()?;
        if version != WIRE_VERSION {
            return Err(WireError::Version(version));
        }
        let payload = Payload(r.bytes()?.to_vec());
        let mlb_hashes = r.sorted_digests()?.into_iter().collect();
        Ok(Self { payload, mlb_hashes })
    }
}

/// Which precondition of `generate` failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assertion {
    /// `u ∉ U`
    AlreadyPresent,
    /// `mlb(u) ≠ ∅`
    EmptyMlb,
    /// `mlb(u) ⊊ U`
    MlbNotInState,
    /// `u` is a valid upward extension of `U`
    InvalidExtension,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpError {
    #[error("assertion failed: {0:?}")]
    AssertionFailed(Assertion),
    #[error("upward extension is invalid")]
    InvalidExtension,
    #[error("{} unresolved ancestor hashes", .0.len())]
    UnresolvedAncestors(Vec<ElementId>),
    #[error(transparent)]
    State(#[from] StateError),
}

/// `o(u) = (max(X(u)), H(mlb(u)))`.
///
/// Checks that the top is an element of the relation and that its id is the
/// hash of its payload and maximal lower bounds.
pub fn compress(u: &UpwardExtension) -> Result<Operation, OpError> {
    let structure = u.structure().map_err(|_| OpError::InvalidExtension)?;
    if !structure.elements().contains(&u.top_id) {
        return Err(OpError::InvalidExtension);
    }
    let op = Operation {
        payload: u.top_payload.clone(),
        mlb_hashes: u.mlb(),
    };
    if op.id() != u.top_id {
        return Err(OpError::InvalidExtension);
    }
    Ok(op)
}

/// `u(y, P) = {y}² ∪ {y} × X(P) ∪ P` with `P` the union of the state's
/// extensions named by `o.mlb_hashes`.
pub fn reconstruct(o: &Operation, state: &EdpState) -> Result<UpwardExtension, OpError> {
    let missing = state.index().unresolved(&o.mlb_hashes);
    if !missing.is_empty() {
        return Err(OpError::UnresolvedAncestors(missing));
    }
    let top = o.id();
    let mut relation = BTreeSet::new();
    let mut element_payloads = BTreeMap::new();
    for m in &o.mlb_hashes {
        relation.extend(state.relation_of(m).expect("resolved"));
    }
    let below: BTreeSet<ElementId> = relation
        .iter()
        .filter(|(a, b)| a == b)
        .map(|(a, _): &(ElementId, ElementId)| *a)
        .collect();
    for e in &below {
        element_payloads.insert(*e, state.payload(e).expect("resolved").clone());
        relation.insert((top, *e));
    }
    relation.insert((top, top));
    element_payloads.insert(top, o.payload.clone());
    Ok(UpwardExtension {
        top_id: top,
        top_payload: o.payload.clone(),
        relation,
        element_payloads,
    })
}

/// Side-effect-free `generate`: checks the preconditions and compresses `u`.
pub fn generate(state: &EdpState, u: &UpwardExtension) -> Result<Operation, OpError> {
    if state.contains(&u.top_id) {
        return Err(OpError::AssertionFailed(Assertion::AlreadyPresent));
    }
    let mlb = u.mlb();
    if mlb.is_empty() {
        return Err(OpError::AssertionFailed(Assertion::EmptyMlb));
    }
    if !mlb.iter().all(|m| state.contains(m)) {
        return Err(OpError::AssertionFailed(Assertion::MlbNotInState));
    }
    if !state.validate_extension(u) {
        return Err(OpError::AssertionFailed(Assertion::InvalidExtension));
    }
    compress(u)
}

/// Operations awaiting unresolved ancestors, evicted oldest-first when full.
#[derive(Debug, Clone)]
pub struct PendingBuffer {
    capacity: usize,
    next_arrival: u64,
    by_arrival: BTreeMap<u64, ElementId>,
    ops: BTreeMap<ElementId, (Operation, u64)>,
    /// Missing ancestor hash to the pending operations waiting on it.
    waiting: BTreeMap<ElementId, Vec<ElementId>>,
}

impl PendingBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            next_arrival: 0,
            by_arrival: BTreeMap::new(),
            ops: BTreeMap::new(),
            waiting: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn contains(&self, id: &ElementId) -> bool {
        self.ops.contains_key(id)
    }

    /// Pending operations in arrival order.
    pub fn iter(&self) -> impl Iterator<Item = &Operation> {
        self.by_arrival.values().map(|id| &self.ops[id].0)
    }

    /// Hashes some pending operation waits on that are neither applied nor
    /// themselves pending.
    pub fn missing(&self) -> BTreeSet<ElementId> {
        self.waiting
            .keys()
            .filter(|h| !self.ops.contains_key(h))
            .copied()
            .collect()
    }

    /// Parks `op`; returns the id evicted to make room, if any.
    fn park(&mut self, id: ElementId, op: Operation, missing: &[ElementId]) -> Option<ElementId> {
        let evicted = if self.ops.len() >= self.capacity {
            let (_, oldest) = self.by_arrival.pop_first().expect("nonempty when full");
            self.remove(&oldest);
            Some(oldest)
        } else {
            None
        };
        for m in missing {
            self.waiting.entry(*m).or_default().push(id);
        }
        let arrival = self.next_arrival;
        self.next_arrival += 1;
        self.by_arrival.insert(arrival, id);
        self.ops.insert(id, (op, arrival));
        evicted
    }

    fn remove(&mut self, id: &ElementId) -> Option<Operation> {
        let (op, arrival) = self.ops.remove(id)?;
        self.by_arrival.remove(&arrival);
        for m in &op.mlb_hashes {
            if let Some(list) = self.waiting.get_mut(m) {
                list.retain(|w| w != id);
                if list.is_empty() {
                    self.waiting.remove(m);
                }
            }
        }
        Some(op)
    }

    fn take_waiters(&mut self, resolved: &ElementId) -> Vec<ElementId> {
        self.waiting.remove(resolved).unwrap_or_default()
    }
}

/// Why `effect` discarded an operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    EmptyMlb,
    InvalidPayload,
    /// Some maximal lower bound lies below another, so the hash does not
    /// match the reconstructed extension.
    NotAntichain,
    /// Refused by an admission predicate layered on top (e.g. authorization).
    NotAdmitted,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReplicaStats {
    pub applied: u64,
    pub parked: u64,
    pub evicted: u64,
    pub duplicates: u64,
    pub rejected: u64,
}

/// One replica of an op-based EDP: state, index and pending buffer.
#[derive(Debug, Clone)]
pub struct Replica {
    state: EdpState,
    pending: PendingBuffer,
    stats: ReplicaStats,
}

/// Admission hook consulted after structural checks, before an operation is
/// applied.
pub trait Admission {
    fn admit(&mut self, state: &EdpState, op: &Operation, id: ElementId) -> bool;
}

/// Admits everything.
pub struct AdmitAll;

impl Admission for AdmitAll {
    fn admit(&mut self, _: &EdpState, _: &Operation, _: ElementId) -> bool {
        true
    }
}

impl<F: FnMut(&EdpState, &Operation, ElementId) -> bool> Admission for F {
    fn admit(&mut self, state: &EdpState, op: &Operation, id: ElementId) -> bool {
        self(state, op, id)
    }
}

impl Replica {
    pub fn new(universe: Universe) -> Result<Self, OpError> {
        Self::with_capacity(universe, DEFAULT_PENDING_CAPACITY)
    }

    pub fn with_capacity(universe: Universe, pending_capacity: usize) -> Result<Self, OpError> {
        Ok(Self {
            state: EdpState::new(universe)?,
            pending: PendingBuffer::new(pending_capacity),
            stats: ReplicaStats::default(),
        })
    }

    pub fn state(&self) -> &EdpState {
        &self.state
    }

    pub fn pending(&self) -> &PendingBuffer {
        &self.pending
    }

    pub fn stats(&self) -> ReplicaStats {
        self.stats
    }

    pub fn missing(&self) -> BTreeSet<ElementId> {
        self.pending.missing()
    }

    /// New event over the current maximal elements (causal usage).
    pub fn generate_event(&self, payload: impl Into<Payload>) -> Result<Operation, OpError> {
        let payload = payload.into();
        if !self.state.universe().is_valid(&payload) {
            return Err(StateError::InvalidPayload.into());
        }
        let op = Operation {
            payload,
            mlb_hashes: self.state.max_ids().clone(),
        };
        if self.state.contains(&op.id()) {
            return Err(OpError::AssertionFailed(Assertion::AlreadyPresent));
        }
        Ok(op)
    }

    /// Generates an event over `max(U)` and applies it locally.
    pub fn update(&mut self, payload: impl Into<Payload>) -> Result<Operation, OpError> {
        let op = self.generate_event(payload)?;
        let applied = self.effect(op.clone());
        debug_assert_eq!(applied.first(), Some(&op.id()));
        Ok(op)
    }

    /// Applies `op` if its ancestors resolve, otherwise parks it. Returns the
    /// ids applied by this call, cascades included, in application order.
    pub fn effect(&mut self, op: Operation) -> Vec<ElementId> {
        self.effect_with(op, &mut AdmitAll)
    }

    pub fn effect_with(&mut self, op: Operation, admission: &mut dyn Admission) -> Vec<ElementId> {
        let id = op.id();
        if self.state.contains(&id) || self.pending.contains(&id) {
            self.stats.duplicates += 1;
            return Vec::new();
        }
        if op.mlb_hashes.is_empty() {
            self.reject(id, Rejection::EmptyMlb);
            return Vec::new();
        }
        let missing = self.state.index().unresolved(&op.mlb_hashes);
        if !missing.is_empty() {
            trace!("parking {id:?}, awaiting {} ancestors", missing.len());
            self.stats.parked += 1;
            if let Some(evicted) = self.pending.park(id, op, &missing) {
                debug!("pending buffer full, evicted {evicted:?}");
                self.stats.evicted += 1;
            }
            return Vec::new();
        }

        let mut applied = Vec::new();
        if self.try_apply(id, op, admission) {
            applied.push(id);
            let mut cursor = 0;
            while cursor < applied.len() {
                let resolved = applied[cursor];
                cursor += 1;
                for waiter in self.pending.take_waiters(&resolved) {
                    let Some((wop, _)) = self.pending.ops.get(&waiter) else {
                        continue;
                    };
                    if !self.state.index().unresolved(&wop.mlb_hashes).is_empty() {
                        continue;
                    }
                    let wop = self.pending.remove(&waiter).expect("present");
                    if self.try_apply(waiter, wop, admission) {
                        applied.push(waiter);
                    }
                }
            }
        }
        applied
    }

    fn try_apply(&mut self, id: ElementId, op: Operation, admission: &mut dyn Admission) -> bool {
        if !self.state.universe().is_valid(&op.payload) {
            self.reject(id, Rejection::InvalidPayload);
            return false;
        }
        if op.mlb_hashes.len() > 1 {
            for a in &op.mlb_hashes {
                for b in &op.mlb_hashes {
                    if a != b && self.state.is_below(a, b) {
                        self.reject(id, Rejection::NotAntichain);
                        return false;
                    }
                }
            }
        }
        if !admission.admit(&self.state, &op, id) {
            self.reject(id, Rejection::NotAdmitted);
            return false;
        }
        self.state.insert_node(id, op.payload, op.mlb_hashes);
        self.stats.applied += 1;
        true
    }

    fn reject(&mut self, id: ElementId, why: Rejection) {
        debug!("discarding {id:?}: {why:?}");
        self.stats.rejected += 1;
    }
}
