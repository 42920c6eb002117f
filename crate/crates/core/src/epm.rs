//! EDP-based map: a key-value view where, per key, the largest update in a
//! deterministic linearization of the partial order wins.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use thiserror::Error;

use crate::id::{ElementId, Payload};
use crate::op::{OpError, Operation, Replica};
use crate::state::{EdpState, StateError};
use crate::wire::{Reader, Writer};

/// Leading byte of a key-value payload.
pub const KV_TAG: u8 = 0x02;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EpmError {
    #[error("unknown extension {0:?}")]
    UnknownExtension(ElementId),
    #[error("extension set is not downward closed: {0:?} lacks an ancestor")]
    NotDownwardClosed(ElementId),
}

impl From<StateError> for EpmError {
    fn from(e: StateError) -> Self {
        match e {
            StateError::UnknownExtension(id) => EpmError::UnknownExtension(id),
            other => unreachable!("closure lookups only fail on unknown ids: {other}"),
        }
    }
}

/// `(k ↦ v)`: `tag ‖ u64be(len) ‖ key ‖ u64be(len) ‖ value`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvPayload {
    pub key: Vec<u8>,
    pub value: Vec<u8>,
}

impl KvPayload {
    pub fn new(key: impl Into<Vec<u8>>, value: impl Into<Vec<u8>>) -> Self {
        Self {
            key: key.into(),
            value: value.into(),
        }
    }

    pub fn encode(&self) -> Payload {
        let mut w = Writer::new();
        w.u8(KV_TAG).bytes(&self.key).bytes(&self.value);
        Payload(w.finish())
    }

    /// `None` for payloads outside the key-value subset.
    pub fn decode(payload: &Payload) -> Option<Self> {
        let mut r = Reader::new(payload.as_bytes());
        if r.u8().ok()? != KV_TAG {
            return None;
        }
        let key = r.bytes().ok()?.to_vec();
        let value = r.bytes().ok()?.to_vec();
        r.finish().ok()?;
        Some(Self { key, value })
    }
}

/// Injective key-value map.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct EpmMap {
    entries: BTreeMap<Vec<u8>, Vec<u8>>,
}

impl EpmMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &[u8]) -> Option<&[u8]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn insert(&mut self, key: Vec<u8>, value: Vec<u8>) {
        self.entries.insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u8>, &Vec<u8>)> {
        self.entries.iter()
    }

    /// `M ⊎ u`: rebinds the key if `payload` is a key-value pair, otherwise
    /// leaves the map unchanged.
    pub fn apply(&mut self, payload: &Payload) {
        if let Some(kv) = KvPayload::decode(payload) {
            self.entries.insert(kv.key, kv.value);
        }
    }
}

/// `M ⊎ u` as a value-returning function.
pub fn map_apply(m: &EpmMap, payload: &Payload) -> EpmMap {
    let mut out = m.clone();
    out.apply(payload);
    out
}

/// Strict total order used to break ties between extensions the partial
/// order leaves incomparable. Smaller keys come first.
pub trait TieOrder {
    type Key: Ord;
    fn key(&self, state: &EdpState, id: &ElementId) -> Self::Key;
}

/// Ascending element id: `h(u₁) < h(u₂)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashOrder;

impl TieOrder for HashOrder {
    type Key = ElementId;
    fn key(&self, _: &EdpState, id: &ElementId) -> ElementId {
        *id
    }
}

/// Total order extending `⊆` on a downward-closed set of extensions.
///
/// Topological sort that always emits the tie-order-least extension among
/// those whose ancestors have all been emitted. This yields the
/// lexicographically least linear extension of `⊆` under the tie order.
pub fn linearize<O: TieOrder>(
    state: &EdpState,
    t: &BTreeSet<ElementId>,
    order: &O,
) -> Result<Vec<ElementId>, EpmError> {
    let mut indegree: BTreeMap<ElementId, usize> = BTreeMap::new();
    let mut children: BTreeMap<ElementId, Vec<ElementId>> = BTreeMap::new();
    for id in t {
        let mlb = state.mlb_of(id).ok_or(EpmError::UnknownExtension(*id))?;
        for parent in mlb {
            if !t.contains(parent) {
                return Err(EpmError::NotDownwardClosed(*id));
            }
            children.entry(*parent).or_default().push(*id);
        }
        indegree.insert(*id, mlb.len());
    }
    let mut ready: BinaryHeap<Reverse<(O::Key, ElementId)>> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| Reverse((order.key(state, id), *id)))
        .collect();
    let mut out = Vec::with_capacity(t.len());
    while let Some(Reverse((_, id))) = ready.pop() {
        out.push(id);
        for child in children.get(&id).into_iter().flatten() {
            let d = indegree.get_mut(child).expect("child in t");
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse((order.key(state, child), *child)));
            }
        }
    }
    debug_assert_eq!(out.len(), t.len());
    Ok(out)
}

/// `get(T)`: folds `⊎` over the hash-ordered linearization of `T↓`.
pub fn get(state: &EdpState, t: &BTreeSet<ElementId>) -> Result<EpmMap, EpmError> {
    let closure = state.downward_closure(t)?;
    let mut map = EpmMap::new();
    for id in linearize(state, &closure, &HashOrder)? {
        map.apply(state.payload(&id).expect("in state"));
    }
    Ok(map)
}

/// `get(max(U))`: the map at the replica's current state.
pub fn current(state: &EdpState) -> EpmMap {
    get(state, state.max_ids()).expect("max elements are applied")
}

/// Writes `(k ↦ v)` over the current maximal elements and applies it locally.
pub fn put(
    replica: &mut Replica,
    key: impl Into<Vec<u8>>,
    value: impl Into<Vec<u8>>,
) -> Result<Operation, OpError> {
    replica.update(KvPayload::new(key, value).encode())
}
