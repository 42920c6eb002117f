//! State-based EDP: a state is a set of single-element upward extensions and
//! join is set union.
//!
//! Extensions are stored compressed, one [`Node`] per element: payload plus
//! the ids of its maximal lower bounds. Because an element id is the hash of
//! its payload and its parents' ids, a node determines its whole downward
//! closure, so the literal relation of an extension can be materialized on
//! demand ([`EdpState::extension`]) and downward closures are cached per
//! node.
//!
//! The state-based route ([`EdpState::validate_extension`], [`EdpState::join`],
//! [`EdpState::extend`]) validates extensions in their literal relational
//! form against the poset definitions. The operation-based route in
//! [`crate::op`] inserts compressed nodes directly after hash checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use log::debug;
use thiserror::Error;

use crate::id::{ElementId, Payload, Universe};
use crate::op::{hash_element, Operation};
use crate::poset::{self, Relation, RelationalStructure};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("payload is not in the object universe")]
    InvalidPayload,
    #[error("upward extension is not valid for this state")]
    InvalidExtension,
    #[error("upward extension {0:?} is already present")]
    AlreadyPresent(ElementId),
    #[error("upward extension has no maximal lower bounds")]
    EmptyMlb,
    #[error("states were created from different genesis elements")]
    GenesisMismatch,
    #[error("unknown extension {0:?}")]
    UnknownExtension(ElementId),
}

/// One applied element in compressed form.
pub(crate) struct Node {
    pub(crate) payload: Payload,
    pub(crate) mlb: BTreeSet<ElementId>,
    /// Length of the longest chain down to genesis.
    pub(crate) depth: u64,
    closure: OnceLock<Arc<BTreeSet<ElementId>>>,
}

impl Node {
    fn new(payload: Payload, mlb: BTreeSet<ElementId>, depth: u64) -> Self {
        Self {
            payload,
            mlb,
            depth,
            closure: OnceLock::new(),
        }
    }
}

/// Map from element id to applied extension: the image of its key set is `H(U)`.
#[derive(Clone, Default)]
pub struct HashIndex {
    nodes: BTreeMap<ElementId, Arc<Node>>,
}

impl HashIndex {
    pub fn contains(&self, id: &ElementId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ElementId> {
        self.nodes.keys()
    }

    /// Ids among `hashes` that do not resolve, in ascending order.
    pub fn unresolved<'a>(&self, hashes: impl IntoIterator<Item = &'a ElementId>) -> Vec<ElementId> {
        hashes
            .into_iter()
            .filter(|h| !self.nodes.contains_key(h))
            .copied()
            .collect()
    }

    pub(crate) fn node(&self, id: &ElementId) -> Option<&Arc<Node>> {
        self.nodes.get(id)
    }
}

/// A single-element upward extension in literal form: the relation of the
/// downward closure of `top_id`, plus the payloads of its elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpwardExtension {
    pub top_id: ElementId,
    pub top_payload: Payload,
    pub relation: Relation,
    pub element_payloads: BTreeMap<ElementId, Payload>,
}

impl UpwardExtension {
    /// `X(u)`: the reflexive pairs of the relation.
    pub fn elements(&self) -> BTreeSet<ElementId> {
        self.relation
            .iter()
            .filter(|(a, b)| a == b)
            .map(|(a, _)| *a)
            .collect()
    }

    /// Maximal lower bounds of the top element, by definition over the
    /// relation. Empty when the top is not an element of the relation.
    pub fn mlb(&self) -> BTreeSet<ElementId> {
        RelationalStructure::from_reflexive(self.relation.clone())
            .ok()
            .and_then(|s| poset::mlb(&self.top_id, &s).ok())
            .unwrap_or_default()
    }

    pub fn structure(&self) -> Result<RelationalStructure, poset::PosetError> {
        RelationalStructure::from_reflexive(self.relation.clone())
    }
}

/// A set of upward extensions forming a genesis-directed poset under `⊆`.
#[derive(Clone)]
pub struct EdpState {
    universe: Universe,
    genesis: ElementId,
    index: HashIndex,
    frontier: BTreeSet<ElementId>,
}

/// `U = { u⊥ = {(x⊥, x⊥)} }` for the universe accepting every payload.
pub fn initial_state(genesis_payload: impl Into<Payload>) -> Result<EdpState, StateError> {
    EdpState::new(Universe::new(genesis_payload))
}

impl EdpState {
    pub fn new(universe: Universe) -> Result<Self, StateError> {
        let genesis_payload = universe.genesis().clone();
        if !universe.is_valid(&genesis_payload) {
            return Err(StateError::InvalidPayload);
        }
        let genesis = hash_element(&genesis_payload, &BTreeSet::new());
        let mut index = HashIndex::default();
        index
            .nodes
            .insert(genesis, Arc::new(Node::new(genesis_payload, BTreeSet::new(), 0)));
        Ok(Self {
            universe,
            genesis,
            index,
            frontier: [genesis].into_iter().collect(),
        })
    }

    /// Builds a state from arbitrary extensions, keeping only those that are
    /// valid against the accumulated state.
    pub fn from_extensions(
        universe: Universe,
        extensions: impl IntoIterator<Item = UpwardExtension>,
    ) -> Result<Self, StateError> {
        let mut state = Self::new(universe)?;
        let mut todo: Vec<UpwardExtension> = extensions.into_iter().collect();
        loop {
            let before = todo.len();
            todo.retain(|u| {
                if state.contains(&u.top_id) {
                    return false;
                }
                if state.validate_extension(u) {
                    state.insert_node(u.top_id, u.top_payload.clone(), u.mlb());
                    false
                } else {
                    true
                }
            });
            if todo.len() == before {
                break;
            }
        }
        if !todo.is_empty() {
            debug!("discarded {} invalid extensions", todo.len());
        }
        Ok(state)
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn genesis_id(&self) -> ElementId {
        self.genesis
    }

    pub fn index(&self) -> &HashIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    /// Always false: a state contains at least `u⊥`.
    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, id: &ElementId) -> bool {
        self.index.contains(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &ElementId> {
        self.index.ids()
    }

    pub fn id_set(&self) -> BTreeSet<ElementId> {
        self.index.ids().copied().collect()
    }

    pub fn payload(&self, id: &ElementId) -> Option<&Payload> {
        self.index.node(id).map(|n| &n.payload)
    }

    /// Ids of the maximal lower bounds of an applied extension.
    pub fn mlb_of(&self, id: &ElementId) -> Option<&BTreeSet<ElementId>> {
        self.index.node(id).map(|n| &n.mlb)
    }

    pub fn depth(&self, id: &ElementId) -> Option<u64> {
        self.index.node(id).map(|n| n.depth)
    }

    /// `max(U)`: extensions not contained in any other.
    pub fn max_ids(&self) -> &BTreeSet<ElementId> {
        &self.frontier
    }

    /// The compressed form of an applied extension.
    pub fn operation(&self, id: &ElementId) -> Option<Operation> {
        self.index.node(id).map(|n| Operation {
            payload: n.payload.clone(),
            mlb_hashes: n.mlb.clone(),
        })
    }

    /// Ids ordered by depth, then by id; every element follows its ancestors.
    pub fn topo_ids(&self) -> Vec<ElementId> {
        let mut ids: Vec<(u64, ElementId)> = self
            .index
            .nodes
            .iter()
            .map(|(id, n)| (n.depth, *id))
            .collect();
        ids.sort();
        ids.into_iter().map(|(_, id)| id).collect()
    }

    /// `X(u)` for the applied extension `id`, i.e. the downward closure of
    /// its top element.
    pub fn closure(&self, id: &ElementId) -> Option<Arc<BTreeSet<ElementId>>> {
        let node = self.index.node(id)?;
        if let Some(c) = node.closure.get() {
            return Some(c.clone());
        }
        // Iterative post-order so deep chains do not exhaust the stack.
        let mut stack = vec![(*id, false)];
        while let Some((cur, expanded)) = stack.pop() {
            let n = &self.index.nodes[&cur];
            if n.closure.get().is_some() {
                continue;
            }
            if expanded {
                let mut set = BTreeSet::new();
                set.insert(cur);
                for p in &n.mlb {
                    let pc = self.index.nodes[p].closure.get().expect("parent closure computed");
                    set.extend(pc.iter().copied());
                }
                let _ = n.closure.set(Arc::new(set));
            } else {
                stack.push((cur, true));
                for p in &n.mlb {
                    if self.index.nodes[p].closure.get().is_none() {
                        stack.push((*p, false));
                    }
                }
            }
        }
        node.closure.get().cloned()
    }

    /// Union of the closures of `ids`.
    pub fn downward_closure<'a>(
        &self,
        ids: impl IntoIterator<Item = &'a ElementId>,
    ) -> Result<BTreeSet<ElementId>, StateError> {
        let mut out = BTreeSet::new();
        for id in ids {
            let c = self.closure(id).ok_or(StateError::UnknownExtension(*id))?;
            out.extend(c.iter().copied());
        }
        Ok(out)
    }

    /// Whether extension `a ⊆ b`, i.e. `a`'s top lies in `b`'s downward closure.
    ///
    /// Walks down from `b` without materializing closures, pruning by depth.
    pub fn is_below(&self, a: &ElementId, b: &ElementId) -> bool {
        let (Some(na), Some(nb)) = (self.index.node(a), self.index.node(b)) else {
            return false;
        };
        if a == b {
            return true;
        }
        if let Some(c) = nb.closure.get() {
            return c.contains(a);
        }
        let target_depth = na.depth;
        let mut seen = BTreeSet::new();
        let mut stack = vec![*b];
        while let Some(cur) = stack.pop() {
            for p in &self.index.nodes[&cur].mlb {
                if p == a {
                    return true;
                }
                let pd = self.index.nodes[p].depth;
                if pd > target_depth && seen.insert(*p) {
                    stack.push(*p);
                }
            }
        }
        false
    }

    /// Literal relation `u_x` of the applied extension `id`.
    pub fn relation_of(&self, id: &ElementId) -> Option<Relation> {
        let closure = self.closure(id)?;
        let mut rel = Relation::new();
        for e in closure.iter() {
            let ec = self.closure(e).expect("closure member is applied");
            rel.extend(ec.iter().map(|c| (*e, *c)));
        }
        Some(rel)
    }

    /// Materializes the literal upward extension of an applied element.
    pub fn extension(&self, id: &ElementId) -> Option<UpwardExtension> {
        let relation = self.relation_of(id)?;
        let closure = self.closure(id)?;
        let element_payloads = closure
            .iter()
            .map(|e| (*e, self.index.nodes[e].payload.clone()))
            .collect();
        Some(UpwardExtension {
            top_id: *id,
            top_payload: self.index.nodes[id].payload.clone(),
            relation,
            element_payloads,
        })
    }

    pub fn genesis_extension(&self) -> UpwardExtension {
        self.extension(&self.genesis).expect("genesis is always present")
    }

    /// Whether `u` is a valid single-element upward extension of this state.
    ///
    /// The relation must equal `{y}² ∪ {y} × X(P) ∪ P` where `P` is the union
    /// of the state's extensions for `mlb(u)`; since `P` is a union of
    /// genesis-bounded sub-posets of a valid state, equality makes `u` a poset
    /// bounded by genesis and `y`. Never panics on malformed input.
    pub fn validate_extension(&self, u: &UpwardExtension) -> bool {
        if u.top_id == self.genesis {
            return *u == self.genesis_extension();
        }
        let top = u.top_id;
        if !self.universe.is_valid(&u.top_payload)
            || !u.relation.contains(&(top, top))
            || !u.relation.contains(&(self.genesis, self.genesis))
        {
            return false;
        }
        let elements = u.elements();
        if u.element_payloads.keys().copied().collect::<BTreeSet<_>>() != elements
            || u.element_payloads.get(&top) != Some(&u.top_payload)
        {
            return false;
        }
        let Ok(structure) = RelationalStructure::new(elements.clone(), u.relation.clone()) else {
            return false;
        };
        let Ok(mlb) = poset::mlb(&top, &structure) else {
            return false;
        };
        if mlb.is_empty() || !mlb.iter().all(|m| self.contains(m)) {
            return false;
        }
        if hash_element(&u.top_payload, &mlb) != top {
            return false;
        }
        let mut predecessors = Relation::new();
        for m in &mlb {
            predecessors.extend(self.relation_of(m).expect("mlb member present"));
        }
        let below: BTreeSet<ElementId> = predecessors
            .iter()
            .filter(|(a, b)| a == b)
            .map(|(a, _)| *a)
            .collect();
        if below.contains(&top) || elements.len() != below.len() + 1 {
            return false;
        }
        let mut expected = predecessors;
        expected.insert((top, top));
        expected.extend(below.iter().map(|b| (top, *b)));
        if expected != u.relation {
            return false;
        }
        below
            .iter()
            .all(|e| u.element_payloads.get(e) == self.payload(e))
    }

    /// `U ∪ {u}` for a valid, new extension with nonempty mlb.
    pub fn extend(&self, u: &UpwardExtension) -> Result<EdpState, StateError> {
        let mut next = self.clone();
        next.extend_in_place(u)?;
        Ok(next)
    }

    pub fn extend_in_place(&mut self, u: &UpwardExtension) -> Result<(), StateError> {
        if self.contains(&u.top_id) {
            return Err(StateError::AlreadyPresent(u.top_id));
        }
        let mlb = u.mlb();
        if mlb.is_empty() {
            return Err(StateError::EmptyMlb);
        }
        if !self.validate_extension(u) {
            return Err(StateError::InvalidExtension);
        }
        self.insert_node(u.top_id, u.top_payload.clone(), mlb);
        Ok(())
    }

    /// Least upper bound: union of both extension sets, keeping only members
    /// valid against the union.
    pub fn join(&self, other: &EdpState) -> Result<EdpState, StateError> {
        if self.genesis != other.genesis {
            return Err(StateError::GenesisMismatch);
        }
        let mut out = self.clone();
        for id in other.topo_ids() {
            if out.contains(&id) {
                continue;
            }
            let u = other.extension(&id).expect("topo id present");
            if out.validate_extension(&u) {
                let mlb = u.mlb();
                out.insert_node(id, u.top_payload, mlb);
            } else {
                debug!("join: discarding invalid extension {id:?}");
            }
        }
        Ok(out)
    }

    /// `S(U) = (X(⋃U), ⋃U)`.
    pub fn to_bdp(&self) -> RelationalStructure {
        let mut relation = Relation::new();
        for id in self.index.ids() {
            let c = self.closure(id).expect("applied");
            relation.extend(c.iter().map(|b| (*id, *b)));
        }
        RelationalStructure::new(self.id_set(), relation).expect("closures stay within the state")
    }

    /// Inserts a node whose parents are present. Callers have validated it.
    pub(crate) fn insert_node(&mut self, id: ElementId, payload: Payload, mlb: BTreeSet<ElementId>) {
        debug_assert!(mlb.iter().all(|m| self.contains(m)));
        let depth = 1 + mlb
            .iter()
            .map(|m| self.index.nodes[m].depth)
            .max()
            .unwrap_or(0);
        for m in &mlb {
            self.frontier.remove(m);
        }
        self.frontier.insert(id);
        self.index
            .nodes
            .insert(id, Arc::new(Node::new(payload, mlb, depth)));
    }
}

impl PartialEq for EdpState {
    /// Ids bind payload and ancestry, so equal id sets mean equal states.
    fn eq(&self, other: &Self) -> bool {
        self.genesis == other.genesis && self.index.nodes.keys().eq(other.index.nodes.keys())
    }
}

impl Eq for EdpState {}

impl fmt::Debug for EdpState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EdpState")
            .field("genesis", &self.genesis)
            .field("len", &self.len())
            .field("max", &self.frontier)
            .finish()
    }
}
