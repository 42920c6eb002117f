//! Access-controlled EDP and maps.
//!
//! Events are signed `(act, sbj, obj ↦ cnt)` tuples stored in one causal
//! EDP. Two attribute maps live on top of it: membership `M` (subject to
//! [`Membership`]) and level `L` (subject or action to integer). A received
//! event is applied only if it is authorized at its own maximal lower
//! bounds. Queries linearize with a priority order that puts revocations
//! first, then higher-level subjects, then hashes, and skip every event that
//! is not authorized by the prefix before it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use log::debug;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::broadcast::OpReplica;
use crate::epm::{linearize, EpmError, EpmMap, TieOrder};
use crate::id::{ElementId, Payload, Universe};
use crate::op::{Admission, OpError, Operation, Replica, DEFAULT_PENDING_CAPACITY};
use crate::state::EdpState;
use crate::wire::{Reader, WireError, Writer};

pub const EVENT_TAG: u8 = 0x03;
pub const SIGN_TAG: u8 = 0x04;
pub const GENESIS_TAG: u8 = 0x05;

pub const ACT_CHAT: &str = "chat";
pub const ACT_MEMBERSHIP: &str = "membership";
pub const ACT_LEVEL: &str = "level";

pub const DEFAULT_CREATOR_LEVEL: i64 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AcError {
    #[error("replica has no signing identity")]
    NoIdentity,
    #[error("event is not authorized at the current state")]
    Unauthorized,
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Epm(#[from] EpmError),
}

/// Subject identifier: an Ed25519 public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubjectId(pub [u8; 32]);

impl SubjectId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SubjectId({})", hex::encode(&self.0[..4]))
    }
}

impl Serialize for SubjectId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for SubjectId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        Ok(SubjectId(
            bytes
                .try_into()
                .map_err(|_| serde::de::Error::custom("subject id must be 32 bytes"))?,
        ))
    }
}

/// Explicit object of an event: another subject, or an action whose level
/// is being set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectId {
    Subject(SubjectId),
    Action(String),
}

impl ObjectId {
    fn encode(&self) -> Vec<u8> {
        match self {
            ObjectId::Subject(s) => [&[0u8][..], &s.0].concat(),
            ObjectId::Action(a) => [&[1u8][..], a.as_bytes()].concat(),
        }
    }

    fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        match bytes.split_first() {
            Some((0, rest)) => Ok(ObjectId::Subject(SubjectId(
                rest.try_into().map_err(|_| WireError::Malformed("subject length"))?,
            ))),
            Some((1, rest)) => Ok(ObjectId::Action(
                String::from_utf8(rest.to_vec()).map_err(|_| WireError::Malformed("action name"))?,
            )),
            Some((t, _)) => Err(WireError::Tag(*t)),
            None => Err(WireError::Truncated),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Membership {
    #[default]
    Out,
    In,
    Invite,
    Ban,
}

impl Membership {
    pub fn to_byte(self) -> u8 {
        match self {
            Membership::Out => 0,
            Membership::In => 1,
            Membership::Invite => 2,
            Membership::Ban => 3,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => Membership::Out,
            1 => Membership::In,
            2 => Membership::Invite,
            3 => Membership::Ban,
            _ => return None,
        })
    }
}

/// Content encoding for membership events.
pub fn membership_content(m: Membership) -> Vec<u8> {
    vec![m.to_byte()]
}

/// Content encoding for level events: big-endian `i64`.
pub fn level_content(level: i64) -> Vec<u8> {
    level.to_be_bytes().to_vec()
}

/// A signed event `(act, sbj, obj ↦ cnt)`.
///
/// Payload encoding: `tag ‖ act ‖ sbj ‖ obj? ‖ cnt ‖ signature`, fields
/// length-prefixed, the optional object preceded by a presence byte and the
/// 64-byte signature appended raw. The signature covers
/// `sign-tag ‖ body ‖ count ‖ sorted mlb digests`, binding the event to its
/// position in the poset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcEvent {
    pub act: String,
    pub sbj: SubjectId,
    pub obj: Option<ObjectId>,
    pub cnt: Vec<u8>,
    pub signature: [u8; 64],
}

/// Typed effect of an event on the attribute maps.
#[derive(Debug, Clone, PartialEq, Eq)]
enum MapUpdate {
    Membership(SubjectId, Membership),
    Level(ObjectId, i64),
    None,
}

impl AcEvent {
    fn body(act: &str, sbj: &SubjectId, obj: Option<&ObjectId>, cnt: &[u8]) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(EVENT_TAG).bytes(act.as_bytes()).bytes(&sbj.0);
        match obj {
            Some(o) => {
                w.u8(1).bytes(&o.encode());
            }
            None => {
                w.u8(0);
            }
        }
        w.bytes(cnt);
        w.finish()
    }

    /// Bytes the signature is computed over.
    pub fn signing_message(
        act: &str,
        sbj: &SubjectId,
        obj: Option<&ObjectId>,
        cnt: &[u8],
        mlb: &BTreeSet<ElementId>,
    ) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(SIGN_TAG)
            .raw(&Self::body(act, sbj, obj, cnt))
            .digests(mlb.iter());
        w.finish()
    }

    pub fn encode(&self) -> Payload {
        let mut bytes = Self::body(&self.act, &self.sbj, self.obj.as_ref(), &self.cnt);
        bytes.extend_from_slice(&self.signature);
        Payload(bytes)
    }

    pub fn decode(payload: &Payload) -> Result<Self, WireError> {
        let mut r = Reader::new(payload.as_bytes());
        let tag = r.u8()?;
        if tag != EVENT_TAG {
            return Err(WireError::Tag(tag));
        }
        let act = String::from_utf8(r.bytes()?.to_vec()).map_err(|_| WireError::Malformed("act"))?;
        let sbj = SubjectId(
            r.bytes()?
                .try_into()
                .map_err(|_| WireError::Malformed("subject length"))?,
        );
        let obj = match r.u8()? {
            0 => None,
            1 => Some(ObjectId::decode(r.bytes()?)?),
            _ => return Err(WireError::Malformed("object presence")),
        };
        let cnt = r.bytes()?.to_vec();
        let signature = r.take(64)?.try_into().expect("64 bytes");
        r.finish()?;
        Ok(Self {
            act,
            sbj,
            obj,
            cnt,
            signature,
        })
    }

    /// Verifies the signature under `sbj` for the given position.
    pub fn verify(&self, mlb: &BTreeSet<ElementId>) -> bool {
        let Ok(key) = VerifyingKey::from_bytes(&self.sbj.0) else {
            return false;
        };
        let msg = Self::signing_message(&self.act, &self.sbj, self.obj.as_ref(), &self.cnt, mlb);
        key.verify_strict(&msg, &Signature::from_bytes(&self.signature))
            .is_ok()
    }

    fn update(&self) -> Option<MapUpdate> {
        match self.act.as_str() {
            ACT_MEMBERSHIP => match (&self.obj, self.cnt.as_slice()) {
                (Some(ObjectId::Subject(s)), [b]) => {
                    Some(MapUpdate::Membership(*s, Membership::from_byte(*b)?))
                }
                _ => None,
            },
            ACT_LEVEL => match &self.obj {
                Some(o) => Some(MapUpdate::Level(
                    o.clone(),
                    i64::from_be_bytes(self.cnt.as_slice().try_into().ok()?),
                )),
                None => None,
            },
            _ => Some(MapUpdate::None),
        }
    }
}

/// A replica's signing identity; its subject id is the public key.
#[derive(Clone)]
pub struct ReplicaIdentity {
    key: SigningKey,
}

impl ReplicaIdentity {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            key: SigningKey::from_bytes(&seed),
        }
    }

    pub fn subject(&self) -> SubjectId {
        SubjectId(self.key.verifying_key().to_bytes())
    }

    /// Signs an event positioned over `mlb`.
    pub fn sign(
        &self,
        act: &str,
        obj: Option<ObjectId>,
        cnt: Vec<u8>,
        mlb: &BTreeSet<ElementId>,
    ) -> AcEvent {
        let sbj = self.subject();
        let msg = AcEvent::signing_message(act, &sbj, obj.as_ref(), &cnt, mlb);
        AcEvent {
            act: act.to_owned(),
            sbj,
            obj,
            cnt,
            signature: self.key.sign(&msg).to_bytes(),
        }
    }
}

impl fmt::Debug for ReplicaIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("ReplicaIdentity").field(&self.subject()).finish()
    }
}

/// The rules an object is created with, encoded as its genesis payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcGenesis {
    pub room: String,
    pub creator: SubjectId,
    pub creator_level: i64,
    pub action_levels: BTreeMap<String, i64>,
}

impl AcGenesis {
    /// Creator level 100; chat 0, membership 50, level 50.
    pub fn new(room: impl Into<String>, creator: SubjectId) -> Self {
        Self {
            room: room.into(),
            creator,
            creator_level: DEFAULT_CREATOR_LEVEL,
            action_levels: [(ACT_CHAT, 0), (ACT_MEMBERSHIP, 50), (ACT_LEVEL, 50)]
                .into_iter()
                .map(|(a, l)| (a.to_owned(), l))
                .collect(),
        }
    }

    pub fn encode(&self) -> Payload {
        let mut w = Writer::new();
        w.u8(GENESIS_TAG)
            .bytes(self.room.as_bytes())
            .bytes(&self.creator.0)
            .i64(self.creator_level)
            .u64(self.action_levels.len() as u64);
        for (act, level) in &self.action_levels {
            w.bytes(act.as_bytes()).i64(*level);
        }
        Payload(w.finish())
    }

    pub fn decode(payload: &Payload) -> Result<Self, WireError> {
        let mut r = Reader::new(payload.as_bytes());
        let tag = r.u8()?;
        if tag != GENESIS_TAG {
            return Err(WireError::Tag(tag));
        }
        let room = String::from_utf8(r.bytes()?.to_vec()).map_err(|_| WireError::Malformed("room"))?;
        let creator = SubjectId(
            r.bytes()?
                .try_into()
                .map_err(|_| WireError::Malformed("creator length"))?,
        );
        let creator_level = r.i64()?;
        let n = r.count(16)?;
        let mut action_levels = BTreeMap::new();
        for _ in 0..n {
            let act = String::from_utf8(r.bytes()?.to_vec()).map_err(|_| WireError::Malformed("act"))?;
            action_levels.insert(act, r.i64()?);
        }
        r.finish()?;
        Ok(Self {
            room,
            creator,
            creator_level,
            action_levels,
        })
    }

    fn bootstrap(&self) -> AcMaps {
        let mut maps = AcMaps::default();
        maps.members.insert(self.creator, Membership::In);
        maps.levels
            .insert(ObjectId::Subject(self.creator), self.creator_level);
        for (act, level) in &self.action_levels {
            maps.levels.insert(ObjectId::Action(act.clone()), *level);
        }
        maps
    }
}

fn is_ac_payload(p: &Payload) -> bool {
    AcEvent::decode(p).is_ok() || AcGenesis::decode(p).is_ok()
}

/// The membership map `M` and level map `L` at some logical time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AcMaps {
    pub members: BTreeMap<SubjectId, Membership>,
    pub levels: BTreeMap<ObjectId, i64>,
}

impl AcMaps {
    /// `M[s]`, defaulting to OUT.
    pub fn membership(&self, s: &SubjectId) -> Membership {
        self.members.get(s).copied().unwrap_or_default()
    }

    /// `L[o]`, defaulting to 0.
    pub fn level(&self, o: &ObjectId) -> i64 {
        self.levels.get(o).copied().unwrap_or(0)
    }

    pub fn subject_level(&self, s: &SubjectId) -> i64 {
        self.level(&ObjectId::Subject(*s))
    }

    fn membership_of(&self, o: &ObjectId) -> Membership {
        match o {
            ObjectId::Subject(s) => self.membership(s),
            ObjectId::Action(_) => Membership::Out,
        }
    }

    /// `M ⊎ u`, `L ⊎ u` for a decoded event.
    fn apply(&mut self, ev: &AcEvent) {
        match ev.update() {
            Some(MapUpdate::Membership(s, m)) => {
                self.members.insert(s, m);
            }
            Some(MapUpdate::Level(o, l)) => {
                self.levels.insert(o, l);
            }
            Some(MapUpdate::None) | None => {}
        }
    }

    /// Both maps as one key-value map, keys prefixed `m/` and `l/`.
    pub fn to_epm(&self) -> EpmMap {
        let mut out = EpmMap::new();
        for (s, m) in &self.members {
            out.insert([&b"m/"[..], &s.0].concat(), vec![m.to_byte()]);
        }
        for (o, l) in &self.levels {
            out.insert([&b"l/"[..], &o.encode()].concat(), l.to_be_bytes().to_vec());
        }
        out
    }
}

/// Level- and attribute-based authorization of `ev` against `maps`.
///
/// The subject must be IN, hold at least the action's level, act on itself
/// or on an object of strictly lower level, and not set a level above its
/// own. Malformed membership or level events are never authorized.
pub fn authorized(ev: &AcEvent, maps: &AcMaps) -> bool {
    if ev.update().is_none() {
        return false;
    }
    let sbj_level = maps.subject_level(&ev.sbj);
    let group = maps.membership(&ev.sbj) == Membership::In;
    let action = maps.level(&ObjectId::Action(ev.act.clone())) <= sbj_level;
    let object = match &ev.obj {
        None => true,
        Some(ObjectId::Subject(o)) if *o == ev.sbj => true,
        Some(o) => maps.level(o) < sbj_level,
    };
    let level_cap = match ev.update() {
        Some(MapUpdate::Level(_, l)) => l <= sbj_level,
        _ => true,
    };
    group && action && object && level_cap
}

/// Whether `ev` revokes: moves its object out of IN, or lowers its level,
/// relative to the maps at the event's maximal lower bounds.
pub fn is_revocation(ev: &AcEvent, pre: &AcMaps) -> bool {
    let Some(obj) = &ev.obj else {
        return false;
    };
    let mut post = pre.clone();
    post.apply(ev);
    (pre.membership_of(obj) == Membership::In && post.membership_of(obj) != Membership::In)
        || pre.level(obj) > post.level(obj)
}

/// Direction of the level tier in the priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelPriority {
    /// Events of higher-level subjects come first.
    #[default]
    HigherFirst,
    /// Events of lower-level subjects come first.
    LowerFirst,
}

#[derive(Debug, Clone, Copy)]
pub struct AcConfig {
    pub level_priority: LevelPriority,
    pub pending_capacity: usize,
}

impl Default for AcConfig {
    fn default() -> Self {
        Self {
            level_priority: LevelPriority::HigherFirst,
            pending_capacity: DEFAULT_PENDING_CAPACITY,
        }
    }
}

/// Facts about an applied element, fixed by its downward closure.
#[derive(Debug, Clone)]
struct NodeInfo {
    event: Option<AcEvent>,
    revocation: bool,
    /// Subject level at the element's maximal lower bounds.
    sbj_level: i64,
}

/// Priority key: revocations, then subject level, then hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PriorityKey {
    rank: u8,
    level: i64,
    id: ElementId,
}

struct PriorityOrder<'a> {
    info: &'a BTreeMap<ElementId, NodeInfo>,
    config: &'a AcConfig,
}

impl PriorityOrder<'_> {
    fn key_of(&self, id: &ElementId) -> PriorityKey {
        let info = &self.info[id];
        let level = match self.config.level_priority {
            LevelPriority::HigherFirst => info.sbj_level.saturating_neg(),
            LevelPriority::LowerFirst => info.sbj_level,
        };
        PriorityKey {
            rank: if info.event.is_none() {
                0
            } else if info.revocation {
                1
            } else {
                2
            },
            level,
            id: *id,
        }
    }
}

impl TieOrder for PriorityOrder<'_> {
    type Key = PriorityKey;
    fn key(&self, _: &EdpState, id: &ElementId) -> PriorityKey {
        self.key_of(id)
    }
}

/// Result of an access-controlled query at a logical time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcView {
    /// Linearization of the downward closure under the priority order.
    pub linearization: Vec<ElementId>,
    /// The subsequence authorized by its prefix.
    pub applied: Vec<ElementId>,
    pub maps: AcMaps,
}

fn fold(
    state: &EdpState,
    info: &BTreeMap<ElementId, NodeInfo>,
    genesis: &AcGenesis,
    config: &AcConfig,
    t: &BTreeSet<ElementId>,
) -> Result<AcView, EpmError> {
    let closure = state.downward_closure(t)?;
    let order = PriorityOrder { info, config };
    let linearization = linearize(state, &closure, &order)?;
    let mut maps = AcMaps::default();
    let mut applied = Vec::with_capacity(linearization.len());
    for id in &linearization {
        match &info[id].event {
            None => {
                maps = genesis.bootstrap();
                applied.push(*id);
            }
            Some(ev) => {
                if authorized(ev, &maps) {
                    maps.apply(ev);
                    applied.push(*id);
                }
            }
        }
    }
    Ok(AcView {
        linearization,
        applied,
        maps,
    })
}

struct AcAdmission<'a> {
    info: &'a mut BTreeMap<ElementId, NodeInfo>,
    genesis: &'a AcGenesis,
    config: &'a AcConfig,
}

impl Admission for AcAdmission<'_> {
    fn admit(&mut self, state: &EdpState, op: &Operation, id: ElementId) -> bool {
        let Ok(ev) = AcEvent::decode(&op.payload) else {
            debug!("{id:?}: not a signed event");
            return false;
        };
        if !ev.verify(&op.mlb_hashes) {
            debug!("{id:?}: bad signature");
            return false;
        }
        let pre = match fold(state, self.info, self.genesis, self.config, &op.mlb_hashes) {
            Ok(view) => view.maps,
            Err(_) => return false,
        };
        if !authorized(&ev, &pre) {
            debug!("{id:?}: not authorized at its maximal lower bounds");
            return false;
        }
        self.info.insert(
            id,
            NodeInfo {
                revocation: is_revocation(&ev, &pre),
                sbj_level: pre.subject_level(&ev.sbj),
                event: Some(ev),
            },
        );
        true
    }
}

/// An op-based replica of the access-controlled composition.
#[derive(Debug, Clone)]
pub struct AcReplica {
    replica: Replica,
    genesis: AcGenesis,
    identity: Option<ReplicaIdentity>,
    config: AcConfig,
    info: BTreeMap<ElementId, NodeInfo>,
}

impl AcReplica {
    pub fn new(genesis: AcGenesis, identity: Option<ReplicaIdentity>, config: AcConfig) -> Self {
        let universe = Universe::with_validator(genesis.encode(), is_ac_payload);
        let replica = Replica::with_capacity(universe, config.pending_capacity)
            .expect("genesis payload is in the universe");
        let g = replica.state().genesis_id();
        let info = [(
            g,
            NodeInfo {
                event: None,
                revocation: false,
                sbj_level: 0,
            },
        )]
        .into_iter()
        .collect();
        Self {
            replica,
            genesis,
            identity,
            config,
            info,
        }
    }

    pub fn state(&self) -> &EdpState {
        self.replica.state()
    }

    pub fn replica(&self) -> &Replica {
        &self.replica
    }

    pub fn genesis(&self) -> &AcGenesis {
        &self.genesis
    }

    pub fn subject(&self) -> Option<SubjectId> {
        self.identity.as_ref().map(ReplicaIdentity::subject)
    }

    /// Effect with the authorization gate: events not authorized at their
    /// own maximal lower bounds are discarded.
    pub fn effect(&mut self, op: Operation) -> Vec<ElementId> {
        let mut admission = AcAdmission {
            info: &mut self.info,
            genesis: &self.genesis,
            config: &self.config,
        };
        self.replica.effect_with(op, &mut admission)
    }

    /// Signs an event over the current maximal elements, checks it against
    /// the current maps and applies it locally.
    pub fn generate(
        &mut self,
        act: &str,
        obj: Option<ObjectId>,
        cnt: Vec<u8>,
    ) -> Result<Operation, AcError> {
        let identity = self.identity.as_ref().ok_or(AcError::NoIdentity)?;
        let mlb = self.state().max_ids().clone();
        let ev = identity.sign(act, obj, cnt, &mlb);
        if !authorized(&ev, &self.view(&mlb)?.maps) {
            return Err(AcError::Unauthorized);
        }
        let op = Operation {
            payload: ev.encode(),
            mlb_hashes: mlb,
        };
        let applied = self.effect(op.clone());
        debug_assert_eq!(applied.first(), Some(&op.id()));
        Ok(op)
    }

    pub fn chat(&mut self, text: impl Into<Vec<u8>>) -> Result<Operation, AcError> {
        self.generate(ACT_CHAT, None, text.into())
    }

    pub fn set_membership(&mut self, who: SubjectId, m: Membership) -> Result<Operation, AcError> {
        self.generate(ACT_MEMBERSHIP, Some(ObjectId::Subject(who)), membership_content(m))
    }

    pub fn set_level(&mut self, obj: ObjectId, level: i64) -> Result<Operation, AcError> {
        self.generate(ACT_LEVEL, Some(obj), level_content(level))
    }

    /// Query at logical time `t`: priority linearization of `t↓` and the
    /// authorization-gated fold over it.
    pub fn view(&self, t: &BTreeSet<ElementId>) -> Result<AcView, EpmError> {
        fold(self.state(), &self.info, &self.genesis, &self.config, t)
    }

    /// View at the current maximal elements.
    pub fn current(&self) -> AcView {
        self.view(self.state().max_ids())
            .expect("max elements are applied")
    }

    pub fn get_m(&self, t: &BTreeSet<ElementId>) -> Result<BTreeMap<SubjectId, Membership>, EpmError> {
        Ok(self.view(t)?.maps.members)
    }

    pub fn get_l(&self, t: &BTreeSet<ElementId>) -> Result<BTreeMap<ObjectId, i64>, EpmError> {
        Ok(self.view(t)?.maps.levels)
    }

    /// `authorized(u, T)` for an applied element `u`, signature included.
    pub fn authorized(&self, u: &ElementId, t: &BTreeSet<ElementId>) -> Result<bool, EpmError> {
        let (Some(payload), Some(mlb)) = (self.state().payload(u), self.state().mlb_of(u)) else {
            return Err(EpmError::UnknownExtension(*u));
        };
        let Ok(ev) = AcEvent::decode(payload) else {
            return Ok(false);
        };
        if !ev.verify(mlb) {
            return Ok(false);
        }
        Ok(authorized(&ev, &self.view(t)?.maps))
    }

    /// `rvc(u)` for an applied element.
    pub fn rvc(&self, u: &ElementId) -> Option<bool> {
        self.info.get(u).map(|i| i.revocation)
    }

    /// `prior_a(u₁, u₂)`: whether `u₁` precedes `u₂` in the priority order.
    pub fn prior(&self, u1: &ElementId, u2: &ElementId) -> Option<bool> {
        if !self.info.contains_key(u1) || !self.info.contains_key(u2) {
            return None;
        }
        let order = PriorityOrder {
            info: &self.info,
            config: &self.config,
        };
        Some(order.key_of(u1) < order.key_of(u2))
    }
}

impl OpReplica for AcReplica {
    fn state(&self) -> &EdpState {
        AcReplica::state(self)
    }

    fn deliver(&mut self, op: Operation) -> Vec<ElementId> {
        self.effect(op)
    }

    fn missing(&self) -> BTreeSet<ElementId> {
        self.replica.missing()
    }

    fn pending_len(&self) -> usize {
        self.replica.pending().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u8) -> ReplicaIdentity {
        ReplicaIdentity::from_seed([n; 32])
    }

    /// Creator Alice plus replicas for Bob and Carol sharing one genesis.
    fn room() -> (AcReplica, AcReplica, AcReplica) {
        let genesis = AcGenesis::new("room", id(1).subject());
        (
            AcReplica::new(genesis.clone(), Some(id(1)), AcConfig::default()),
            AcReplica::new(genesis.clone(), Some(id(2)), AcConfig::default()),
            AcReplica::new(genesis, Some(id(3)), AcConfig::default()),
        )
    }

    fn sync(from: &AcReplica, to: &mut AcReplica) {
        for i in from.state().topo_ids() {
            to.effect(from.state().operation(&i).unwrap());
        }
    }

    fn maps(pairs: &[(SubjectId, Membership, i64)], actions: &[(&str, i64)]) -> AcMaps {
        let mut m = AcMaps::default();
        for (s, mem, l) in pairs {
            m.members.insert(*s, *mem);
            m.levels.insert(ObjectId::Subject(*s), *l);
        }
        for (a, l) in actions {
            m.levels.insert(ObjectId::Action((*a).to_owned()), *l);
        }
        m
    }

    #[test]
    fn event_encoding_roundtrip() {
        let mlb = [ElementId([1; 32])].into_iter().collect();
        let ev = id(1).sign(ACT_LEVEL, Some(ObjectId::Action("chat".into())), level_content(5), &mlb);
        assert_eq!(AcEvent::decode(&ev.encode()).unwrap(), ev);
        assert!(ev.verify(&mlb));
        assert!(!ev.verify(&BTreeSet::new()), "signature binds the position");
        let g = AcGenesis::new("r", id(1).subject());
        assert_eq!(AcGenesis::decode(&g.encode()).unwrap(), g);
    }

    #[test]
    fn genesis_bootstrap() {
        let (alice, ..) = room();
        let g = alice.state().genesis_id();
        let t = [g].into_iter().collect();
        let m = alice.get_m(&t).unwrap();
        let l = alice.get_l(&t).unwrap();
        assert_eq!(m.get(&id(1).subject()), Some(&Membership::In));
        assert_eq!(m.get(&id(2).subject()), None, "absent means OUT");
        assert_eq!(l.get(&ObjectId::Subject(id(1).subject())), Some(&100));
        assert_eq!(l.get(&ObjectId::Action(ACT_MEMBERSHIP.into())), Some(&50));
    }

    #[test]
    fn membership_and_level_updates() {
        let (mut alice, ..) = room();
        let bob = id(2).subject();
        alice.set_membership(bob, Membership::In).unwrap();
        assert_eq!(alice.current().maps.membership(&bob), Membership::In);

        alice
            .set_level(ObjectId::Subject(id(1).subject()), 2342)
            .expect_err("above own level");
        alice.set_level(ObjectId::Subject(id(1).subject()), 99).unwrap();
        assert_eq!(alice.current().maps.subject_level(&id(1).subject()), 99);
    }

    #[test]
    fn authorized_clauses() {
        let a = id(1);
        let b = id(2);
        let m = maps(
            &[
                (a.subject(), Membership::In, 50),
                (b.subject(), Membership::In, 50),
            ],
            &[(ACT_CHAT, 10), (ACT_LEVEL, 0), (ACT_MEMBERSHIP, 0)],
        );
        let none = BTreeSet::new();
        assert!(authorized(&a.sign(ACT_CHAT, None, b"hi".to_vec(), &none), &m));

        let mut out = m.clone();
        out.members.insert(a.subject(), Membership::Out);
        assert!(!authorized(&a.sign(ACT_CHAT, None, b"hi".to_vec(), &none), &out));

        let raise = a.sign(ACT_LEVEL, Some(ObjectId::Subject(a.subject())), level_content(2342), &none);
        assert!(!authorized(&raise, &m));

        let demote = a.sign(ACT_LEVEL, Some(ObjectId::Subject(b.subject())), level_content(0), &none);
        assert!(!authorized(&demote, &m), "same level cannot revoke");

        let malformed = a.sign(ACT_MEMBERSHIP, None, vec![1], &none);
        assert!(!authorized(&malformed, &m));
    }

    #[test]
    fn revocation_detection() {
        let a = id(1);
        let b = id(2);
        let pre = maps(&[(a.subject(), Membership::In, 60), (b.subject(), Membership::In, 50)], &[]);
        let none = BTreeSet::new();
        let ban = a.sign(ACT_MEMBERSHIP, Some(ObjectId::Subject(b.subject())), membership_content(Membership::Ban), &none);
        assert!(is_revocation(&ban, &pre));
        let demote = a.sign(ACT_LEVEL, Some(ObjectId::Subject(b.subject())), level_content(10), &none);
        assert!(is_revocation(&demote, &pre));
        let chat = a.sign(ACT_CHAT, None, b"Hi!".to_vec(), &none);
        assert!(!is_revocation(&chat, &pre));
        let promote = a.sign(ACT_LEVEL, Some(ObjectId::Subject(b.subject())), level_content(55), &none);
        assert!(!is_revocation(&promote, &pre));
    }

    #[test]
    fn unauthorized_and_forged_events_are_discarded() {
        let (mut alice, mut bob, _) = room();
        sync(&alice, &mut bob);
        // Bob is OUT: his own replica refuses to generate, and a hand-built
        // event is discarded by Alice.
        assert_eq!(bob.chat("hello"), Err(AcError::Unauthorized));
        let mlb = alice.state().max_ids().clone();
        let ev = id(2).sign(ACT_CHAT, None, b"hello".to_vec(), &mlb);
        let op = Operation { payload: ev.encode(), mlb_hashes: mlb.clone() };
        assert!(alice.effect(op).is_empty());

        // Signature by Bob claiming to be Alice.
        let mut forged = id(2).sign(ACT_CHAT, None, b"as alice".to_vec(), &mlb);
        forged.sbj = id(1).subject();
        let op = Operation { payload: forged.encode(), mlb_hashes: mlb };
        assert!(alice.effect(op).is_empty());
        assert_eq!(alice.state().len(), 1);
    }

    #[test]
    fn concurrent_ban_beats_chat() {
        let (mut alice, mut bob, _) = room();
        let bob_id = id(2).subject();
        alice.set_membership(bob_id, Membership::In).unwrap();
        sync(&alice, &mut bob);

        let ban = alice.set_membership(bob_id, Membership::Ban).unwrap();
        let chat = bob.chat("concurrent hello").unwrap();
        alice.effect(chat.clone());
        bob.effect(ban.clone());

        // Both are kept in the poset; the chat is skipped on linearization.
        for r in [&alice, &bob] {
            assert!(r.state().contains(&chat.id()) && r.state().contains(&ban.id()));
            let view = r.current();
            assert!(!view.applied.contains(&chat.id()));
            assert!(view.applied.contains(&ban.id()));
            let pos = |x: &ElementId| view.linearization.iter().position(|y| y == x).unwrap();
            assert!(pos(&ban.id()) < pos(&chat.id()));
        }
        assert_eq!(alice.current(), bob.current());
        assert_eq!(alice.rvc(&ban.id()), Some(true));
        assert_eq!(alice.prior(&ban.id(), &chat.id()), Some(true));
    }

    #[test]
    fn authorized_at_mlb_but_revoked_now_is_still_applied() {
        let (mut alice, mut bob, mut carol) = room();
        let bob_id = id(2).subject();
        alice.set_membership(bob_id, Membership::In).unwrap();
        sync(&alice, &mut bob);
        sync(&alice, &mut carol);
        let chat = bob.chat("late").unwrap();
        alice.set_membership(bob_id, Membership::Ban).unwrap();
        sync(&alice, &mut carol);
        // Carol already sees the ban, yet applies Bob's concurrent chat.
        assert_eq!(carol.effect(chat.clone()), vec![chat.id()]);
        assert!(!carol.current().applied.contains(&chat.id()));
    }

    #[test]
    fn equal_levels_fall_back_to_hash() {
        let (mut alice, mut bob, mut carol) = room();
        for s in [id(2).subject(), id(3).subject()] {
            alice.set_membership(s, Membership::In).unwrap();
        }
        sync(&alice, &mut bob);
        sync(&alice, &mut carol);
        let b = bob.chat("b").unwrap().id();
        let c = carol.chat("c").unwrap().id();
        alice.effect(bob.state().operation(&b).unwrap());
        alice.effect(carol.state().operation(&c).unwrap());
        assert_eq!(alice.prior(&b, &c), Some(b < c));
        assert_eq!(alice.prior(&c, &b), Some(c < b));
    }

    #[test]
    fn level_priority_switch() {
        let genesis = AcGenesis::new("room", id(1).subject());
        let cfg = AcConfig {
            level_priority: LevelPriority::LowerFirst,
            ..AcConfig::default()
        };
        let mut alice = AcReplica::new(genesis.clone(), Some(id(1)), AcConfig::default());
        alice.set_membership(id(2).subject(), Membership::In).unwrap();
        let mut bob = AcReplica::new(genesis.clone(), Some(id(2)), AcConfig::default());
        sync(&alice, &mut bob);
        let a = alice.chat("a").unwrap();
        let b = bob.chat("b").unwrap();
        alice.effect(b.clone());
        // Alice (100) outranks Bob (0) under the default order.
        assert_eq!(alice.prior(&a.id(), &b.id()), Some(true));

        let mut low = AcReplica::new(genesis, Some(id(1)), cfg);
        sync(&alice, &mut low);
        assert_eq!(low.prior(&a.id(), &b.id()), Some(false));
    }

    #[test]
    fn mutual_revocation_has_single_winner() {
        let genesis = AcGenesis::new("room", id(1).subject());
        let mk = |n| AcReplica::new(genesis.clone(), Some(id(n)), AcConfig::default());
        let (mut c, mut d, mut a, mut b) = (mk(1), mk(4), mk(2), mk(3));
        let (sa, sb, sd) = (id(2).subject(), id(3).subject(), id(4).subject());
        for s in [sa, sb, sd] {
            c.set_membership(s, Membership::In).unwrap();
        }
        c.set_level(ObjectId::Subject(sd), 90).unwrap();
        c.set_level(ObjectId::Subject(sa), 60).unwrap();
        c.set_level(ObjectId::Subject(sb), 60).unwrap();
        for r in [&mut d, &mut a, &mut b] {
            sync(&c, r);
        }
        // Concurrent promotions, each seen by one side only.
        c.set_level(ObjectId::Subject(sa), 70).unwrap();
        d.set_level(ObjectId::Subject(sb), 70).unwrap();
        sync(&c, &mut a);
        sync(&d, &mut b);
        let ban_b = a.set_membership(sb, Membership::Ban).unwrap();
        let ban_a = b.set_membership(sa, Membership::Ban).unwrap();
        let all = [c, d, a, b];
        let mut merged = Vec::new();
        for mut r in all.clone() {
            for other in &all {
                sync(other, &mut r);
            }
            merged.push(r);
        }
        let first = merged[0].current();
        for r in &merged {
            assert_eq!(r.current(), first);
            assert!(r.state().contains(&ban_a.id()) && r.state().contains(&ban_b.id()));
        }
        let won_a = first.applied.contains(&ban_b.id());
        let won_b = first.applied.contains(&ban_a.id());
        assert!(won_a ^ won_b, "exactly one ban applies");
        let m = &first.maps;
        assert_eq!(m.membership(&sb) == Membership::Ban, won_a);
        assert_eq!(m.membership(&sa) == Membership::Ban, won_b);
    }
}
