//! Attacker scripts for Byzantine nodes.
//!
//! Attackers only produce bytes for the simulated network. They build
//! operations from the hash and wire primitives and never run replica logic,
//! so nothing they send has been filtered by the library.

use std::collections::{BTreeMap, BTreeSet};

use edp::acedpm::{
    level_content, membership_content, AcEvent, Membership, ObjectId, ReplicaIdentity, ACT_CHAT,
    ACT_LEVEL, ACT_MEMBERSHIP,
};
use edp::broadcast::{FetchResponse, Frontier, Message};
use edp::{hash_element, ElementId, Operation, Payload};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::node::identity;
use crate::scenario::{Behavior, ByzantineNode, Kind};

pub type Outbox = Vec<(usize, Vec<u8>)>;

#[derive(Debug, Clone)]
pub struct Attacker {
    pub node: usize,
    pub behaviors: Vec<Behavior>,
    pub until: u64,
    pub rate: usize,
    kind: Kind,
    identity: ReplicaIdentity,
    genesis: ElementId,
    /// Last frontier heard from a correct peer, or the attacker's own tip.
    tips: BTreeSet<ElementId>,
    /// Every operation seen or authored, served on request.
    known: BTreeMap<ElementId, Operation>,
    counter: u64,
    /// Equivocating pairs, in emission order.
    pub equivocations: Vec<(ElementId, ElementId)>,
}

impl Attacker {
    pub fn new(cfg: &ByzantineNode, kind: Kind, genesis_payload: &Payload, until: u64) -> Self {
        let genesis = hash_element(genesis_payload, &BTreeSet::new());
        Self {
            node: cfg.node,
            behaviors: cfg.behaviors.clone(),
            until: cfg.until.unwrap_or(until),
            rate: cfg.rate.max(1),
            kind,
            identity: identity(cfg.node),
            genesis,
            tips: BTreeSet::from([genesis]),
            known: BTreeMap::new(),
            counter: 0,
            equivocations: Vec::new(),
        }
    }

    fn next(&mut self) -> u64 {
        self.counter += 1;
        self.counter
    }

    /// A payload valid in the scenario's universe, signed over `mlb` when
    /// the kind requires it.
    fn payload(&mut self, tag: &str, mlb: &BTreeSet<ElementId>) -> Payload {
        let n = self.next();
        match self.kind {
            Kind::Access => self
                .identity
                .sign(ACT_CHAT, None, format!("{tag} {n}").into_bytes(), mlb)
                .encode(),
            _ => Payload::from(format!("byz{} {tag} {n}", self.node)),
        }
    }

    fn op(&mut self, tag: &str, mlb: BTreeSet<ElementId>) -> Operation {
        let payload = self.payload(tag, &mlb);
        let op = Operation { payload, mlb_hashes: mlb };
        self.known.insert(op.id(), op.clone());
        op
    }

    fn frontier_msg(ops: impl IntoIterator<Item = Operation>) -> Vec<u8> {
        Message::Frontier(ops.into_iter().collect::<Frontier>()).encode()
    }

    fn broadcast(out: &mut Outbox, peers: &[usize], bytes: Vec<u8>) {
        for p in peers {
            out.push((*p, bytes.clone()));
        }
    }

    /// Messages emitted this tick. `peers` are the correct replicas.
    pub fn tick(&mut self, tick: u64, peers: &[usize], rng: &mut ChaCha8Rng) -> Outbox {
        let mut out = Vec::new();
        if tick > self.until || peers.is_empty() {
            return out;
        }
        for b in self.behaviors.clone() {
            match b {
                Behavior::Equivocate => self.equivocate(peers, &mut out),
                Behavior::ForgeAncestry => self.forge(peers, rng, &mut out),
                Behavior::InvalidExtension => self.invalid(peers, rng, &mut out),
                Behavior::Spam => {
                    let ops: Vec<Operation> = (0..self.rate)
                        .map(|_| {
                            let mlb = std::mem::take(&mut self.tips);
                            let op = self.op("spam", mlb);
                            self.tips = BTreeSet::from([op.id()]);
                            op
                        })
                        .collect();
                    for op in ops {
                        Self::broadcast(&mut out, peers, Self::frontier_msg([op]));
                    }
                }
                Behavior::SelectiveSend => {
                    let mlb = std::mem::take(&mut self.tips);
                    let op = self.op("selective", mlb);
                    self.tips = BTreeSet::from([op.id()]);
                    out.push((peers[0], Self::frontier_msg([op])));
                }
                Behavior::BadSignature => self.bad_signature(peers, &mut out),
                Behavior::UnauthorizedEvent => self.unauthorized(peers, &mut out),
            }
        }
        out
    }

    fn equivocate(&mut self, peers: &[usize], out: &mut Outbox) {
        let base = self.tips.clone();
        let ya = self.op("equivocation a", base.clone());
        let yb = self.op("equivocation b", base.clone());
        self.equivocations.push((ya.id(), yb.id()));
        // Same payload over two different positions.
        let other: BTreeSet<ElementId> = if base == BTreeSet::from([self.genesis]) {
            base.clone()
        } else {
            BTreeSet::from([self.genesis])
        };
        let payload = ya.payload.clone();
        let moved = Operation { payload, mlb_hashes: other };
        for (i, p) in peers.iter().enumerate() {
            let msg = if i % 2 == 0 {
                Self::frontier_msg([ya.clone()])
            } else {
                Self::frontier_msg([yb.clone(), moved.clone()])
            };
            out.push((*p, msg));
        }
    }

    fn forge(&mut self, peers: &[usize], rng: &mut ChaCha8Rng, out: &mut Outbox) {
        for _ in 0..self.rate {
            let mut mlb: BTreeSet<ElementId> = (0..rng.gen_range(1..3)).map(|_| ElementId(rng.gen())).collect();
            if rng.gen_bool(0.5) {
                mlb.extend(self.tips.iter().copied());
            }
            let op = self.op("forged", mlb);
            Self::broadcast(out, peers, Self::frontier_msg([op]));
        }
    }

    fn invalid(&mut self, peers: &[usize], rng: &mut ChaCha8Rng, out: &mut Outbox) {
        let empty = self.op("empty mlb", BTreeSet::new());
        let mut msgs = vec![Self::frontier_msg([empty])];
        // Parent together with its own ancestor.
        if let Some(op) = self.known.values().find(|o| !o.mlb_hashes.is_empty()).cloned() {
            let mut mlb = op.mlb_hashes.clone();
            mlb.insert(op.id());
            let bad = self.op("not an antichain", mlb);
            msgs.push(Self::frontier_msg([bad]));
        }
        if self.kind == Kind::Access {
            let junk = Operation {
                payload: Payload::from("not a signed event"),
                mlb_hashes: self.tips.clone(),
            };
            msgs.push(Self::frontier_msg([junk]));
        }
        let mut garbage = vec![0u8; rng.gen_range(0..64)];
        rng.fill(&mut garbage[..]);
        msgs.push(garbage);
        // A huge declared count with no body.
        msgs.push(vec![1, 1, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff]);
        // An unrequested fetch response.
        let stray = self.op("unrequested", self.tips.clone());
        msgs.push(Message::FetchResponse(FetchResponse { ops: vec![stray] }).encode());
        for m in msgs {
            Self::broadcast(out, peers, m);
        }
    }

    fn bad_signature(&mut self, peers: &[usize], out: &mut Outbox) {
        if self.kind != Kind::Access {
            return;
        }
        // Claims to be the subject of node 0, signed by the attacker.
        let mlb = self.tips.clone();
        let n = self.next();
        let mut ev = self
            .identity
            .sign(ACT_CHAT, None, format!("forged {n}").into_bytes(), &mlb);
        ev.sbj = identity(0).subject();
        let forged = Operation { payload: ev.encode(), mlb_hashes: mlb.clone() };
        let mut flipped = self
            .identity
            .sign(ACT_CHAT, None, format!("flipped {n}").into_bytes(), &mlb);
        flipped.signature[0] ^= 1;
        let flipped = Operation { payload: flipped.encode(), mlb_hashes: mlb };
        Self::broadcast(out, peers, Self::frontier_msg([forged, flipped]));
    }

    fn unauthorized(&mut self, peers: &[usize], out: &mut Outbox) {
        if self.kind != Kind::Access {
            return;
        }
        let me = self.identity.subject();
        let mlb = self.tips.clone();
        let events: Vec<AcEvent> = vec![
            self.identity.sign(
                ACT_LEVEL,
                Some(ObjectId::Subject(me)),
                level_content(i64::MAX),
                &mlb,
            ),
            self.identity.sign(
                ACT_MEMBERSHIP,
                Some(ObjectId::Subject(identity(0).subject())),
                membership_content(Membership::Ban),
                &mlb,
            ),
        ];
        let ops: Vec<Operation> = events
            .into_iter()
            .map(|e| Operation { payload: e.encode(), mlb_hashes: mlb.clone() })
            .collect();
        Self::broadcast(out, peers, Self::frontier_msg(ops));
    }

    /// Handles a message; replies go into the returned outbox.
    pub fn receive(&mut self, from: usize, bytes: &[u8], peers: &[usize]) -> Outbox {
        let mut out = Vec::new();
        match Message::decode(bytes) {
            Ok(Message::Frontier(f)) => {
                let ids: BTreeSet<ElementId> = f.ids().copied().collect();
                for op in f.ops() {
                    self.known.insert(op.id(), op.clone());
                }
                if !ids.is_empty() {
                    self.tips = ids;
                }
            }
            Ok(Message::FetchRequest(req)) => {
                let selective = self.behaviors.contains(&Behavior::SelectiveSend);
                if selective && peers.first() != Some(&from) {
                    return out;
                }
                let ops: Vec<Operation> = req.ids.iter().filter_map(|i| self.known.get(i).cloned()).collect();
                if !ops.is_empty() {
                    out.push((from, Message::FetchResponse(FetchResponse { ops }).encode()));
                }
            }
            Ok(Message::FetchResponse(r)) => {
                for op in r.ops {
                    self.known.insert(op.id(), op);
                }
            }
            Err(_) => {}
        }
        out
    }
}
