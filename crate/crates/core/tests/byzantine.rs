mod common;

use std::collections::BTreeSet;

use edp::acedpm::{AcConfig, AcEvent, AcGenesis, AcReplica, ReplicaIdentity};
use edp::broadcast::{AntiEntropy, FetchResponse, Frontier, Message};
use edp::op::Replica;
use edp::{ElementId, Operation, Payload};
use proptest::prelude::*;
use rand::Rng;

use common::{random_history, rng, universe};

fn ac_room() -> AcReplica {
    let alice = ReplicaIdentity::from_seed([1; 32]);
    AcReplica::new(AcGenesis::new("room", alice.subject()), Some(alice), AcConfig::default())
}

/// Feeds decoded messages to a plain and an access-controlled replica.
fn feed(bytes: &[u8], plain: &mut Replica, ac: &mut AcReplica, sync: &mut AntiEntropy) {
    let _ = AcEvent::decode(&Payload(bytes.to_vec()));
    let _ = AcGenesis::decode(&Payload(bytes.to_vec()));
    let _ = edp::epm::KvPayload::decode(&Payload(bytes.to_vec()));
    if let Ok(op) = Operation::decode(bytes) {
        plain.effect(op.clone());
        ac.effect(op);
    }
    match Message::decode(bytes) {
        Ok(Message::Frontier(f)) => {
            sync.on_frontier(plain, 1, &f);
        }
        Ok(Message::FetchResponse(r)) => {
            sync.requests(plain, &[1]);
            sync.on_fetch_response(plain, 1, &r);
        }
        Ok(Message::FetchRequest(req)) => {
            let _ = FetchResponse::answer(plain.state(), &req);
        }
        Err(_) => {}
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let mut plain = Replica::new(universe()).unwrap();
        let mut ac = ac_room();
        let mut sync = AntiEntropy::new();
        feed(&bytes, &mut plain, &mut ac, &mut sync);
        prop_assert!(!plain.state().is_empty());
    }
}

/// Bit flips, truncations and splices of valid encodings.
#[test]
fn mutated_encodings_never_panic() {
    let h = random_history(3, 8);
    let valid: Vec<Vec<u8>> = h
        .ops
        .iter()
        .map(Operation::encode)
        .chain([Message::Frontier(Frontier::from_state(h.world.state())).encode()])
        .collect();
    let mut r = rng(11);
    let mut plain = Replica::new(universe()).unwrap();
    let mut ac = ac_room();
    let mut sync = AntiEntropy::new();
    for _ in 0..20_000 {
        let mut b = valid[r.gen_range(0..valid.len())].clone();
        match r.gen_range(0..4) {
            0 => {
                let i = r.gen_range(0..b.len());
                b[i] ^= 1 << r.gen_range(0..8);
            }
            1 => b.truncate(r.gen_range(0..b.len())),
            2 => {
                let i = r.gen_range(0..b.len());
                b[i..].iter_mut().for_each(|x| *x = 0xff);
            }
            _ => {
                let other = &valid[r.gen_range(0..valid.len())];
                b.extend_from_slice(&other[..r.gen_range(0..other.len())]);
            }
        }
        feed(&b, &mut plain, &mut ac, &mut sync);
    }
    // Only elements whose ancestry resolves to genesis can be applied.
    for id in plain.state().ids() {
        assert_eq!(plain.state().operation(id).unwrap().id(), *id);
    }
}

#[test]
fn forged_ancestry_is_parked_never_applied() {
    let mut r = Replica::with_capacity(universe(), 16).unwrap();
    for i in 0..100u8 {
        let fake = ElementId([i; 32]);
        assert!(r.effect(Operation::new(format!("f{i}"), [fake])).is_empty());
    }
    assert_eq!(r.state().len(), 1);
    assert_eq!(r.pending().len(), 16);
    assert_eq!(r.stats().evicted, 84);
}

#[test]
fn equivocation_yields_distinct_siblings() {
    let h = random_history(1, 4);
    let base = h.world.state().max_ids().clone();
    let ya = Operation { payload: Payload::from("y_a"), mlb_hashes: base.clone() };
    let yb = Operation { payload: Payload::from("y_b"), mlb_hashes: base.clone() };
    let mut left = h.world.clone();
    let mut right = h.world.clone();
    left.effect(ya.clone());
    right.effect(yb.clone());
    left.effect(yb.clone());
    right.effect(ya.clone());
    assert_ne!(ya.id(), yb.id());
    for r in [&left, &right] {
        assert!(r.state().contains(&ya.id()) && r.state().contains(&yb.id()));
        assert_eq!(r.state().max_ids(), &[ya.id(), yb.id()].into_iter().collect::<BTreeSet<_>>());
    }
    assert_eq!(left.state(), right.state());
}
