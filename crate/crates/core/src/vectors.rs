//! Pinned test vectors for element hashing, wire encodings and signatures.
//!
//! [`compute`] regenerates every vector from the implementation; [`check`]
//! compares against the pinned hex. `tools/gen_vectors.py` recomputes the
//! same values independently from the byte layouts.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::acedpm::{AcEvent, AcGenesis, ObjectId, ReplicaIdentity, ACT_CHAT, ACT_MEMBERSHIP};
use crate::acedpm::{membership_content, Membership};
use crate::epm::KvPayload;
use crate::id::{ElementId, Payload};
use crate::op::{hash_element, Operation};

pub const PINNED: &[(&str, &str)] = &[
    (
        "hash/genesis",
        "54e495efd7941d0d6a4eac15b9baf1c051f0f5a34a141e596659dbab5072d97d",
    ),
    (
        "hash/x1",
        "6dee2834cc5d5398546d1f790710fbc2e26529a05faf7072dafe9c5a85f7d188",
    ),
    (
        "hash/x2",
        "04bb06d50723bab2e403a09a0facf37b772876765f8e184b76d96526bfb17f26",
    ),
    (
        "hash/x3",
        "adf797c9eda6e48f237936c2bfd335505c637873cd8be7a124c357bb52c6e4e6",
    ),
    (
        "wire/op-x3",
        "0100000000000000027833000000000000000204bb06d50723bab2e403a09a0facf37b772876765f8e184b76d96526bfb17f266dee2834cc5d5398546d1f790710fbc2e26529a05faf7072dafe9c5a85f7d188",
    ),
    (
        "wire/kv",
        "020000000000000005636f6c6f720000000000000004626c7565",
    ),
    (
        "hash/kv-over-genesis",
        "51676698be1d6b8e7b2b33a47fd300741e54be5d6fe548a51d4281a25bc4d047",
    ),
    (
        "ed25519/pubkey-1",
        "8a88e3dd7409f195fd52db2d3cba5d72ca6709bf1d94121bf3748801b40f6f5c",
    ),
    (
        "ed25519/pubkey-2",
        "8139770ea87d175f56a35466c34c7ecccb8d8a91b4ee37a25df60f5b8fc9b394",
    ),
    (
        "ac/genesis-payload",
        "050000000000000004726f6f6d00000000000000208a88e3dd7409f195fd52db2d3cba5d72ca6709bf1d94121bf3748801b40f6f5c00000000000000640000000000000003000000000000000463686174000000000000000000000000000000056c6576656c0000000000000032000000000000000a6d656d626572736869700000000000000032",
    ),
    (
        "ac/genesis-id",
        "89082be2f6302ae9a3ba3147d6b6108668d3a437fbc598e885c30d25ff8883fb",
    ),
    (
        "ac/admit-signature",
        "e9f23b17e1e3c30856aaf4d99ebda4650593abcc9f8d6dfb354d9e2a5b2f4b5fedc4721468d5e0d8d5fd0446a1650ff0ef5b17cc15f33fd255ce33d702c5c70a",
    ),
    (
        "ac/admit-payload",
        "03000000000000000a6d656d6265727368697000000000000000208a88e3dd7409f195fd52db2d3cba5d72ca6709bf1d94121bf3748801b40f6f5c010000000000000021008139770ea87d175f56a35466c34c7ecccb8d8a91b4ee37a25df60f5b8fc9b394000000000000000101e9f23b17e1e3c30856aaf4d99ebda4650593abcc9f8d6dfb354d9e2a5b2f4b5fedc4721468d5e0d8d5fd0446a1650ff0ef5b17cc15f33fd255ce33d702c5c70a",
    ),
    (
        "ac/admit-id",
        "4af920595ec22c0beae2980289417df0138882f4843a3bd172d740804fbb0438",
    ),
    (
        "ac/chat-signature",
        "20fb125d53eea63c6819db2d42489c0d32b39664eac84a5ba68810ef2a4a8835d5798fcafaca1f5907dd20bcd1e56bcf661f15ee2097e1a67889b97427bd2f08",
    ),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VectorResult {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub ok: bool,
}

fn set(ids: &[ElementId]) -> BTreeSet<ElementId> {
    ids.iter().copied().collect()
}

/// Regenerates all vectors, in pinned order.
pub fn compute() -> Vec<(String, String)> {
    let mut out: Vec<(&str, Vec<u8>)> = Vec::new();
    let g = hash_element(&Payload::from("genesis"), &BTreeSet::new());
    let x1 = hash_element(&Payload::from("x1"), &set(&[g]));
    let x2 = hash_element(&Payload::from("x2"), &set(&[g]));
    let x3 = hash_element(&Payload::from("x3"), &set(&[x1, x2]));
    out.push(("hash/genesis", g.0.to_vec()));
    out.push(("hash/x1", x1.0.to_vec()));
    out.push(("hash/x2", x2.0.to_vec()));
    out.push(("hash/x3", x3.0.to_vec()));
    out.push(("wire/op-x3", Operation::new("x3", [x1, x2]).encode()));
    let kv = KvPayload::new("color", "blue").encode();
    out.push(("wire/kv", kv.0.clone()));
    out.push(("hash/kv-over-genesis", hash_element(&kv, &set(&[g])).0.to_vec()));

    let alice = ReplicaIdentity::from_seed([1; 32]);
    let bob = ReplicaIdentity::from_seed([2; 32]);
    out.push(("ed25519/pubkey-1", alice.subject().0.to_vec()));
    out.push(("ed25519/pubkey-2", bob.subject().0.to_vec()));
    let genesis = AcGenesis::new("room", alice.subject()).encode();
    let ag = hash_element(&genesis, &BTreeSet::new());
    out.push(("ac/genesis-payload", genesis.0.clone()));
    out.push(("ac/genesis-id", ag.0.to_vec()));

    let admit = alice.sign(
        ACT_MEMBERSHIP,
        Some(ObjectId::Subject(bob.subject())),
        membership_content(Membership::In),
        &set(&[ag]),
    );
    let payload = admit.encode();
    let admit_id = hash_element(&payload, &set(&[ag]));
    out.push(("ac/admit-signature", admit.signature.to_vec()));
    out.push(("ac/admit-payload", payload.0));
    out.push(("ac/admit-id", admit_id.0.to_vec()));
    let chat: AcEvent = alice.sign(ACT_CHAT, None, b"Hi!".to_vec(), &set(&[admit_id]));
    out.push(("ac/chat-signature", chat.signature.to_vec()));

    out.into_iter()
        .map(|(n, v)| (n.to_owned(), hex::encode(v)))
        .collect()
}

/// Compares regenerated vectors against [`PINNED`].
pub fn check() -> Vec<VectorResult> {
    let actual = compute();
    let mut results: Vec<VectorResult> = PINNED
        .iter()
        .map(|(name, expected)| {
            let got = actual
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .unwrap_or_default();
            VectorResult {
                name: (*name).to_owned(),
                expected: (*expected).to_owned(),
                ok: got == *expected,
                actual: got,
            }
        })
        .collect();
    for (name, value) in &actual {
        if !PINNED.iter().any(|(n, _)| n == name) {
            results.push(VectorResult {
                name: name.clone(),
                expected: String::new(),
                actual: value.clone(),
                ok: false,
            });
        }
    }
    results
}
