#!/usr/bin/env python3
"""Independent reference implementation of the pinned test vectors.

Recomputes every vector from the documented byte layouts with hashlib and
the `cryptography` Ed25519 implementation and prints `name hex` lines.
"""
import hashlib
import struct

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

ELEMENT_TAG = 0x01
KV_TAG = 0x02
EVENT_TAG = 0x03
SIGN_TAG = 0x04
GENESIS_TAG = 0x05
WIRE_VERSION = 1


def u64(n):
    return struct.pack(">Q", n)


def i64(n):
    return struct.pack(">q", n)


def lp(b):
    return u64(len(b)) + b


def digests(ds):
    ds = sorted(ds)
    return u64(len(ds)) + b"".join(ds)


def element_id(payload, mlb):
    return hashlib.sha256(bytes([ELEMENT_TAG]) + lp(payload) + digests(mlb)).digest()


def op_encode(payload, mlb):
    return bytes([WIRE_VERSION]) + lp(payload) + digests(mlb)


def kv(key, value):
    return bytes([KV_TAG]) + lp(key) + lp(value)


def key(seed_byte):
    sk = Ed25519PrivateKey.from_private_bytes(bytes([seed_byte]) * 32)
    pk = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return sk, pk


def ac_genesis(room, creator):
    levels = sorted([(b"chat", 0), (b"level", 50), (b"membership", 50)])
    out = bytes([GENESIS_TAG]) + lp(room) + lp(creator) + i64(100) + u64(len(levels))
    for act, lvl in levels:
        out += lp(act) + i64(lvl)
    return out


def event_body(act, sbj, obj, cnt):
    out = bytes([EVENT_TAG]) + lp(act) + lp(sbj)
    out += (b"\x01" + lp(obj)) if obj is not None else b"\x00"
    return out + lp(cnt)


def main():
    out = []
    g = element_id(b"genesis", [])
    x1 = element_id(b"x1", [g])
    x2 = element_id(b"x2", [g])
    x3 = element_id(b"x3", [x1, x2])
    out.append(("hash/genesis", g))
    out.append(("hash/x1", x1))
    out.append(("hash/x2", x2))
    out.append(("hash/x3", x3))
    out.append(("wire/op-x3", op_encode(b"x3", [x1, x2])))
    out.append(("wire/kv", kv(b"color", b"blue")))
    out.append(("hash/kv-over-genesis", element_id(kv(b"color", b"blue"), [g])))

    sk1, pk1 = key(1)
    _, pk2 = key(2)
    out.append(("ed25519/pubkey-1", pk1))
    out.append(("ed25519/pubkey-2", pk2))
    genesis = ac_genesis(b"room", pk1)
    ag = element_id(genesis, [])
    out.append(("ac/genesis-payload", genesis))
    out.append(("ac/genesis-id", ag))

    obj = b"\x00" + pk2
    body = event_body(b"membership", pk1, obj, b"\x01")
    msg = bytes([SIGN_TAG]) + body + digests([ag])
    sig = sk1.sign(msg)
    out.append(("ac/admit-signature", sig))
    payload = body + sig
    out.append(("ac/admit-payload", payload))
    out.append(("ac/admit-id", element_id(payload, [ag])))

    chat = event_body(b"chat", pk1, None, b"Hi!")
    sig = sk1.sign(bytes([SIGN_TAG]) + chat + digests([element_id(payload, [ag])]))
    out.append(("ac/chat-signature", sig))

    for name, value in out:
        print(name, value.hex())


if __name__ == "__main__":
    main()
