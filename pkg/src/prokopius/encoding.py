"""Canonical byte encoding and domain-separated hashing.

Every hash computed anywhere in the system goes through :func:`tagged_hash`,
which prefixes a one-byte domain tag and length-prefixes each field, so a
byte string hashed in one role can never be replayed as a preimage in
another role.  The encoding is bit-exact by construction:

    H(tag || count:u32be || (len:u32be || bytes)*)

Integers travel as fixed-width big-endian fields.
"""

from __future__ import annotations

import hashlib

DIGEST_LEN = 32

# Domain tags.  0x01 is reserved for hashing raw node data (certificate
# bytes and similar) into a fixed-width datum digest; linking-tree leaves
# themselves carry client-supplied digests verbatim so that a verifier can
# fold a document digest straight through a proof path.
TAG_DATUM = 0x01
TAG_LINK_INTERNAL = 0x02
TAG_AST_NODE = 0x03
TAG_ROUND_ROOT = 0x04
TAG_TIME_TREE = 0x05
TAG_SENTINEL = 0x06
TAG_COIN_OUTPUT = 0x07
TAG_NIZK = 0x08
TAG_BROADCAST = 0x09
TAG_PRE_VOTE = 0x0A
TAG_MAIN_VOTE = 0x0B
TAG_COIN_SHARE = 0x0C
TAG_VBA_VOTE = 0x0D
TAG_ROUND_CHANGE = 0x10
TAG_TRACK_CHANGE = 0x11
TAG_ARCHIVE_SUGGEST = 0x12
TAG_GROUNDING_RELAY = 0x13
TAG_GLOBAL_AUTH = 0x14
TAG_MASTER_GLOBAL_AUTH = 0x15
TAG_TIME_AGREE = 0x16
TAG_MEMBER_SUGGEST = 0x17
TAG_JOIN_REQUEST = 0x18
TAG_DKG_DEAL = 0x19
TAG_DKG_SHARE = 0x1A
TAG_COIN_COMMIT = 0x1B
TAG_CLIENT = 0x1C


def u32(value: int) -> bytes:
    return value.to_bytes(4, "big")


def u64(value: int) -> bytes:
    return value.to_bytes(8, "big")


def i64(value: int) -> bytes:
    return value.to_bytes(8, "big", signed=True)


def canonical(tag: int, *fields: bytes) -> bytes:
    """Serialize fields under a domain tag (the preimage of tagged_hash)."""
    parts = [bytes([tag]), u32(len(fields))]
    for field in fields:
        parts.append(u32(len(field)))
        parts.append(field)
    return b"".join(parts)


def tagged_hash(tag: int, *fields: bytes) -> bytes:
    """SHA-256 over the canonical encoding; the one hash used everywhere."""
    return hashlib.sha256(canonical(tag, *fields)).digest()


def digest(data: bytes) -> bytes:
    """Plain digest of client data (documents, signatures, certificates).

    This is the well-known hash a client computes before submitting; it is
    deliberately untagged so that independently produced document digests
    match what the trees link.
    """
    return hashlib.sha256(data).digest()


def check_digest(value: bytes) -> bytes:
    if not isinstance(value, (bytes, bytearray)) or len(value) != DIGEST_LEN:
        raise ValueError(f"digest must be {DIGEST_LEN} bytes, got {value!r}")
    return bytes(value)


def datum_digest(data: bytes) -> bytes:
    """Fixed-width digest of a tree node's datum bytes."""
    return tagged_hash(TAG_DATUM, data)
