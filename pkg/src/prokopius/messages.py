"""Protocol message catalogue and canonical serialization.

Inside the simulator, messages travel as Python objects; their canonical
encodings exist so that (a) signatures and digests are over well-defined
bytes and (b) flow sizes reflect what a real wire would carry.  Encodings
are memoized per object because a broadcast shares one object across all
recipients.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .crypto import CoinShare, DleqProof, QuorumCert
from .encoding import (
    TAG_ARCHIVE_SUGGEST,
    TAG_BROADCAST,
    TAG_CLIENT,
    TAG_COIN_COMMIT,
    TAG_COIN_SHARE,
    TAG_DKG_DEAL,
    TAG_DKG_SHARE,
    TAG_GLOBAL_AUTH,
    TAG_GROUNDING_RELAY,
    TAG_JOIN_REQUEST,
    TAG_MAIN_VOTE,
    TAG_MEMBER_SUGGEST,
    TAG_PRE_VOTE,
    TAG_ROUND_CHANGE,
    TAG_TIME_AGREE,
    TAG_TRACK_CHANGE,
    TAG_VBA_VOTE,
    canonical,
    i64,
    u32,
)

# Rough per-message framing cost added to every flow (envelope, lengths).
WIRE_OVERHEAD = 96


def pack(*parts) -> bytes:
    """Typed, length-prefixed concatenation of ints, bytes, strings, tuples."""
    out = []
    for p in parts:
        if isinstance(p, bool):
            out.append(b"\x01" + u32(1) + bytes([p]))
        elif isinstance(p, int):
            out.append(b"\x02" + u32(8) + i64(p))
        elif isinstance(p, (bytes, bytearray)):
            out.append(b"\x03" + u32(len(p)) + bytes(p))
        elif isinstance(p, str):
            b = p.encode()
            out.append(b"\x04" + u32(len(b)) + b)
        elif isinstance(p, (tuple, list)):
            b = pack(*p)
            out.append(b"\x05" + u32(len(b)) + b)
        elif p is None:
            out.append(b"\x06" + u32(0))
        else:
            raise TypeError(f"cannot pack {type(p)}")
    return b"".join(out)


def encode_cert(cert: QuorumCert | None) -> bytes:
    if cert is None:
        return pack(None)
    return pack(cert.payload_digest, cert.threshold, tuple(cert.signers), tuple(cert.signatures))


def encode_coin_share(s: CoinShare, group) -> bytes:
    return pack(s.index, s.name, group.encode(s.value), s.proof.challenge, s.proof.response)


class Message:
    """Base for all protocol messages; subclasses set TAG and fields()."""

    TAG = 0
    __slots__ = ("_enc",)

    def fields(self) -> tuple:
        raise NotImplementedError

    def encode(self) -> bytes:
        enc = getattr(self, "_enc", None)
        if enc is None:
            enc = canonical(self.TAG, pack(*self.fields()))
            object.__setattr__(self, "_enc", enc)
        return enc

    def digest(self) -> bytes:
        return hashlib.sha256(self.encode()).digest()

    def size(self) -> int:
        return len(self.encode()) + WIRE_OVERHEAD


class Signed:
    """Envelope binding a message to its sender; verification memoized."""

    __slots__ = ("sender", "body", "signature", "_ok")

    def __init__(self, sender: int, body: Message, signature: bytes):
        self.sender = sender
        self.body = body
        self.signature = signature
        self._ok = None

    def verify(self, scheme, roster: dict[int, bytes]) -> bool:
        if self._ok is None:
            vk = roster.get(self.sender)
            self._ok = vk is not None and scheme.verify(vk, self.body.encode(), self.signature)
        return self._ok

    def encode(self) -> bytes:
        return pack(self.sender, self.body.encode(), self.signature)

    def size(self) -> int:
        return self.body.size() + len(self.signature) + 16


def sign_message(scheme, keypair, body: Message) -> Signed:
    return Signed(keypair.node_id, body, scheme.sign(keypair.signing_key, body.encode()))


# ---------------------------------------------------------------------------
# Verifiable consistent broadcast
# ---------------------------------------------------------------------------


def vcbc_receipt_digest(instance: tuple, payload_digest: bytes) -> bytes:
    """What echo receipts sign: the instance id bound to the payload digest."""
    return hashlib.sha256(canonical(TAG_BROADCAST, pack(instance, payload_digest))).digest()


@dataclass(slots=True, eq=False)
class VcbcSend(Message):
    instance: tuple
    payload: bytes
    obj: object = field(default=None)  # decoded payload riding along in-sim

    TAG = TAG_BROADCAST

    def fields(self):
        return (b"send", self.instance, self.payload)


@dataclass(slots=True, eq=False)
class VcbcEcho(Message):
    instance: tuple
    payload_digest: bytes
    receipt_sig: bytes

    TAG = TAG_BROADCAST

    def fields(self):
        return (b"echo", self.instance, self.payload_digest, self.receipt_sig)


@dataclass(slots=True, eq=False)
class VcbcFinal(Message):
    instance: tuple
    payload_digest: bytes
    cert: QuorumCert

    TAG = TAG_BROADCAST

    def fields(self):
        return (b"final", self.instance, self.payload_digest, encode_cert(self.cert))


@dataclass(slots=True, eq=False)
class VcbcRequest(Message):
    instance: tuple

    TAG = TAG_BROADCAST

    def fields(self):
        return (b"request", self.instance)


@dataclass(slots=True, eq=False)
class VcbcAnswer(Message):
    instance: tuple
    payload: bytes
    cert: QuorumCert
    obj: object = field(default=None)

    TAG = TAG_BROADCAST

    def fields(self):
        return (b"answer", self.instance, self.payload, encode_cert(self.cert))


# ---------------------------------------------------------------------------
# Binary agreement
# ---------------------------------------------------------------------------

ABSTAIN = 2  # main-vote value when pre-votes conflicted


@dataclass(slots=True, eq=False)
class PreVote(Message):
    ba_id: tuple
    round: int
    value: int  # 0 or 1
    justification: tuple = ()  # Signed messages from the prior phase

    TAG = TAG_PRE_VOTE

    def fields(self):
        return (
            self.ba_id,
            self.round,
            self.value,
            tuple(s.encode() for s in self.justification),
        )


@dataclass(slots=True, eq=False)
class MainVote(Message):
    ba_id: tuple
    round: int
    value: int  # 0, 1 or ABSTAIN
    justification: tuple = ()

    TAG = TAG_MAIN_VOTE

    def fields(self):
        return (
            self.ba_id,
            self.round,
            self.value,
            tuple(s.encode() for s in self.justification),
        )


@dataclass(slots=True, eq=False)
class CoinShareMsg(Message):
    ba_id: tuple
    round: int
    share_enc: bytes
    share: CoinShare = field(default=None)

    TAG = TAG_COIN_SHARE

    def fields(self):
        return (self.ba_id, self.round, self.share_enc)


@dataclass(slots=True, eq=False)
class BaDecided(Message):
    """Decision plus the main-vote quorum that justifies it."""

    ba_id: tuple
    value: int
    justification: tuple = ()

    TAG = TAG_MAIN_VOTE

    def fields(self):
        return (b"decided", self.ba_id, self.value, tuple(s.encode() for s in self.justification))


# ---------------------------------------------------------------------------
# Multivalued agreement
# ---------------------------------------------------------------------------


@dataclass(slots=True, eq=False)
class VbaVote(Message):
    vba_id: tuple
    candidate: int
    vote: int  # 1 with a delivery proof, else 0
    proof_digest: bytes = b""
    cert: QuorumCert = field(default=None)

    TAG = TAG_VBA_VOTE

    def fields(self):
        return (self.vba_id, self.candidate, self.vote, self.proof_digest, encode_cert(self.cert))


@dataclass(slots=True, eq=False)
class VbaFetch(Message):
    vba_id: tuple
    candidate: int

    TAG = TAG_VBA_VOTE

    def fields(self):
        return (b"fetch", self.vba_id, self.candidate)


# ---------------------------------------------------------------------------
# Round-change pipeline
# ---------------------------------------------------------------------------


@dataclass(slots=True, eq=False)
class RoundChange(Message):
    round: int

    TAG = TAG_ROUND_CHANGE

    def fields(self):
        return (self.round,)


# Suggestion purposes, in pipeline order; each carries its own domain tag.
TRACK, CERTS, GROUND, MEMBER, COIN, TIME = 1, 2, 3, 4, 5, 6

_PURPOSE_TAGS = {
    TRACK: TAG_TRACK_CHANGE,
    CERTS: TAG_ARCHIVE_SUGGEST,
    GROUND: TAG_GROUNDING_RELAY,
    MEMBER: TAG_MEMBER_SUGGEST,
    COIN: TAG_COIN_COMMIT,
    TIME: TAG_TIME_AGREE,
}


@dataclass(slots=True, eq=False)
class Suggest(Message):
    """Generic suggestion: items a member vouches for this round/purpose."""

    purpose: int
    round: int
    items: tuple  # records; each has .encode()

    @property
    def TAG(self):  # noqa: N802 - mirrors the class-level constant
        return _PURPOSE_TAGS[self.purpose]

    def fields(self):
        return (self.purpose, self.round, tuple(r.encode() for r in self.items))


def global_auth_digest(round_index: int, g: bytes) -> bytes:
    return hashlib.sha256(canonical(TAG_GLOBAL_AUTH, pack(round_index, g))).digest()


@dataclass(slots=True, eq=False)
class GlobalAuth(Message):
    round: int
    g: bytes
    record_sig: bytes  # signature over global_auth_digest, for the cert

    TAG = TAG_GLOBAL_AUTH

    def fields(self):
        return (self.round, self.g, self.record_sig)


@dataclass(slots=True, eq=False)
class TimeAgree(Message):
    round: int
    s_local_ns: int

    TAG = TAG_TIME_AGREE

    def fields(self):
        return (self.round, self.s_local_ns)


@dataclass(slots=True, eq=False)
class DkgShare(Message):
    round: int
    dealer: int
    index: int
    share: int
    blind: int
    dealer_sig: bytes

    TAG = TAG_DKG_SHARE

    def fields(self):
        return (
            self.round,
            self.dealer,
            self.index,
            self.share.to_bytes(32, "big"),
            self.blind.to_bytes(32, "big"),
            self.dealer_sig,
        )


@dataclass(slots=True, eq=False)
class DkgReveal(Message):
    round: int
    dealer: int
    commitments_enc: tuple
    commitments: tuple = field(default=None)

    TAG = TAG_DKG_DEAL

    def fields(self):
        return (b"reveal", self.round, self.dealer, self.commitments_enc)


@dataclass(slots=True, eq=False)
class DkgReconstruct(Message):
    """A member's phase-1 share of a qualified dealer that failed to reveal."""

    round: int
    dealer: int
    index: int
    share: int
    blind: int
    dealer_sig: bytes

    TAG = TAG_DKG_DEAL

    def fields(self):
        return (
            b"reconstruct",
            self.round,
            self.dealer,
            self.index,
            self.share.to_bytes(32, "big"),
            self.blind.to_bytes(32, "big"),
            self.dealer_sig,
        )


@dataclass(slots=True, eq=False)
class JoinStateRequest(Message):
    round: int

    TAG = TAG_JOIN_REQUEST

    def fields(self):
        return (b"state-request", self.round)


@dataclass(slots=True, eq=False)
class JoinStateAnswer(Message):
    round: int
    state: object  # snapshot the joiner verifies against the current G
    honest: bool = True  # harness knob: a lying member corrupts the snapshot

    TAG = TAG_JOIN_REQUEST

    def fields(self):
        return (b"state-answer", self.round, self.honest)

    def size(self) -> int:
        return 4096 + WIRE_OVERHEAD  # archive snapshots dominate


# ---------------------------------------------------------------------------
# Client-signed records (items inside suggestions)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegisterIdentity:
    identity: str
    signature: bytes

    def encode(self) -> bytes:
        return canonical(TAG_CLIENT, pack(b"register", self.identity, self.signature))


@dataclass(frozen=True)
class DeregisterIdentity:
    identity: str
    signature: bytes

    def encode(self) -> bytes:
        return canonical(TAG_CLIENT, pack(b"deregister", self.identity, self.signature))


@dataclass(frozen=True)
class GroundingSubmission:
    tss_name: str
    time_ns: int
    value: bytes
    signature: bytes

    def encode(self) -> bytes:
        return canonical(
            TAG_CLIENT, pack(b"grounding", self.tss_name, self.time_ns, self.value, self.signature)
        )


@dataclass(frozen=True)
class JoinRequest:
    node_id: int
    verify_key: bytes
    signature: bytes

    def encode(self) -> bytes:
        return canonical(TAG_JOIN_REQUEST, pack(self.node_id, self.verify_key, self.signature))


@dataclass(frozen=True)
class CertUpdate:
    """Archive-update item: the certificate observed for a tracked identity."""

    identity: str
    cert_bytes: bytes

    def encode(self) -> bytes:
        return canonical(TAG_CLIENT, pack(b"cert-update", self.identity, self.cert_bytes))


@dataclass(frozen=True)
class MemberChange:
    """Membership-update item: one addition or removal."""

    action: str  # "add" or "remove"
    node_id: int
    verify_key: bytes = b""
    evidence: bytes = b""  # encoded accusation for provable removals

    def encode(self) -> bytes:
        return canonical(
            TAG_COIN_COMMIT, pack(b"member", self.action, self.node_id, self.verify_key, self.evidence)
        )


@dataclass(frozen=True)
class QualDealer:
    """Coin-commit item: a dealer whose deal this member verified."""

    dealer: int
    deal_digest: bytes

    def encode(self) -> bytes:
        return canonical(TAG_COIN_COMMIT, pack(b"qual", self.dealer, self.deal_digest))


@dataclass(frozen=True)
class TimeProposal:
    """Real-time agreement payload: the proposed mean of synchronized marks."""

    round: int
    mean_ns: int

    def encode(self) -> bytes:
        return canonical(TAG_TIME_AGREE, pack(b"proposal", self.round, self.mean_ns))
