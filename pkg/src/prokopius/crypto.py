"""Signatures, quorum certificates, secret sharing, and the threshold coin.

The shared random number generator ("coin") rests on discrete logs in a
prime-order cyclic group.  Two interchangeable group instantiations are
provided: a standard elliptic-curve group for production-grade runs and a
small Schnorr subgroup modulo a safe prime for fast, debuggable tests.
Re-keying the coin for a changed membership is dealer-free: every member
deals a fresh secret under hiding (Pedersen) commitments, cheaters are
provably accused, and binding (Feldman) commitments are revealed only after
the qualified-dealer set is fixed, so no dealer can bias the new secret.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

from .encoding import TAG_COIN_OUTPUT, TAG_DKG_SHARE, TAG_NIZK, canonical, tagged_hash, u64


class InsufficientSignatures(Exception):
    pass


class InsufficientShares(Exception):
    pass


class ShareRejected(Exception):
    def __init__(self, index: int):
        super().__init__(f"invalid coin share from index {index}")
        self.index = index


class DkgFailed(Exception):
    pass


# ---------------------------------------------------------------------------
# Prime-order groups
# ---------------------------------------------------------------------------


class SchnorrGroup:
    """Subgroup of squares modulo a safe prime p = 2q + 1 (test grade)."""

    name = "schnorr-test"

    identity = 1

    def __init__(self, p: int, q: int, g: int):
        self.p = p
        self.order = q
        self.g = g
        self.enc_len = (p.bit_length() + 7) // 8

    def op(self, a: int, b: int) -> int:
        return a * b % self.p

    def exp(self, base: int, e: int) -> int:
        return pow(base, e % self.order, self.p)

    def inv(self, a: int) -> int:
        return pow(a, -1, self.p)

    def encode(self, a: int) -> bytes:
        return a.to_bytes(self.enc_len, "big")

    def hash_to_group(self, data: bytes) -> int:
        # Try-and-increment, then square into the order-q subgroup.
        ctr = 0
        while True:
            x = int.from_bytes(tagged_hash(TAG_NIZK, b"h2g", data, u64(ctr)), "big") % self.p
            h = x * x % self.p
            if h != 1 and h != 0:
                return h
            ctr += 1


TEST_GROUP = SchnorrGroup(p=0x40000000000019C3, q=0x2000000000000CE1, g=4)


class Secp256k1Group:
    """The secp256k1 curve; its point group has prime order."""

    name = "secp256k1"

    identity = None
    P = 2**256 - 2**32 - 977
    order = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
    B = 7
    g = (
        0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798,
        0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8,
    )

    def op(self, a, b):
        return self._add(a, b)

    def _add(self, a, b):
        if a is None:
            return b
        if b is None:
            return a
        p = self.P
        if a[0] == b[0]:
            if (a[1] + b[1]) % p == 0:
                return None
            lam = (3 * a[0] * a[0]) * pow(2 * a[1], -1, p) % p
        else:
            lam = (b[1] - a[1]) * pow(b[0] - a[0], -1, p) % p
        x = (lam * lam - a[0] - b[0]) % p
        y = (lam * (a[0] - x) - a[1]) % p
        return (x, y)

    def exp(self, base, e):
        e %= self.order
        result = None
        addend = base
        while e:
            if e & 1:
                result = self._add(result, addend)
            addend = self._add(addend, addend)
            e >>= 1
        return result

    def encode(self, a) -> bytes:
        if a is None:
            return b"\x00" * 33
        return bytes([2 + (a[1] & 1)]) + a[0].to_bytes(32, "big")

    def hash_to_group(self, data: bytes):
        # Try-and-increment on x; P = 3 mod 4 so sqrt is a single pow.
        p = self.P
        ctr = 0
        while True:
            x = int.from_bytes(tagged_hash(TAG_NIZK, b"h2g", data, u64(ctr)), "big") % p
            y2 = (pow(x, 3, p) + self.B) % p
            y = pow(y2, (p + 1) // 4, p)
            if y * y % p == y2:
                return (x, y if y & 1 == 0 else p - y)
            ctr += 1


PROD_GROUP = Secp256k1Group()


def group_by_name(name: str):
    if name == TEST_GROUP.name:
        return TEST_GROUP
    if name == PROD_GROUP.name:
        return PROD_GROUP
    raise ValueError(f"unknown group {name!r}")


# ---------------------------------------------------------------------------
# Signatures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NodeKeyPair:
    node_id: int
    signing_key: bytes
    verify_key: bytes


class Ed25519Scheme:
    """Deterministic standard signatures (production-grade)."""

    name = "ed25519"

    def __init__(self):
        from cryptography.hazmat.primitives.asymmetric import ed25519 as _ed

        self._ed = _ed

    def keygen(self, node_id: int, seed: bytes) -> NodeKeyPair:
        sk = self._ed.Ed25519PrivateKey.from_private_bytes(
            hashlib.sha256(b"node-key" + seed + u64(node_id)).digest()
        )
        from cryptography.hazmat.primitives import serialization

        raw = serialization.Encoding.Raw
        priv = sk.private_bytes(
            raw, serialization.PrivateFormat.Raw, serialization.NoEncryption()
        )
        pub = sk.public_key().public_bytes(raw, serialization.PublicFormat.Raw)
        return NodeKeyPair(node_id, priv, pub)

    def sign(self, signing_key: bytes, message: bytes) -> bytes:
        sk = self._ed.Ed25519PrivateKey.from_private_bytes(signing_key)
        return sk.sign(message)

    def verify(self, verify_key: bytes, message: bytes, signature: bytes) -> bool:
        try:
            vk = self._ed.Ed25519PublicKey.from_public_bytes(verify_key)
            vk.verify(signature, message)
            return True
        except Exception:
            return False


class SimulatedScheme:
    """Zero-cost stand-in signatures for large simulations.

    Verification recomputes the tag from a registry of dealt keys, so it is
    only meaningful inside a harness that already authenticates senders;
    the interface is identical to the real scheme.
    """

    name = "simulated"

    def __init__(self):
        self._secrets: dict[bytes, bytes] = {}

    def keygen(self, node_id: int, seed: bytes) -> NodeKeyPair:
        sk = hashlib.sha256(b"sim-key" + seed + u64(node_id)).digest()
        vk = hashlib.sha256(b"sim-vk" + sk).digest()[:16]
        self._secrets[vk] = sk
        return NodeKeyPair(node_id, sk, vk)

    def sign(self, signing_key: bytes, message: bytes) -> bytes:
        return hashlib.sha256(signing_key + message).digest()[:16]

    def verify(self, verify_key: bytes, message: bytes, signature: bytes) -> bool:
        sk = self._secrets.get(verify_key)
        if sk is None:
            return False
        return hashlib.sha256(sk + message).digest()[:16] == signature


def scheme_by_name(name: str):
    if name == "ed25519" or name == "real":
        return Ed25519Scheme()
    if name == "simulated":
        return SimulatedScheme()
    raise ValueError(f"unknown signature scheme {name!r}")


# ---------------------------------------------------------------------------
# Quorum certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuorumCert:
    """A payload digest plus >= threshold signatures from distinct members."""

    payload_digest: bytes
    threshold: int
    signers: tuple[int, ...]
    signatures: tuple[bytes, ...]


def assemble_quorum_cert(
    payload_digest: bytes,
    sigs: Iterable[tuple[int, bytes]],
    threshold: int,
    roster: dict[int, bytes],
    scheme,
) -> QuorumCert:
    """Keep the valid, distinct signatures; fail only below threshold."""
    picked: dict[int, bytes] = {}
    for node_id, sig in sigs:
        if node_id in picked or node_id not in roster:
            continue
        if scheme.verify(roster[node_id], payload_digest, sig):
            picked[node_id] = sig
    if len(picked) < threshold:
        raise InsufficientSignatures(f"{len(picked)} valid signatures, need {threshold}")
    signers = tuple(sorted(picked))
    return QuorumCert(payload_digest, threshold, signers, tuple(picked[s] for s in signers))


def verify_quorum_cert(
    cert: QuorumCert, roster: dict[int, bytes], scheme, threshold: int | None = None
) -> bool:
    need = cert.threshold if threshold is None else threshold
    if len(set(cert.signers)) < need or len(cert.signers) != len(cert.signatures):
        return False
    seen = set()
    for node_id, sig in zip(cert.signers, cert.signatures):
        if node_id in seen or node_id not in roster:
            return False
        if not scheme.verify(roster[node_id], cert.payload_digest, sig):
            return False
        seen.add(node_id)
    return True


# ---------------------------------------------------------------------------
# Shamir sharing
# ---------------------------------------------------------------------------


def _poly_eval(coeffs: Sequence[int], x: int, order: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % order
    return acc


def lagrange_at_zero(indices: Sequence[int], order: int) -> list[int]:
    coeffs = []
    for i in indices:
        num = den = 1
        for j in indices:
            if j != i:
                num = num * j % order
                den = den * (j - i) % order
        coeffs.append(num * pow(den, -1, order) % order)
    return coeffs


def shamir_split(secret: int, n: int, f: int, order: int, rng) -> tuple[list[int], list[tuple[int, int]]]:
    """Degree-f polynomial through (0, secret); shares at x = 1..n."""
    coeffs = [secret % order] + [rng.randrange(order) for _ in range(f)]
    return coeffs, [(i, _poly_eval(coeffs, i, order)) for i in range(1, n + 1)]


def shamir_recover(points: Sequence[tuple[int, int]], f: int, order: int) -> int:
    if len({i for i, _ in points}) < f + 1:
        raise InsufficientShares(f"need {f + 1} distinct shares, got {len(points)}")
    points = sorted({i: v for i, v in points}.items())[: f + 1]
    lams = lagrange_at_zero([i for i, _ in points], order)
    return sum(lam * v for lam, (_, v) in zip(lams, points)) % order


@dataclass(frozen=True)
class CoinSecretShare:
    """One member's share of the coin secret plus the binding commitments."""

    index: int  # Shamir evaluation point, 1-based
    x: int
    commitments: tuple  # Feldman vector fixing the sharing polynomial


def share_public_key(group, commitments: Sequence, index: int):
    """Evaluate the commitment vector in the exponent at ``index``."""
    acc = group.identity
    xpow = 1
    for c in commitments:
        acc = group.op(acc, group.exp(c, xpow))
        xpow = xpow * index % group.order
    return acc


def feldman_check(group, commitments: Sequence, index: int, share: int) -> bool:
    return group.exp(group.g, share) == share_public_key(group, commitments, index)


def shamir_share(group, secret: int, n: int, f: int, rng) -> list[CoinSecretShare]:
    coeffs, points = shamir_split(secret, n, f, group.order, rng)
    commits = tuple(group.exp(group.g, c) for c in coeffs)
    return [CoinSecretShare(i, v, commits) for i, v in points]


# ---------------------------------------------------------------------------
# Discrete-log equality proofs and the coin
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DleqProof:
    challenge: int
    response: int


def _dleq_challenge(group, g1, h1, g2, h2, a1, a2, context: bytes) -> int:
    return (
        int.from_bytes(
            tagged_hash(
                TAG_NIZK,
                group.encode(g1),
                group.encode(h1),
                group.encode(g2),
                group.encode(h2),
                group.encode(a1),
                group.encode(a2),
                context,
            ),
            "big",
        )
        % group.order
    )


def dleq_prove(group, x: int, g1, g2, context: bytes = b"") -> DleqProof:
    """Prove log_{g1}(g1^x) = log_{g2}(g2^x) without revealing x."""
    h1, h2 = group.exp(g1, x), group.exp(g2, x)
    # Deterministic nonce bound to the witness and the statement.
    r = (
        int.from_bytes(
            tagged_hash(
                TAG_NIZK,
                b"nonce",
                (x % group.order).to_bytes(32, "big"),
                group.encode(h1),
                group.encode(h2),
                context,
            ),
            "big",
        )
        % group.order
    )
    a1, a2 = group.exp(g1, r), group.exp(g2, r)
    c = _dleq_challenge(group, g1, h1, g2, h2, a1, a2, context)
    z = (r + c * x) % group.order
    return DleqProof(c, z)


def dleq_verify(group, proof: DleqProof, g1, h1, g2, h2, context: bytes = b"") -> bool:
    try:
        a1 = group.op(group.exp(g1, proof.response), group.exp(h1, -proof.challenge))
        a2 = group.op(group.exp(g2, proof.response), group.exp(h2, -proof.challenge))
        return proof.challenge == _dleq_challenge(group, g1, h1, g2, h2, a1, a2, context)
    except Exception:
        return False


@dataclass(frozen=True)
class CoinShare:
    index: int
    name: bytes
    value: object  # H'(name)^{x_i}
    proof: DleqProof


def coin_share(group, secret_share: CoinSecretShare, name: bytes) -> CoinShare:
    base = group.hash_to_group(name)
    value = group.exp(base, secret_share.x)
    proof = dleq_prove(group, secret_share.x, group.g, base, context=name)
    return CoinShare(secret_share.index, name, value, proof)


def verify_coin_share(group, commitments: Sequence, share: CoinShare) -> bool:
    base = group.hash_to_group(share.name)
    vk = share_public_key(group, commitments, share.index)
    return dleq_verify(group, share.proof, group.g, vk, base, share.value, context=share.name)


def coin_combine_value(group, shares: Sequence[CoinShare], f: int):
    """Interpolate H'(name)^x in the exponent from any f+1 distinct shares."""
    distinct = sorted({s.index: s for s in shares}.items())
    if len(distinct) < f + 1:
        raise InsufficientShares(f"need {f + 1} coin shares, got {len(distinct)}")
    chosen = [s for _, s in distinct[: f + 1]]
    lams = lagrange_at_zero([s.index for s in chosen], group.order)
    acc = None
    for lam, s in zip(lams, chosen):
        term = group.exp(s.value, lam)
        acc = term if acc is None else group.op(acc, term)
    return acc


def coin_bit(group, combined) -> int:
    return tagged_hash(TAG_COIN_OUTPUT, group.encode(combined))[-1] & 1


def coin_combine(group, shares: Sequence[CoinShare], f: int) -> int:
    return coin_bit(group, coin_combine_value(group, shares, f))


def coin_seed(group, combined) -> bytes:
    """Seed bytes for deriving richer randomness from one combined value."""
    return tagged_hash(TAG_COIN_OUTPUT, b"seed", group.encode(combined))


# ---------------------------------------------------------------------------
# Dealer-free re-keying (two-phase: hiding commitments, then binding ones)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PedersenDeal:
    """Phase-1 broadcast: hiding commitments C_j = g^{a_j} h^{b_j}."""

    dealer: int
    n: int
    f: int
    commitments: tuple


@dataclass(frozen=True)
class DealtShare:
    """Directed share, signed by the dealer so a bad one is provable."""

    dealer: int
    index: int
    share: int
    blind: int
    signature: bytes


@dataclass(frozen=True)
class FeldmanReveal:
    """Phase-2 broadcast by qualified dealers: binding commitments g^{a_j}."""

    dealer: int
    commitments: tuple


@dataclass(frozen=True)
class Accusation:
    """Self-contained fraud evidence: the dealer-signed share that fails
    the dealer's own broadcast commitments."""

    accuser: int
    accused: int
    share: DealtShare
    deal: PedersenDeal


def pedersen_h(group):
    return group.hash_to_group(b"pedersen-h")


def dealt_share_message(group, dealer: int, index: int, share: int, blind: int) -> bytes:
    return canonical(
        TAG_DKG_SHARE,
        u64(dealer),
        u64(index),
        share.to_bytes(32, "big"),
        blind.to_bytes(32, "big"),
    )


def make_deal(group, scheme, keypair: NodeKeyPair, dealer: int, n: int, f: int, rng):
    """Create one dealer's contribution.

    Returns (deal, shares, reveal, secret); the secret and reveal are held
    back by the dealer until the qualified set is agreed.
    """
    secret = rng.randrange(group.order)
    a_coeffs, a_points = shamir_split(secret, n, f, group.order, rng)
    b_coeffs, b_points = shamir_split(rng.randrange(group.order), n, f, group.order, rng)
    h = pedersen_h(group)
    commits = tuple(
        group.op(group.exp(group.g, a), group.exp(h, b)) for a, b in zip(a_coeffs, b_coeffs)
    )
    deal = PedersenDeal(dealer, n, f, commits)
    shares = []
    for (i, s), (_, b) in zip(a_points, b_points):
        sig = scheme.sign(keypair.signing_key, dealt_share_message(group, dealer, i, s, b))
        shares.append(DealtShare(dealer, i, s, b, sig))
    reveal = FeldmanReveal(dealer, tuple(group.exp(group.g, a) for a in a_coeffs))
    return deal, shares, reveal, secret


def verify_dealt_share(group, deal: PedersenDeal, share: DealtShare) -> bool:
    if share.dealer != deal.dealer:
        return False
    h = pedersen_h(group)
    lhs = group.op(group.exp(group.g, share.share), group.exp(h, share.blind))
    return lhs == share_public_key(group, deal.commitments, share.index)


def verify_accusation(group, scheme, accusation: Accusation, dealer_vk: bytes) -> bool:
    """Anyone can check: the share is dealer-signed yet fails the dealer's
    commitments, so the dealer provably cheated."""
    share = accusation.share
    if share.dealer != accusation.accused or accusation.deal.dealer != accusation.accused:
        return False
    msg = dealt_share_message(group, share.dealer, share.index, share.share, share.blind)
    if not scheme.verify(dealer_vk, msg, share.signature):
        return False
    return not verify_dealt_share(group, accusation.deal, share)


def verify_reveal(group, deal: PedersenDeal, reveal: FeldmanReveal, share: DealtShare) -> bool:
    """Check a phase-2 reveal against one's own phase-1 share."""
    if reveal.dealer != deal.dealer or len(reveal.commitments) != len(deal.commitments):
        return False
    return feldman_check(group, reveal.commitments, share.index, share.share)


def reconstruct_reveal(group, shares: Sequence[DealtShare], f: int) -> FeldmanReveal:
    """Rebuild a missing dealer's binding commitments from f+1 of its shares."""
    pts = sorted({s.index: s.share for s in shares}.items())
    if len(pts) < f + 1:
        raise InsufficientShares(f"need {f + 1} shares to reconstruct, got {len(pts)}")
    pts = pts[: f + 1]
    # Interpolate the polynomial coefficients over the scalar field.
    order = group.order
    coeffs = [0] * (f + 1)
    for i, (xi, yi) in enumerate(pts):
        num = [1]
        den = 1
        for j, (xj, _) in enumerate(pts):
            if i == j:
                continue
            num = _poly_mul(num, [-xj % order, 1], order)
            den = den * (xi - xj) % order
        scale = yi * pow(den, -1, order) % order
        for k, c in enumerate(num):
            coeffs[k] = (coeffs[k] + scale * c) % order
    dealer = shares[0].dealer
    return FeldmanReveal(dealer, tuple(group.exp(group.g, c) for c in coeffs))


def _poly_mul(a: list[int], b: list[int], order: int) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            out[i + j] = (out[i + j] + ai * bj) % order
    return out


def combine_qualified(group, reveals: dict[int, FeldmanReveal], my_shares: dict[int, DealtShare], index: int) -> CoinSecretShare:
    """Sum qualified dealers' contributions into one coin secret share."""
    qual = sorted(reveals)
    x = sum(my_shares[d].share for d in qual) % group.order
    width = max(len(r.commitments) for r in reveals.values())
    combined = []
    for j in range(width):
        acc = None
        for d in qual:
            cs = reveals[d].commitments
            if j < len(cs):
                acc = cs[j] if acc is None else group.op(acc, cs[j])
        combined.append(acc)
    return CoinSecretShare(index, x, tuple(combined))


def dkg_round(group, scheme, keypairs: dict[int, NodeKeyPair], indices: dict[int, int], f: int, rng, cheat=None):
    """In-process run of the full re-keying protocol among honest members.

    ``indices`` maps member id to its Shamir evaluation point.  ``cheat``
    optionally maps a dealer id to the set of recipient ids that receive a
    corrupted share.  Returns (shares per member, accusations, qualified
    dealer ids, dealer secrets for test oracles).
    """
    members = sorted(indices)
    n = len(members)
    if n < 3 * f + 1:
        raise DkgFailed(f"need at least {3 * f + 1} members, have {n}")
    cheat = cheat or {}
    deals: dict[int, PedersenDeal] = {}
    dealt: dict[int, dict[int, DealtShare]] = {}  # dealer -> recipient -> share
    reveals: dict[int, FeldmanReveal] = {}
    secrets: dict[int, int] = {}
    for dealer in members:
        deal, shares, reveal, secret = make_deal(
            group, scheme, keypairs[dealer], dealer, n, f, rng
        )
        by_index = {s.index: s for s in shares}
        out = {}
        for member in members:
            share = by_index[indices[member]]
            if member in cheat.get(dealer, ()):  # corrupt and re-sign
                bad = share.share + 1
                sig = scheme.sign(
                    keypairs[dealer].signing_key,
                    dealt_share_message(group, dealer, share.index, bad, share.blind),
                )
                share = DealtShare(dealer, share.index, bad, share.blind, sig)
            out[member] = share
        deals[dealer] = deal
        dealt[dealer] = out
        reveals[dealer] = reveal
        secrets[dealer] = secret

    accusations: list[Accusation] = []
    for member in members:
        for dealer in members:
            share = dealt[dealer][member]
            if not verify_dealt_share(group, deals[dealer], share):
                accusations.append(Accusation(member, dealer, share, deals[dealer]))

    disqualified = {a.accused for a in accusations}
    qual = [d for d in members if d not in disqualified]
    if len(disqualified) > f:
        raise DkgFailed(f"{len(disqualified)} dealers disqualified, tolerate {f}")
    qual_reveals = {d: reveals[d] for d in qual}
    result = {}
    for member in members:
        my = {d: dealt[d][member] for d in qual}
        result[member] = combine_qualified(group, qual_reveals, my, indices[member])
    return result, accusations, qual, {d: secrets[d] for d in qual}


def deal_trusted_coin(group, n: int, f: int, rng) -> list[CoinSecretShare]:
    """Bootstrap coin for the initial round, dealt by the harness."""
    return shamir_share(group, rng.randrange(group.order), n, f, rng)
