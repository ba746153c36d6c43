"""Verifiable consistent broadcast over authenticated channels.

Three-step echo broadcast: the sender SENDs a payload to everyone, each
receiver signs an echo receipt for the first payload it sees per instance,
and the sender assembles q = ceil((n+f+1)/2) receipts into a delivery
proof carried by a FINAL message.  Receivers deliver on a valid FINAL;
whoever lacks the payload can pull it from any receipt signer.  Consistency
(no two honest deliveries differ) follows from receipt-quorum intersection;
totality is deliberately not guaranteed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .crypto import InsufficientSignatures, QuorumCert, assemble_quorum_cert, verify_quorum_cert
from .messages import (
    Signed,
    VcbcAnswer,
    VcbcEcho,
    VcbcFinal,
    VcbcRequest,
    VcbcSend,
    sign_message,
    vcbc_receipt_digest,
)


def echo_quorum(n: int, f: int) -> int:
    return math.ceil((n + f + 1) / 2)


@dataclass(frozen=True)
class DeliveryProof:
    instance: tuple
    payload_digest: bytes
    cert: QuorumCert


def verify_delivery_proof(proof: DeliveryProof, roster: dict[int, bytes], n: int, f: int, scheme) -> bool:
    q = echo_quorum(n, f)
    if proof.cert.payload_digest != vcbc_receipt_digest(proof.instance, proof.payload_digest):
        return False
    return verify_quorum_cert(proof.cert, roster, scheme, threshold=q)


class BroadcastContext:
    """Per-node wiring shared by all broadcast instances."""

    def __init__(self, node_id: int, n: int, f: int, roster: dict[int, bytes], scheme, keypair):
        self.node_id = node_id
        self.n = n
        self.f = f
        self.roster = roster
        self.scheme = scheme
        self.keypair = keypair
        self.q = echo_quorum(n, f)

    def members(self):
        return sorted(self.roster)


class VcbcInstance:
    """One broadcast instance at one node (sender or receiver role)."""

    def __init__(self, ctx: BroadcastContext, instance: tuple, validator=None):
        self.ctx = ctx
        self.instance = instance
        self.validator = validator  # echo gate: payload accepted only if it passes
        self.payload: bytes | None = None
        self.obj = None
        self.echoed_digest: bytes | None = None
        self.receipts: dict[int, bytes] = {}
        self.proof: DeliveryProof | None = None
        self.delivered = False
        self.conflicts: list[tuple[Signed, bytes]] = []
        self._final_sent = False
        self._requested = False

    # -- sender side ---------------------------------------------------

    def send(self, payload: bytes, obj=None) -> list[tuple[int | None, Signed]]:
        """Start the broadcast; returns (dst, message) pairs, None = all."""
        self.payload = payload
        self.obj = obj
        msg = sign_message(self.ctx.scheme, self.ctx.keypair, VcbcSend(self.instance, payload, obj))
        out = [(None, msg)]
        # The sender's own receipt counts toward the quorum.
        digest = vcbc_receipt_digest(self.instance, self._payload_digest())
        self.echoed_digest = self._payload_digest()
        self.receipts[self.ctx.node_id] = self.ctx.scheme.sign(self.ctx.keypair.signing_key, digest)
        return out

    def _payload_digest(self) -> bytes:
        import hashlib

        return hashlib.sha256(self.payload).digest()

    def on_echo(self, signed: Signed) -> list[tuple[int | None, Signed]]:
        msg: VcbcEcho = signed.body
        if self.payload is None or self.proof is not None:
            return []
        digest = self._payload_digest()
        if msg.payload_digest != digest:
            return []
        receipt = vcbc_receipt_digest(self.instance, digest)
        vk = self.ctx.roster.get(signed.sender)
        if vk is None or not self.ctx.scheme.verify(vk, receipt, msg.receipt_sig):
            return []
        self.receipts[signed.sender] = msg.receipt_sig
        if len(self.receipts) >= self.ctx.q and not self._final_sent:
            try:
                cert = assemble_quorum_cert(
                    receipt, list(self.receipts.items()), self.ctx.q, self.ctx.roster, self.ctx.scheme
                )
            except InsufficientSignatures:
                return []
            self.proof = DeliveryProof(self.instance, digest, cert)
            self.delivered = True
            self._final_sent = True
            final = sign_message(
                self.ctx.scheme, self.ctx.keypair, VcbcFinal(self.instance, digest, cert)
            )
            return [(None, final)]
        return []

    # -- receiver side ---------------------------------------------------

    def on_send(self, signed: Signed) -> list[tuple[int | None, Signed]]:
        msg: VcbcSend = signed.body
        if signed.sender != self.instance[2]:
            return []  # instance ids bind the sender
        import hashlib

        digest = hashlib.sha256(msg.payload).digest()
        if self.echoed_digest is not None:
            if digest != self.echoed_digest:
                self.conflicts.append((signed, self.echoed_digest))
            return []
        if self.validator is not None and not self.validator(msg.payload, msg.obj):
            return []
        self.payload = msg.payload
        self.obj = msg.obj
        self.echoed_digest = digest
        receipt = vcbc_receipt_digest(self.instance, digest)
        sig = self.ctx.scheme.sign(self.ctx.keypair.signing_key, receipt)
        echo = sign_message(
            self.ctx.scheme, self.ctx.keypair, VcbcEcho(self.instance, digest, sig)
        )
        return [(signed.sender, echo)]

    def on_final(self, signed: Signed) -> list[tuple[int | None, Signed]]:
        msg: VcbcFinal = signed.body
        if self.delivered:
            return []
        proof = DeliveryProof(self.instance, msg.payload_digest, msg.cert)
        if not verify_delivery_proof(proof, self.ctx.roster, self.ctx.n, self.ctx.f, self.ctx.scheme):
            return []
        self.proof = proof
        if self.payload is not None and self.echoed_digest == msg.payload_digest:
            self.delivered = True
            return []
        # Payload missing (or we echoed a conflicting one that never won):
        # pull it from receipt signers.
        if not self._requested:
            self._requested = True
            req = sign_message(self.ctx.scheme, self.ctx.keypair, VcbcRequest(self.instance))
            targets = sorted(set(proof.cert.signers))[: self.ctx.f + 1]
            return [(t, req) for t in targets if t != self.ctx.node_id]
        return []

    def on_request(self, signed: Signed) -> list[tuple[int | None, Signed]]:
        if self.payload is None or self.proof is None:
            return []
        answer = sign_message(
            self.ctx.scheme,
            self.ctx.keypair,
            VcbcAnswer(self.instance, self.payload, self.proof.cert, self.obj),
        )
        return [(signed.sender, answer)]

    def on_answer(self, signed: Signed) -> list[tuple[int | None, Signed]]:
        msg: VcbcAnswer = signed.body
        if self.delivered or self.proof is None:
            return []
        import hashlib

        if hashlib.sha256(msg.payload).digest() != self.proof.payload_digest:
            return []
        self.payload = msg.payload
        self.obj = msg.obj
        self.delivered = True
        return []

    # -- retransmission ----------------------------------------------------

    def retransmit(self) -> list[tuple[int | None, Signed]]:
        """Resend whatever moves the instance forward (loss recovery)."""
        if self.instance[2] == self.ctx.node_id and self.payload is not None:
            if self._final_sent and self.proof is not None:
                final = sign_message(
                    self.ctx.scheme,
                    self.ctx.keypair,
                    VcbcFinal(self.instance, self.proof.payload_digest, self.proof.cert),
                )
                return [(None, final)]
            msg = sign_message(
                self.ctx.scheme, self.ctx.keypair, VcbcSend(self.instance, self.payload, self.obj)
            )
            return [(m, msg) for m in self.ctx.members() if m not in self.receipts]
        return []


class BroadcastNode:
    """Routes broadcast traffic to per-instance state machines."""

    def __init__(self, ctx: BroadcastContext):
        self.ctx = ctx
        self.instances: dict[tuple, VcbcInstance] = {}
        self.validators: dict[tuple, object] = {}  # purpose tag -> validator

    def instance(self, instance_id: tuple) -> VcbcInstance:
        inst = self.instances.get(instance_id)
        if inst is None:
            validator = self.validators.get(instance_id[1])
            inst = VcbcInstance(self.ctx, instance_id, validator)
            self.instances[instance_id] = inst
        return inst

    def broadcast(self, instance_id: tuple, payload: bytes, obj=None):
        return self.instance(instance_id).send(payload, obj)

    def handle(self, signed: Signed) -> list[tuple[int | None, Signed]]:
        body = signed.body
        inst = self.instance(body.instance)
        if isinstance(body, VcbcSend):
            return inst.on_send(signed)
        if isinstance(body, VcbcEcho):
            return inst.on_echo(signed)
        if isinstance(body, VcbcFinal):
            return inst.on_final(signed)
        if isinstance(body, VcbcRequest):
            return inst.on_request(signed)
        if isinstance(body, VcbcAnswer):
            return inst.on_answer(signed)
        return []

    def delivered(self, instance_id: tuple):
        inst = self.instances.get(instance_id)
        if inst is None or not inst.delivered or inst.payload is None:
            return None
        return inst.payload, inst.obj, inst.proof
