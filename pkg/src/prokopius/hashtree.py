"""Merkle-style linking structures.

Three tree families share this module:

- :class:`LinkingTree` — sorted Merkle trees over fixed digests, rebuilt
  from scratch each round.  Leaf labels are the submitted digests verbatim,
  so a verifier can fold a document digest straight through a sibling path.
- :class:`AuthSearchTree` — a *versioned, balanced* authenticated search
  tree (red-black, persistent with structural sharing).  Node labels bind
  the search key and the datum digest, which lets proof verification also
  check that the maintainer keeps the tree sorted.
- :class:`TimeTree` — a balanced but *not* versioned search tree keyed by
  round number; its root label is the global authenticator for the round.

All labels are domain-separated (see :mod:`prokopius.encoding`), so a proof
for one structure can never be spliced into another.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, replace
from enum import IntEnum

from .encoding import (
    DIGEST_LEN,
    TAG_AST_NODE,
    TAG_LINK_INTERNAL,
    TAG_ROUND_ROOT,
    TAG_SENTINEL,
    TAG_TIME_TREE,
    check_digest,
    datum_digest,
    tagged_hash,
    u64,
)


class DuplicateKey(Exception):
    pass


class NotFound(Exception):
    pass


class IsPresent(Exception):
    pass


class RoundGap(Exception):
    pass


# Label of an absent child.  Shared by the search trees and used as the
# root label of an empty tree.
NIL_LABEL = tagged_hash(TAG_SENTINEL, b"nil")

# Root of a round's grounding tree when no submissions arrived.
EMPTY_GROUNDING_ROOT = tagged_hash(TAG_SENTINEL, b"empty-grounding")


class Side(IntEnum):
    """Position of the proof target under its parent."""

    TARGET_IS_LEFT = 0
    TARGET_IS_RIGHT = 1
    TARGET_IS_ONLY = 2  # parent had a single child (odd linking-tree node)


# ---------------------------------------------------------------------------
# Linking trees
# ---------------------------------------------------------------------------


def _link_pair(left: bytes, right: bytes) -> bytes:
    return tagged_hash(TAG_LINK_INTERNAL, left, right)


def _link_lone(child: bytes) -> bytes:
    return tagged_hash(TAG_LINK_INTERNAL, child)


@dataclass(frozen=True)
class LinkStep:
    side: Side
    sibling: bytes | None = None  # None iff side is TARGET_IS_ONLY


@dataclass(frozen=True)
class LinkProof:
    """Sibling path from a leaf digest to a linking-tree root."""

    steps: tuple[LinkStep, ...]


class LinkingTree:
    """Near-complete sorted Merkle tree, built fresh from its leaves.

    ``leaves`` is a list of ``(key, digest)`` with strictly increasing keys.
    An internal node over two children hashes their concatenation; a node
    over a single (odd) child hashes that child alone, never duplicating it.
    """

    def __init__(self, leaves: list[tuple[bytes, bytes]]):
        keys = [k for k, _ in leaves]
        if any(keys[i] >= keys[i + 1] for i in range(len(keys) - 1)):
            raise DuplicateKey("leaf keys must be strictly increasing")
        self.keys = keys
        self.leaf_digests = [check_digest(d) for _, d in leaves]
        self.levels: list[list[bytes]] = [list(self.leaf_digests)]
        level = self.levels[0]
        if len(level) == 1:
            self.levels.append([_link_lone(level[0])])
            level = self.levels[-1]
        while len(level) > 1:
            nxt = []
            for i in range(0, len(level) - 1, 2):
                nxt.append(_link_pair(level[i], level[i + 1]))
            if len(level) % 2:
                nxt.append(_link_lone(level[-1]))
            self.levels.append(nxt)
            level = nxt

    @property
    def root(self) -> bytes:
        if not self.levels[0]:
            return EMPTY_GROUNDING_ROOT
        return self.levels[-1][0]

    def __len__(self) -> int:
        return len(self.keys)

    def prove_inclusion(self, key: bytes) -> LinkProof:
        idx = bisect.bisect_left(self.keys, key)
        if idx >= len(self.keys) or self.keys[idx] != key:
            raise NotFound(f"key {key!r} not in linking tree")
        steps = []
        for level in self.levels[:-1]:
            sib = idx ^ 1
            if sib < len(level):
                side = Side.TARGET_IS_RIGHT if idx & 1 else Side.TARGET_IS_LEFT
                steps.append(LinkStep(side, level[sib]))
            else:
                steps.append(LinkStep(Side.TARGET_IS_ONLY))
            idx //= 2
        return LinkProof(tuple(steps))


def verify_link_proof(target: bytes, proof: LinkProof, root: bytes) -> bool:
    """Fold a digest through a sibling path and compare with the root."""
    try:
        acc = check_digest(target)
        for step in proof.steps:
            if step.side == Side.TARGET_IS_ONLY:
                if step.sibling is not None:
                    return False
                acc = _link_lone(acc)
            elif step.side == Side.TARGET_IS_RIGHT:
                acc = _link_pair(check_digest(step.sibling), acc)
            elif step.side == Side.TARGET_IS_LEFT:
                acc = _link_pair(acc, check_digest(step.sibling))
            else:
                return False
        return acc == root
    except (ValueError, TypeError):
        return False


# ---------------------------------------------------------------------------
# Persistent red-black nodes (shared by the search trees)
# ---------------------------------------------------------------------------

_RED = 0
_BLACK = 1
_BBLACK = 2  # transient double-black used during deletion

_EE = object()  # transient double-black empty


class _Node:
    __slots__ = ("color", "left", "key", "datum", "dd", "right", "label", "size")

    def __init__(self, tag, color, left, key, datum, dd, right):
        self.color = color
        self.left = left
        self.key = key
        self.datum = datum
        self.dd = dd
        self.right = right
        self.label = tagged_hash(
            tag,
            left.label if isinstance(left, _Node) else NIL_LABEL,
            key,
            dd,
            right.label if isinstance(right, _Node) else NIL_LABEL,
        )
        self.size = (
            1
            + (left.size if isinstance(left, _Node) else 0)
            + (right.size if isinstance(right, _Node) else 0)
        )


def _is_node(t) -> bool:
    return isinstance(t, _Node)


def _recolor(tag, t: _Node, color: int) -> _Node:
    if t.color == color:
        return t
    return _Node(tag, color, t.left, t.key, t.datum, t.dd, t.right)


def _blacken_bb(tag, t):
    """Demote a double-black child to single black (EE becomes empty)."""
    if t is _EE:
        return None
    return _recolor(tag, t, _BLACK)


def _is_bb(t) -> bool:
    return t is _EE or (_is_node(t) and t.color == _BBLACK)


def _balance(tag, color, left, key, datum, dd, right):
    # Okasaki's four red-red rotations, extended with the two double-black
    # cases that arise during deletion.
    if color == _BLACK:
        if _is_node(left) and left.color == _RED:
            if _is_node(left.left) and left.left.color == _RED:
                ll = left.left
                return _Node(
                    tag, _RED,
                    _recolor(tag, ll, _BLACK),
                    left.key, left.datum, left.dd,
                    _Node(tag, _BLACK, left.right, key, datum, dd, right),
                )
            if _is_node(left.right) and left.right.color == _RED:
                lr = left.right
                return _Node(
                    tag, _RED,
                    _Node(tag, _BLACK, left.left, left.key, left.datum, left.dd, lr.left),
                    lr.key, lr.datum, lr.dd,
                    _Node(tag, _BLACK, lr.right, key, datum, dd, right),
                )
        if _is_node(right) and right.color == _RED:
            if _is_node(right.left) and right.left.color == _RED:
                rl = right.left
                return _Node(
                    tag, _RED,
                    _Node(tag, _BLACK, left, key, datum, dd, rl.left),
                    rl.key, rl.datum, rl.dd,
                    _Node(tag, _BLACK, rl.right, right.key, right.datum, right.dd, right.right),
                )
            if _is_node(right.right) and right.right.color == _RED:
                rr = right.right
                return _Node(
                    tag, _RED,
                    _Node(tag, _BLACK, left, key, datum, dd, right.left),
                    right.key, right.datum, right.dd,
                    _recolor(tag, rr, _BLACK),
                )
    elif color == _BBLACK:
        if _is_node(left) and left.color == _RED and _is_node(left.right) and left.right.color == _RED:
            lr = left.right
            return _Node(
                tag, _BLACK,
                _Node(tag, _BLACK, left.left, left.key, left.datum, left.dd, lr.left),
                lr.key, lr.datum, lr.dd,
                _Node(tag, _BLACK, lr.right, key, datum, dd, right),
            )
        if _is_node(right) and right.color == _RED and _is_node(right.left) and right.left.color == _RED:
            rl = right.left
            return _Node(
                tag, _BLACK,
                _Node(tag, _BLACK, left, key, datum, dd, rl.left),
                rl.key, rl.datum, rl.dd,
                _Node(tag, _BLACK, rl.right, right.key, right.datum, right.dd, right.right),
            )
    return _Node(tag, color, left, key, datum, dd, right)


def _insert(tag, root, key, datum, dd):
    def ins(t):
        if t is None:
            return _Node(tag, _RED, None, key, datum, dd, None)
        if key < t.key:
            return _balance(tag, t.color, ins(t.left), t.key, t.datum, t.dd, t.right)
        if key > t.key:
            return _balance(tag, t.color, t.left, t.key, t.datum, t.dd, ins(t.right))
        raise DuplicateKey(f"key {key!r} already present")

    return _recolor(tag, ins(root), _BLACK)


def _rotate(tag, color, left, key, datum, dd, right):
    # Germane-Might deletion rotations: push a double-black deficit upward.
    if color == _RED:
        if _is_bb(left) and _is_node(right) and right.color == _BLACK:
            return _balance(
                tag, _BLACK,
                _Node(tag, _RED, _blacken_bb(tag, left), key, datum, dd, right.left),
                right.key, right.datum, right.dd,
                right.right,
            )
        if _is_bb(right) and _is_node(left) and left.color == _BLACK:
            return _balance(
                tag, _BLACK,
                left.left,
                left.key, left.datum, left.dd,
                _Node(tag, _RED, left.right, key, datum, dd, _blacken_bb(tag, right)),
            )
    elif color == _BLACK:
        if _is_bb(left) and _is_node(right) and right.color == _BLACK:
            return _balance(
                tag, _BBLACK,
                _Node(tag, _RED, _blacken_bb(tag, left), key, datum, dd, right.left),
                right.key, right.datum, right.dd,
                right.right,
            )
        if _is_bb(right) and _is_node(left) and left.color == _BLACK:
            return _balance(
                tag, _BBLACK,
                left.left,
                left.key, left.datum, left.dd,
                _Node(tag, _RED, left.right, key, datum, dd, _blacken_bb(tag, right)),
            )
        if (
            _is_bb(left)
            and _is_node(right)
            and right.color == _RED
            and _is_node(right.left)
            and right.left.color == _BLACK
        ):
            rl = right.left
            return _Node(
                tag, _BLACK,
                _balance(
                    tag, _BLACK,
                    _Node(tag, _RED, _blacken_bb(tag, left), key, datum, dd, rl.left),
                    rl.key, rl.datum, rl.dd,
                    rl.right,
                ),
                right.key, right.datum, right.dd,
                right.right,
            )
        if (
            _is_bb(right)
            and _is_node(left)
            and left.color == _RED
            and _is_node(left.right)
            and left.right.color == _BLACK
        ):
            lr = left.right
            return _Node(
                tag, _BLACK,
                left.left,
                left.key, left.datum, left.dd,
                _balance(
                    tag, _BLACK,
                    lr.left,
                    lr.key, lr.datum, lr.dd,
                    _Node(tag, _RED, lr.right, key, datum, dd, _blacken_bb(tag, right)),
                ),
            )
    return _Node(tag, color, left, key, datum, dd, right)


def _min_del(tag, t):
    """Remove the minimum node; returns (key, datum, dd, tree-or-EE)."""
    if t.left is None and t.right is None:
        if t.color == _RED:
            return t.key, t.datum, t.dd, None
        return t.key, t.datum, t.dd, _EE
    if t.left is None and _is_node(t.right) and t.right.color == _RED:
        return t.key, t.datum, t.dd, _recolor(tag, t.right, _BLACK)
    k, d, dd, left = _min_del(tag, t.left)
    return k, d, dd, _rotate(tag, t.color, left, t.key, t.datum, t.dd, t.right)


def _remove(tag, root, key):
    def redden(t):
        if (
            _is_node(t)
            and t.color == _BLACK
            and (t.left is None or t.left.color == _BLACK)
            and (t.right is None or t.right.color == _BLACK)
        ):
            return _recolor(tag, t, _RED)
        return t

    def del_(t):
        if t is None:
            raise NotFound(f"key {key!r} not present")
        if key < t.key:
            return _rotate(tag, t.color, del_(t.left), t.key, t.datum, t.dd, t.right)
        if key > t.key:
            return _rotate(tag, t.color, t.left, t.key, t.datum, t.dd, del_(t.right))
        # Found the node to remove.
        if t.right is None:
            if t.left is None:
                return None if t.color == _RED else _EE
            # Left child of a black node must be a red leaf; recolor it.
            return _recolor(tag, t.left, _BLACK)
        k, d, dd, right = _min_del(tag, t.right)
        return _rotate(tag, t.color, t.left, k, d, dd, right)

    result = del_(redden(root))
    if result is _EE or result is None:
        return None
    return _recolor(tag, result, _BLACK)


def _find(root, key):
    t = root
    while t is not None:
        if key < t.key:
            t = t.left
        elif key > t.key:
            t = t.right
        else:
            return t
    return None


# ---------------------------------------------------------------------------
# Search-tree proofs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchStep:
    """One ancestor on the path from the target node to the root."""

    key: bytes
    datum_digest: bytes
    sibling: bytes
    side: Side  # which child the target-side subtree is


@dataclass(frozen=True)
class SearchProof:
    key: bytes
    datum_digest: bytes
    left_label: bytes  # the target node's own child labels
    right_label: bytes
    steps: tuple[SearchStep, ...]  # target-adjacent first


@dataclass(frozen=True)
class AbsenceProof:
    """Two adjacent-key inclusion proofs bracketing the queried key.

    A missing neighbor proof stands for the virtual sentinel beyond the
    corresponding end of the key space.
    """

    queried_key: bytes
    left: SearchProof | None
    right: SearchProof | None


def _prove_node(root, key, tag) -> SearchProof:
    path = []  # (node, side of the next hop)
    t = root
    while t is not None:
        if key < t.key:
            path.append((t, Side.TARGET_IS_LEFT))
            t = t.left
        elif key > t.key:
            path.append((t, Side.TARGET_IS_RIGHT))
            t = t.right
        else:
            steps = []
            for anc, side in reversed(path):
                sib = anc.right if side == Side.TARGET_IS_LEFT else anc.left
                steps.append(
                    SearchStep(
                        anc.key,
                        anc.dd,
                        sib.label if _is_node(sib) else NIL_LABEL,
                        side,
                    )
                )
            return SearchProof(
                key,
                t.dd,
                t.left.label if _is_node(t.left) else NIL_LABEL,
                t.right.label if _is_node(t.right) else NIL_LABEL,
                tuple(steps),
            )
    raise NotFound(f"key {key!r} not present")


def _fold_search_proof(proof: SearchProof, tag: int) -> bytes | None:
    """Recompute the root label, enforcing key order along the path."""
    try:
        acc = tagged_hash(tag, proof.left_label, proof.key, proof.datum_digest, proof.right_label)
    except TypeError:
        return None
    lo_seen = hi_seen = proof.key
    for step in proof.steps:
        if step.side == Side.TARGET_IS_LEFT:
            if not step.key > hi_seen:
                return None
            hi_seen = step.key
            acc = tagged_hash(tag, acc, step.key, step.datum_digest, step.sibling)
        elif step.side == Side.TARGET_IS_RIGHT:
            if not step.key < lo_seen:
                return None
            lo_seen = step.key
            acc = tagged_hash(tag, step.sibling, step.key, step.datum_digest, acc)
        else:
            return None
    return acc


def verify_search_inclusion(
    key: bytes, datum: bytes, proof: SearchProof, root_label: bytes, tag: int = TAG_AST_NODE
) -> bool:
    if proof.key != key or proof.datum_digest != datum_digest(datum):
        return False
    return _fold_search_proof(proof, tag) == root_label


def _is_min_proof(proof: SearchProof) -> bool:
    return proof.left_label == NIL_LABEL and all(
        s.side == Side.TARGET_IS_LEFT for s in proof.steps
    )


def _is_max_proof(proof: SearchProof) -> bool:
    return proof.right_label == NIL_LABEL and all(
        s.side == Side.TARGET_IS_RIGHT for s in proof.steps
    )


def _adjacent(left: SearchProof, right: SearchProof) -> bool:
    # Adjacency in a search tree: either the successor is the leftmost node
    # of the predecessor's right subtree, or the predecessor is the
    # rightmost node of the successor's left subtree.  Both shapes are
    # visible in the proofs themselves.
    for i, step in enumerate(right.steps):
        if step.key == left.key:
            return (
                step.side == Side.TARGET_IS_RIGHT
                and right.left_label == NIL_LABEL
                and all(s.side == Side.TARGET_IS_LEFT for s in right.steps[:i])
            )
    for i, step in enumerate(left.steps):
        if step.key == right.key:
            return (
                step.side == Side.TARGET_IS_LEFT
                and left.right_label == NIL_LABEL
                and all(s.side == Side.TARGET_IS_RIGHT for s in left.steps[:i])
            )
    return False


def verify_absence(
    key: bytes, proof: AbsenceProof, root_label: bytes, tag: int = TAG_AST_NODE
) -> bool:
    if proof.queried_key != key:
        return False
    if proof.left is None and proof.right is None:
        return root_label == NIL_LABEL
    if proof.left is None:
        return (
            proof.right.key > key
            and _fold_search_proof(proof.right, tag) == root_label
            and _is_min_proof(proof.right)
        )
    if proof.right is None:
        return (
            proof.left.key < key
            and _fold_search_proof(proof.left, tag) == root_label
            and _is_max_proof(proof.left)
        )
    return (
        proof.left.key < key < proof.right.key
        and _fold_search_proof(proof.left, tag) == root_label
        and _fold_search_proof(proof.right, tag) == root_label
        and _adjacent(proof.left, proof.right)
    )


# ---------------------------------------------------------------------------
# Versioned authenticated search tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuthSearchTree:
    """Persistent authenticated search tree; updates return new versions.

    Old versions stay valid and verifiable; unchanged subtrees are shared
    by reference, never copied.
    """

    root: _Node | None = None
    version: int = 0

    @classmethod
    def from_items(cls, items: dict[bytes, bytes] | list[tuple[bytes, bytes]], version: int = 0):
        """Canonical rebuild: insert every (key, datum) in sorted key order."""
        pairs = sorted(items.items() if isinstance(items, dict) else items)
        tree = cls(version=version)
        for key, datum in pairs:
            tree = tree.insert(key, datum)
        return replace(tree, version=version)

    @property
    def root_label(self) -> bytes:
        return self.root.label if self.root is not None else NIL_LABEL

    def __len__(self) -> int:
        return self.root.size if self.root is not None else 0

    def __contains__(self, key: bytes) -> bool:
        return _find(self.root, key) is not None

    def get(self, key: bytes) -> bytes:
        node = _find(self.root, key)
        if node is None:
            raise NotFound(f"key {key!r} not present")
        return node.datum

    def items(self) -> list[tuple[bytes, bytes]]:
        out: list[tuple[bytes, bytes]] = []

        def walk(t):
            if t is None:
                return
            walk(t.left)
            out.append((t.key, t.datum))
            walk(t.right)

        walk(self.root)
        return out

    def keys(self) -> list[bytes]:
        return [k for k, _ in self.items()]

    def insert(self, key: bytes, datum: bytes) -> "AuthSearchTree":
        root = _insert(TAG_AST_NODE, self.root, key, datum, datum_digest(datum))
        return AuthSearchTree(root, self.version + 1)

    def remove(self, key: bytes) -> "AuthSearchTree":
        root = _remove(TAG_AST_NODE, self.root, key)
        return AuthSearchTree(root, self.version + 1)

    def at_version(self, version: int) -> "AuthSearchTree":
        return replace(self, version=version)

    def prove_inclusion(self, key: bytes) -> SearchProof:
        return _prove_node(self.root, key, TAG_AST_NODE)

    def prove_absence(self, key: bytes) -> AbsenceProof:
        if key in self:
            raise IsPresent(f"key {key!r} present; request an inclusion proof")
        pred = succ = None
        t = self.root
        while t is not None:
            if key < t.key:
                succ = t.key
                t = t.left
            else:
                pred = t.key
                t = t.right
        left = _prove_node(self.root, pred, TAG_AST_NODE) if pred is not None else None
        right = _prove_node(self.root, succ, TAG_AST_NODE) if succ is not None else None
        return AbsenceProof(key, left, right)

    def height(self) -> int:
        def h(t):
            return 0 if t is None else 1 + max(h(t.left), h(t.right))

        return h(self.root)


# ---------------------------------------------------------------------------
# Round roots and the time tree
# ---------------------------------------------------------------------------


def round_root(round_index: int, grounding_root: bytes, archive_root: bytes) -> bytes:
    """Combine a round's grounding-tree and archive roots."""
    return tagged_hash(
        TAG_ROUND_ROOT, u64(round_index), check_digest(grounding_root), check_digest(archive_root)
    )


class TimeTree:
    """Balanced search tree of round roots; the root label is the global
    authenticator.  Inserts mutate in place; superseded authenticators are
    not retained."""

    def __init__(self):
        self._root: _Node | None = None
        self.last_round: int | None = None

    def insert(self, round_index: int, p: bytes) -> bytes:
        expected = 0 if self.last_round is None else self.last_round + 1
        if round_index != expected:
            raise RoundGap(f"expected round {expected}, got {round_index}")
        self._root = _insert(TAG_TIME_TREE, self._root, u64(round_index), p, datum_digest(p))
        self.last_round = round_index
        return self.root_label

    @property
    def root_label(self) -> bytes:
        return self._root.label if self._root is not None else NIL_LABEL

    def __len__(self) -> int:
        return self._root.size if self._root is not None else 0

    def get(self, round_index: int) -> bytes:
        node = _find(self._root, u64(round_index))
        if node is None:
            raise NotFound(f"round {round_index} not present")
        return node.datum

    def prove_inclusion(self, round_index: int) -> SearchProof:
        return _prove_node(self._root, u64(round_index), TAG_TIME_TREE)

    def items(self) -> list[tuple[int, bytes]]:
        out: list[tuple[int, bytes]] = []

        def walk(t):
            if t is None:
                return
            walk(t.left)
            out.append((int.from_bytes(t.key, "big"), t.datum))
            walk(t.right)

        walk(self._root)
        return out


def verify_time_tree_inclusion(round_index: int, p: bytes, proof: SearchProof, g: bytes) -> bool:
    return verify_search_inclusion(u64(round_index), p, proof, g, tag=TAG_TIME_TREE)


def grounding_key(tss_name: str, time_ns: int) -> bytes:
    """Grounding-tree sort key: TSS name, then submission time."""
    name = tss_name.encode()
    if b"\x00" in name:
        raise ValueError("TSS names must not contain NUL")
    return name + b"\x00" + u64(time_ns)
