"""Virtual tree topologies rooted at rank 0."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ._validation import check_count, floor_log2
from .types import AlgorithmId, InvalidArgument


class TreeKind(str, Enum):
    Flat = "Flat"
    Chain = "Chain"
    BinaryBalanced = "BinaryBalanced"
    KChain = "KChain"
    BinomialBalanced = "BinomialBalanced"
    BinomialInOrder = "BinomialInOrder"


TREE_FOR_ALGORITHM = {
    AlgorithmId.BcastLinear: TreeKind.Flat,
    AlgorithmId.BcastChain: TreeKind.Chain,
    AlgorithmId.BcastBinary: TreeKind.BinaryBalanced,
    AlgorithmId.BcastSplitBinary: TreeKind.BinaryBalanced,
    AlgorithmId.BcastKChain: TreeKind.KChain,
    AlgorithmId.BcastBinomial: TreeKind.BinomialBalanced,
    AlgorithmId.GatherLinear: TreeKind.Flat,
    AlgorithmId.GatherLinearSync: TreeKind.Flat,
    AlgorithmId.GatherBinomial: TreeKind.BinomialInOrder,
}


@dataclass(frozen=True)
class Tree:
    """Parent/children arrays over ranks ``0..size-1``.

    Construction does not check the tree invariants so that malformed trees can
    be represented; use :func:`validate_tree`.
    """

    kind: TreeKind
    parent: tuple[int, ...]
    children: tuple[tuple[int, ...], ...]
    K: int | None = None
    root: int = 0

    @property
    def size(self) -> int:
        return len(self.parent)

    @classmethod
    def from_parents(cls, kind: TreeKind, parent, K: int | None = None) -> "Tree":
        parent = tuple(int(p) for p in parent)
        kids: list[list[int]] = [[] for _ in parent]
        for rank, p in enumerate(parent):
            if rank != 0 and 0 <= p < len(parent):
                kids[p].append(rank)
        return cls(TreeKind(kind), parent, tuple(tuple(k) for k in kids), K)

    def depth(self, rank: int) -> int:
        d = 0
        while rank != self.root:
            rank = self.parent[rank]
            d += 1
            if d > self.size:
                raise InvalidArgument("parent array contains a cycle")
        return d

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "P": self.size, "parent": list(self.parent)}
        if self.K is not None:
            out["K"] = self.K
        return out


def _flat(P: int) -> list[list[int]]:
    return [list(range(1, P))] + [[] for _ in range(1, P)]


def _chain(P: int) -> list[list[int]]:
    return [[r + 1] if r + 1 < P else [] for r in range(P)]


def _binary(P: int) -> list[list[int]]:
    # level l holds ranks 2**l - 1 .. 2**(l+1) - 2; children sit 2**l and
    # 2**(l+1) ranks further on, so level l+1 is filled left subtree first
    kids = []
    for r in range(P):
        delta = 2 ** floor_log2(r + 1)
        kids.append([c for c in (r + delta, r + 2 * delta) if c < P])
    return kids


def _kchain(P: int, K: int) -> list[list[int]]:
    kids: list[list[int]] = [[] for _ in range(P)]
    n_chains = min(K, P - 1)
    if n_chains == 0:
        return kids
    base, extra = divmod(P - 1, n_chains)
    rank = 1
    for c in range(n_chains):
        length = base + (1 if c < extra else 0)
        kids[0].append(rank)
        for _ in range(length - 1):
            kids[rank].append(rank + 1)
            rank += 1
        rank += 1
    return kids


def _binomial_balanced(P: int) -> list[list[int]]:
    kids = []
    for r in range(P):
        out, step = [], 1
        while r + step < P:
            if step > r:
                out.append(r + step)
            step *= 2
        kids.append(out)
    return kids


def _binomial_in_order(P: int) -> list[list[int]]:
    kids = []
    for r in range(P):
        low = r & -r if r else P
        out, step = [], 1
        while step < low and r + step < P:
            out.append(r + step)
            step *= 2
        kids.append(out)
    return kids


def build_tree(kind: TreeKind | str, P: int, K: int | None = None) -> Tree:
    kind = TreeKind(kind)
    P = check_count(P, "P")
    if kind is TreeKind.KChain:
        if K is None:
            raise InvalidArgument("a k-chain tree needs the fanout K")
        K = check_count(K, "K", minimum=2)
        kids = _kchain(P, K)
    else:
        K = None
        kids = {
            TreeKind.Flat: _flat,
            TreeKind.Chain: _chain,
            TreeKind.BinaryBalanced: _binary,
            TreeKind.BinomialBalanced: _binomial_balanced,
            TreeKind.BinomialInOrder: _binomial_in_order,
        }[kind](P)
    parent = [0] * P
    for r, cs in enumerate(kids):
        for c in cs:
            parent[c] = r
    return Tree(kind, tuple(parent), tuple(tuple(c) for c in kids), K)


def height(tree: Tree) -> int:
    return max((tree.depth(r) for r in range(tree.size)), default=0)


def expected_height(kind: TreeKind, P: int, K: int | None = None) -> int:
    if P == 1:
        return 0
    if kind is TreeKind.Flat:
        return 1
    if kind is TreeKind.Chain:
        return P - 1
    if kind is TreeKind.KChain:
        return -(-(P - 1) // K)
    return floor_log2(P)


def validate_tree(tree: Tree) -> list[str]:
    """Return a list of human-readable problems; empty when the tree is sound."""
    problems: list[str] = []
    P = tree.size
    if P == 0:
        return ["tree has no ranks"]
    if len(tree.children) != P:
        problems.append(f"children array has {len(tree.children)} entries for {P} ranks")
        return problems
    if tree.root != 0 or tree.parent[0] != 0:
        problems.append("root must be rank 0 and be its own parent")
    seen: dict[int, int] = {}
    for r, cs in enumerate(tree.children):
        for c in cs:
            if not 0 <= c < P:
                problems.append(f"rank {r} lists out-of-range child {c}")
            elif c == 0:
                problems.append(f"rank {r} lists the root as a child")
            elif c in seen:
                problems.append(f"rank {c} appears in children of both {seen[c]} and {r}")
            else:
                seen[c] = r
    for r in range(1, P):
        p = tree.parent[r]
        if not 0 <= p < P:
            problems.append(f"rank {r} has out-of-range parent {p}")
        elif seen.get(r) != p:
            problems.append(f"rank {r}: parent {p} disagrees with children lists")
    if problems:
        return problems
    for r in range(P):
        node, steps = r, 0
        while node != 0 and steps <= P:
            node = tree.parent[node]
            steps += 1
        if node != 0:
            problems.append(f"cycle: rank {r} never reaches the root")
            return problems
    want = expected_height(tree.kind, P, tree.K)
    got = height(tree)
    if got != want:
        problems.append(f"height mismatch: {tree.kind.value} with P={P} has height {got}, expected {want}")
    return problems
