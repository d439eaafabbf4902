"""Finite filtered event trees and adapted processes on them.

The tree plays the role of the probability space: the atoms of the sigma-field
at stage ``s`` are exactly the nodes of stage ``s``, leaves sit at the terminal
stage ``M`` and the root is the trivial sigma-field at time zero.

Internally nodes are addressed by their position in the sorted id list
("index"), and leaves by their position in a depth-first walk ("leaf column"),
so that the leaves below any node form a contiguous slice.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from typing import Any

import numpy as np

from .errors import (
    DanglingChild,
    DuplicateNodeId,
    LeafAtWrongStage,
    NonIncreasingDates,
    ProbabilitySumViolation,
    StageOutOfRange,
    TreeError,
    UnknownNode,
)

EPS_PROB = 1e-12


class EventTree:
    """Validated, immutable event tree.

    Args:
        nodes: node id -> (stage, [(child id, transition probability), ...]).
            Children keep the order given here; prior vectors of multi-prior
            operators are aligned with it.
        dates: calendar time of every stage, strictly increasing. Only the
            order matters to the solver.
    """

    def __init__(
        self,
        nodes: Mapping[int, tuple[int, Sequence[tuple[int, float]]]],
        dates: Sequence[float],
    ):
        if not nodes:
            raise TreeError("tree has no nodes")
        ids = sorted(int(i) for i in nodes)
        self.ids: tuple[int, ...] = tuple(ids)
        self.index: dict[int, int] = {nid: k for k, nid in enumerate(ids)}
        n = len(ids)
        self.n_nodes = n

        self.dates: tuple[float, ...] = tuple(float(d) for d in dates)
        horizon = max(int(nodes[i][0]) for i in ids)
        if len(self.dates) != horizon + 1:
            raise TreeError(
                f"expected {horizon + 1} dates (stages 0..{horizon}), got {len(self.dates)}"
            )
        for a, b in zip(self.dates, self.dates[1:]):
            if not b > a:
                raise NonIncreasingDates(f"dates must increase strictly: {self.dates}")
        self.horizon = horizon

        stage = np.empty(n, dtype=np.int64)
        parent = np.full(n, -1, dtype=np.int64)
        children: list[tuple[int, ...]] = []
        probs: list[np.ndarray] = []
        for k, nid in enumerate(ids):
            st, kids = nodes[nid]
            stage[k] = int(st)
            ch, pr = [], []
            for cid, p in kids:
                cid = int(cid)
                if cid not in self.index:
                    raise DanglingChild(f"node {nid} lists unknown child {cid}")
                c = self.index[cid]
                if parent[c] != -1:
                    raise TreeError(f"node {cid} has more than one parent")
                parent[c] = k
                p = float(p)
                if not (0.0 < p <= 1.0 + EPS_PROB):
                    raise ProbabilitySumViolation(
                        f"transition {nid}->{cid} has probability {p} outside (0, 1]"
                    )
                ch.append(c)
                pr.append(p)
            if ch and abs(math.fsum(pr) - 1.0) > EPS_PROB:
                raise ProbabilitySumViolation(
                    f"children of node {nid} sum to {math.fsum(pr)!r}, not 1"
                )
            children.append(tuple(ch))
            probs.append(np.array(pr, dtype=float))

        roots = [k for k in range(n) if parent[k] == -1]
        if len(roots) != 1:
            raise TreeError(f"expected exactly one root, found {[ids[k] for k in roots]}")
        self.root = roots[0]
        if stage[self.root] != 0:
            raise TreeError(f"root {ids[self.root]} must be at stage 0")
        for k in range(n):
            for c in children[k]:
                if stage[c] != stage[k] + 1:
                    raise TreeError(
                        f"child {ids[c]} of node {ids[k]} must be at stage {stage[k] + 1}"
                    )
            if not children[k] and stage[k] != horizon:
                raise LeafAtWrongStage(
                    f"leaf {ids[k]} is at stage {stage[k]}, terminal stage is {horizon}"
                )

        self.stage = stage
        self.parent = parent
        self.children = tuple(children)
        self.child_probs = tuple(probs)

        # depth-first leaf numbering; leaves below a node are a contiguous slice
        leaves: list[int] = []
        lo = np.zeros(n, dtype=np.int64)
        hi = np.zeros(n, dtype=np.int64)
        order: list[int] = []
        stack: list[tuple[int, bool]] = [(self.root, False)]
        while stack:
            k, done = stack.pop()
            if done:
                hi[k] = len(leaves)
                continue
            order.append(k)
            lo[k] = len(leaves)
            stack.append((k, True))
            if not children[k]:
                leaves.append(k)
            else:
                for c in reversed(children[k]):
                    stack.append((c, False))
        if len(order) != n:
            raise TreeError("tree is not connected")
        self.leaves = np.array(leaves, dtype=np.int64)
        self.n_leaves = len(leaves)
        self.leaf_lo = lo
        self.leaf_hi = hi
        self.leaf_column = {int(k): j for j, k in enumerate(leaves)}

        paths = np.empty((self.n_leaves, horizon + 1), dtype=np.int64)
        for j, leaf in enumerate(leaves):
            k = leaf
            while k != -1:
                paths[j, stage[k]] = k
                k = parent[k]
        self.paths = paths

        self.stage_nodes: tuple[np.ndarray, ...] = tuple(
            np.flatnonzero(stage == s) for s in range(horizon + 1)
        )
        # padded child layout per stage for vectorised aggregation; padding
        # repeats the first child with zero weight
        stage_children, stage_probs = [], []
        for s in range(horizon + 1):
            nodes_s = self.stage_nodes[s]
            width = max((len(children[k]) for k in nodes_s), default=0)
            ch = np.zeros((len(nodes_s), max(width, 1)), dtype=np.int64)
            pr = np.zeros((len(nodes_s), max(width, 1)), dtype=float)
            for r, k in enumerate(nodes_s):
                if children[k]:
                    ch[r, :] = children[k][0]
                    ch[r, : len(children[k])] = children[k]
                    pr[r, : len(children[k])] = probs[k]
            stage_children.append(ch)
            stage_probs.append(pr)
        self.stage_children = tuple(stage_children)
        self.stage_probs = tuple(stage_probs)

        for arr in (self.stage, self.parent, self.leaves, self.leaf_lo, self.leaf_hi, self.paths):
            arr.flags.writeable = False

    # -- lookups -----------------------------------------------------------

    def idx(self, node_id: int) -> int:
        try:
            return self.index[int(node_id)]
        except (KeyError, TypeError, ValueError):
            raise UnknownNode(f"unknown node {node_id!r}") from None

    def node_id(self, k: int) -> int:
        return self.ids[int(k)]

    def is_leaf(self, node_id: int) -> bool:
        return not self.children[self.idx(node_id)]

    def stage_of(self, node_id: int) -> int:
        return int(self.stage[self.idx(node_id)])

    def children_of(self, node_id: int) -> list[tuple[int, float]]:
        k = self.idx(node_id)
        return [(self.ids[c], float(p)) for c, p in zip(self.children[k], self.child_probs[k])]

    @property
    def root_id(self) -> int:
        return self.ids[self.root]

    @property
    def leaf_ids(self) -> list[int]:
        """Leaf ids in depth-first order (the leaf-column order)."""
        return [self.ids[k] for k in self.leaves]

    def nodes_at(self, stage: int) -> list[int]:
        if not 0 <= stage <= self.horizon:
            raise StageOutOfRange(f"stage {stage} outside 0..{self.horizon}")
        return [self.ids[k] for k in self.stage_nodes[stage]]

    def leaf_span(self, k: int) -> slice:
        return slice(int(self.leaf_lo[k]), int(self.leaf_hi[k]))

    def event_mask(self, node_ids: Iterable[int]) -> np.ndarray:
        """Leaf-column mask of the union of the subtrees below ``node_ids``."""
        mask = np.zeros(self.n_leaves, dtype=bool)
        for nid in node_ids:
            mask[self.leaf_span(self.idx(nid))] = True
        return mask

    def path_probabilities(self) -> np.ndarray:
        """Probability of every root-to-leaf path, in leaf-column order."""
        out = np.ones(self.n_leaves)
        for j in range(self.n_leaves):
            for s in range(self.horizon):
                a, b = self.paths[j, s], self.paths[j, s + 1]
                out[j] *= self.child_probs[a][self.children[a].index(b)]
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": [
                {
                    "id": nid,
                    "stage": int(self.stage[k]),
                    "children": [
                        {"id": self.ids[c], "prob": float(p)}
                        for c, p in zip(self.children[k], self.child_probs[k])
                    ],
                }
                for k, nid in enumerate(self.ids)
            ],
            "dates": list(self.dates),
        }

    def __repr__(self) -> str:
        return f"EventTree(nodes={self.n_nodes}, leaves={self.n_leaves}, horizon={self.horizon})"


class AdaptedProcess:
    """One real value per node of a tree.

    Measurability is structural: a node is an atom, so a value attached to it
    is constant on that atom.
    """

    __slots__ = ("tree", "values")

    def __init__(self, tree: EventTree, values: Mapping[int, float] | np.ndarray):
        if isinstance(values, np.ndarray):
            arr = np.array(values, dtype=float)
            if arr.shape != (tree.n_nodes,):
                raise ValueError(f"expected {tree.n_nodes} values, got shape {arr.shape}")
        else:
            arr = np.empty(tree.n_nodes, dtype=float)
            seen = set()
            for nid, v in values.items():
                k = tree.idx(nid)
                arr[k] = float(v)
                seen.add(k)
            missing = [tree.ids[k] for k in range(tree.n_nodes) if k not in seen]
            if missing:
                raise ValueError(f"process undefined at nodes {missing}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("process values must be finite")
        arr.flags.writeable = False
        self.tree = tree
        self.values = arr

    @classmethod
    def constant(cls, tree: EventTree, c: float) -> AdaptedProcess:
        return cls(tree, np.full(tree.n_nodes, float(c)))

    def __getitem__(self, node_id: int) -> float:
        return float(self.values[self.tree.idx(node_id)])

    def as_dict(self) -> dict[int, float]:
        return {nid: float(self.values[k]) for k, nid in enumerate(self.tree.ids)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AdaptedProcess):
            return NotImplemented
        return self.tree is other.tree and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"AdaptedProcess({self.as_dict()})"


def build_tree(spec: Mapping[str, Any]) -> EventTree:
    """Build an :class:`EventTree` from a plain description.

    ``spec`` has the layout used by instance files::

        {"nodes": [{"id": 0, "stage": 0, "children": [{"id": 1, "prob": 0.5}, ...]}, ...],
         "dates": [0.0, 1.0]}

    ``dates`` may also be a mapping stage -> time.
    """
    raw_nodes = spec.get("nodes")
    if not isinstance(raw_nodes, list):
        raise TreeError("tree description needs a 'nodes' list")
    nodes: dict[int, tuple[int, list[tuple[int, float]]]] = {}
    for entry in raw_nodes:
        try:
            nid = int(entry["id"])
            stage = int(entry["stage"])
            kids = [(int(c["id"]), float(c["prob"])) for c in entry.get("children", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise TreeError(f"malformed node entry {entry!r}: {exc}") from None
        if nid in nodes:
            raise DuplicateNodeId(f"node id {nid} appears twice")
        if stage < 0:
            raise TreeError(f"node {nid} has negative stage {stage}")
        nodes[nid] = (stage, kids)

    raw_dates = spec.get("dates")
    if isinstance(raw_dates, Mapping):
        try:
            keyed = {int(k): float(v) for k, v in raw_dates.items()}
        except (TypeError, ValueError):
            raise TreeError(f"malformed dates {raw_dates!r}") from None
        if sorted(keyed) != list(range(len(keyed))):
            raise TreeError(f"dates must be given for stages 0..M, got {sorted(keyed)}")
        dates = [keyed[s] for s in range(len(keyed))]
    elif isinstance(raw_dates, list):
        dates = [float(d) for d in raw_dates]
    else:
        raise TreeError("tree description needs 'dates'")
    return EventTree(nodes, dates)


def descendants(tree: EventTree, node: int) -> frozenset[int]:
    """All nodes of the subtree rooted at ``node``, inclusive."""
    todo = [tree.idx(node)]
    out = set()
    while todo:
        k = todo.pop()
        out.add(tree.ids[k])
        todo.extend(tree.children[k])
    return frozenset(out)


def is_measurable_at(tree: EventTree, X: AdaptedProcess, stage: int) -> bool:
    """True iff ``X`` is constant on the subtree below each node of ``stage``."""
    if not 0 <= stage <= tree.horizon:
        raise StageOutOfRange(f"stage {stage} outside 0..{tree.horizon}")
    for k in tree.stage_nodes[stage]:
        sub = [tree.idx(n) for n in descendants(tree, tree.ids[k])]
        if np.ptp(X.values[sub]) != 0.0:
            return False
    return True
