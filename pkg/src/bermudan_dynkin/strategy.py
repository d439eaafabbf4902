"""Bermudan stopping strategies on an event tree.

A stopping time is stored as the vector of its stop *stages*, one entry per
leaf column: on a tree the stop node of a path is determined by its stage, so
pointwise min/max/comparison become elementwise integer operations. The
public face is still the set of stop nodes.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Sequence
from typing import Any

import numpy as np

from .errors import (
    EnumerationLimitExceeded,
    InvalidStoppingTime,
    NotMeasurable,
    ScheduleError,
    SchemaMismatch,
)
from .lattice import AdaptedProcess, EventTree

DEFAULT_ENUM_LIMIT = 10**6


def _cut_stages(tree: EventTree, node_ids: Iterable[int]) -> np.ndarray:
    """Per-leaf stop stage of a node set; raises unless it is an exact cut."""
    ind = np.zeros(tree.n_nodes, dtype=bool)
    for nid in node_ids:
        ind[tree.idx(nid)] = True
    on_path = ind[tree.paths]
    hits = on_path.sum(axis=1)
    bad = np.flatnonzero(hits != 1)
    if bad.size:
        leaf = tree.ids[tree.leaves[bad[0]]]
        raise InvalidStoppingTime(
            f"path to leaf {leaf} meets the node set {int(hits[bad[0]])} times, expected once"
        )
    return on_path.argmax(axis=1).astype(np.int64)


def _stop_node_indices(tree: EventTree, stages: np.ndarray) -> np.ndarray:
    return tree.paths[np.arange(tree.n_leaves), stages]


class ExerciseSchedule:
    """Exercise dates theta_0 <= ... <= theta_K given as cuts of the tree.

    ``theta[0]`` must be the root and ``theta[K]`` the set of leaves; dates
    beyond ``K`` are identified with the horizon.
    """

    def __init__(self, tree: EventTree, theta: Sequence[Iterable[int]]):
        if len(theta) < 2:
            raise ScheduleError("schedule needs K >= 1, i.e. at least two exercise cuts")
        cuts = [frozenset(int(n) for n in t) for t in theta]
        try:
            stages = np.stack([_cut_stages(tree, c) for c in cuts])
        except InvalidStoppingTime as exc:
            raise ScheduleError(f"exercise date is not a stopping time: {exc}") from None
        if cuts[0] != {tree.root_id}:
            raise ScheduleError("theta_0 must be the root (time zero)")
        if cuts[-1] != set(tree.leaf_ids):
            raise ScheduleError("theta_K must be the horizon (all leaves)")
        for k in range(len(cuts) - 1):
            if np.any(stages[k] > stages[k + 1]):
                raise ScheduleError(f"theta_{k} > theta_{k + 1} on some path")
        self.tree = tree
        self.theta: tuple[frozenset[int], ...] = tuple(cuts)
        self.theta_stages = stages
        stages.flags.writeable = False
        allowed = np.zeros(tree.n_nodes, dtype=bool)
        for c in cuts:
            for nid in c:
                allowed[tree.idx(nid)] = True
        allowed[tree.leaves] = True
        allowed.flags.writeable = False
        self.allowed = allowed
        self._cache: dict[str, Any] = {}

    @classmethod
    def all_stages(cls, tree: EventTree) -> ExerciseSchedule:
        """Every stage is an exercise date (theta_k = stage k)."""
        cuts = [tree.nodes_at(s) for s in range(tree.horizon + 1)]
        if len(cuts) == 1:
            cuts.append(cuts[0])
        return cls(tree, cuts)

    @property
    def K(self) -> int:
        return len(self.theta) - 1

    def exercisable(self, node_id: int) -> frozenset[int]:
        """Indices k with ``node_id`` in theta_k."""
        return frozenset(k for k, c in enumerate(self.theta) if int(node_id) in c)

    def is_all_stages(self) -> bool:
        t = self.tree
        return all(
            self.theta[k] == set(t.nodes_at(min(k, t.horizon))) for k in range(len(self.theta))
        )

    def to_json(self) -> Any:
        if self.is_all_stages():
            return "all-stages"
        return {"theta": [sorted(c) for c in self.theta]}

    def __repr__(self) -> str:
        return f"ExerciseSchedule(K={self.K}, tree={self.tree!r})"


class BermudanStoppingTime:
    """An exact cut of the tree supported on exercise dates or the horizon."""

    __slots__ = ("schedule", "stages")

    def __init__(self, schedule: ExerciseSchedule, stop_nodes: Iterable[int]):
        tree = schedule.tree
        stages = _cut_stages(tree, stop_nodes)
        nodes = _stop_node_indices(tree, stages)
        bad = sorted({tree.ids[k] for k in nodes if not schedule.allowed[k]})
        if bad:
            raise InvalidStoppingTime(f"nodes {bad} are neither exercise dates nor leaves")
        stages.flags.writeable = False
        self.schedule = schedule
        self.stages = stages

    @classmethod
    def _from_stages(cls, schedule: ExerciseSchedule, stages: np.ndarray) -> BermudanStoppingTime:
        obj = cls.__new__(cls)
        arr = np.array(stages, dtype=np.int64)
        arr.flags.writeable = False
        obj.schedule = schedule
        obj.stages = arr
        return obj

    @property
    def tree(self) -> EventTree:
        return self.schedule.tree

    @property
    def stop_nodes(self) -> frozenset[int]:
        tree = self.schedule.tree
        return frozenset(tree.ids[k] for k in _stop_node_indices(tree, self.stages))

    def stop_index(self) -> np.ndarray:
        """Stop-node index for every leaf column."""
        return _stop_node_indices(self.schedule.tree, self.stages)

    def leaf_map(self) -> dict[int, int]:
        """Leaf id -> id of the node where this strategy stops on that path."""
        tree = self.schedule.tree
        return {
            tree.ids[leaf]: tree.ids[k] for leaf, k in zip(tree.leaves, self.stop_index())
        }

    def node_status(self) -> np.ndarray:
        """Per node: -1 strictly before the cut, 0 on it, +1 after it."""
        tree = self.schedule.tree
        cut = self.stages[tree.leaf_lo]
        return np.sign(tree.stage - cut)

    def sorted_nodes(self) -> list[int]:
        return sorted(self.stop_nodes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BermudanStoppingTime):
            return NotImplemented
        return _same_schema(self, other) and np.array_equal(self.stages, other.stages)

    def __hash__(self) -> int:
        return hash(self.stages.tobytes())

    def __repr__(self) -> str:
        return f"BermudanStoppingTime({self.sorted_nodes()})"


def _same_schema(a: BermudanStoppingTime, b: BermudanStoppingTime) -> bool:
    return a.schedule is b.schedule or (
        a.schedule.tree is b.schedule.tree and a.schedule.theta == b.schedule.theta
    )


def _check_schema(*taus: BermudanStoppingTime) -> ExerciseSchedule:
    first = taus[0]
    for t in taus[1:]:
        if not _same_schema(first, t):
            raise SchemaMismatch("stopping times belong to different trees or schedules")
    return first.schedule


def at_start(schedule: ExerciseSchedule) -> BermudanStoppingTime:
    """The strategy stopping immediately (theta_0 = 0)."""
    return BermudanStoppingTime._from_stages(schedule, np.zeros(schedule.tree.n_leaves))


def at_horizon(schedule: ExerciseSchedule) -> BermudanStoppingTime:
    """The strategy that never stops before T."""
    t = schedule.tree
    return BermudanStoppingTime._from_stages(schedule, np.full(t.n_leaves, t.horizon))


# --- canonical writing -------------------------------------------------------


def canonical_partition(
    tau: BermudanStoppingTime,
) -> tuple[list[frozenset[int]], frozenset[int]]:
    """Canonical sets (A_0, ..., A_K) and A-bar, as sets of leaf ids.

    A_0 = {tau = theta_0}; A_{k+1} = {tau = theta_{k+1} < T} minus the earlier
    sets; A-bar is the rest.
    """
    sched = tau.schedule
    tree = sched.tree
    horizon = tree.horizon
    taken = np.zeros(tree.n_leaves, dtype=bool)
    parts = []
    for k in range(sched.K + 1):
        th = sched.theta_stages[k]
        hit = tau.stages == th
        if k > 0:
            hit &= th < horizon
        hit &= ~taken
        taken |= hit
        parts.append(frozenset(tree.ids[tree.leaves[j]] for j in np.flatnonzero(hit)))
    rest = frozenset(tree.ids[tree.leaves[j]] for j in np.flatnonzero(~taken))
    return parts, rest


def reconstruct(
    schedule: ExerciseSchedule, parts: Sequence[Iterable[int]], rest: Iterable[int]
) -> BermudanStoppingTime:
    """Inverse of :func:`canonical_partition`: tau = sum theta_k 1_{A_k} + T 1_{A-bar}.

    Non-canonical partitions are accepted as long as the result is a valid
    strategy; the first set containing a leaf wins.
    """
    tree = schedule.tree
    stages = np.full(tree.n_leaves, -1, dtype=np.int64)
    for k, part in enumerate(parts):
        for leaf in part:
            j = tree.leaf_column[tree.idx(leaf)]
            if stages[j] < 0:
                stages[j] = schedule.theta_stages[min(k, schedule.K), j]
    for leaf in rest:
        j = tree.leaf_column[tree.idx(leaf)]
        if stages[j] < 0:
            stages[j] = tree.horizon
    if np.any(stages < 0):
        raise InvalidStoppingTime("partition does not cover every leaf")
    nodes = {tree.ids[k] for k in _stop_node_indices(tree, stages)}
    return BermudanStoppingTime(schedule, nodes)


# --- lattice operations ----------------------------------------------------


def meet(tau: BermudanStoppingTime, other: BermudanStoppingTime) -> BermudanStoppingTime:
    sched = _check_schema(tau, other)
    return BermudanStoppingTime._from_stages(sched, np.minimum(tau.stages, other.stages))


def join(tau: BermudanStoppingTime, other: BermudanStoppingTime) -> BermudanStoppingTime:
    sched = _check_schema(tau, other)
    return BermudanStoppingTime._from_stages(sched, np.maximum(tau.stages, other.stages))


def leq(tau: BermudanStoppingTime, other: BermudanStoppingTime) -> bool:
    _check_schema(tau, other)
    return bool(np.all(tau.stages <= other.stages))


def event_of(tree: EventTree, A: Iterable[int] | np.ndarray) -> np.ndarray:
    """Leaf mask of an event given as node ids (union of their subtrees) or a mask."""
    if isinstance(A, np.ndarray) and A.dtype == bool:
        if A.shape != (tree.n_leaves,):
            raise ValueError("leaf mask has the wrong length")
        return A
    return tree.event_mask(A)


def is_measurable_event(tau: BermudanStoppingTime, event: np.ndarray) -> bool:
    """Whether a leaf event is a union of atoms at the stop nodes of ``tau``."""
    tree = tau.tree
    for k in set(tau.stop_index().tolist()):
        block = event[tree.leaf_span(k)]
        if block.any() and not block.all():
            return False
    return True


def concatenate(
    tau: BermudanStoppingTime,
    A: Iterable[int] | np.ndarray,
    other: BermudanStoppingTime,
) -> BermudanStoppingTime:
    """``tau`` on A and ``other`` off A; A must be known at ``tau ∧ other``.

    A is given as node ids whose subtrees make up the event, or as a leaf mask.
    """
    _check_schema(tau, other)
    event = event_of(tau.tree, A)
    if not is_measurable_event(meet(tau, other), event):
        raise NotMeasurable("event is not a union of atoms at the earlier of the two stop nodes")
    return BermudanStoppingTime._from_stages(
        tau.schedule, np.where(event, tau.stages, other.stages)
    )


def first_hitting(schedule: ExerciseSchedule, region: Iterable[int]) -> BermudanStoppingTime:
    """First entry into ``region`` at an exercise date; the horizon otherwise."""
    tree = schedule.tree
    ind = np.zeros(tree.n_nodes, dtype=bool)
    for nid in region:
        ind[tree.idx(nid)] = True
    return _first_hitting_mask(schedule, ind)


def _first_hitting_mask(schedule: ExerciseSchedule, node_mask: np.ndarray) -> BermudanStoppingTime:
    tree = schedule.tree
    hits = (node_mask & schedule.allowed)[tree.paths]
    hits[:, tree.horizon] = True
    return BermudanStoppingTime._from_stages(schedule, hits.argmax(axis=1))


def evaluate_family_at(phi: AdaptedProcess, tau: BermudanStoppingTime) -> dict[int, float]:
    """The admissible family ``phi`` read at ``tau``: leaf id -> phi(stop node)."""
    tree = tau.tree
    if phi.tree is not tree:
        raise SchemaMismatch("process and stopping time live on different trees")
    vals = phi.values[tau.stop_index()]
    return {tree.ids[leaf]: float(v) for leaf, v in zip(tree.leaves, vals)}


# --- enumeration -------------------------------------------------------------


def _lower_ok(schedule: ExerciseSchedule, lower: np.ndarray | None, k: int) -> bool:
    if lower is None:
        return True
    tree = schedule.tree
    return bool(lower[tree.leaf_span(k)].max() <= tree.stage[k])


def count_theta(
    schedule: ExerciseSchedule, lower: BermudanStoppingTime | None = None
) -> int:
    """Number of strategies (>= ``lower`` when given), computed without enumerating."""
    tree = schedule.tree
    low = None if lower is None else lower.stages
    counts = [0] * tree.n_nodes
    for s in range(tree.horizon, -1, -1):
        for k in tree.stage_nodes[s]:
            if not tree.children[k]:
                counts[k] = 1
                continue
            prod = 1
            for c in tree.children[k]:
                prod *= counts[c]
            stop = schedule.allowed[k] and _lower_ok(schedule, low, k)
            counts[k] = prod + int(stop)
    return counts[tree.root]


def theta_matrix(
    schedule: ExerciseSchedule,
    lower: BermudanStoppingTime | None = None,
    limit: int = DEFAULT_ENUM_LIMIT,
) -> np.ndarray:
    """All strategies as rows of per-leaf stop stages, in enumeration order.

    Order is lexicographic in the sorted tuples of stop-node ids. Read-only;
    the unrestricted enumeration is cached on the schedule.
    """
    n = count_theta(schedule, lower)
    if n > limit:
        raise EnumerationLimitExceeded(f"{n} strategies exceed the enumeration limit {limit}")
    if lower is None and "theta" in schedule._cache:
        return schedule._cache["theta"]
    tree = schedule.tree
    low = None if lower is None else lower.stages
    mats: dict[int, np.ndarray] = {}
    for s in range(tree.horizon, -1, -1):
        for k in tree.stage_nodes[s]:
            if not tree.children[k]:
                mats[k] = np.full((1, 1), s, dtype=np.int64)
                continue
            prod = mats.pop(tree.children[k][0])
            for c in tree.children[k][1:]:
                m = mats.pop(c)
                prod = np.hstack(
                    [np.repeat(prod, len(m), axis=0), np.tile(m, (len(prod), 1))]
                )
            if schedule.allowed[k] and _lower_ok(schedule, low, k):
                width = tree.leaf_hi[k] - tree.leaf_lo[k]
                prod = np.vstack([np.full((1, width), s, dtype=np.int64), prod])
            mats[k] = prod
    rows = mats[tree.root]
    # lexicographic order of sorted stop-node tuples: two distinct cuts are
    # never prefixes of one another, so A < B iff min(A ^ B) lies in A
    nodes = tree.paths[np.arange(tree.n_leaves)[None, :], rows]
    ind = np.zeros((len(rows), tree.n_nodes), dtype=bool)
    ind[np.arange(len(rows))[:, None], nodes] = True
    used = np.flatnonzero(ind.any(axis=0))
    order = np.lexsort(tuple(~ind[:, j] for j in used[::-1]))
    rows = np.ascontiguousarray(rows[order])
    rows.flags.writeable = False
    if lower is None:
        schedule._cache["theta"] = rows
    return rows


def enumerate_theta(
    schedule: ExerciseSchedule,
    lower: BermudanStoppingTime | None = None,
    limit: int = DEFAULT_ENUM_LIMIT,
) -> Iterator[BermudanStoppingTime]:
    """Yield every strategy (>= ``lower`` when given) exactly once."""
    if lower is not None:
        _check_schema(lower)
    for row in theta_matrix(schedule, lower, limit):
        yield BermudanStoppingTime._from_stages(schedule, row)


def random_strategy(
    schedule: ExerciseSchedule,
    rng: np.random.Generator,
    lower: BermudanStoppingTime | None = None,
    p_stop: float = 0.35,
) -> BermudanStoppingTime:
    """Draw a strategy by walking down the tree and stopping with prob. ``p_stop``."""
    tree = schedule.tree
    low = None if lower is None else lower.stages
    stages = np.empty(tree.n_leaves, dtype=np.int64)
    todo = [tree.root]
    while todo:
        k = todo.pop()
        can_stop = schedule.allowed[k] and _lower_ok(schedule, low, k)
        if not tree.children[k] or (can_stop and rng.random() < p_stop):
            stages[tree.leaf_span(k)] = tree.stage[k]
        else:
            todo.extend(reversed(tree.children[k]))
    return BermudanStoppingTime._from_stages(schedule, stages)


def strategies_from_rows(
    schedule: ExerciseSchedule, rows: np.ndarray
) -> list[BermudanStoppingTime]:
    return [BermudanStoppingTime._from_stages(schedule, r) for r in rows]

