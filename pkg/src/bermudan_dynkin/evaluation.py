"""Non-linear evaluation operators built from one-step node aggregators.

An operator attaches to every non-terminal node ``v`` a map ``g_v`` from the
values at the children of ``v`` to a real number. Evaluating a pay-off known
at a stopping time ``tau`` back to an earlier stopping time ``S`` is the
backward recursion of these maps over the nodes strictly between the two
cuts. When every ``g_v`` preserves constants and is monotone, the resulting
family is monotone, knowledge-preserving, time-consistent and satisfies both
zero-one laws; :func:`axiom_check` tests this empirically.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import BadGamma, BadPrior, MissingValues, OrderViolation, SchemaMismatch
from .lattice import EPS_PROB, EventTree
from .strategy import (
    BermudanStoppingTime,
    ExerciseSchedule,
    concatenate,
    join,
    meet,
    random_strategy,
)

TOL_AXIOM = 1e-9

Aggregator = Callable[[np.ndarray, np.ndarray], float]


# One-step maps. ``v`` holds child values on its last axis, ``p`` the weights
# (zero on padding); both broadcast over leading axes.


def _linear(v: np.ndarray, p: np.ndarray) -> np.ndarray:
    return (v * p).sum(axis=-1)


def _entropic(v: np.ndarray, p: np.ndarray, gamma: float) -> np.ndarray:
    z = gamma * v
    zmax = z.max(axis=-1, keepdims=True)
    s = (p * np.exp(z - zmax)).sum(axis=-1)
    return (zmax[..., 0] + np.log(s)) / gamma


def _multiprior(v: np.ndarray, w: np.ndarray, direction: str) -> np.ndarray:
    means = (v[..., None, :] * w).sum(axis=-1)
    return means.min(axis=-1) if direction == "inf" else means.max(axis=-1)


class EvaluationOperator:
    """A family of evaluations generated by per-node one-step aggregators.

    Use :func:`make_linear`, :func:`make_entropic`, :func:`make_multiprior` or
    :func:`make_custom` rather than calling the constructor directly.
    """

    def __init__(
        self,
        tree: EventTree,
        kind: str,
        *,
        gamma: float | None = None,
        priors: Mapping[int, np.ndarray] | None = None,
        direction: str = "inf",
        fn: Aggregator | None = None,
    ):
        self.tree = tree
        self.kind = kind
        self.gamma = gamma
        self.direction = direction
        self.fn = fn
        # node index -> (n_priors, n_children)
        self.priors: dict[int, np.ndarray] = dict(priors or {})
        self._stage_priors: list[np.ndarray | None] = []
        if kind == "multiprior":
            for s in range(tree.horizon + 1):
                nodes = tree.stage_nodes[s]
                width = tree.stage_children[s].shape[1]
                if s == tree.horizon or not len(nodes):
                    self._stage_priors.append(None)
                    continue
                depth = max(len(self.priors[k]) for k in nodes)
                w = np.zeros((len(nodes), depth, width))
                for r, k in enumerate(nodes):
                    pk = self.priors[k]
                    w[r, : len(pk), : pk.shape[1]] = pk
                    w[r, len(pk) :, : pk.shape[1]] = pk[0]
                self._stage_priors.append(w)

    def aggregate(self, node_id: int, child_values: Sequence[float]) -> float:
        """g_v for one node."""
        tree = self.tree
        k = tree.idx(node_id)
        v = np.asarray(child_values, dtype=float)
        if v.shape != (len(tree.children[k]),):
            raise ValueError(f"node {node_id} has {len(tree.children[k])} children")
        p = tree.child_probs[k]
        if self.kind == "linear":
            return float(_linear(v, p))
        if self.kind == "entropic":
            return float(_entropic(v, p, self.gamma))
        if self.kind == "multiprior":
            return float(_multiprior(v, self.priors[k], self.direction))
        return float(self.fn(v, p))

    def aggregate_stage(self, s: int, child_vals: np.ndarray) -> np.ndarray:
        """All g_v of stage ``s`` at once; ``child_vals`` is (B, n_s, width)."""
        tree = self.tree
        p = tree.stage_probs[s]
        if self.kind == "linear":
            return _linear(child_vals, p)
        if self.kind == "entropic":
            return _entropic(child_vals, p, self.gamma)
        if self.kind == "multiprior":
            return _multiprior(child_vals, self._stage_priors[s], self.direction)
        out = np.empty(child_vals.shape[:2])
        for r, k in enumerate(tree.stage_nodes[s]):
            nch = len(tree.children[k])
            for b in range(child_vals.shape[0]):
                out[b, r] = self.fn(child_vals[b, r, :nch], tree.child_probs[k])
        return out

    def describe(self) -> dict[str, Any]:
        """JSON description (custom aggregators are not serialisable)."""
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind == "entropic":
            d["gamma"] = self.gamma
        if self.kind == "multiprior":
            d["direction"] = self.direction
            d["priors"] = {
                str(self.tree.ids[k]): w.tolist() for k, w in sorted(self.priors.items())
            }
        return d

    def label(self) -> str:
        if self.kind == "entropic":
            return f"entropic(gamma={self.gamma:g})"
        if self.kind == "multiprior":
            return f"multiprior-{self.direction}"
        return self.kind

    def __repr__(self) -> str:
        return f"EvaluationOperator({self.label()})"


def make_linear(tree: EventTree) -> EvaluationOperator:
    """Conditional expectation under the tree's transition probabilities."""
    return EvaluationOperator(tree, "linear")


def make_entropic(tree: EventTree, gamma: float) -> EvaluationOperator:
    """Certainty equivalent (1/gamma) log E[exp(gamma X)] node by node."""
    gamma = float(gamma)
    if gamma == 0.0 or not math.isfinite(gamma):
        raise BadGamma(f"gamma must be finite and non-zero, got {gamma}")
    return EvaluationOperator(tree, "entropic", gamma=gamma)


def make_multiprior(
    tree: EventTree,
    priors: Mapping[int, Sequence[Sequence[float]]] | None = None,
    direction: str = "inf",
) -> EvaluationOperator:
    """Worst (``inf``) or best (``sup``) case over per-node sets of priors.

    ``priors`` maps node id -> list of probability vectors over that node's
    children. Nodes without an entry use the tree's own transition law as
    the only prior. Node-wise sets are rectangular by construction.
    """
    if direction not in ("inf", "sup"):
        raise BadPrior(f"direction must be 'inf' or 'sup', got {direction!r}")
    priors = dict(priors or {})
    table: dict[int, np.ndarray] = {}
    for k in range(tree.n_nodes):
        nch = len(tree.children[k])
        if not nch:
            continue
        nid = tree.ids[k]
        given = priors.pop(nid, None)
        if given is None:
            given = priors.pop(str(nid), None)
        if given is None:
            table[k] = tree.child_probs[k][None, :].copy()
            continue
        w = np.asarray(given, dtype=float)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] != nch:
            raise BadPrior(f"node {nid}: priors must be a non-empty list of {nch}-vectors")
        if np.any(w < 0) or np.any(np.abs(w.sum(axis=1) - 1.0) > EPS_PROB):
            raise BadPrior(f"node {nid}: prior vectors must be non-negative and sum to 1")
        table[k] = w
    if priors:
        raise BadPrior(f"priors given for unknown or terminal nodes {sorted(map(str, priors))}")
    return EvaluationOperator(tree, "multiprior", priors=table, direction=direction)


def make_custom(tree: EventTree, fn: Aggregator) -> EvaluationOperator:
    """Operator from an arbitrary ``fn(child_values, child_probs) -> float``.

    Nothing is checked; run :func:`axiom_check` before trusting it.
    """
    return EvaluationOperator(tree, "custom", fn=fn)


# --- the backward sweep --------------------------------------------------------


def sweep(op: EvaluationOperator, cut: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Backward recursion from a batch of cuts to the root.

    Args:
        cut: (B, L) or (L,) per-leaf stop stages.
        eta: (B, N) or (N,) node values; only entries on the cut are read.

    Returns:
        (B, N) array: ``eta`` on the cut, aggregated values strictly before
        it, zero after it.
    """
    tree = op.tree
    cut = np.atleast_2d(cut)
    B = cut.shape[0]
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (B, tree.n_nodes))
    vals = np.zeros((B, tree.n_nodes))
    for s in range(tree.horizon, -1, -1):
        nodes = tree.stage_nodes[s]
        ts = cut[:, tree.leaf_lo[nodes]]
        here = np.where(ts == s, eta[:, nodes], 0.0)
        before = ts > s
        if s < tree.horizon and before.any():
            agg = op.aggregate_stage(s, vals[:, tree.stage_children[s]])
            here = np.where(before, agg, here)
        vals[:, nodes] = here
    return vals


def read_at(tree: EventTree, vals: np.ndarray, cut: np.ndarray) -> np.ndarray:
    """Per-leaf values of a (B, N) node array at a (B, L) or (L,) cut."""
    cut = np.broadcast_to(np.atleast_2d(cut), (vals.shape[0], tree.n_leaves))
    nodes = tree.paths[np.arange(tree.n_leaves)[None, :], cut]
    return np.take_along_axis(vals, nodes, axis=1)


def rho(
    op: EvaluationOperator,
    S: BermudanStoppingTime,
    tau: BermudanStoppingTime,
    eta: Mapping[int, float],
) -> dict[int, float]:
    """Evaluate ``eta`` (values on the stop nodes of ``tau``) at time ``S``.

    Returns a mapping from the stop nodes of ``S`` to their values.
    """
    tree = op.tree
    if S.tree is not tree or tau.tree is not tree:
        raise SchemaMismatch("operator and stopping times live on different trees")
    if np.any(S.stages > tau.stages):
        raise OrderViolation("evaluation time S must not exceed tau")
    arr = np.zeros(tree.n_nodes)
    missing = []
    for k in set(tau.stop_index().tolist()):
        nid = tree.ids[k]
        if nid not in eta:
            missing.append(nid)
        else:
            arr[k] = float(eta[nid])
    if missing:
        raise MissingValues(f"no value given at stop nodes {sorted(missing)}")
    vals = sweep(op, tau.stages, arr)[0]
    return {tree.ids[k]: float(vals[k]) for k in sorted(set(S.stop_index().tolist()))}


def evaluate_root(op: EvaluationOperator, cut: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Time-zero values for a batch of cuts."""
    return sweep(op, cut, eta)[:, op.tree.root]


# --- axiom conformance harness ------------------------------------------------


@dataclass
class AxiomResult:
    name: str
    trials: int = 0
    failures: int = 0
    max_violation: float = 0.0
    counterexample: dict[str, Any] | None = None

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, violation: float, tol: float, payload: Callable[[], dict[str, Any]]):
        self.trials += 1
        if violation > tol:
            self.failures += 1
            if self.counterexample is None:
                self.counterexample = payload()
        self.max_violation = max(self.max_violation, violation)


@dataclass
class AxiomReport:
    operator: str
    trials: int
    seed: int
    tol: float
    results: dict[str, AxiomResult] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "operator": self.operator,
            "trials": self.trials,
            "seed": self.seed,
            "tol": self.tol,
            "passed": self.passed,
            "axioms": {
                name: {
                    "passed": r.passed,
                    "trials": r.trials,
                    "failures": r.failures,
                    "max_violation": r.max_violation,
                    "counterexample": r.counterexample,
                }
                for name, r in self.results.items()
            },
        }


AXIOMS = (
    "admissibility",
    "knowledge_preservation",
    "monotonicity",
    "consistency",
    "generalized_zero_one",
    "zero_one",
)


def _grid(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(-64, 65, size=n) / 8.0


def axiom_check(
    op: EvaluationOperator,
    schedule: ExerciseSchedule,
    trials: int = 500,
    seed: int = 0,
    tol: float = TOL_AXIOM,
) -> AxiomReport:
    """Randomised conformance test of the operator properties.

    Each trial draws random stopping times ``S <= theta <= tau`` and pay-offs
    on the grid (1/8)Z in [-8, 8] and checks admissibility, knowledge
    preservation, monotonicity, consistency and both zero-one laws. Failures
    are reported (with the first counterexample, enough to replay it through
    :func:`rho`), never raised.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    tree = op.tree
    if schedule.tree is not tree:
        raise SchemaMismatch("schedule and operator live on different trees")
    rng = np.random.default_rng(seed)
    report = AxiomReport(op.label(), trials, seed, tol)
    res = {name: AxiomResult(name) for name in AXIOMS}
    report.results = res
    N = tree.n_nodes
    ids = tree.ids

    def nodes_of(t: BermudanStoppingTime) -> list[int]:
        return t.sorted_nodes()

    def on_cut(t: BermudanStoppingTime, arr: np.ndarray) -> dict[int, float]:
        return {ids[k]: float(arr[k]) for k in sorted(set(t.stop_index().tolist()))}

    def at_S(S: BermudanStoppingTime, tau: BermudanStoppingTime, eta: np.ndarray) -> np.ndarray:
        return read_at(tree, sweep(op, tau.stages, eta), S.stages)[0]

    def worst(diff: np.ndarray, S: BermudanStoppingTime) -> tuple[float, int]:
        j = int(np.argmax(diff))
        return float(diff[j]), ids[S.stop_index()[j]]

    for _ in range(trials):
        a, b, c = (random_strategy(schedule, rng) for _ in range(3))
        S = meet(a, meet(b, c))
        tau = join(a, join(b, c))
        theta = join(meet(a, b), meet(join(a, b), c))
        eta = _grid(rng, N)

        # admissibility: S and S2 agree where they stop together
        S2 = meet(random_strategy(schedule, rng), tau)
        v1, v2 = at_S(S, tau, eta), at_S(S2, tau, eta)
        same = S.stages == S2.stages
        diff = np.where(same, np.abs(v1 - v2), 0.0)
        viol, node = worst(diff, S)
        res["admissibility"].record(viol, tol, lambda: {
            "node": node, "S": nodes_of(S), "S_prime": nodes_of(S2), "tau": nodes_of(tau),
            "inputs": {"eta": on_cut(tau, eta)},
            "outputs": {"rho_S": float(v1[np.argmax(diff)]), "rho_S_prime": float(v2[np.argmax(diff)])},
            "violation": viol,
        })

        # knowledge preservation: eta known at S comes back unchanged
        c_vals = _grid(rng, N)
        eta_s = np.zeros(N)
        eta_s[tau.stop_index()] = c_vals[S.stop_index()]
        out = at_S(S, tau, eta_s)
        diff = np.abs(out - c_vals[S.stop_index()])
        viol, node = worst(diff, S)
        res["knowledge_preservation"].record(viol, tol, lambda: {
            "node": node, "S": nodes_of(S), "tau": nodes_of(tau),
            "inputs": {"eta": on_cut(tau, eta_s)},
            "outputs": {"rho": float(out[np.argmax(diff)]),
                        "expected": float(c_vals[S.stop_index()][np.argmax(diff)])},
            "violation": viol,
        })

        # monotonicity
        bump = rng.integers(0, 17, size=N) / 8.0 * (rng.random(N) < 0.5)
        eta2 = eta + bump
        lo, hi = at_S(S, tau, eta), at_S(S, tau, eta2)
        diff = np.maximum(lo - hi, 0.0)
        viol, node = worst(diff, S)
        res["monotonicity"].record(viol, tol, lambda: {
            "node": node, "S": nodes_of(S), "tau": nodes_of(tau),
            "inputs": {"eta_low": on_cut(tau, eta), "eta_high": on_cut(tau, eta2)},
            "outputs": {"rho_low": float(lo[np.argmax(diff)]), "rho_high": float(hi[np.argmax(diff)])},
            "violation": viol,
        })

        # consistency through the intermediate time theta
        mid = sweep(op, tau.stages, eta)[0]
        two = at_S(S, theta, mid)
        one = at_S(S, tau, eta)
        diff = np.abs(two - one)
        viol, node = worst(diff, S)
        res["consistency"].record(viol, tol, lambda: {
            "node": node, "S": nodes_of(S), "theta": nodes_of(theta), "tau": nodes_of(tau),
            "inputs": {"eta": on_cut(tau, eta)},
            "outputs": {"one_step": float(one[np.argmax(diff)]), "two_step": float(two[np.argmax(diff)])},
            "violation": viol,
        })

        # generalised zero-one law: tau1 and tau' agree on A in F_S
        s_nodes = sorted(set(S.stop_index().tolist()))
        A_nodes = [ids[k] for k in s_nodes if rng.random() < 0.5]
        A = tree.event_mask(A_nodes)
        xi = _grid(rng, N)
        t1 = random_strategy(schedule, rng, lower=S)
        t2 = random_strategy(schedule, rng, lower=S)
        tp = concatenate(t1, A, t2)
        g1, g2 = at_S(S, t1, xi), at_S(S, tp, xi)
        diff = np.where(A, np.abs(g1 - g2), 0.0)
        viol, node = worst(diff, S)
        res["generalized_zero_one"].record(viol, tol, lambda: {
            "node": node, "S": nodes_of(S), "A": A_nodes, "tau": nodes_of(t1),
            "tau_prime": nodes_of(tp), "inputs": {"xi": {ids[k]: float(xi[k]) for k in range(N)}},
            "outputs": {"rho_tau": float(g1[np.argmax(diff)]), "rho_tau_prime": float(g2[np.argmax(diff)])},
            "violation": viol,
        })

        # usual zero-one law: rho[1_A eta] = 1_A rho[eta] for A in F_S
        node_in_A = A[tree.leaf_lo]
        masked = np.where(node_in_A, eta, 0.0)
        z1, z2 = at_S(S, tau, eta), at_S(S, tau, masked)
        diff = np.where(A, np.abs(z1 - z2), np.abs(z2))
        viol, node = worst(diff, S)
        res["zero_one"].record(viol, tol, lambda: {
            "node": node, "S": nodes_of(S), "A": A_nodes, "tau": nodes_of(tau),
            "inputs": {"eta": on_cut(tau, eta), "eta_masked": on_cut(tau, masked)},
            "outputs": {"rho": float(z1[np.argmax(diff)]), "rho_masked": float(z2[np.argmax(diff)])},
            "violation": viol,
        })

    return report
