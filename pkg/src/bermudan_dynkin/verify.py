"""Brute-force certification of equilibria and invariant checks on traces.

Everything here enumerates strategies and re-evaluates assessments with the
plain backward sweep; nothing reuses the dynamic programme being checked
except where a check is explicitly about the programme's own output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import EnumerationLimitExceeded
from .evaluation import evaluate_root
from .game import (
    EquilibriumResult,
    GameInstance,
    assess_batch,
    best_response_payoff,
)
from .stopping import (
    brute_force_value,
    minimal_optimal,
    minimal_optimal_via_lower_payoff,
    value_family,
)
from .strategy import (
    BermudanStoppingTime,
    count_theta,
    random_strategy,
    theta_matrix,
)

EXHAUSTIVE_LIMIT = 4096
SAMPLE_SIZE = 128


# --- Nash certification --------------------------------------------------------


@dataclass
class Deviation:
    agent: int
    strategy: BermudanStoppingTime
    value: float
    gain: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "agent": self.agent,
            "strategy": self.strategy.sorted_nodes(),
            "value": self.value,
            "gain": self.gain,
        }


@dataclass
class NashReport:
    passed: bool
    J1: float
    J2: float
    agent1: Deviation
    agent2: Deviation
    tol: float
    n_strategies: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "J1": self.J1,
            "J2": self.J2,
            "tol": self.tol,
            "n_strategies": self.n_strategies,
            "worst_deviation": {"agent1": self.agent1.to_dict(), "agent2": self.agent2.to_dict()},
        }


def nash_check(
    g: GameInstance,
    tau1: BermudanStoppingTime,
    tau2: BermudanStoppingTime,
    tol: float | None = None,
) -> NashReport:
    """Compare the candidate against every unilateral deviation.

    The reported deviation for each agent is its best reply (first in
    enumeration order on ties); ``gain`` is its assessment minus the
    candidate's, so a pair passes iff both gains are <= ``tol``.
    """
    tol = g.config.tol_eq if tol is None else tol
    rows = theta_matrix(g.schedule, limit=g.config.enum_limit)
    j1 = float(assess_batch(g, 1, tau1.stages, tau2.stages)[0])
    j2 = float(assess_batch(g, 2, tau1.stages, tau2.stages)[0])
    dev1 = assess_batch(g, 1, rows, tau2.stages)
    dev2 = assess_batch(g, 2, tau1.stages, rows)
    i1, i2 = int(np.argmax(dev1)), int(np.argmax(dev2))
    d1 = Deviation(
        1, BermudanStoppingTime._from_stages(g.schedule, rows[i1]), float(dev1[i1]), float(dev1[i1] - j1)
    )
    d2 = Deviation(
        2, BermudanStoppingTime._from_stages(g.schedule, rows[i2]), float(dev2[i2]), float(dev2[i2] - j2)
    )
    return NashReport(d1.gain <= tol and d2.gain <= tol, j1, j2, d1, d2, tol, len(rows))


def all_nash_pairs(
    g: GameInstance, tol: float | None = None
) -> list[tuple[BermudanStoppingTime, BermudanStoppingTime]]:
    """Every pure Nash pair, ordered by (tau1, tau2) enumeration index."""
    tol = g.config.tol_eq if tol is None else tol
    n = count_theta(g.schedule)
    if n * n > g.config.enum_limit:
        raise EnumerationLimitExceeded(
            f"{n}^2 strategy pairs exceed the enumeration limit {g.config.enum_limit}"
        )
    rows = theta_matrix(g.schedule, limit=g.config.enum_limit)
    J1 = np.empty((n, n))
    J2 = np.empty((n, n))
    for j in range(n):
        J1[:, j] = assess_batch(g, 1, rows, rows[j])
    for i in range(n):
        J2[i, :] = assess_batch(g, 2, rows[i], rows)
    ok = (J1 >= J1.max(axis=0, keepdims=True) - tol) & (J2 >= J2.max(axis=1, keepdims=True) - tol)
    strat = [BermudanStoppingTime._from_stages(g.schedule, r) for r in rows]
    return [(strat[i], strat[j]) for i, j in zip(*np.nonzero(ok))]


# --- trace invariants ----------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    evaluated: int = 0
    failures: int = 0
    counterexample: dict[str, Any] | None = None

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def ok(self, cond: bool, payload: dict[str, Any] | None = None) -> None:
        self.evaluated += 1
        if not cond:
            self.failures += 1
            if self.counterexample is None:
                self.counterexample = payload or {}

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "evaluated": self.evaluated,
            "failures": self.failures,
            "counterexample": self.counterexample,
        }


@dataclass
class TraceReport:
    checks: dict[str, CheckResult] = field(default_factory=dict)
    exhaustive: bool = True
    n_strategies: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list[str]:
        return [n for n, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "exhaustive": self.exhaustive,
            "n_strategies": self.n_strategies,
            "checks": {n: c.to_dict() for n, c in self.checks.items()},
        }


CHECKS = (
    "payoff_frozen_after_opponent",
    "value_frozen_after_opponent",
    "tilde_not_after_opponent",
    "tilde_via_lower_payoff",
    "tilde_is_minimal_optimal",
    "iterate_update_rule",
    "value_meets_payoff_at_tilde",
    "optimality_of_tilde",
    "optimality_of_iterate",
    "oracle_value",
    "tilde_not_after_iterate_two_back",
    "iterate_from_tilde",
    "tilde_is_meet_of_iterates",
    "repeats_only_where_never_stopped",
    "monotone_iterates",
    "agent1_iterate_is_best_reply",
    "agent2_iterate_is_best_reply",
    "fixpoint",
    "equilibrium_assessments",
)


def _first_leaf(g: GameInstance, mask: np.ndarray) -> int | None:
    bad = np.flatnonzero(mask)
    return None if not bad.size else g.tree.ids[g.tree.leaves[bad[0]]]


def trace_invariants(
    g: GameInstance,
    result: EquilibriumResult,
    *,
    exhaustive_limit: int = EXHAUSTIVE_LIMIT,
    sample_size: int = SAMPLE_SIZE,
    seed: int = 0,
) -> TraceReport:
    """Check the structural properties of the construction on a trace.

    Per best-response step the pay-off, value family and minimal optimal time
    are recomputed from the trace's own iterates, so a corrupted iterate shows
    up both in the recomputation checks and in the cross-iterate checks. Deviation
    checks quantify over all strategies when there are at most
    ``exhaustive_limit`` of them, else over ``sample_size`` seeded draws.
    """
    tree = g.tree
    tol = g.config.tol_eq
    checks = {name: CheckResult(name) for name in CHECKS}
    n_theta = count_theta(g.schedule)
    exhaustive = n_theta <= exhaustive_limit
    if exhaustive:
        rows = theta_matrix(g.schedule, limit=exhaustive_limit)
    else:
        rng = np.random.default_rng(seed)
        rows = np.stack([random_strategy(g.schedule, rng).stages for _ in range(sample_size)])
    report = TraceReport(checks, exhaustive, n_theta)

    trace = result.trace
    tau = {r.n: r.tau.stages for r in trace}
    tilde = {r.n: r.tau_tilde.stages for r in trace if r.tau_tilde is not None}
    leaves_idx = np.arange(tree.n_leaves)
    horizon = tree.horizon

    for rec in trace:
        if rec.tau_tilde is None:
            continue
        n, agent = rec.n, rec.agent
        opp_t = trace[n - 2].tau
        own_t = trace[n - 3].tau
        opp, own = opp_t.stages, own_t.stages
        op = g.operator(agent)
        X, Y = g.stop_payoffs(agent)
        xi = best_response_payoff(g, agent, opp_t)
        vf = value_family(op, xi, opp_t)
        V = vf.values.values

        # on every path, pay-off and value equal Y at the opponent's stop
        # node from there on
        ok_xi = ok_v = True
        where = None
        for j in leaves_idx:
            o = tree.paths[j, opp[j]]
            seg = tree.paths[j, opp[j]:]
            if ok_xi and not np.all(xi.values[seg] == Y.values[o]):
                ok_xi, where = False, tree.ids[tree.leaves[j]]
            if ok_v and not np.all(np.abs(V[seg] - Y.values[o]) <= tol):
                ok_v, where = False, tree.ids[tree.leaves[j]]
        checks["payoff_frozen_after_opponent"].ok(ok_xi, {"n": n, "leaf": where})
        checks["value_frozen_after_opponent"].ok(ok_v, {"n": n, "leaf": where})

        t = rec.tau_tilde.stages
        checks["tilde_not_after_opponent"].ok(
            bool(np.all(t <= opp)), {"n": n, "leaf": _first_leaf(g, t > opp)}
        )
        alt = minimal_optimal_via_lower_payoff(vf, X, tol).stages
        checks["tilde_via_lower_payoff"].ok(
            np.array_equal(alt, t), {"n": n, "leaf": _first_leaf(g, alt != t)}
        )
        fresh = minimal_optimal(vf, tol).stages
        checks["tilde_is_minimal_optimal"].ok(
            np.array_equal(fresh, t),
            {"n": n, "leaf": _first_leaf(g, fresh != t), "recomputed": fresh.tolist(), "stored": t.tolist()},
        )
        m = np.minimum(t, own)
        expect = np.where(m < opp, m, own)
        checks["iterate_update_rule"].ok(
            np.array_equal(expect, rec.tau.stages),
            {"n": n, "leaf": _first_leaf(g, expect != rec.tau.stages)},
        )

        stop_t = tree.paths[leaves_idx, t]
        gap = np.abs(V[stop_t] - xi.values[stop_t])
        checks["value_meets_payoff_at_tilde"].ok(
            bool(np.all(gap <= tol)), {"n": n, "leaf": _first_leaf(g, gap > tol)}
        )

        at_tilde = float(evaluate_root(op, np.minimum(t, opp), xi.values)[0])
        stored = rec.value0 if rec.value0 is not None else float("nan")
        checks["optimality_of_tilde"].ok(
            abs(at_tilde - vf.root_value) <= tol and abs(stored - vf.root_value) <= tol,
            {"n": n, "rho_at_tilde": at_tilde, "V0": vf.root_value, "stored_value0": stored},
        )

        if agent == 1:
            own_J = float(assess_batch(g, 1, rec.tau.stages, opp)[0])
            devs = assess_batch(g, 1, rows, opp)
            reply_check = "agent1_iterate_is_best_reply"
        else:
            own_J = float(assess_batch(g, 2, opp, rec.tau.stages)[0])
            devs = assess_batch(g, 2, opp, rows)
            reply_check = "agent2_iterate_is_best_reply"
        checks["optimality_of_iterate"].ok(
            abs(own_J - vf.root_value) <= tol, {"n": n, "J": own_J, "V0": vf.root_value}
        )
        i = int(np.argmax(devs))
        checks[reply_check].ok(
            float(devs[i]) <= own_J + tol,
            {"n": n, "deviation": tree_nodes(g, rows[i]), "deviation_J": float(devs[i]), "J": own_J},
        )

        if exhaustive:
            bf = brute_force_value(op, xi, opp_t, limit=exhaustive_limit)[tree.root_id]
            checks["oracle_value"].ok(
                abs(bf - vf.root_value) <= tol, {"n": n, "brute_force": bf, "dynamic_programming": vf.root_value}
            )

    last = trace[-1].n
    for mm in range(1, last - 1):
        if mm + 2 in tilde:
            bad = tilde[mm + 2] > tau[mm]
            checks["tilde_not_after_iterate_two_back"].ok(
                not bad.any(), {"m": mm, "leaf": _first_leaf(g, bad)}
            )
    for n in range(2, last):
        if n + 1 not in tilde:
            continue
        tl, nxt, cur, prev = tilde[n + 1], tau[n + 1], tau[n], tau[n - 1]
        ok_i = np.where(tl < cur, nxt == tl, np.where(tl == cur, nxt == prev, False))
        checks["iterate_from_tilde"].ok(bool(ok_i.all()), {"n": n, "leaf": _first_leaf(g, ~ok_i)})
        bad_ii = tl != np.minimum(nxt, cur)
        checks["tilde_is_meet_of_iterates"].ok(
            not bad_ii.any(),
            {"n": n, "leaf": _first_leaf(g, bad_ii), "tau_tilde": tree_nodes(g, tl),
             "meet": tree_nodes(g, np.minimum(nxt, cur))},
        )
        eq = cur == prev
        early = np.zeros(tree.n_leaves, dtype=bool)
        for mm in range(1, n + 1):
            early |= eq & (tau[mm] != horizon)
        checks["repeats_only_where_never_stopped"].ok(not early.any(), {"n": n, "leaf": _first_leaf(g, early)})
        bad_mono = nxt > prev
        checks["monotone_iterates"].ok(not bad_mono.any(), {"n": n, "leaf": _first_leaf(g, bad_mono)})

    if result.converged:
        fixed = (
            last >= 4
            and np.array_equal(tau[last - 1], tau[last - 3])
            and np.array_equal(tau[last], tau[last - 2])
            and np.array_equal(result.tau1_star.stages, tau[last - 1])
            and np.array_equal(result.tau2_star.stages, tau[last])
        )
        checks["fixpoint"].ok(bool(fixed), {"n": last})
    j1 = float(assess_batch(g, 1, result.tau1_star.stages, result.tau2_star.stages)[0])
    j2 = float(assess_batch(g, 2, result.tau1_star.stages, result.tau2_star.stages)[0])
    checks["equilibrium_assessments"].ok(
        abs(j1 - result.J1) <= tol and abs(j2 - result.J2) <= tol,
        {"J1": j1, "J2": j2, "reported_J1": result.J1, "reported_J2": result.J2},
    )
    return report


def tree_nodes(g: GameInstance, stages: np.ndarray) -> list[int]:
    """Sorted stop-node ids of a per-leaf stage vector."""
    tree = g.tree
    return sorted({tree.ids[k] for k in tree.paths[np.arange(tree.n_leaves), stages]})
