"""Single-agent non-linear optimal stopping over Bermudan strategies.

The opponent's fixed strategy enters as a *cap*: once the cap has stopped,
the pay-off is frozen at its value on the cap, so values at and after the cap
are that frozen pay-off and are never aggregated.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .errors import MissingPayoff, NotMeasurable, SchemaMismatch
from .evaluation import EvaluationOperator, read_at, sweep
from .lattice import AdaptedProcess
from .strategy import (
    DEFAULT_ENUM_LIMIT,
    BermudanStoppingTime,
    _first_hitting_mask,
    at_horizon,
    event_of,
    is_measurable_event,
    theta_matrix,
)

TOL_EQ = 1e-9


@dataclass(frozen=True)
class ValueFamily:
    """Snell-type value V at every node.

    ``payoff`` is the pay-off actually optimised, i.e. the input frozen at
    the cap (identical to the input when the cap is the horizon).
    """

    values: AdaptedProcess
    payoff: AdaptedProcess
    operator: EvaluationOperator
    cap: BermudanStoppingTime

    @property
    def root_value(self) -> float:
        return float(self.values.values[self.values.tree.root])


def frozen_payoff(xi: AdaptedProcess, cap: BermudanStoppingTime) -> np.ndarray:
    """``xi`` before the cap, ``xi`` at the cap node at and after it."""
    tree = cap.tree
    rep = tree.leaf_lo
    cut = cap.stages[rep]
    cap_node = tree.paths[rep, cut]
    return np.where(tree.stage < cut, xi.values, xi.values[cap_node])


def _check(op: EvaluationOperator, xi: AdaptedProcess, cap: BermudanStoppingTime) -> None:
    if xi.tree is not op.tree or cap.tree is not op.tree:
        raise SchemaMismatch("operator, pay-off and cap must share one tree")


def value_family(
    op: EvaluationOperator, xi: AdaptedProcess | None, cap: BermudanStoppingTime
) -> ValueFamily:
    """Backward induction V(v) = max(xi(v) if exercisable, g_v(V at children)).

    Pass ``at_horizon(schedule)`` as ``cap`` for an unconstrained problem.
    """
    if xi is None:
        raise MissingPayoff("no pay-off process given")
    _check(op, xi, cap)
    tree = op.tree
    allowed = cap.schedule.allowed
    payoff = frozen_payoff(xi, cap)
    cut = cap.stages[tree.leaf_lo]
    V = payoff.copy()
    for s in range(tree.horizon - 1, -1, -1):
        nodes = tree.stage_nodes[s]
        live = s < cut[nodes]
        if not live.any():
            continue
        cont = op.aggregate_stage(s, V[None, tree.stage_children[s]])[0]
        best = np.where(allowed[nodes], np.maximum(payoff[nodes], cont), cont)
        V[nodes] = np.where(live, best, V[nodes])
    return ValueFamily(AdaptedProcess(tree, V), AdaptedProcess(tree, payoff), op, cap)


def coincidence_region(vf: ValueFamily, tol: float = TOL_EQ) -> np.ndarray:
    """Node mask of {V = xi} restricted to exercise dates and leaves."""
    close = np.abs(vf.values.values - vf.payoff.values) <= tol
    return close & vf.cap.schedule.allowed


def minimal_optimal(vf: ValueFamily, tol: float = TOL_EQ) -> BermudanStoppingTime:
    """First entry into the coincidence region {V = xi} (the smallest optimal time)."""
    return _first_hitting_mask(vf.cap.schedule, coincidence_region(vf, tol))


def minimal_optimal_via_lower_payoff(
    vf: ValueFamily, X: AdaptedProcess, tol: float = TOL_EQ
) -> BermudanStoppingTime:
    """Alternative realisation: first entry into {V = X}, then capped.

    ``X`` is the pay-off of stopping strictly before the cap; the result must
    equal :func:`minimal_optimal` whenever ``vf`` came from a game pay-off.
    """
    close = np.abs(vf.values.values - X.values) <= tol
    hit = _first_hitting_mask(vf.cap.schedule, close)
    return BermudanStoppingTime._from_stages(
        vf.cap.schedule, np.minimum(hit.stages, vf.cap.stages)
    )


def brute_force_value(
    op: EvaluationOperator,
    xi: AdaptedProcess,
    cap: BermudanStoppingTime,
    S: BermudanStoppingTime | None = None,
    limit: int = DEFAULT_ENUM_LIMIT,
) -> dict[int, float]:
    """Value at the stop nodes of ``S`` by enumerating every tau >= S.

    Each candidate is evaluated as rho_{S, tau∧cap}[xi(tau∧cap)] with the plain
    backward sweep; the maximum is taken atom by atom. Independent of the
    dynamic programme in :func:`value_family`.
    """
    _check(op, xi, cap)
    tree = op.tree
    sched = cap.schedule
    if S is None:
        S = BermudanStoppingTime._from_stages(sched, np.zeros(tree.n_leaves))
    rows = theta_matrix(sched, None if not S.stages.any() else S, limit)
    stopped = np.minimum(rows, cap.stages[None, :])
    vals = sweep(op, stopped, xi.values)
    start = np.minimum(S.stages, cap.stages)
    per_leaf = read_at(tree, vals, start).max(axis=0)
    out: dict[int, float] = {}
    for j, k in enumerate(S.stop_index()):
        out.setdefault(tree.ids[k], float(per_leaf[j]))
    return dict(sorted(out.items()))


def localized_family(
    op: EvaluationOperator,
    xi: AdaptedProcess,
    A: Iterable[int] | np.ndarray,
    S: BermudanStoppingTime,
    cap: BermudanStoppingTime | None = None,
) -> ValueFamily:
    """Value family of the pay-off xi·1_A, for A known at time S.

    Nodes strictly before S carry a zero pay-off; only values at and after S
    are meaningful.
    """
    tree = op.tree
    event = event_of(tree, A)
    if not is_measurable_event(S, event):
        raise NotMeasurable("A must be a union of atoms at the stop nodes of S")
    if cap is None:
        cap = at_horizon(S.schedule)
    after_S = tree.stage >= S.stages[tree.leaf_lo]
    mask = after_S & event[tree.leaf_lo]
    masked = AdaptedProcess(tree, np.where(mask, xi.values, 0.0))
    return value_family(op, masked, cap)


def localized_value(
    op: EvaluationOperator,
    xi: AdaptedProcess,
    A: Iterable[int] | np.ndarray,
    S: BermudanStoppingTime,
    cap: BermudanStoppingTime | None = None,
) -> dict[int, float]:
    """V_A at the stop nodes of S."""
    vf = localized_family(op, xi, A, S, cap)
    return {
        op.tree.ids[k]: float(vf.values.values[k]) for k in sorted(set(S.stop_index().tolist()))
    }
