"""Two-player non-zero-sum Dynkin game with Bermudan strategies.

If agent 1 stops first (ties included) agent 1 receives X1 and agent 2
receives Y2; if agent 2 stops strictly first agent 2 receives X2 and agent 1
receives Y1. Each agent assesses its pay-off with its own evaluation
operator. :func:`solve` runs the alternating best-response construction
started from (T, T) until both iterate sequences repeat.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InstanceValidationError, NoConvergence, SchemaMismatch
from .evaluation import EvaluationOperator, evaluate_root
from .lattice import AdaptedProcess, EventTree
from .stopping import TOL_EQ, ValueFamily, minimal_optimal, value_family
from .strategy import DEFAULT_ENUM_LIMIT, BermudanStoppingTime, ExerciseSchedule, at_horizon


@dataclass(frozen=True)
class GameConfig:
    tol_eq: float = TOL_EQ
    max_iter: int | None = None
    enum_limit: int = DEFAULT_ENUM_LIMIT


@dataclass(frozen=True, eq=False)
class GameInstance:
    tree: EventTree
    schedule: ExerciseSchedule
    rho1: EvaluationOperator
    rho2: EvaluationOperator
    X1: AdaptedProcess
    Y1: AdaptedProcess
    X2: AdaptedProcess
    Y2: AdaptedProcess
    config: GameConfig = field(default_factory=GameConfig)

    def __post_init__(self):
        validate_instance(self)

    def operator(self, agent: int) -> EvaluationOperator:
        return self.rho1 if agent == 1 else self.rho2

    def stop_payoffs(self, agent: int) -> tuple[AdaptedProcess, AdaptedProcess]:
        """(X, Y) of ``agent``: pay-off when it stops first / when the other does."""
        return (self.X1, self.Y1) if agent == 1 else (self.X2, self.Y2)

    def default_max_iter(self) -> int:
        return 2 * self.tree.n_nodes + 4


def validate_instance(g: GameInstance) -> None:
    """Check that all parts share one tree and that the pay-offs are ordered.

    X <= Y must hold wherever stopping is allowed (error kind ``A1``) and
    X = Y at the horizon (kind ``A2``). Boundedness and the behaviour of X
    along the exercise dates need no check on a finite tree.
    """
    tree = g.tree
    if g.schedule.tree is not tree:
        raise InstanceValidationError("schedule", "schedule is built on a different tree")
    for name in ("rho1", "rho2"):
        if getattr(g, name).tree is not tree:
            raise InstanceValidationError("operator", f"{name} is built on a different tree")
    for name in ("X1", "Y1", "X2", "Y2"):
        if getattr(g, name).tree is not tree:
            raise InstanceValidationError("payoff", f"{name} is defined on a different tree")
    relevant = g.schedule.allowed
    leaves = np.zeros(tree.n_nodes, dtype=bool)
    leaves[tree.leaves] = True
    for agent, (X, Y) in ((1, (g.X1, g.Y1)), (2, (g.X2, g.Y2))):
        bad = np.flatnonzero(relevant & (X.values > Y.values))
        if bad.size:
            raise InstanceValidationError(
                "A1", f"X{agent} > Y{agent} at exercise nodes", [tree.ids[k] for k in bad]
            )
        bad = np.flatnonzero(leaves & (X.values != Y.values))
        if bad.size:
            raise InstanceValidationError(
                "A2", f"X{agent} != Y{agent} at the horizon", [tree.ids[k] for k in bad]
            )


# --- pay-offs and assessments --------------------------------------------------


def _check_pair(g: GameInstance, *taus: BermudanStoppingTime) -> None:
    for t in taus:
        if t.tree is not g.tree or t.schedule.theta != g.schedule.theta:
            raise SchemaMismatch("strategy does not belong to this game")


def _stop_values(g: GameInstance, agent: int, t1: np.ndarray) -> np.ndarray:
    """Node values of agent's pay-off, given per row whether agent 1 stops at the node.

    ``t1`` holds agent 1's per-leaf stop stages (B, L). On the stop node of
    tau1 ∧ tau2 agent 1 stopped iff tau1 stops exactly there.
    """
    tree = g.tree
    t1_here = t1[:, tree.leaf_lo] == tree.stage[None, :]
    if agent == 1:
        return np.where(t1_here, g.X1.values, g.Y1.values)
    return np.where(t1_here, g.Y2.values, g.X2.values)


def assess_batch(g: GameInstance, agent: int, t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    """J_agent for rows of per-leaf stop stages (broadcast against each other)."""
    t1, t2 = np.broadcast_arrays(np.atleast_2d(t1), np.atleast_2d(t2))
    eta = _stop_values(g, agent, t1)
    return evaluate_root(g.operator(agent), np.minimum(t1, t2), eta)


def _payoff_leafwise(
    g: GameInstance, agent: int, tau1: BermudanStoppingTime, tau2: BermudanStoppingTime
) -> dict[int, float]:
    _check_pair(g, tau1, tau2)
    tree = g.tree
    eta = _stop_values(g, agent, tau1.stages[None, :])[0]
    m = np.minimum(tau1.stages, tau2.stages)
    nodes = tree.paths[np.arange(tree.n_leaves), m]
    return {tree.ids[leaf]: float(eta[k]) for leaf, k in zip(tree.leaves, nodes)}


def payoff_I1(
    g: GameInstance, tau1: BermudanStoppingTime, tau2: BermudanStoppingTime
) -> dict[int, float]:
    """Agent 1's pay-off per leaf: X1(tau1) if tau1 <= tau2, else Y1(tau2)."""
    return _payoff_leafwise(g, 1, tau1, tau2)


def payoff_I2(
    g: GameInstance, tau1: BermudanStoppingTime, tau2: BermudanStoppingTime
) -> dict[int, float]:
    """Agent 2's pay-off per leaf: X2(tau2) if tau2 < tau1, else Y2(tau1)."""
    return _payoff_leafwise(g, 2, tau1, tau2)


def assess_J1(g: GameInstance, tau1: BermudanStoppingTime, tau2: BermudanStoppingTime) -> float:
    _check_pair(g, tau1, tau2)
    return float(assess_batch(g, 1, tau1.stages, tau2.stages)[0])


def assess_J2(g: GameInstance, tau1: BermudanStoppingTime, tau2: BermudanStoppingTime) -> float:
    _check_pair(g, tau1, tau2)
    return float(assess_batch(g, 2, tau1.stages, tau2.stages)[0])


def assess(g: GameInstance, agent: int, tau1, tau2) -> float:
    return assess_J1(g, tau1, tau2) if agent == 1 else assess_J2(g, tau1, tau2)


# --- best responses ----------------------------------------------------------


def best_response_payoff(
    g: GameInstance, agent: int, opp_tau: BermudanStoppingTime
) -> AdaptedProcess:
    """Pay-off of ``agent`` stopping at each node against a fixed opponent.

    X before the opponent's stop node; Y at the opponent's stop node from
    there on (the opponent is taken to have stopped first on ties).
    """
    _check_pair(g, opp_tau)
    tree = g.tree
    X, Y = g.stop_payoffs(agent)
    rep = tree.leaf_lo
    cut = opp_tau.stages[rep]
    opp_node = tree.paths[rep, cut]
    return AdaptedProcess(tree, np.where(tree.stage < cut, X.values, Y.values[opp_node]))


@dataclass(frozen=True)
class BestResponse:
    tau_tilde: BermudanStoppingTime
    tau_next: BermudanStoppingTime
    value0: float
    payoff: AdaptedProcess
    value: ValueFamily


def best_response(
    g: GameInstance,
    agent: int,
    opp_tau: BermudanStoppingTime,
    own_prev: BermudanStoppingTime,
) -> BestResponse:
    """One step of the construction for ``agent``.

    tau_tilde is the minimal optimal time against ``opp_tau``; the new iterate
    is (tau_tilde ∧ own_prev) where that is strictly before the opponent and
    ``own_prev`` elsewhere.
    """
    _check_pair(g, opp_tau, own_prev)
    xi = best_response_payoff(g, agent, opp_tau)
    vf = value_family(g.operator(agent), xi, opp_tau)
    tilde = minimal_optimal(vf, g.config.tol_eq)
    m = np.minimum(tilde.stages, own_prev.stages)
    nxt = np.where(m < opp_tau.stages, m, own_prev.stages)
    return BestResponse(
        tilde,
        BermudanStoppingTime._from_stages(g.schedule, nxt),
        vf.root_value,
        xi,
        vf,
    )


# --- the construction --------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    """Iterate n: agent 1 plays odd n, agent 2 even n; n = 1, 2 are the start."""

    n: int
    tau: BermudanStoppingTime
    tau_tilde: BermudanStoppingTime | None = None
    value0: float | None = None

    @property
    def agent(self) -> int:
        return 1 if self.n % 2 else 2


@dataclass
class EquilibriumResult:
    tau1_star: BermudanStoppingTime
    tau2_star: BermudanStoppingTime
    J1: float
    J2: float
    trace: list[IterationRecord]
    iterations: int
    converged: bool

    @property
    def best_response_steps(self) -> int:
        return sum(1 for r in self.trace if r.tau_tilde is not None)

    def tau(self, n: int) -> BermudanStoppingTime:
        return self.trace[n - 1].tau


def solve(g: GameInstance, max_iter: int | None = None) -> EquilibriumResult:
    """Alternating best responses from (T, T) until both sequences repeat.

    ``max_iter`` bounds the number of rounds (one best response per agent
    each). Both iterate sequences are non-increasing, so on a finite tree
    they stabilise after at most 2 * (non-terminal nodes) + 1 rounds.
    """
    if max_iter is None:
        max_iter = g.config.max_iter or g.default_max_iter()
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    T = at_horizon(g.schedule)
    trace = [IterationRecord(1, T), IterationRecord(2, T)]
    rounds = 0
    while True:
        if rounds >= max_iter:
            raise NoConvergence(f"no fixpoint after {max_iter} rounds")
        rounds += 1
        for agent in (1, 2):
            n = len(trace) + 1
            br = best_response(g, agent, trace[n - 2].tau, trace[n - 3].tau)
            trace.append(IterationRecord(n, br.tau_next, br.tau_tilde, br.value0))
        if trace[-2].tau == trace[-4].tau and trace[-1].tau == trace[-3].tau:
            break
    t1, t2 = trace[-2].tau, trace[-1].tau
    return EquilibriumResult(
        t1, t2, assess_J1(g, t1, t2), assess_J2(g, t1, t2), trace, rounds, True
    )
