"""Instance files: parsing, validation, serialisation and random generation.

An instance file is JSON with top-level keys ``tree``, ``schedule``,
``operators``, ``payoffs`` and ``config``. Serialisation is deterministic
(sorted keys, fixed indentation) so equal instances give equal bytes.
"""

from __future__ import annotations

import json
import os
from collections.abc import Mapping, Sequence
from typing import Any

import numpy as np

from .errors import (
    BadDimensions,
    BadGamma,
    BadPrior,
    InstanceParseError,
    InstanceValidationError,
    ScheduleError,
    TreeError,
    UnknownNode,
)
from .evaluation import EvaluationOperator, make_entropic, make_linear, make_multiprior
from .game import GameConfig, GameInstance
from .lattice import AdaptedProcess, EventTree, build_tree
from .strategy import DEFAULT_ENUM_LIMIT, ExerciseSchedule

PAYOFF_KEYS = ("X1", "Y1", "X2", "Y2")
MAX_DEPTH = 8
MAX_BRANCHING = 4
GRID = 8  # payoffs and generated probabilities are multiples of 1/GRID


# --- parsing -----------------------------------------------------------------


def make_operator(tree: EventTree, desc: Mapping[str, Any]) -> EvaluationOperator:
    """Operator from its JSON description ``{kind, gamma?, priors?, direction?}``."""
    kind = desc.get("kind")
    if kind == "linear":
        return make_linear(tree)
    if kind == "entropic":
        if "gamma" not in desc:
            raise BadGamma("entropic operator needs 'gamma'")
        return make_entropic(tree, desc["gamma"])
    if kind == "multiprior":
        priors = desc.get("priors") or {}
        if not isinstance(priors, Mapping):
            raise BadPrior("'priors' must map node id -> list of probability vectors")
        try:
            keyed = {int(k): v for k, v in priors.items()}
        except ValueError:
            raise BadPrior(f"prior keys must be node ids, got {sorted(priors)}") from None
        return make_multiprior(tree, keyed, desc.get("direction", "inf"))
    raise ValueError(f"unknown operator kind {kind!r}")


def parse_operator_spec(tree: EventTree, text: str) -> EvaluationOperator:
    """Operator from a short form: ``linear``, ``entropic:G``, ``multiprior[:inf|sup]``.

    A short-form multiprior uses the tree law as the only prior at every node;
    :func:`gen_instance` adds a second random prior per node instead.
    """
    name, _, arg = text.partition(":")
    if name == "linear":
        return make_linear(tree)
    if name == "entropic":
        return make_entropic(tree, float(arg or 1.0))
    if name == "multiprior":
        return make_multiprior(tree, None, arg or "inf")
    raise ValueError(f"unknown operator {text!r}")


def _payoff(tree: EventTree, name: str, raw: Any) -> AdaptedProcess:
    if not isinstance(raw, Mapping):
        raise InstanceParseError(f"payoff {name} must map node id -> number")
    try:
        values = {int(k): float(v) for k, v in raw.items()}
    except (TypeError, ValueError) as exc:
        raise InstanceParseError(f"payoff {name}: {exc}") from None
    unknown = sorted(set(values) - set(tree.ids))
    if unknown:
        raise InstanceValidationError("payoff", f"{name} names unknown nodes", unknown)
    missing = sorted(set(tree.ids) - set(values))
    if missing:
        raise InstanceValidationError("payoff", f"{name} is undefined at some nodes", missing)
    try:
        return AdaptedProcess(tree, values)
    except ValueError as exc:
        raise InstanceValidationError("payoff", f"{name}: {exc}") from None


def parse_instance(data: Mapping[str, Any]) -> GameInstance:
    """Validated :class:`GameInstance` from the decoded JSON of an instance file."""
    if not isinstance(data, Mapping):
        raise InstanceParseError("instance must be a JSON object")
    for key in ("tree", "operators", "payoffs"):
        if key not in data:
            raise InstanceParseError(f"instance lacks the '{key}' section")

    try:
        tree = build_tree(data["tree"])
    except (TreeError, UnknownNode) as exc:
        raise InstanceValidationError("tree", str(exc)) from None
    except (AttributeError, TypeError) as exc:
        raise InstanceParseError(f"malformed tree section: {exc}") from None

    sched_raw = data.get("schedule", "all-stages")
    try:
        if sched_raw == "all-stages":
            schedule = ExerciseSchedule.all_stages(tree)
        elif isinstance(sched_raw, Mapping) and isinstance(sched_raw.get("theta"), list):
            schedule = ExerciseSchedule(tree, sched_raw["theta"])
        else:
            raise InstanceParseError("schedule must be 'all-stages' or {\"theta\": [...]}")
    except (ScheduleError, UnknownNode) as exc:
        raise InstanceValidationError("schedule", str(exc)) from None
    except TypeError as exc:
        raise InstanceParseError(f"malformed schedule: {exc}") from None

    ops_raw = data["operators"]
    if not isinstance(ops_raw, Mapping):
        raise InstanceParseError("'operators' must be an object with agent1 and agent2")
    ops = []
    for agent in ("agent1", "agent2"):
        if not isinstance(ops_raw.get(agent), Mapping):
            raise InstanceParseError(f"operators.{agent} missing or not an object")
        try:
            ops.append(make_operator(tree, ops_raw[agent]))
        except (BadGamma, BadPrior, ValueError, TypeError) as exc:
            raise InstanceValidationError("operator", f"{agent}: {exc}") from None

    pay_raw = data["payoffs"]
    if not isinstance(pay_raw, Mapping):
        raise InstanceParseError("'payoffs' must be an object")
    missing = [k for k in PAYOFF_KEYS if k not in pay_raw]
    if missing:
        raise InstanceParseError(f"payoffs lack {missing}")
    pay = {k: _payoff(tree, k, pay_raw[k]) for k in PAYOFF_KEYS}

    cfg_raw = data.get("config") or {}
    try:
        config = GameConfig(
            tol_eq=float(cfg_raw.get("tol_eq", 1e-9)),
            max_iter=None if cfg_raw.get("max_iter") is None else int(cfg_raw["max_iter"]),
            enum_limit=int(cfg_raw.get("enum_limit", DEFAULT_ENUM_LIMIT)),
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise InstanceParseError(f"malformed config: {exc}") from None

    return GameInstance(tree, schedule, ops[0], ops[1], config=config, **pay)


def load_instance(path: str | os.PathLike) -> GameInstance:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"{path}: not valid JSON ({exc})") from None
    return parse_instance(data)


# --- serialisation ---------------------------------------------------------------


def instance_to_dict(g: GameInstance) -> dict[str, Any]:
    for name in ("rho1", "rho2"):
        if getattr(g, name).kind == "custom":
            raise ValueError(f"{name} is a custom aggregator and cannot be serialised")
    return {
        "tree": g.tree.to_dict(),
        "schedule": g.schedule.to_json(),
        "operators": {"agent1": g.rho1.describe(), "agent2": g.rho2.describe()},
        "payoffs": {
            k: {str(nid): v for nid, v in getattr(g, k).as_dict().items()} for k in PAYOFF_KEYS
        },
        "config": {
            "tol_eq": g.config.tol_eq,
            "max_iter": g.config.max_iter,
            "enum_limit": g.config.enum_limit,
        },
    }


def dumps(data: Any) -> str:
    """Canonical JSON text used for every file this package writes."""
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"


def dump_instance(g: GameInstance, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(instance_to_dict(g)))


# --- random instances --------------------------------------------------------------


def _composition(rng: np.random.Generator, parts: int) -> list[float]:
    """Random positive multiples of 1/GRID summing to one."""
    cuts = np.sort(rng.choice(GRID - 1, size=parts - 1, replace=False) + 1)
    sizes = np.diff(np.concatenate(([0], cuts, [GRID])))
    return [int(s) / GRID for s in sizes]


def _operator_desc(text: str, priors: dict[str, list[list[float]]]) -> dict[str, Any]:
    name, _, arg = text.partition(":")
    if name == "linear":
        return {"kind": "linear"}
    if name == "entropic":
        return {"kind": "entropic", "gamma": float(arg or 1.0)}
    if name == "multiprior":
        direction = arg or "inf"
        if direction not in ("inf", "sup"):
            raise ValueError(f"unknown multiprior direction {direction!r}")
        return {"kind": "multiprior", "direction": direction, "priors": priors}
    raise ValueError(f"unknown operator {text!r}")


def gen_instance_dict(
    seed: int, depth: int, branching: int, operator_kinds: Sequence[str] = ("linear",)
) -> dict[str, Any]:
    """Random instance on the full ``branching``-ary tree of the given depth.

    Node ids are breadth-first. Transition probabilities are positive
    multiples of 1/8, pay-offs are drawn from {k/8 : -64 <= k <= 64} and then
    repaired so that Y >= X everywhere and Y = X at the leaves. Multiprior
    operators get, at every non-terminal node, the tree law plus one more
    random law. ``operator_kinds`` holds one short form for both agents or
    one per agent.
    """
    if not 0 <= depth <= MAX_DEPTH:
        raise BadDimensions(f"depth must be in 0..{MAX_DEPTH}, got {depth}")
    if not 1 <= branching <= MAX_BRANCHING:
        raise BadDimensions(f"branching must be in 1..{MAX_BRANCHING}, got {branching}")
    kinds = list(operator_kinds)
    if len(kinds) == 1:
        kinds *= 2
    if len(kinds) != 2:
        raise ValueError("give one operator for both agents or one per agent")

    rng = np.random.default_rng(seed)
    nodes: list[dict[str, Any]] = []
    frontier = [0]
    next_id = 1
    for stage in range(depth + 1):
        new_frontier = []
        for nid in frontier:
            kids = []
            if stage < depth:
                probs = _composition(rng, branching)
                for p in probs:
                    kids.append({"id": next_id, "prob": p})
                    new_frontier.append(next_id)
                    next_id += 1
            nodes.append({"id": nid, "stage": stage, "children": kids})
        frontier = new_frontier
    leaves = {n["id"] for n in nodes if not n["children"]}

    pay = {}
    for agent in ("1", "2"):
        X = rng.integers(-8 * GRID, 8 * GRID, size=len(nodes), endpoint=True) / GRID
        Y = rng.integers(-8 * GRID, 8 * GRID, size=len(nodes), endpoint=True) / GRID
        Y = np.maximum(X, Y)
        for n in nodes:
            if n["id"] in leaves:
                Y[n["id"]] = X[n["id"]]
        pay["X" + agent] = {str(n["id"]): float(X[n["id"]]) for n in nodes}
        pay["Y" + agent] = {str(n["id"]): float(Y[n["id"]]) for n in nodes}

    ops = {}
    for agent, text in zip(("agent1", "agent2"), kinds):
        internal = {}
        if text.startswith("multiprior"):
            for n in nodes:
                if n["children"]:
                    own = [c["prob"] for c in n["children"]]
                    internal[str(n["id"])] = [own, _composition(rng, branching)]
        ops[agent] = _operator_desc(text, internal)

    return {
        "tree": {"nodes": nodes, "dates": [float(s) for s in range(depth + 1)]},
        "schedule": "all-stages",
        "operators": ops,
        "payoffs": pay,
        "config": {"tol_eq": 1e-9, "max_iter": None, "enum_limit": DEFAULT_ENUM_LIMIT},
    }


def gen_instance(
    seed: int,
    depth: int,
    branching: int,
    operator_kinds: Sequence[str] = ("linear",),
    path: str | os.PathLike | None = None,
) -> GameInstance:
    """Generate, validate and optionally write a random instance."""
    data = gen_instance_dict(seed, depth, branching, operator_kinds)
    g = parse_instance(data)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps(instance_to_dict(g)))
    return g

