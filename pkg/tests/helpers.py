"""Shared builders for the test suite."""

from __future__ import annotations

from importlib import resources

import numpy as np

from bermudan_dynkin.evaluation import make_custom, make_linear, make_multiprior
from bermudan_dynkin.game import GameInstance
from bermudan_dynkin.instance import gen_instance, load_instance
from bermudan_dynkin.lattice import AdaptedProcess, EventTree, build_tree
from bermudan_dynkin.strategy import ExerciseSchedule

OPERATOR_KINDS = ["linear", "entropic:0.5", "entropic:1", "entropic:2", "multiprior"]
# (4, 3) is left out: a depth-4 ternary tree has about 3.9e8 strategies
SHAPES = [(d, b) for d in range(1, 5) for b in range(1, 4) if (d, b) != (4, 3)]


def fixture_path(name: str = "d2.game") -> str:
    return str(resources.files("bermudan_dynkin") / "fixtures" / name)


def d2_game() -> GameInstance:
    return load_instance(fixture_path("d2.game"))


def b1_tree(pu: float = 0.5, pd: float = 0.5) -> EventTree:
    """Root 0 with two leaves: u = 1, d = 2."""
    return build_tree(
        {
            "nodes": [
                {"id": 0, "stage": 0, "children": [{"id": 1, "prob": pu}, {"id": 2, "prob": pd}]},
                {"id": 1, "stage": 1, "children": []},
                {"id": 2, "stage": 1, "children": []},
            ],
            "dates": [0.0, 1.0],
        }
    )


def binary_tree(depth: int) -> EventTree:
    """Balanced binary tree with breadth-first ids and equal probabilities."""
    nodes = {}
    for k in range(2 ** (depth + 1) - 1):
        stage = int(np.log2(k + 1))
        kids = [] if stage == depth else [(2 * k + 1, 0.5), (2 * k + 2, 0.5)]
        nodes[k] = (stage, kids)
    return EventTree(nodes, list(range(depth + 1)))


def sweep_cases(n: int = 200) -> list[tuple[int, int, int, list[str]]]:
    """(seed, depth, branching, operator kinds) for the random-instance sweeps.

    Operator kinds rotate and agent 2's rotation is shifted every five
    instances, so most instances mix two different operators.
    """
    cases = []
    for i in range(n):
        d, b = SHAPES[i % len(SHAPES)]
        k = len(OPERATOR_KINDS)
        cases.append((1000 + i, d, b, [OPERATOR_KINDS[i % k], OPERATOR_KINDS[(i + i // k) % k]]))
    return cases


def sweep_instances(n: int = 200) -> list[GameInstance]:
    return [gen_instance(seed, d, b, kinds) for seed, d, b, kinds in sweep_cases(n)]


def constant_game(tree: EventTree, c: float, op=None) -> GameInstance:
    op = op or make_linear(tree)
    const = AdaptedProcess.constant(tree, c)
    return GameInstance(tree, ExerciseSchedule.all_stages(tree), op, op, const, const, const, const)


def broken_difference(tree: EventTree):
    """g(x, y) = x - y at binary nodes: constant-preserving fails and it is decreasing in y."""
    return make_custom(tree, lambda v, p: float(v[0] - v[1]) if len(v) == 2 else float(v[0]))


def random_multiprior(tree: EventTree, rng: np.random.Generator, direction: str = "inf"):
    """Worst case over the tree law and one random law at every node."""
    priors = {}
    for k, kids in enumerate(tree.children):
        if kids:
            priors[tree.ids[k]] = [tree.child_probs[k], rng.dirichlet(np.ones(len(kids)))]
    return make_multiprior(tree, priors, direction)
