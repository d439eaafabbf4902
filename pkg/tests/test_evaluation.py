from __future__ import annotations

import math

import numpy as np
import pytest
from helpers import b1_tree, binary_tree, broken_difference, d2_game
from hypothesis import given, settings
from hypothesis import strategies as st

from bermudan_dynkin.errors import BadGamma, BadPrior, MissingValues, OrderViolation
from bermudan_dynkin.evaluation import (
    axiom_check,
    make_entropic,
    make_linear,
    make_multiprior,
    rho,
    sweep,
)
from bermudan_dynkin.instance import gen_instance
from bermudan_dynkin.strategy import (
    BermudanStoppingTime,
    ExerciseSchedule,
    at_horizon,
    at_start,
    random_strategy,
)


@pytest.fixture
def b1():
    return ExerciseSchedule.all_stages(b1_tree())


def test_rho_same_time_returns_input(b1):
    tau = BermudanStoppingTime(b1, [1, 2])
    assert rho(make_entropic(b1.tree, 1.0), tau, tau, {1: 3.0, 2: -1.0}) == {1: 3.0, 2: -1.0}


def test_rho_linear_example(b1):
    out = rho(make_linear(b1.tree), at_start(b1), at_horizon(b1), {1: 0.0, 2: 4.0})
    assert out == {0: 2.0}


def test_rho_entropic_example(b1):
    out = rho(make_entropic(b1.tree, 1.0), at_start(b1), at_horizon(b1), {1: 0.0, 2: math.log(9)})
    assert out[0] == pytest.approx(math.log(5), abs=1e-12)


def test_rho_multiprior_example(b1):
    op = make_multiprior(b1.tree, {0: [[0.5, 0.5], [0.2, 0.8]]}, "inf")
    assert rho(op, at_start(b1), at_horizon(b1), {1: 1.0, 2: 0.0})[0] == pytest.approx(0.2, abs=1e-15)
    sup = make_multiprior(b1.tree, {0: [[0.5, 0.5], [0.2, 0.8]]}, "sup")
    assert rho(sup, at_start(b1), at_horizon(b1), {1: 1.0, 2: 0.0})[0] == pytest.approx(0.5, abs=1e-15)


def test_rho_errors(b1):
    op = make_linear(b1.tree)
    with pytest.raises(OrderViolation):
        rho(op, at_horizon(b1), at_start(b1), {0: 1.0})
    with pytest.raises(MissingValues):
        rho(op, at_start(b1), at_horizon(b1), {1: 1.0})


def test_constructor_errors(b1):
    with pytest.raises(BadGamma):
        make_entropic(b1.tree, 0.0)
    with pytest.raises(BadGamma):
        make_entropic(b1.tree, math.inf)
    with pytest.raises(BadPrior):
        make_multiprior(b1.tree, {0: [[0.5, 0.6]]})
    with pytest.raises(BadPrior):
        make_multiprior(b1.tree, {0: [[1.0]]})
    with pytest.raises(BadPrior):
        make_multiprior(b1.tree, {1: [[1.0]]})
    with pytest.raises(BadPrior):
        make_multiprior(b1.tree, None, "median")


def test_entropic_preserves_constant(b1):
    out = rho(make_entropic(b1.tree, 1.0), at_start(b1), at_horizon(b1), {1: 7.0, 2: 7.0})
    assert out[0] == pytest.approx(7.0, abs=1e-12)


@pytest.mark.parametrize("c", [-10.0, 0.0, 3.5])
def test_constant_preservation_every_node(c):
    g = gen_instance(3, 3, 3, ["multiprior"])
    tree = g.tree
    ops = [make_linear(tree), make_entropic(tree, 0.5), make_entropic(tree, 2.0), g.rho1]
    for op in ops:
        for k, kids in enumerate(op.tree.children):
            if kids:
                assert abs(op.aggregate(op.tree.ids[k], [c] * len(kids)) - c) <= 1e-12


def test_multiprior_singleton_matches_linear():
    tree = binary_tree(3)
    lin, mp = make_linear(tree), make_multiprior(tree, None, "inf")
    rng = np.random.default_rng(0)
    cut = np.full(tree.n_leaves, tree.horizon)
    for _ in range(100):
        eta = rng.normal(scale=5.0, size=tree.n_nodes)
        assert abs(sweep(lin, cut, eta)[0, 0] - sweep(mp, cut, eta)[0, 0]) <= 1e-12


def test_entropic_small_gamma_close_to_linear(b1):
    args = (at_start(b1), at_horizon(b1), {1: 0.0, 2: 4.0})
    ent = rho(make_entropic(b1.tree, 1e-6), *args)[0]
    lin = rho(make_linear(b1.tree), *args)[0]
    assert abs(ent - lin) <= 1e-5
    # second-order term gamma * Var / 2
    assert ent - lin == pytest.approx(1e-6 * 4.0 / 2, rel=1e-3)


def test_stage_and_node_aggregation_agree():
    g = gen_instance(8, 3, 3, ["entropic:2", "multiprior"])
    rng = np.random.default_rng(1)
    for op in (g.rho1, g.rho2, make_linear(g.tree)):
        tree = op.tree
        for s in range(tree.horizon):
            vals = rng.normal(size=(1, tree.n_nodes))
            stage = op.aggregate_stage(s, vals[:, tree.stage_children[s]])[0]
            for r, k in enumerate(tree.stage_nodes[s]):
                one = op.aggregate(tree.ids[k], vals[0, list(tree.children[k])])
                assert stage[r] == pytest.approx(one, abs=1e-12)


def test_consistency_split_at_intermediate_time():
    g = gen_instance(4, 4, 2, ["entropic:1", "multiprior"])
    rng = np.random.default_rng(2)
    tree = g.tree
    for op in (g.rho1, g.rho2):
        for _ in range(50):
            a, b = random_strategy(g.schedule, rng), random_strategy(g.schedule, rng)
            theta, tau = np.minimum(a.stages, b.stages), np.maximum(a.stages, b.stages)
            eta = rng.normal(size=tree.n_nodes)
            one = sweep(op, tau, eta)[0, tree.root]
            two = sweep(op, theta, sweep(op, tau, eta)[0])[0, tree.root]
            assert abs(one - two) <= 1e-12


def test_lipschitz_continuity():
    g = gen_instance(5, 3, 3, ["entropic:2", "multiprior"])
    tree = g.tree
    rng = np.random.default_rng(3)
    delta = 1e-8
    cut = np.full(tree.n_leaves, tree.horizon)
    for op in (g.rho1, g.rho2, make_linear(tree)):
        for _ in range(50):
            eta = rng.integers(-64, 65, size=tree.n_nodes) / 8.0
            bump = delta * rng.choice([-1.0, 1.0], size=tree.n_nodes)
            change = abs(sweep(op, cut, eta + bump)[0, 0] - sweep(op, cut, eta)[0, 0])
            assert change <= 2 * delta


def test_axiom_check_linear_and_entropic():
    sched = d2_game().schedule
    tree = binary_tree(3)
    big = ExerciseSchedule.all_stages(tree)
    assert axiom_check(make_linear(tree), big, trials=500, seed=0).passed
    assert axiom_check(make_entropic(tree, 2.0), big, trials=500, seed=0).passed
    assert axiom_check(make_entropic(sched.tree, 2.0), sched, trials=500, seed=7).passed


def test_broken_aggregator_fails_monotonicity_with_replayable_counterexample():
    tree = binary_tree(2)
    sched = ExerciseSchedule.all_stages(tree)
    op = broken_difference(tree)
    report = axiom_check(op, sched, trials=200, seed=7)
    mono = report.results["monotonicity"]
    assert not report.passed and not mono.passed
    cex = mono.counterexample
    S = BermudanStoppingTime(sched, cex["S"])
    tau = BermudanStoppingTime(sched, cex["tau"])
    low = rho(op, S, tau, cex["inputs"]["eta_low"])
    high = rho(op, S, tau, cex["inputs"]["eta_high"])
    assert low[cex["node"]] == cex["outputs"]["rho_low"]
    assert high[cex["node"]] == cex["outputs"]["rho_high"]
    assert low[cex["node"]] - high[cex["node"]] == pytest.approx(cex["violation"])
    assert cex["violation"] > 0


def test_axiom_report_is_deterministic():
    tree = binary_tree(2)
    sched = ExerciseSchedule.all_stages(tree)
    a = axiom_check(broken_difference(tree), sched, trials=50, seed=11).to_dict()
    b = axiom_check(broken_difference(tree), sched, trials=50, seed=11).to_dict()
    assert a == b


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(-64, 64), min_size=3, max_size=3),
    st.lists(st.integers(0, 16), min_size=3, max_size=3),
    st.sampled_from([0.5, 1.0, 2.0, -1.0]),
)
def test_entropic_monotone_in_each_child(values, bumps, gamma):
    tree = gen_instance(0, 1, 3).tree
    op = make_entropic(tree, gamma)
    v = np.array(values) / 8.0
    w = v + np.array(bumps) / 8.0
    assert op.aggregate(0, w) >= op.aggregate(0, v) - 1e-12
