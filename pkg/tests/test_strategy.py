from __future__ import annotations

import numpy as np
import pytest
from helpers import b1_tree, binary_tree, d2_game
from hypothesis import given, settings
from hypothesis import strategies as st

from bermudan_dynkin.errors import (
    EnumerationLimitExceeded,
    InvalidStoppingTime,
    NotMeasurable,
    ScheduleError,
    SchemaMismatch,
)
from bermudan_dynkin.instance import gen_instance
from bermudan_dynkin.lattice import AdaptedProcess, EventTree
from bermudan_dynkin.strategy import (
    BermudanStoppingTime,
    ExerciseSchedule,
    at_horizon,
    at_start,
    canonical_partition,
    concatenate,
    count_theta,
    enumerate_theta,
    evaluate_family_at,
    first_hitting,
    join,
    leq,
    meet,
    random_strategy,
    reconstruct,
)


@pytest.fixture
def b1():
    return ExerciseSchedule.all_stages(b1_tree())


def test_stop_nodes_must_form_a_cut(b1):
    assert BermudanStoppingTime(b1, [1, 2]).stop_nodes == {1, 2}
    with pytest.raises(InvalidStoppingTime):
        BermudanStoppingTime(b1, [1])
    with pytest.raises(InvalidStoppingTime):
        BermudanStoppingTime(b1, [0, 1])


def test_stop_nodes_must_be_exercisable():
    tree = binary_tree(2)
    sched = ExerciseSchedule(tree, [[0], tree.leaf_ids])
    with pytest.raises(InvalidStoppingTime):
        BermudanStoppingTime(sched, [1, 2])
    assert count_theta(sched) == 2


def test_schedule_validation():
    tree = binary_tree(2)
    with pytest.raises(ScheduleError):
        ExerciseSchedule(tree, [[0]])
    with pytest.raises(ScheduleError):
        ExerciseSchedule(tree, [[1, 2], tree.leaf_ids])
    with pytest.raises(ScheduleError):
        ExerciseSchedule(tree, [[0], [1, 2]])
    with pytest.raises(ScheduleError):
        ExerciseSchedule(tree, [[0], [1, 2], [0], tree.leaf_ids])
    mixed = ExerciseSchedule(tree, [[0], [1, 5, 6], tree.leaf_ids])
    assert mixed.K == 2
    assert mixed.exercisable(5) == {1, 2}
    assert not mixed.is_all_stages()


def test_canonical_partition_examples(b1):
    parts, rest = canonical_partition(at_horizon(b1))
    assert parts == [frozenset(), frozenset()] and rest == {1, 2}
    parts, rest = canonical_partition(at_start(b1))
    assert parts == [frozenset({1, 2}), frozenset()] and rest == frozenset()
    # theta_1 is the horizon, so stopping at the leaves lands in A-bar
    parts, rest = canonical_partition(BermudanStoppingTime(b1, [1, 2]))
    assert parts == [frozenset(), frozenset()] and rest == {1, 2}


def test_meet_join_examples(b1):
    tau = BermudanStoppingTime(b1, [0])
    other = BermudanStoppingTime(b1, [1, 2])
    T = at_horizon(b1)
    assert meet(tau, tau) == tau
    assert meet(tau, T) == tau and join(tau, T) == T
    assert meet(tau, other) == tau and join(tau, other) == other


def test_concatenate_examples(b1):
    zero, T = at_start(b1), at_horizon(b1)
    assert concatenate(zero, [0], T) == zero
    assert concatenate(zero, [], T) == T
    tree = binary_tree(2)
    sched = ExerciseSchedule.all_stages(tree)
    tau = BermudanStoppingTime(sched, [1, 2])
    # {node 3} is not known at stage 1, where tau stops
    with pytest.raises(NotMeasurable):
        concatenate(tau, [3], at_horizon(sched))
    assert concatenate(tau, [1], at_horizon(sched)).stop_nodes == {1, 5, 6}


def test_leq_examples(b1):
    T, zero = at_horizon(b1), at_start(b1)
    tau = BermudanStoppingTime(b1, [1, 2])
    assert leq(tau, T) and leq(zero, tau)
    assert not leq(tau, zero)


def test_enumeration_examples(b1):
    single = ExerciseSchedule.all_stages(EventTree({0: (0, [])}, [0.0]))
    assert [t.sorted_nodes() for t in enumerate_theta(single)] == [[0]]
    d2 = d2_game().schedule
    assert [t.sorted_nodes() for t in enumerate_theta(d2)] == [[0], [1]]
    assert [t.sorted_nodes() for t in enumerate_theta(b1)] == [[0], [1, 2]]


def test_enumeration_order_and_count():
    sched = ExerciseSchedule.all_stages(binary_tree(2))
    got = [tuple(t.sorted_nodes()) for t in enumerate_theta(sched)]
    assert got == sorted(got)
    assert len(got) == len(set(got)) == count_theta(sched) == 5
    with pytest.raises(EnumerationLimitExceeded):
        list(enumerate_theta(sched, limit=4))


def test_enumeration_from_lower_bound():
    sched = ExerciseSchedule.all_stages(binary_tree(2))
    lower = BermudanStoppingTime(sched, [1, 5, 6])
    got = list(enumerate_theta(sched, lower))
    everything = list(enumerate_theta(sched))
    assert got == [t for t in everything if leq(lower, t)]
    assert len(got) == count_theta(sched, lower)


def test_evaluate_family_at_examples(b1):
    phi = AdaptedProcess(b1.tree, {0: 1.0, 1: 0.0, 2: 4.0})
    assert evaluate_family_at(phi, at_horizon(b1)) == {1: 0.0, 2: 4.0}
    assert evaluate_family_at(phi, at_start(b1)) == {1: 1.0, 2: 1.0}
    assert evaluate_family_at(phi, BermudanStoppingTime(b1, [1, 2])) == {1: 0.0, 2: 4.0}


def test_first_hitting_examples(b1):
    assert first_hitting(b1, [0, 2]) == at_start(b1)
    assert first_hitting(b1, []) == at_horizon(b1)
    assert first_hitting(b1, [1]).stop_nodes == {1, 2}


def test_schema_mismatch():
    a = ExerciseSchedule.all_stages(b1_tree())
    b = ExerciseSchedule.all_stages(b1_tree())
    with pytest.raises(SchemaMismatch):
        meet(at_start(a), at_start(b))


# --- properties over random trees ----------------------------------------------

shapes = st.tuples(
    st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3)
).filter(lambda t: t[1] * t[2] <= 6)


def _schedule(seed, depth, branching):
    return gen_instance(seed, depth, branching).schedule


@settings(max_examples=25, deadline=None)
@given(shapes)
def test_lattice_closure(shape):
    sched = _schedule(*shape)
    all_ = list(enumerate_theta(sched))
    members = set(all_)
    rng = np.random.default_rng(shape[0])
    pairs = [(all_[i], all_[j]) for i, j in rng.integers(0, len(all_), size=(40, 2))]
    for a, b in pairs:
        assert meet(a, b) in members and join(a, b) in members
        m = meet(a, b)
        atoms = sorted(m.stop_nodes)
        chosen = [n for n in atoms if rng.random() < 0.5]
        assert concatenate(a, chosen, b) in members


@settings(max_examples=25, deadline=None)
@given(shapes)
def test_partition_round_trip_and_disjointness(shape):
    sched = _schedule(*shape)
    tree = sched.tree
    for tau in enumerate_theta(sched, limit=5000):
        parts, rest = canonical_partition(tau)
        assert reconstruct(sched, parts, rest) == tau
        leaf_ids = [tree.ids[k] for k in tree.leaves]
        for k in range(sched.K):
            th = sched.theta_stages[k]
            at_k = {leaf_ids[j] for j in np.flatnonzero((tau.stages == th) & (th < tree.horizon))}
            assert not (parts[k + 1] & at_k)


@settings(max_examples=25, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1))
def test_evaluation_agrees_where_stopping_times_agree(shape, seed):
    sched = _schedule(*shape)
    tree = sched.tree
    rng = np.random.default_rng(seed)
    phi = AdaptedProcess(tree, rng.normal(size=tree.n_nodes))
    a, b = random_strategy(sched, rng), random_strategy(sched, rng)
    va, vb = evaluate_family_at(phi, a), evaluate_family_at(phi, b)
    for j, leaf in enumerate(tree.leaves):
        if a.stages[j] == b.stages[j]:
            assert va[tree.ids[leaf]] == vb[tree.ids[leaf]]


@settings(max_examples=25, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1))
def test_monotone_sequences_stabilise(shape, seed):
    sched = _schedule(*shape)
    rng = np.random.default_rng(seed)
    tau = at_horizon(sched)
    changes = 0
    for _ in range(3 * sched.tree.n_nodes):
        nxt = meet(tau, random_strategy(sched, rng, p_stop=0.1))
        changes += nxt != tau
        tau = nxt
    assert changes <= sched.tree.n_nodes
