import itertools

import numpy as np
import pytest

from core.exceptions import (
    EnumerationCapExceeded,
    EventNotMeasurable,
    HNotPredictable,
    HOutsideStopSet,
    NotAStoppingTime,
    NotPredictable,
    SpaceMismatch,
)
from core.probspace import build_space
from core.splitstop import (
    Ordering,
    SplitStoppingTime,
    atoms,
    compare,
    cond_exp_at_split,
    count_split_times,
    dominates,
    enumerate_split_times,
    glue,
    lift,
    split_value,
    terminal_kind,
    terminal_split_time,
    validate_sst,
)


def as_pairs(members):
    return {(tuple(sorted(m.stop_nodes)), tuple(sorted(m.pre_nodes))) for m in members}


def test_validate_examples(binomial1):
    rho = validate_sst(binomial1, H=[1, 2], tau=[1, 2])
    assert rho.leaf_tau.tolist() == [1, 1]
    assert rho.leaf_in_h.tolist() == [True, True]

    at_zero = validate_sst(binomial1, H=[0], tau={0: 'stop'})
    assert at_zero.leaf_stop.tolist() == [0, 0]

    with pytest.raises(HNotPredictable):
        validate_sst(binomial1, H=[1], tau=[1, 2])


def test_validate_rejects_bad_stop_sets(binomial1):
    with pytest.raises(NotAStoppingTime):
        validate_sst(binomial1, H=[], tau=[0, 1])
    with pytest.raises(NotAStoppingTime):
        validate_sst(binomial1, H=[], tau=[1])
    with pytest.raises(HOutsideStopSet):
        validate_sst(binomial1, H=[0], tau=[1, 2])


def test_compare_examples(binomial1):
    at_zero = lift(binomial1, [0])
    at_one = lift(binomial1, [1, 2])
    predictable_one = lift(binomial1, [1, 2], 'predictable')

    assert compare(at_zero, at_one) is Ordering.GT
    assert compare(at_one, at_zero) is Ordering.LT
    assert compare(at_one, predictable_one) is Ordering.LT
    assert dominates(at_one, predictable_one)
    assert not dominates(predictable_one, at_one)
    assert compare(at_one, lift(binomial1, [1, 2])) is Ordering.EQ


def test_compare_incomparable(binomial2):
    early_up = lift(binomial2, [1, 5, 6])
    early_down = lift(binomial2, [2, 3, 4])
    assert compare(early_up, early_down) is Ordering.INCOMPARABLE


def test_compare_across_spaces(binomial1):
    other = build_space({'kind': 'binomial', 'steps': 1, 'dt': 1.0})
    with pytest.raises(SpaceMismatch):
        compare(lift(binomial1, [0]), lift(other, [0]))


def test_lift(binomial1, binomial2):
    optional = lift(binomial1, [1, 2])
    assert optional.pre_nodes == frozenset()
    predictable = lift(binomial1, [1, 2], 'predictable')
    assert predictable.pre_nodes == frozenset({1, 2})

    lift(binomial2, [1, 5, 6])
    with pytest.raises(NotPredictable):
        lift(binomial2, [1, 5, 6], 'predictable')


def test_enumerate_one_step(binomial1):
    members = enumerate_split_times(binomial1)
    assert len(members) == count_split_times(binomial1) == 4
    assert as_pairs(members) == {((0,), ()), ((0,), (0,)), ((1, 2), ()), ((1, 2), (1, 2))}


def test_enumerate_geq_terminal(binomial1):
    delta = lift(binomial1, [1, 2])
    members = enumerate_split_times(binomial1, constraint='geq', delta=delta)
    assert as_pairs(members) == {((1, 2), ())}


def test_enumerate_under_predictable_terminal(binomial1):
    rho_T = terminal_split_time(binomial1, 'omega')
    members = enumerate_split_times(binomial1, rho_T)
    assert count_split_times(binomial1, rho_T) == 3
    assert as_pairs(members) == {((0,), ()), ((0,), (0,)), ((1, 2), (1, 2))}
    assert as_pairs(members) < as_pairs(enumerate_split_times(binomial1))


def test_enumerate_two_steps(binomial2):
    members = enumerate_split_times(binomial2)
    assert len(members) == count_split_times(binomial2) == 12
    assert len(set(members)) == 12
    assert [m.masks for m in members] == sorted(m.masks for m in members)


def test_enumeration_cap(binomial1):
    with pytest.raises(EnumerationCapExceeded):
        enumerate_split_times(binomial1, cap=3)


def test_terminal_kinds(binomial2):
    assert terminal_kind(terminal_split_time(binomial2)) == 'empty'
    assert terminal_kind(terminal_split_time(binomial2, 'omega')) == 'omega'
    general = SplitStoppingTime(binomial2, frozenset({3, 4, 5, 6}), frozenset({3, 4}))
    assert terminal_kind(general) is None


def test_order_is_partial_on_full_enumeration():
    space = build_space({'kind': 'uniform', 'steps': 2, 'dt': 1.0,
                         'probabilities': [0.25, 0.75], 'noise': [1.5, -0.5]})
    members = enumerate_split_times(space)
    for rho in members:
        assert compare(rho, rho) is Ordering.EQ
    for a, b in itertools.product(members, repeat=2):
        if dominates(a, b) and dominates(b, a):
            assert np.array_equal(a.leaf_stop, b.leaf_stop)
            assert np.array_equal(a.leaf_in_h, b.leaf_in_h)
    for a, b, c in itertools.product(members, repeat=3):
        if dominates(a, b) and dominates(b, c):
            assert dominates(a, c)


def test_atoms_and_conditioning(worked_tree):
    space, xi = worked_tree
    optional_one = lift(space, [1, 2])
    predictable_one = lift(space, [1, 2], 'predictable')

    assert set(atoms(optional_one)) == {(1,), (2,)}
    assert set(atoms(predictable_one)) == {(1, 2)}
    leaf_values = xi.at[space.leaves]
    assert cond_exp_at_split(space, leaf_values, optional_one) == {(1,): 2.0, (2,): 0.5}
    assert cond_exp_at_split(space, leaf_values, predictable_one) == {(1, 2): 1.25}
    assert split_value(xi, predictable_one) == {(1, 2): 5.0}


def test_glue_stays_in_later_family(worked_tree):
    space, _ = worked_tree
    delta = lift(space, [1, 2])
    later = lift(space, [3, 4, 5, 6])

    glued = glue(later, delta, [3, 4], delta)
    assert glued.stop_nodes == frozenset({2, 3, 4})
    assert dominates(glued, delta)

    with pytest.raises(EventNotMeasurable):
        glue(later, delta, [3], delta)
