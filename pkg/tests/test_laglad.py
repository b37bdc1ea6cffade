import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given

from core.exceptions import MissingNodeValue, NegativeBeta, Pre0Mismatch, PreNotPredictable, SpaceMismatch
from core.laglad import (
    NormKind,
    as_node_array,
    constant_process,
    continuous_process,
    eval_at_split,
    make_process,
    running_integral,
    weighted_norm,
)
from core.probspace import build_space
from core.splitstop import lift


def test_valid_process(binomial1):
    X = make_process(binomial1, pre=[1.0, 0.0, 0.0], at=[1.0, 2.0, 0.0])
    assert X.pre.tolist() == [1.0, 0.0, 0.0]
    assert X.to_dict()['at'] == {0: 1.0, 1: 2.0, 2: 0.0}


def test_pre_must_be_predictable(binomial1):
    with pytest.raises(PreNotPredictable) as exc:
        make_process(binomial1, pre=[1.0, 5.0, 4.0], at=[1.0, 2.0, 0.0])
    assert exc.value.violations[0].node == 0


def test_pre_at_root_equals_value(binomial1):
    with pytest.raises(Pre0Mismatch):
        make_process(binomial1, pre=[0.0, 0.0, 0.0], at=[1.0, 2.0, 0.0])


def test_literals_with_string_keys(binomial1):
    values = as_node_array(binomial1, {'0': 1, '1': 2, '2': 3})
    assert values.tolist() == [1.0, 2.0, 3.0]
    with pytest.raises(MissingNodeValue):
        as_node_array(binomial1, {'0': 1, '1': 2})


def test_processes_on_different_spaces_do_not_mix(binomial1):
    other = build_space({'kind': 'binomial', 'steps': 1, 'dt': 1.0})
    with pytest.raises(SpaceMismatch):
        constant_process(binomial1, 1.0) + constant_process(other, 1.0)


def test_continuous_process_has_no_left_jumps(binomial2):
    X = continuous_process(binomial2, np.arange(7.0))
    assert X.pre.tolist() == [0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 2.0]


def test_process_arithmetic(binomial1):
    x = make_process(binomial1, pre=[1.0, 2.0, 2.0], at=[1.0, 3.0, -1.0])
    y = constant_process(binomial1, 0.5)
    assert (x + y).at.tolist() == [1.5, 3.5, -0.5]
    assert (x - y).pre.tolist() == [0.5, 1.5, 1.5]
    assert x.shift(1.0).at.tolist() == [2.0, 4.0, 0.0]
    stopped = x.with_terminal_at_zero()
    assert stopped.at.tolist() == [1.0, 0.0, 0.0]
    assert stopped.pre.tolist() == x.pre.tolist()
    assert x.to_dict()['at'] == {0: 1.0, 1: 3.0, 2: -1.0}

def test_running_integral(binomial2):
    g = np.array([1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0])
    assert running_integral(binomial2, g).tolist() == [0.0, 1.0, 1.0, 3.0, 3.0, 4.0, 4.0]


def test_eval_at_split(binomial1):
    X = make_process(binomial1, pre=[1.0, 5.0, 5.0], at=[1.0, 2.0, 0.0])
    assert eval_at_split(X, lift(binomial1, [1, 2])) == {1: 2.0, 2: 0.0}
    assert eval_at_split(X, lift(binomial1, [1, 2], 'predictable')) == {1: 5.0, 2: 5.0}
    assert eval_at_split(X, lift(binomial1, [0])) == {1: 1.0, 2: 1.0}


def test_eval_at_optional_lift_is_classical_stopping(worked_tree):
    space, xi = worked_tree
    tau = lift(space, [1, 5, 6])
    assert eval_at_split(xi, tau) == {3: 2.0, 4: 2.0, 5: 1.0, 6: 0.0}


def test_norm_examples(binomial1):
    X = make_process(binomial1, pre=[1.0, 1.0, 1.0], at=[1.0, 2.0, 0.0])
    assert weighted_norm(X, 'S2', 0.0) == pytest.approx(2.5)
    assert weighted_norm(np.ones(3), NormKind.H2, 0.0, space=binomial1) == pytest.approx(1.0)
    for kind in NormKind:
        assert weighted_norm(np.zeros(3), kind, 1.0, space=binomial1) == 0.0


def test_negative_beta(binomial1):
    with pytest.raises(NegativeBeta):
        weighted_norm(np.ones(3), 'S2', -1.0, space=binomial1)


node_values = st.lists(st.floats(min_value=-10, max_value=10), min_size=7, max_size=7)


@given(node_values, st.floats(min_value=0, max_value=5), st.floats(min_value=0, max_value=5))
def test_norms_grow_with_beta(values, beta_a, beta_b):
    space = build_space({'kind': 'binomial', 'steps': 2, 'dt': 0.5})
    low, high = sorted((beta_a, beta_b))
    for kind in NormKind:
        assert weighted_norm(np.array(values), kind, low, space=space) <= \
            weighted_norm(np.array(values), kind, high, space=space) * (1 + 1e-12) + 1e-12


@given(node_values, st.floats(min_value=-4, max_value=4))
def test_norms_are_quadratic(values, factor):
    space = build_space({'kind': 'binomial', 'steps': 2, 'dt': 0.5})
    values = np.array(values)
    for kind in NormKind:
        base = weighted_norm(values, kind, 1.0, space=space)
        scaled = weighted_norm(factor * values, kind, 1.0, space=space)
        assert scaled == pytest.approx(factor ** 2 * base, rel=1e-9, abs=1e-9)
