import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given, settings as hypothesis_settings

from core.exceptions import LambdaOutOfRange, NegativeObstacle, NotAMartingale, NotASupermartingale, UnsupportedTerminal
from core.laglad import constant_process, continuous_process, make_process
from core.probspace import build_space
from core.splitstop import (
    SplitStoppingTime,
    SplitTimeTable,
    enumerate_split_times,
    lift,
    terminal_split_time,
)
from solvers.snell import (
    MertensDecomposition,
    aggregation_deviation,
    classical_snell_backward,
    martingale_interval_check,
    martingale_interval_deviation,
    mertens_decompose,
    mertens_reconstruct,
    mertens_synthesize,
    optimal_split_time,
    skorokhod_report,
    snell_backward,
    strict_value_brute,
    supermartingale_gap,
    value_brute,
)


def test_worked_tree_values(worked_tree):
    space, xi = worked_tree
    vp = snell_backward(space, xi)
    assert vp.v.at[0] == 5.0
    assert vp.vplus.at[0] == 5.0
    assert vp.v.at[[1, 2]].tolist() == [2.0, 0.5]
    assert vp.vplus.at[[1, 2]].tolist() == [2.0, 0.5]
    assert vp.v.pre[[1, 2]].tolist() == [5.0, 5.0]
    assert classical_snell_backward(space, xi)[0] == 1.25


def test_worked_tree_brute_force(worked_tree):
    space, xi = worked_tree
    root = lift(space, [0])
    assert value_brute(space, xi, root) == {(0,): 5.0}
    assert value_brute(space, xi, root, family='optional') == {(0,): 1.25}
    assert strict_value_brute(space, xi, root) == {(0,): 5.0}
    assert strict_value_brute(space, xi, lift(space, [1, 2]))[(1,)] == 2.0

    terminal = terminal_split_time(space)
    assert value_brute(space, xi, terminal) == {(3,): 3.0, (4,): 1.0, (5,): 1.0, (6,): 0.0}

    best = optimal_split_time(space, xi, root)
    assert best.to_dict() == {'stop_nodes': [1, 2], 'pre_nodes': [1, 2]}


def test_worked_tree_aggregates(worked_tree):
    space, xi = worked_tree
    vp = snell_backward(space, xi)
    table = SplitTimeTable.from_members(space, enumerate_split_times(space))
    plain = aggregation_deviation(space, xi, vp, table=table)
    strict = aggregation_deviation(space, xi, vp, table=table, strict=True)
    assert plain.max_deviation == pytest.approx(0.0, abs=1e-12)
    assert plain.checked == 12
    assert strict.max_deviation == pytest.approx(0.0, abs=1e-12)


def test_constant_reward_is_its_own_envelope(binomial2):
    xi = constant_process(binomial2, 3.0)
    vp = snell_backward(binomial2, xi)
    assert np.all(vp.v.at == 3.0)
    assert np.all(vp.v.pre == 3.0)
    assert np.all(vp.vplus.at == 3.0)
    dec = mertens_decompose(binomial2, vp)
    assert not dec.M.any() and not dec.A.any() and not dec.B.any()


def test_martingale_reward(binomial1):
    xi = make_process(binomial1, pre=[1.0, 0.0, 0.0], at=[1.0, 1.5, 0.5])
    vp = snell_backward(binomial1, xi)
    assert vp.v.at.tolist() == xi.at.tolist()


def test_general_terminal_rejected(binomial2):
    xi = constant_process(binomial2, 0.0)
    general = SplitStoppingTime(binomial2, frozenset({3, 4, 5, 6}), frozenset({3, 4}))
    with pytest.raises(UnsupportedTerminal):
        snell_backward(binomial2, xi, general)


def test_mertens_worked_tree(worked_tree):
    space, xi = worked_tree
    vp = snell_backward(space, xi)
    dec = mertens_decompose(space, vp)
    assert dec.dA.tolist() == [0.0, 3.75, 3.75, 0.0, 0.0, 0.0, 0.0]
    assert not dec.dB.any()
    assert dec.dM[[1, 2]].tolist() == [0.75, -0.75]

    rebuilt = mertens_reconstruct(space, 5.0, dec)
    assert rebuilt.at == pytest.approx(vp.v.at)
    assert rebuilt.pre == pytest.approx(vp.v.pre)
    assert skorokhod_report(space, vp, xi, dec).max_violation == 0.0


def test_mertens_one_step(binomial1):
    xi = make_process(binomial1, pre=[1.0, 0.0, 0.0], at=[1.0, 2.0, 0.0])
    vp = snell_backward(binomial1, xi)
    dec = mertens_decompose(binomial1, vp)
    assert vp.v.at[0] == 1.0
    assert dec.dA[1] == 0.0
    assert dec.dB[0] == 0.0
    assert dec.dM[1:].tolist() == [1.0, -1.0]


def test_skorokhod_flags_misplaced_compensator(worked_tree):
    space, xi = worked_tree
    vp = snell_backward(space, xi)
    dec = mertens_decompose(space, vp)
    dA = dec.dA.copy()
    dA[[1, 2]] = 0.0
    dA[[3, 4]] = 1.0
    corrupted = MertensDecomposition(space, dec.dM, dA, dec.dB)

    report = skorokhod_report(space, vp, xi, corrupted)
    assert report.max_a_violation == pytest.approx(2.0)
    assert set(report.violating_nodes) == {3, 4}
    assert not report.passed()


def test_synthesize_validates_increments(binomial1):
    with pytest.raises(NotAMartingale):
        mertens_synthesize(binomial1, 1.0, dM=[0.0, 1.0, 1.0], dA=np.zeros(3), dB=np.zeros(3))
    with pytest.raises(NotASupermartingale):
        mertens_synthesize(binomial1, 1.0, dM=np.zeros(3), dA=[0.0, 1.0, 2.0], dB=np.zeros(3))
    with pytest.raises(NotASupermartingale):
        mertens_synthesize(binomial1, 1.0, dM=np.zeros(3), dA=np.zeros(3), dB=[0.0, 0.5, 0.0])


def test_martingale_interval(worked_tree):
    space, xi = worked_tree
    vp = snell_backward(space, xi)
    for lam in (0.1, 0.5, 0.9):
        assert martingale_interval_check(space, vp, xi, [0], lam)
        assert martingale_interval_check(space, vp, xi, lift(space, [1, 2]), lam)
    with pytest.raises(LambdaOutOfRange):
        martingale_interval_deviation(space, vp, xi, [0], 1.0)
    with pytest.raises(NegativeObstacle):
        martingale_interval_deviation(space, vp, xi.shift(-1.0), [0], 0.5)


def two_step_reward(space, block, at):
    at = np.asarray(at, dtype=float)
    pre = space.broadcast_parent(np.asarray(block, dtype=float))
    pre[space.root] = at[space.root]
    return make_process(space, pre, at)


rewards = st.tuples(
    st.lists(st.floats(min_value=-5, max_value=5), min_size=7, max_size=7),
    st.lists(st.floats(min_value=-5, max_value=5), min_size=7, max_size=7),
)


@hypothesis_settings(max_examples=40, deadline=None)
@given(rewards)
def test_backward_recursion_aggregates_the_value_family(reward):
    space = build_space({'kind': 'binomial', 'steps': 2, 'dt': 1.0})
    xi = two_step_reward(space, *reward)
    vp = snell_backward(space, xi)
    table = SplitTimeTable.from_members(space, enumerate_split_times(space))

    assert aggregation_deviation(space, xi, vp, table=table).max_deviation < 1e-9
    assert aggregation_deviation(space, xi, vp, table=table, strict=True).max_deviation < 1e-9
    assert supermartingale_gap(vp.v, table)[0] < 1e-9
    assert np.all(vp.v.at >= classical_snell_backward(space, xi) - 1e-12)


@hypothesis_settings(max_examples=40, deadline=None)
@given(rewards, st.lists(st.floats(min_value=0, max_value=3), min_size=7, max_size=7))
def test_envelope_is_monotone_in_the_reward(reward, bump):
    space = build_space({'kind': 'binomial', 'steps': 2, 'dt': 1.0})
    xi = two_step_reward(space, *reward)
    higher = xi + continuous_process(space, np.array(bump))
    low, high = snell_backward(space, xi).v, snell_backward(space, higher).v
    assert np.all(low.at <= high.at + 1e-12)
    assert np.all(low.pre <= high.pre + 1e-12)


increments = st.tuples(
    st.floats(min_value=0, max_value=2), st.floats(min_value=0, max_value=2),
    st.floats(min_value=0, max_value=2), st.floats(min_value=0, max_value=2),
    st.floats(min_value=-2, max_value=2), st.floats(min_value=-2, max_value=2),
    st.floats(min_value=-2, max_value=2),
)


@hypothesis_settings(max_examples=40, deadline=None)
@given(increments)
def test_synthesized_supermartingales_satisfy_optional_sampling(parts):
    space = build_space({'kind': 'binomial', 'steps': 2, 'dt': 1.0})
    a1, a2, a3, b0, m1, m3, m5 = parts
    dA = [0.0, a1, a1, a2, a2, a3, a3]
    dB = [b0, b0 / 2, b0 / 3, 0.0, 0.0, 0.0, 0.0]
    dM = [0.0, m1, -m1, m3, -m3, m5, -m5]
    table = SplitTimeTable.from_members(space, enumerate_split_times(space))

    X = mertens_synthesize(space, 1.0, dM, dA, dB)
    assert supermartingale_gap(X, table)[0] < 1e-9

    martingale = mertens_synthesize(space, 1.0, dM, np.zeros(7), np.zeros(7))
    assert supermartingale_gap(martingale, table)[1] < 1e-9


@hypothesis_settings(max_examples=40, deadline=None)
@given(rewards, increments, st.sampled_from(['empty', 'omega']))
def test_envelope_is_the_smallest_dominating_supermartingale(reward, parts, h_terminal):
    space = build_space({'kind': 'binomial', 'steps': 2, 'dt': 1.0})
    xi = two_step_reward(space, *reward)
    a1, a2, a3, b0, m1, m3, m5 = parts
    dA = [0.0, a1, a1, a2, a2, a3, a3]
    dB = [b0, b0 / 2, b0 / 3, 0.0, 0.0, 0.0, 0.0]
    dM = [0.0, m1, -m1, m3, -m3, m5, -m5]
    U = mertens_synthesize(space, 0.0, dM, dA, dB)
    # lift U until it dominates the reward on both channels
    U = U.shift(max(0.0, float(np.max(xi.at - U.at)), float(np.max(xi.pre - U.pre))))

    v = snell_backward(space, xi, terminal_split_time(space, h_terminal)).v
    # under (Ω, T) the terminal at channel carries ξ_{T-}, which U need not dominate
    at_nodes = space.internal if h_terminal == 'omega' else np.arange(space.n_nodes)
    assert np.all(v.at[at_nodes] <= U.at[at_nodes] + 1e-9)
    assert np.all(v.pre <= U.pre + 1e-9)
