import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given, settings as hypothesis_settings

from core.exceptions import DriverSpecError, MokobodzkiFailed, NotAdmissible, UnsupportedTerminal
from core.laglad import continuous_process, make_process
from core.probspace import build_space
from core.splitstop import terminal_split_time
from solvers.drbsde import (
    CoupledParams,
    assemble_solution,
    conditional_tail,
    coupled_iterate,
    drbsde_invariants,
    make_admissible_pair,
    mokobodzki_probe,
    solve_drbsde,
    tilde_obstacles,
)
from solvers.drivers import AffineDriver, ProcessDriver
from solvers.rbsde import ref_operator, uniqueness_bound


def band(space, xi0):
    xi = make_process(space, pre=[xi0, -1.0, -1.0], at=[xi0, 1.0, 0.0])
    zeta = make_process(space, pre=[2.0, 3.0, 3.0], at=[2.0, 1.0, 0.0])
    return make_admissible_pair(xi, zeta)


def test_admissibility(binomial1):
    xi = make_process(binomial1, pre=[1.0, 0.0, 0.0], at=[1.0, 1.0, 0.0])
    zeta = make_process(binomial1, pre=[0.5, 3.0, 3.0], at=[0.5, 1.0, 0.0])
    with pytest.raises(NotAdmissible):
        make_admissible_pair(xi, zeta)

    zeta = make_process(binomial1, pre=[2.0, 3.0, 3.0], at=[2.0, 1.5, 0.0])
    with pytest.raises(NotAdmissible) as exc:
        make_admissible_pair(xi, zeta)
    assert exc.value.violations[0].node == 1


def test_tilde_obstacles(binomial1):
    pair = band(binomial1, 1.0)
    tilde = tilde_obstacles(binomial1, pair, 0.0)
    assert tilde.xi.at.tolist() == [0.5, 0.0, 0.0]
    assert tilde.zeta.at.tolist() == [1.5, 0.0, 0.0]
    assert tilde.xi.pre[1:].tolist() == [-1.5, -1.5]

    with pytest.raises(UnsupportedTerminal):
        tilde_obstacles(binomial1, pair, 0.0, terminal_split_time(binomial1, 'omega'))


def test_martingale_obstacle_has_zero_tilde(binomial2):
    values = np.array([1.0, 2.0, 0.0, 3.0, 1.0, 0.5, -0.5])
    xi = continuous_process(binomial2, values)
    pair = make_admissible_pair(xi, xi)
    tilde = tilde_obstacles(binomial2, pair, 0.0)
    assert not tilde.xi.at.any()
    assert not tilde.xi.pre.any()


def test_conditional_tail_includes_driver(binomial1):
    K = conditional_tail(binomial1, np.array([1.0, 0.0]), np.array([0.25, 0.0, 0.0]))
    assert K.at.tolist() == [0.75, 1.0, 0.0]
    assert K.pre.tolist() == [0.75, 0.5, 0.5]


def test_coupled_iteration_binding(binomial1):
    tilde = tilde_obstacles(binomial1, band(binomial1, 1.0), 0.0)
    J, Jbar, trace = coupled_iterate(binomial1, tilde)
    assert trace.increments == [0.5, 0.0, 0.0]
    assert trace.iterations == 3
    assert trace.monotonicity_defect == 0.0
    assert J.at.tolist() == [0.5, 0.0, 0.0]
    assert not Jbar.at.any()


def test_coupled_iteration_non_binding(binomial1):
    pair = band(binomial1, 0.0)
    tilde = tilde_obstacles(binomial1, pair, 0.0)
    assert tilde.xi.at[0] == -0.5
    assert tilde.zeta.at[0] == 1.5
    J, Jbar, trace = coupled_iterate(binomial1, tilde)
    assert not J.at.any() and not Jbar.at.any()
    assert trace.iterations == 2


def test_binding_solution(binomial1):
    pair = band(binomial1, 1.0)
    solution, trace = solve_drbsde(binomial1, pair, ProcessDriver(0.0))
    assert trace.iterations == 1
    assert solution.Y.at[0] == 1.0
    assert solution.J.at[0] == 0.5
    assert solution.dB.tolist() == [0.5, 0.0, 0.0]
    assert not solution.dA.any()
    assert not solution.dA_prime.any() and not solution.dB_prime.any()
    assert solution.Z[0] == pytest.approx(0.5)
    for name, deviation in drbsde_invariants(solution, pair).items():
        assert deviation < 1e-12, name


def test_non_binding_solution(binomial1):
    pair = band(binomial1, 0.0)
    solution, _ = solve_drbsde(binomial1, pair, ProcessDriver(0.0))
    assert solution.Y.at[0] == 0.5
    for increments in (solution.dA, solution.dB, solution.dA_prime, solution.dB_prime):
        assert not increments.any()


def test_degenerate_band(binomial1):
    xi = make_process(binomial1, pre=[2.0, 1.5, 1.5], at=[2.0, 2.0, 0.0])
    pair = make_admissible_pair(xi, xi)
    tilde = tilde_obstacles(binomial1, pair, 0.0)
    J, Jbar, _ = coupled_iterate(binomial1, tilde)
    assert J.at.tolist() == tilde.xi.at.tolist()
    assert J.pre.tolist() == [1.0, 0.5, 0.5]

    solution = assemble_solution(binomial1, J, Jbar, pair, 0.0)
    assert solution.Y.at.tolist() == xi.at.tolist()
    assert solution.Y.pre.tolist() == xi.pre.tolist()
    assert solution.Z[0] == pytest.approx(1.0)
    assert solution.dA.tolist() == [0.0, 0.5, 0.5]
    assert solution.dB.tolist() == [0.5, 0.0, 0.0]
    assert not solution.A_prime.any() and not solution.B_prime.any()


def test_mokobodzki_probe(binomial1):
    pair = band(binomial1, 1.0)
    verdict = mokobodzki_probe(binomial1, pair, 0.0)
    assert verdict.holds_at_tolerance
    H, Hbar = verdict.witness
    assert np.all(H.at >= 0) and np.all(Hbar.at >= 0)

    truncated = mokobodzki_probe(binomial1, pair, 0.0, CoupledParams(max_iter=1))
    assert not truncated.holds_at_tolerance
    assert truncated.witness is None


def test_mokobodzki_zero_tilde(binomial1):
    xi = continuous_process(binomial1, np.array([1.0, 2.0, 0.0]))
    pair = make_admissible_pair(xi, xi)
    verdict = mokobodzki_probe(binomial1, pair, 0.0)
    assert verdict.holds_at_tolerance
    assert verdict.iterations == 2


def test_truncated_coupled_iteration_fails_the_solve(binomial1):
    with pytest.raises(MokobodzkiFailed):
        solve_drbsde(binomial1, band(binomial1, 1.0), ProcessDriver(0.0), coupled=CoupledParams(max_iter=1))


def test_lipschitz_driver(binomial1):
    pair = band(binomial1, 1.0)
    driver = AffineDriver(b=-0.1, lipschitz_bound=0.1)
    solution, trace = solve_drbsde(binomial1, pair, driver)
    assert trace.converged
    start = (ref_operator(binomial1, pair.xi).at, np.zeros(3))
    other, _ = solve_drbsde(binomial1, pair, driver, init=start)
    assert other.Y.at == pytest.approx(solution.Y.at, abs=uniqueness_bound(trace.tol, 1e-10, solution.Y.at))

    with pytest.raises(DriverSpecError):
        solve_drbsde(binomial1, pair, AffineDriver(b=-0.1))
    with pytest.raises(UnsupportedTerminal):
        solve_drbsde(binomial1, pair, driver, rho_T=terminal_split_time(binomial1, 'omega'))


def test_independent_driver_matches_assembly(binomial1):
    pair = band(binomial1, 1.0)
    g = np.array([0.3, 0.0, 0.0])
    solution, trace = solve_drbsde(binomial1, pair, ProcessDriver(g))
    J, Jbar, _ = coupled_iterate(binomial1, tilde_obstacles(binomial1, pair, g))
    assembled = assemble_solution(binomial1, J, Jbar, pair, g)
    assert trace.iterations == 1
    assert solution.Y.at == pytest.approx(assembled.Y.at)


gaps = st.lists(st.floats(min_value=0, max_value=3), min_size=7, max_size=7)
values = st.lists(st.floats(min_value=-5, max_value=5), min_size=7, max_size=7)


@hypothesis_settings(max_examples=30, deadline=None)
@given(values, values, gaps, gaps)
def test_random_bands_satisfy_every_identity(at, block, gap_at, gap_block):
    space = build_space({'kind': 'binomial', 'steps': 2, 'dt': 0.5})
    leaves = space.leaves
    at, block = np.array(at), np.array(block)
    gap_at, gap_block = np.array(gap_at), np.array(gap_block)
    gap_at[leaves] = 0.0

    def process(values_at, values_block):
        pre = space.broadcast_parent(values_block)
        pre[space.root] = values_at[space.root]
        return make_process(space, pre, values_at)

    pair = make_admissible_pair(process(at, block), process(at + gap_at, block + gap_block))
    solution, _ = solve_drbsde(space, pair, ProcessDriver(0.0))
    for name, deviation in drbsde_invariants(solution, pair).items():
        assert deviation < 1e-8, name
    assert mokobodzki_probe(space, pair, 0.0).holds_at_tolerance


@hypothesis_settings(max_examples=30, deadline=None)
@given(values, values, gaps, gaps, st.floats(min_value=-1, max_value=1))
def test_coupled_iterates_sit_below_the_witness(at, block, gap_at, gap_block, g0):
    space = build_space({'kind': 'binomial', 'steps': 2, 'dt': 0.5})
    leaves = space.leaves
    at, block = np.array(at), np.array(block)
    gap_at, gap_block = np.array(gap_at), np.array(gap_block)
    gap_at[leaves] = 0.0

    def process(values_at, values_block):
        pre = space.broadcast_parent(values_block)
        pre[space.root] = values_at[space.root]
        return make_process(space, pre, values_at)

    pair = make_admissible_pair(process(at, block), process(at + gap_at, block + gap_block))
    g = np.array([g0, -g0, g0 / 2, 0.0, 0.0, 0.0, 0.0])
    verdict = mokobodzki_probe(space, pair, g)
    assert verdict.holds_at_tolerance
    H, Hbar = verdict.witness
    diff = H - Hbar
    assert np.all(diff.at >= pair.xi.at - 1e-9) and np.all(diff.at <= pair.zeta.at + 1e-9)

    J, Jbar, _ = coupled_iterate(space, tilde_obstacles(space, pair, g))
    for smallest, witness in ((J, H), (Jbar, Hbar)):
        assert np.all(smallest.at <= witness.at + 1e-9)
        assert np.all(smallest.pre <= witness.pre + 1e-9)
