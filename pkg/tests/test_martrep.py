import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given

from core.exceptions import NotAMartingale
from core.probspace import build_space
from solvers.martrep import orthogonal_decompose, representation_residuals


def test_binomial_representation_is_exact(binomial1):
    rep = orthogonal_decompose(binomial1, [0.0, 1.0, -1.0])
    assert rep.Z[0] == 1.0
    assert not rep.d_ortho.any()
    assert rep.stochastic_integral.tolist() == [0.0, 1.0, -1.0]


def test_trinomial_projection(trinomial1):
    rep = orthogonal_decompose(trinomial1, [0.0, 2.0, -1.0, -1.0])
    assert rep.Z[0] == pytest.approx(1.5)
    assert rep.d_ortho[1:] == pytest.approx([0.5, -1.0, 0.5])
    assert trinomial1.expect_children(rep.d_ortho * trinomial1.noise)[0] == pytest.approx(0.0, abs=1e-15)


def test_zero_martingale(trinomial1):
    rep = orthogonal_decompose(trinomial1, np.zeros(4))
    assert not rep.Z.any()
    assert not rep.ortho.any()


def test_rejects_drift(binomial1):
    with pytest.raises(NotAMartingale):
        orthogonal_decompose(binomial1, [0.0, 1.0, 1.0])


def test_degenerate_noise_puts_everything_in_ortho():
    space = build_space({'kind': 'uniform', 'steps': 1, 'dt': 1.0,
                         'probabilities': [0.5, 0.5], 'noise': [0.0, 0.0]})
    rep = orthogonal_decompose(space, [0.0, 1.0, -1.0])
    assert rep.Z[0] == 0.0
    assert rep.ortho.tolist() == [0.0, 1.0, -1.0]


increments = st.lists(st.floats(min_value=-10, max_value=10), min_size=3, max_size=3)


@given(increments, increments)
def test_decomposition_identities(root_moves, up_moves):
    space = build_space({'kind': 'uniform', 'steps': 2, 'dt': 1.0,
                         'probabilities': [0.25, 0.25, 0.5], 'noise': [2.0, 0.0, -1.0]})
    p = np.array([0.25, 0.25, 0.5])

    def centered(moves):
        moves = np.array(moves)
        return moves - p @ moves

    dM = np.zeros(space.n_nodes)
    dM[list(space.children[0])] = centered(root_moves)
    for node in space.children[0]:
        dM[list(space.children[node])] = centered(up_moves)
    M = dM.copy()
    for node in range(1, space.n_nodes):
        M[node] += M[space.parent[node]]

    rep = orthogonal_decompose(space, M)
    residuals = representation_residuals(space, M, rep)
    for name, value in residuals.items():
        assert value < 1e-8, name
