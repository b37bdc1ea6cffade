import json

import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given, settings as hypothesis_settings

from services import InvariantSuite, generate_scenario, parse_scenario, summarize
from solvers.rbsde import rbsde_invariants, solve_lipschitz
from solvers.snell import snell_backward


def generated(steps, branching, seed, h_terminal='empty'):
    document = generate_scenario(steps, branching, seed, mixed=True, max_split_times=2000)
    document['terminal'] = {'H_T': h_terminal}
    return parse_scenario(document)


@pytest.mark.parametrize('seed', range(40))
def test_seeded_suite_has_no_failures(seed):
    summary = summarize(InvariantSuite().check_random(1, seed=seed))
    assert summary['passed'], summary['failed']


# scenarios whose default-β ratios were once dominated by rounding
@pytest.mark.parametrize('steps, seed', [(3, 2381923523), (2, 3686333038), (3, 3324115917)])
def test_contraction_on_rounding_sensitive_scenarios(steps, seed):
    report = InvariantSuite().check_scenario(generated(steps, 3, seed))
    assert report.passed, report.failures
    contraction = report.get('rbsde.contraction')
    assert contraction.passed and contraction.deviation < 1.0


@hypothesis_settings(max_examples=25, deadline=None)
@given(
    st.integers(min_value=0, max_value=2 ** 32 - 1),
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=1, max_value=3),
    st.sampled_from(['empty', 'omega']),
)
def test_generated_trees_satisfy_every_identity(seed, steps, branching, h_terminal):
    scenario = generated(steps, branching, seed, h_terminal)
    space, xi = scenario.space, scenario.xi

    vp = snell_backward(space, xi, scenario.rho_T)
    assert np.all(vp.v.pre >= xi.pre - 1e-9)
    assert np.all(vp.v.at[space.internal] >= xi.at[space.internal] - 1e-9)

    solution, trace = solve_lipschitz(space, xi, scenario.driver, scenario.picard, scenario.rho_T)
    assert trace.converged
    for name, deviation in rbsde_invariants(solution, xi).items():
        assert deviation < 1e-8, name

    report = InvariantSuite().check_scenario(scenario)
    assert report.passed, report.failures


def test_worked_tree_under_omega(scenario_path):
    document = json.loads(scenario_path('worked_tree').read_text())
    document['terminal'] = {'H_T': 'omega'}
    report = InvariantSuite().check_scenario(parse_scenario(document))
    assert report.passed, report.failures
    assert report.get('snell.floor').passed
