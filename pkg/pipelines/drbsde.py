from .base import BasePipeline, PipelineResult
from core.exceptions import ScenarioError
from services.scenario_service import Scenario
from solvers.drbsde import drbsde_invariants, mokobodzki_probe, solve_drbsde


class DrbsdePipeline(BasePipeline):
    """Doubly reflected BSDE between ξ and ζ; the scenario must carry 'zeta'."""

    task = 'drbsde'

    def process(self, scenario: Scenario) -> PipelineResult:
        pair = scenario.pair
        if pair is None:
            raise ScenarioError("task 'drbsde' needs an upper obstacle 'zeta'")
        space = scenario.space

        solution, trace = solve_drbsde(
            space, pair, scenario.driver, scenario.picard, scenario.rho_T, coupled=scenario.coupled
        )
        verdict = mokobodzki_probe(space, pair, solution.g, scenario.coupled)
        root = space.root

        summary = {
            'Y0': float(solution.Y.at[root]),
            'Z0': float(solution.Z[root]),
            'driver': scenario.driver.to_dict(),
            'picard': trace.to_dict(),
            'coupled_iterations': solution.iterations,
            'mokobodzki': verdict.to_dict(),
            'invariants': drbsde_invariants(solution, pair),
        }
        tables = self.obstacle_tables(scenario)
        tables.update(solution.to_tables())
        return PipelineResult(self.task, space, summary, tables)
