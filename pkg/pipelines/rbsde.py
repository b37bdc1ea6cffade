from .base import BasePipeline, PipelineResult
from services.scenario_service import Scenario
from solvers.rbsde import rbsde_invariants, solve_lipschitz


class RbsdePipeline(BasePipeline):
    """Reflected BSDE with the lower obstacle ξ and the scenario driver."""

    task = 'rbsde'

    def process(self, scenario: Scenario) -> PipelineResult:
        space = scenario.space
        solution, trace = solve_lipschitz(space, scenario.xi, scenario.driver, scenario.picard, scenario.rho_T)
        root = space.root

        summary = {
            'Y0': float(solution.Y.at[root]),
            'Z0': float(solution.Z[root]),
            'H_T': scenario.h_terminal,
            'driver': scenario.driver.to_dict(),
            'picard': trace.to_dict(),
            'invariants': rbsde_invariants(solution, scenario.xi),
        }
        tables = self.obstacle_tables(scenario)
        tables.update(solution.to_tables())
        return PipelineResult(self.task, space, summary, tables)
