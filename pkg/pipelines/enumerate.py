import numpy as np

from .base import BasePipeline, PipelineResult
from services.scenario_service import Scenario
from core.splitstop import SplitTimeTable, count_split_times, enumerate_split_times


class EnumeratePipeline(BasePipeline):
    """Lists S_0 under ρ^T together with the expected payoff E[ξ_ρ] of each member."""

    task = 'enumerate'

    def process(self, scenario: Scenario) -> PipelineResult:
        space = scenario.space
        rho_T = scenario.rho_T
        count = count_split_times(space, rho_T)
        members = enumerate_split_times(space, rho_T)
        table = SplitTimeTable.from_members(space, members)
        expected = table.payoffs(scenario.xi) @ space.leaf_prob
        optional = table.optional_mask()

        self.logger.info(f"✓ {count} split stopping times ({int(optional.sum())} ordinary)")
        summary = {
            'count': count,
            'ordinary_count': int(optional.sum()),
            'H_T': scenario.h_terminal,
            'members': [
                {**m.to_dict(), 'expected_payoff': float(e)} for m, e in zip(members, expected)
            ],
            'best_expected_payoff': float(np.max(expected)),
        }
        return PipelineResult(self.task, space, summary, self.obstacle_tables(scenario))
