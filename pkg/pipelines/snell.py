from .base import BasePipeline, PipelineResult
from services.scenario_service import Scenario
from solvers.snell import classical_snell_backward, mertens_decompose, skorokhod_report, snell_backward


class SnellPipeline(BasePipeline):
    """
    Snell envelope over split stopping times plus its Mertens decomposition.

    The classical value over ordinary stopping times is reported next to v0
    (it can only be smaller).
    """

    task = 'snell'

    def process(self, scenario: Scenario) -> PipelineResult:
        space = scenario.space
        vp = snell_backward(space, scenario.xi, scenario.rho_T)
        dec = mertens_decompose(space, vp)
        skorokhod = skorokhod_report(space, vp, scenario.xi, dec)
        classical = classical_snell_backward(space, scenario.xi)
        root = space.root

        self.logger.info(f"✓ v0 = {vp.v.at[root]:.6g} (ordinary stopping times: {classical[root]:.6g})")
        summary = {
            'v0': float(vp.v.at[root]),
            'vplus0': float(vp.vplus.at[root]),
            'classical_v0': float(classical[root]),
            'H_T': scenario.h_terminal,
            'skorokhod': skorokhod.to_dict(),
        }
        tables = self.obstacle_tables(scenario)
        tables.update({
            'v_pre': vp.v.pre,
            'v_at': vp.v.at,
            'vplus': vp.vplus.at,
            'classical': classical,
        })
        tables.update(dec.to_tables())
        return PipelineResult(self.task, space, summary, tables)
