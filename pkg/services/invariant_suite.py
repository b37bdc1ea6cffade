"""
Cross-module invariant suite run by `snellforge check`.

Every check produces a named InvariantResult with its largest deviation; a
suite passes when every non-skipped result passes.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from config import settings
from core.exceptions import ScenarioError, SnellforgeError
from core.probspace import validate_space
from core.splitstop import SplitTimeTable, count_split_times, enumerate_split_times, lift
from solvers.drbsde import coupled_iterate, drbsde_invariants, mokobodzki_probe, solve_drbsde, tilde_obstacles
from solvers.rbsde import (
    certify_contraction,
    rbsde_invariants,
    ref_operator,
    reward_at,
    solve_lipschitz,
    uniqueness_bound,
)
from solvers.snell import (
    aggregation_deviation,
    martingale_interval_deviation,
    mertens_decompose,
    mertens_reconstruct,
    skorokhod_report,
    snell_backward,
    supermartingale_gap,
)
from utils import get_logger, max_abs, negative_part, positive_part, scaled_tolerance
from .generator import generate_scenario
from .report_writer import read_report
from .scenario_service import Scenario, parse_scenario

logger = get_logger(__name__)

LAMBDAS = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass
class InvariantResult:
    name: str
    deviation: Optional[float]
    tolerance: float
    passed: bool
    skipped: bool = False
    note: str = ''

    def to_dict(self) -> dict:
        out = {
            'name': self.name,
            'deviation': self.deviation,
            'tolerance': self.tolerance,
            'passed': self.passed,
            'skipped': self.skipped,
        }
        if self.note:
            out['note'] = self.note
        return out


@dataclass
class SuiteReport:
    """Results of one suite run over one scenario (or one replayed report)."""

    label: str
    results: List[InvariantResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed or r.skipped for r in self.results)

    @property
    def failures(self) -> List[str]:
        return [r.name for r in self.results if not (r.passed or r.skipped)]

    def get(self, name: str) -> InvariantResult:
        for result in self.results:
            if result.name == name:
                return result
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            'label': self.label,
            'passed': self.passed,
            'failures': self.failures,
            'results': [r.to_dict() for r in self.results],
        }


class InvariantSuite:
    """
    Runs the invariant checks on scenarios.

    Args:
        tol: Relative tolerance of the checks (default settings.INVARIANT_TOL)
        enum_cap: Largest |S_0| for the brute-force oracles (default settings.CHECK_ENUM_CAP)
        lambdas: λ values of the martingale-interval check
    """

    def __init__(self, tol: Optional[float] = None, enum_cap: Optional[int] = None, lambdas: Sequence[float] = LAMBDAS):
        self.tol = settings.INVARIANT_TOL if tol is None else tol
        self.enum_cap = settings.CHECK_ENUM_CAP if enum_cap is None else enum_cap
        self.lambdas = tuple(lambdas)

    def _record(
        self,
        report: SuiteReport,
        name: str,
        deviation: float,
        tolerance: float,
        passed: Optional[bool] = None,
        note: str = '',
    ) -> None:
        deviation = float(deviation)
        ok = deviation <= tolerance if passed is None else bool(passed)
        report.results.append(InvariantResult(name, deviation, tolerance, ok, note=note))
        if not ok:
            logger.warning(f"✗ {report.label}: {name} deviation {deviation:.3e} > {tolerance:.3e}")

    def _record_certificate(self, report: SuiteReport, name: str, cert: Any) -> None:
        worst = cert.max_ratio if cert.max_ratio is not None else 0.0
        note = f"β={cert.beta:g}, {cert.trace.iterations} iteration(s), {cert.trace.converged_by}"
        self._record(report, name, worst, 1.0, passed=cert.certified, note=note)

    def _skip(self, report: SuiteReport, name: str, note: str) -> None:
        report.results.append(InvariantResult(name, None, 0.0, False, skipped=True, note=note))

    def _guarded(self, report: SuiteReport, section: str, check: Callable[[], None]) -> None:
        try:
            check()
        except SnellforgeError as e:
            report.results.append(InvariantResult(f"{section}.error", None, 0.0, False, note=str(e)))
            logger.warning(f"✗ {report.label}: {section} raised {type(e).__name__}: {e}")

    def check_scenario(self, scenario: Scenario) -> SuiteReport:
        """Run every applicable check on a scenario."""
        report = SuiteReport(scenario.name)
        violations = validate_space(scenario.space)
        self._record(report, 'space.valid', len(violations), 0.0)

        self._guarded(report, 'snell', lambda: self._snell_checks(report, scenario))
        self._guarded(report, 'rbsde', lambda: self._rbsde_checks(report, scenario))
        if scenario.zeta is not None:
            self._guarded(report, 'drbsde', lambda: self._drbsde_checks(report, scenario))

        status = '✓' if report.passed else '✗'
        logger.info(f"{status} {scenario.name}: {len(report.results)} checks, {len(report.failures)} failed")
        return report

    def _snell_checks(self, report: SuiteReport, scenario: Scenario) -> None:
        space, xi, rho_T = scenario.space, scenario.xi, scenario.rho_T
        vp = snell_backward(space, xi, rho_T)
        dec = mertens_decompose(space, vp)
        eps = scaled_tolerance(self.tol, xi.at, xi.pre)

        rebuilt = mertens_reconstruct(space, float(vp.v.at[space.root]), dec)
        self._record(report, 'snell.mertens_reconstruction',
                     max(max_abs(rebuilt.at - vp.v.at), max_abs(rebuilt.pre - vp.v.pre)), eps)
        reward = reward_at(space, xi, rho_T)
        self._record(report, 'snell.floor',
                     max(max_abs(positive_part(reward - vp.v.at)), max_abs(positive_part(xi.pre - vp.v.pre))), eps)
        self._record(report, 'snell.skorokhod', skorokhod_report(space, vp, xi, dec).max_violation, eps)

        count = count_split_times(space, rho_T)
        if count > self.enum_cap:
            note = f"{count} split stopping times exceed the check cap {self.enum_cap}"
            for name in ('snell.aggregation', 'snell.strict_aggregation', 'snell.supermartingale'):
                self._skip(report, name, note)
        else:
            table = SplitTimeTable.from_members(space, enumerate_split_times(space, rho_T))
            plain = aggregation_deviation(space, xi, vp, rho_T, table)
            strict = aggregation_deviation(space, xi, vp, rho_T, table, strict=True)
            self._record(report, 'snell.aggregation', plain.max_deviation, eps)
            self._record(report, 'snell.strict_aggregation', strict.max_deviation, eps,
                         note=f"{strict.skipped} split times with G ⊋ H^T skipped" if strict.skipped else '')
            self._record(report, 'snell.supermartingale', supermartingale_gap(vp.v, table)[0], eps)

        # the λ check needs ξ ≥ 0
        shifted = xi.shift(max(0.0, -float(min(xi.at.min(), xi.pre.min()))))
        vp_shifted = snell_backward(space, shifted, rho_T)
        theta = lift(space, [space.root], 'optional')
        worst = max(martingale_interval_deviation(space, vp_shifted, shifted, theta, lam) for lam in self.lambdas)
        self._record(report, 'snell.martingale_interval', worst, scaled_tolerance(self.tol, shifted.at, shifted.pre))

    def _rbsde_checks(self, report: SuiteReport, scenario: Scenario) -> None:
        space, xi, driver = scenario.space, scenario.xi, scenario.driver
        solution, trace = solve_lipschitz(space, xi, driver, scenario.picard, scenario.rho_T)
        eps = scaled_tolerance(self.tol, xi.at, xi.pre, solution.Y.at)
        for name, deviation in rbsde_invariants(solution, xi).items():
            self._record(report, f"rbsde.{name}", deviation, eps)

        if not driver.depends_on_solution:
            self._skip(report, 'rbsde.contraction', 'driver does not depend on (y, z)')
            self._skip(report, 'rbsde.uniqueness', 'driver does not depend on (y, z)')
            return
        picard = scenario.picard
        cert = certify_contraction(space, xi, driver, rho_T=scenario.rho_T, tol=picard.tol, max_iter=picard.max_iter)
        self._record_certificate(report, 'rbsde.contraction', cert)

        start = (ref_operator(space, xi, scenario.rho_T).at, np.zeros(space.n_nodes))
        other, _ = solve_lipschitz(space, xi, driver, picard, scenario.rho_T, init=start)
        gap = max(max_abs(other.Y.at - solution.Y.at), max_abs(other.Z - solution.Z))
        self._record(report, 'rbsde.uniqueness', gap, uniqueness_bound(trace.tol, self.tol, solution.Y.at))

    def _drbsde_checks(self, report: SuiteReport, scenario: Scenario) -> None:
        if scenario.h_terminal != 'empty':
            self._skip(report, 'drbsde', 'doubly reflected solver supports H_T = empty only')
            return
        space, pair, driver = scenario.space, scenario.pair, scenario.driver
        solution, trace = solve_drbsde(space, pair, driver, scenario.picard, coupled=scenario.coupled)
        eps = scaled_tolerance(self.tol, pair.xi.at, pair.zeta.at, solution.Y.at)
        for name, deviation in drbsde_invariants(solution, pair).items():
            self._record(report, f"drbsde.{name}", deviation, eps)

        tilde = tilde_obstacles(space, pair, solution.g)
        _, _, coupled = coupled_iterate(space, tilde, scenario.coupled)
        self._record(report, 'drbsde.monotone_iterates', coupled.monotonicity_defect, eps)

        verdict = mokobodzki_probe(space, pair, solution.g, scenario.coupled)
        self._record(report, 'drbsde.mokobodzki', verdict.max_witness_defect or 0.0, eps,
                     passed=verdict.holds_at_tolerance, note=verdict.note)

        if driver.depends_on_solution:
            def solver(space_, pair_, driver_, params, rho_T):
                return solve_drbsde(space_, pair_, driver_, params, rho_T, coupled=scenario.coupled)

            picard = scenario.picard
            cert = certify_contraction(space, pair, driver, tol=picard.tol, max_iter=picard.max_iter, solver=solver)
            self._record_certificate(report, 'drbsde.contraction', cert)

    def check_random(self, count: int, seed: int, max_steps: int = 3, branching: int = 3) -> List[SuiteReport]:
        """
        Run the suite on `count` generated scenarios; the sub-seeds derive from `seed`.
        """
        rng = np.random.default_rng(seed)
        reports = []
        for sub_seed in rng.integers(0, 2 ** 32, size=count):
            steps = int(rng.integers(1, max_steps + 1))
            document = generate_scenario(steps, branching, int(sub_seed), mixed=True, max_split_times=self.enum_cap)
            reports.append(self.check_scenario(parse_scenario(document)))
        return reports

    def replay(self, out_dir: Union[str, Path]) -> SuiteReport:
        """
        Re-check a written report: the identities are evaluated on the table
        columns as written, and the columns are compared with a fresh solve
        of the embedded scenario.
        """
        summary, tables = read_report(out_dir)
        scenario = parse_scenario(summary['scenario'])
        task = summary.get('task')
        report = SuiteReport(f"replay:{Path(out_dir).name}")
        self._guarded(report, 'replay', lambda: self._replay_checks(report, scenario, task, tables))
        return report

    def _replay_checks(self, report: SuiteReport, scenario: Scenario, task: str, tables: Dict[str, np.ndarray]) -> None:
        space, xi = scenario.space, scenario.xi
        eps = scaled_tolerance(self.tol, xi.at, xi.pre)
        reward = reward_at(space, xi, scenario.rho_T)
        root_mask = np.arange(space.n_nodes) != space.root

        def column(name: str) -> np.ndarray:
            if name not in tables:
                raise ScenarioError(f"report has no column '{name}'")
            return tables[name]

        if task == 'snell':
            v_at, v_pre = column('v_at'), column('v_pre')
            dA, dB = _increments(space, column('A')), _increments_at(space, column('B'))
            self._record(report, 'replay.floor',
                         max(max_abs(positive_part(reward - v_at)), max_abs(positive_part(xi.pre - v_pre))), eps)
            self._record(report, 'replay.skorokhod',
                         max(max_abs((v_at - reward) * dB), max_abs(((v_pre - xi.pre) * dA)[root_mask])), eps)
            fresh = snell_backward(space, xi, scenario.rho_T)
            self._record(report, 'replay.reproduction',
                         max(max_abs(fresh.v.at - v_at), max_abs(fresh.v.pre - v_pre)), eps)
        elif task in ('rbsde', 'drbsde'):
            y_at, y_pre, y_plus = column('Y_at'), column('Y_pre'), column('Y_plus')
            eps = scaled_tolerance(self.tol, xi.at, xi.pre, y_at)
            self._record(report, 'replay.floor',
                         max(max_abs(positive_part(reward - y_at)), max_abs(positive_part(xi.pre - y_pre))), eps)
            right = y_plus - y_at
            dA = _increments(space, column('A'))
            dB = _increments_at(space, column('B'))
            if task == 'rbsde':
                self._record(report, 'replay.right_jump', max_abs(y_at - np.maximum(reward, y_plus)), eps)
                fresh, _ = solve_lipschitz(space, xi, scenario.driver, scenario.picard, scenario.rho_T)
            else:
                zeta = scenario.zeta
                self._record(report, 'replay.sandwich',
                             max(max_abs(positive_part(y_at - zeta.at)), max_abs(positive_part(y_pre - zeta.pre))), eps)
                self._record(report, 'replay.vv', max_abs(y_at - np.minimum(np.maximum(y_plus, xi.at), zeta.at)), eps)
                self._record(report, 'replay.jump_b', max_abs(dB - negative_part(right)), eps)
                fresh, _ = solve_drbsde(space, scenario.pair, scenario.driver, scenario.picard, coupled=scenario.coupled)
            self._record(report, 'replay.skorokhod',
                         max(max_abs((y_at - reward) * dB), max_abs(((y_pre - xi.pre) * dA)[root_mask])), eps)
            self._record(report, 'replay.reproduction',
                         max(max_abs(fresh.Y.at - y_at), max_abs(fresh.Y.pre - y_pre)), eps)
        else:
            self._skip(report, 'replay', f"task '{task}' carries no solution tables")


def _parent_values(space: Any, values: np.ndarray) -> np.ndarray:
    out = space.broadcast_parent(values)
    out[space.root] = 0.0
    return out


def _increments(space: Any, cumulative: np.ndarray) -> np.ndarray:
    """Edge increments of a cumulative node array (0 at the root)."""
    out = np.asarray(cumulative, dtype=float) - space.broadcast_parent(cumulative)
    out[space.root] = 0.0
    return out


def _increments_at(space: Any, cumulative: np.ndarray) -> np.ndarray:
    """Node increments of a cumulative array whose root entry is its own jump."""
    return np.asarray(cumulative, dtype=float) - _parent_values(space, cumulative)


def summarize(reports: Sequence[SuiteReport]) -> Dict[str, Any]:
    """Aggregate several suite reports: pass flag, failures and the worst deviation per invariant."""
    worst: Dict[str, float] = {}
    for report in reports:
        for result in report.results:
            if result.deviation is not None:
                worst[result.name] = max(worst.get(result.name, 0.0), result.deviation)
    return {
        'passed': all(r.passed for r in reports),
        'scenarios': len(reports),
        'failed': [r.label for r in reports if not r.passed],
        'worst_deviation': worst,
        'reports': [r.to_dict() for r in reports],
    }
