"""
Reflected BSDE with a lower obstacle.

For a driver that depends on (ω, t) only, the solution is the Snell envelope
of φ = ξ + ∫g shifted back by the integral; Lipschitz drivers are handled by
Picard iteration on that map, with distances measured in the K²_β norm.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import settings
from core.exceptions import InvariantViolation, NoConvergence
from core.laglad import LadlagProcess, NormKind, as_node_array, running_integral, weighted_sum
from core.probspace import FiniteFilteredSpace
from core.splitstop import SplitStoppingTime, terminal_kind
from utils import get_logger, max_abs, positive_part, scaled_tolerance
from .drivers import Driver
from .martrep import MartingaleRepresentation, orthogonal_decompose
from .snell import MertensDecomposition, mertens_decompose, snell_backward

logger = get_logger(__name__)

FLOAT_FLOOR = 64 * np.finfo(float).eps
# steps below this are dominated by rounding, so their ratios say nothing
RATIO_STEP_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class RbsdeSolution:
    """
    (Y, Z, N, A, B) of the reflected BSDE plus the frozen driver values.

    Y_plus holds the right limits Y⁺_t = Y_{(t+1)-} + g_t·dt (Y_T at T).
    """

    space: FiniteFilteredSpace
    Y: LadlagProcess
    Y_plus: np.ndarray
    representation: MartingaleRepresentation
    decomposition: MertensDecomposition
    g: np.ndarray
    terminal: np.ndarray
    residual: float

    @property
    def Z(self) -> np.ndarray:
        return self.representation.Z

    @property
    def ortho(self) -> np.ndarray:
        return self.representation.ortho

    @property
    def A(self) -> np.ndarray:
        return self.decomposition.A

    @property
    def B(self) -> np.ndarray:
        return self.decomposition.B

    @property
    def dA(self) -> np.ndarray:
        return self.decomposition.dA

    @property
    def dB(self) -> np.ndarray:
        return self.decomposition.dB

    def to_tables(self) -> Dict[str, np.ndarray]:
        return {
            'Y_pre': self.Y.pre,
            'Y_at': self.Y.at,
            'Y_plus': self.Y_plus,
            'Z': self.Z,
            'ortho': self.ortho,
            'A': self.A,
            'B': self.B,
            'g': self.g,
        }


def terminal_payoff(space: FiniteFilteredSpace, xi: LadlagProcess, rho_T: Optional[SplitStoppingTime]) -> np.ndarray:
    """ξ_{ρ^T} per leaf: the at channel for (∅, T), the pre channel for (Ω, T)."""
    leaves = space.leaves
    if rho_T is not None and terminal_kind(rho_T) == 'omega':
        return np.array(xi.pre[leaves])
    return np.array(xi.at[leaves])


def reward_at(space: FiniteFilteredSpace, xi: LadlagProcess, rho_T: Optional[SplitStoppingTime]) -> np.ndarray:
    """
    At channel of the reward over S_0: ξ_t before T, ξ_{ρ^T} on terminal nodes.

    Under (Ω, T) the moment (∅, T) is not in S_0, so ξ_T never pays; the
    terminal entry is ξ_{T-} instead.
    """
    out = np.array(xi.at)
    out[space.leaves] = terminal_payoff(space, xi, rho_T)
    return out


def backward_residual(
    space: FiniteFilteredSpace,
    Y_at: np.ndarray,
    terminal: np.ndarray,
    g: np.ndarray,
    integral: np.ndarray,
    ortho: np.ndarray,
    increasing: np.ndarray,
    jumps_minus: np.ndarray,
) -> float:
    """
    max over (path, t) of |Y_t - RHS_t| for
    RHS_t = ξ_T + Σ_{s=t}^{T-1} g_s dt - (∫Z dW)_t^T - (N_T - N_t) + (K_T - K_t) + (L_{T-} - L_{t-}).

    `increasing` is the net predictable part K and `jumps_minus` the net L_{t-}.
    """
    anc = space.ancestors
    leaves = anc[:, -1]
    I = running_integral(space, g)

    def tail(values: np.ndarray) -> np.ndarray:
        return values[leaves][:, None] - values[anc]

    rhs = (
        terminal[:, None]
        + tail(I)
        - tail(integral)
        - tail(ortho)
        + tail(increasing)
        + tail(jumps_minus)
    )
    return float(np.max(np.abs(Y_at[anc] - rhs)))


def solve_with_driver_process(
    space: FiniteFilteredSpace,
    xi: LadlagProcess,
    g: Any,
    rho_T: Optional[SplitStoppingTime] = None,
    verify: bool = True,
    tol: Optional[float] = None,
) -> RbsdeSolution:
    """
    Solve the RBSDE for a driver depending on (ω, t) only.

    φ = ξ + I with I_t = Σ_{s<t} g_s·dt on both channels; Y = Snell(φ) - I;
    (M, A, B) from the Mertens decomposition; (Z, N) from the orthogonal
    decomposition of M.

    Args:
        space: The space
        xi: Lower obstacle
        g: Driver values per node (array, map, scalar or ProcessDriver)
        rho_T: Terminal split time (default (∅, T))
        verify: Check the solution invariants before returning
        tol: Invariant tolerance (default settings.INVARIANT_TOL)

    Raises:
        UnsupportedTerminal: For a general H^T
        InvariantViolation: If verify is set and an invariant fails
    """
    if isinstance(g, Driver):
        zeros = np.zeros(space.n_nodes)
        g = g.evaluate(space, zeros, zeros)
    g = as_node_array(space, g, 'g')

    I = running_integral(space, g)
    vp = snell_backward(space, xi.shift(I), rho_T)
    Y = vp.v.shift(-I)
    Y_plus = vp.vplus.at - I
    dec = mertens_decompose(space, vp)
    rep = orthogonal_decompose(space, dec.M)
    terminal = terminal_payoff(space, xi, rho_T)

    residual = backward_residual(
        space, Y.at, terminal, g, rep.stochastic_integral, rep.ortho, dec.A, dec.B_minus
    )
    solution = RbsdeSolution(space, Y, Y_plus, rep, dec, g, terminal, residual)
    if verify:
        check_rbsde(solution, xi, tol)
    return solution


def ref_operator(space: FiniteFilteredSpace, xi: LadlagProcess, rho_T: Optional[SplitStoppingTime] = None) -> LadlagProcess:
    """Ref[ξ]: the Y component of the RBSDE with driver 0, i.e. the Snell envelope of ξ."""
    return snell_backward(space, xi, rho_T).v


def rbsde_invariants(solution: RbsdeSolution, xi: LadlagProcess) -> Dict[str, float]:
    """Named deviations of the solution identities (all 0 for an exact solution)."""
    Y = solution.Y
    xi_at = np.array(xi.at)
    xi_at[solution.space.leaves] = solution.terminal
    a_terms = (Y.pre - xi.pre) * solution.dA
    a_terms[solution.space.root] = 0.0
    return {
        'residual': solution.residual,
        'floor': max(max_abs(positive_part(xi_at - Y.at)), max_abs(positive_part(xi.pre - Y.pre))),
        'skorokhod_a': max_abs(a_terms),
        'skorokhod_b': max_abs((Y.at - xi_at) * solution.dB),
        'right_jump': max_abs(Y.at - np.maximum(xi_at, solution.Y_plus)),
        'increasing_a': max_abs(positive_part(-solution.dA)),
        'increasing_b': max_abs(positive_part(-solution.dB)),
    }


def check_rbsde(solution: RbsdeSolution, xi: LadlagProcess, tol: Optional[float] = None) -> None:
    """
    Raises:
        InvariantViolation: For the first invariant whose deviation exceeds tol·max(1, scale)
    """
    tol = settings.INVARIANT_TOL if tol is None else tol
    eps = scaled_tolerance(tol, xi.at, xi.pre, solution.Y.at)
    for name, deviation in rbsde_invariants(solution, xi).items():
        if deviation > eps:
            raise InvariantViolation(name, deviation, eps)


@dataclass
class PicardParams:
    """Picard settings; None falls back to β = 100(1 + K²) and the configured tol/max_iter."""

    beta: Optional[float] = None
    tol: Optional[float] = None
    max_iter: Optional[int] = None

    def resolve(self, lipschitz: float) -> Tuple[float, float, int]:
        beta = 100.0 * (1.0 + lipschitz ** 2) if self.beta is None else float(self.beta)
        tol = settings.PICARD_TOL if self.tol is None else float(self.tol)
        max_iter = settings.PICARD_MAX_ITER if self.max_iter is None else int(self.max_iter)
        return beta, tol, max_iter

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> 'PicardParams':
        data = data or {}
        return cls(data.get('beta'), data.get('tol'), data.get('max_iter'))


@dataclass
class PicardTrace:
    """
    Per-iteration K²_β distances between successive iterates.

    Distances use weights e^{β(t-T)}, i.e. the genuine distance times e^{-βT};
    `threshold` is tol on the same scale.
    """

    beta: float
    tol: float
    threshold: float
    distances: List[float] = field(default_factory=list)
    steps: List[float] = field(default_factory=list)
    signal_distances: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    converged_by: Optional[str] = None

    @property
    def ratios(self) -> List[float]:
        """
        d_{k+1}/d_k while the next distance is still above the threshold.

        Uses the distances with rounding-level nodewise differences removed,
        so the tail of a converged run does not report noise as a ratio.
        """
        out = []
        signal = self.signal_distances or self.distances
        for i, (prev, nxt) in enumerate(zip(signal, signal[1:])):
            if prev > 0 and nxt > self.threshold and self.steps[i + 1] > RATIO_STEP_FLOOR:
                out.append(nxt / prev)
        return out

    def to_dict(self) -> dict:
        return {
            'beta': self.beta,
            'tol': self.tol,
            'iterations': self.iterations,
            'converged': self.converged,
            'converged_by': self.converged_by,
            'distances': self.distances,
            'signal_distances': self.signal_distances,
            'ratios': self.ratios,
        }


def k2_distance(space: FiniteFilteredSpace, dy: np.ndarray, dz: np.ndarray, beta: float) -> float:
    """|||ΔY|||²_β + ‖ΔZ‖²_β with weights normalized by e^{-βT}."""
    return (
        weighted_sum(space, dy, NormKind.S2, beta, normalize=True)
        + weighted_sum(space, dz, NormKind.H2, beta, normalize=True)
    )


def picard_iterate(
    space: FiniteFilteredSpace,
    driver: Driver,
    inner_solve: Any,
    params: Optional[PicardParams],
    init: Optional[Tuple[np.ndarray, np.ndarray]],
    label: str,
) -> Tuple[Any, PicardTrace]:
    """
    Generic Picard loop: freeze g at (Y^k_t, Z^k_t), call inner_solve(g), repeat.

    inner_solve must return an object with `Y` (LadlagProcess) and `Z`.
    Stops when the largest nodewise step is exactly 0 or has reached the
    floating-point floor, or when the distance is ≤ tol. The tolerance rule is
    off once tol·e^{-βT} underflows to 0.

    Raises:
        NoConvergence: When max_iter iterations do not reach a stopping rule
    """
    params = params or PicardParams()
    zeros = np.zeros(space.n_nodes)

    if not driver.depends_on_solution:
        solution = inner_solve(driver.evaluate(space, zeros, zeros))
        trace = PicardTrace(0.0, 0.0, 0.0, iterations=1, converged=True, converged_by='independent')
        return solution, trace

    beta, tol, max_iter = params.resolve(driver.require_lipschitz())
    threshold = tol * float(np.exp(-beta * space.horizon))
    trace = PicardTrace(beta, tol, threshold)

    if init is None:
        y, z = zeros.copy(), zeros.copy()
    else:
        y = as_node_array(space, init[0], 'initial Y')
        z = as_node_array(space, init[1], 'initial Z')

    for k in range(1, max_iter + 1):
        solution = inner_solve(driver.evaluate(space, y, z))
        dy = solution.Y.at - y
        dz = solution.Z - z
        distance = k2_distance(space, dy, dz, beta)
        step = max(max_abs(dy), max_abs(dz))
        scale = max(max_abs(solution.Y.at), max_abs(solution.Z), max_abs(y), max_abs(z))
        noise = FLOAT_FLOOR * (1.0 + scale)
        signal = k2_distance(
            space, np.where(np.abs(dy) > noise, dy, 0.0), np.where(np.abs(dz) > noise, dz, 0.0), beta
        )
        trace.distances.append(distance)
        trace.signal_distances.append(signal)
        trace.steps.append(step)
        trace.iterations = k
        y, z = np.array(solution.Y.at), np.array(solution.Z)
        logger.debug(f"{label} Picard {k}: distance={distance:.3e} step={step:.3e}")

        if step == 0.0:
            trace.converged_by = 'exact'
        elif threshold > 0.0 and distance <= threshold:
            trace.converged_by = 'tolerance'
        elif step <= noise:
            trace.converged_by = 'float_floor'
        if trace.converged_by:
            trace.converged = True
            logger.info(f"✓ {label} Picard converged after {k} iteration(s) ({trace.converged_by})")
            return solution, trace

    logger.warning(f"✗ {label} Picard did not converge in {max_iter} iterations")
    raise NoConvergence(f"{label} Picard iteration did not converge in {max_iter} iterations", trace)


def solve_lipschitz(
    space: FiniteFilteredSpace,
    xi: LadlagProcess,
    driver: Driver,
    params: Optional[PicardParams] = None,
    rho_T: Optional[SplitStoppingTime] = None,
    init: Optional[Tuple[Any, Any]] = None,
) -> Tuple[RbsdeSolution, PicardTrace]:
    """
    RBSDE with a Lipschitz driver g(t, y, z) by Picard iteration from (0, 0) (or init).

    Raises:
        DriverSpecError: If the driver declares no Lipschitz bound
        NoConvergence: If max_iter is reached
    """
    def inner(g: np.ndarray) -> RbsdeSolution:
        return solve_with_driver_process(space, xi, g, rho_T, verify=False)

    solution, trace = picard_iterate(space, driver, inner, params, init, 'RBSDE')
    check_rbsde(solution, xi)
    return solution, trace


def uniqueness_bound(picard_tol: Optional[float], tol: float, values: np.ndarray) -> float:
    """
    Largest sup-gap allowed between two Picard limits started from different points.

    A K²-distance of 10·picard_tol between the limits bounds the sup gap by
    sqrt(10·picard_tol), relative to the size of the solution.
    """
    picard_tol = picard_tol or settings.PICARD_TOL
    return max(float(np.sqrt(10.0 * picard_tol)), tol) * max(1.0, max_abs(values))


@dataclass
class ContractionCertificate:
    beta: float
    certified: bool
    max_ratio: Optional[float]
    trace: PicardTrace

    def to_dict(self) -> dict:
        return {
            'beta': self.beta,
            'certified': self.certified,
            'max_ratio': self.max_ratio,
            'trace': self.trace.to_dict(),
        }


def certify_contraction(
    space: FiniteFilteredSpace,
    xi: LadlagProcess,
    driver: Driver,
    schedule: Optional[Sequence[float]] = None,
    rho_T: Optional[SplitStoppingTime] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    solver: Any = None,
) -> ContractionCertificate:
    """
    Run Picard for each β of the schedule until every measured ratio d_{k+1}/d_k is < 1.

    `solver` defaults to solve_lipschitz and may be any callable with its
    signature (the DRBSDE wrapper is passed here by the invariant suite).
    """
    schedule = settings.BETA_SCHEDULE if schedule is None else tuple(schedule)
    solver = solve_lipschitz if solver is None else solver
    last = None
    for beta in schedule:
        params = PicardParams(beta=beta, tol=tol, max_iter=max_iter)
        try:
            _, trace = solver(space, xi, driver, params, rho_T)
        except NoConvergence as e:
            logger.info(f"β={beta}: no convergence, escalating")
            last = ContractionCertificate(beta, False, None, e.trace)
            continue
        ratios = trace.ratios
        max_ratio = max(ratios) if ratios else None
        certified = max_ratio is None or max_ratio < 1.0
        last = ContractionCertificate(beta, certified, max_ratio, trace)
        if certified:
            return last
        logger.info(f"β={beta}: max ratio {max_ratio:.3f} ≥ 1, escalating")
    return last


@dataclass
class AprioriReport:
    """Ratios of the a priori estimate; `identical` when the drivers coincide."""

    r1: Optional[float]
    r2: Optional[float]
    within_eps: Optional[bool]
    identical: bool
    dy: float = 0.0
    dz: float = 0.0

    def to_dict(self) -> dict:
        return {
            'r1': self.r1, 'r2': self.r2, 'within_eps': self.within_eps,
            'identical': self.identical, 'dy': self.dy, 'dz': self.dz,
        }


def _driver_values(space: FiniteFilteredSpace, g: Any, solution: RbsdeSolution) -> np.ndarray:
    if isinstance(g, Driver):
        return g.evaluate(space, solution.Y.at, solution.Z)
    return as_node_array(space, g, 'g')


def apriori_diagnostic(
    solA: RbsdeSolution,
    solB: RbsdeSolution,
    gA: Any,
    gB: Any,
    beta: float,
    eps: float,
) -> AprioriReport:
    """
    r1 = (‖ΔZ‖²_β + ‖ΔN‖²_{M²_β}) / ‖Δg‖²_β and r2 = |||ΔY|||²_β / ‖Δg‖²_β.

    Drivers given as Driver objects are evaluated at their own solution.
    Weights are normalized by e^{-βT}, which leaves the ratios unchanged.
    """
    space = solA.space
    dg = _driver_values(space, gA, solA) - _driver_values(space, gB, solB)
    dy = solA.Y.at - solB.Y.at
    dz = solA.Z - solB.Z
    d_ortho = solA.representation.d_ortho - solB.representation.d_ortho

    denominator = weighted_sum(space, dg, NormKind.H2, beta, normalize=True)
    if denominator == 0.0:
        logger.info("Drivers are identical: a priori ratios undefined")
        return AprioriReport(None, None, None, True, max_abs(dy), max_abs(dz))

    r1 = (
        weighted_sum(space, dz, NormKind.H2, beta, normalize=True)
        + weighted_sum(space, d_ortho, NormKind.M2, beta, normalize=True)
    ) / denominator
    r2 = weighted_sum(space, dy, NormKind.S2, beta, normalize=True) / denominator
    return AprioriReport(r1, r2, r1 <= eps ** 2, False, max_abs(dy), max_abs(dz))
