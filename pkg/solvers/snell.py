"""
Snell envelope over split stopping times.

snell_backward aggregates the value family into a ladlag process v (channels
v_{t-}, v_t) plus the strict-value companion v⁺. The brute-force oracles
value_brute / strict_value_brute compute the same quantities straight from
the definition by enumerating S_δ, and the aggregation checks compare both.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import settings
from core.exceptions import (
    LambdaOutOfRange,
    NegativeObstacle,
    NotAMartingale,
    NotASupermartingale,
    UnsupportedTerminal,
    Violation,
)
from core.laglad import LadlagProcess
from core.probspace import FiniteFilteredSpace
from core.splitstop import (
    AtomKey,
    SplitStoppingTime,
    SplitTimeTable,
    atom_labels,
    enumerate_split_times,
    lift,
    split_value,
    terminal_kind,
    terminal_split_time,
)
from utils import get_logger, max_abs, scaled_tolerance

logger = get_logger(__name__)


def _strict_companion(space: FiniteFilteredSpace, vplus_at: np.ndarray) -> LadlagProcess:
    """v⁺ as a process: pre channel E[v⁺_t | F_{t-1}], root pre = v⁺_0."""
    pre = space.broadcast_parent(space.expect_children(vplus_at))
    pre[space.root] = vplus_at[space.root]
    return LadlagProcess(space, pre, vplus_at)


@dataclass(frozen=True, eq=False)
class ValueProcesses:
    """
    Aggregated value process v and its strict-value companion v⁺.

    On the grid v⁺_t equals the pre channel of v at t + 1 (and v_T at T).
    """

    v: LadlagProcess
    vplus: LadlagProcess

    @property
    def space(self) -> FiniteFilteredSpace:
        return self.v.space

    @classmethod
    def from_supermartingale(cls, X: LadlagProcess) -> 'ValueProcesses':
        """Pair a strong supermartingale with its right limits X⁺_t = X_{(t+1)-}."""
        space = X.space
        vplus_at = np.array(X.at)
        for node in space.internal:
            vplus_at[node] = X.pre[space.children[int(node)][0]]
        return cls(X, _strict_companion(space, vplus_at))


@dataclass(frozen=True, eq=False)
class MertensDecomposition:
    """
    v = v_0 + M - A - B_{-} with increments stored per node.

    dM and dA live on the edge into each node (0 at the root); dB lives on the
    node itself (the right jump v_t - v⁺_t).
    """

    space: FiniteFilteredSpace
    dM: np.ndarray
    dA: np.ndarray
    dB: np.ndarray

    @staticmethod
    def _cumulate(space: FiniteFilteredSpace, increments: np.ndarray) -> np.ndarray:
        out = np.array(increments, dtype=float)
        for node in range(1, space.n_nodes):
            out[node] += out[space.parent[node]]
        return out

    @property
    def M(self) -> np.ndarray:
        return self._cumulate(self.space, self.dM)

    @property
    def A(self) -> np.ndarray:
        return self._cumulate(self.space, self.dA)

    @property
    def B(self) -> np.ndarray:
        return self._cumulate(self.space, self.dB)

    @property
    def B_minus(self) -> np.ndarray:
        """B_{t-} = B at the parent; B_{0-} = 0."""
        out = self.space.broadcast_parent(self.B)
        out[self.space.root] = 0.0
        return out

    @classmethod
    def from_increments(
        cls,
        space: FiniteFilteredSpace,
        dM: Any,
        dA: Any,
        dB: Any,
        tol: Optional[float] = None,
    ) -> 'MertensDecomposition':
        """
        Validate raw increments.

        Raises:
            NotAMartingale: If dM is not centered at some node
            NotASupermartingale: If dA or dB is negative, dA is not predictable,
                or a terminal node carries a right jump
        """
        tol = settings.INVARIANT_TOL if tol is None else tol
        dM = np.asarray(dM, dtype=float).copy()
        dA = np.asarray(dA, dtype=float).copy()
        dB = np.asarray(dB, dtype=float).copy()
        root = space.root
        eps = scaled_tolerance(tol, dM, dA, dB)

        drift = space.expect_children(dM)
        off = [int(n) for n in space.internal if abs(drift[n]) > eps]
        if off or abs(dM[root]) > eps:
            raise NotAMartingale.from_violations(
                [Violation(NotAMartingale.code, f"E[ΔM] = {drift[n]!r}", n) for n in off]
            )

        violations = []
        if abs(dA[root]) > eps:
            violations.append(Violation(NotASupermartingale.code, 'A_0 must be 0', root))
        for node in np.flatnonzero(dA < -eps):
            violations.append(Violation(NotASupermartingale.code, f"ΔA = {dA[node]!r}", int(node)))
        for node in np.flatnonzero(dB < -eps):
            violations.append(Violation(NotASupermartingale.code, f"ΔB = {dB[node]!r}", int(node)))
        for node in space.leaves:
            if abs(dB[node]) > eps:
                violations.append(Violation(NotASupermartingale.code, 'right jump at T', int(node)))
        for node in space.internal:
            block = dA[list(space.children[int(node)])]
            if np.ptp(block) > eps:
                violations.append(Violation(NotASupermartingale.code, 'ΔA not predictable', int(node)))
        if violations:
            raise NotASupermartingale.from_violations(violations)

        return cls(space, dM, dA, dB)

    def to_tables(self) -> Dict[str, np.ndarray]:
        return {'M': self.M, 'A': self.A, 'B': self.B}


@dataclass
class SkorokhodReport:
    """Nodewise Skorokhod conditions (v - ξ)ΔB = 0 and (v_- - ξ_-)ΔA = 0."""

    max_b_violation: float
    max_a_violation: float
    violating_nodes: List[int] = field(default_factory=list)
    continuous_part: str = 'A^c ≡ 0 on the grid; its condition holds vacuously'

    @property
    def max_violation(self) -> float:
        return max(self.max_b_violation, self.max_a_violation)

    def passed(self, tol: Optional[float] = None) -> bool:
        tol = settings.INVARIANT_TOL if tol is None else tol
        return self.max_violation <= tol

    def to_dict(self) -> dict:
        return {
            'max_b_violation': self.max_b_violation,
            'max_a_violation': self.max_a_violation,
            'violating_nodes': self.violating_nodes,
            'continuous_part': self.continuous_part,
        }


@dataclass
class AggregationReport:
    """Outcome of comparing an aggregated process with the brute-force family."""

    max_deviation: float
    checked: int
    skipped: int = 0

    def to_dict(self) -> dict:
        return {'max_deviation': self.max_deviation, 'checked': self.checked, 'skipped': self.skipped}


def _require_standard_terminal(space: FiniteFilteredSpace, rho_T: Optional[SplitStoppingTime]) -> str:
    if rho_T is None:
        return 'empty'
    kind = terminal_kind(rho_T)
    if kind is None:
        raise UnsupportedTerminal("backward recursion supports H_T = ∅ or Ω only")
    return kind


def snell_backward(
    space: FiniteFilteredSpace, xi: LadlagProcess, rho_T: Optional[SplitStoppingTime] = None
) -> ValueProcesses:
    """
    Backward recursion for the value process over split stopping times.

    v_T = ξ_T (or ξ_{T-} for ρ^T = (Ω, T)); for t = N-1..0:
    v_{(t+1)-} = max(ξ_{(t+1)-}, E[v_{t+1}|F_t]), v⁺_t = v_{(t+1)-},
    v_t = max(ξ_t, v⁺_t); v_{0-} = v_0.

    Raises:
        UnsupportedTerminal: For a general H^T
    """
    kind = _require_standard_terminal(space, rho_T)
    leaves = space.leaves
    v_at = np.zeros(space.n_nodes)
    v_pre = np.zeros(space.n_nodes)
    vplus_at = np.zeros(space.n_nodes)

    v_at[leaves] = xi.pre[leaves] if kind == 'omega' else xi.at[leaves]
    vplus_at[leaves] = v_at[leaves]

    for t in range(space.steps - 1, -1, -1):
        kids = space.levels[t + 1]
        level = space.levels[t]
        continuation = space.expect_children(v_at)
        v_pre[kids] = np.maximum(xi.pre[kids], continuation[space.parent[kids]])
        vplus_at[space.parent[kids]] = v_pre[kids]
        v_at[level] = np.maximum(xi.at[level], vplus_at[level])

    v_pre[space.root] = v_at[space.root]
    logger.debug(f"Snell backward: v0={v_at[space.root]:.6g}")
    return ValueProcesses(LadlagProcess(space, v_pre, v_at), _strict_companion(space, vplus_at))


def classical_snell_backward(space: FiniteFilteredSpace, xi: LadlagProcess) -> np.ndarray:
    """Value over ordinary stopping times only: u_T = ξ_T, u_t = max(ξ_t, E[u_{t+1}|F_t])."""
    u = np.array(xi.at, dtype=float)
    for t in range(space.steps - 1, -1, -1):
        level = space.levels[t]
        u[level] = np.maximum(xi.at[level], space.expect_children(u)[level])
    return u


def _candidate_table(
    space: FiniteFilteredSpace, rho_T: Optional[SplitStoppingTime], table: Optional[SplitTimeTable]
) -> SplitTimeTable:
    if table is not None:
        return table
    return SplitTimeTable.from_members(space, enumerate_split_times(space, rho_T))


def _atom_matrix(space: FiniteFilteredSpace, labels: np.ndarray, n_atoms: int) -> np.ndarray:
    """(leaves × atoms) weights turning leaf values into atom conditional expectations."""
    weights = np.zeros((labels.size, n_atoms))
    weights[np.arange(labels.size), labels] = space.leaf_prob
    return weights / weights.sum(axis=0, keepdims=True)


def _brute_values(
    space: FiniteFilteredSpace,
    xi: LadlagProcess,
    delta: SplitStoppingTime,
    table: SplitTimeTable,
    strict: bool,
    family: str,
) -> Tuple[List[AtomKey], np.ndarray, np.ndarray]:
    mask = table.dominating(delta, strict=strict)
    if family == 'optional':
        mask &= table.optional_mask()
    elif family != 'split':
        raise ValueError(f"family must be 'split' or 'optional', got {family!r}")
    keys, labels = atom_labels(delta)
    per_member = table.payoffs(xi)[mask] @ _atom_matrix(space, labels, len(keys))
    return keys, per_member.max(axis=0), np.flatnonzero(mask)


def value_brute(
    space: FiniteFilteredSpace,
    xi: LadlagProcess,
    delta: SplitStoppingTime,
    rho_T: Optional[SplitStoppingTime] = None,
    family: str = 'split',
    table: Optional[SplitTimeTable] = None,
) -> Dict[AtomKey, float]:
    """
    v(δ) = max over ρ ∈ S_δ of E[ξ_ρ | F_δ], per atom of F_δ.

    Args:
        space: The space
        xi: Reward process
        delta: Reference split time
        rho_T: Terminal split time (default (∅, T))
        family: 'split' (all split times) or 'optional' (H = ∅ only)
        table: Precomputed enumeration of S_0 under rho_T

    Raises:
        EnumerationCapExceeded: If S_0 is too large to enumerate
    """
    table = _candidate_table(space, rho_T, table)
    keys, values, _ = _brute_values(space, xi, delta, table, strict=False, family=family)
    return {k: float(v) for k, v in zip(keys, values)}


def strict_value_brute(
    space: FiniteFilteredSpace,
    xi: LadlagProcess,
    delta: SplitStoppingTime,
    rho_T: Optional[SplitStoppingTime] = None,
    table: Optional[SplitTimeTable] = None,
) -> Dict[AtomKey, float]:
    """v⁺(δ) = max over ρ ∈ S_{δ+} of E[ξ_ρ | F_δ], per atom of F_δ."""
    table = _candidate_table(space, rho_T, table)
    keys, values, _ = _brute_values(space, xi, delta, table, strict=True, family='split')
    return {k: float(v) for k, v in zip(keys, values)}


def optimal_split_time(
    space: FiniteFilteredSpace,
    xi: LadlagProcess,
    delta: SplitStoppingTime,
    rho_T: Optional[SplitStoppingTime] = None,
    table: Optional[SplitTimeTable] = None,
    tol: float = 1e-12,
) -> SplitStoppingTime:
    """Earliest member of S_δ (enumeration order) attaining v(δ) on every atom."""
    table = _candidate_table(space, rho_T, table)
    keys, best, rows = _brute_values(space, xi, delta, table, strict=False, family='split')
    _, labels = atom_labels(delta)
    weights = _atom_matrix(space, labels, len(keys))
    eps = scaled_tolerance(tol, best)
    for row in rows:
        attained = table.payoffs(xi)[row] @ weights
        if np.all(attained >= best - eps):
            return table.members[row]
    raise RuntimeError("no optimal split time found; enumeration is not closed under gluing")


def _strict_applies(delta: SplitStoppingTime, rho_T: SplitStoppingTime) -> bool:
    """Strict aggregation is only claimed where G and H^T agree on {σ = T}."""
    at_T = delta.leaf_tau == delta.space.steps
    return not np.any(at_T & (delta.leaf_in_h != rho_T.leaf_in_h))


def aggregation_deviation(
    space: FiniteFilteredSpace,
    xi: LadlagProcess,
    vp: ValueProcesses,
    rho_T: Optional[SplitStoppingTime] = None,
    table: Optional[SplitTimeTable] = None,
    strict: bool = False,
) -> AggregationReport:
    """
    max over δ ∈ S_0 and atoms of |v_δ - v(δ)| (or |v⁺_δ - v⁺(δ)| when strict).

    Strict comparisons at δ = (G, T) with G ⊋ H^T are skipped and counted.
    """
    rho_T = terminal_split_time(space, 'empty') if rho_T is None else rho_T
    table = _candidate_table(space, rho_T, table)
    target = vp.vplus if strict else vp.v
    worst = 0.0
    checked = skipped = 0
    for delta in table.members:
        if strict and not _strict_applies(delta, rho_T):
            skipped += 1
            continue
        keys, brute, _ = _brute_values(space, xi, delta, table, strict=strict, family='split')
        aggregated = split_value(target, delta)
        worst = max(worst, max_abs([aggregated[k] - b for k, b in zip(keys, brute)]))
        checked += 1
    return AggregationReport(worst, checked, skipped)


def supermartingale_gap(X: LadlagProcess, table: SplitTimeTable) -> Tuple[float, float]:
    """
    Strong supermartingale inequality over comparable pairs ρ ≤ δ of the table.

    Returns:
        tuple: (max of (E[X_δ|F_ρ] - X_ρ)⁺, max of |E[X_δ|F_ρ] - X_ρ|); the
        first is 0 for supermartingales, the second for martingales
    """
    space = X.space
    payoffs = table.payoffs(X)
    violation = gap = 0.0
    for i, rho in enumerate(table.members):
        later = table.dominating(rho)
        keys, labels = atom_labels(rho)
        weights = _atom_matrix(space, labels, len(keys))
        expected = payoffs[later] @ weights
        current = payoffs[i] @ weights
        diff = expected - current[None, :]
        violation = max(violation, float(np.max(diff, initial=0.0)))
        gap = max(gap, max_abs(diff))
    return violation, gap


def mertens_decompose(
    space: FiniteFilteredSpace, vp: ValueProcesses, tol: Optional[float] = None
) -> MertensDecomposition:
    """
    ΔB_t = v_t - v⁺_t, ΔA_{t+1} = v⁺_t - E[v_{t+1}|F_t], ΔM_{t+1} = v_{t+1} - E[v_{t+1}|F_t].

    Raises:
        NotASupermartingale: If ΔA or ΔB is negative beyond tolerance
    """
    tol = settings.INVARIANT_TOL if tol is None else tol
    v_at = vp.v.at
    vplus = vp.vplus.at
    continuation = space.broadcast_parent(space.expect_children(v_at))

    dB = v_at - vplus
    dA = np.zeros(space.n_nodes)
    dM = np.zeros(space.n_nodes)
    kids = space.non_root
    dA[kids] = vplus[space.parent[kids]] - continuation[kids]
    dM[kids] = v_at[kids] - continuation[kids]

    eps = scaled_tolerance(tol, v_at)
    negative = [int(n) for n in np.flatnonzero((dA < -eps) | (dB < -eps))]
    if negative:
        raise NotASupermartingale.from_violations([
            Violation(NotASupermartingale.code, f"ΔA={dA[n]!r}, ΔB={dB[n]!r}", n) for n in negative
        ])
    return MertensDecomposition(space, dM, dA, dB)


def mertens_reconstruct(space: FiniteFilteredSpace, v0: float, dec: MertensDecomposition) -> LadlagProcess:
    """v_t = v_0 + M_t - A_t - B_{t-} and v_{t-} = v_0 + M_{t-1} - A_{t-1} - B_{t-1}."""
    M, A, B = dec.M, dec.A, dec.B
    at = v0 + M - A - dec.B_minus
    pre = v0 + space.broadcast_parent(M - A - B)
    pre[space.root] = at[space.root]
    return LadlagProcess(space, pre, at)


def mertens_synthesize(space: FiniteFilteredSpace, v0: float, dM: Any, dA: Any, dB: Any) -> LadlagProcess:
    """Strong supermartingale with prescribed Mertens increments (validated)."""
    dec = MertensDecomposition.from_increments(space, dM, dA, dB)
    return mertens_reconstruct(space, v0, dec)


def skorokhod_report(
    space: FiniteFilteredSpace,
    vp: ValueProcesses,
    xi: LadlagProcess,
    dec: MertensDecomposition,
    tol: Optional[float] = None,
) -> SkorokhodReport:
    """Largest |(v_t - ξ_t)ΔB_t| and |(v_{t-} - ξ_{t-})ΔA_t| over all nodes."""
    tol = settings.INVARIANT_TOL if tol is None else tol
    b_terms = np.abs((vp.v.at - xi.at) * dec.dB)
    a_terms = np.abs((vp.v.pre - xi.pre) * dec.dA)
    a_terms[space.root] = 0.0
    bad = np.flatnonzero((b_terms > tol) | (a_terms > tol))
    return SkorokhodReport(
        max_b_violation=float(b_terms.max()),
        max_a_violation=float(a_terms.max()),
        violating_nodes=[int(n) for n in bad],
    )


def _as_theta(space: FiniteFilteredSpace, theta: Any) -> SplitStoppingTime:
    if isinstance(theta, SplitStoppingTime):
        return theta
    return lift(space, theta, 'optional')


def martingale_interval_deviation(
    space: FiniteFilteredSpace,
    vp: ValueProcesses,
    xi: LadlagProcess,
    theta: Any,
    lam: float,
) -> float:
    """
    Largest martingale defect of v on [θ, τ^λ_θ] along every path.

    The walk visits t, (t+1)-, t+1, ... from θ and stops at the first moment
    where λ·v ≤ ξ on that channel. Before stopping it records |v_t - v⁺_t| at
    value moments and |E[v_{t+1}|F_t] - v_{(t+1)-}| at left-limit moments.

    Raises:
        LambdaOutOfRange: Unless 0 < λ < 1
        NegativeObstacle: If ξ < 0 somewhere
    """
    if not 0.0 < lam < 1.0:
        raise LambdaOutOfRange(f"λ must lie in (0, 1), got {lam}")
    if np.any(xi.at < 0) or np.any(xi.pre < 0):
        raise NegativeObstacle("the martingale interval check needs ξ ≥ 0")

    theta = _as_theta(space, theta)
    v_at, v_pre, vplus = vp.v.at, vp.v.pre, vp.vplus.at
    continuation = space.expect_children(v_at)
    anc = space.ancestors
    worst = 0.0
    for row, start in enumerate(theta.leaf_tau):
        for t in range(int(start), space.steps + 1):
            node = anc[row, t]
            if lam * v_at[node] <= xi.at[node]:
                break
            worst = max(worst, abs(v_at[node] - vplus[node]))
            if t == space.steps:
                break
            child = anc[row, t + 1]
            if lam * v_pre[child] <= xi.pre[child]:
                break
            worst = max(worst, abs(continuation[node] - v_pre[child]))
    return worst


def martingale_interval_check(
    space: FiniteFilteredSpace,
    vp: ValueProcesses,
    xi: LadlagProcess,
    theta: Any,
    lam: float,
    tol: Optional[float] = None,
) -> bool:
    """True iff v is a martingale on [θ, τ^λ_θ] pathwise (deviation ≤ tol)."""
    tol = settings.INVARIANT_TOL if tol is None else tol
    return martingale_interval_deviation(space, vp, xi, theta, lam) <= tol
