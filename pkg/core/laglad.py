"""
Ladlag adapted processes on a finite filtered space.

Every process carries two channels per node: `at` (X_t on the atom) and
`pre` (X_{t-}, which must agree across siblings; at the root X_{0-} = X_0).
"""

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, Mapping, Optional, Union

import numpy as np

from .exceptions import (
    MissingNodeValue,
    NegativeBeta,
    Pre0Mismatch,
    PreNotPredictable,
    SpaceMismatch,
    Violation,
)
from .probspace import FiniteFilteredSpace

if TYPE_CHECKING:
    from .splitstop import SplitStoppingTime

PREDICTABLE_TOL = 1e-12


class NormKind(str, Enum):
    S2 = 'S2'
    H2 = 'H2'
    M2 = 'M2'


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LadlagProcess:
    """
    Adapted process with an explicit left-limit channel.

    Build instances through make_process (validated) or the arithmetic
    helpers below, which preserve predictability of the pre channel.
    """

    space: FiniteFilteredSpace
    pre: np.ndarray
    at: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'pre', _frozen(self.pre))
        object.__setattr__(self, 'at', _frozen(self.at))

    def __add__(self, other: 'LadlagProcess') -> 'LadlagProcess':
        _same_space(self, other)
        return LadlagProcess(self.space, self.pre + other.pre, self.at + other.at)

    def __sub__(self, other: 'LadlagProcess') -> 'LadlagProcess':
        _same_space(self, other)
        return LadlagProcess(self.space, self.pre - other.pre, self.at - other.at)

    def shift(self, amount: Union[float, np.ndarray]) -> 'LadlagProcess':
        """Add the same node array (or constant) to both channels; it must be constant across siblings."""
        return LadlagProcess(self.space, self.pre + amount, self.at + amount)

    def with_terminal_at_zero(self) -> 'LadlagProcess':
        """X·1_{[0,T)}: zero the at channel on terminal nodes, keep the pre channel."""
        at = np.array(self.at)
        at[self.space.leaves] = 0.0
        return LadlagProcess(self.space, self.pre, at)

    def to_dict(self) -> Dict[str, Dict[int, float]]:
        return {
            'pre': {int(n): float(v) for n, v in enumerate(self.pre)},
            'at': {int(n): float(v) for n, v in enumerate(self.at)},
        }


def _same_space(a: Any, b: Any) -> None:
    if a.space is not b.space:
        raise SpaceMismatch("operands live on different spaces")


def as_node_array(space: FiniteFilteredSpace, values: Any, name: str = 'values') -> np.ndarray:
    """
    Coerce a per-node literal to a float array indexed by node id.

    Accepts a scalar, a LadlagProcess (its at channel), a sequence of length
    n_nodes, or a mapping node -> value covering every node (keys may be
    strings, as in JSON).

    Args:
        space: The space
        values: Literal to coerce
        name: Name used in error messages

    Returns:
        np.ndarray: Array of shape (n_nodes,)

    Raises:
        MissingNodeValue: If some node has no value
    """
    n = space.n_nodes
    if isinstance(values, LadlagProcess):
        if values.space is not space:
            raise SpaceMismatch(f"{name} lives on another space")
        return np.array(values.at, dtype=float)
    if np.isscalar(values):
        return np.full(n, float(values))
    if isinstance(values, Mapping):
        parsed = {int(k): float(v) for k, v in values.items()}
        missing = [node for node in range(n) if node not in parsed]
        if missing:
            raise MissingNodeValue.from_violations(
                [Violation(MissingNodeValue.code, f"{name} has no value", node) for node in missing]
            )
        return np.array([parsed[node] for node in range(n)])
    arr = np.asarray(values, dtype=float)
    if arr.shape != (n,):
        raise MissingNodeValue(f"{name}: expected {n} node values, got shape {arr.shape}")
    return arr.copy()


def make_process(space: FiniteFilteredSpace, pre: Any, at: Any) -> LadlagProcess:
    """
    Validate and build a ladlag process.

    Args:
        space: The space
        pre: Left-limit channel (map, sequence or scalar)
        at: Value channel (map, sequence or scalar)

    Returns:
        LadlagProcess: The validated process

    Raises:
        MissingNodeValue: If a channel misses a node
        PreNotPredictable: If siblings disagree on the pre channel
        Pre0Mismatch: If pre(root) != at(root)
    """
    pre_arr = as_node_array(space, pre, 'pre')
    at_arr = as_node_array(space, at, 'at')

    root = space.root
    if abs(pre_arr[root] - at_arr[root]) > PREDICTABLE_TOL * max(1.0, abs(at_arr[root])):
        raise Pre0Mismatch.from_violations([Violation(
            Pre0Mismatch.code, f"pre={pre_arr[root]!r} but at={at_arr[root]!r}", root
        )])

    violations = []
    for node in space.internal:
        kids = list(space.children[int(node)])
        block = pre_arr[kids]
        if np.ptp(block) > PREDICTABLE_TOL * max(1.0, float(np.max(np.abs(block)))):
            violations.append(Violation(
                PreNotPredictable.code, f"children {kids} carry pre values {block.tolist()}", int(node)
            ))
    if violations:
        raise PreNotPredictable.from_violations(violations)

    return LadlagProcess(space, pre_arr, at_arr)


def constant_process(space: FiniteFilteredSpace, value: float) -> LadlagProcess:
    return LadlagProcess(space, np.full(space.n_nodes, float(value)), np.full(space.n_nodes, float(value)))


def continuous_process(space: FiniteFilteredSpace, values: np.ndarray) -> LadlagProcess:
    """Process with X_{t-} = X_{t-1} along the path (no left jumps)."""
    values = np.asarray(values, dtype=float)
    return LadlagProcess(space, space.broadcast_parent(values), values)


def running_integral(space: FiniteFilteredSpace, g: np.ndarray) -> np.ndarray:
    """
    Left-endpoint integral I_t = Σ_{s<t} g_s·dt along each path.

    Args:
        space: The space
        g: Driver values per node

    Returns:
        np.ndarray: I per node (I at the root is 0)
    """
    g = np.asarray(g, dtype=float)
    out = np.zeros(space.n_nodes)
    for node in range(1, space.n_nodes):
        p = space.parent[node]
        out[node] = out[p] + g[p] * space.dt
    return out


def eval_at_split(X: LadlagProcess, rho: 'SplitStoppingTime') -> Dict[int, float]:
    """
    X_ρ = X_{τ-}·1_H + X_τ·1_{H^c}, per terminal atom.

    Args:
        X: The process
        rho: Split stopping time on the same space

    Returns:
        dict: leaf node -> payoff

    Raises:
        SpaceMismatch: If rho lives on another space
    """
    _same_space(X, rho)
    payoff = rho.leaf_payoff(X)
    return {int(leaf): float(v) for leaf, v in zip(X.space.leaves, payoff)}


def _time_weights(space: FiniteFilteredSpace, beta: float, normalize: bool) -> np.ndarray:
    t = np.arange(space.steps + 1) * space.dt
    if normalize:
        t = t - space.horizon
    return np.exp(beta * t)


def weighted_sum(
    space: FiniteFilteredSpace,
    values: np.ndarray,
    kind: Union[NormKind, str],
    beta: float,
    normalize: bool = False,
) -> float:
    """
    β-weighted norm of a node array (see weighted_norm).

    With normalize=True every weight is multiplied by e^{-βT}, which keeps
    large β finite without changing ratios or comparisons.
    """
    if beta < 0:
        raise NegativeBeta(f"β must be nonnegative, got {beta}")
    kind = NormKind(kind)
    values = np.asarray(values, dtype=float)
    path_values = values[space.ancestors] ** 2
    weights = _time_weights(space, beta, normalize)
    weighted = path_values * weights[None, :]

    if kind is NormKind.S2:
        per_leaf = weighted.max(axis=1)
    elif kind is NormKind.H2:
        per_leaf = weighted[:, :-1].sum(axis=1) * space.dt
    else:
        per_leaf = weighted[:, 1:].sum(axis=1)
    return float(np.dot(space.leaf_prob, per_leaf))


def weighted_norm(
    X: Union[LadlagProcess, np.ndarray],
    kind: Union[NormKind, str],
    beta: float,
    space: Optional[FiniteFilteredSpace] = None,
    normalize: bool = False,
) -> float:
    """
    Squared β-norms on the grid.

    S2: E[max_t e^{βt}·X_t²]; H2: E[Σ_{t<N} e^{βt}·X_t²·dt];
    M2: E[Σ_{t≥1} e^{βt}·(ΔM_t)²] where the input holds martingale increments.
    Only the at channel enters.

    Args:
        X: Process, or node array together with `space`
        kind: S2, H2 or M2
        beta: Weight exponent, >= 0
        space: Required when X is a plain array
        normalize: Multiply all weights by e^{-βT}

    Returns:
        float: The squared norm

    Raises:
        NegativeBeta: If beta < 0
    """
    if isinstance(X, LadlagProcess):
        return weighted_sum(X.space, X.at, kind, beta, normalize)
    if space is None:
        raise ValueError("space is required when X is a plain array")
    return weighted_sum(space, X, kind, beta, normalize)
