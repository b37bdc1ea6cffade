"""
Orthogonal decomposition M = ∫Z dW + N of a martingale on the tree.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from config import settings
from core.exceptions import NotAMartingale, Violation
from core.laglad import LadlagProcess, as_node_array
from core.probspace import FiniteFilteredSpace
from utils import get_logger, scaled_tolerance

logger = get_logger(__name__)

# E[ΔW²|F_t] below this counts as degenerate noise
DEGENERATE_NOISE = 1e-300


@dataclass(frozen=True, eq=False)
class MartingaleRepresentation:
    """
    Z per internal node (0 on terminal nodes) and the orthogonal martingale N.

    d_ortho holds ΔN on the edge into each node; ortho is its running sum
    with N_0 = 0.
    """

    space: FiniteFilteredSpace
    Z: np.ndarray
    ortho: np.ndarray
    d_ortho: np.ndarray

    @property
    def stochastic_integral(self) -> np.ndarray:
        """(∫Z dW)_t per node."""
        space = self.space
        out = np.zeros(space.n_nodes)
        for node in range(1, space.n_nodes):
            p = space.parent[node]
            out[node] = out[p] + self.Z[p] * space.noise[node]
        return out

    def to_tables(self) -> Dict[str, np.ndarray]:
        return {'Z': self.Z, 'ortho': self.ortho}


def martingale_increments(space: FiniteFilteredSpace, M: np.ndarray) -> np.ndarray:
    """ΔM on the edge into each node (0 at the root)."""
    increments = np.zeros(space.n_nodes)
    increments[1:] = M[1:] - M[space.parent[1:]]
    return increments


def orthogonal_decompose(
    space: FiniteFilteredSpace, M: Any, tol: Optional[float] = None
) -> MartingaleRepresentation:
    """
    Conditional least-squares projection of ΔM on ΔW at every internal node.

    Z_t = E[ΔM·ΔW|F_t] / E[ΔW²|F_t] (0 when the noise is degenerate) and
    ΔN = ΔM - Z_t·ΔW.

    Args:
        space: The space
        M: Martingale values per node (array, map or LadlagProcess at channel)
        tol: Relative tolerance of the martingale check

    Returns:
        MartingaleRepresentation: (Z, N)

    Raises:
        NotAMartingale: If E[M_{t+1}|F_t] != M_t somewhere
    """
    tol = settings.INVARIANT_TOL if tol is None else tol
    values = M.at if isinstance(M, LadlagProcess) else as_node_array(space, M, 'M')
    dM = martingale_increments(space, values)

    drift = space.expect_children(dM)
    eps = scaled_tolerance(tol, values)
    off = [int(n) for n in space.internal if abs(drift[n]) > eps]
    if off:
        raise NotAMartingale.from_violations(
            [Violation(NotAMartingale.code, f"E[ΔM|F_t] = {drift[n]!r}", n) for n in off]
        )

    dW = space.noise
    covariance = space.expect_children(dM * dW)
    variance = space.expect_children(dW * dW)
    Z = np.zeros(space.n_nodes)
    usable = variance > DEGENERATE_NOISE
    Z[usable] = covariance[usable] / variance[usable]

    d_ortho = np.zeros(space.n_nodes)
    kids = space.non_root
    d_ortho[kids] = dM[kids] - Z[space.parent[kids]] * dW[kids]

    ortho = d_ortho.copy()
    for node in range(1, space.n_nodes):
        ortho[node] += ortho[space.parent[node]]

    return MartingaleRepresentation(space, Z, ortho, d_ortho)


def representation_residuals(space: FiniteFilteredSpace, M: np.ndarray, rep: MartingaleRepresentation) -> Dict[str, float]:
    """
    Largest defects of the representation identities.

    Returns:
        dict: 'reconstruction' |ΔM - ZΔW - ΔN|, 'orthogonality' |E[ΔNΔW|F_t]|,
        'ortho_martingale' |E[ΔN|F_t]|, 'energy' |E[ΔM²] - Z²E[ΔW²] - E[ΔN²]|
    """
    dM = martingale_increments(space, np.asarray(M, dtype=float))
    dW = space.noise
    dN = rep.d_ortho
    z_edge = space.broadcast_parent(rep.Z)
    z_edge[space.root] = 0.0
    internal = space.internal

    energy = (
        space.expect_children(dM ** 2)
        - rep.Z ** 2 * space.expect_children(dW ** 2)
        - space.expect_children(dN ** 2)
    )
    return {
        'reconstruction': float(np.max(np.abs(dM - z_edge * dW - dN))),
        'orthogonality': float(np.max(np.abs(space.expect_children(dN * dW)[internal]))),
        'ortho_martingale': float(np.max(np.abs(space.expect_children(dN)[internal]))),
        'energy': float(np.max(np.abs(energy[internal]))),
    }
