"""
Seeded random scenario generation.

Scenarios are emitted as plain JSON documents (explicit trees, obstacles rounded
to 4 decimals) so that identical flags give byte-identical files.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from config import settings
from core.exceptions import CapExceeded, ScenarioError
from core.probspace import build_space
from core.splitstop import count_split_times
from utils import get_logger, write_json

logger = get_logger(__name__)

DEFAULT_DT = 0.25
OBSTACLE_RANGE = 5.0
MAX_GAP = 3.0
DRIVER_RANGE = 0.5


def _round(values: np.ndarray) -> List[float]:
    return [round(float(v), 4) for v in values]


def _branches(rng: np.random.Generator, count: int, dt: float) -> List[List[float]]:
    """count (probability, noise) pairs with Σp = 1, Σp·w = 0 and Σp·w² = dt."""
    if count == 1:
        return [[1.0, 0.0]]
    raw = rng.uniform(0.2, 1.0, size=count)
    probs = np.round(raw / raw.sum(), 4)
    probs[-1] = 1.0 - probs[:-1].sum()
    u = rng.uniform(-1.0, 1.0, size=count)
    u = u - float(probs @ u)
    variance = float(probs @ (u * u))
    if variance <= 1e-12:
        u = np.where(np.arange(count) % 2 == 0, 1.0, -1.0)
        u = u - float(probs @ u)
        variance = float(probs @ (u * u))
    w = u * np.sqrt(dt / variance)
    w = w - float(probs @ w)
    return [[float(p), float(x)] for p, x in zip(probs, w)]


def _tree(rng: np.random.Generator, steps: int, branching: int, dt: float, mixed: bool) -> List[List[List[float]]]:
    """Explicit branches per internal node in breadth-first order."""
    branches = []
    frontier = 1
    for _ in range(steps):
        next_frontier = 0
        for _ in range(frontier):
            count = int(rng.integers(1, branching + 1)) if mixed else branching
            branches.append(_branches(rng, count, dt))
            next_frontier += count
        frontier = next_frontier
    return branches


def _obstacles(rng: np.random.Generator, space: Any) -> Dict[str, Any]:
    n = space.n_nodes
    leaves = space.leaves

    at = rng.uniform(-OBSTACLE_RANGE, OBSTACLE_RANGE, size=n)
    block_pre = rng.uniform(-OBSTACLE_RANGE, OBSTACLE_RANGE, size=n)
    pre = space.broadcast_parent(block_pre)
    pre[space.root] = at[space.root]

    gap_at = rng.uniform(0.0, MAX_GAP, size=n)
    gap_at[leaves] = 0.0
    gap_block = rng.uniform(0.0, MAX_GAP, size=n)
    gap_pre = space.broadcast_parent(gap_block)
    gap_pre[space.root] = gap_at[space.root]

    xi_at, xi_pre = np.round(at, 4), np.round(pre, 4)
    return {
        'xi': {'pre': _round(xi_pre), 'at': _round(xi_at)},
        'zeta': {'pre': _round(xi_pre + np.round(gap_pre, 4)), 'at': _round(xi_at + np.round(gap_at, 4))},
    }


def _driver(rng: np.random.Generator) -> Dict[str, Any]:
    a, b, c = (round(float(x), 4) for x in rng.uniform(-DRIVER_RANGE, DRIVER_RANGE, size=3))
    return {'kind': 'affine', 'a': a, 'b': b, 'c': c, 'lipschitz_bound': DRIVER_RANGE}


def generate_scenario(
    steps: int,
    branching: int,
    seed: int,
    dt: float = DEFAULT_DT,
    mixed: bool = False,
    max_split_times: Optional[int] = None,
) -> Dict[str, Any]:
    """
    Random admissible scenario document.

    Obstacles are uniform in [-5, 5] with ζ = ξ + a nonnegative gap that
    vanishes on the terminal at channel; noise is centered with variance dt;
    the driver is affine with |b|, |c| ≤ 0.5.

    Args:
        steps: Number of time steps N
        branching: Children per internal node (the maximum when mixed)
        seed: Seed of the numpy generator
        dt: Grid spacing
        mixed: Draw each node's branching uniformly from 1..branching
        max_split_times: Redraw the tree until |S_0| is at most this many

    Returns:
        dict: The scenario document

    Raises:
        CapExceeded: If steps or branching exceed the configured limits
    """
    if steps > settings.MAX_GEN_STEPS or branching > settings.MAX_GEN_BRANCHING:
        raise CapExceeded(
            f"gen supports steps ≤ {settings.MAX_GEN_STEPS} and branching ≤ {settings.MAX_GEN_BRANCHING}, "
            f"got steps={steps}, branching={branching}"
        )
    if steps < 1 or branching < 1:
        raise ScenarioError("steps and branching must be at least 1")

    rng = np.random.default_rng(seed)
    while True:
        branches = _tree(rng, steps, branching, dt, mixed)
        space = build_space({'kind': 'explicit', 'steps': steps, 'dt': dt, 'branches': branches})
        if max_split_times is None or count_split_times(space) <= max_split_times:
            break
        logger.debug(f"Redrawing tree: {count_split_times(space)} split stopping times")

    document = {
        'name': f"gen-N{steps}-b{branching}-s{seed}",
        'grid': {'steps': steps, 'dt': dt},
        'tree': {'kind': 'explicit', 'branches': branches},
        'obstacles': _obstacles(rng, space),
        'terminal': {'H_T': 'empty'},
        'driver': _driver(rng),
        'solver': {'tol': settings.PICARD_TOL, 'max_iter': settings.PICARD_MAX_ITER},
        'seed': int(seed),
    }
    logger.debug(f"Generated scenario {document['name']} with {space.n_nodes} nodes")
    return document


def write_scenario(path: Union[str, Path], document: Dict[str, Any]) -> Path:
    """Write a scenario document (sorted keys, stable bytes)."""
    return write_json(Path(path), document)
