"""
Exact finite filtered probability spaces.

A space is a rooted tree: the depth-t nodes are the atoms of F_t, every edge
carries a transition probability and an increment of the driving noise W.
Node ids are assigned breadth-first in construction order, so the nodes of
each time level are contiguous and ids are stable for a given tree spec.
F_{t-} is identified with F_{t-1} (with F_0 at t = 0).
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import (
    MissingNodeValue,
    NoiseNotCentered,
    NonPositiveProbability,
    ProbabilitySumMismatch,
    ScenarioError,
    ValidationError,
    Violation,
)
from utils import get_logger

logger = get_logger(__name__)

PROB_TOL = 1e-12

Branch = Tuple[float, float]  # (probability, noise increment)
NodeValues = Union[Mapping[int, float], Sequence[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class FiniteFilteredSpace:
    """
    Discrete filtration (Ω, F_t, P, W) on the grid t = 0..steps.

    Arrays are indexed by node id. The root is node 0 with parent -1,
    probability 1 and noise 0.
    """

    steps: int
    dt: float
    parent: np.ndarray
    time: np.ndarray
    prob: np.ndarray
    noise: np.ndarray
    children: Tuple[Tuple[int, ...], ...]

    @property
    def n_nodes(self) -> int:
        return int(self.parent.shape[0])

    @property
    def root(self) -> int:
        return 0

    @property
    def horizon(self) -> float:
        return self.steps * self.dt

    @cached_property
    def levels(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.flatnonzero(self.time == t) for t in range(self.steps + 1))

    @cached_property
    def leaves(self) -> np.ndarray:
        return self.levels[self.steps]

    @cached_property
    def internal(self) -> np.ndarray:
        """Non-terminal nodes."""
        return np.flatnonzero(self.time < self.steps)

    @cached_property
    def non_root(self) -> np.ndarray:
        return np.arange(1, self.n_nodes)

    @cached_property
    def path_prob(self) -> np.ndarray:
        """P(atom) for every node."""
        out = np.ones(self.n_nodes)
        for node in range(1, self.n_nodes):
            out[node] = out[self.parent[node]] * self.prob[node]
        return out

    @cached_property
    def ancestors(self) -> np.ndarray:
        """(n_leaves, steps + 1) matrix: the time-t node on each leaf's path."""
        anc = np.empty((self.leaves.size, self.steps + 1), dtype=int)
        anc[:, self.steps] = self.leaves
        for t in range(self.steps - 1, -1, -1):
            anc[:, t] = self.parent[anc[:, t + 1]]
        return anc

    @cached_property
    def leaf_index(self) -> Dict[int, int]:
        return {int(leaf): i for i, leaf in enumerate(self.leaves)}

    @cached_property
    def leaf_prob(self) -> np.ndarray:
        return self.path_prob[self.leaves]

    def is_terminal(self, node: int) -> bool:
        return int(self.time[node]) == self.steps

    def siblings(self, node: int) -> Tuple[int, ...]:
        """Children of the parent of `node` (the node itself at the root)."""
        if node == self.root:
            return (self.root,)
        return self.children[int(self.parent[node])]

    def ancestor_at(self, nodes: Any, t: int) -> np.ndarray:
        """Time-t ancestor of each node (nodes must sit at time >= t)."""
        out = np.array(nodes, dtype=int, copy=True).reshape(-1)
        while out.size and int(self.time[out].max()) > t:
            deeper = self.time[out] > t
            out[deeper] = self.parent[out[deeper]]
        return out

    def expect_children(self, values: np.ndarray) -> np.ndarray:
        """
        One-step conditional expectation on full node arrays.

        Args:
            values: Array indexed by node id

        Returns:
            np.ndarray: Entry n holds Σ_children p·values (0 at terminal nodes)
        """
        values = np.asarray(values, dtype=float)
        weights = self.prob[1:] * values[1:]
        return np.bincount(self.parent[1:], weights=weights, minlength=self.n_nodes)

    def broadcast_parent(self, values: np.ndarray) -> np.ndarray:
        """Array whose entry at each non-root node is values[parent]; root keeps values[root]."""
        values = np.asarray(values, dtype=float)
        out = values.copy()
        out[1:] = values[self.parent[1:]]
        return out

    def describe(self) -> dict:
        return {
            'steps': self.steps,
            'dt': self.dt,
            'nodes': self.n_nodes,
            'leaves': int(self.leaves.size),
        }

    def to_spec(self) -> dict:
        """Explicit tree spec that rebuilds this exact space."""
        branches = [
            [[float(self.prob[c]), float(self.noise[c])] for c in self.children[node]]
            for node in range(int(self.internal.size))
        ]
        return {'kind': 'explicit', 'steps': self.steps, 'dt': self.dt, 'branches': branches}


_VIOLATION_CLASSES = {
    NonPositiveProbability.code: NonPositiveProbability,
    ProbabilitySumMismatch.code: ProbabilitySumMismatch,
    NoiseNotCentered.code: NoiseNotCentered,
}


def _branches_for(spec: Mapping[str, Any]) -> Tuple[str, Any]:
    kind = str(spec.get('kind', 'binomial')).lower()
    dt = float(spec['dt'])

    if kind == 'binomial':
        step = math.sqrt(dt)
        return kind, [(0.5, step), (0.5, -step)]

    if kind in ('uniform', 'trinomial'):
        probabilities = spec.get('probabilities')
        noise = spec.get('noise')
        if probabilities is None or noise is None:
            raise ScenarioError(f"tree kind '{kind}' needs 'probabilities' and 'noise'")
        if len(probabilities) != len(noise) or not probabilities:
            raise ScenarioError("'probabilities' and 'noise' must be non-empty and of equal length")
        return 'uniform', [(float(p), float(w)) for p, w in zip(probabilities, noise)]

    if kind == 'explicit':
        branches = spec.get('branches')
        if not isinstance(branches, (list, tuple)):
            raise ScenarioError("tree kind 'explicit' needs a 'branches' list")
        parsed = []
        for node, entries in enumerate(branches):
            if not entries:
                raise ScenarioError(f"explicit branches for node {node} are empty")
            parsed.append([(float(p), float(w)) for p, w in entries])
        return kind, parsed

    raise ScenarioError(f"Unknown tree kind '{kind}'")


def _assemble(steps: int, dt: float, kind: str, branches: Any) -> FiniteFilteredSpace:
    parent: List[int] = [-1]
    time: List[int] = [0]
    prob: List[float] = [1.0]
    noise: List[float] = [0.0]
    children: List[Tuple[int, ...]] = []

    frontier = [0]
    for t in range(steps):
        next_frontier = []
        for node in frontier:
            if kind == 'explicit':
                if node >= len(branches):
                    raise ScenarioError(f"explicit branches missing for node {node}")
                node_branches = branches[node]
            else:
                node_branches = branches
            kids = []
            for p, w in node_branches:
                child = len(parent)
                parent.append(node)
                time.append(t + 1)
                prob.append(p)
                noise.append(w)
                kids.append(child)
            children.append(tuple(kids))
            next_frontier.extend(kids)
        frontier = next_frontier

    if kind == 'explicit' and len(branches) != len(children):
        raise ScenarioError(
            f"explicit spec lists {len(branches)} branchings but the tree has {len(children)} internal nodes"
        )

    children.extend(() for _ in frontier)
    return FiniteFilteredSpace(
        steps=steps,
        dt=dt,
        parent=np.array(parent, dtype=int),
        time=np.array(time, dtype=int),
        prob=np.array(prob, dtype=float),
        noise=np.array(noise, dtype=float),
        children=tuple(children),
    )


def build_space(spec: Mapping[str, Any], validate: bool = True) -> FiniteFilteredSpace:
    """
    Build a finite filtered space from a tree description.

    Supported kinds: "binomial" (p = 1/2, ΔW = ±√dt), "uniform" (same
    probabilities and noise at every node; "trinomial" is an alias) and
    "explicit" (one list of [p, ΔW] pairs per internal node, breadth-first).

    Args:
        spec: Mapping with 'steps', 'dt', 'kind' and the kind's fields
        validate: Raise on violated invariants (see validate_space)

    Returns:
        FiniteFilteredSpace: The space

    Raises:
        NonPositiveProbability, ProbabilitySumMismatch, NoiseNotCentered: On invalid trees
        ScenarioError: On malformed specs
    """
    try:
        steps = int(spec['steps'])
        dt = float(spec['dt'])
    except (KeyError, TypeError, ValueError) as e:
        raise ScenarioError(f"tree spec needs integer 'steps' and real 'dt': {e}")
    if steps < 1:
        raise ScenarioError("'steps' must be at least 1")
    if not dt > 0:
        raise ScenarioError("'dt' must be positive")

    kind, branches = _branches_for(spec)
    space = _assemble(steps, dt, kind, branches)

    if validate:
        violations = validate_space(space)
        if violations:
            error_class = _VIOLATION_CLASSES.get(violations[0].code, ValidationError)
            raise error_class.from_violations(violations)

    logger.debug(f"Built {kind} space: {space.describe()}")
    return space


def validate_space(space: FiniteFilteredSpace) -> List[Violation]:
    """
    List every violated space invariant.

    Args:
        space: Space to check

    Returns:
        list: Violations with node ids (empty when the space is valid)
    """
    violations: List[Violation] = []

    for node in range(space.n_nodes):
        kids = space.children[node]
        if int(space.time[node]) < space.steps and not kids:
            violations.append(Violation('PartitionBroken', 'internal node without children', node))
            continue
        if not kids:
            continue

        p = space.prob[list(kids)]
        w = space.noise[list(kids)]
        if np.any(p <= 0):
            violations.append(Violation(
                NonPositiveProbability.code, f"probabilities {p.tolist()} contain a non-positive entry", node
            ))
        total = float(p.sum())
        if abs(total - 1.0) > PROB_TOL:
            violations.append(Violation(
                ProbabilitySumMismatch.code, f"probabilities sum to {total!r}", node
            ))
        drift = float(np.dot(p, w))
        if abs(drift) > PROB_TOL:
            violations.append(Violation(
                NoiseNotCentered.code, f"Σ p·ΔW = {drift!r}", node
            ))

    return violations


def _values_at_time(space: FiniteFilteredSpace, values: NodeValues, t: int) -> np.ndarray:
    """Full node array holding `values` on the time-t level (other entries 0)."""
    level = space.levels[t]
    out = np.zeros(space.n_nodes)
    if isinstance(values, Mapping):
        missing = [int(n) for n in level if int(n) not in values]
        if missing:
            raise MissingNodeValue.from_violations(
                [Violation(MissingNodeValue.code, f'no value at time {t}', n) for n in missing]
            )
        out[level] = [float(values[int(n)]) for n in level]
    else:
        arr = np.asarray(values, dtype=float)
        if arr.shape == (space.n_nodes,):
            out[level] = arr[level]
        elif arr.shape == (level.size,):
            out[level] = arr
        else:
            raise MissingNodeValue(f"expected {level.size} values at time {t}, got shape {arr.shape}")
    return out


def cond_exp_one_step(
    space: FiniteFilteredSpace, values: NodeValues, t: Optional[int] = None
) -> Dict[int, float]:
    """
    E[X_{t+1} | F_t] for X given on the time-(t+1) nodes.

    Args:
        space: The space
        values: Map node -> value covering the time-(t+1) level
        t: Conditioning time; inferred from the keys when omitted

    Returns:
        dict: time-t node -> Σ_children p·value

    Raises:
        MissingNodeValue: If a time-(t+1) node has no value
    """
    if t is None:
        if not isinstance(values, Mapping) or not values:
            raise MissingNodeValue("cannot infer the time level from empty or positional values")
        times = {int(space.time[int(n)]) for n in values}
        if len(times) != 1:
            raise MissingNodeValue(f"values span several time levels: {sorted(times)}")
        t = times.pop() - 1
    if not 0 <= t < space.steps:
        raise MissingNodeValue(f"conditioning time {t} outside 0..{space.steps - 1}")

    full = _values_at_time(space, values, t + 1)
    expected = space.expect_children(full)
    return {int(n): float(expected[n]) for n in space.levels[t]}


def conditional_expectation(
    space: FiniteFilteredSpace, values: NodeValues, from_time: int, to_time: int
) -> Dict[int, float]:
    """
    E[X | F_to] for X measurable at from_time, computed directly from path probabilities.

    Args:
        space: The space
        values: Values on the from_time level (map or array)
        from_time: Time at which X is known
        to_time: Conditioning time (<= from_time)

    Returns:
        dict: to_time node -> conditional expectation
    """
    if not 0 <= to_time <= from_time <= space.steps:
        raise ValueError(f"need 0 <= to_time <= from_time <= {space.steps}")
    full = _values_at_time(space, values, from_time)
    nodes = space.levels[from_time]
    anchors = space.ancestor_at(nodes, to_time)
    weights = space.path_prob[nodes] * full[nodes]
    num = np.bincount(anchors, weights=weights, minlength=space.n_nodes)
    return {int(n): float(num[n] / space.path_prob[n]) for n in space.levels[to_time]}
