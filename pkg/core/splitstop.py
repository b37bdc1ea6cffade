"""
Split stopping times ρ = (H, τ) on a finite filtered space.

τ is given by its stop nodes (every root-to-leaf path meets exactly one).
H ⊆ {stop nodes} marks the atoms where the payoff is the left limit X_{τ-};
for t >= 1 it must be a union of full sibling blocks (H ∈ F_{τ-}), and at
t = 0 it is either empty or the root.
"""

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config import settings
from .exceptions import (
    EnumerationCapExceeded,
    EventNotMeasurable,
    HNotPredictable,
    HOutsideStopSet,
    NotAStoppingTime,
    NotPredictable,
    SpaceMismatch,
    UnsupportedTerminal,
    ValidationError,
    Violation,
)
from .probspace import FiniteFilteredSpace
from utils import get_logger

logger = get_logger(__name__)

AtomKey = Tuple[int, ...]


class Ordering(str, Enum):
    EQ = 'eq'
    LEQ = 'leq'
    LT = 'lt'
    GEQ = 'geq'
    GT = 'gt'
    INCOMPARABLE = 'incomparable'


class Constraint(str, Enum):
    ALL = 'all'
    GEQ = 'geq'
    GT = 'gt'


class LiftMode(str, Enum):
    OPTIONAL = 'optional'
    PREDICTABLE = 'predictable'


@dataclass(frozen=True, eq=False)
class SplitStoppingTime:
    """
    Certified split stopping time. Build through validate_sst, lift,
    terminal_split_time or enumerate_split_times.
    """

    space: FiniteFilteredSpace
    stop_nodes: FrozenSet[int]
    pre_nodes: FrozenSet[int]
    predictable_on_h: bool = True

    @cached_property
    def _leaf_hits(self) -> np.ndarray:
        return np.isin(self.space.ancestors, np.fromiter(self.stop_nodes, dtype=int, count=len(self.stop_nodes)))

    @cached_property
    def leaf_tau(self) -> np.ndarray:
        return self._leaf_hits.argmax(axis=1)

    @cached_property
    def leaf_stop(self) -> np.ndarray:
        rows = np.arange(self.space.leaves.size)
        return self.space.ancestors[rows, self.leaf_tau]

    @cached_property
    def leaf_in_h(self) -> np.ndarray:
        pre = np.fromiter(self.pre_nodes, dtype=int, count=len(self.pre_nodes))
        return np.isin(self.leaf_stop, pre)

    @cached_property
    def masks(self) -> Tuple[int, int]:
        """(stop-set bitmask, H bitmask); the enumeration sort key."""
        return (sum(1 << n for n in self.stop_nodes), sum(1 << n for n in self.pre_nodes))

    def leaf_payoff(self, X: Any) -> np.ndarray:
        """X_ρ per leaf, in leaf order."""
        stop = self.leaf_stop
        return np.where(self.leaf_in_h, X.pre[stop], X.at[stop])

    def to_dict(self) -> dict:
        return {'stop_nodes': sorted(self.stop_nodes), 'pre_nodes': sorted(self.pre_nodes)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SplitStoppingTime):
            return NotImplemented
        return (
            self.space is other.space
            and self.stop_nodes == other.stop_nodes
            and self.pre_nodes == other.pre_nodes
        )

    def __hash__(self) -> int:
        return hash((id(self.space), self.stop_nodes, self.pre_nodes))

    def __repr__(self) -> str:
        return f"SplitStoppingTime(stop={sorted(self.stop_nodes)}, H={sorted(self.pre_nodes)})"


def _stop_set(space: FiniteFilteredSpace, tau: Any) -> FrozenSet[int]:
    if isinstance(tau, Mapping):
        chosen = set()
        for node, decision in tau.items():
            if isinstance(decision, str):
                stop = decision.lower() == 'stop'
            else:
                stop = bool(decision)
            if stop:
                chosen.add(int(node))
        return frozenset(chosen)
    return frozenset(int(n) for n in tau)


def validate_sst(space: FiniteFilteredSpace, H: Iterable[int], tau: Any) -> SplitStoppingTime:
    """
    Certify a raw (H, τ) annotation.

    Args:
        space: The space
        H: Nodes marked for the left-limit payoff
        tau: Stop nodes, or a map node -> 'stop'/'continue' (or bool)

    Returns:
        SplitStoppingTime: The certified split time

    Raises:
        NotAStoppingTime: If some path is not stopped exactly once
        HOutsideStopSet: If H contains a non-stop node
        HNotPredictable: If H splits a sibling block
    """
    stop = _stop_set(space, tau)
    pre = frozenset(int(n) for n in H)

    unknown = sorted(n for n in stop | pre if not 0 <= n < space.n_nodes)
    if unknown:
        raise NotAStoppingTime.from_violations(
            [Violation(NotAStoppingTime.code, 'unknown node id', n) for n in unknown]
        )

    hits = np.isin(space.ancestors, list(stop)).sum(axis=1)
    bad_paths = [
        Violation(NotAStoppingTime.code, f"path meets the stop set {int(h)} times", int(leaf))
        for leaf, h in zip(space.leaves, hits) if h != 1
    ]
    if bad_paths:
        raise NotAStoppingTime.from_violations(bad_paths)

    outside = sorted(pre - stop)
    if outside:
        raise HOutsideStopSet.from_violations(
            [Violation(HOutsideStopSet.code, 'marked node does not stop', n) for n in outside]
        )

    broken = set()
    for node in pre:
        if node == space.root:
            continue
        block = space.siblings(node)
        if not all(s in pre for s in block):
            broken.add(int(space.parent[node]))
    if broken:
        raise HNotPredictable.from_violations([
            Violation(HNotPredictable.code, f"H covers only part of block {list(space.children[p])}", p)
            for p in sorted(broken)
        ])

    return SplitStoppingTime(space, stop, pre)


def _check_space(*items: Any) -> None:
    first = items[0].space
    for item in items[1:]:
        if item.space is not first:
            raise SpaceMismatch("split stopping times live on different spaces")


def dominates(rho: SplitStoppingTime, delta: SplitStoppingTime, strict: bool = False) -> bool:
    """
    ρ ≥ δ (or ρ > δ when strict).

    ρ ≥ δ iff τ ≥ σ on every path and H ∩ {τ=σ} ⊆ G. Strict replaces τ ≥ σ by
    τ > σ on {σ < T} and τ = σ on {σ = T}.
    """
    _check_space(rho, delta)
    tr, td = rho.leaf_tau, delta.leaf_tau
    same = tr == td
    h_ok = not np.any(same & rho.leaf_in_h & ~delta.leaf_in_h)
    if strict:
        times_ok = bool(np.all(np.where(td < rho.space.steps, tr > td, same)))
    else:
        times_ok = bool(np.all(tr >= td))
    return times_ok and h_ok


def compare(delta: SplitStoppingTime, rho: SplitStoppingTime) -> Ordering:
    """
    Relation of ρ to δ: eq, gt/geq (ρ later), lt/leq (ρ earlier) or incomparable.

    Strict relations are reported in preference to non-strict ones.
    """
    _check_space(delta, rho)
    ge = dominates(rho, delta)
    le = dominates(delta, rho)
    if ge and le:
        return Ordering.EQ
    if dominates(rho, delta, strict=True):
        return Ordering.GT
    if ge:
        return Ordering.GEQ
    if dominates(delta, rho, strict=True):
        return Ordering.LT
    if le:
        return Ordering.LEQ
    return Ordering.INCOMPARABLE


def lift(space: FiniteFilteredSpace, tau: Any, mode: Union[LiftMode, str] = LiftMode.OPTIONAL) -> SplitStoppingTime:
    """
    Embed an ordinary stopping time: (∅, τ) when optional, (Ω, τ) when predictable.

    Raises:
        NotPredictable: If mode is predictable and {τ = t} splits a sibling block
    """
    mode = LiftMode(mode)
    stop = _stop_set(space, tau)
    if mode is LiftMode.OPTIONAL:
        return validate_sst(space, (), stop)

    split = sorted({
        int(space.parent[n]) for n in stop
        if n != space.root and not all(s in stop for s in space.siblings(n))
    })
    if split:
        raise NotPredictable.from_violations([
            Violation(NotPredictable.code, f"stop set splits block {list(space.children[p])}", p)
            for p in split
        ])
    return validate_sst(space, stop, stop)


def terminal_split_time(space: FiniteFilteredSpace, h_terminal: str = 'empty') -> SplitStoppingTime:
    """ρ^T = (∅, T) for 'empty', (Ω, T) for 'omega'."""
    leaves = frozenset(int(n) for n in space.leaves)
    kind = str(h_terminal).lower()
    if kind == 'empty':
        return SplitStoppingTime(space, leaves, frozenset())
    if kind == 'omega':
        return SplitStoppingTime(space, leaves, leaves)
    raise UnsupportedTerminal(f"H_T must be 'empty' or 'omega', got {h_terminal!r}")


def terminal_kind(rho_T: SplitStoppingTime) -> Optional[str]:
    """'empty' or 'omega' for the two standard terminal times, None for a general H^T."""
    space = rho_T.space
    leaves = frozenset(int(n) for n in space.leaves)
    if rho_T.stop_nodes != leaves:
        raise UnsupportedTerminal(f"terminal split time must stop at T on every path: {rho_T!r}")
    if not rho_T.pre_nodes:
        return 'empty'
    if rho_T.pre_nodes == leaves:
        return 'omega'
    return None


def atom_labels(delta: SplitStoppingTime) -> Tuple[List[AtomKey], np.ndarray]:
    """
    Partition of the leaves into atoms of F_δ.

    Off G each stop node is its own atom; on G (t >= 1) the whole sibling block
    is one atom, because there F_δ only sees F_{σ-}.

    Returns:
        tuple: (sorted atom keys, per-leaf index into the keys)
    """
    space = delta.space
    stop = delta.leaf_stop
    anchor = stop.copy()
    block = delta.leaf_in_h & (stop != space.root)
    anchor[block] = space.parent[stop[block]]

    key_of = {}
    for a, is_block in zip(anchor.tolist(), block.tolist()):
        if a not in key_of:
            key_of[a] = tuple(space.children[a]) if is_block else (a,)
    keys = sorted(set(key_of.values()))
    index = {k: i for i, k in enumerate(keys)}
    labels = np.array([index[key_of[a]] for a in anchor.tolist()], dtype=int)
    return keys, labels


def atoms(delta: SplitStoppingTime) -> Dict[AtomKey, np.ndarray]:
    """Atom key -> leaf node ids of that atom."""
    keys, labels = atom_labels(delta)
    leaves = delta.space.leaves
    return {k: leaves[labels == i] for i, k in enumerate(keys)}


def _atom_average(space: FiniteFilteredSpace, labels: np.ndarray, n_atoms: int, leaf_values: np.ndarray) -> np.ndarray:
    p = space.leaf_prob
    num = np.bincount(labels, weights=p * leaf_values, minlength=n_atoms)
    den = np.bincount(labels, weights=p, minlength=n_atoms)
    return num / den


def cond_exp_at_split(space: FiniteFilteredSpace, leaf_values: Any, delta: SplitStoppingTime) -> Dict[AtomKey, float]:
    """
    E[Y | F_δ] per atom for Y given per leaf (array in leaf order or map leaf -> value).
    """
    if delta.space is not space:
        raise SpaceMismatch("split stopping time lives on another space")
    if isinstance(leaf_values, Mapping):
        values = np.array([float(leaf_values[int(leaf)]) for leaf in space.leaves])
    else:
        values = np.asarray(leaf_values, dtype=float)
    keys, labels = atom_labels(delta)
    averages = _atom_average(space, labels, len(keys), values)
    return {k: float(v) for k, v in zip(keys, averages)}


def split_value(X: Any, delta: SplitStoppingTime) -> Dict[AtomKey, float]:
    """X_δ per atom of F_δ."""
    return cond_exp_at_split(delta.space, delta.leaf_payoff(X), delta)


def _forced_blocks(rho_T: Optional[SplitStoppingTime]) -> FrozenSet[int]:
    """Parents (time T-1) whose terminal block lies in H^T."""
    if rho_T is None:
        return frozenset()
    terminal_kind(rho_T)
    space = rho_T.space
    return frozenset(int(space.parent[n]) for n in rho_T.pre_nodes)


def count_split_times(space: FiniteFilteredSpace, rho_T: Optional[SplitStoppingTime] = None) -> int:
    """
    |{δ ∈ S_0 : δ ≤ ρ^T}| without materializing the set.

    A continuing node contributes Π(1 + c(child)) configurations, plus one
    more when every child stops and the block may also be put into H.
    """
    forced = _forced_blocks(rho_T)
    cont = [0] * space.n_nodes
    for node in range(space.n_nodes - 1, -1, -1):
        kids = space.children[node]
        if not kids:
            continue
        product = 1
        for c in kids:
            product *= 1 + cont[c]
        cont[node] = product if node in forced else product + 1
    return 2 + cont[space.root]


def _continuations(space: FiniteFilteredSpace, node: int, forced: FrozenSet[int]) -> List[Tuple[FrozenSet[int], FrozenSet[int]]]:
    """Every (stop set, H) restricted to the subtree of `node`, given that `node` continues."""
    kids = space.children[node]
    options = []
    for c in kids:
        per_child = [(frozenset((c,)), frozenset())]
        if space.children[c]:
            per_child.extend(_continuations(space, c, forced))
        options.append(per_child)

    block = frozenset(kids)
    out = []
    for combo in itertools.product(*options):
        stop = frozenset().union(*(s for s, _ in combo))
        pre = frozenset().union(*(h for _, h in combo))
        all_stop = block <= stop
        if all_stop and node in forced:
            out.append((stop, pre | block))
            continue
        out.append((stop, pre))
        if all_stop:
            out.append((stop, pre | block))
    return out


def enumerate_split_times(
    space: FiniteFilteredSpace,
    rho_T: Optional[SplitStoppingTime] = None,
    constraint: Union[Constraint, str] = Constraint.ALL,
    delta: Optional[SplitStoppingTime] = None,
    cap: Optional[int] = None,
) -> List[SplitStoppingTime]:
    """
    All split stopping times δ ≤ ρ^T, optionally restricted to S_δ or S_{δ+}.

    Args:
        space: The space
        rho_T: Terminal split time (default (∅, T))
        constraint: 'all', 'geq' (ρ ≥ delta) or 'gt' (ρ > delta)
        delta: Reference split time for 'geq'/'gt'
        cap: Largest admissible |S_0|; defaults to settings.ENUM_CAP

    Returns:
        list: Members sorted by (stop bitmask, H bitmask)

    Raises:
        EnumerationCapExceeded: If the count exceeds the cap
    """
    constraint = Constraint(constraint)
    if rho_T is None:
        rho_T = terminal_split_time(space, 'empty')
    if constraint is not Constraint.ALL and delta is None:
        raise ValidationError(f"constraint '{constraint.value}' needs a reference split time")
    cap = settings.ENUM_CAP if cap is None else cap

    total = count_split_times(space, rho_T)
    if total > cap:
        raise EnumerationCapExceeded(f"{total} split stopping times exceed the cap {cap}")

    forced = _forced_blocks(rho_T)
    root = space.root
    raw = [(frozenset((root,)), frozenset()), (frozenset((root,)), frozenset((root,)))]
    raw.extend(_continuations(space, root, forced))
    members = [SplitStoppingTime(space, stop, pre) for stop, pre in raw]
    members.sort(key=lambda m: m.masks)

    if constraint is Constraint.GEQ:
        members = [m for m in members if dominates(m, delta)]
    elif constraint is Constraint.GT:
        members = [m for m in members if dominates(m, delta, strict=True)]

    logger.debug(f"Enumerated {len(members)} split stopping times ({constraint.value}) out of {total}")
    return members


@dataclass(frozen=True, eq=False)
class SplitTimeTable:
    """
    An enumeration laid out as (members × leaves) arrays for vectorized
    dominance tests and payoff evaluation.
    """

    space: FiniteFilteredSpace
    members: Tuple[SplitStoppingTime, ...]
    tau: np.ndarray
    in_h: np.ndarray
    stop: np.ndarray

    @classmethod
    def from_members(cls, space: FiniteFilteredSpace, members: Sequence[SplitStoppingTime]) -> 'SplitTimeTable':
        members = tuple(members)
        return cls(
            space=space,
            members=members,
            tau=np.array([m.leaf_tau for m in members], dtype=int).reshape(len(members), -1),
            in_h=np.array([m.leaf_in_h for m in members], dtype=bool).reshape(len(members), -1),
            stop=np.array([m.leaf_stop for m in members], dtype=int).reshape(len(members), -1),
        )

    def __len__(self) -> int:
        return len(self.members)

    def dominating(self, delta: SplitStoppingTime, strict: bool = False) -> np.ndarray:
        """Mask of members ρ with ρ ≥ δ (ρ > δ when strict)."""
        td = delta.leaf_tau[None, :]
        same = self.tau == td
        h_ok = ~np.any(same & self.in_h & ~delta.leaf_in_h[None, :], axis=1)
        if strict:
            times_ok = np.all(np.where(td < self.space.steps, self.tau > td, same), axis=1)
        else:
            times_ok = np.all(self.tau >= td, axis=1)
        return times_ok & h_ok

    def dominated_by(self, rho: SplitStoppingTime) -> np.ndarray:
        """Mask of members δ with δ ≤ ρ."""
        tr = rho.leaf_tau[None, :]
        same = self.tau == tr
        h_ok = ~np.any(same & rho.leaf_in_h[None, :] & ~self.in_h, axis=1)
        return np.all(tr >= self.tau, axis=1) & h_ok

    def payoffs(self, X: Any) -> np.ndarray:
        """(members × leaves) matrix of X_ρ."""
        return np.where(self.in_h, X.pre[self.stop], X.at[self.stop])

    def optional_mask(self) -> np.ndarray:
        """Members with H = ∅ (ordinary stopping times)."""
        return ~np.any(self.in_h, axis=1)


def glue(
    rho1: SplitStoppingTime,
    rho2: SplitStoppingTime,
    event: Iterable[int],
    delta: SplitStoppingTime,
) -> SplitStoppingTime:
    """
    ρ₁ on A and ρ₂ on A^c for A ∈ F_δ: τ = τ₁1_A + τ₂1_{A^c}, H = (H₁∩A) ∪ (H₂∩A^c).

    Args:
        rho1, rho2: Members of S_δ
        event: Leaf node ids forming A
        delta: The reference split time

    Returns:
        SplitStoppingTime: The glued split time (certified, in S_δ)

    Raises:
        EventNotMeasurable: If A is not a union of F_δ atoms
        ValidationError: If rho1 or rho2 is not in S_δ
    """
    _check_space(rho1, rho2, delta)
    space = delta.space
    for name, rho in (('rho1', rho1), ('rho2', rho2)):
        if not dominates(rho, delta):
            raise ValidationError(f"{name} is not later than the reference split time")

    chosen = set(int(n) for n in event)
    in_a = np.array([int(leaf) in chosen for leaf in space.leaves])
    keys, labels = atom_labels(delta)
    straddling = [
        Violation(EventNotMeasurable.code, f"event splits atom {keys[i]}")
        for i in range(len(keys))
        if 0 < in_a[labels == i].sum() < (labels == i).sum()
    ]
    if straddling:
        raise EventNotMeasurable.from_violations(straddling)

    stop = np.where(in_a, rho1.leaf_stop, rho2.leaf_stop)
    in_h = np.where(in_a, rho1.leaf_in_h, rho2.leaf_in_h)
    return validate_sst(space, stop[in_h].tolist(), stop.tolist())
