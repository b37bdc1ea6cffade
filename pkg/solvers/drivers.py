"""
BSDE drivers g(t, y, z) and the registry that builds them from scenario specs.

A driver is evaluated nodewise on a space: evaluate(space, y, z) returns g at
every node, where y holds Y_t (at channel) and z holds Z_t. Drivers that
ignore (y, z) declare it, so solvers can skip the Picard loop.
"""

from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, List, Mapping, Optional

import numpy as np

from core.exceptions import DriverSpecError
from core.laglad import as_node_array
from core.probspace import FiniteFilteredSpace
from utils import get_logger

logger = get_logger(__name__)


class Driver(ABC):
    """
    Base class for all drivers.

    Subclasses implement evaluate(); lipschitz_bound is the declared constant K
    with |g(y,z) - g(y',z')| ≤ K(|y - y'| + |z - z'|).
    """

    kind = 'driver'

    def __init__(self, lipschitz_bound: Optional[float] = None):
        if lipschitz_bound is not None and lipschitz_bound < 0:
            raise DriverSpecError(f"lipschitz_bound must be nonnegative, got {lipschitz_bound}")
        self.lipschitz_bound = None if lipschitz_bound is None else float(lipschitz_bound)

    @property
    def depends_on_solution(self) -> bool:
        return True

    @abstractmethod
    def evaluate(self, space: FiniteFilteredSpace, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """
        Driver values per node.

        Args:
            space: The space
            y: Y_t per node
            z: Z_t per node

        Returns:
            np.ndarray: g per node
        """
        pass

    def require_lipschitz(self) -> float:
        """
        Declared Lipschitz bound.

        Raises:
            DriverSpecError: If no bound was declared
        """
        if self.lipschitz_bound is None:
            raise DriverSpecError(f"{self.kind} driver needs a declared 'lipschitz_bound'")
        return self.lipschitz_bound

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'lipschitz_bound': self.lipschitz_bound}


class ProcessDriver(Driver):
    """g depends on (ω, t) only: a fixed value per node."""

    kind = 'process'

    def __init__(self, values: Any):
        super().__init__(lipschitz_bound=0.0)
        self.values = values

    @property
    def depends_on_solution(self) -> bool:
        return False

    def evaluate(self, space: FiniteFilteredSpace, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        return as_node_array(space, self.values, 'driver values')

    def to_dict(self) -> dict:
        values = self.values
        if isinstance(values, np.ndarray):
            values = values.tolist()
        return {'kind': self.kind, 'values': values}


class AffineDriver(Driver):
    """g = a + b·y + c·z with constant coefficients."""

    kind = 'affine'

    def __init__(self, a: float = 0.0, b: float = 0.0, c: float = 0.0, lipschitz_bound: Optional[float] = None):
        super().__init__(lipschitz_bound)
        self.a = float(a)
        self.b = float(b)
        self.c = float(c)
        self._check_bound(max(abs(self.b), abs(self.c)))

    def _check_bound(self, actual: float) -> None:
        if self.lipschitz_bound is not None and self.lipschitz_bound + 1e-15 < actual:
            raise DriverSpecError(
                f"declared lipschitz_bound {self.lipschitz_bound} is below the coefficient bound {actual}"
            )

    @property
    def depends_on_solution(self) -> bool:
        return self.b != 0.0 or self.c != 0.0

    def coefficients(self, space: FiniteFilteredSpace):
        n = space.n_nodes
        return np.full(n, self.a), np.full(n, self.b), np.full(n, self.c)

    def evaluate(self, space: FiniteFilteredSpace, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        a, b, c = self.coefficients(space)
        return a + b * np.asarray(y, dtype=float) + c * np.asarray(z, dtype=float)

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'a': self.a, 'b': self.b, 'c': self.c, 'lipschitz_bound': self.lipschitz_bound}


class TableDriver(AffineDriver):
    """Affine driver with per-node coefficient overrides: {node: {"a": .., "b": .., "c": ..}}."""

    kind = 'table'

    def __init__(
        self,
        a: float = 0.0,
        b: float = 0.0,
        c: float = 0.0,
        overrides: Optional[Mapping[Any, Mapping[str, float]]] = None,
        lipschitz_bound: Optional[float] = None,
    ):
        self.overrides: Dict[int, Dict[str, float]] = {}
        for node, coeffs in (overrides or {}).items():
            unknown = set(coeffs) - {'a', 'b', 'c'}
            if unknown:
                raise DriverSpecError(f"unknown coefficient(s) {sorted(unknown)} at node {node}")
            self.overrides[int(node)] = {k: float(v) for k, v in coeffs.items()}
        super().__init__(a, b, c, lipschitz_bound)
        slopes = [abs(v) for coeffs in self.overrides.values() for k, v in coeffs.items() if k in ('b', 'c')]
        self._check_bound(max(slopes, default=0.0))

    @property
    def depends_on_solution(self) -> bool:
        return super().depends_on_solution or any(
            coeffs.get('b', 0.0) != 0.0 or coeffs.get('c', 0.0) != 0.0 for coeffs in self.overrides.values()
        )

    def coefficients(self, space: FiniteFilteredSpace):
        a, b, c = super().coefficients(space)
        for node, coeffs in self.overrides.items():
            if not 0 <= node < space.n_nodes:
                raise DriverSpecError(f"override for unknown node {node}")
            a[node] = coeffs.get('a', a[node])
            b[node] = coeffs.get('b', b[node])
            c[node] = coeffs.get('c', c[node])
        return a, b, c

    def to_dict(self) -> dict:
        out = super().to_dict()
        out['overrides'] = {str(k): v for k, v in sorted(self.overrides.items())}
        return out


DriverFactory = Callable[[Mapping[str, Any]], Driver]


class DriverRegistry:
    """
    Registry mapping driver kinds to factories.

    Example:
        registry = DriverRegistry()
        registry.register('affine', lambda spec: AffineDriver(spec['a'], lipschitz_bound=0.0))
        driver = registry.create({"kind": "affine", "a": 1.0})
    """

    def __init__(self):
        self.factories: Dict[str, DriverFactory] = {}

    def register(self, kind: str, factory: DriverFactory) -> None:
        """
        Register a driver factory.

        Raises:
            ValueError: If kind is already registered
        """
        if kind in self.factories:
            raise ValueError(f"Driver kind '{kind}' already registered")
        self.factories[kind] = factory
        logger.debug(f"Registered driver kind: {kind}")

    def unregister(self, kind: str) -> None:
        if kind in self.factories:
            del self.factories[kind]
            logger.debug(f"Unregistered driver kind: {kind}")

    def list_kinds(self) -> List[str]:
        return list(self.factories.keys())

    def create(self, spec: Optional[Mapping[str, Any]]) -> Driver:
        """
        Build a driver from its scenario spec (None means g ≡ 0).

        Raises:
            DriverSpecError: Unknown kind or invalid parameters
        """
        if spec is None:
            return ProcessDriver(0.0)
        kind = spec.get('kind')
        if kind not in self.factories:
            raise DriverSpecError(f"Unknown driver kind {kind!r}; known: {', '.join(self.list_kinds())}")
        try:
            return self.factories[kind](spec)
        except (TypeError, ValueError) as e:
            if isinstance(e, DriverSpecError):
                raise
            raise DriverSpecError(f"invalid {kind} driver spec: {e}")


def _process_factory(spec: Mapping[str, Any]) -> Driver:
    if 'values' not in spec:
        raise DriverSpecError("process driver needs 'values'")
    return ProcessDriver(spec['values'])


def _affine_factory(spec: Mapping[str, Any]) -> Driver:
    return AffineDriver(spec.get('a', 0.0), spec.get('b', 0.0), spec.get('c', 0.0), spec.get('lipschitz_bound'))


def _table_factory(spec: Mapping[str, Any]) -> Driver:
    return TableDriver(
        spec.get('a', 0.0), spec.get('b', 0.0), spec.get('c', 0.0),
        spec.get('overrides'), spec.get('lipschitz_bound'),
    )


driver_registry = DriverRegistry()
driver_registry.register('process', _process_factory)
driver_registry.register('affine', _affine_factory)
driver_registry.register('table', _table_factory)


def build_driver(spec: Optional[Mapping[str, Any]]) -> Driver:
    """Build a driver through the default registry."""
    return driver_registry.create(spec)
