"""
Scenario ingestion: parse, validate and materialize scenario JSON.

A scenario document looks like

    {
      "grid": {"steps": 2, "dt": 1.0},
      "tree": {"kind": "binomial"},
      "obstacles": {"xi": {"pre": {...}, "at": {...}}, "zeta": {...}},
      "terminal": {"H_T": "empty"},
      "driver": {"kind": "affine", "a": 0.0, "b": -0.1, "lipschitz_bound": 0.1},
      "solver": {"beta": null, "tol": 1e-12, "max_iter": 200},
      "seed": 7
    }

Process literals are maps node -> value (string keys allowed) or lists in
node order; a literal without "pre" is continuous (X_{t-} = X_{t-1}).
Only "grid", "tree" and "obstacles.xi" are required.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from core.exceptions import ScenarioError, ValidationError
from core.laglad import LadlagProcess, as_node_array, continuous_process, make_process
from core.probspace import FiniteFilteredSpace, build_space
from core.splitstop import SplitStoppingTime, terminal_split_time
from solvers.drbsde import AdmissiblePair, CoupledParams, make_admissible_pair
from solvers.drivers import Driver, build_driver
from solvers.rbsde import PicardParams
from utils import get_logger

logger = get_logger(__name__)

_KNOWN_SECTIONS = {'grid', 'tree', 'obstacles', 'terminal', 'driver', 'solver', 'seed', 'name', 'noise'}


@dataclass
class Scenario:
    """A validated scenario with every literal materialized on its space."""

    space: FiniteFilteredSpace
    xi: LadlagProcess
    zeta: Optional[LadlagProcess]
    h_terminal: str
    driver: Driver
    picard: PicardParams
    coupled: CoupledParams
    seed: Optional[int] = None
    name: str = 'scenario'
    source: Dict[str, Any] = field(default_factory=dict)

    @property
    def rho_T(self) -> SplitStoppingTime:
        return terminal_split_time(self.space, self.h_terminal)

    @property
    def pair(self) -> Optional[AdmissiblePair]:
        if self.zeta is None:
            return None
        return make_admissible_pair(self.xi, self.zeta)


def _section(data: Mapping[str, Any], key: str, required: bool = True) -> Any:
    if key not in data:
        if required:
            raise ScenarioError(f"scenario is missing the '{key}' section")
        return None
    return data[key]


def _process(space: FiniteFilteredSpace, literal: Any, name: str) -> LadlagProcess:
    if not isinstance(literal, Mapping) or 'at' not in literal:
        raise ScenarioError(f"'{name}' must be an object with 'at' and optionally 'pre'")
    at = literal['at']
    try:
        if 'pre' not in literal:
            return continuous_process(space, as_node_array(space, at, name))
        return make_process(space, literal['pre'], at)
    except ValidationError as e:
        logger.debug(f"Process literal '{name}' rejected: {e}")
        raise


def parse_scenario(data: Mapping[str, Any]) -> Scenario:
    """
    Build a Scenario from a decoded JSON document.

    Args:
        data: Decoded scenario document

    Returns:
        Scenario: The validated scenario

    Raises:
        ScenarioError: On malformed documents
        ValidationError: On invalid trees, processes, drivers or obstacle pairs
    """
    if not isinstance(data, Mapping):
        raise ScenarioError("scenario must be a JSON object")
    unknown = sorted(set(data) - _KNOWN_SECTIONS)
    if unknown:
        raise ScenarioError(f"unknown scenario section(s): {', '.join(unknown)}")

    grid = _section(data, 'grid')
    tree = _section(data, 'tree')
    if not isinstance(grid, Mapping) or not isinstance(tree, Mapping):
        raise ScenarioError("'grid' and 'tree' must be objects")
    noise = data.get('noise') or {}
    if not isinstance(noise, Mapping):
        raise ScenarioError("'noise' must be an object")
    space = build_space({**tree, **noise, 'steps': grid.get('steps'), 'dt': grid.get('dt')})

    obstacles = _section(data, 'obstacles')
    if not isinstance(obstacles, Mapping) or 'xi' not in obstacles:
        raise ScenarioError("'obstacles' must contain 'xi'")
    xi = _process(space, obstacles['xi'], 'xi')
    zeta = _process(space, obstacles['zeta'], 'zeta') if obstacles.get('zeta') is not None else None
    if zeta is not None:
        make_admissible_pair(xi, zeta)

    terminal = data.get('terminal') or {}
    h_terminal = str(terminal.get('H_T', 'empty')).lower()
    terminal_split_time(space, h_terminal)

    solver = data.get('solver') or {}
    if not isinstance(solver, Mapping):
        raise ScenarioError("'solver' must be an object")

    seed = data.get('seed')
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64):
        raise ScenarioError("'seed' must be a 64-bit nonnegative integer")

    scenario = Scenario(
        space=space,
        xi=xi,
        zeta=zeta,
        h_terminal=h_terminal,
        driver=build_driver(data.get('driver')),
        picard=PicardParams.from_dict(solver),
        coupled=CoupledParams.from_dict(solver),
        seed=seed,
        name=str(data.get('name', 'scenario')),
        source=dict(data),
    )
    logger.debug(f"Parsed scenario '{scenario.name}': {space.describe()}")
    return scenario


def load_scenario(path: Union[str, Path]) -> Scenario:
    """
    Read and parse a scenario file.

    Raises:
        ScenarioError: If the file is missing or not valid JSON
        ValidationError: If the document fails validation
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ScenarioError(f"cannot read scenario file {path}: {e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path} is not valid JSON: {e}")
    scenario = parse_scenario(data)
    if scenario.name == 'scenario':
        scenario.name = path.stem
    logger.info(f"✓ Loaded scenario {path.name} ({scenario.space.describe()})")
    return scenario
