from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from core.probspace import FiniteFilteredSpace
from services.report_writer import ReportWriter
from services.scenario_service import Scenario
from utils import get_logger

logger = get_logger(__name__)


@dataclass
class PipelineResult:
    """Summary and per-node tables produced by one task."""

    task: str
    space: FiniteFilteredSpace
    summary: Dict[str, Any]
    tables: Dict[str, np.ndarray] = field(default_factory=dict)


class BasePipeline(ABC):
    """
    Abstract base class for all task pipelines.

    All pipelines must implement the `process` method which runs one task on a
    scenario and returns its summary and tables; `run` adds the common summary
    fields and writes the report.
    """

    task = 'base'

    def __init__(self, out_dir: Optional[Union[str, Path]] = None):
        """
        Initialize the pipeline.

        Args:
            out_dir: Report directory; nothing is written when None
        """
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.logger = get_logger(self.__class__.__name__)

    @abstractmethod
    def process(self, scenario: Scenario) -> PipelineResult:
        """
        Run the task on a scenario.

        Args:
            scenario: Validated scenario

        Returns:
            PipelineResult: Summary and tables

        Raises:
            ValidationError, ConvergenceError, VerificationError: From the solvers
        """
        pass

    def run(self, scenario: Scenario) -> PipelineResult:
        """
        Process a scenario and write summary.json / nodes.csv when out_dir is set.

        The summary embeds the scenario document so a report can be replayed.
        """
        self.logger.info(f"Running task '{self.task}' on scenario '{scenario.name}'")
        result = self.process(scenario)
        result.summary.update({
            'task': self.task,
            'scenario_name': scenario.name,
            'seed': scenario.seed,
            'space': scenario.space.describe(),
            'scenario': scenario.source,
        })
        if self.out_dir is not None:
            ReportWriter(self.out_dir).write(result.space, result.summary, result.tables)
        return result

    def obstacle_tables(self, scenario: Scenario) -> Dict[str, np.ndarray]:
        """ξ (and ζ when present) columns shared by every report."""
        tables = {'xi_pre': scenario.xi.pre, 'xi_at': scenario.xi.at}
        if scenario.zeta is not None:
            tables.update({'zeta_pre': scenario.zeta.pre, 'zeta_at': scenario.zeta.at})
        return tables
