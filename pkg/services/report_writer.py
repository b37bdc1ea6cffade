"""
Report files: summary.json (sorted keys) and nodes.csv (one row per node).
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np

from core.exceptions import ScenarioError
from core.probspace import FiniteFilteredSpace
from utils import get_logger, write_json

logger = get_logger(__name__)

SUMMARY_FILE = 'summary.json'
NODES_FILE = 'nodes.csv'
_FIXED_COLUMNS = ('node', 'parent', 'time')


class ReportWriter:
    """
    Writes one run's artifacts into an output directory.

    Floats are written with repr() so a replay reads back the exact values.
    """

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)

    def write(self, space: FiniteFilteredSpace, summary: Mapping[str, Any], tables: Mapping[str, Any]) -> Dict[str, Path]:
        """
        Write summary.json and nodes.csv.

        Args:
            space: Space the tables live on
            summary: JSON-serializable summary
            tables: Column name -> per-node array

        Returns:
            dict: 'summary' and 'nodes' paths
        """
        self.out_dir.mkdir(parents=True, exist_ok=True)
        summary_path = write_json(self.out_dir / SUMMARY_FILE, dict(summary))
        nodes_path = self.out_dir / NODES_FILE

        columns = list(tables)
        arrays = [np.asarray(tables[name], dtype=float) for name in columns]
        with open(nodes_path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(list(_FIXED_COLUMNS) + columns)
            for node in range(space.n_nodes):
                row = [node, int(space.parent[node]), int(space.time[node])]
                row.extend(repr(float(a[node])) for a in arrays)
                writer.writerow(row)

        logger.info(f"✓ Report written to {self.out_dir} ({len(columns)} columns, {space.n_nodes} nodes)")
        return {'summary': summary_path, 'nodes': nodes_path}


def read_report(out_dir: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Read back a report directory.

    Returns:
        tuple: (summary, tables) with tables keyed by column name

    Raises:
        ScenarioError: If a file is missing or malformed
    """
    out_dir = Path(out_dir)
    try:
        summary = json.loads((out_dir / SUMMARY_FILE).read_text(encoding='utf-8'))
        with open(out_dir / NODES_FILE, newline='', encoding='utf-8') as f:
            rows = list(csv.reader(f))
    except (OSError, json.JSONDecodeError) as e:
        raise ScenarioError(f"cannot read report in {out_dir}: {e}")

    if not rows:
        raise ScenarioError(f"{out_dir / NODES_FILE} is empty")
    header, body = rows[0], rows[1:]
    tables: Dict[str, np.ndarray] = {}
    try:
        for i, name in enumerate(header):
            if name in _FIXED_COLUMNS:
                continue
            tables[name] = np.array([float(row[i]) for row in body])
    except (IndexError, ValueError) as e:
        raise ScenarioError(f"malformed {NODES_FILE}: {e}")
    return summary, tables
