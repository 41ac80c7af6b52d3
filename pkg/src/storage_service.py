"""Storage service for run reports, CSV tables and grid-function files."""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .config import settings
from .errors import GridMismatchError, SerializationError
from .grid import GridFunction, TorusGrid
from .models import Report
from .symbols import Symbol, sampled_symbol

logger = logging.getLogger(__name__)

BINARY_SUFFIX = ".pdgf"


def write_csv(path: Path, rows: List[Dict[str, Any]]) -> Path:
    """Write rows with the union of their keys as header, first-seen order."""
    fieldnames: List[str] = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    return path


class StorageService:
    """Service for storing lab reports and loading inputs."""

    def __init__(self, output_dir: Optional[str] = None):
        """Initialize storage service based on configuration."""
        self.storage_type = settings.storage_type

        if self.storage_type == "local":
            self.storage_path = Path(output_dir or settings.output_dir)
            self.storage_path.mkdir(parents=True, exist_ok=True)
            logger.info(f"Initialized local storage at: {self.storage_path}")

    def run_dir(self, run_id: str, out_dir: Optional[str] = None) -> Path:
        path = Path(out_dir) if out_dir else self.storage_path / run_id
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _save_local(self, report: Report, out_dir: Optional[str], artifacts: Dict[str, Any]) -> str:
        run_dir = self.run_dir(report.run_id, out_dir)

        report_path = run_dir / "report.json"
        report_path.write_text(report.model_dump_json(indent=2))

        for name, rows in report.tables.items():
            if rows:
                write_csv(run_dir / f"{name}.csv", rows)

        for name, document in artifacts.items():
            (run_dir / f"{name}.json").write_text(json.dumps(document))

        logger.info(f"Report saved: {report_path}")
        return str(report_path)

    def store_report(self, report: Report, out_dir: Optional[str] = None,
                     artifacts: Optional[Dict[str, Any]] = None) -> str:
        """
        Store a report, its tables as CSV and optional JSON artifacts.

        Args:
            report: Report to store
            out_dir: Explicit run directory; settings.output_dir/<run_id> otherwise
            artifacts: name -> JSON-serialisable document (grid functions, results)

        Returns:
            Path of the written report.json
        """
        logger.info(f"Storing report for run {report.run_id}")

        try:
            if self.storage_type == "local":
                return self._save_local(report, out_dir, artifacts or {})
            raise ValueError(f"Unsupported storage type: {self.storage_type}")

        except Exception as e:
            logger.error(f"Failed to store report: {e}", exc_info=True)
            raise

    def load_report(self, run_id: str) -> Optional[Report]:
        """
        Load a previously stored report.

        Returns:
            Report if found, None otherwise
        """
        try:
            report_path = self.storage_path / run_id / "report.json"
            if report_path.exists():
                return Report.model_validate_json(report_path.read_text())
            return None

        except Exception as e:
            logger.error(f"Failed to load report for run {run_id}: {e}")
            return None

    @staticmethod
    def save_grid_function(f: GridFunction, path: str) -> str:
        """Write ``f`` as a JSON document, or as a binary payload for the .pdgf suffix."""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        if target.suffix == BINARY_SUFFIX:
            target.write_bytes(f.to_bytes())
        else:
            target.write_text(json.dumps(f.to_document()))
        logger.debug(f"Grid function saved: {target}")
        return str(target)

    @staticmethod
    def load_grid_function(path: str) -> GridFunction:
        """
        Raises:
            SerializationError: If the file is missing or malformed
        """
        source = Path(path)
        if not source.exists():
            raise SerializationError(f"Grid-function file not found: {source}")
        if source.suffix == BINARY_SUFFIX:
            return GridFunction.from_bytes(source.read_bytes())
        try:
            document = json.loads(source.read_text())
        except json.JSONDecodeError as e:
            raise SerializationError(f"Invalid JSON in {source}: {e}") from e
        return GridFunction.from_document(document)

    @staticmethod
    def load_sampled_symbol(path: str, grid: TorusGrid) -> Symbol:
        """
        Load x-major samples a(x_p, eta_q) over grid x lattice.

        The document holds ``dim``, ``n_points``, optional ``order`` and interleaved
        real/imaginary ``values`` of length 2 N^(2n).

        Raises:
            SerializationError: If the file is missing or malformed
            GridMismatchError: If the samples belong to another grid
        """
        source = Path(path)
        if not source.exists():
            raise SerializationError(f"Symbol file not found: {source}")
        try:
            document = json.loads(source.read_text())
            file_grid = TorusGrid(int(document["dim"]), int(document["n_points"]))
            raw = np.asarray(document["values"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise SerializationError(f"Malformed symbol file {source}: {e}") from e
        if file_grid != grid:
            raise GridMismatchError(f"Symbol sampled on N={file_grid.points_per_axis}, dim={file_grid.dim}; "
                                     f"run uses N={grid.points_per_axis}, dim={grid.dim}")
        values = raw[0::2] + 1j * raw[1::2]
        return sampled_symbol(grid, values, order=float(document.get("order", 0.0)), name=source.stem)
