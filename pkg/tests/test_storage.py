"""Tests for report storage, CSV tables and grid-function files."""

import csv
import json

import numpy as np
import pytest

from src.errors import GridMismatchError, SerializationError
from src.grid import GridFunction, TorusGrid
from src.models import CheckResult, Command, Report, RunStatus
from src.storage_service import StorageService, write_csv


@pytest.fixture
def storage(tmp_path):
    return StorageService(output_dir=str(tmp_path / "runs"))


def _report(run_id="abc123"):
    return Report(
        run_id=run_id,
        command=Command.NORM,
        status=RunStatus.COMPLETED,
        checks=[CheckResult(name="norm", passed=True, value=1.5, tolerance=1e-8)],
        tables={"blocks": [{"j": 0, "l2_norm": 1.0}, {"j": 1, "l2_norm": 0.5, "sup_norm": 0.25}], "empty": []},
    )


def test_write_csv_unions_headers(tmp_path):
    path = write_csv(tmp_path / "rows.csv", [{"a": 1}, {"b": 2, "a": 3}])
    with path.open() as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == ["a", "b"]
    assert rows[1] == {"a": "3", "b": "2"}


def test_store_and_load_report(storage):
    path = storage.store_report(_report(), artifacts={"output": {"kind": "test"}})
    run_dir = storage.storage_path / "abc123"
    assert path == str(run_dir / "report.json")
    assert (run_dir / "blocks.csv").exists()
    assert not (run_dir / "empty.csv").exists()
    assert json.loads((run_dir / "output.json").read_text()) == {"kind": "test"}
    loaded = storage.load_report("abc123")
    assert loaded.checks[0].name == "norm"
    assert loaded.passed
    assert storage.load_report("missing") is None


def test_explicit_out_dir(storage, tmp_path):
    target = tmp_path / "explicit"
    storage.store_report(_report("run2"), out_dir=str(target))
    assert (target / "report.json").exists()


def test_infinite_values_survive_json(storage):
    report = _report("infrun")
    report.checks.append(CheckResult(name="finite", passed=True, value=3.0, tolerance=float("inf")))
    storage.store_report(report)
    assert "Infinity" in (storage.storage_path / "infrun" / "report.json").read_text()
    assert storage.load_report("infrun").checks[1].tolerance == float("inf")


@pytest.mark.parametrize("suffix", [".json", ".pdgf"])
def test_grid_function_files(tmp_path, rng, suffix):
    grid = TorusGrid(1, 64)
    f = GridFunction(grid, rng.standard_normal(64) + 1j * rng.standard_normal(64))
    path = StorageService.save_grid_function(f, str(tmp_path / f"u{suffix}"))
    assert np.array_equal(StorageService.load_grid_function(path).values, f.values)


def test_grid_function_errors(tmp_path):
    with pytest.raises(SerializationError):
        StorageService.load_grid_function(str(tmp_path / "missing.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(SerializationError):
        StorageService.load_grid_function(str(broken))


def test_sampled_symbol_files(tmp_path):
    grid = TorusGrid(1, 64)
    values = np.arange(grid.size ** 2, dtype=float)
    interleaved = np.stack([values, np.zeros_like(values)], axis=-1).ravel()
    path = tmp_path / "table.json"
    path.write_text(json.dumps({"dim": 1, "n_points": 64, "order": 0.5, "values": interleaved.tolist()}))
    a = StorageService.load_sampled_symbol(str(path), grid)
    assert a.name == "table"
    assert a.order == 0.5
    with pytest.raises(GridMismatchError):
        StorageService.load_sampled_symbol(str(path), TorusGrid(1, 128))
    (tmp_path / "bad.json").write_text(json.dumps({"dim": 1}))
    with pytest.raises(SerializationError):
        StorageService.load_sampled_symbol(str(tmp_path / "bad.json"), grid)
    with pytest.raises(SerializationError):
        StorageService.load_sampled_symbol(str(tmp_path / "none.json"), grid)
