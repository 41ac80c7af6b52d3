"""End-to-end runs through LabPipeline and the command line."""

import json
import math

import numpy as np
import pytest

import cli
from src.errors import GridMismatchError, InadmissibleFamilyError, InvalidSpecError
from src.grid import GridFunction, TorusGrid
from src.models import Command, NormKind, NormSpec, RunConfig, RunStatus, SymbolSpec
from src.pipeline import LabPipeline, parse_theta_input, smallest_admitting_points
from src.storage_service import StorageService


@pytest.fixture
def pipeline(tmp_path):
    return LabPipeline(StorageService(output_dir=str(tmp_path / "runs")))


def test_parse_theta_input():
    assert parse_theta_input("theta:N=2") == [2]
    assert parse_theta_input("theta:N=2,3") == [2, 3]
    for text in ("theta:M=2", "theta:N=", "theta:N=two"):
        with pytest.raises(InvalidSpecError):
            parse_theta_input(text)


def test_smallest_admitting_points():
    assert smallest_admitting_points(1, [1, 2]) == 64
    assert smallest_admitting_points(1, [2, 3]) == 2048


def test_decompose_constant(pipeline):
    report = pipeline.run(RunConfig(command=Command.DECOMPOSE, n_points=256, input="constant"))
    assert report.passed
    assert report.summary["nonzero_levels"] == [0]
    run_dir = pipeline.storage_service.storage_path / report.run_id
    assert (run_dir / "blocks.csv").exists()
    assert (run_dir / "block_0.json").exists()
    stored = json.loads((run_dir / "report.json").read_text())
    assert stored["config"]["input"] == "constant"


def test_apply_theta_pairing(pipeline):
    config = RunConfig(command=Command.APPLY, n_points=256, input="theta:N=2", d=0.0,
                       symbol=SymbolSpec(name="ching", d=0.0), oracle=True)
    report = pipeline.run(config, store_result=False)
    assert report.passed, report.first_failure
    assert {c.name for c in report.checks} == {"term_sum", "oracle", "pairing[N=2]"}
    assert report.summary["harmonic_sum"] == "13/12"
    assert report.summary["pairing"] == pytest.approx(13 / 12, rel=1e-9)


def test_norm_of_constant(pipeline):
    space = NormSpec(kind=NormKind.LEBESGUE, p=2.0)
    report = pipeline.run(RunConfig(command=Command.NORM, n_points=256, input="constant", space=space),
                          store_result=False)
    assert report.summary["norm"] == pytest.approx(math.sqrt(2 * math.pi))
    assert "blocks" not in report.tables


def test_norm_from_file(pipeline, tmp_path):
    grid = TorusGrid(1, 128)
    path = StorageService.save_grid_function(GridFunction(grid, np.ones(grid.shape)), str(tmp_path / "u.pdgf"))
    space = NormSpec(kind=NormKind.BESOV, s=1.0, p=1.0, q=1.0)
    report = pipeline.run(RunConfig(command=Command.NORM, input=path, space=space), store_result=False)
    assert report.summary["norm"] == pytest.approx(2 * math.pi)
    assert len(report.tables["blocks"]) == 6
    with pytest.raises(GridMismatchError):
        pipeline.run(RunConfig(command=Command.NORM, n_points=256, input=path), store_result=False)


def test_failed_run_is_stored(pipeline):
    with pytest.raises(InadmissibleFamilyError):
        pipeline.run(RunConfig(command=Command.APPLY, n_points=256, input="theta:N=3"))
    reports = list(pipeline.storage_service.storage_path.glob("*/report.json"))
    assert len(reports) == 1
    stored = json.loads(reports[0].read_text())
    assert stored["status"] == RunStatus.FAILED.value
    assert "N^2=9" in stored["error"]


def test_counterexample_command(pipeline):
    config = RunConfig(command=Command.COUNTEREXAMPLE, n_range=[1, 2], q_list=[2.0], t_list=[2.0])
    report = pipeline.run(config, store_result=False)
    assert report.passed, report.first_failure
    assert report.summary["n_points"] == 64
    ratios = [row["ratio"] for row in report.tables["growth_pairs"]]
    assert [row["N"] for row in report.tables["growth_pairs"]] == [1, 2]
    assert ratios[1] > ratios[0]


def test_verify_command(pipeline):
    report = pipeline.run(RunConfig(command=Command.VERIFY, suite="partition"), store_result=False)
    assert report.passed
    assert report.summary["first_failure"] is None


def test_boundedness_probe_detects_growth(pipeline):
    config = RunConfig(command=Command.PROBE, n_points=256, input="theta:N=1,2", symbol=SymbolSpec(name="ching"),
                       space=NormSpec(kind=NormKind.TRIEBEL_LIZORKIN, s=0.0, p=2.0, q=2.0))
    report = pipeline.run(config, store_result=False)
    assert not report.passed
    assert report.summary["diagnosis"] == "growing"
    assert [row["input"] for row in report.tables["boundedness"]] == ["theta_1", "theta_2"]


@pytest.mark.parametrize("symbol", [
    SymbolSpec(name="smooth"),
    SymbolSpec(name="cutoff"),
    SymbolSpec(name="reduced"),
    SymbolSpec(name="nonlinear", function="square"),
])
def test_boundedness_with_positive_smoothness(pipeline, symbol):
    config = RunConfig(command=Command.PROBE, n_points=256, samples=4, symbol=symbol,
                       space=NormSpec(kind=NormKind.TRIEBEL_LIZORKIN, s=1.0, p=2.0, q=2.0))
    report = pipeline.run(config, store_result=False)
    assert report.status == RunStatus.COMPLETED
    ratios = [row["ratio"] for row in report.tables["boundedness"]]
    assert len(ratios) == 4
    assert all(0 < r < math.inf for r in ratios)
    assert report.summary["target"]["s"] == 1.0


def test_cli_boundedness_with_positive_smoothness(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for symbol in ("smooth", "cutoff"):
        out = tmp_path / symbol
        code = cli.main(["probe", "--N", "256", "--symbol", symbol, "--space", "F", "--s", "1", "--q", "2",
                         "--samples", "3", "--out", str(out)])
        stored = json.loads((out / "report.json").read_text())
        assert stored["status"] == "completed", stored.get("error")
        assert code == (0 if all(c["passed"] for c in stored["checks"]) else 1)
        assert (out / "boundedness.csv").exists()


def test_marschall_probe_command(pipeline):
    config = RunConfig(command=Command.PROBE, probe="marschall", n_points=256, k=3, t=0.5)
    report = pipeline.run(config, store_result=False)
    assert report.passed
    assert report.summary["sup_ratio"] > 0


def test_cli_config_merging(tmp_path):
    config_file = tmp_path / "run.json"
    config_file.write_text(json.dumps({"n_points": 512, "seed": 3, "symbol": {"name": "bessel"}}))
    args = cli.build_parser().parse_args(["apply", "--config", str(config_file), "--d", "1", "--seed", "9"])
    config = cli.config_from_args(args)
    assert config.command == Command.APPLY
    assert config.n_points == 512
    assert config.seed == 9
    assert config.d == 1.0
    assert config.symbol.name == "bessel" and config.symbol.d == 1.0

    args = cli.build_parser().parse_args(["norm", "--q", "inf", "--s", "0.5"])
    space = cli.config_from_args(args).space
    assert space.kind == NormKind.TRIEBEL_LIZORKIN
    assert math.isinf(space.q) and space.p == 2.0


def test_cli_exit_codes(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    out = tmp_path / "norm_run"
    assert cli.main(["norm", "--N", "256", "--input", "constant", "--space", "L", "--p", "2", "--out", str(out)]) == 0
    assert (out / "report.json").exists()
    assert cli.main(["apply", "--N", "256", "--input", "theta:N=3", "--no-store"]) == 1
    assert cli.main(["probe", "--N", "256", "--input", "theta:N=1,2", "--symbol", "ching", "--q", "2",
                     "--no-store"]) == 1


def test_reports_do_not_depend_on_thread_count(pipeline):
    values = []
    for threads in (1, 8):
        report = pipeline.run(RunConfig(command=Command.VERIFY, suite="identity", seed=5, threads=threads),
                              store_result=False)
        values.append([(c.name, c.value) for c in report.checks] + [row["relative_error"] for row in
                                                                      report.tables["identity"]])
    assert values[0] == values[1]
