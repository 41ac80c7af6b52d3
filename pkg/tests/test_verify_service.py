"""Tests for the verification suites; large-grid suites are marked slow."""

import pytest

from src.models import RunConfig, SymbolSpec
from src.verify_service import SUITES, VerifyService, shipped_symbol_specs


@pytest.fixture
def service():
    return VerifyService()


def _assert_all_pass(outcome):
    failed = [(c.name, c.value) for c in outcome.checks if not c.passed]
    assert not failed, failed


def test_shipped_specs_cover_every_constructor():
    names = {spec.name for spec in shipped_symbol_specs()}
    assert names == {"identity", "bessel", "smooth", "reduced", "ching", "nonlinear", "cutoff"}
    assert shipped_symbol_specs(3.0)[-1].C == 3.0


def test_unknown_suite(service):
    with pytest.raises(ValueError):
        service.run("everything", RunConfig())


def test_partition_suite(service):
    outcome = service.run("partition", RunConfig(seed=1))
    assert [c.name for c in outcome.checks] == ["partition_of_unity", "block_supports", "reconstruction"]
    _assert_all_pass(outcome)
    assert outcome.seeds == [1]


def test_partition_suite_2d(service):
    _assert_all_pass(service.run("partition", RunConfig(dim=2, n_points=64)))


def test_identity_suite(service):
    outcome = service.run("identity", RunConfig())
    _assert_all_pass(outcome)
    assert len(outcome.tables["identity"]) == 20


def test_scaling_suite(service):
    _assert_all_pass(service.run("scaling", RunConfig()))


def test_symbol_selector_restricts_families(service):
    config = RunConfig(n_points=256, symbol=SymbolSpec(name="smooth"))
    outcome = service.run("support-rule", config)
    _assert_all_pass(outcome)
    assert all(row["term"].startswith("smooth/") for row in outcome.tables["support_rule"])


def test_counterexample_suites_on_small_grid(service):
    config = RunConfig(n_points=128, n_range=[1, 2], q_list=[1.0, 2.0], t_list=[1.0, 2.0], d=1.0)
    for suite in ("ching", "norms", "dichotomy"):
        outcome = service.run(suite, config)
        _assert_all_pass(outcome)
        assert any(c.name.endswith("[d=1]") for c in outcome.checks)
        assert any(c.name.endswith("[d=0]") for c in outcome.checks)


@pytest.mark.parametrize("suite, labels", [("fefferman-stein", 18), ("nikolskii", 6)])
def test_lemma_suites(service, suite, labels):
    outcome = service.run(suite, RunConfig(seed=11))
    _assert_all_pass(outcome)
    assert outcome.seeds == [11, 12]
    names = [c.name for c in outcome.checks]
    assert len(names) == 3 * labels
    assert sum("_refinement[" in n for n in names) == labels
    assert sum("_held_out[" in n for n in names) == labels
    table = next(iter(outcome.tables.values()))
    assert len(table) == labels
    assert all(row["samples"] == 100 and row["held_out_max"] <= row["bound"] for row in table)


FAST_SUITES = ("partition", "identity", "scaling", "fefferman-stein", "nikolskii")


@pytest.mark.slow
@pytest.mark.parametrize("suite", [s for s in SUITES if s not in FAST_SUITES])
def test_acceptance_suites(service, suite):
    _assert_all_pass(service.run(suite, RunConfig()))
