import shutil
from pathlib import Path

import pytest

_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _ACCEPTANCE_RESULTS.append((name, "PASS" if report.passed else "FAIL"))
    elif report.when == "setup" and report.skipped:
        _ACCEPTANCE_RESULTS.append((name, "SKIP"))


def pytest_terminal_summary(terminalreporter, exitstatus):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{outcome}  {name}")

from attrscore.gateway import ModelRef, mock_gateway
from attrscore.harness.run import RunConfig, ScorerSpec, run
from attrscore.harness.store import RunStore
from attrscore.ontology import default_ontology

FIXTURES = Path(__file__).parent / "fixtures"

MOCK = ModelRef.parse("mock")

STANDARD_SCORERS = (
    ScorerSpec.parse("llm@mock"),
    ScorerSpec.parse("holistic@mock"),
    ScorerSpec.parse("rougeL"),
    ScorerSpec.parse("embed_match"),
)


@pytest.fixture(scope="session")
def ontology():
    return default_ontology()


@pytest.fixture()
def gateway(tmp_path):
    return mock_gateway(tmp_path / "cache")


@pytest.fixture()
def nocache_gateway():
    return mock_gateway(None)


@pytest.fixture(scope="session")
def dataset_path():
    return FIXTURES / "dataset.jsonl"


def standard_config(dataset_path, run_id="std", **overrides) -> RunConfig:
    base = dict(
        run_id=run_id,
        dataset_path=str(dataset_path),
        structurer="mock",
        scorers=STANDARD_SCORERS,
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def completed_run(tmp_path_factory, ontology, dataset_path):
    """One standard mock run over the bundled dataset, shared read-only."""
    root = tmp_path_factory.mktemp("stdrun")
    gw = mock_gateway(root / "cache")
    config = standard_config(dataset_path)
    store = run(config, gw, ontology, runs_root=root / "runs")
    return store


@pytest.fixture()
def run_copy(completed_run, tmp_path):
    """A private writable copy of the standard run for mutating tests."""
    dst_root = tmp_path / "runs"
    dst_root.mkdir()
    shutil.copytree(completed_run.run_dir, dst_root / completed_run.run_id)
    return RunStore(dst_root, completed_run.run_id)
