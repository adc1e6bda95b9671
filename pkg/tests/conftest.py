from __future__ import annotations

from pathlib import Path

import pytest

from simlab.reference_systems import agent_record, simulator_record
from simlab.runner import Launcher, await_ready
from simlab.storage import Store
from simlab.tasks import load_catalog

from support import FIXTURE_CATALOG


@pytest.fixture(scope="session")
def fixture_catalog_path(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("catalog") / "fixture.tsv"
    path.write_text(FIXTURE_CATALOG, encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def fixture_catalog(fixture_catalog_path):
    return load_catalog(fixture_catalog_path)


@pytest.fixture
def store(tmp_path) -> Store:
    return Store(tmp_path / "data")


@pytest.fixture
def launcher():
    launcher = Launcher()
    yield launcher
    launcher.teardown_all()


@pytest.fixture(scope="module")
def module_launcher():
    launcher = Launcher()
    yield launcher
    launcher.teardown_all()


@pytest.fixture(scope="module")
def ref_pair(module_launcher, tmp_path_factory):
    """A ready (agent, simulator) pair of launched reference systems."""
    catalog = tmp_path_factory.mktemp("refcat") / "fixture.tsv"
    catalog.write_text(FIXTURE_CATALOG, encoding="utf-8")
    agent_rs = module_launcher.launch(agent_record(catalog))
    sim_rs = module_launcher.launch(simulator_record())
    await_ready(agent_rs, 15)
    await_ready(sim_rs, 15)
    return agent_rs, sim_rs


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\n[ACCEPTANCE] {name}: {outcome}")
