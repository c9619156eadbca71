from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from quire.config import EngineConfig
from quire.engine import Workspace

import support

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): line item on the acceptance checklist")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per checklist criterion, after capture is released."""
    verdicts: dict[str, str] = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, ()):
            name = getattr(report, "criterion", None)
            if name is None or (status == "passed" and report.when != "call"):
                continue
            if verdicts.get(name) != "FAIL":
                verdicts[name] = "PASS" if status == "passed" else "FAIL"
    if not verdicts:
        return
    terminalreporter.section("acceptance checklist")
    for name, verdict in verdicts.items():
        terminalreporter.write_line(f"[{verdict}] {name}")


@pytest.fixture
def config() -> EngineConfig:
    return EngineConfig(uri_prefix=support.PREFIX)


@pytest.fixture
def ws(tmp_path, config) -> Workspace:
    return Workspace.init(tmp_path / "ws", config)


@pytest.fixture
def loaded(ws) -> Workspace:
    """Workspace with the maritime ontology, templates, and mappings installed."""
    ws.import_ontology(_dumps(support.ONTOLOGY_DOC))
    ws.import_template(support.CREW_TEMPLATE)
    ws.import_template(support.REGISTER_TEMPLATE)
    assert ws.import_mapping(support.CREW_MAPPING).ok
    assert ws.import_mapping(support.REGISTER_MAPPING).ok
    return ws


def _dumps(doc) -> str:
    import json

    return json.dumps(doc)
