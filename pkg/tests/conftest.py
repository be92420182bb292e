from __future__ import annotations

import json
from pathlib import Path

import pytest

from restamp.demo_target import DemoTarget
from restamp.dsl import load_suite_file
from restamp.spec_index import load_spec_file

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "restamp" / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def assets_dir() -> Path:
    return FIXTURES / "assets"


@pytest.fixture(scope="session")
def minipet_doc() -> dict:
    return json.loads((FIXTURES / "minipet.json").read_text())


@pytest.fixture(scope="session")
def index():
    return load_spec_file(FIXTURES / "minipet.json")


@pytest.fixture(scope="session")
def seed():
    return load_suite_file(FIXTURES / "seed_suite.json")


@pytest.fixture
def demo():
    with DemoTarget() as target:
        yield target


@pytest.fixture
def login_bug():
    with DemoTarget(["login-200"]) as target:
        yield target


# -- acceptance reporting: one PASS/FAIL line per criterion ---------------------

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[number] = (title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, verdict = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{verdict} criterion {number}: {title}")
