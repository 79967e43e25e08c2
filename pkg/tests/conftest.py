from pathlib import Path

import pytest

from navjudge.mapgraph import load_instances
from navjudge.synthetic import make_lattice

_VERDICTS: dict[int, str] = {}

FIXTURES = Path(__file__).resolve().parent / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def city():
    return load_instances(FIXTURES / "city.json")


@pytest.fixture(scope="session")
def lattice10():
    """Axis-aligned 10x10 block grid without waypoints."""
    return make_lattice(10, 10, seed=4)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.skipped:
        return
    if rep.when == "call" or (rep.failed and rep.when == "setup"):
        number, title = marker.args
        line = f"criterion {number}: {'PASS' if rep.passed else 'FAIL'}  {title}"
        if rep.failed:
            reason = str(getattr(rep.longrepr, "reprcrash", None) and rep.longrepr.reprcrash.message or "")
            line += f"  ({reason.splitlines()[0][:160]})" if reason else ""
        _VERDICTS[number] = line


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
