import functools

import pytest

from dercomplex.grid import enumerate_entities
from dercomplex.operators import assemble
from dercomplex.presets import preset_domain

FIXTURES = {"cube": 4, "cavity": 1, "torus": 1}
PARTITIONS = ("all-T", "all-N", "T:x-")


@functools.lru_cache(maxsize=None)
def index_for(name, resolution):
    return enumerate_entities(preset_domain(name, resolution))


@functools.lru_cache(maxsize=None)
def complex_for(name, resolution, rule):
    return assemble(index_for(name, resolution), rule)


@pytest.fixture(params=[(d, r) for d in FIXTURES for r in PARTITIONS], ids=lambda p: f"{p[0]}-{p[1]}")
def fixture_complex(request):
    name, rule = request.param
    return complex_for(name, FIXTURES[name], rule)


# --- acceptance summary: one line per criterion ---------------------------------

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    ok = report.passed if report.when == "call" else not report.failed
    prev = _CRITERIA.get(number, (title, True))
    _CRITERIA[number] = (title, prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
