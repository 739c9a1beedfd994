import json
import time
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

_SESSION_T0 = time.time()
_SLOW_SECONDS = [0.0]


@pytest.fixture(scope="session")
def frozen():
    return json.loads((FIXTURES / "frozen.json").read_text())


def pytest_collection_modifyitems(items):
    # acceptance tests drive the full pipeline; run them after the unit
    # suites (stable sort keeps alphabetical order within each group)
    items.sort(key=lambda it: it.fspath.basename == "test_acceptance.py")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    out = yield
    rep = out.get_result()
    if rep.when == "call" and item.get_closest_marker("slow") is not None:
        _SLOW_SECONDS[0] += rep.duration


def battery_seconds_excluding_slow() -> float:
    """Wall time of everything run so far minus slow-marked test bodies."""
    return time.time() - _SESSION_T0 - _SLOW_SECONDS[0]
