import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, m_range=(8, 20), n_range=(1, 5)):
    M = int(rng.integers(m_range[0], m_range[1] + 1))
    N = int(rng.integers(n_range[0], n_range[1] + 1))
    return rng.random((M, N))


# -- acceptance summary ---------------------------------------------------------

_CRITERIA = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            item.user_properties.append(("criterion", (m.args[0], m.args[1])))


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        prev = _CRITERIA.get(crit)
        if report.skipped:
            outcome = "SKIP"
        elif report.failed:
            outcome = "FAIL"
        else:
            outcome = "PASS"
        if prev != "FAIL":
            _CRITERIA[crit] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (n, title), outcome in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {n}: {outcome:4s} {title}")
