import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting -------------------------------------------------------
# Tests marked ``@pytest.mark.acceptance(n)`` get one PASS/FAIL line each in the
# terminal summary.  A test can attach a short measurement via ``record_property
# ("detail", ...)``.

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (report.when != "call" and report.passed):
        return
    n = marker.args[0]
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    prev = _ACCEPTANCE.get(n)
    if prev is None or prev[0] == "PASS":
        _ACCEPTANCE[n] = (status, item.name, detail, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, name, detail, secs = _ACCEPTANCE[n]
        line = f"criterion {n:>2}: {status}  {name} ({secs:.2f}s)"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
