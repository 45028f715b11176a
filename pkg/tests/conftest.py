import warnings

import numpy as np
import pytest

from novikov.mesh import NearCriticalWarning


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_near_critical():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearCriticalWarning)
        yield


_ACCEPTANCE: list[str] = []


@pytest.fixture
def report():
    """Record and print one acceptance line; ``ok=None`` marks a skip. Returns ``ok``."""
    def _report(criterion: str, ok: bool | None, detail: str) -> bool | None:
        verdict = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
        line = f"criterion {criterion}: {verdict}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
