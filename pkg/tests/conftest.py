import numpy as np
import pytest

from smallergm.tables import TableCache


@pytest.fixture
def cache():
    return TableCache()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line; returns the verdict so tests can assert it.

    ``ok=None`` records a criterion that was not run.
    """

    def record(label, ok, detail):
        verdict = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"CRITERION {label} {verdict}: {detail}"
        print(line)
        _ACCEPTANCE.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
