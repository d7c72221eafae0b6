from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# numba compiles on first call, so the first example of a property can be slow
settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


@pytest.fixture
def report_ac(capsys):
    """Print one verdict line per acceptance criterion and keep it for the summary."""

    def emit(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
