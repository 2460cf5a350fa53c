import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collector for one pass/fail line per acceptance criterion; the lines
    are replayed in the terminal summary."""

    def record(criterion: int, passed: bool, detail: str):
        status = "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"criterion {criterion:>2}: {status}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def full_profile_enabled() -> bool:
    return os.environ.get("CIASIM_ACCEPT_FULL", "") == "1"
