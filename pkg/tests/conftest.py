import numpy as np
import pytest

# acceptance criteria append (number, passed, detail) here
ACCEPTANCE_RESULTS = []


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240607))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
