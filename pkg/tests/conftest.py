import warnings

import numpy as np
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one ``ACCEPTANCE #n: PASS/FAIL ...`` line; echoed again in the terminal summary."""
    def emit(n, ok, detail):
        line = f"ACCEPTANCE #{n}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("#")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_holder_warnings():
    # sampled paths only estimate their Hölder exponent; the warning is exercised explicitly
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="estimated Hölder exponents")
        yield
