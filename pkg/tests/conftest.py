import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        status, title, elapsed, note = RESULTS[number]
        line = f"CRITERION {number:2d} {status}  {title} ({elapsed:.1f}s)"
        terminalreporter.write_line(line + (f"  [{note}]" if note else ""))
