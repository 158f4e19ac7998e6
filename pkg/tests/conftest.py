import numpy as np
import pytest

from nonwoven.imgcore import GrayImage


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gray(values, pitch=None):
    return GrayImage(np.asarray(values, dtype=np.uint8), pitch)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
