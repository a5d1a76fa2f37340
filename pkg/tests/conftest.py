import numpy as np
import pytest

from mccir.channel import ChannelPrior, default_cir, prior_moments

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def toy_s():
    return np.array([[1.0, 1.0], [0.0, 1.0]])


@pytest.fixture(scope="session")
def moments_l3():
    return prior_moments(ChannelPrior.from_variance(default_cir(3), 0.1))
