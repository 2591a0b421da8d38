from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hiermrc.dist import JointPmf, Pmf

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def joint3x3() -> JointPmf:
    return JointPmf("abc", "def", [[.2, .2, 0], [.1, .1, 0], [0, 0, .4]])


@pytest.fixture
def coin() -> tuple[Pmf, Pmf]:
    """(target, prior) for the two-symbol running example."""
    return Pmf([0, 1], [0.9, 0.1]), Pmf([0, 1], [0.5, 0.5])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {crit:>2}: {detail}")
