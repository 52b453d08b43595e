from functools import lru_cache

import numpy as np
import pytest

from thinpen import AnalyticField
from thinpen.blowup import HomPoly
from thinpen.instances import CANONICAL, solve_instance


@lru_cache(maxsize=None)
def solved(name: str, h: float = 0.02):
    """Canonical instance solved once per session and grid."""
    return solve_instance(CANONICAL[name], h=h)


def linear_x1():
    return AnalyticField(
        lambda x: x[:, 0],
        lambda x: np.stack([np.ones(len(x)), np.zeros(len(x))], axis=1),
        label="x1",
    )


@pytest.fixture
def p2():
    return HomPoly.re_power(2)


@pytest.fixture
def x1_field():
    return linear_x1()


# (criterion number, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
