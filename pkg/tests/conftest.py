from __future__ import annotations

import sys

import numpy as np
import pytest

from macchiato.fixtures import f1, random_stack


@pytest.fixture
def f1_stack():
    return f1()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_stacks(seed: int, count: int, **kw):
    rng = np.random.default_rng(seed)
    return [random_stack(rng, **kw) for _ in range(count)]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
