import numpy as np
import pytest

from aps_iv.core import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(n=20, p=1, seed=0, **kw):
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, p))
    z = (r.random(n) < 0.5).astype(float)
    return Dataset(y=r.standard_normal(n), x_cont=x, d=z, z=z, **kw)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
