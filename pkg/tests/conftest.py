import numpy as np
import pytest

from latentcss.css_data import CssTensor, offdiag_mask
from latentcss.model_core import draw_from_prior, elicit_hyperparameters


def random_css(n, rng, density=0.3):
    y = (rng.random((n, n, n)) < density).astype(np.int8)
    y[~offdiag_mask(n)] = 0
    return CssTensor(y)


def random_state(n, K, rng, p=1):
    return draw_from_prior(elicit_hyperparameters(K, p), n, rng)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_problem(rng):
    n, K = 5, 2
    hyper = elicit_hyperparameters(K)
    return random_css(n, rng), draw_from_prior(hyper, n, rng), hyper


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, ok, detail)``."""

    def record(number, ok, detail=""):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":").rstrip("ab"))):
            terminalreporter.write_line(line)
