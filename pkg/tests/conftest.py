import numpy as np
import pytest

from addequiv.design import DesignModel, HistogramDensity


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fgm_uniform(theta=0.5, d=2, bins=1):
    margs = [HistogramDensity.uniform(bins) for _ in range(d)]
    th = theta if d == 2 else np.triu(np.full((d, d), theta), 1)
    return DesignModel.pairwise(margs, th)


def skewed_product(d=2):
    weights = [[1, 2, 1, 2], [2, 1, 1, 1], [1, 1, 2, 2], [3, 1, 1, 3]]
    return DesignModel.product([HistogramDensity.from_weights(weights[k % 4]) for k in range(d)])


def skewed_pairwise(theta=0.3):
    margs = [HistogramDensity.from_weights([1, 2, 1, 2]), HistogramDensity.from_weights([2, 1, 1, 1])]
    return DesignModel.pairwise(margs, theta)


MODEL_PANEL = {
    "uniform1": lambda: DesignModel.uniform(1),
    "uniform2": lambda: DesignModel.uniform(2),
    "skewed_product": skewed_product,
    "fgm": fgm_uniform,
    "skewed_pairwise": skewed_pairwise,
}


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
