import numpy as np
import pytest

from hetquant.panel import PanelData


def noiseless_panel(coefs: np.ndarray, n_periods: int, seed: int = 0) -> PanelData:
    """Panel with y = Z @ coef_i exactly; Z has an intercept and standard-normal columns."""
    coefs = np.atleast_2d(np.asarray(coefs, dtype=float))
    n, k = coefs.shape
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n_periods, k - 1))
    z = np.concatenate([np.ones((n, n_periods, 1)), x], axis=2)
    y = np.einsum("ntk,nk->nt", z, coefs)
    return PanelData(y=y, z=z)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
