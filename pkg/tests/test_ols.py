import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetquant.errors import InsufficientPeriods, RankDeficient, ValidationError
from hetquant.ols import OlsFitOptions, fit_all, fit_unit, solve_batch
from hetquant.panel import PanelData

from conftest import noiseless_panel


def design(x):
    x = np.asarray(x, dtype=float)
    return np.column_stack([np.ones(len(x)), x])


def normal_equations(y, z):
    """Independent oracle: explicit Gram inverse."""
    return np.linalg.inv(z.T @ z) @ (z.T @ y)


def test_exact_line():
    np.testing.assert_allclose(fit_unit([2, 4, 6], design([1, 2, 3])), [0.0, 2.0], atol=1e-12)


def test_constant_outcome():
    theta = fit_unit(np.full(6, 5.0), design([0.3, -1, 2, 7, 1, 0]))
    np.testing.assert_allclose(theta, [5.0, 0.0], atol=1e-12)


def test_matches_normal_equations(rng):
    z = np.column_stack([np.ones(50), rng.normal(size=(50, 2))])
    y = z @ np.array([0.5, -1.0, 2.0]) + rng.normal(size=50)
    expected = normal_equations(y, z)
    np.testing.assert_allclose(fit_unit(y, z), expected, rtol=1e-10, atol=0)


def test_residual_orthogonality(rng):
    for _ in range(50):
        t, k = rng.integers(5, 60), rng.integers(1, 6)
        t = max(t, k + 1)
        z = np.column_stack([np.ones(t), rng.normal(size=(t, k - 1)) * rng.uniform(0.1, 100)])
        y = rng.standard_cauchy(t)
        theta = fit_unit(y, z)
        resid = y - z @ theta
        assert np.max(np.abs(z.T @ resid)) <= 1e-8 * (1 + np.max(np.abs(z.T @ y)))


def test_rank_deficient_is_an_error():
    z = np.column_stack([np.ones(5), np.full(5, 2.0)])
    with pytest.raises(RankDeficient):
        fit_unit(np.arange(5.0), z)
    collinear = np.column_stack([np.ones(6), np.arange(6.0), 2 * np.arange(6.0)])
    with pytest.raises(RankDeficient):
        fit_unit(np.arange(6.0), collinear)


def test_condition_limit_respected():
    x = np.array([0.0, 1e-7, 2e-7, 3e-7]) + 1.0
    z = design(x)
    fit_unit(x, z, OlsFitOptions(condition_limit=1e30))
    with pytest.raises(RankDeficient):
        fit_unit(x, z, OlsFitOptions(condition_limit=1e8))


def test_insufficient_periods():
    with pytest.raises(InsufficientPeriods):
        fit_unit([1.0, 2.0], design([1, 2]))
    np.testing.assert_allclose(fit_unit([1.0, 2.0], design([1, 2]), OlsFitOptions(min_dof=0)), [0, 1], atol=1e-12)


def test_options_validation():
    with pytest.raises(ValidationError):
        OlsFitOptions(condition_limit=1.0)
    with pytest.raises(ValidationError):
        OlsFitOptions(min_dof=-1)


def test_fit_all_singleton(rng):
    y, z = rng.normal(size=(1, 12)), np.concatenate([np.ones((1, 12, 1)), rng.normal(size=(1, 12, 2))], axis=2)
    est = fit_all(PanelData(y=y, z=z))
    assert est.estimates.shape == (1, 3)
    np.testing.assert_array_equal(est.estimates[0], fit_unit(y[0], z[0]))


def test_fit_all_identical_units(rng):
    y = np.tile(rng.normal(size=10), (4, 1))
    z = np.tile(np.column_stack([np.ones(10), rng.normal(size=10)]), (4, 1, 1))
    est = fit_all(PanelData(y=y, z=z)).estimates
    assert np.all(est == est[0])


def test_fit_all_noiseless_recovery():
    n = 7
    coefs = np.column_stack([np.zeros(n), np.arange(n, dtype=float)])
    est = fit_all(noiseless_panel(coefs, n_periods=9)).estimates
    np.testing.assert_allclose(est, coefs, atol=1e-10)


def test_fit_all_reports_bad_unit(rng):
    z = np.concatenate([np.ones((3, 6, 1)), rng.normal(size=(3, 6, 1))], axis=2)
    z[2, :, 1] = 1.5
    with pytest.raises(RankDeficient, match="unit 2"):
        fit_all(PanelData(y=rng.normal(size=(3, 6)), z=z))


def test_batch_matches_single(rng):
    y = rng.normal(size=(20, 15))
    z = np.concatenate([np.ones((20, 15, 1)), rng.normal(size=(20, 15, 3))], axis=2)
    theta, ok = solve_batch(y, z)
    assert ok.all()
    for i in range(20):
        np.testing.assert_array_equal(theta[i], fit_unit(y[i], z[i]))


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    c=st.floats(0.01, 100) | st.floats(-100, -0.01),
    t=st.integers(6, 40),
    k=st.integers(1, 4),
)
def test_affine_equivariance_and_refit(seed, c, t, k):
    rng = np.random.default_rng(seed)
    z = np.column_stack([np.ones(t), rng.normal(size=(t, k - 1))])
    y = rng.normal(size=t)
    delta = rng.normal(size=k)
    theta = fit_unit(y, z)
    scale = max(1.0, np.max(np.abs(theta)))
    np.testing.assert_allclose(fit_unit(c * y, z), c * theta, atol=1e-9 * abs(c) * scale)
    np.testing.assert_allclose(fit_unit(y + z @ delta, z), theta + delta, atol=1e-9 * (scale + np.max(np.abs(delta))))
    np.testing.assert_allclose(fit_unit(z @ theta, z), theta, atol=1e-10 * scale)


def test_deterministic_bits(rng):
    y = rng.normal(size=(5, 30))
    z = np.concatenate([np.ones((5, 30, 1)), rng.normal(size=(5, 30, 4))], axis=2)
    p = PanelData(y=y, z=z)
    assert fit_all(p).estimates.tobytes() == fit_all(p).estimates.tobytes()
