import itertools
import json
from collections import Counter

import numpy as np
import pytest

from hetquant.bootstrap import (
    BootstrapConfig,
    BootstrapRun,
    Design,
    confidence_interval,
    dqb_replicate,
    first_step_bootstrap,
    p_value_symmetric,
    replicate_quantiles,
    resample_unit_time,
    run_bootstrap,
    sqb_replicate,
)
from hetquant.errors import DegenerateResample, EmptyReplicates, ValidationError
from hetquant.ols import OlsFitOptions, fit_all
from hetquant.panel import PanelData
from hetquant.quantile import QuantileTarget, aggregate
from hetquant.simulation import DgpSpec, gen_theta, simulate_panel, true_quantile
from hetquant.rng import make_rng

from conftest import noiseless_panel

OPTS = OlsFitOptions()


def tv_distance(samples, pmf: dict) -> float:
    counts = Counter(np.round(samples, 9))
    n = len(samples)
    keys = set(counts) | set(pmf)
    return 0.5 * sum(abs(counts.get(k, 0) / n - pmf.get(k, 0.0)) for k in keys)


def unit_pmf(y, z):
    """Exact law of one unit's refit over all T^T equally likely resamples, given full rank."""
    t = len(y)
    values = []
    for idx in itertools.product(range(t), repeat=t):
        zi = z[list(idx)]
        if np.linalg.matrix_rank(zi) < zi.shape[1]:
            continue
        values.append(np.linalg.lstsq(zi, y[list(idx)], rcond=None)[0])
    return np.array(values)


def lower_quantile(v, tau):
    v = sorted(v)
    return v[int(np.ceil(round(len(v) * tau, 9))) - 1]


def enumerate_replicates(panel, coef, tau, design):
    per_unit = [unit_pmf(panel.y[i], panel.z[i])[:, coef] for i in range(panel.n_units)]
    n = panel.n_units
    pmf = Counter()
    unit_draws = list(itertools.product(range(n), repeat=n)) if design is Design.SQB else [tuple(range(n))]
    weight_t = np.prod([1.0 / len(u) for u in per_unit])
    for combo in itertools.product(*per_unit):
        for draw in unit_draws:
            q = lower_quantile([combo[i] for i in draw], tau)
            pmf[round(float(q), 9)] += weight_t / len(unit_draws)
    return dict(pmf)


@pytest.fixture
def toy3():
    y = np.array([[0.3, 1.1, 2.9], [0.5, -0.7, 1.6], [2.0, 0.1, -1.2]])
    x = np.array([[0.0, 1.0, 2.0], [-1.0, 0.5, 3.0], [1.0, 2.0, 4.0]])
    return PanelData.from_regressors(y, x)


# -- resampling ----------------------------------------------------------------------


def test_resample_single_period():
    p = PanelData.from_regressors(np.array([[4.2]]))
    for s in range(5):
        y, z = resample_unit_time(p, 0, np.random.default_rng(s))
        assert y.tolist() == [4.2] and z.tolist() == [[1.0]]


def test_resample_is_deterministic_and_keeps_rows_paired(rng):
    p = PanelData.from_regressors(np.arange(6.0)[None], (10 * np.arange(6.0))[None])
    a = resample_unit_time(p, 0, np.random.default_rng(9))
    b = resample_unit_time(p, 0, np.random.default_rng(9))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1][:, 1], 10 * a[0])


def test_resample_frequencies():
    p = PanelData.from_regressors(np.arange(4.0)[None])
    g = np.random.default_rng(2024)
    draws = np.concatenate([resample_unit_time(p, 0, g)[0] for _ in range(10_000)])
    freq = np.bincount(draws.astype(int), minlength=4) / draws.size
    np.testing.assert_allclose(freq, 0.25, atol=0.02)


# -- first layer -------------------------------------------------------------------------


def test_first_step_noiseless_invariance():
    coefs = np.column_stack([np.linspace(-1, 1, 6), np.arange(6.0), np.ones(6)])
    panel = noiseless_panel(coefs, n_periods=25)
    cfg = BootstrapConfig(seed=3)
    for b in range(5):
        est = first_step_bootstrap(panel, OPTS, cfg, b).estimates
        np.testing.assert_allclose(est, coefs, atol=1e-10)


def test_first_step_deterministic(toy3):
    cfg = BootstrapConfig(seed=11)
    a = first_step_bootstrap(toy3, OPTS, cfg, 5).estimates
    b = first_step_bootstrap(toy3, OPTS, cfg, 5).estimates
    assert a.tobytes() == b.tobytes()
    c = first_step_bootstrap(toy3, OPTS, cfg, 6).estimates
    assert a.tobytes() != c.tobytes()


def test_degenerate_probability_matches_enumeration():
    # x = (0, 1, 1): a resample is rank deficient iff every drawn x is equal
    x = np.array([0.0, 1.0, 1.0])
    degenerate = sum(len({x[i] for i in idx}) == 1 for idx in itertools.product(range(3), repeat=3))
    p_exact = degenerate / 27
    assert p_exact == pytest.approx(1 / 3)
    panel = PanelData.from_regressors(np.array([[0.2, 0.9, 1.4]]), x[None])
    cfg = BootstrapConfig(seed=5, max_redraws=0)
    fails = 0
    for b in range(3000):
        try:
            first_step_bootstrap(panel, OPTS, cfg, b)
        except DegenerateResample as exc:
            assert exc.unit == 0 and exc.replicate == b
            fails += 1
    assert fails / 3000 == pytest.approx(p_exact, abs=0.03)
    # two distinct rows at T = 2: probability 2 * (1/2)^2
    two = np.array([0.0, 1.0])
    assert sum(len({two[i] for i in idx}) == 1 for idx in itertools.product(range(2), repeat=2)) / 4 == 0.5


def test_redraw_recovers_and_exhaustion_raises():
    x = np.array([[0.0, 1.0, 1.0]])
    panel = PanelData.from_regressors(np.array([[0.2, 0.9, 1.4]]), x)
    cfg = BootstrapConfig(seed=5, max_redraws=10)
    for b in range(300):
        assert np.all(np.isfinite(first_step_bootstrap(panel, OPTS, cfg, b).estimates))
    constant = PanelData.from_regressors(np.array([[0.2, 0.9, 1.4]]), np.full((1, 3), 2.0))
    with pytest.raises(DegenerateResample) as info:
        first_step_bootstrap(constant, OPTS, cfg, 7)
    assert (info.value.unit, info.value.replicate, info.value.attempts) == (0, 7, 11)


# -- replicates ---------------------------------------------------------------------------


def test_singleton_panel_replicates():
    panel = PanelData.from_regressors(np.array([[1.0, 4.0, 2.0, 8.0]]), np.array([[0.5, 1.0, 3.0, 2.0]]))
    cfg = BootstrapConfig(seed=1)
    target = QuantileTarget(0.3, 1)
    for b in range(4):
        star = first_step_bootstrap(panel, OPTS, cfg, b).estimates[0, 1]
        assert sqb_replicate(panel, OPTS, cfg, b, target) == star
        assert dqb_replicate(panel, OPTS, cfg, b, target) == star


def test_replicate_functions_match_run(toy3):
    target = QuantileTarget(0.5, 1)
    for design, fn in ((Design.SQB, sqb_replicate), (Design.DQB, dqb_replicate)):
        cfg = BootstrapConfig(design=design, n_replicates=40, seed=99)
        run = run_bootstrap(toy3, OPTS, cfg, target)
        assert [fn(toy3, OPTS, cfg, b, target) for b in range(40)] == run.replicates.tolist()


def test_dqb_enumeration_two_by_two():
    panel = PanelData.from_regressors(np.array([[1.0, 3.0], [2.0, 5.0]]))
    target = QuantileTarget(0.5, 0)
    pmf = enumerate_replicates(panel, 0, 0.5, Design.DQB)
    assert sum(pmf.values()) == pytest.approx(1.0)
    assert len(pmf) == 3  # min of the two means: 1, 2 or 3
    run = run_bootstrap(panel, OPTS, BootstrapConfig(Design.DQB, n_replicates=20_000, seed=8), target)
    assert tv_distance(run.replicates, pmf) < 0.05


@pytest.mark.parametrize("design", [Design.SQB, Design.DQB])
def test_enumeration_three_by_three(toy3, design):
    pmf = enumerate_replicates(toy3, 1, 0.5, design)
    assert sum(pmf.values()) == pytest.approx(1.0)
    run = run_bootstrap(toy3, OPTS, BootstrapConfig(design, n_replicates=20_000, seed=21), QuantileTarget(0.5, 1))
    assert tv_distance(run.replicates, pmf) < 0.05


def test_sqb_noiseless_enumeration_n3():
    theta = np.array([0.5, 1.5, 4.0])
    panel = noiseless_panel(np.column_stack([np.zeros(3), theta]), n_periods=12)
    pmf = Counter()
    for draw in itertools.product(range(3), repeat=3):
        pmf[round(lower_quantile(theta[list(draw)], 0.5), 9)] += 1 / 27
    run = run_bootstrap(panel, OPTS, BootstrapConfig(Design.SQB, n_replicates=20_000, seed=2), QuantileTarget(0.5, 1))
    assert tv_distance(run.replicates, dict(pmf)) < 0.05


def test_zero_noise_collapse():
    theta = np.linspace(-2, 2, 9)
    panel = noiseless_panel(np.column_stack([np.ones(9), theta]), n_periods=15)
    target = QuantileTarget(0.4, 1)
    dqb = run_bootstrap(panel, OPTS, BootstrapConfig(Design.DQB, n_replicates=99, seed=4), target)
    np.testing.assert_allclose(dqb.replicates, dqb.point_estimate, atol=1e-12)
    assert dqb.ci_upper - dqb.ci_lower <= 2e-12
    sqb = run_bootstrap(panel, OPTS, BootstrapConfig(Design.SQB, n_replicates=99, seed=4), target)
    nearest = np.abs(sqb.replicates[:, None] - theta[None]).min(axis=1)
    assert nearest.max() <= 1e-12
    assert np.ptp(sqb.replicates) > 0


def test_replicates_are_members_of_first_step_sets(toy3):
    target = QuantileTarget(0.5, 1)
    cfg = BootstrapConfig(seed=17)
    for b in range(20):
        star = first_step_bootstrap(toy3, OPTS, cfg, b).estimates[:, 1]
        assert sqb_replicate(toy3, OPTS, cfg, b, target) in star
        assert dqb_replicate(toy3, OPTS, cfg, b, target) in star


def test_bitwise_identical_across_thread_counts():
    rng = make_rng(1, 0, 0)
    spec = DgpSpec(family="regression_gaussian", n_units=30, n_periods=20, k_regressors=3,
                   heterogeneity="stochastic_std_normal")
    panel = simulate_panel(spec, gen_theta(spec, 30, rng), rng)
    runs = [
        run_bootstrap(panel, OPTS, BootstrapConfig(Design.SQB, n_replicates=299, seed=77), QuantileTarget(0.3, 2),
                      threads=k).to_json()
        for k in (1, 4, 8)
    ]
    assert runs[0] == runs[1] == runs[2]


def test_shared_draws_between_designs(toy3):
    reps = replicate_quantiles(toy3, OPTS, 5, 30, 1, [0.3, 0.5], (Design.SQB, Design.DQB))
    for d in (Design.SQB, Design.DQB):
        run = run_bootstrap(toy3, OPTS, BootstrapConfig(d, n_replicates=30, seed=5), QuantileTarget(0.5, 1))
        assert run.replicates.tolist() == reps[d][1].tolist()


# -- intervals and p-values -------------------------------------------------------------


def make_run(point, reps, alpha=0.05):
    reps = np.asarray(reps, dtype=float)
    lo, hi = confidence_interval(reps, point, alpha)
    return BootstrapRun(point, reps, QuantileTarget(0.5), Design.SQB, 1.0, lo, hi, seed=0, alpha=alpha)


def test_p_value_examples():
    run = make_run(0.0, [1.0, -2.0, 3.0, -4.0])
    assert p_value_symmetric(run, 0.0) == 1.0
    assert p_value_symmetric(run, 2.5) == 0.5
    assert p_value_symmetric(run, -2.5) == 0.5
    assert p_value_symmetric(run, 10.0) == 0.0


def order_statistic_oracle(dev, alpha):
    d = sorted(abs(v) for v in dev)
    m = next(j for j in range(1, len(d) + 1) if j >= len(d) * (1 - alpha) - 1e-12)
    return d[m - 1]


def test_confidence_interval_examples():
    assert confidence_interval([2.0, 2.0, 2.0], 2.0, 0.05) == (2.0, 2.0)
    dev = [-3.0, -1.0, 1.0, 3.0]
    q = order_statistic_oracle(dev, 0.5)
    assert q == 1.0
    assert confidence_interval(np.array(dev) + 10, 10.0, 0.5) == (10 - q, 10 + q)
    with pytest.raises(EmptyReplicates):
        confidence_interval([], 0.0, 0.05)


def test_single_replicate_interval(toy3):
    run = run_bootstrap(toy3, OPTS, BootstrapConfig(n_replicates=1, seed=3), QuantileTarget(0.5, 1))
    assert run.replicates.shape == (1,)
    assert run.half_width == pytest.approx(abs(run.replicates[0] - run.point_estimate), abs=1e-15)


def test_interval_is_dual_to_p_value(rng):
    for b_count, alpha in ((20, 0.05), (99, 0.1), (299, 0.05), (7, 0.3)):
        for _ in range(200):
            reps = rng.normal(size=b_count)
            run = make_run(0.1, reps, alpha)
            theta0 = rng.normal(scale=1.5)
            covered = run.ci_lower <= theta0 <= run.ci_upper
            assert covered == (p_value_symmetric(run, theta0) > alpha)


def test_duality_on_simulated_panels():
    spec = DgpSpec(n_units=20, n_periods=10)
    truth = true_quantile(spec, 0.3)
    for r in range(200):
        rng = make_rng(314, r, 0)
        panel = simulate_panel(spec, gen_theta(spec, 20, rng), rng)
        for design in Design:
            run = run_bootstrap(panel, OPTS, BootstrapConfig(design, n_replicates=39, seed=r), QuantileTarget(0.3))
            covered = run.ci_lower <= truth <= run.ci_upper
            assert covered == (run.p_value(truth) > run.alpha)


def test_rates_and_json_round_trip(toy3):
    run = run_bootstrap(toy3, OPTS, BootstrapConfig(Design.DQB, n_replicates=10, seed=1), QuantileTarget(0.5, 1))
    assert run.rate == pytest.approx(np.sqrt(3 * np.sqrt(3)))
    doc = json.loads(run.to_json())
    assert {"design", "tau", "coef_index", "B", "seed", "point_estimate", "ci", "rate", "replicates"} <= set(doc)
    back = BootstrapRun.from_dict(doc)
    assert back.replicates.tolist() == run.replicates.tolist()
    assert (back.ci_lower, back.ci_upper, back.design) == (run.ci_lower, run.ci_upper, run.design)
    sqb = run_bootstrap(toy3, OPTS, BootstrapConfig(Design.SQB, n_replicates=10, seed=1), QuantileTarget(0.5, 1))
    assert sqb.rate == pytest.approx(np.sqrt(3))


def test_config_validation():
    with pytest.raises(ValidationError):
        BootstrapConfig(n_replicates=0)
    with pytest.raises(ValidationError):
        BootstrapConfig(alpha=1.0)
    with pytest.raises(ValidationError):
        BootstrapConfig(design="bca")
    with pytest.raises(ValidationError):
        BootstrapConfig(seed=-1)
    assert BootstrapConfig(design="DQB").design is Design.DQB


def test_point_estimate_is_algorithm_one(toy3):
    run = run_bootstrap(toy3, OPTS, BootstrapConfig(n_replicates=5), QuantileTarget(0.5, 1))
    assert run.point_estimate == aggregate(fit_all(toy3), QuantileTarget(0.5, 1)).value


def test_midpoint_rule_threads_through(toy3):
    target = QuantileTarget(0.5, 1, tie="midpoint")
    panel = PanelData.from_regressors(np.vstack([toy3.y, toy3.y[:1] + 1]), np.vstack([toy3.z[:, :, 1], toy3.z[:1, :, 1]]))
    cfg = BootstrapConfig(Design.SQB, n_replicates=25, seed=4)
    run = run_bootstrap(panel, OPTS, cfg, target)
    est = fit_all(panel).estimates[:, 1]
    assert run.point_estimate == 0.5 * (np.sort(est)[1] + np.sort(est)[2])
    assert [sqb_replicate(panel, OPTS, cfg, b, target) for b in range(25)] == run.replicates.tolist()
    back = BootstrapRun.from_dict(json.loads(run.to_json()))
    assert back.target.tie == "midpoint"
