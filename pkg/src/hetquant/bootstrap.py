"""Two-layer quantile bootstrap for stochastic and deterministic designs.

Replicate ``b`` first resamples time periods within every unit and refits the
unit regressions, giving ``theta*_{Ti}``. The deterministic-design bootstrap
(DQB) takes the tau-quantile of those refits directly. The stochastic-design
bootstrap (SQB) additionally draws N units with replacement from the refits
before taking the quantile.

Randomness: replicate ``b`` draws its time indices from
``make_rng(seed, b, TAG_TIME)`` and its unit indices from
``make_rng(seed, b, TAG_UNIT)``. SQB and DQB therefore share the same
first-layer draws for a given seed, and no replicate's numbers depend on how
replicates are scheduled.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DegenerateResample, EmptyReplicates, ValidationError
from .ols import OlsFitOptions, fit_all, solve_batch
from .panel import PanelData, UnitEstimates
from .quantile import (
    QuantileTarget,
    aggregate,
    order_rank,
    sample_quantile,
    sample_quantile_rows,
    validate_tau,
    validate_tie,
)
from .rng import TAG_TIME, TAG_UNIT, make_rng

__all__ = [
    "BootstrapConfig",
    "BootstrapRun",
    "Design",
    "confidence_interval",
    "dqb_replicate",
    "first_step_bootstrap",
    "p_value_symmetric",
    "replicate_quantiles",
    "resample_unit_time",
    "run_bootstrap",
    "sqb_replicate",
]


class Design(str, Enum):
    SQB = "sqb"
    DQB = "dqb"

    @classmethod
    def parse(cls, value: str | Design) -> Design:
        if isinstance(value, Design):
            return value
        key = str(value).strip().lower()
        aliases = {"stochastic": "sqb", "deterministic": "dqb"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValidationError(f"unknown bootstrap design {value!r}; use sqb or dqb") from None

    def rate(self, n_units: int, n_periods: int) -> float:
        if self is Design.SQB:
            return math.sqrt(n_units)
        return math.sqrt(n_units * math.sqrt(n_periods))


@dataclass(frozen=True)
class BootstrapConfig:
    design: Design = Design.SQB
    n_replicates: int = 299
    alpha: float = 0.05
    seed: int = 0
    max_redraws: int = 10

    def __post_init__(self) -> None:
        object.__setattr__(self, "design", Design.parse(self.design))
        if int(self.n_replicates) < 1:
            raise ValidationError("n_replicates must be at least 1")
        if not 0.0 < float(self.alpha) < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        if int(self.max_redraws) < 0:
            raise ValidationError("max_redraws must be non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "n_replicates", int(self.n_replicates))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "max_redraws", int(self.max_redraws))


@dataclass(frozen=True, eq=False)
class BootstrapRun:
    point_estimate: float
    replicates: np.ndarray
    target: QuantileTarget
    design: Design
    rate: float
    ci_lower: float
    ci_upper: float
    seed: int
    alpha: float = 0.05
    n_units: int | None = None
    n_periods: int | None = None
    coef_name: str | None = field(default=None)

    @property
    def n_replicates(self) -> int:
        return int(self.replicates.size)

    @property
    def half_width(self) -> float:
        return self.ci_upper - self.point_estimate

    def p_value(self, theta_null: float) -> float:
        return p_value_symmetric(self, theta_null)

    def to_dict(self) -> dict:
        out = {
            "design": self.design.value,
            "tau": self.target.tau,
            "tie": self.target.tie,
            "coef_index": self.target.coef_index,
            "B": self.n_replicates,
            "seed": self.seed,
            "alpha": self.alpha,
            "point_estimate": self.point_estimate,
            "ci": [self.ci_lower, self.ci_upper],
            "rate": self.rate,
            "replicates": [float(v) for v in self.replicates],
        }
        if self.coef_name is not None:
            out["coef_name"] = self.coef_name
        if self.n_units is not None:
            out["n_units"] = self.n_units
            out["n_periods"] = self.n_periods
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> BootstrapRun:
        reps = np.array(d["replicates"], dtype=np.float64)
        reps.setflags(write=False)
        return cls(
            point_estimate=float(d["point_estimate"]),
            replicates=reps,
            target=QuantileTarget(d["tau"], d["coef_index"], d.get("tie", "lower")),
            design=Design.parse(d["design"]),
            rate=float(d["rate"]),
            ci_lower=float(d["ci"][0]),
            ci_upper=float(d["ci"][1]),
            seed=int(d["seed"]),
            alpha=float(d.get("alpha", 0.05)),
            n_units=d.get("n_units"),
            n_periods=d.get("n_periods"),
            coef_name=d.get("coef_name"),
        )


# -- inference from replicates ---------------------------------------------------------


def confidence_interval(replicates, point_estimate: float, alpha: float) -> tuple[float, float]:
    """Symmetric interval ``point_estimate -/+ q``.

    ``q`` is the ``ceil(B * (1 - alpha))``-th smallest absolute deviation
    ``|replicate_b - point_estimate|``. An interval built this way contains
    ``theta0`` exactly when ``p_value_symmetric(theta0) > alpha``.
    """
    reps = np.asarray(replicates, dtype=np.float64).ravel()
    if reps.size == 0:
        raise EmptyReplicates("confidence_interval needs at least one replicate")
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    dev = np.abs(reps - point_estimate)
    m = order_rank(reps.size, 1.0 - alpha) - 1
    q = float(np.partition(dev, m)[m])
    return point_estimate - q, point_estimate + q


# relative distance below which a null is indistinguishable from the estimate
TIE_RTOL = 1e-12


def _null_distance(point, theta_null):
    dist = np.abs(point - theta_null)
    scale = np.maximum(np.abs(point), np.abs(theta_null))
    return np.where(dist <= TIE_RTOL * scale, 0.0, dist)


def p_value_symmetric(run: BootstrapRun, theta_null: float) -> float:
    """Share of replicates at least as far from the estimate as ``theta_null`` is.

    A null within a relative ``TIE_RTOL`` of the estimate counts as distance
    zero, so rounding noise in a noiseless fit does not reject the truth.
    """
    dev = np.abs(run.replicates - run.point_estimate)
    return float(np.mean(dev >= _null_distance(run.point_estimate, theta_null)))


def symmetric_p_values(replicates: np.ndarray, point: np.ndarray, theta_null) -> np.ndarray:
    """Row-wise symmetric p-values for (M, B) replicates and (M,) estimates."""
    point = np.asarray(point, dtype=np.float64)
    dev = np.abs(replicates - point[..., None])
    return np.mean(dev >= _null_distance(point, theta_null)[..., None], axis=-1)


# -- resampling ------------------------------------------------------------------------


def resample_unit_time(
    panel: PanelData, unit: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw T rows of one unit with replacement, keeping (y, Z) rows paired."""
    if not 0 <= unit < panel.n_units:
        raise ValidationError(f"unit {unit} outside [0, {panel.n_units})")
    idx = rng.integers(0, panel.n_periods, size=panel.n_periods)
    return panel.y[unit, idx], panel.z[unit, idx]


def _block_size(panel: PanelData) -> int:
    # depends on the panel shape only, never on the thread count
    cells = panel.n_units * panel.n_periods * panel.n_regressors
    return int(max(1, min(64, 2_000_000 // cells)))


def _time_bootstrap_block(
    panel: PanelData,
    opts: OlsFitOptions,
    seed: int,
    max_redraws: int,
    replicate_indices: Sequence[int],
) -> np.ndarray:
    """First-layer refits for several replicates, shape (len(block), N, K)."""
    n, t, k = panel.n_units, panel.n_periods, panel.n_regressors
    rngs = [make_rng(seed, b, TAG_TIME) for b in replicate_indices]
    idx = np.stack([rng.integers(0, t, size=(n, t)) for rng in rngs])
    rows = np.arange(n)[None, :, None]
    y = panel.y[rows, idx]
    z = panel.z[rows, idx]
    theta, ok = solve_batch(y.reshape(-1, t), z.reshape(-1, t, k), opts.condition_limit)
    theta = theta.reshape(len(rngs), n, k)
    ok = ok.reshape(len(rngs), n)
    for j in np.flatnonzero(~ok.all(axis=1)):
        rng = rngs[j]
        bad = np.flatnonzero(~ok[j])
        for _ in range(max_redraws):
            redraw = rng.integers(0, t, size=(bad.size, t))
            th, good = solve_batch(
                panel.y[bad[:, None], redraw], panel.z[bad[:, None], redraw], opts.condition_limit
            )
            theta[j, bad[good]] = th[good]
            bad = bad[~good]
            if bad.size == 0:
                break
        if bad.size:
            raise DegenerateResample(int(bad[0]), int(replicate_indices[j]), max_redraws + 1)
    return theta


def first_step_bootstrap(
    panel: PanelData, opts: OlsFitOptions, cfg: BootstrapConfig, replicate_index: int
) -> UnitEstimates:
    """Resample time within each unit and refit: the first bootstrap layer.

    A unit whose resampled design is rank deficient is redrawn up to
    ``cfg.max_redraws`` times before :class:`DegenerateResample` is raised.
    """
    opts = opts or OlsFitOptions()
    opts.check_periods(panel.n_periods, panel.n_regressors)
    theta = _time_bootstrap_block(panel, opts, cfg.seed, cfg.max_redraws, [replicate_index])
    return UnitEstimates(
        theta[0],
        n_periods_used=panel.n_periods,
        coef_names=panel.coef_names,
        unit_labels=panel.unit_labels,
    )


def _unit_draws(seed: int, replicate_indices: Sequence[int], n: int) -> np.ndarray:
    return np.stack([make_rng(seed, b, TAG_UNIT).integers(0, n, size=n) for b in replicate_indices])


def sqb_replicate(
    panel: PanelData,
    opts: OlsFitOptions,
    cfg: BootstrapConfig,
    replicate_index: int,
    target: QuantileTarget,
) -> float:
    """One stochastic-design replicate: refit, resample units, re-aggregate."""
    star = first_step_bootstrap(panel, opts, cfg, replicate_index).estimates[:, target.coef_index]
    units = _unit_draws(cfg.seed, [replicate_index], panel.n_units)[0]
    return sample_quantile(star[units], target.tau, target.tie)


def dqb_replicate(
    panel: PanelData,
    opts: OlsFitOptions,
    cfg: BootstrapConfig,
    replicate_index: int,
    target: QuantileTarget,
) -> float:
    """One deterministic-design replicate: refit and re-aggregate, units fixed."""
    star = first_step_bootstrap(panel, opts, cfg, replicate_index).estimates[:, target.coef_index]
    return sample_quantile(star, target.tau, target.tie)


def replicate_quantiles(
    panel: PanelData,
    opts: OlsFitOptions | None,
    seed: int,
    n_replicates: int,
    coef_index: int,
    taus: Iterable[float],
    designs: Iterable[Design | str] = (Design.SQB, Design.DQB),
    max_redraws: int = 10,
    threads: int = 1,
    tie: str = "lower",
) -> dict[Design, np.ndarray]:
    """Replicates for several taus and both designs from one set of draws.

    Returns ``{design: array of shape (len(taus), n_replicates)}``. Entry
    ``[j, b]`` equals ``sqb_replicate`` / ``dqb_replicate`` for replicate
    ``b`` at ``taus[j]``.
    """
    opts = opts or OlsFitOptions()
    opts.check_periods(panel.n_periods, panel.n_regressors)
    taus = [validate_tau(t) for t in taus]
    tie = validate_tie(tie)
    designs = [Design.parse(d) for d in designs]
    if not 0 <= coef_index < panel.n_regressors:
        raise ValidationError(f"coef_index {coef_index} outside [0, {panel.n_regressors})")
    size = _block_size(panel)
    blocks = [range(s, min(s + size, n_replicates)) for s in range(0, n_replicates, size)]
    n = panel.n_units

    def work(block: range) -> dict[Design, np.ndarray]:
        star = _time_bootstrap_block(panel, opts, seed, max_redraws, block)[:, :, coef_index]
        out = {}
        if Design.DQB in designs:
            out[Design.DQB] = np.stack([sample_quantile_rows(star, t, tie) for t in taus])
        if Design.SQB in designs:
            units = _unit_draws(seed, block, n)
            resampled = np.take_along_axis(star, units, axis=1)
            out[Design.SQB] = np.stack([sample_quantile_rows(resampled, t, tie) for t in taus])
        return out

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    return {d: np.concatenate([p[d] for p in parts], axis=1) for d in designs}


def run_bootstrap(
    panel: PanelData,
    opts: OlsFitOptions | None,
    cfg: BootstrapConfig,
    target: QuantileTarget,
    threads: int = 1,
    estimates: UnitEstimates | None = None,
) -> BootstrapRun:
    """Point estimate, B replicates and the symmetric interval for one target.

    ``estimates`` may pass precomputed first-step fits of ``panel``.
    """
    opts = opts or OlsFitOptions()
    if estimates is None:
        estimates = fit_all(panel, opts)
    point = aggregate(estimates, target).value
    reps = replicate_quantiles(
        panel,
        opts,
        cfg.seed,
        cfg.n_replicates,
        target.coef_index,
        [target.tau],
        [cfg.design],
        cfg.max_redraws,
        threads,
        target.tie,
    )[cfg.design][0]
    reps.setflags(write=False)
    lo, hi = confidence_interval(reps, point, cfg.alpha)
    names = panel.coef_names
    return BootstrapRun(
        point_estimate=point,
        replicates=reps,
        target=target,
        design=cfg.design,
        rate=cfg.design.rate(panel.n_units, panel.n_periods),
        ci_lower=lo,
        ci_upper=hi,
        seed=cfg.seed,
        alpha=cfg.alpha,
        n_units=panel.n_units,
        n_periods=panel.n_periods,
        coef_name=names[target.coef_index] if names else None,
    )
