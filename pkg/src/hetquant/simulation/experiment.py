"""Monte Carlo bias and coverage experiments.

Each cell (N, T, tau, design) runs ``n_mc`` independent replications. A
replication simulates a panel, estimates the tau-quantile, bootstraps it and
records the symmetric p-value of the true target for every requested method.
Coverage is the share of replications with ``p > alpha``.

Seeds: a cell's seed is ``key_seed(master_seed, cell.key(spec))``, so a cell
gives the same numbers whether it runs alone or inside a larger grid.
Replication ``r`` simulates from ``make_rng(cell_seed, r, TAG_DGP)`` and
bootstraps with master seed ``derive_seed(cell_seed, r, TAG_BOOT)``. SQB and
DQB in one cell share panels and first-layer draws.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..bootstrap import Design, replicate_quantiles, symmetric_p_values
from ..errors import HetQuantError, IoError, NumericalError, ValidationError
from ..ols import OlsFitOptions, fit_all
from ..quantile import sample_quantile, validate_tau, validate_tie
from ..rng import TAG_BOOT, TAG_DGP, derive_seed, key_seed, make_rng
from .dgp import DgpSpec, gen_theta, simulate_panel, true_quantile

log = logging.getLogger(__name__)

__all__ = [
    "CellResult",
    "CoverageCell",
    "CoverageReport",
    "SimulationFailure",
    "run_coverage_experiment",
    "simulate_estimates",
]

REPORT_COLUMNS = [
    "N", "T", "tau", "design", "method", "bias", "coverage",
    "mc_stderr", "n_mc", "B", "sd",
]


class SimulationFailure(NumericalError):
    """A Monte Carlo replication failed; the cell is aborted."""


@dataclass(frozen=True)
class CoverageCell:
    n_units: int
    n_periods: int
    tau: float
    design: str = "stochastic"
    methods: tuple[Design, ...] = (Design.SQB, Design.DQB)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tau", validate_tau(self.tau))
        design = str(self.design).lower()
        if design not in ("stochastic", "deterministic"):
            raise ValidationError(f"design must be stochastic or deterministic, got {self.design!r}")
        object.__setattr__(self, "design", design)
        methods = tuple(dict.fromkeys(Design.parse(m) for m in self.methods))
        if not methods:
            raise ValidationError("a cell needs at least one bootstrap method")
        object.__setattr__(self, "methods", methods)

    def spec(self, template: DgpSpec) -> DgpSpec:
        return template.with_cell(self.n_units, self.n_periods, self.design)

    def key(self, template: DgpSpec) -> str:
        s = self.spec(template)
        return "|".join(
            str(v)
            for v in (
                s.family.value, s.heterogeneity.value, s.scale_mode.value,
                s.k_regressors, s.nuisance_slopes.value, repr(s.noise_scale),
                s.n_units, s.n_periods, repr(self.tau),
            )
        )


@dataclass
class CellResult:
    cell: CoverageCell
    spec: DgpSpec
    theta_true: float
    theta_hat: np.ndarray  # (n_mc,)
    p_values: dict[Design, np.ndarray]  # method -> (n_mc,)
    n_replicates: int
    alpha: float

    @property
    def n_mc(self) -> int:
        return int(self.theta_hat.size)

    @property
    def bias(self) -> float:
        return float(np.mean(self.theta_hat - self.theta_true))

    @property
    def sd(self) -> float:
        return float(np.std(self.theta_hat, ddof=1)) if self.n_mc > 1 else 0.0

    def coverage(self, method: Design | str) -> float:
        return float(np.mean(self.p_values[Design.parse(method)] > self.alpha))

    def mc_stderr(self, method: Design | str) -> float:
        c = self.coverage(method)
        return math.sqrt(c * (1.0 - c) / self.n_mc)

    def records(self) -> list[dict]:
        return [
            {
                "N": self.cell.n_units,
                "T": self.cell.n_periods,
                "tau": self.cell.tau,
                "design": self.cell.design,
                "method": m.value.upper(),
                "bias": self.bias,
                "coverage": self.coverage(m),
                "mc_stderr": self.mc_stderr(m),
                "n_mc": self.n_mc,
                "B": self.n_replicates,
                "sd": self.sd,
            }
            for m in self.cell.methods
        ]


@dataclass
class CoverageReport:
    cells: list[CellResult] = field(default_factory=list)
    name: str | None = None
    master_seed: int | None = None

    @property
    def records(self) -> list[dict]:
        return [r for c in self.cells for r in c.records()]

    def find(self, n_units: int, n_periods: int, tau: float | None = None, design: str | None = None) -> CellResult:
        for c in self.cells:
            cell = c.cell
            if (cell.n_units, cell.n_periods) == (n_units, n_periods) and (
                tau is None or math.isclose(cell.tau, tau)
            ) and (design is None or cell.design == design):
                return c
        raise KeyError((n_units, n_periods, tau, design))

    def write_csv(self, path: str | os.PathLike) -> None:
        """One row per (cell, method) with MC standard errors."""
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
                writer.writeheader()
                for rec in self.records:
                    writer.writerow({k: _fmt(v) for k, v in rec.items()})
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    def write_table_csv(self, path: str | os.PathLike) -> None:
        """Table layout: one column per cell, rows Bias / method / method_se."""
        cols = [c.cell for c in self.cells]
        methods = list(dict.fromkeys(m for c in cols for m in c.methods))
        rows = [
            ["N"] + [c.n_units for c in cols],
            ["T"] + [c.n_periods for c in cols],
            ["tau"] + [c.tau for c in cols],
            ["Bias"] + [_fmt(r.bias) for r in self.cells],
        ]
        for m in methods:
            name = m.value.upper()
            rows.append([name] + [_fmt(r.coverage(m)) if m in r.cell.methods else "" for r in self.cells])
            rows.append([f"{name}_se"] + [_fmt(r.mc_stderr(m)) if m in r.cell.methods else "" for r in self.cells])
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                csv.writer(fh, lineterminator="\n").writerows(rows)
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".6g") if abs(v) >= 1e-4 or v == 0 else format(v, ".4e")
    return str(v)


def _chunks(n: int, size: int) -> list[range]:
    return [range(s, min(s + size, n)) for s in range(0, n, size)]


def _pool_map(fn, items: Sequence, threads: int) -> list:
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _run_cell(
    cell: CoverageCell,
    template: DgpSpec,
    n_mc: int,
    n_replicates: int,
    master_seed: int,
    alpha: float,
    opts: OlsFitOptions,
    threads: int,
    tie: str,
) -> CellResult:
    spec = cell.spec(template)
    cell_seed = key_seed(master_seed, cell.key(template))
    theta_true = true_quantile(spec, cell.tau, tie)
    p = spec.target_index

    def replication(r: int) -> tuple[float, dict]:
        try:
            rng = make_rng(cell_seed, r, TAG_DGP)
            panel = simulate_panel(spec, gen_theta(spec, spec.n_units, rng), rng)
            est = fit_all(panel, opts)
            theta_hat = sample_quantile(est.estimates[:, p], cell.tau, tie)
            reps = replicate_quantiles(
                panel, opts, derive_seed(cell_seed, r, TAG_BOOT), n_replicates, p,
                [cell.tau], cell.methods, tie=tie,
            )
        except HetQuantError as exc:
            raise SimulationFailure(
                f"cell N={cell.n_units} T={cell.n_periods} tau={cell.tau} "
                f"{cell.design}: replication {r} failed: {exc}"
            ) from exc
        pv = {m: float(symmetric_p_values(reps[m][0][None], np.array([theta_hat]), theta_true)[0])
              for m in cell.methods}
        return theta_hat, pv

    def chunk(rs: range) -> list:
        return [replication(r) for r in rs]

    out = [x for part in _pool_map(chunk, _chunks(n_mc, 8), threads) for x in part]
    theta_hat = np.array([o[0] for o in out])
    p_values = {m: np.array([o[1][m] for o in out]) for m in cell.methods}
    return CellResult(cell, spec, theta_true, theta_hat, p_values, n_replicates, alpha)


def run_coverage_experiment(
    grid: Iterable[CoverageCell],
    spec_template: DgpSpec,
    n_mc: int,
    n_replicates: int,
    master_seed: int,
    alpha: float = 0.05,
    opts: OlsFitOptions | None = None,
    threads: int = 1,
    name: str | None = None,
    tie: str = "lower",
) -> CoverageReport:
    """Bias and coverage for every cell of ``grid``.

    Cells are listed with their bootstrap methods; a cell's methods share
    simulated panels, so listing SQB and DQB together costs one simulation.
    ``tie`` is the quantile tie rule used for estimates, replicates and the
    deterministic-design truth. It does not enter the seeds, so both rules see
    identical panels.
    """
    tie = validate_tie(tie)
    if int(n_mc) < 1:
        raise ValidationError("n_mc must be at least 1")
    if int(n_replicates) < 1:
        raise ValidationError("B must be at least 1")
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    opts = opts or OlsFitOptions()
    report = CoverageReport(name=name, master_seed=int(master_seed))
    for cell in grid:
        log.info("cell N=%d T=%d tau=%g %s", cell.n_units, cell.n_periods, cell.tau, cell.design)
        report.cells.append(
            _run_cell(cell, spec_template, int(n_mc), int(n_replicates), int(master_seed), alpha, opts, threads, tie)
        )
    return report


def simulate_estimates(
    spec: DgpSpec,
    tau: float,
    n_mc: int,
    master_seed: int,
    opts: OlsFitOptions | None = None,
    threads: int = 1,
    tie: str = "lower",
) -> np.ndarray:
    """Point estimates only, for sampling-distribution studies (no bootstrap)."""
    tau = validate_tau(tau)
    tie = validate_tie(tie)
    opts = opts or OlsFitOptions()
    fields = "|".join(f"{k}={v}" for k, v in sorted(spec.to_dict().items()))
    cell_seed = key_seed(master_seed, f"estimates|{fields}|tau={tau!r}")
    p = spec.target_index

    def chunk(rs: range) -> list[float]:
        vals = []
        for r in rs:
            rng = make_rng(cell_seed, r, TAG_DGP)
            panel = simulate_panel(spec, gen_theta(spec, spec.n_units, rng), rng)
            vals.append(sample_quantile(fit_all(panel, opts).estimates[:, p], tau, tie))
        return vals

    return np.array([v for part in _pool_map(chunk, _chunks(int(n_mc), 16), threads) for v in part])
