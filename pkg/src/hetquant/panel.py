"""Balanced panel container, long-format CSV ingestion and estimate files.

The ingestion format is long CSV with one row per (unit, time) cell::

    unit,time,y,x1,x2
    A,1,0.3,1.2,-0.4
    ...

The intercept column is synthesized on load and is never read from file.
"""

from __future__ import annotations

import csv
import math
import os
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateCell,
    IoError,
    MissingColumn,
    NonFiniteValue,
    UnbalancedPanel,
    ValidationError,
)

INTERCEPT_NAME = "intercept"

__all__ = [
    "INTERCEPT_NAME",
    "PanelData",
    "PanelSchema",
    "UnitEstimates",
    "load_panel_csv",
    "read_estimates_csv",
    "write_estimates_csv",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PanelData:
    """Balanced N x T panel with outcome ``y`` (N, T) and regressors ``z`` (N, T, K).

    ``z[:, :, 0]`` is the intercept column and must be identically one.
    Arrays are copied and made read-only on construction.
    """

    y: np.ndarray
    z: np.ndarray
    unit_labels: tuple[str, ...] | None = None
    time_labels: tuple[str, ...] | None = None
    coef_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        y = _frozen(self.y)
        z = _frozen(self.z)
        if y.ndim != 2:
            raise ValidationError(f"y must be N x T, got shape {y.shape}")
        if z.ndim != 3 or z.shape[:2] != y.shape:
            raise ValidationError(f"z must be N x T x K matching y {y.shape}, got {z.shape}")
        n, t, k = z.shape
        if n < 1 or t < 1 or k < 1:
            raise ValidationError(f"empty panel dimensions N={n}, T={t}, K={k}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
            raise ValidationError("panel contains non-finite values")
        if not np.all(z[:, :, 0] == 1.0):
            raise ValidationError("z[:, :, 0] must be the intercept column of ones")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        for name, size in (("unit_labels", n), ("time_labels", t), ("coef_names", k)):
            labels = getattr(self, name)
            if labels is not None:
                labels = tuple(str(s) for s in labels)
                if len(labels) != size:
                    raise ValidationError(f"{name} has {len(labels)} entries, expected {size}")
                object.__setattr__(self, name, labels)

    @classmethod
    def from_regressors(cls, y: np.ndarray, x: np.ndarray | None = None, **labels) -> PanelData:
        """Build a panel from ``y`` (N, T) and non-intercept regressors ``x`` (N, T, K-1)."""
        y = np.asarray(y, dtype=np.float64)
        ones = np.ones(y.shape + (1,))
        if x is None or np.size(x) == 0:
            z = ones
        else:
            x = np.asarray(x, dtype=np.float64)
            if x.ndim == 2:
                x = x[:, :, None]
            z = np.concatenate([ones, x], axis=2)
        return cls(y=y, z=z, **labels)

    @property
    def n_units(self) -> int:
        return self.y.shape[0]

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def n_regressors(self) -> int:
        return self.z.shape[2]

    def same_cells(self, other: PanelData) -> bool:
        return (
            np.array_equal(self.y, other.y)
            and np.array_equal(self.z, other.z)
            and self.unit_labels == other.unit_labels
            and self.time_labels == other.time_labels
            and self.coef_names == other.coef_names
        )


@dataclass(frozen=True, eq=False)
class UnitEstimates:
    """Per-unit first-step coefficients; row ``i`` is the estimate for unit ``i``."""

    estimates: np.ndarray
    n_periods_used: int
    coef_names: tuple[str, ...] | None = None
    unit_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        est = _frozen(self.estimates)
        if est.ndim != 2 or est.shape[0] < 1 or est.shape[1] < 1:
            raise ValidationError(f"estimates must be a non-empty N x K matrix, got {est.shape}")
        if not np.all(np.isfinite(est)):
            raise ValidationError("estimates contain non-finite values")
        if int(self.n_periods_used) < 1:
            raise ValidationError("n_periods_used must be positive")
        object.__setattr__(self, "estimates", est)
        object.__setattr__(self, "n_periods_used", int(self.n_periods_used))
        if self.coef_names is not None:
            names = tuple(str(s) for s in self.coef_names)
            if len(names) != est.shape[1]:
                raise ValidationError("coef_names length does not match K")
            object.__setattr__(self, "coef_names", names)
        if self.unit_labels is not None:
            labels = tuple(str(s) for s in self.unit_labels)
            if len(labels) != est.shape[0]:
                raise ValidationError("unit_labels length does not match N")
            object.__setattr__(self, "unit_labels", labels)

    @property
    def n_units(self) -> int:
        return self.estimates.shape[0]

    @property
    def n_coefs(self) -> int:
        return self.estimates.shape[1]


# -- CSV ingestion -------------------------------------------------------------


@dataclass(frozen=True)
class PanelSchema:
    """Column-name mapping for long-format panel CSVs.

    ``regressors=None`` takes every column other than unit, time and y, in
    header order.
    """

    unit: str = "unit"
    time: str = "time"
    y: str = "y"
    regressors: tuple[str, ...] | None = field(default=None)

    @classmethod
    def from_mapping(cls, mapping: dict | None) -> PanelSchema:
        if not mapping:
            return cls()
        regs = mapping.get("regressors")
        if isinstance(regs, str):
            regs = tuple(s.strip() for s in regs.split(",") if s.strip())
        elif regs is not None:
            regs = tuple(regs)
        return cls(
            unit=mapping.get("unit", "unit"),
            time=mapping.get("time", "time"),
            y=mapping.get("y", "y"),
            regressors=regs,
        )


def _sort_key_factory(labels: Sequence[str]):
    """Numeric ordering when every label parses as an integer, else lexicographic."""
    try:
        for s in labels:
            int(s)
    except ValueError:
        return lambda s: s
    return lambda s: int(s)


def _parse_float(raw: str, column: str, line: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise NonFiniteValue(column, line, raw) from None
    if not math.isfinite(value):
        raise NonFiniteValue(column, line, raw)
    return value


def load_panel_csv(path: str | os.PathLike, schema: PanelSchema | dict | None = None) -> PanelData:
    """Load a balanced long-format panel.

    Units and periods are canonicalized by sorting their labels (numerically
    when all labels are integers), so any row order of the same cells yields
    the same panel. Reported row numbers are file line numbers with the header
    on line 1.

    Raises
    ------
    MissingColumn, UnbalancedPanel, DuplicateCell, NonFiniteValue, IoError
    """
    if not isinstance(schema, PanelSchema):
        schema = PanelSchema.from_mapping(schema)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file, header row required") from None
        index = {name: j for j, name in enumerate(header)}
        for col in (schema.unit, schema.time, schema.y):
            if col not in index:
                raise MissingColumn(col, header)
        if schema.regressors is None:
            regressors = [h for h in header if h not in (schema.unit, schema.time, schema.y)]
        else:
            regressors = list(schema.regressors)
            for col in regressors:
                if col not in index:
                    raise MissingColumn(col, header)
        if INTERCEPT_NAME in regressors:
            raise ValidationError(
                f"column {INTERCEPT_NAME!r} is reserved; the intercept is added automatically"
            )

        value_cols = [schema.y] + regressors
        value_idx = [index[c] for c in value_cols]
        unit_j, time_j = index[schema.unit], index[schema.time]
        cells: dict[tuple[str, str], list[float]] = {}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"row {line}: expected {len(header)} fields, found {len(row)}"
                )
            unit, time = row[unit_j].strip(), row[time_j].strip()
            if (unit, time) in cells:
                raise DuplicateCell(unit, time, line)
            cells[(unit, time)] = [
                _parse_float(row[j].strip(), c, line) for j, c in zip(value_idx, value_cols)
            ]

    if not cells:
        raise ValidationError(f"{path}: no data rows")

    units = sorted({u for u, _ in cells}, key=_sort_key_factory([u for u, _ in cells]))
    times = sorted({t for _, t in cells}, key=_sort_key_factory([t for _, t in cells]))
    time_set = set(times)
    periods: dict[str, set[str]] = {u: set() for u in units}
    for u, t in cells:
        periods[u].add(t)
    short = [u for u in units if periods[u] != time_set]
    if short:
        raise UnbalancedPanel(short, len(times))

    n, t_len, k = len(units), len(times), len(regressors) + 1
    y = np.empty((n, t_len))
    z = np.ones((n, t_len, k))
    for i, u in enumerate(units):
        for s, t in enumerate(times):
            vals = cells[(u, t)]
            y[i, s] = vals[0]
            z[i, s, 1:] = vals[1:]
    return PanelData(
        y=y,
        z=z,
        unit_labels=tuple(units),
        time_labels=tuple(times),
        coef_names=(INTERCEPT_NAME, *regressors),
    )


# -- estimate files --------------------------------------------------------------


def write_estimates_csv(est: UnitEstimates, path: str | os.PathLike) -> None:
    """Write ``unit,coef_1,...,coef_K`` with 17 significant digits.

    The unit column holds the unit labels when known, otherwise the zero-based
    row index.
    """
    if path is None or str(path) == "":
        raise IoError("empty output path")
    header = ["unit"] + [f"coef_{j + 1}" for j in range(est.n_coefs)]
    labels = est.unit_labels or tuple(str(i) for i in range(est.n_units))
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for label, row in zip(labels, est.estimates):
                writer.writerow([label] + [format(float(v), ".17g") for v in row])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_estimates_csv(path: str | os.PathLike, n_periods_used: int = 1) -> UnitEstimates:
    """Parse a file written by :func:`write_estimates_csv`."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows or not rows[0] or rows[0][0] != "unit":
        raise ValidationError(f"{path}: missing 'unit,coef_1,...' header")
    body = [r for r in rows[1:] if r]
    labels = tuple(r[0] for r in body)
    values = np.array(
        [[_parse_float(v, rows[0][j + 1], line) for j, v in enumerate(r[1:])]
         for line, r in enumerate(body, start=2)],
        dtype=np.float64,
    )
    return UnitEstimates(values, n_periods_used=n_periods_used, unit_labels=labels)


def panel_to_csv(panel: PanelData, path: str | os.PathLike) -> None:
    """Write a panel back to long format (used to hand simulated data to the CLI)."""
    names = panel.coef_names or (INTERCEPT_NAME,) + tuple(
        f"x{j}" for j in range(1, panel.n_regressors)
    )
    units = panel.unit_labels or tuple(str(i) for i in range(panel.n_units))
    times = panel.time_labels or tuple(str(t) for t in range(panel.n_periods))
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["unit", "time", "y", *names[1:]])
            for i, u in enumerate(units):
                for s, t in enumerate(times):
                    writer.writerow(
                        [u, t, format(panel.y[i, s], ".17g")]
                        + [format(v, ".17g") for v in panel.z[i, s, 1:]]
                    )
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
