"""Cross-sectional tau-quantiles of first-step estimates (the aggregation step).

The estimator minimizes the mean check loss over the unit estimates. When
``N * tau`` is an integer ``k`` the minimizer is the interval between the k-th
and (k+1)-th smallest values. The default tie rule ``"lower"`` reports its left
end, the ``ceil(N * tau)``-th smallest value, so the estimate is one of the
inputs. ``"midpoint"`` reports the centre of the interval instead; it is still
a minimizer and agrees with Hazen-type interpolation at those points. Otherwise the
two rules agree. Everything is computed by selection, not optimization.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, IndexOutOfRange, UnsortedTaus, ValidationError
from .panel import UnitEstimates

__all__ = [
    "QuantileEstimate",
    "QuantileTarget",
    "aggregate",
    "check_loss",
    "order_rank",
    "quantile_curve",
    "sample_quantile",
    "sample_quantile_rows",
    "validate_tie",
]

TIE_RULES = ("lower", "midpoint")


def validate_tau(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValidationError(f"tau must lie in (0, 1), got {tau}")
    return tau


def order_rank(n: int, p: float) -> int:
    """One-based rank ``ceil(n * p)`` clamped to ``[1, n]``.

    The product is rounded to 9 decimals first so that decimal inputs such as
    ``10 * 0.3`` (``3.0000000000000004`` in binary) select rank 3, not 4.
    """
    k = math.ceil(round(n * p, 9))
    return min(max(k, 1), n)


def validate_tie(tie: str) -> str:
    tie = str(tie).lower()
    if tie not in TIE_RULES:
        raise ValidationError(f"tie rule must be one of {', '.join(TIE_RULES)}, got {tie!r}")
    return tie


def tie_ranks(n: int, tau: float, tie: str = "lower") -> tuple[int, int]:
    """Zero-based ranks whose values are averaged; equal unless the argmin is an interval."""
    k = order_rank(n, tau) - 1
    if tie == "midpoint" and round(n * tau, 9) == k + 1 and k + 1 < n:
        return k, k + 1
    return k, k


@dataclass(frozen=True)
class QuantileTarget:
    tau: float
    coef_index: int = 0
    tie: str = "lower"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tau", validate_tau(self.tau))
        object.__setattr__(self, "tie", validate_tie(self.tie))
        if int(self.coef_index) < 0:
            raise IndexOutOfRange(f"coef_index must be non-negative, got {self.coef_index}")
        object.__setattr__(self, "coef_index", int(self.coef_index))


@dataclass(frozen=True)
class QuantileEstimate:
    value: float
    target: QuantileTarget
    n_units: int


def check_loss(u, tau: float):
    """Check function ``u * (tau - 1{u <= 0})``; accepts scalars or arrays."""
    u_arr = np.asarray(u, dtype=np.float64)
    out = u_arr * (tau - (u_arr <= 0))
    return float(out) if out.ndim == 0 else out


def sample_quantile(values, tau: float, tie: str = "lower") -> float:
    """Check-loss minimizer: the ``ceil(N * tau)``-th smallest of ``values`` by default.

    With ``tie="midpoint"`` and integer ``k = N * tau``, the mean of the k-th
    and (k+1)-th smallest values.
    """
    tau = validate_tau(tau)
    tie = validate_tie(tie)
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("sample_quantile needs at least one value")
    if not np.all(np.isfinite(v)):
        raise ValidationError("sample_quantile requires finite values")
    lo, hi = tie_ranks(v.size, tau, tie)
    if lo == hi:
        return float(np.partition(v, lo)[lo])
    part = np.partition(v, (lo, hi))
    return float(0.5 * (part[lo] + part[hi]))


def sample_quantile_rows(values: np.ndarray, tau: float, tie: str = "lower") -> np.ndarray:
    """Row-wise :func:`sample_quantile` for an (M, N) array (no validation)."""
    lo, hi = tie_ranks(values.shape[-1], tau, tie)
    if lo == hi:
        return np.partition(values, lo, axis=-1)[..., lo]
    part = np.partition(values, (lo, hi), axis=-1)
    return 0.5 * (part[..., lo] + part[..., hi])


def _column(est: UnitEstimates, coef_index: int) -> np.ndarray:
    if not 0 <= coef_index < est.n_coefs:
        raise IndexOutOfRange(f"coef_index {coef_index} outside [0, {est.n_coefs})")
    return est.estimates[:, coef_index]


def aggregate(est: UnitEstimates, target: QuantileTarget) -> QuantileEstimate:
    col = _column(est, target.coef_index)
    return QuantileEstimate(sample_quantile(col, target.tau, target.tie), target, est.n_units)


def quantile_curve(
    est: UnitEstimates, coef_index: int, taus: Sequence[float], tie: str = "lower"
) -> list[QuantileEstimate]:
    """Aggregate at each tau of a strictly ascending grid (one sort for the whole grid)."""
    taus = [validate_tau(t) for t in taus]
    tie = validate_tie(tie)
    if not taus:
        raise EmptyInput("tau grid is empty")
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise UnsortedTaus("taus must be strictly ascending")
    col = np.sort(_column(est, coef_index))
    n = col.size
    out = []
    for t in taus:
        lo, hi = tie_ranks(n, t, tie)
        value = float(col[lo]) if lo == hi else float(0.5 * (col[lo] + col[hi]))
        out.append(QuantileEstimate(value, QuantileTarget(t, coef_index, tie), n))
    return out
