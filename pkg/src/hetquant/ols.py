"""Unit-by-unit least squares (the first estimation step).

All fits go through :func:`solve_batch`, which factorizes a stack of design
matrices with Householder QR and back-substitutes, so the single-unit path,
the whole-panel path and the bootstrap share one numerical routine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientPeriods, RankDeficient, ValidationError
from .panel import PanelData, UnitEstimates

__all__ = ["OlsFitOptions", "fit_all", "fit_unit", "solve_batch"]


@dataclass(frozen=True)
class OlsFitOptions:
    """Numerical guardrails for the per-unit fit.

    Parameters
    ----------
    condition_limit : float
        Largest accepted condition estimate of the Gram matrix ``Z'Z``.
    min_dof : int
        Require ``T - K >= min_dof``.
    """

    condition_limit: float = 1e12
    min_dof: int = 1

    def __post_init__(self) -> None:
        if not self.condition_limit > 1:
            raise ValidationError("condition_limit must exceed 1")
        if int(self.min_dof) < 0:
            raise ValidationError("min_dof must be non-negative")

    def check_periods(self, n_periods: int, n_regressors: int) -> None:
        if n_periods < n_regressors + self.min_dof:
            raise InsufficientPeriods(
                f"T={n_periods} periods cannot support K={n_regressors} regressors "
                f"with min_dof={self.min_dof}"
            )


def _gram_condition(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """1-norm condition estimate of ``R'R`` for a stack of triangular factors.

    Returns ``(cond, singular)``; singular factors are replaced by the identity
    in-place so later solves cannot fail.
    """
    k = r.shape[-1]
    diag = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
    scale = diag.max(axis=-1)
    singular = ~(diag.min(axis=-1) > scale * 1e-14) | ~(scale > 0)
    if singular.any():
        r[singular] = np.eye(k)
    if k == 1:
        cond = np.ones(r.shape[0])
    else:
        norm_r = np.abs(r).sum(axis=-2).max(axis=-1)
        norm_inv = np.abs(np.linalg.inv(r)).sum(axis=-2).max(axis=-1)
        cond = (norm_r * norm_inv) ** 2
    cond[singular] = np.inf
    return cond, singular


def solve_batch(
    y: np.ndarray, z: np.ndarray, condition_limit: float = 1e12
) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares coefficients for a stack of problems.

    Parameters
    ----------
    y : (M, T) array
    z : (M, T, K) array
    condition_limit : float
        Problems whose Gram condition estimate exceeds this are flagged.

    Returns
    -------
    theta : (M, K) array
        Coefficients; rows that are flagged hold NaN.
    ok : (M,) bool array
    """
    q, r = np.linalg.qr(z)
    cond, _ = _gram_condition(r)
    ok = cond <= condition_limit
    qty = np.matmul(np.swapaxes(q, -1, -2), y[..., None])
    theta = np.linalg.solve(r, qty)[..., 0]
    theta[~ok] = np.nan
    return theta, ok


def fit_unit(y_i: np.ndarray, z_i: np.ndarray, opts: OlsFitOptions | None = None) -> np.ndarray:
    """OLS coefficients of ``y_i`` on the T x K design ``z_i``.

    Raises
    ------
    InsufficientPeriods
        If ``T < K + opts.min_dof``.
    RankDeficient
        If the Gram condition estimate exceeds ``opts.condition_limit``.
    """
    opts = opts or OlsFitOptions()
    y_i = np.asarray(y_i, dtype=np.float64)
    z_i = np.asarray(z_i, dtype=np.float64)
    if z_i.ndim != 2 or y_i.shape != z_i.shape[:1]:
        raise ValidationError(f"shape mismatch: y {y_i.shape}, Z {z_i.shape}")
    opts.check_periods(*z_i.shape)
    theta, ok = solve_batch(y_i[None], z_i[None], opts.condition_limit)
    if not ok[0]:
        raise RankDeficient("design matrix is rank deficient within condition_limit")
    return theta[0]


def fit_all(panel: PanelData, opts: OlsFitOptions | None = None) -> UnitEstimates:
    """Fit every unit of ``panel`` separately. Row ``i`` is unit ``i``'s fit."""
    opts = opts or OlsFitOptions()
    opts.check_periods(panel.n_periods, panel.n_regressors)
    theta, ok = solve_batch(panel.y, panel.z, opts.condition_limit)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        label = panel.unit_labels[bad] if panel.unit_labels else str(bad)
        raise RankDeficient(f"unit {bad} ({label}): design matrix is rank deficient")
    return UnitEstimates(
        theta,
        n_periods_used=panel.n_periods,
        coef_names=panel.coef_names,
        unit_labels=panel.unit_labels,
    )
