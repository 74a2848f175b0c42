"""Data-generating processes for heterogeneous-coefficient panels.

Two families are provided.

``sample_mean_lognormal``
    ``X_it`` i.i.d. lognormal with mean ``theta_i`` and variance
    ``sigma_i**2``: log-mean ``ln(theta^2 / sqrt(theta^2 + sigma^2))`` and
    log-variance ``ln(1 + sigma^2 / theta^2)``. The panel is intercept-only
    (K = 1), so the unit OLS fit is the time average.

``regression_gaussian``
    ``y_it = sum_{k < K-1} beta_ik z_itk + theta_i z_it,K-1 + eps_it`` where
    ``z_it0 = 1`` and the remaining regressors and the error are i.i.d.
    standard normal. The target coefficient is the last one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from enum import Enum

import numpy as np
from scipy import special

from ..errors import InvalidSpec, UnsupportedSpec, ValidationError
from ..panel import INTERCEPT_NAME, PanelData
from ..quantile import sample_quantile, validate_tau

__all__ = [
    "DgpSpec",
    "Family",
    "Heterogeneity",
    "NuisanceSlopes",
    "ScaleMode",
    "chi2_1_pdf",
    "chi2_1_ppf",
    "gen_theta",
    "oracle_asymptotic_sd",
    "simulate_panel",
    "true_quantile",
]


class Heterogeneity(str, Enum):
    STOCHASTIC_CHISQ1 = "stochastic_chisq1"
    STOCHASTIC_STD_NORMAL = "stochastic_std_normal"
    DETERMINISTIC_CHISQ1_GRID = "deterministic_chisq1_grid"
    DETERMINISTIC_STD_NORMAL_GRID = "deterministic_std_normal_grid"

    @property
    def deterministic(self) -> bool:
        return self.value.startswith("deterministic")

    @property
    def law(self) -> str:
        return "chisq1" if "chisq1" in self.value else "std_normal"

    @classmethod
    def from_parts(cls, design: str, law: str) -> Heterogeneity:
        design = "deterministic" if str(design).lower().startswith("det") else "stochastic"
        law = "chisq1" if "chi" in str(law).lower() else "std_normal"
        suffix = "_grid" if design == "deterministic" else ""
        return cls(f"{design}_{law}{suffix}")

    def ppf(self, u):
        return chi2_1_ppf(u) if self.law == "chisq1" else special.ndtri(u)

    def pdf(self, x):
        return chi2_1_pdf(x) if self.law == "chisq1" else np.exp(-0.5 * np.square(x)) / math.sqrt(2 * math.pi)


class Family(str, Enum):
    SAMPLE_MEAN_LOGNORMAL = "sample_mean_lognormal"
    REGRESSION_GAUSSIAN = "regression_gaussian"


class ScaleMode(str, Enum):
    HOMOGENEOUS = "homogeneous"
    HETERO_CHISQ1 = "hetero_chisq1"
    HETERO_CHISQ1_GRID = "hetero_chisq1_grid"


class NuisanceSlopes(str, Enum):
    HOMOGENEOUS = "homogeneous"
    NORMAL_GRID = "normal_grid"


def chi2_1_ppf(u):
    """Inverse CDF of chi-square(1) via ``F^{-1}(u) = Phi^{-1}((1 + u) / 2)^2``."""
    return np.square(special.ndtri((1.0 + np.asarray(u, dtype=np.float64)) / 2.0))


def chi2_1_pdf(x):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 0, np.exp(-0.5 * x) / np.sqrt(2 * math.pi * x), 0.0)
    return out


def _grid(n: int) -> np.ndarray:
    return np.arange(1, n + 1) / (n + 1.0)


@dataclass(frozen=True)
class DgpSpec:
    """One simulated panel design.

    ``noise_scale`` multiplies every unit's noise scale; 0 gives noiseless
    panels (a testing hook; the lognormal family then returns ``X_it = theta_i``).
    """

    family: Family = Family.SAMPLE_MEAN_LOGNORMAL
    n_units: int = 80
    n_periods: int = 80
    heterogeneity: Heterogeneity = Heterogeneity.STOCHASTIC_CHISQ1
    scale_mode: ScaleMode = ScaleMode.HOMOGENEOUS
    k_regressors: int | None = None
    nuisance_slopes: NuisanceSlopes = NuisanceSlopes.HOMOGENEOUS
    noise_scale: float = 1.0

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "family", Family(self.family))
            object.__setattr__(self, "heterogeneity", Heterogeneity(self.heterogeneity))
            object.__setattr__(self, "scale_mode", ScaleMode(self.scale_mode))
            object.__setattr__(self, "nuisance_slopes", NuisanceSlopes(self.nuisance_slopes))
        except ValueError as exc:
            raise InvalidSpec(str(exc)) from None
        if self.k_regressors is None:
            k = 1 if self.family is Family.SAMPLE_MEAN_LOGNORMAL else 10
            object.__setattr__(self, "k_regressors", k)
        if int(self.n_units) < 1 or int(self.n_periods) < 1:
            raise InvalidSpec("n_units and n_periods must be positive")
        if self.family is Family.SAMPLE_MEAN_LOGNORMAL:
            if self.k_regressors != 1:
                raise InvalidSpec("sample_mean_lognormal panels are intercept-only (K = 1)")
            if self.heterogeneity.law != "chisq1":
                raise InvalidSpec("lognormal means must be positive; use chi-square(1) heterogeneity")
        elif self.k_regressors < 2:
            raise InvalidSpec("regression_gaussian needs K >= 2 (intercept plus target slope)")
        if self.scale_mode is not ScaleMode.HOMOGENEOUS and self.family is not Family.SAMPLE_MEAN_LOGNORMAL:
            raise InvalidSpec("scale heterogeneity applies to the sample_mean_lognormal family")
        if not (math.isfinite(self.noise_scale) and self.noise_scale >= 0):
            raise InvalidSpec("noise_scale must be finite and non-negative")

    @property
    def target_index(self) -> int:
        return self.k_regressors - 1

    def with_cell(self, n_units: int, n_periods: int, design: str | None = None) -> DgpSpec:
        spec = replace(self, n_units=int(n_units), n_periods=int(n_periods))
        if design is not None:
            spec = replace(spec, heterogeneity=Heterogeneity.from_parts(design, self.heterogeneity.law))
        return spec

    def to_dict(self) -> dict:
        return {k: (v.value if isinstance(v, Enum) else v) for k, v in asdict(self).items()}


def gen_theta(spec: Heterogeneity | DgpSpec, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Heterogeneous target coefficients for ``n`` units.

    Deterministic modes return the quantile grid ``F^{-1}(i / (n + 1))`` and
    never touch ``rng``.
    """
    mode = spec.heterogeneity if isinstance(spec, DgpSpec) else Heterogeneity(spec)
    if n < 1:
        raise ValidationError("n must be positive")
    if mode.deterministic:
        return np.asarray(mode.ppf(_grid(n)), dtype=np.float64)
    if rng is None:
        raise ValidationError("stochastic heterogeneity needs a random generator")
    if mode.law == "chisq1":
        return rng.chisquare(1.0, size=n)
    return rng.standard_normal(n)


def true_quantile(spec: DgpSpec, tau: float, tie: str = "lower") -> float:
    """Population target: ``F^{-1}(tau)`` (stochastic) or the grid's tau-quantile.

    The grid quantile uses the estimator's tie rule.
    """
    tau = validate_tau(tau)
    mode = spec.heterogeneity
    if mode.deterministic:
        return sample_quantile(gen_theta(mode, spec.n_units), tau, tie)
    return float(mode.ppf(tau))


def _unit_scales(spec: DgpSpec, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = theta.size
    if spec.scale_mode is ScaleMode.HOMOGENEOUS:
        sigma = np.ones(n)
    elif spec.scale_mode is ScaleMode.HETERO_CHISQ1:
        sigma = rng.chisquare(1.0, size=n)
    else:
        sigma = chi2_1_ppf(_grid(n))
    return sigma * spec.noise_scale


def simulate_panel(spec: DgpSpec, true_theta: np.ndarray, rng: np.random.Generator) -> PanelData:
    """Draw one panel given the units' target coefficients.

    Raises
    ------
    InvalidSpec
        Wrong ``true_theta`` length, or non-positive means for the lognormal family.
    """
    theta = np.asarray(true_theta, dtype=np.float64)
    n, t, k = spec.n_units, spec.n_periods, spec.k_regressors
    if theta.shape != (n,):
        raise InvalidSpec(f"true_theta must have length N={n}, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise InvalidSpec("true_theta must be finite")

    if spec.family is Family.SAMPLE_MEAN_LOGNORMAL:
        if np.any(theta <= 0):
            raise InvalidSpec("lognormal means require theta_i > 0 for every unit")
        sigma = _unit_scales(spec, theta, rng)
        if np.any(sigma < 0):
            raise InvalidSpec("unit scales must be non-negative")
        ratio = np.square(sigma / theta)
        log_var = np.log1p(ratio)
        log_mean = 2.0 * np.log(theta) - 0.5 * np.log(np.square(theta) + np.square(sigma))
        eps = rng.standard_normal((n, t))
        y = np.exp(log_mean[:, None] + np.sqrt(log_var)[:, None] * eps)
        flat = sigma == 0
        if flat.any():
            y[flat] = theta[flat, None]
        return PanelData.from_regressors(y, None, coef_names=(INTERCEPT_NAME,))

    if spec.nuisance_slopes is NuisanceSlopes.HOMOGENEOUS:
        beta = np.ones((n, k - 1))
    else:
        beta = np.repeat(special.ndtri(_grid(n))[:, None], k - 1, axis=1)
    coefs = np.concatenate([beta, theta[:, None]], axis=1)
    x = rng.standard_normal((n, t, k - 1))
    eps = rng.standard_normal((n, t))
    z = np.concatenate([np.ones((n, t, 1)), x], axis=2)
    y = np.einsum("ntk,nk->nt", z, coefs) + spec.noise_scale * eps
    names = (INTERCEPT_NAME,) + tuple(f"x{j}" for j in range(1, k))
    return PanelData(y=y, z=z, coef_names=names)


def oracle_asymptotic_sd(spec: DgpSpec, tau: float, n_units: int | None = None, n_periods: int | None = None) -> float:
    """Large-sample standard deviation of the quantile estimate.

    Stochastic designs: ``sqrt(tau (1 - tau)) / (f(theta_tau) sqrt(N))``.
    Deterministic designs: ``sqrt(s / (sqrt(pi) f(theta_tau))) / sqrt(N sqrt(T))``
    where ``s`` is the standard deviation of ``sqrt(T) (theta_hat_i - theta_i)``
    for a unit sitting at ``theta_tau``.
    """
    tau = validate_tau(tau)
    n = int(n_units if n_units is not None else spec.n_units)
    t = int(n_periods if n_periods is not None else spec.n_periods)
    mode = spec.heterogeneity
    theta_tau = float(mode.ppf(tau))
    dens = float(mode.pdf(theta_tau))
    if not dens > 0:
        raise UnsupportedSpec(f"density at the target quantile is {dens}")
    if not mode.deterministic:
        return math.sqrt(tau * (1 - tau)) / (dens * math.sqrt(n))

    if spec.family is Family.SAMPLE_MEAN_LOGNORMAL:
        if spec.scale_mode is ScaleMode.HOMOGENEOUS:
            unit_sd = spec.noise_scale
        elif spec.scale_mode is ScaleMode.HETERO_CHISQ1_GRID and mode.law == "chisq1":
            # scales are paired with means on the same grid, so sigma(theta) = theta
            unit_sd = spec.noise_scale * theta_tau
        else:
            raise UnsupportedSpec("unit scale is not a function of theta under i.i.d. scales")
    else:
        # independent standard-normal regressors: [E(zz')^{-1}] for the last slope is 1
        unit_sd = spec.noise_scale
    if not unit_sd > 0:
        raise UnsupportedSpec("noiseless designs have no sampling variance")
    return math.sqrt(unit_sd / (math.sqrt(math.pi) * dens)) / math.sqrt(n * math.sqrt(t))
