"""Size scaling of AGP norms: exponential and polynomial fits, crossovers.

The crossover protocol: the exponential rate is fitted on the series with
the largest perturbation, then every weaker perturbation gets its own
prefactor with that rate held fixed.  The crossover size ``L*`` is where
this exponential meets the polynomial fit of the unperturbed series, and
the critical strength follows ``eps* ~ exp(-alpha L*)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import bisect


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class ScalingSeries:
    L: np.ndarray
    values: np.ndarray
    tag: str = ""
    strength: float = 0.0

    def __post_init__(self):
        L = np.asarray(self.L, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if L.shape != v.shape or L.ndim != 1:
            raise FitError("L and values must be 1-d arrays of equal length")
        if np.any(np.diff(L) <= 0):
            raise FitError("L must be strictly increasing")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "values", v)

    def window(self, skip_smallest: int = 0, L_min: float | None = None) -> "ScalingSeries":
        keep = np.arange(self.L.size) >= skip_smallest
        if L_min is not None:
            keep &= self.L >= L_min
        return ScalingSeries(self.L[keep], self.values[keep], self.tag, self.strength)


@dataclass(frozen=True)
class ExponentialFit:
    beta: float
    prefactor: float
    residuals: np.ndarray = field(repr=False)
    parity: float = 0.0  # log amplitude of an even/odd-L alternation

    def __call__(self, L):
        L = np.asarray(L, dtype=np.float64)
        return self.prefactor * np.exp(self.beta * L + self.parity * _alternation(L))

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2)))


@dataclass(frozen=True)
class PolynomialFit:
    coefficients: tuple[float, float]  # (slope, intercept)
    mode: str
    residuals: np.ndarray = field(repr=False)

    def __call__(self, L):
        slope, intercept = self.coefficients
        L = np.asarray(L, dtype=np.float64)
        if self.mode == "linear":
            return slope * L + intercept
        return np.exp(intercept) * L**slope

    def log_residuals(self, series: ScalingSeries) -> np.ndarray:
        pred = self(series.L)
        if np.any(pred <= 0):
            return np.full(series.L.shape, np.inf)
        return np.log(series.values) - np.log(pred)


def _positive(series: ScalingSeries) -> None:
    if np.any(series.values <= 0):
        raise FitError("values must be positive for a logarithmic fit")


def _alternation(L: np.ndarray) -> np.ndarray:
    return np.where(np.round(L) % 2 == 0, 1.0, -1.0)


def fit_exponential(series: ScalingSeries, min_points: int = 4, parity: bool = False) -> ExponentialFit:
    """Least squares of ``log value = log A + beta L``; residuals in log space.

    With ``parity`` a term ``p (-1)^L`` is added, for chains whose symmetry
    content differs between even and odd sizes; both parities must be present.
    """
    if series.L.size < min_points:
        raise FitError(f"need at least {min_points} sizes, got {series.L.size}")
    _positive(series)
    y = np.log(series.values)
    if not parity:
        beta, log_a = np.polyfit(series.L, y, 1)
        return ExponentialFit(float(beta), float(np.exp(log_a)), y - (log_a + beta * series.L))
    alt = _alternation(series.L)
    if np.all(alt == alt[0]) or series.L.size < 4:
        raise FitError("parity-resolved fit needs both even and odd sizes and at least 4 points")
    A = np.column_stack([series.L, np.ones(series.L.size), alt])
    (beta, log_a, p), *_ = np.linalg.lstsq(A, y, rcond=None)
    return ExponentialFit(float(beta), float(np.exp(log_a)), y - A @ (beta, log_a, p), float(p))


def fit_exponential_fixed_slope(series: ScalingSeries, beta: float) -> ExponentialFit:
    """Best prefactor for a given rate (mean log offset)."""
    if series.L.size < 1:
        raise FitError("empty series")
    _positive(series)
    offset = np.log(series.values) - beta * series.L
    log_a = float(np.mean(offset))
    return ExponentialFit(float(beta), math.exp(log_a), offset - log_a)


def fit_polynomial(series: ScalingSeries, mode: str = "linear") -> PolynomialFit:
    """``value = a L + b`` (linear) or ``log value = a log L + b`` (loglog)."""
    if series.L.size < 3:
        raise FitError(f"need at least 3 sizes, got {series.L.size}")
    if mode == "linear":
        x, y = series.L, series.values
    elif mode == "loglog":
        _positive(series)
        x, y = np.log(series.L), np.log(series.values)
    else:
        raise ValueError(f"unknown polynomial mode {mode!r}")
    slope, intercept = np.polyfit(x, y, 1)
    return PolynomialFit((float(slope), float(intercept)), mode, y - (slope * x + intercept))


@dataclass(frozen=True)
class Crossover:
    L_star: float
    extrapolated: bool


def locate_crossover(
    poly: PolynomialFit,
    exp: ExponentialFit,
    L_range: tuple[float, float],
    tol: float = 1e-6,
) -> Crossover:
    """Size where the polynomial and exponential curves intersect.

    Bisection on ``log exp(L) - log poly(L)`` over ``[L_min - 2, L_max + 4]``.
    ``extrapolated`` flags intersections outside the data range.
    """
    lo, hi = L_range[0] - 2.0, L_range[1] + 4.0

    def gap(L):
        p = float(poly(L))
        if p <= 0:
            return math.inf
        return math.log(exp.prefactor) + exp.beta * L - math.log(p)

    grid = np.linspace(lo, hi, 401)
    g = np.array([gap(x) for x in grid])
    sign_change = np.nonzero(np.isfinite(g[:-1]) & np.isfinite(g[1:]) & (np.sign(g[:-1]) != np.sign(g[1:])))[0]
    if g[0] == 0:
        return Crossover(float(lo), True)
    if sign_change.size == 0:
        raise FitError(f"fitted curves do not intersect in [{lo}, {hi}]")
    # the exponential overtakes the polynomial: last upward crossing
    i = sign_change[-1]
    L_star = bisect(gap, grid[i], grid[i + 1], xtol=tol)
    return Crossover(float(L_star), not (L_range[0] <= L_star <= L_range[1]))


def relaxation_exponents(beta: float, alpha: float) -> tuple[float, float]:
    """``(eta, kappa) = (beta / alpha, beta - log 2)`` for ``tau ~ eps^eta e^(kappa L)``."""
    if alpha <= 0:
        raise ValueError(f"critical-strength decay rate must be positive, got {alpha}")
    return beta / alpha, beta - math.log(2.0)


@dataclass
class ScalingFitReport:
    series_id: str
    beta: float
    alpha: float | None
    strengths: list[float]
    L_star: list[float]
    extrapolated: list[bool]
    eta: float | None
    kappa: float
    poly: tuple[float, float] | None
    prefactors: list[float]
    fit_windows: dict[str, list[float]]
    residuals: dict[str, list[float]]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def exponential_window(series: ScalingSeries, poly: PolynomialFit, departure: float = 2.0) -> ScalingSeries:
    """Sizes where ``series`` exceeds the polynomial branch by ``departure`` or more."""
    keep = series.values >= departure * poly(series.L)
    return ScalingSeries(series.L[keep], series.values[keep], series.tag, series.strength)


def crossover_analysis(
    integrable: ScalingSeries,
    perturbed: Sequence[ScalingSeries],
    series_id: str = "",
    departure: float = 2.0,
    min_rate_points: int = 4,
    poly_mode: str = "linear",
) -> ScalingFitReport:
    """Shared-slope crossover protocol over a family of perturbation strengths.

    Only the exponential part of each perturbed series is fitted: the sizes
    where it sits at least ``departure`` times above the polynomial fit of
    the integrable series.  If the strongest series has fewer than
    ``min_rate_points`` such sizes its largest ``min_rate_points`` are used;
    a weaker series with none falls back to its largest size, and its
    crossover is then an extrapolation.
    """
    if not perturbed:
        raise FitError("need at least one perturbed series")
    poly = fit_polynomial(integrable, poly_mode)
    ordered = sorted(perturbed, key=lambda s: s.strength)
    strongest = exponential_window(ordered[-1], poly, departure)
    if strongest.L.size < min_rate_points:
        strongest = ordered[-1].window(max(0, ordered[-1].L.size - min_rate_points))
    rate = fit_exponential(strongest, min_rate_points)
    L_range = (float(integrable.L.min()), float(integrable.L.max()))
    L_star, extrapolated, prefactors, windows, residuals = [], [], [], {}, {}
    for s in ordered:
        if s is ordered[-1]:
            fit, used = rate, strongest
        else:
            used = exponential_window(s, poly, departure)
            if used.L.size == 0:
                used = s.window(s.L.size - 1)
            fit = fit_exponential_fixed_slope(used, rate.beta)
        cross = locate_crossover(poly, fit, L_range)
        L_star.append(cross.L_star)
        extrapolated.append(cross.extrapolated)
        prefactors.append(fit.prefactor)
        windows[repr(s.strength)] = [float(used.L[0]), float(used.L[-1])]
        residuals[repr(s.strength)] = [float(r) for r in fit.residuals]
    alpha = None
    eta = None
    if len(ordered) >= 2:
        # log eps* = const - alpha L*
        slope, _ = np.polyfit(L_star, np.log([s.strength for s in ordered]), 1)
        alpha = float(-slope)
        if alpha > 0:
            eta = rate.beta / alpha
    return ScalingFitReport(
        series_id=series_id,
        beta=rate.beta,
        alpha=alpha,
        strengths=[s.strength for s in ordered],
        L_star=L_star,
        extrapolated=extrapolated,
        eta=eta,
        kappa=rate.beta - math.log(2.0),
        poly=poly.coefficients,
        prefactors=prefactors,
        fit_windows=windows,
        residuals=residuals,
    )
