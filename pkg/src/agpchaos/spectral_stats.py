"""Response function, level-spacing ratios and susceptibility distributions."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# above this many unordered pairs the Lorentzian sum runs over fine-bin aggregates
EXACT_PAIR_LIMIT = 200_000
FINE_BINS_PER_DECADE = 1000


@dataclass
class SpectralFunction:
    bin_edges: np.ndarray
    bin_mean_weight: np.ndarray
    counts: np.ndarray
    mu: float
    D: int
    # Lorentzian centres |omega| and their squared matrix elements (unordered pairs)
    positions: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))
    weights: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    @property
    def bin_centers(self) -> np.ndarray:
        return np.sqrt(self.bin_edges[:-1] * self.bin_edges[1:])

    def density(self, omega) -> np.ndarray:
        """Lorentzian-smoothed ``|f(omega)|^2`` at arbitrary frequencies."""
        omega = np.asarray(omega, dtype=np.float64)
        return _lorentz_sum(omega, self.positions, self.weights, self.mu) / self.D

    def total_weight(self) -> float:
        """``(1/D) sum_{m != n} Ot_mn^2``, the integral of the density over all omega."""
        return 2.0 * float(np.sum(self.weights)) / self.D

    def to_csv(self, path: str | Path) -> None:
        write_rows(
            path,
            ("omega_center", "mean_weight", "count"),
            zip(self.bin_centers, self.bin_mean_weight, self.counts),
        )


def _lorentz_sum(omega: np.ndarray, pos: np.ndarray, w: np.ndarray, mu: float) -> np.ndarray:
    out = np.zeros(omega.shape)
    flat = out.reshape(-1)
    om = omega.reshape(-1)
    for start in range(0, pos.size, 4096):
        p = pos[start : start + 4096]
        ww = w[start : start + 4096]
        minus = om[:, None] - p[None, :]
        plus = om[:, None] + p[None, :]
        lor = mu / np.pi * (1.0 / (minus * minus + mu * mu) + 1.0 / (plus * plus + mu * mu))
        flat += lor @ ww
    return out


class SpectralAccumulator:
    """Collect unordered-pair weights ``Ot_mn^2`` at ``|E_m - E_n|`` row slab by row slab."""

    def __init__(
        self,
        E: np.ndarray,
        mu: float,
        D: int | None = None,
        exact: bool | None = None,
        decades: float = 6.0,
        bins_per_decade: int = 20,
    ):
        if mu <= 0:
            raise ValueError(f"Lorentzian width must be positive, got {mu}")
        self.E = np.asarray(E, dtype=np.float64)
        self.mu = float(mu)
        self.D = self.E.size if D is None else D
        self.width = float(self.E[-1] - self.E[0]) if self.E.size else 0.0
        n_pairs = self.E.size * (self.E.size - 1) // 2
        self.exact = n_pairs <= EXACT_PAIR_LIMIT if exact is None else exact
        self._pos: list[np.ndarray] = []
        self._w: list[np.ndarray] = []
        if not self.exact:
            lo = min(self.mu, max(self.width, self.mu)) * 1e-4
            hi = max(self.width, self.mu) * 1.0001
            n = int(np.ceil(np.log10(hi / lo) * FINE_BINS_PER_DECADE))
            self._fine = np.concatenate([[0.0], np.geomspace(lo, hi, n + 1)])
            self._fw = np.zeros(self._fine.size - 1)
            self._fwx = np.zeros(self._fine.size - 1)
        if self.width <= 0:
            raise ValueError("empty or fully degenerate spectrum")
        top = 2.0 * self.width
        bottom = max(top * 10.0**-decades, self.mu / 100.0)
        n_bins = max(1, int(round(np.log10(top / bottom) * bins_per_decade)))
        self.edges = np.geomspace(bottom, top, n_bins + 1)
        self.counts = np.zeros(n_bins, dtype=np.int64)

    def add_rows(self, rows: slice, Ot_rows: np.ndarray) -> None:
        # keep m > n only: each unordered pair once
        for i, n in enumerate(range(rows.start, rows.stop)):
            om = self.E[n + 1 :] - self.E[n]
            w = Ot_rows[i, n + 1 :] ** 2
            self._record(om, w)

    def _record(self, om: np.ndarray, w: np.ndarray) -> None:
        self.counts += np.histogram(om, bins=self.edges)[0]
        if self.exact:
            self._pos.append(om)
            self._w.append(w)
        else:
            idx = np.searchsorted(self._fine, om, side="right") - 1
            idx = np.clip(idx, 0, self._fw.size - 1)
            self._fw += np.bincount(idx, weights=w, minlength=self._fw.size)
            self._fwx += np.bincount(idx, weights=w * om, minlength=self._fw.size)

    def masses(self) -> tuple[np.ndarray, np.ndarray]:
        if self.exact:
            pos = np.concatenate(self._pos) if self._pos else np.empty(0)
            w = np.concatenate(self._w) if self._w else np.empty(0)
        else:
            keep = self._fw > 0
            w = self._fw[keep]
            pos = self._fwx[keep] / w
        keep = w > 0
        return pos[keep], w[keep]

    def finalize(self) -> SpectralFunction:
        pos, w = self.masses()
        centers = np.sqrt(self.edges[:-1] * self.edges[1:])
        mean_weight = _lorentz_sum(centers, pos, w, self.mu) / self.D
        return SpectralFunction(self.edges, mean_weight, self.counts.copy(), self.mu, self.D, pos, w)


def spectral_function(
    Ot: np.ndarray,
    E: np.ndarray,
    mu: float,
    decades: float = 6.0,
    bins_per_decade: int = 20,
    D: int | None = None,
    exact: bool | None = None,
) -> SpectralFunction:
    """Lorentzian-smoothed ``|f(omega)|^2`` on a log grid of positive frequencies.

    Each unordered pair contributes ``Ot_mn^2 [L(w - |w_mn|) + L(w + |w_mn|)] / D``
    with ``L`` a unit-area Lorentzian of half width ``mu``, evaluated at the
    geometric bin centres.  The grid spans ``decades`` below twice the
    spectral width, clipped at ``mu / 100``.
    """
    Ot = np.asarray(Ot, dtype=np.float64)
    if E.size < 2:
        raise ValueError("empty spectrum")
    acc = SpectralAccumulator(E, mu, D, exact, decades, bins_per_decade)
    acc.add_rows(slice(0, E.size), Ot)
    return acc.finalize()


# ---------------------------------------------------------------------------
# level statistics
# ---------------------------------------------------------------------------


@dataclass
class LevelStatisticsReport:
    r_values: np.ndarray = field(repr=False)
    mean_r: float
    spacing_edges: np.ndarray = field(repr=False)
    spacing_density: np.ndarray = field(repr=False)
    window: float = 0.5
    n_used: int = 0  # ratios entering mean_r

    @property
    def spacing_histogram(self) -> tuple[np.ndarray, np.ndarray]:
        return self.spacing_edges, self.spacing_density


def central_slice(n: int, fraction: float) -> slice:
    if not 0 < fraction <= 1:
        raise ValueError(f"window fraction must lie in (0, 1], got {fraction}")
    lo = int(np.floor(n * (1 - fraction) / 2))
    hi = int(np.ceil(n * (1 + fraction) / 2))
    return slice(lo, max(hi, lo + 1))


def normalize_spacings(E: np.ndarray, window: float = 0.5) -> np.ndarray:
    """Spacings of the central ``window`` fraction of levels, scaled to unit mean."""
    E = np.sort(np.asarray(E, dtype=np.float64))
    sel = E[central_slice(E.size, window)]
    if sel.size < 2:
        raise ValueError("window holds fewer than two levels")
    s = np.diff(sel)
    mean = s.mean()
    if mean <= 0:
        raise ValueError("all spacings in the window vanish")
    return s / mean


def r_statistics(
    E: np.ndarray, window: float = 0.5, hist_bins: int = 40, s_max: float = 4.0
) -> LevelStatisticsReport:
    """Consecutive-spacing ratios ``r_n = min(s_n, s_n+1) / max(s_n, s_n+1)``.

    ``mean_r`` averages the ratios whose middle level lies in the central
    ``window`` fraction of the spectrum.  Pairs of exactly vanishing
    spacings have no ratio and are skipped.
    """
    E = np.asarray(E, dtype=np.float64)
    if E.size < 3:
        raise ValueError("need at least three levels")
    if np.any(np.diff(E) < 0):
        raise ValueError("spectrum must be sorted ascending")
    s = np.diff(E)
    lo = np.minimum(s[:-1], s[1:])
    hi = np.maximum(s[:-1], s[1:])
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(hi > 0, lo / hi, np.nan)
    # r[k] is centred on level k + 1
    centre = np.arange(1, E.size - 1)
    win = central_slice(E.size, window)
    inside = (centre >= win.start) & (centre < win.stop) & np.isfinite(r)
    if not inside.any():
        raise ValueError("no spacing ratios inside the window")
    norm = normalize_spacings(E, window) if E[win].size > 2 else s / s.mean()
    density, edges = np.histogram(norm, bins=hist_bins, range=(0.0, s_max), density=False)
    density = density / (norm.size * np.diff(edges))
    return LevelStatisticsReport(
        r, float(np.mean(r[inside])), edges, density, window, int(np.count_nonzero(inside))
    )


# ---------------------------------------------------------------------------
# fidelity susceptibility distributions
# ---------------------------------------------------------------------------


@dataclass
class SusceptibilityDistribution:
    bin_edges: np.ndarray = field(repr=False)
    probability: np.ndarray = field(repr=False)  # mass per bin, sums to 1
    density: np.ndarray = field(repr=False)  # mass / bin width
    counts: np.ndarray = field(repr=False)
    gamma: float  # tail density ~ z^(-gamma)
    fit_window: tuple[float, float]
    sample_size: int

    @property
    def bin_centers(self) -> np.ndarray:
        return np.sqrt(self.bin_edges[:-1] * self.bin_edges[1:])

    def to_csv(self, path: str | Path) -> None:
        write_rows(
            path,
            ("z_center", "prob_density", "count"),
            zip(self.bin_centers, self.density, self.counts),
        )


class InsufficientTailError(ValueError):
    pass


def susceptibility_distribution(
    z: np.ndarray,
    central_fraction: float = 1.0,
    bins_per_decade: int = 10,
    tail_percentile: float = 90.0,
    min_count: int = 20,
    min_tail_bins: int = 5,
) -> SusceptibilityDistribution:
    """Log-binned distribution of ``z`` and its power-law tail exponent.

    ``z`` is taken in eigenvalue order; ``central_fraction`` keeps only the
    middle part of the spectrum (pass 1.0 for already pooled samples).  The
    tail exponent is the negated least-squares slope of ``log density`` vs
    ``log z`` over the bins starting at the ``tail_percentile`` of ``z`` and
    running up to the last bin holding at least ``min_count`` samples.
    """
    z = np.asarray(z, dtype=np.float64)
    z = z[central_slice(z.size, central_fraction)]
    z = z[z > 0]
    if z.size == 0:
        raise InsufficientTailError("no positive samples")
    lo, hi = z.min(), z.max()
    n_bins = max(1, int(np.ceil(np.log10(hi / lo) * bins_per_decade))) if hi > lo else 1
    edges = np.geomspace(lo, hi, n_bins + 1) if hi > lo else np.array([lo * 0.9, lo * 1.1])
    edges[0], edges[-1] = lo, np.nextafter(hi, np.inf)
    counts, _ = np.histogram(z, bins=edges)
    probability = counts / z.size
    density = probability / np.diff(edges)
    start = int(np.searchsorted(edges, np.percentile(z, tail_percentile), side="right") - 1)
    stop = start
    while stop < counts.size and counts[stop] >= min_count:
        stop += 1
    if stop - start < min_tail_bins:
        raise InsufficientTailError(
            f"only {stop - start} tail bins with >= {min_count} samples (need {min_tail_bins})"
        )
    centers = np.sqrt(edges[:-1] * edges[1:])
    sel = slice(start, stop)
    slope, _ = np.polyfit(np.log(centers[sel]), np.log(density[sel]), 1)
    return SusceptibilityDistribution(
        edges, probability, density, counts, float(-slope),
        (float(edges[start]), float(edges[stop])), int(z.size),
    )


def write_rows(path: str | Path, header, rows) -> None:
    """CSV with a fixed column order and 17 significant digits."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in row])
