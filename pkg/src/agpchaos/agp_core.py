"""Exact and regularized adiabatic gauge potential (AGP) norms.

Everything here works on a deformation already rotated to the eigenbasis
(``Ot[m, n] = <m|dH|n>``) together with the ascending eigenvalues ``E``.
For an imaginary deformation ``i G`` pass the rotated real generator; only
squared magnitudes enter the norms.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

import numpy as np

DEGENERACY_RTOL = 1e-13


class CutoffKind(str, enum.Enum):
    L_OVER_D = "L/D"
    SQRT_INV_L_OVER_D = "L^-1/2/D"
    L2_OVER_D = "L^2/D"
    FIXED = "fixed"


@dataclass(frozen=True)
class CutoffRule:
    """How the energy cutoff mu scales with chain length and dimension."""

    kind: CutoffKind = CutoffKind.L_OVER_D
    value: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", CutoffKind(self.kind))
        if self.kind is CutoffKind.FIXED and not (self.value and self.value > 0):
            raise ValueError("fixed cutoff needs a positive value")

    @classmethod
    def parse(cls, text: str) -> "CutoffRule":
        """'L/D', 'L^-1/2/D', 'L^2/D' or a positive number."""
        try:
            return cls(CutoffKind(text))
        except ValueError:
            return cls(CutoffKind.FIXED, float(text))

    def resolve(self, L: int, D: int) -> float:
        if self.kind is CutoffKind.L_OVER_D:
            return L / D
        if self.kind is CutoffKind.SQRT_INV_L_OVER_D:
            return L**-0.5 / D
        if self.kind is CutoffKind.L2_OVER_D:
            return L**2 / D
        return float(self.value)

    def __str__(self) -> str:
        return self.kind.value if self.kind is not CutoffKind.FIXED else repr(self.value)


@dataclass
class AgpReport:
    norm_sq: float
    rescaled_norm_sq: float
    z: np.ndarray = field(repr=False)
    mu: float
    metadata: dict[str, Any] = field(default_factory=dict)


class DegenerateCouplingError(ArithmeticError):
    def __init__(self, m: int, n: int):
        super().__init__(f"degenerate levels {m}, {n} are coupled by the deformation")
        self.m, self.n = m, n


def _check(Ot: np.ndarray, E: np.ndarray) -> None:
    if Ot.ndim != 2 or Ot.shape[1] != E.size:
        raise ValueError(f"operator shape {Ot.shape} does not match {E.size} levels")


def _degeneracy_scale(E: np.ndarray) -> float:
    return DEGENERACY_RTOL * max(float(np.abs(E).max(initial=0.0)), 1.0)


def agp_matrix_exact(Ot: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Magnitudes ``|A_mn| = |Ot_mn| / |E_m - E_n|`` with a zero diagonal.

    Raises:
        DegenerateCouplingError: a numerically degenerate pair is coupled.
    """
    Ot = np.asarray(Ot, dtype=np.float64)
    _check(Ot, E)
    omega = np.abs(E[:, None] - E[None, :])
    np.fill_diagonal(omega, np.inf)
    tiny = omega < _degeneracy_scale(E)
    bad = tiny & (np.abs(Ot) > DEGENERACY_RTOL)
    if bad.any():
        m, n = np.argwhere(bad)[0]
        raise DegenerateCouplingError(int(m), int(n))
    omega[tiny] = np.inf
    return np.abs(Ot) / omega


def agp_norm_exact(Ot: np.ndarray, E: np.ndarray) -> float:
    """Unregularized norm ``(1/D) sum_{m != n} |A_mn|^2``."""
    A = agp_matrix_exact(Ot, E)
    return float(np.sum(A * A) / E.size)


def adapt_degenerate_basis(Ot: np.ndarray, E: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Rotate each degenerate block so the deformation is diagonal inside it.

    This is the eigenbasis in which the exact gauge potential stays finite
    whenever the degeneracy is not lifted at first order.  Returns the
    rotated operator (a new array).
    """
    Ot = np.array(Ot, dtype=np.float64)
    _check(Ot, E)
    tol = 1e-9 * max(float(np.abs(E).max(initial=0.0)), 1.0) if tol is None else tol
    breaks = np.nonzero(np.diff(E) > tol)[0] + 1
    for block in np.split(np.arange(E.size), breaks):
        if block.size < 2:
            continue
        sl = slice(block[0], block[-1] + 1)
        _, U = np.linalg.eigh(0.5 * (Ot[sl, sl] + Ot[sl, sl].T))
        Ot[sl, :] = U.T @ Ot[sl, :]
        Ot[:, sl] = Ot[:, sl] @ U
    return Ot


def susceptibility_rows(
    Ot_rows: np.ndarray, rows: slice, E: np.ndarray, mu: float, D: int
) -> np.ndarray:
    """Per-eigenstate fidelity susceptibilities ``z_n`` for ``n`` in ``rows``."""
    if mu <= 0:
        raise ValueError(f"cutoff must be positive, got {mu}")
    omega = E[None, :] - E[rows, None]
    kernel = omega / (omega * omega + mu * mu)
    terms = kernel * Ot_rows
    terms *= terms
    idx = np.arange(terms.shape[0])
    terms[idx, idx + rows.start] = 0.0
    # numpy reduces contiguous rows pairwise
    return terms.sum(axis=1) / D


def report_from_z(
    z: np.ndarray, mu: float, L: int, extensive: bool = True, **metadata
) -> AgpReport:
    norm_sq = float(np.sum(z))
    rescaled = norm_sq / L if extensive else norm_sq
    return AgpReport(norm_sq, rescaled, z, mu, dict(metadata, L=L, extensive=extensive))


def agp_norm_regularized(
    Ot: np.ndarray,
    E: np.ndarray,
    cutoff: CutoffRule | float,
    L: int,
    D: int | None = None,
    extensive: bool = True,
    block: int = 1024,
    **metadata,
) -> AgpReport:
    """Regularized AGP norm and its eigenstate decomposition.

    ``norm_sq = (1/D) sum_n sum_{m != n} omega^2 Ot^2 / (omega^2 + mu^2)^2``
    and ``z_n`` is the inner sum for fixed ``n``; ``norm_sq`` is the
    (pairwise) sum of ``z``.  ``rescaled_norm_sq`` divides by ``L`` only for
    extensive deformations.
    """
    Ot = np.asarray(Ot, dtype=np.float64)
    _check(Ot, E)
    D = E.size if D is None else D
    mu = cutoff.resolve(L, D) if isinstance(cutoff, CutoffRule) else float(cutoff)
    z = np.empty(E.size)
    for start in range(0, E.size, block):
        rows = slice(start, min(start + block, E.size))
        z[rows] = susceptibility_rows(Ot[rows], rows, E, mu, D)
    return report_from_z(z, mu, L, extensive, **metadata)


def agp_bound(Ot: np.ndarray, mu: float, D: int | None = None) -> float:
    """Upper bound ``||dH||^2 / (4 mu^2)`` on the regularized norm.

    ``||dH||^2`` is the off-diagonal weight ``(1/D) sum_{m != n} Ot_mn^2``.
    """
    Ot = np.asarray(Ot, dtype=np.float64)
    D = Ot.shape[0] if D is None else D
    weight = np.sum(Ot * Ot) - np.sum(np.diag(Ot) ** 2)
    return float(weight / D / (4.0 * mu * mu))


def offdiagonal_weight_rows(Ot_rows: np.ndarray, rows: slice) -> float:
    """Off-diagonal ``sum Ot^2`` of a row slab (for blocked bound evaluation)."""
    idx = np.arange(Ot_rows.shape[0])
    diag = Ot_rows[idx, idx + rows.start]
    return float(np.sum(Ot_rows * Ot_rows) - np.sum(diag * diag))


def _gauss_legendre_sine_integral(omega: np.ndarray, mu: float, t_max: float, step: float):
    """``2 int_0^t_max exp(-mu t) sin(omega t) dt`` by composite Gauss-Legendre.

    Each panel has width ``step``; 16 nodes per panel integrate the
    oscillation essentially exactly as long as ``omega * step`` is O(1).
    """
    nodes, weights = np.polynomial.legendre.leggauss(16)
    n_panels = int(np.ceil(t_max / step))
    h = t_max / n_panels
    out = np.zeros_like(omega)
    panel_starts = np.arange(n_panels) * h
    for chunk in np.array_split(panel_starts, max(1, n_panels // 2048)):
        t = (chunk[:, None] + 0.5 * h * (nodes[None, :] + 1.0)).ravel()
        w = np.tile(0.5 * h * weights, chunk.size) * np.exp(-mu * t)
        out += np.sin(np.multiply.outer(omega, t)) @ w
    return 2.0 * out


def agp_norm_timeintegral_oracle(
    Ot: np.ndarray,
    E: np.ndarray,
    mu: float,
    t_max: float | None = None,
    step: float | None = None,
) -> float:
    """Regularized norm from the filtered time integral of ``dH(t)``.

    ``A = -1/2 int sgn(t) exp(-mu|t|) dH(t) dt``; in the eigenbasis each
    element is ``-1/2 Ot_mn int sgn(t) exp(-mu|t|) exp(i omega_mn t) dt``, and
    the integral is done numerically on ``[-t_max, t_max]``.
    Intended for small test systems only (D <= 256).
    """
    Ot = np.asarray(Ot, dtype=np.float64)
    _check(Ot, E)
    D = E.size
    if D > 256:
        raise ValueError("time-integral oracle is limited to D <= 256")
    t_max = 20.0 / mu if t_max is None else t_max
    # tail of the kernel integral is bounded by 2 exp(-mu T) / mu, relative to its peak 1/mu
    if 2.0 * np.exp(-mu * t_max) > 1e-6:
        raise ValueError(f"t_max={t_max} too small for mu={mu}: truncation error above 1e-6")
    iu = np.triu_indices(D, k=1)
    omega = (E[:, None] - E[None, :])[iu]
    width = float(np.abs(omega).max(initial=0.0))
    step = min(1.0, 2.0 / max(width, mu)) if step is None else step
    uniq, inverse = np.unique(omega, return_inverse=True)
    integral = _gauss_legendre_sine_integral(uniq, mu, t_max, step)[inverse]
    # int sgn(t) e^{-mu|t|} e^{i w t} dt = i * integral; element = -1/2 * that * Ot
    elements = 0.5 * integral * Ot[iu]
    return float(2.0 * np.sum(elements**2) / D)
