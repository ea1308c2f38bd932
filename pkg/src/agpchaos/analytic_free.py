"""Closed-form AGP of the periodic transverse-field Ising chain.

The gauge potential for a change of the transverse field is a sum of
Pauli strings ``sum_l alpha_l O_l`` with trace-orthogonal strings
(``Tr[O_l O_p] = 2^(L+1) L delta_lp``), so only the coefficients are needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FreeAgpCoefficients:
    L: int
    hx: float
    alpha: np.ndarray = field(repr=False)
    norm_sq: float

    @property
    def rescaled_norm_sq(self) -> float:
        return self.norm_sq / self.L


def momenta(L: int) -> np.ndarray:
    """The L-point grid ``k = pi m / L``, m = 0..L-1."""
    return np.pi * np.arange(L) / L


def free_alpha(L: int, hx: float) -> FreeAgpCoefficients:
    """String coefficients ``alpha_l`` (l = 1..L) and the norm ``2 L sum alpha_l^2``.

    ``alpha_l = -1/(4L) sum_k sin k sin(l k) / ((cos k - hx)^2 + sin^2 k)``.
    At ``hx = +-1`` the k = 0, pi terms are 0/0 with a vanishing numerator
    and are set to zero.
    """
    if L < 2:
        raise ValueError(f"need L >= 2, got {L}")
    k = momenta(L)
    sin_k = np.sin(k)
    # sin(pi m / L) is exactly zero only for m = 0; force it
    sin_k[0] = 0.0
    denom = (np.cos(k) - hx) ** 2 + sin_k**2
    weight = np.divide(sin_k, denom, out=np.zeros_like(k), where=sin_k != 0.0)
    l = np.arange(1, L + 1)
    alpha = -np.sin(np.outer(l, k)) @ weight / (4.0 * L)
    return FreeAgpCoefficients(L, float(hx), alpha, float(2 * L * np.sum(alpha**2)))


def free_norm_asymptotic(L: int, hx: float) -> float:
    """Paramagnetic large-L norm ``L (1 - hx^(-2L)) / (32 hx^2 (hx^2 - 1))``.

    With the coefficient normalization of :func:`free_alpha` the strings
    decay as ``alpha_l -> -hx^(-l-1) / 8``, hence the factor 1/32 in front
    of the bare ``L / (hx^2 (hx^2 - 1))`` law.
    """
    if hx * hx <= 1.0:
        raise ValueError(f"asymptotic form needs hx^2 > 1, got hx={hx}")
    bare = L * (1.0 - np.exp(-2.0 * L * np.log(abs(hx)))) / (hx * hx * (hx * hx - 1.0))
    return bare / 32.0
