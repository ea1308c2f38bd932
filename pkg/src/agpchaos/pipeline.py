"""One sweep point: build, diagonalize, and reduce every requested statistic.

The eigenvector matrix is the dominant memory cost (8 D^2 bytes), so the
deformation is rotated one row slab at a time and every statistic is
accumulated from the slabs without materializing the rotated operator.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agp_core import (
    AgpReport,
    CutoffRule,
    offdiagonal_weight_rows,
    report_from_z,
    susceptibility_rows,
)
from .eigensolver import (
    SpectralDecomposition,
    cache_path,
    diagonalize,
    eigenvalues,
    iter_rotated_rows,
    read_cached_eigenvalues,
    read_eigen_cache,
    write_eigen_cache,
    write_levels_cache,
)
from .lattice_models import (
    EXTENSIVE_TAGS,
    HamiltonianSpec,
    Tag,
    build_deformation,
    build_hamiltonian,
    build_sector_basis,
)
from .spectral_stats import (
    LevelStatisticsReport,
    SpectralAccumulator,
    SpectralFunction,
    SusceptibilityDistribution,
    r_statistics,
    susceptibility_distribution,
)

log = logging.getLogger(__name__)


def spectral_mu(L: int) -> float:
    """Default Lorentzian width ``L 2^-L``, independent of the sector."""
    return L * 2.0**-L


@dataclass
class TagResult:
    reports: dict[str, AgpReport]  # keyed by str(CutoffRule)
    bound: dict[str, float]
    spectral: SpectralFunction | None = None
    zdist: SusceptibilityDistribution | None = None
    zdist_error: str | None = None


@dataclass
class PointResult:
    spec: HamiltonianSpec
    D: int
    tags: dict[str, TagResult] = field(default_factory=dict)
    levels: LevelStatisticsReport | None = None
    E: np.ndarray | None = field(default=None, repr=False)
    seconds: float = 0.0
    cache_hit: bool = False


def load_or_diagonalize(
    spec: HamiltonianSpec, cache_dir: str | Path | None = None, write: bool = True
):
    """Eigendecomposition of ``spec``, reusing the on-disk cache when given.

    Returns ``(decomposition, cache_hit)``.  Fresh results are stored only
    when ``write`` is set.
    """
    if cache_dir is not None:
        path = cache_path(cache_dir, spec)
        if path.exists():
            cached_spec, dec = read_eigen_cache(path)
            if cached_spec.key() == spec.key():
                return dec, True
            log.warning("cache key mismatch in %s, recomputing", path)
    basis = build_sector_basis(spec.L, spec.sector)
    H = build_hamiltonian(spec, basis)
    dec = diagonalize(H, overwrite=True)
    del H
    if cache_dir is not None and write:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        write_eigen_cache(cache_path(cache_dir, spec), spec, dec)
    return dec, False


def load_or_compute_levels(spec: HamiltonianSpec, cache_dir: str | Path | None = None, write: bool = True):
    """Sorted spectrum, read from a spectrum-only cache when possible.

    Full eigendata caches are not reused here: the values-only solver
    differs from the full one in the last digits, and cache on/off must
    give identical results.
    """
    if cache_dir is None:
        return eigenvalues(build_hamiltonian(spec), overwrite=True), False
    path = cache_path(cache_dir, spec, levels_only=True)
    if path.exists():
        cached_spec, E = read_cached_eigenvalues(path)
        if cached_spec.key() == spec.key():
            return E, True
    E = eigenvalues(build_hamiltonian(spec), overwrite=True)
    if write:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        write_levels_cache(cache_path(cache_dir, spec, levels_only=True), spec, E)
    return E, False


def reduce_deformation(
    spec: HamiltonianSpec,
    tag: Tag,
    dec: SpectralDecomposition,
    cutoffs: list[CutoffRule],
    spectral: bool = False,
    zdist: bool = False,
    window: float = 0.5,
    spectral_width: float | None = None,
    decades: float = 6.0,
    bins_per_decade: int = 20,
) -> TagResult:
    basis = build_sector_basis(spec.L, spec.sector)
    op = build_deformation(spec, tag, basis)
    D = dec.dimension
    mus = {str(rule): rule.resolve(spec.L, D) for rule in cutoffs}
    z = {key: np.empty(D) for key in mus}
    weight = 0.0
    acc = None
    if spectral:
        width = spectral_mu(spec.L) if spectral_width is None else spectral_width
        acc = SpectralAccumulator(dec.E, width, D, decades=decades, bins_per_decade=bins_per_decade)
    for rows, slab in iter_rotated_rows(op, dec):
        for key, mu in mus.items():
            z[key][rows] = susceptibility_rows(slab, rows, dec.E, mu, D)
        weight += offdiagonal_weight_rows(slab, rows)
        if acc is not None:
            acc.add_rows(rows, slab)
    extensive = tag in EXTENSIVE_TAGS
    reports = {
        key: report_from_z(z[key], mus[key], spec.L, extensive, tag=tag.value, cutoff=key)
        for key in mus
    }
    bound = {key: weight / D / (4.0 * mus[key] ** 2) for key in mus}
    result = TagResult(reports, bound, acc.finalize() if acc is not None else None)
    if zdist:
        primary = reports[str(cutoffs[0])]
        try:
            result.zdist = susceptibility_distribution(primary.z, central_fraction=window)
        except ValueError as exc:
            result.zdist_error = str(exc)
    return result


def compute_point(
    spec: HamiltonianSpec,
    tags: list[Tag | str],
    cutoffs: list[CutoffRule] | None = None,
    agp: bool = True,
    spectral: bool = False,
    r_stats: bool = False,
    zdist: bool = False,
    window: float = 0.5,
    cache_dir: str | Path | None = None,
    cache_write: bool = True,
    keep_levels: bool = False,
) -> PointResult:
    """Run the full pipeline for one Hamiltonian."""
    start = time.perf_counter()
    cutoffs = cutoffs or [CutoffRule()]
    D = build_sector_basis(spec.L, spec.sector).dimension
    result = PointResult(spec, D)
    need_vectors = agp or spectral or zdist
    if need_vectors:
        dec, result.cache_hit = load_or_diagonalize(spec, cache_dir, cache_write)
        E = dec.E
        for tag in tags:
            tag = Tag(tag)
            result.tags[tag.value] = reduce_deformation(
                spec, tag, dec, cutoffs, spectral=spectral, zdist=zdist, window=window
            )
        del dec
    else:
        E, result.cache_hit = load_or_compute_levels(spec, cache_dir, cache_write)
    if r_stats:
        result.levels = r_statistics(E, window=window)
    if keep_levels:
        result.E = E
    result.seconds = time.perf_counter() - start
    return result
