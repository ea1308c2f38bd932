"""Full dense diagonalization and eigenbasis rotation of deformations."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
import scipy.linalg

from .lattice_models import (
    DeformationDirection,
    HamiltonianSpec,
    build_sector_basis,
    pack_header,
    unpack_header,
)

SOLVER_VERSION = "evr-1"

# column chunk for sign fixing / row block for rotations; bounds temporaries
_CHUNK = 1024


class DiagonalizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralDecomposition:
    E: np.ndarray
    V: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.E.size


def fingerprint(H: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(H).tobytes()).hexdigest()[:16]


def fix_signs(V: np.ndarray) -> None:
    """In place: make the largest-magnitude entry of each column positive."""
    D = V.shape[1]
    for start in range(0, D, _CHUNK):
        block = V[:, start : start + _CHUNK]
        rows = np.argmax(np.abs(block), axis=0)
        signs = np.sign(block[rows, np.arange(block.shape[1])])
        signs[signs == 0] = 1.0
        block *= signs


def _c_order(V: np.ndarray) -> np.ndarray:
    """Row-major copy of a square matrix, transposing in place when it is column-major.

    Keeps fresh and cached eigenvectors in one memory layout, so BLAS
    results agree to the last bit, without a second D x D buffer.
    """
    if V.flags.c_contiguous:
        return V
    if not V.flags.f_contiguous:
        return np.ascontiguousarray(V)
    A = V.T  # row-major view holding V^T
    n = A.shape[0]
    for i in range(0, n, _CHUNK):
        I = slice(i, min(i + _CHUNK, n))
        A[I, I] = A[I, I].T.copy()
        for j in range(i + _CHUNK, n, _CHUNK):
            J = slice(j, min(j + _CHUNK, n))
            tmp = A[I, J].copy()
            A[I, J] = A[J, I].T
            A[J, I] = tmp.T
    return A


def diagonalize(H: np.ndarray, overwrite: bool = False) -> SpectralDecomposition:
    """Eigen-decompose a real symmetric matrix.

    Eigenvalues ascend; eigenvector signs are fixed so the largest-magnitude
    component of every column is positive.  Degenerate subspaces come back in
    whatever orthonormal basis LAPACK produces.

    Args:
        H: real symmetric (D, D) matrix.
        overwrite: allow LAPACK to destroy ``H`` (saves one D x D buffer).
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if not all(np.isfinite(H[i : i + _CHUNK]).all() for i in range(0, H.shape[0], _CHUNK)):
        raise ValueError("matrix contains NaN or inf")
    tag = fingerprint(H) if H.size <= 1 << 22 else f"D={H.shape[0]}"
    try:
        # a symmetric row-major matrix is its own column-major transpose;
        # handing LAPACK that view avoids a full reordering copy
        A = H.T if H.flags.c_contiguous else H
        E, V = scipy.linalg.eigh(A, driver="evr", overwrite_a=overwrite, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise DiagonalizationError(f"eigh failed for matrix {tag}: {exc}") from exc
    V = _c_order(V)
    fix_signs(V)
    return SpectralDecomposition(E=E, V=V)


def eigenvalues(H: np.ndarray, overwrite: bool = False) -> np.ndarray:
    """Ascending eigenvalues only (cheaper than :func:`diagonalize`)."""
    return scipy.linalg.eigh(
        H, eigvals_only=True, driver="evr", overwrite_a=overwrite, check_finite=False
    )


def _as_operator(O) -> tuple[np.ndarray | None, np.ndarray | None]:
    if isinstance(O, DeformationDirection):
        return O.diagonal, O.dense
    O = np.asarray(O, dtype=np.float64)
    if O.ndim == 1:
        return O, None
    return None, O


def iter_rotated_rows(
    O, dec: SpectralDecomposition, block: int = _CHUNK
) -> Iterator[tuple[slice, np.ndarray]]:
    """Yield ``(rows, V[:, rows]^T O V)`` blocks of the rotated operator.

    ``O`` may be a dense matrix, a 1-d diagonal, or a DeformationDirection.
    Only one (block, D) slab is alive at a time for diagonal operators.
    """
    diag, dense = _as_operator(O)
    V = dec.V
    D = dec.dimension
    n = (diag if diag is not None else dense).shape[0]
    if n != D:
        raise ValueError(f"dimension mismatch: operator {n}, eigenbasis {D}")
    OV = None if dense is None else dense @ V
    for start in range(0, D, block):
        rows = slice(start, min(start + block, D))
        if OV is None:
            yield rows, (V[:, rows] * diag[:, None]).T @ V
        else:
            yield rows, V[:, rows].T @ OV


def rotate_to_eigenbasis(O, dec: SpectralDecomposition) -> np.ndarray:
    """Return ``V^T O V``."""
    D = dec.dimension
    out = np.empty((D, D))
    for rows, slab in iter_rotated_rows(O, dec):
        out[rows] = slab
    return out


# ---------------------------------------------------------------------------
# eigendata cache: matrix-cache header, then E, then V (little-endian f64)
# ---------------------------------------------------------------------------


def write_eigen_cache(path: str | Path, spec: HamiltonianSpec, dec: SpectralDecomposition) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(pack_header(spec))
        fh.write(dec.E.astype("<f8").tobytes())
        for start in range(0, dec.dimension, _CHUNK):
            fh.write(np.ascontiguousarray(dec.V[start : start + _CHUNK], dtype="<f8").tobytes())
    tmp.replace(path)


def read_cached_eigenvalues(path: str | Path) -> tuple[HamiltonianSpec, np.ndarray]:
    """Only the spectrum from an eigendata cache, without touching the vectors."""
    with open(path, "rb") as fh:
        spec, offset = unpack_header(fh.read(4096))
    D = build_sector_basis(spec.L, spec.sector).dimension
    E = np.fromfile(path, dtype="<f8", count=D, offset=offset)
    if E.size != D:
        raise ValueError(f"truncated eigendata cache {path}")
    return spec, E


def read_eigen_cache(path: str | Path) -> tuple[HamiltonianSpec, SpectralDecomposition]:
    spec, E = read_cached_eigenvalues(path)
    D = E.size
    with open(path, "rb") as fh:
        _, offset = unpack_header(fh.read(4096))
    V = np.fromfile(path, dtype="<f8", count=D * D, offset=offset + 8 * D)
    if V.size != D * D:
        raise ValueError(f"truncated eigendata cache {path}")
    return spec, SpectralDecomposition(E=E, V=V.reshape(D, D))


def cache_path(cache_dir: str | Path, spec: HamiltonianSpec, levels_only: bool = False) -> Path:
    digest = hashlib.sha256(repr((spec.key(), SOLVER_VERSION)).encode()).hexdigest()[:20]
    prefix = "lev" if levels_only else "eig"
    return Path(cache_dir) / f"{prefix}_{spec.family.value}_L{spec.L}_{digest}.bin"


def write_levels_cache(path: str | Path, spec: HamiltonianSpec, E: np.ndarray) -> None:
    """Spectrum-only cache; same layout as the head of an eigendata file."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(pack_header(spec))
        fh.write(np.asarray(E, dtype="<f8").tobytes())
    tmp.replace(path)
