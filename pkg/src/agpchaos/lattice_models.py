"""Spin-1/2 chain Hamiltonians and deformation operators in the z-basis.

All operators are dense, real and symmetric in the computational basis.
Pauli matrices are used throughout (not spin-1/2 operators) and the XX
coupling is fixed to J = 1.  Basis states are integers whose bit ``i``
holds the spin on site ``i + 1`` (1 = up, sigma^z = +1).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Mapping

import numpy as np

MAX_SITES = 24
CACHE_MAGIC = b"AGP1"


class Sector(str, enum.Enum):
    FULL = "full"
    ZERO_MAG = "zero_mag"


class Family(str, enum.Enum):
    XXZ = "xxz"
    XXZ_DEFECT = "xxz_defect"
    XXZ_NNN = "xxz_nnn"
    ISING = "ising"
    TFIM_PERIODIC = "tfim_periodic"


class Boundary(str, enum.Enum):
    OPEN = "open"
    PERIODIC = "periodic"


class Tag(str, enum.Enum):
    ANISOTROPY = "delta"
    TRANSVERSE_FIELD = "hx"
    LONGITUDINAL_FIELD = "hz"
    DEFECT_STRENGTH = "eps_d"
    NNN_STRENGTH = "delta2"
    CUSTOM = "custom"


# couplings each family accepts; tags are named after the coupling they differentiate
FAMILY_COUPLINGS: dict[Family, tuple[str, ...]] = {
    Family.XXZ: ("delta",),
    Family.XXZ_DEFECT: ("delta", "eps_d"),
    Family.XXZ_NNN: ("delta", "delta2"),
    Family.ISING: ("hx", "hz"),
    Family.TFIM_PERIODIC: ("hx",),
}

EXTENSIVE_TAGS = frozenset(
    {Tag.ANISOTROPY, Tag.TRANSVERSE_FIELD, Tag.LONGITUDINAL_FIELD, Tag.NNN_STRENGTH}
)

_XXZ_FAMILIES = (Family.XXZ, Family.XXZ_DEFECT, Family.XXZ_NNN)


class ModelError(ValueError):
    """Raised for inconsistent model, sector or deformation choices."""


@dataclass(frozen=True)
class SectorBasis:
    L: int
    sector: Sector
    states: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return int(self.states.size)

    def index(self, states: np.ndarray) -> np.ndarray:
        """Positions of ``states`` in the basis (states must be members)."""
        return np.searchsorted(self.states, states)

    def spins(self) -> np.ndarray:
        """(D, L) array of sigma^z eigenvalues, column ``i`` is site ``i + 1``."""
        bits = (self.states[:, None] >> np.arange(self.L)) & 1
        return (2 * bits - 1).astype(np.int8)


def build_sector_basis(L: int, sector: Sector | str = Sector.FULL) -> SectorBasis:
    """Enumerate the canonical (increasing) basis of a chain of ``L`` spins.

    >>> build_sector_basis(4, "zero_mag").states.tolist()
    [3, 5, 6, 9, 10, 12]
    """
    sector = Sector(sector)
    if not isinstance(L, (int, np.integer)) or not 1 <= L <= MAX_SITES:
        raise ModelError(f"chain length must be an integer in [1, {MAX_SITES}], got {L!r}")
    L = int(L)
    states = np.arange(2**L, dtype=np.int64)
    if sector is Sector.ZERO_MAG:
        popcount = np.zeros_like(states)
        for i in range(L):
            popcount += (states >> i) & 1
        states = states[popcount == L // 2]
        assert states.size == comb(L, L // 2)
    return SectorBasis(L=L, sector=sector, states=states)


@dataclass(frozen=True)
class HamiltonianSpec:
    family: Family
    L: int
    couplings: Mapping[str, float] = field(default_factory=dict)
    boundary: Boundary | None = None
    sector: Sector = Sector.FULL

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "sector", Sector(self.sector))
        default_bc = Boundary.PERIODIC if self.family is Family.TFIM_PERIODIC else Boundary.OPEN
        bc = default_bc if self.boundary is None else Boundary(self.boundary)
        object.__setattr__(self, "boundary", bc)
        allowed = FAMILY_COUPLINGS[self.family]
        unknown = set(self.couplings) - set(allowed)
        if unknown:
            raise ModelError(f"unknown couplings {sorted(unknown)} for {self.family.value}")
        full = {name: float(self.couplings.get(name, 0.0)) for name in allowed}
        object.__setattr__(self, "couplings", full)
        if bc is not default_bc:
            raise ModelError(f"{self.family.value} requires {default_bc.value} boundary")
        if self.sector is Sector.ZERO_MAG and self.family not in _XXZ_FAMILIES:
            raise ModelError(f"{self.family.value} has no magnetization sector")
        if not 1 <= self.L <= MAX_SITES:
            raise ModelError(f"chain length out of range: {self.L}")

    def with_couplings(self, **updates: float) -> "HamiltonianSpec":
        return HamiltonianSpec(
            self.family, self.L, {**self.couplings, **updates}, self.boundary, self.sector
        )

    def key(self) -> tuple:
        return (
            self.family.value,
            self.L,
            self.boundary.value,
            self.sector.value,
            tuple(sorted(self.couplings.items())),
        )


def defect_site(L: int) -> int:
    """1-based site ceil((L + 1) / 2): L=3 -> 2, L=4 -> 3, L=16 -> 9."""
    return (L + 2) // 2


def _bonds(L: int, boundary: Boundary, distance: int = 1) -> list[tuple[int, int]]:
    if boundary is Boundary.PERIODIC:
        return [(i, (i + distance) % L) for i in range(L)]
    return [(i, i + distance) for i in range(L - distance)]


def _zz_diagonal(spins: np.ndarray, bonds) -> np.ndarray:
    out = np.zeros(spins.shape[0])
    for i, j in bonds:
        out += spins[:, i] * spins[:, j]
    return out


def _flip_entries(basis: SectorBasis, bonds):
    """(rows, cols) of the sigma^+ sigma^- + h.c. hops on ``bonds``."""
    rows, cols = [], []
    states = basis.states
    for i, j in bonds:
        differ = ((states >> i) ^ (states >> j)) & 1
        src = np.nonzero(differ)[0]
        dst = basis.index(states[src] ^ ((1 << i) | (1 << j)))
        rows.append(src)
        cols.append(dst)
    if not rows:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def _xfield_entries(basis: SectorBasis):
    if basis.sector is not Sector.FULL:
        raise ModelError("single spin flips leave the magnetization sector")
    rows, cols = [], []
    idx = np.arange(basis.dimension)
    for i in range(basis.L):
        rows.append(idx)
        # full space: index == state
        cols.append(basis.states ^ (1 << i))
    return np.concatenate(rows), np.concatenate(cols)


def _check_basis(spec: HamiltonianSpec, basis: SectorBasis) -> None:
    if basis.L != spec.L:
        raise ModelError(f"basis has L={basis.L}, spec has L={spec.L}")
    if basis.sector is not spec.sector:
        raise ModelError(f"basis sector {basis.sector.value} != spec sector {spec.sector.value}")


def hamiltonian_diagonal(spec: HamiltonianSpec, basis: SectorBasis) -> np.ndarray:
    """The z-basis diagonal of H (everything except the flip / sigma^x terms)."""
    _check_basis(spec, basis)
    c = spec.couplings
    spins = basis.spins().astype(np.float64)
    L, bc = spec.L, spec.boundary
    if spec.family in _XXZ_FAMILIES:
        diag = c["delta"] * _zz_diagonal(spins, _bonds(L, bc))
        if spec.family is Family.XXZ_DEFECT:
            diag += c["eps_d"] * spins[:, defect_site(L) - 1]
        elif spec.family is Family.XXZ_NNN:
            diag += c["delta2"] * _zz_diagonal(spins, _bonds(L, bc, 2))
        return diag
    diag = _zz_diagonal(spins, _bonds(L, bc))
    if spec.family is Family.ISING:
        diag += c["hz"] * spins.sum(axis=1)
    return diag


def build_hamiltonian(spec: HamiltonianSpec, basis: SectorBasis | None = None) -> np.ndarray:
    """Assemble H as a dense (D, D) float64 matrix.

    XXZ hops ``sx sx + sy sy = 2 (s+ s- + s- s+)`` enter with coefficient 2;
    Ising transverse-field flips enter with coefficient ``hx``.
    """
    if basis is None:
        basis = build_sector_basis(spec.L, spec.sector)
    D = basis.dimension
    H = np.zeros((D, D))
    H[np.diag_indices(D)] = hamiltonian_diagonal(spec, basis)
    if spec.family in _XXZ_FAMILIES:
        rows, cols = _flip_entries(basis, _bonds(spec.L, spec.boundary))
        np.add.at(H, (rows, cols), 2.0)
    else:
        hx = spec.couplings["hx"]
        if hx != 0.0:
            rows, cols = _xfield_entries(basis)
            np.add.at(H, (rows, cols), hx)
    return H


@dataclass(frozen=True)
class DeformationDirection:
    """The operator conjugate to a coupling, d H / d lambda.

    Diagonal operators keep only their diagonal (``diagonal``); everything
    else is stored dense in ``dense``.  When ``imaginary`` is set the operator
    is ``1j * dense`` with ``dense`` real antisymmetric, which is how
    ``i[H, B]`` deformations with real symmetric ``B`` are represented.
    """

    tag: Tag
    diagonal: np.ndarray | None = field(default=None, repr=False)
    dense: np.ndarray | None = field(default=None, repr=False)
    imaginary: bool = False

    @property
    def dimension(self) -> int:
        return (self.diagonal if self.diagonal is not None else self.dense).shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self.diagonal is not None

    @property
    def matrix(self) -> np.ndarray:
        """Dense real matrix (the generator G when ``imaginary``)."""
        if self.diagonal is not None:
            return np.diag(self.diagonal)
        return self.dense


ALLOWED_TAGS: dict[Family, tuple[Tag, ...]] = {
    Family.XXZ: (Tag.ANISOTROPY,),
    Family.XXZ_DEFECT: (Tag.ANISOTROPY, Tag.DEFECT_STRENGTH),
    Family.XXZ_NNN: (Tag.ANISOTROPY, Tag.NNN_STRENGTH),
    Family.ISING: (Tag.TRANSVERSE_FIELD, Tag.LONGITUDINAL_FIELD),
    Family.TFIM_PERIODIC: (Tag.TRANSVERSE_FIELD,),
}


def build_deformation(
    spec: HamiltonianSpec, tag: Tag | str, basis: SectorBasis | None = None
) -> DeformationDirection:
    """Return d H / d lambda for the coupling named by ``tag``."""
    tag = Tag(tag)
    if tag not in ALLOWED_TAGS[spec.family]:
        raise ModelError(f"deformation {tag.value!r} not applicable to {spec.family.value}")
    if basis is None:
        basis = build_sector_basis(spec.L, spec.sector)
    _check_basis(spec, basis)
    spins = basis.spins().astype(np.float64)
    L, bc = spec.L, spec.boundary
    if tag is Tag.ANISOTROPY:
        return DeformationDirection(tag, diagonal=_zz_diagonal(spins, _bonds(L, bc)))
    if tag is Tag.DEFECT_STRENGTH:
        return DeformationDirection(tag, diagonal=spins[:, defect_site(L) - 1].copy())
    if tag is Tag.NNN_STRENGTH:
        return DeformationDirection(tag, diagonal=_zz_diagonal(spins, _bonds(L, bc, 2)))
    if tag is Tag.LONGITUDINAL_FIELD:
        return DeformationDirection(tag, diagonal=spins.sum(axis=1))
    D = basis.dimension
    X = np.zeros((D, D))
    rows, cols = _xfield_entries(basis)
    np.add.at(X, (rows, cols), 1.0)
    return DeformationDirection(tag, dense=X)


def commutator_deformation(H: np.ndarray, B: np.ndarray) -> DeformationDirection:
    """Deformation ``K = i[H, B]``, whose exact gauge potential is ``B`` itself.

    Real symmetric ``B`` gives an imaginary K, stored through its real
    antisymmetric generator ``[H, B]``.  Real antisymmetric ``B`` stands for
    the Hermitian generator ``iB`` and gives the real symmetric ``K = -[H, B]``.
    """
    H = np.asarray(H, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if H.shape != B.shape or H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ModelError(f"dimension mismatch: H {H.shape}, B {B.shape}")
    comm = H @ B - B @ H
    if np.allclose(B, B.T, rtol=0, atol=1e-12 * max(1.0, np.abs(B).max())):
        return DeformationDirection(Tag.CUSTOM, dense=comm, imaginary=True)
    if np.allclose(B, -B.T, rtol=0, atol=1e-12 * max(1.0, np.abs(B).max())):
        return DeformationDirection(Tag.CUSTOM, dense=-comm)
    raise ModelError("B must be real symmetric or real antisymmetric")


# ---------------------------------------------------------------------------
# flat binary matrix cache
# ---------------------------------------------------------------------------

_SECTOR_CODES = {Sector.FULL: 0, Sector.ZERO_MAG: 1}
_FAMILY_CODES = {f: i for i, f in enumerate(Family)}


def pack_header(spec: HamiltonianSpec) -> bytes:
    """Header: magic, L, sector, family, then (name, f64) coupling pairs."""
    parts = [
        CACHE_MAGIC,
        struct.pack(
            "<IBBH",
            spec.L,
            _SECTOR_CODES[spec.sector],
            _FAMILY_CODES[spec.family],
            len(spec.couplings),
        ),
    ]
    for name, value in sorted(spec.couplings.items()):
        raw = name.encode()
        parts.append(struct.pack("<B", len(raw)) + raw + struct.pack("<d", value))
    return b"".join(parts)


def unpack_header(buf: bytes) -> tuple[HamiltonianSpec, int]:
    """Inverse of :func:`pack_header`; returns the spec and the header size."""
    if buf[:4] != CACHE_MAGIC:
        raise ModelError("not an AGP1 cache file")
    L, sector, family, n = struct.unpack_from("<IBBH", buf, 4)
    pos = 4 + struct.calcsize("<IBBH")
    couplings = {}
    for _ in range(n):
        (size,) = struct.unpack_from("<B", buf, pos)
        name = buf[pos + 1 : pos + 1 + size].decode()
        (value,) = struct.unpack_from("<d", buf, pos + 1 + size)
        couplings[name] = value
        pos += 1 + size + 8
    inv_sector = {v: k for k, v in _SECTOR_CODES.items()}
    families = list(Family)
    spec = HamiltonianSpec(families[family], L, couplings, sector=inv_sector[sector])
    return spec, pos


def write_matrix_cache(path: str | Path, spec: HamiltonianSpec, H: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_header(spec))
        fh.write(np.ascontiguousarray(H, dtype="<f8").tobytes())


def read_matrix_cache(path: str | Path) -> tuple[HamiltonianSpec, np.ndarray]:
    with open(path, "rb") as fh:
        head = fh.read(4096)
        spec, offset = unpack_header(head)
    D = build_sector_basis(spec.L, spec.sector).dimension
    data = np.fromfile(path, dtype="<f8", offset=offset)
    if data.size != D * D:
        raise ModelError(f"cache holds {data.size} values, expected {D * D}")
    return spec, data.reshape(D, D)
