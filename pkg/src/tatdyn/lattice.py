"""Periodic square lattices with power-law XY couplings.

Distances use the minimum-image convention. Couplings carry the Kac factor
for alpha <= D so that the interaction energy stays extensive.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_SITES = 10_000
_IMAG_TOL = 1e-12


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    dimension: int
    linear_size: int
    alpha: float
    coupling_J: float = 1.0

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise LatticeError(f"dimension must be 1 or 2, got {self.dimension}")
        if int(self.linear_size) != self.linear_size or self.linear_size < 2:
            raise LatticeError(f"linear_size must be an integer >= 2, got {self.linear_size}")
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise LatticeError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not self.coupling_J > 0:
            raise LatticeError(f"coupling_J must be positive, got {self.coupling_J}")

    @property
    def n_sites(self) -> int:
        return self.linear_size**self.dimension

    @property
    def shape(self) -> tuple:
        return (self.linear_size,) * self.dimension

    @property
    def long_range(self) -> bool:
        """True when the Kac factor applies (alpha <= D)."""
        return self.alpha <= self.dimension


def min_image(offset, L):
    """Fold integer offsets into the minimum-image range, returned as absolute values."""
    offset = np.mod(offset, L)
    return np.minimum(offset, L - offset)


def displacement_kernel(spec: LatticeSpec) -> np.ndarray:
    """Minimum-image distance from site 0 to every site, shaped like the lattice."""
    L = spec.linear_size
    axis = min_image(np.arange(L), L).astype(float)
    if spec.dimension == 1:
        return axis
    return np.sqrt(axis[:, None] ** 2 + axis[None, :] ** 2)


def power_kernel(spec: LatticeSpec) -> np.ndarray:
    """r^-alpha on the lattice with the r = 0 entry set to zero."""
    r = displacement_kernel(spec)
    kernel = np.zeros_like(r)
    nz = r > 0
    kernel[nz] = r[nz] ** (-spec.alpha)
    return kernel


def kac_factor(spec: LatticeSpec) -> float:
    if not spec.long_range:
        return 1.0
    return 1.0 + float(power_kernel(spec).sum())


def effective_pair_coupling(spec: LatticeSpec) -> float:
    """The prefactor J / N_alpha multiplying 1/r^alpha."""
    return spec.coupling_J / kac_factor(spec)


def site_coordinates(spec: LatticeSpec) -> np.ndarray:
    """Integer coordinates of every site, row-major, shape (N, D)."""
    grids = np.meshgrid(*[np.arange(spec.linear_size)] * spec.dimension, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


@dataclass(frozen=True)
class CouplingTable:
    spec: LatticeSpec
    pair_coupling: np.ndarray = field(repr=False)
    kac_factor: float
    min_image_distances: np.ndarray = field(repr=False)

    @property
    def n_sites(self) -> int:
        return self.pair_coupling.shape[0]

    def row_sum(self) -> float:
        return float(self.pair_coupling[0].sum())

    def to_csv(self, path) -> Path:
        """Write (row, col, value) triples for the nonzero couplings."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "col", "value"])
            rows, cols = np.nonzero(self.pair_coupling)
            for i, j in zip(rows, cols):
                writer.writerow([int(i), int(j), repr(float(self.pair_coupling[i, j]))])
        return path


def build_couplings(spec: LatticeSpec, max_sites: int = MAX_SITES) -> CouplingTable:
    """Dense N x N coupling table J/(N_alpha r_ij^alpha) with zero diagonal."""
    N = spec.n_sites
    if N > max_sites:
        raise LatticeError(f"{N} sites exceeds the configured maximum of {max_sites}")
    L = spec.linear_size
    coords = site_coordinates(spec)
    diff = min_image(coords[:, None, :] - coords[None, :, :], L).astype(float)
    dist = np.sqrt((diff**2).sum(axis=-1))
    kac = kac_factor(spec)
    pair = np.zeros((N, N))
    off = ~np.eye(N, dtype=bool)
    pair[off] = spec.coupling_J / kac * dist[off] ** (-spec.alpha)
    for a in (pair, dist):
        a.setflags(write=False)
    return CouplingTable(spec=spec, pair_coupling=pair, kac_factor=kac, min_image_distances=dist)


@dataclass(frozen=True)
class FourierFactors:
    """gamma_k = sum_{r != 0} exp(i k.r) / r^alpha on the allowed wavevectors.

    ``gamma`` is indexed by the integers n with k = 2 pi n / L.
    """

    spec: LatticeSpec
    gamma: np.ndarray = field(repr=False)

    @property
    def gamma_zero(self) -> float:
        return float(self.gamma[(0,) * self.spec.dimension])

    def wavevectors(self) -> np.ndarray:
        """Wavevectors k in [0, 2 pi) per axis, shape (*lattice_shape, D)."""
        L = self.spec.linear_size
        ks = 2 * np.pi * np.arange(L) / L
        grids = np.meshgrid(*[ks] * self.spec.dimension, indexing="ij")
        return np.stack(grids, axis=-1)

    def as_dict(self) -> dict:
        L = self.spec.linear_size
        out = {}
        for idx in np.ndindex(self.gamma.shape):
            out[tuple(2 * np.pi * n / L for n in idx)] = float(self.gamma[idx])
        return out


def _real_part_checked(values: np.ndarray) -> np.ndarray:
    worst = float(np.max(np.abs(values.imag))) if values.size else 0.0
    if worst > _IMAG_TOL * max(1.0, float(np.max(np.abs(values.real)))):
        raise LatticeError(f"gamma_k has imaginary part {worst:.3e}; kernel is not inversion symmetric")
    return np.ascontiguousarray(values.real)


def _check_kernel_symmetry(kernel: np.ndarray):
    mirrored = kernel
    for ax in range(kernel.ndim):
        mirrored = np.roll(np.flip(mirrored, axis=ax), 1, axis=ax)
    if not np.allclose(kernel, mirrored, rtol=0, atol=1e-14):
        raise LatticeError("coupling kernel is not symmetric under r -> -r")


def fourier_factors(spec: LatticeSpec, chunk: int = 512) -> FourierFactors:
    """Direct summation of gamma_k over all minimum-image displacements.

    The double sum over displacements factorizes along lattice axes, so it
    is evaluated as products with the exact phase matrices exp(i k r); rows
    are processed in chunks to bound memory for long chains.
    """
    kernel = power_kernel(spec)
    _check_kernel_symmetry(kernel)
    L = spec.linear_size
    r = np.arange(L)

    def phases(rows):
        return np.exp(2j * np.pi * np.outer(rows, r) / L)

    if spec.dimension == 1:
        gamma = np.empty(L, dtype=complex)
        for start in range(0, L, chunk):
            rows = r[start:start + chunk]
            gamma[start:start + chunk] = phases(rows) @ kernel
    else:
        E = phases(r)
        gamma = E @ kernel @ E.T
    gamma = _real_part_checked(gamma)
    gamma.setflags(write=False)
    return FourierFactors(spec=spec, gamma=gamma)


def gamma_at(spec: LatticeSpec, n) -> float:
    """gamma_k at a single wavevector k = 2 pi n / L, O(N) direct sum."""
    kernel = power_kernel(spec)
    L = spec.linear_size
    n = np.atleast_1d(np.asarray(n))
    if n.size != spec.dimension:
        raise LatticeError(f"wavevector index needs {spec.dimension} components")
    coords = [np.arange(L)] * spec.dimension
    grids = np.meshgrid(*coords, indexing="ij")
    phase = sum(2 * np.pi * ni * g / L for ni, g in zip(n, grids))
    value = np.sum(kernel * np.exp(1j * phase))
    return float(_real_part_checked(np.atleast_1d(value))[0])


def smallest_wavevector_index(spec: LatticeSpec) -> tuple:
    return (1,) + (0,) * (spec.dimension - 1)
