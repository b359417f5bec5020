"""Rotor/spin-wave (RSW) treatment of power-law TaT dynamics.

The zero-momentum sector is a rotor evolved exactly in the Dicke sector
with coupling J_eff; finite-momentum fluctuations are linear spin waves
around the x-polarized state with

    A_k = J'(gamma_0 - gamma_k / 2) - Omega,   B_k = -J' gamma_k / 2,

where J' = J / N_alpha is the Kac-normalized pair coupling.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import collective
from .lattice import (LatticeSpec, effective_pair_coupling, fourier_factors, gamma_at,
                      smallest_wavevector_index)
from .observables import Estimate, ObservableSeries, squeezing_from_moments

BREAKDOWN_FRACTION = 0.1


def dynamical_exponent(alpha: float, dimension: int) -> float:
    if alpha <= dimension:
        return 0.0
    if alpha < dimension + 2:
        return (alpha - dimension) / 2
    return 1.0


@dataclass(frozen=True)
class SpinWaveSpectrum:
    """Spin-wave coefficients on every allowed wavevector (index 0 is k = 0).

    Arrays are shaped like the lattice; ``omega_sq`` = A^2 - B^2.
    """

    spec: LatticeSpec
    omega: float
    gamma: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    pair_coupling: float
    effective_coupling: float
    lambda_eff: float
    z: float

    @property
    def omega_sq(self) -> np.ndarray:
        return self.A**2 - self.B**2

    @property
    def frequencies(self) -> np.ndarray:
        """Complex omega_k: real when stable, i lambda_k when unstable."""
        w2 = self.omega_sq
        return np.where(w2 >= 0, np.sqrt(np.abs(w2)) + 0j, 1j * np.sqrt(np.abs(w2)))

    @property
    def growth_rates(self) -> np.ndarray:
        w2 = self.omega_sq
        return np.where(w2 < 0, np.sqrt(np.abs(w2)), 0.0)

    @property
    def stable(self) -> np.ndarray:
        return self.omega_sq >= 0

    @property
    def finite_k(self) -> np.ndarray:
        mask = np.ones(self.A.shape, bool)
        mask[(0,) * self.spec.dimension] = False
        return mask

    @property
    def lambda_max(self) -> float:
        """Largest growth rate over k != 0."""
        return float(self.growth_rates[self.finite_k].max())

    def records(self):
        """Per-wavevector dicts (k, A, B, omega, lambda, stable)."""
        L = self.spec.linear_size
        w = self.frequencies
        lam = self.growth_rates
        for idx in np.ndindex(self.A.shape):
            yield {"k": tuple(2 * math.pi * n / L for n in idx), "A": float(self.A[idx]),
                   "B": float(self.B[idx]), "omega": complex(w[idx]), "lambda": float(lam[idx]),
                   "stable": bool(self.omega_sq[idx] >= 0)}


def _coefficients(gamma, pair, omega):
    g0 = gamma[(0,) * gamma.ndim]
    return pair * (g0 - gamma / 2) - omega, -pair * gamma / 2


def effective_coupling(spec: LatticeSpec, gamma0: float | None = None) -> float:
    """J_eff = N J' gamma_0 / (N - 1)."""
    if gamma0 is None:
        gamma0 = gamma_at(spec, (0,) * spec.dimension)
    N = spec.n_sites
    return N * effective_pair_coupling(spec) * gamma0 / (N - 1)


def spectrum(spec: LatticeSpec, omega: float, factors=None) -> SpinWaveSpectrum:
    if omega < 0:
        raise ValueError("field must be non-negative")
    factors = factors or fourier_factors(spec)
    gamma = np.asarray(factors.gamma)
    pair = effective_pair_coupling(spec)
    A, B = _coefficients(gamma, pair, omega)
    j_eff = effective_coupling(spec, factors.gamma_zero)
    lam_eff = math.sqrt(max(omega * (j_eff - omega), 0.0))
    return SpinWaveSpectrum(spec, float(omega), gamma, A, B, pair, j_eff, lam_eff,
                            dynamical_exponent(spec.alpha, spec.dimension))


@dataclass(frozen=True)
class CriticalField:
    value: float
    asymptotic_exponent: float


def critical_field(spec: LatticeSpec) -> CriticalField:
    """Field at which the smallest finite wavevector turns unstable.

    Returns J'(gamma_0 - gamma_kmin) and the predicted large-L exponent -2z.
    """
    if spec.linear_size < 3:
        raise ValueError("critical field needs L >= 3")
    g0 = gamma_at(spec, (0,) * spec.dimension)
    gk = gamma_at(spec, smallest_wavevector_index(spec))
    value = effective_pair_coupling(spec) * (g0 - gk)
    return CriticalField(float(value), -2 * dynamical_exponent(spec.alpha, spec.dimension))


@dataclass
class StabilityMap:
    omegas: np.ndarray
    sizes: np.ndarray
    lambda_max: np.ndarray  # shape (len(sizes), len(omegas))
    critical_fields: np.ndarray
    alpha: float
    dimension: int

    def rows(self):
        for i, L in enumerate(self.sizes):
            for j, om in enumerate(self.omegas):
                yield float(om), int(L), float(self.lambda_max[i, j]), float(self.critical_fields[i])

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["omega", "L", "lambda_max", "omega_c"])
            for row in self.rows():
                w.writerow([repr(row[0]), row[1], repr(row[2]), repr(row[3])])
        return path


def stability_map(alpha: float, dimension: int, sizes, omegas, coupling: float = 1.0) -> StabilityMap:
    """Largest finite-k growth rate on an (L, Omega) grid."""
    sizes = np.asarray(sizes, dtype=int)
    omegas = np.asarray(omegas, dtype=float)
    lam = np.zeros((sizes.size, omegas.size))
    crit = np.zeros(sizes.size)
    for i, L in enumerate(sizes):
        spec = LatticeSpec(dimension, int(L), alpha, coupling)
        gamma = np.asarray(fourier_factors(spec).gamma)
        pair = effective_pair_coupling(spec)
        g0 = gamma[(0,) * dimension]
        gk = np.delete(gamma.ravel(), 0)
        # omega_sq = (A - B)(A + B) = (J' g0 - Om)(J'(g0 - gk) - Om)
        w2 = (pair * g0 - omegas[:, None]) * (pair * (g0 - gk[None, :]) - omegas[:, None])
        lam[i] = np.sqrt(np.clip(-w2, 0, None)).max(axis=1)
        crit[i] = critical_field(spec).value
    return StabilityMap(omegas, sizes, lam, crit, float(alpha), int(dimension))


def _trig_entries(omega_sq, t):
    """cos-like and sin(w t)/w-like propagator entries for each mode and time.

    Covers stable (w^2 > 0), unstable (w^2 < 0) and marginal modes.
    """
    w2 = np.asarray(omega_sq)[..., None]
    t = np.asarray(t, dtype=float)
    w = np.sqrt(np.abs(w2))
    wt = w * t
    small = wt < 1e-6
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(w2 >= 0, np.cos(wt), np.cosh(wt))
        s = np.where(w2 >= 0, np.sin(wt), np.sinh(wt)) / np.where(w > 0, w, 1.0)
    s = np.where(small, t * (1 - np.sign(w2) * wt**2 / 6), s)
    c = np.where(small, 1 - np.sign(w2) * wt**2 / 2, c)
    return c, s


@dataclass
class ModeOccupations:
    times: np.ndarray
    n_k: np.ndarray  # (*lattice_shape, T), k = 0 entry zeroed
    total: np.ndarray
    breakdown: np.ndarray
    threshold: float


def mode_occupations(sw: SpinWaveSpectrum, t) -> ModeOccupations:
    """Holstein-Primakoff occupations after a vacuum quench.

    n_k(t) = B_k^2 sin^2(w_k t)/w_k^2 (sinh for unstable modes). The k = 0
    mode belongs to the rotor and is excluded.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("occupations are defined for t >= 0")
    _, s = _trig_entries(sw.omega_sq, t)
    n = (sw.B[..., None] * s) ** 2
    n[(0,) * sw.spec.dimension] = 0.0
    total = n.reshape(-1, t.size).sum(axis=0)
    threshold = BREAKDOWN_FRACTION * sw.spec.n_sites
    return ModeOccupations(t, n, total, total > threshold, threshold)


def transverse_fluctuations(sw: SpinWaveSpectrum, t) -> np.ndarray:
    """<y_k y_-k>(t) for each mode: (1/4)[c^2 + (A - B)^2 s^2]."""
    c, s = _trig_entries(sw.omega_sq, np.atleast_1d(t))
    return 0.25 * (c**2 + ((sw.A - sw.B)[..., None] * s) ** 2)


def _axis_cosines(spec: LatticeSpec, distances) -> np.ndarray:
    """cos(k . d) for d along the first axis, shape (*lattice_shape, n_d)."""
    L = spec.linear_size
    n = np.arange(L)
    d = np.asarray(distances)
    cos1 = np.cos(2 * np.pi * np.outer(n, d) / L)
    if spec.dimension == 1:
        return cos1
    return np.broadcast_to(cos1[:, None, :], (L, L, d.size))


def rsw_observables(spec: LatticeSpec, omega: float, t_grid, correlation_times=(), distances=None,
                    rotor_propagator=None) -> ObservableSeries:
    """RSW estimates of collective moments, squeezing and C^yy(d, t).

    The series stops at the first time the spin-wave population exceeds
    the breakdown threshold; that time is recorded in ``metadata``.
    """
    t = np.asarray(t_grid, dtype=float)
    factors = fourier_factors(spec)
    sw = spectrum(spec, omega, factors)
    N = spec.n_sites
    occ = mode_occupations(sw, t)
    flags = []
    meta = {"engine": "rsw", "effective_coupling": sw.effective_coupling, "lambda_eff": sw.lambda_eff,
            "lambda_max": sw.lambda_max, "breakdown_threshold": occ.threshold, "breakdown_time": None}
    if occ.breakdown.any():
        cut = int(np.argmax(occ.breakdown))
        meta["breakdown_time"] = float(t[cut])
        flags.append(f"rsw breakdown at t={t[cut]:.6g}: spin-wave population exceeds {occ.threshold:g}")
        t = t[:cut]
        occ.n_k = occ.n_k[..., :cut]
        occ.total = occ.total[:cut]
    if t.size == 0:
        raise ValueError("RSW breaks down before the first requested time")

    rotor = collective.tat_series(N, omega, t, coupling=sw.effective_coupling, propagator=rotor_propagator)
    mean = rotor.mean.copy()
    mean[:, 0] -= occ.total
    cov = rotor.covariance
    xi2, angle, _ = squeezing_from_moments(mean, cov, N)
    zeros = np.zeros(t.size)
    data = {"Jx": mean[:, 0], "Jy": mean[:, 1], "Jz": mean[:, 2], "VarJx": cov[:, 0, 0],
            "VarJy": cov[:, 1, 1], "VarJz": cov[:, 2, 2], "CovJyJz": cov[:, 1, 2], "xi2": xi2,
            "Kx": rotor.mean[:, 0], "spin_wave_population": occ.total}
    out = ObservableSeries(t, N, {k: Estimate(v, zeros) for k, v in data.items()}, angle,
                           metadata=meta, flags=flags)

    corr_times = [ct for ct in correlation_times if ct <= (t[-1] if t.size else -1)]
    if corr_times:
        if distances is None:
            distances = np.arange(spec.linear_size // 2 + 1)
        distances = np.asarray(distances)
        ct = np.asarray(corr_times, dtype=float)
        yy = transverse_fluctuations(sw, ct)
        yy[(0,) * spec.dimension] = 0.0
        cosines = _axis_cosines(spec, distances)
        finite = yy.reshape(-1, ct.size).T @ cosines.reshape(-1, distances.size) / N
        rotor_c = collective.tat_series(N, omega, ct, coupling=sw.effective_coupling,
                                        propagator=rotor_propagator)
        for i, tc in enumerate(ct):
            vals = rotor_c.covariance[i, 1, 1] / N**2 + finite[i]
            out.correlations[float(tc)] = Estimate(vals, np.zeros_like(vals))
        out.distances = distances
    return out
