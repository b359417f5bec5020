"""Exact twist-and-turn dynamics in the maximal-spin Dicke sector.

H = (J^z)^2 / (2I) + Omega J^x with 1/(2I) = coupling / N, written in the
J^z eigenbasis where it is real symmetric tridiagonal. States are propagated
spectrally from a single eigendecomposition.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal, expm
from scipy.special import gammaln

NORM_TOL = 1e-10


class EvolutionError(RuntimeError):
    pass


def _m_values(n_spins: int) -> np.ndarray:
    return np.arange(n_spins + 1) - n_spins / 2


def _raising_elements(n_spins: int) -> np.ndarray:
    """<m+1|J+|m> for m = -J .. J-1."""
    j = n_spins / 2
    m = _m_values(n_spins)[:-1]
    return np.sqrt(np.maximum(j * (j + 1) - m * (m + 1), 0.0))


@dataclass(frozen=True)
class DickeState:
    """Amplitudes over m = -N/2 .. N/2 in the J^x or J^z eigenbasis.

    The x basis is the image of the z basis under exp(-i pi/2 J^y), so
    |m>_x is a J^x eigenstate with eigenvalue m.
    """

    n_spins: int
    amplitudes: np.ndarray = field(repr=False)
    basis_axis: str = "z"

    def __post_init__(self):
        if self.basis_axis not in ("x", "z"):
            raise ValueError(f"basis_axis must be 'x' or 'z', got {self.basis_axis!r}")
        if self.amplitudes.shape != (self.n_spins + 1,):
            raise ValueError("amplitude vector must have length N + 1")

    @property
    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def m(self) -> np.ndarray:
        return _m_values(self.n_spins)

    def to_z(self) -> "DickeState":
        if self.basis_axis == "z":
            return self
        return DickeState(self.n_spins, rotation_to_x(self.n_spins) @ self.amplitudes, "z")

    def to_x(self) -> "DickeState":
        if self.basis_axis == "x":
            return self
        return DickeState(self.n_spins, rotation_to_x(self.n_spins).T @ self.amplitudes, "x")


def rotation_to_x(n_spins: int) -> np.ndarray:
    """Real matrix exp(-i pi/2 J^y) in the J^z basis; columns are |m>_x."""
    jp = np.diag(_raising_elements(n_spins), -1)
    return expm(-0.25 * np.pi * (jp - jp.T))


def coherent_x(n_spins: int, basis_axis: str = "z") -> DickeState:
    """The product state with every spin along +x."""
    if basis_axis == "x":
        amp = np.zeros(n_spins + 1, dtype=complex)
        amp[-1] = 1.0
        return DickeState(n_spins, amp, "x")
    k = np.arange(n_spins + 1)
    logc = 0.5 * (gammaln(n_spins + 1) - gammaln(k + 1) - gammaln(n_spins - k + 1)) - 0.5 * n_spins * np.log(2)
    return DickeState(n_spins, np.exp(logc).astype(complex), "z")


@dataclass(frozen=True)
class TatHamiltonian:
    """Tridiagonal TaT Hamiltonian in the J^z basis (additive constant dropped)."""

    n_spins: int
    omega: float
    coupling: float
    diagonal: np.ndarray = field(repr=False)
    off_diagonal: np.ndarray = field(repr=False)

    def dense(self) -> np.ndarray:
        return np.diag(self.diagonal) + np.diag(self.off_diagonal, 1) + np.diag(self.off_diagonal, -1)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        out = self.diagonal * vec
        out[:-1] += self.off_diagonal * vec[1:]
        out[1:] += self.off_diagonal * vec[:-1]
        return out


def build_tat_hamiltonian(n_spins: int, omega: float, coupling: float = 1.0) -> TatHamiltonian:
    if n_spins < 2:
        raise ValueError("need at least two spins")
    if not coupling > 0:
        raise ValueError("coupling must be positive")
    m = _m_values(n_spins)
    diag = coupling / n_spins * m**2
    off = 0.5 * omega * _raising_elements(n_spins)
    return TatHamiltonian(n_spins, float(omega), float(coupling), diag, off)


class Propagator:
    """Spectral propagator exp(-iHt) from one tridiagonal eigendecomposition."""

    def __init__(self, hamiltonian: TatHamiltonian):
        self.hamiltonian = hamiltonian
        self.energies, self.vectors = eigh_tridiagonal(hamiltonian.diagonal, hamiltonian.off_diagonal)

    def amplitudes(self, psi0: np.ndarray, times) -> np.ndarray:
        """Columns are psi(t) in the J^z basis for each t in ``times``."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        coeff = self.vectors.T @ psi0
        phases = np.exp(-1j * np.outer(self.energies, times))
        psi = self.vectors @ (phases * coeff[:, None])
        norms = np.einsum("ij,ij->j", psi.conj(), psi).real
        drift = np.max(np.abs(norms - np.vdot(psi0, psi0).real))
        if drift > NORM_TOL:
            raise EvolutionError(f"norm drift {drift:.3e} exceeds {NORM_TOL:.0e}")
        return psi


def _check_grid(t_grid):
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("time grid must be a non-empty 1D sequence")
    if np.any(np.diff(t) < 0) or t[0] < 0:
        raise ValueError("time grid must be ascending and start at t >= 0")
    return t


def evolve(state: DickeState, hamiltonian: TatHamiltonian, t_grid) -> list:
    """States exp(-iHt)|state> at every time of an ascending grid (z basis)."""
    t = _check_grid(t_grid)
    if state.n_spins != hamiltonian.n_spins:
        raise ValueError("state and Hamiltonian disagree on N")
    psi0 = state.to_z().amplitudes
    if abs(state.norm - 1.0) > NORM_TOL:
        raise EvolutionError(f"initial state not normalized (norm {state.norm:.12f})")
    psi = Propagator(hamiltonian).amplitudes(psi0, t)
    return [DickeState(state.n_spins, psi[:, i].copy(), "z") for i in range(t.size)]


@dataclass(frozen=True)
class CollectiveMoments:
    time: float
    mean_J: np.ndarray
    covariance: np.ndarray

    def variance(self, axis) -> float:
        """Variance of J along a (not necessarily normalized) direction."""
        n = np.asarray(axis, dtype=float)
        n = n / np.linalg.norm(n)
        return float(n @ self.covariance @ n)


_X_TO_PHYSICAL = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])


def moment_arrays(psi: np.ndarray, n_spins: int, basis_axis: str = "z"):
    """Means (..., 3) and symmetrized covariances (..., 3, 3) for columns of psi.

    ``psi`` has shape (N + 1,) or (N + 1, T).
    """
    single = psi.ndim == 1
    if single:
        psi = psi[:, None]
    j = n_spins / 2
    m = _m_values(n_spins)[:, None]
    a = _raising_elements(n_spins)[:, None]
    p = np.abs(psi) ** 2
    jz = np.sum(m * p, axis=0)
    jz2 = np.sum(m**2 * p, axis=0)
    # <J+> = sum conj(c_{m+1}) a_m c_m ; <J+^2> via two raisings
    jp = np.sum(psi[1:].conj() * a * psi[:-1], axis=0)
    a2 = a[1:] * a[:-1]
    jp2 = np.sum(psi[2:].conj() * a2 * psi[:-2], axis=0)
    # <J+ Jz + Jz J+> = sum conj(c_{m+1}) a_m (2m + 1) c_m
    jpjz = np.sum(psi[1:].conj() * a * (2 * m[:-1] + 1) * psi[:-1], axis=0)

    jx, jy = jp.real, jp.imag
    perp = j * (j + 1) - jz2  # <Jx^2 + Jy^2>
    jx2 = 0.5 * (perp + jp2.real)
    jy2 = 0.5 * (perp - jp2.real)
    sxy = jp2.imag  # <JxJy + JyJx>
    sxz, syz = jpjz.real, jpjz.imag

    T = psi.shape[1]
    mean = np.stack([jx, jy, jz], axis=-1)
    second = np.empty((T, 3, 3))
    second[:, 0, 0], second[:, 1, 1], second[:, 2, 2] = jx2, jy2, jz2
    second[:, 0, 1] = second[:, 1, 0] = 0.5 * sxy
    second[:, 0, 2] = second[:, 2, 0] = 0.5 * sxz
    second[:, 1, 2] = second[:, 2, 1] = 0.5 * syz
    cov = second - mean[:, :, None] * mean[:, None, :]
    if basis_axis == "x":
        mean = mean @ _X_TO_PHYSICAL.T
        cov = _X_TO_PHYSICAL @ cov @ _X_TO_PHYSICAL.T
    if single:
        return mean[0], cov[0]
    return mean, cov


def moments(state: DickeState, time: float = 0.0) -> CollectiveMoments:
    mean, cov = moment_arrays(state.amplitudes, state.n_spins, state.basis_axis)
    return CollectiveMoments(time, mean, cov)


def total_spin_squared(state: DickeState) -> float:
    mc = moments(state)
    return float(np.trace(mc.covariance) + mc.mean_J @ mc.mean_J)


def energy(state: DickeState, hamiltonian: TatHamiltonian) -> float:
    psi = state.to_z().amplitudes
    return float(np.vdot(psi, hamiltonian.apply(psi)).real)


def odd_parity_weight(state: DickeState) -> float:
    """Weight on J^x eigenstates with N/2 - m odd."""
    if state.basis_axis == "x":
        amp = state.amplitudes
    else:
        off = 0.5 * _raising_elements(state.n_spins)
        mx, vecs = eigh_tridiagonal(np.zeros(state.n_spins + 1), off)
        amp = vecs.T @ state.amplitudes
        order = np.argsort(mx)
        amp = amp[order]
    odd = (np.arange(state.n_spins + 1)[::-1] % 2) == 1
    return float(np.sum(np.abs(amp[odd]) ** 2))


@dataclass
class CollectiveSeries:
    """Exact moments of the TaT evolution on a time grid."""

    n_spins: int
    omega: float
    coupling: float
    times: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray

    def variance(self, a: int) -> np.ndarray:
        return self.covariance[:, a, a]


def tat_series(n_spins: int, omega: float, t_grid, coupling: float = 1.0,
               propagator: Propagator | None = None, chunk: int = 256) -> CollectiveSeries:
    """Moments of the TaT evolution from the x-polarized coherent state."""
    t = _check_grid(t_grid)
    if propagator is None:
        propagator = Propagator(build_tat_hamiltonian(n_spins, omega, coupling))
    psi0 = coherent_x(n_spins).amplitudes
    means, covs = [], []
    for start in range(0, t.size, chunk):
        psi = propagator.amplitudes(psi0, t[start:start + chunk])
        mean, cov = moment_arrays(psi, n_spins)
        means.append(mean)
        covs.append(cov)
    return CollectiveSeries(n_spins, float(omega), float(coupling), t,
                            np.concatenate(means), np.concatenate(covs))
