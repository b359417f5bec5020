"""Discrete truncated Wigner approximation for the power-law XY model.

Each trajectory starts from a discrete phase-space point of the x-polarized
product state (s^x = 1/2, s^y, s^z = +-1/2 at random) and follows the
classical equations ds_i/dt = b_i x s_i with b_i = dH/ds_i. Quantum
expectation values are estimated as trajectory averages.

Trajectories are handled in fixed-size blocks. Block b draws its initial
conditions from the stream SeedSequence(seed, spawn_key=(b,)), so results
depend only on (seed, n_traj, block_size) and not on how blocks are
scheduled across workers.
"""
from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lattice import CouplingTable, LatticeSpec, build_couplings
from .observables import Estimate, ObservableSeries, squeezing_from_moments

log = logging.getLogger(__name__)

BLOCK_SIZE = 256
ENERGY_TOL = 1e-6
LENGTH_TOL = 1e-8
JACKKNIFE_GROUPS = 20
MAX_RETRIES = 3  # extra halvings when the full ensemble fails an audited step


class IntegrationError(RuntimeError):
    pass


@dataclass
class SpinEnsemble:
    """Classical spins, shape (n_traj, N, 3), at time ``t``."""

    spins: np.ndarray = field(repr=False)
    seed: int | None = None
    t: float = 0.0

    @property
    def n_traj(self) -> int:
        return self.spins.shape[0]

    @property
    def n_sites(self) -> int:
        return self.spins.shape[1]

    def collective(self) -> np.ndarray:
        """Per-trajectory collective spin, shape (n_traj, 3)."""
        return self.spins.sum(axis=1)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))


def _sample_block(n_sites: int, size: int, rng: np.random.Generator) -> np.ndarray:
    spins = np.empty((size, n_sites, 3))
    spins[..., 0] = 0.5
    spins[..., 1:] = rng.integers(0, 2, size=(size, n_sites, 2)) - 0.5
    return spins


def _block_sizes(n_traj: int, block_size: int):
    full, rest = divmod(n_traj, block_size)
    return [block_size] * full + ([rest] if rest else [])


def sample_initial(spec: LatticeSpec | int, n_traj: int, seed: int, block_size: int = BLOCK_SIZE) -> SpinEnsemble:
    """Discrete Wigner samples of the x-polarized coherent state."""
    if n_traj < 2:
        raise ValueError("need at least two trajectories")
    n_sites = spec if isinstance(spec, int) else spec.n_sites
    blocks = [_sample_block(n_sites, size, _block_rng(seed, b))
              for b, size in enumerate(_block_sizes(n_traj, block_size))]
    return SpinEnsemble(np.concatenate(blocks), seed, 0.0)


def enumerate_initial(n_sites: int) -> SpinEnsemble:
    """All 4^N discrete initial configurations, each with equal weight."""
    if n_sites > 10:
        raise ValueError("exhaustive enumeration limited to N <= 10")
    combos = np.array(list(itertools.product((0.5, -0.5), repeat=2 * n_sites)))
    spins = np.empty((combos.shape[0], n_sites, 3))
    spins[..., 0] = 0.5
    spins[..., 1] = combos[:, :n_sites]
    spins[..., 2] = combos[:, n_sites:]
    return SpinEnsemble(spins, None, 0.0)


class FieldOperator:
    """Computes sum_j K_ij v_j for batches of site vectors.

    For alpha = 0 every pair has the same coupling and the sum reduces to
    K (sum_j v_j - v_i); otherwise the dense symmetric table is used.
    """

    def __init__(self, couplings: CouplingTable):
        self.couplings = couplings
        K = couplings.pair_coupling
        self.uniform = couplings.spec.alpha == 0
        self.k0 = float(K[0, 1]) if K.shape[0] > 1 else 0.0
        self.matrix = np.ascontiguousarray(K)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        if self.uniform:
            return self.k0 * (v.sum(axis=-1, keepdims=True) - v)
        shape = v.shape
        return (v.reshape(-1, shape[-1]) @ self.matrix).reshape(shape)


def _local_field(field_op: FieldOperator, omega: float, spins: np.ndarray) -> np.ndarray:
    summed = field_op(np.stack([spins[..., 0], spins[..., 1]]))
    b = np.zeros_like(spins)
    b[..., 0] = omega - 2 * summed[0]
    b[..., 1] = -2 * summed[1]
    return b


def local_fields(couplings: CouplingTable, omega: float, spins: np.ndarray) -> np.ndarray:
    """b_i = dH/ds_i for every spin, same shape as ``spins``."""
    return _local_field(FieldOperator(couplings), omega, spins)


def equations_of_motion(couplings: CouplingTable, omega: float, spins) -> np.ndarray:
    """ds_i/dt = b_i x s_i."""
    spins = spins.spins if isinstance(spins, SpinEnsemble) else spins
    return np.cross(local_fields(couplings, omega, spins), spins)


def _energy(field_op, omega, sc, sums=None):
    # sc has layout (3, n_traj, N)
    if sums is None:
        sums = field_op(sc[:2])
    return -np.sum(sc[0] * sums[0] + sc[1] * sums[1], axis=-1) + omega * sc[0].sum(axis=-1)


def classical_energy(field_op: FieldOperator | CouplingTable, omega: float, spins: np.ndarray) -> np.ndarray:
    """Energy per trajectory of the classical XY Hamiltonian with field."""
    if isinstance(field_op, CouplingTable):
        field_op = FieldOperator(field_op)
    return _energy(field_op, omega, np.moveaxis(spins, -1, 0))


def energy_scale(couplings: CouplingTable, omega: float) -> float:
    """Magnitude of the interaction plus field energy of the polarized state."""
    N = couplings.n_sites
    return couplings.row_sum() * N / 4 + abs(omega) * N / 2


class _LieStepper:
    """Fourth-order Runge-Kutta-Munthe-Kaas step with exact spin rotations.

    dexp^-1 is truncated after the double commutator, which keeps the
    method fourth order. Spin lengths are conserved to round-off.
    """

    def __init__(self, field_op, omega, shape):
        self.field_op = field_op
        self.omega = float(omega)
        self.acc = np.empty(shape)
        self.u = np.empty(shape)
        self.s_stage = np.empty(shape)

    def __call__(self, s, h):
        f, om, acc, u, st = self.field_op, self.omega, self.acc, self.u, self.s_stage
        acc.fill(0.0)
        _kernels.stage(s, f(s[:2]), om, u, 0.5 * h, acc, 1.0, True, st)
        _kernels.stage(s, f(st[:2]), om, u, 0.5 * h, acc, 2.0, False, st)
        _kernels.stage(s, f(st[:2]), om, u, h, acc, 2.0, False, st)
        _kernels.stage(s, f(st[:2]), om, u, 0.0, acc, 1.0, False, st)
        acc *= h / 6.0
        out = np.empty_like(s)
        _kernels.rotate(s, acc, out)
        return out


class _ClassicalRK4:
    """Plain RK4 in Cartesian components; reference route, does not conserve |s|."""

    def __init__(self, field_op, omega, shape):
        self.field_op = field_op
        self.omega = float(omega)

    def _rhs(self, y):
        sums = self.field_op(y[:2])
        b0 = self.omega - 2 * sums[0]
        b1 = -2 * sums[1]
        return np.stack([b1 * y[2], -b0 * y[2], b0 * y[1] - b1 * y[0]])

    def __call__(self, s, h):
        k1 = self._rhs(s)
        k2 = self._rhs(s + 0.5 * h * k1)
        k3 = self._rhs(s + 0.5 * h * k2)
        k4 = self._rhs(s + h * k3)
        return s + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


STEPPERS = {"rkmk4": _LieStepper, "rk4": _ClassicalRK4}


def _check_grid(t_grid):
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) < 0) or t[0] < 0:
        raise ValueError("time grid must be non-empty, ascending and start at t >= 0")
    return t


def _trajectory(field_op, omega, spins, t_grid, dt, method="rkmk4"):
    """Yield (t, spins) in (3, n_traj, N) layout at each output time.

    Between outputs the step is dt shrunk so that outputs are hit exactly.
    """
    s = np.ascontiguousarray(np.moveaxis(spins, -1, 0))
    step = STEPPERS[method](field_op, omega, s.shape)
    t_now = 0.0
    for t_out in t_grid:
        gap = t_out - t_now
        if gap > 0:
            n = max(1, math.ceil(gap / dt - 1e-9))
            h = gap / n
            for _ in range(n):
                s = step(s, h)
        t_now = t_out
        yield t_out, s


def default_step(couplings: CouplingTable, omega: float) -> float:
    """Initial step guess for the energy audit, from the largest local-field scale."""
    scale = abs(omega) + 2 * couplings.row_sum() * math.sqrt(0.75)
    return 0.4 / scale


class _DriftMonitor:
    def __init__(self, field_op, omega, s0, scale):
        self.field_op, self.omega, self.scale = field_op, omega, scale
        self.e0 = _energy(field_op, omega, s0)
        self.len0 = np.sqrt(np.sum(s0 * s0, axis=0))
        self.energy_drift = 0.0
        self.length_drift = 0.0

    def update(self, s):
        e = _energy(self.field_op, self.omega, s)
        self.energy_drift = max(self.energy_drift, float(np.max(np.abs(e - self.e0))) / self.scale)
        lengths = np.sqrt(np.sum(s * s, axis=0))
        self.length_drift = max(self.length_drift, float(np.max(np.abs(lengths - self.len0) / self.len0)))
        return e


def audit_step(couplings: CouplingTable, omega: float, t_grid, dt: float | None = None, n_probe: int = 16,
               seed: int = 0, tolerance: float = ENERGY_TOL, method: str = "rkmk4", max_halvings: int = 12) -> float:
    """Halve the step until probe trajectories conserve energy to ``tolerance``."""
    t = _check_grid(t_grid)
    field_op = FieldOperator(couplings)
    dt = dt or default_step(couplings, omega)
    probe = _sample_block(couplings.n_sites, n_probe, _block_rng(seed, 2**31 - 1))
    scale = energy_scale(couplings, omega)
    for _ in range(max_halvings + 1):
        mon = _DriftMonitor(field_op, omega, np.moveaxis(probe, -1, 0), scale)
        for _, s in _trajectory(field_op, omega, probe, t, dt, method):
            mon.update(s)
        if mon.energy_drift < tolerance:
            log.debug("step %.4g passes energy audit (drift %.2e)", dt, mon.energy_drift)
            return dt
        dt /= 2
    raise IntegrationError(f"energy drift {mon.energy_drift:.3e} above {tolerance:g} even at dt={dt * 2:.3e}")


def integrate(ensemble: SpinEnsemble, couplings: CouplingTable, omega: float, t_grid,
              tolerance: float = LENGTH_TOL, dt: float | None = None, method: str = "rkmk4",
              energy_tolerance: float = ENERGY_TOL) -> list:
    """Snapshots of the ensemble at every output time.

    Raises IntegrationError when the per-trajectory energy drift or the
    spin-length drift exceeds its tolerance; spins are never renormalized.
    An audited step (``dt=None``) is halved again if the full ensemble
    drifts more than the probes did.
    """
    t = _check_grid(t_grid)
    audited = dt is None
    if audited:
        dt = audit_step(couplings, omega, t, tolerance=energy_tolerance, method=method)
    field_op = FieldOperator(couplings)
    for _ in range(MAX_RETRIES + 1):
        mon = _DriftMonitor(field_op, omega, np.moveaxis(ensemble.spins, -1, 0), energy_scale(couplings, omega))
        out = []
        for t_out, s in _trajectory(field_op, omega, ensemble.spins, t, dt, method):
            mon.update(s)
            if mon.energy_drift > energy_tolerance or mon.length_drift > tolerance:
                break
            out.append(SpinEnsemble(np.ascontiguousarray(np.moveaxis(s, 0, -1)), ensemble.seed, float(t_out)))
        else:
            return out
        if not audited:
            break
        dt /= 2
    raise IntegrationError(f"at t={t_out:.4g}: energy drift {mon.energy_drift:.3e}, "
                           f"length drift {mon.length_drift:.3e} (dt={dt:.4g})")


def axis_correlations(sc: np.ndarray, shape: tuple, distances, component: int = 1) -> np.ndarray:
    """Per-trajectory <s_i s_{i+d}> averaged over sites and lattice axes.

    ``sc`` has layout (3, n_traj, N). Returns shape (n_traj, len(distances)).
    """
    comp = sc[component].reshape((sc.shape[1],) + tuple(shape))
    out = np.empty((sc.shape[1], len(distances)))
    axes = range(1, len(shape) + 1)
    for j, d in enumerate(distances):
        acc = 0.0
        for ax in axes:
            acc = acc + np.mean(comp * np.roll(comp, -int(d), axis=ax), axis=tuple(axes))
        out[:, j] = acc / len(shape)
    return out


@dataclass
class _BlockResult:
    collective: np.ndarray      # (n_traj, T, 3)
    energy: np.ndarray          # (n_traj, T)
    correlations: np.ndarray    # (n_traj, Tc, n_d)
    max_energy_drift: float
    max_length_drift: float


def _run_block(args) -> _BlockResult:
    (spec, couplings, omega, t, dt, method, corr_idx, distances, spins) = args
    field_op = FieldOperator(couplings)
    mon = _DriftMonitor(field_op, omega, np.moveaxis(spins, -1, 0), energy_scale(couplings, omega))
    n = spins.shape[0]
    coll = np.empty((n, t.size, 3))
    en = np.empty((n, t.size))
    corr = np.empty((n, len(corr_idx), len(distances)))
    ci = {k: j for j, k in enumerate(corr_idx)}
    for i, (_, s) in enumerate(_trajectory(field_op, omega, spins, t, dt, method)):
        coll[:, i] = s.sum(axis=2).T
        en[:, i] = mon.update(s)
        if i in ci:
            corr[:, ci[i]] = axis_correlations(s, spec.shape, distances)
    return _BlockResult(coll, en, corr, mon.energy_drift, mon.length_drift)


def _jackknife(func, data, groups):
    """Estimate and jackknife error of func over contiguous trajectory groups."""
    full = func(data)
    n = data.shape[0]
    g = min(groups, n)
    edges = np.linspace(0, n, g + 1).astype(int)
    reps = []
    for a, b in zip(edges[:-1], edges[1:]):
        keep = np.concatenate([data[:a], data[b:]])
        reps.append(func(keep))
    reps = np.array(reps)
    err = np.sqrt((g - 1) / g * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))
    return full, err


def _moments(coll):
    mean = coll.mean(axis=0)
    d = coll - mean
    cov = np.einsum("nta,ntb->tab", d, d) / (coll.shape[0] - 1)
    return mean, cov


def measure_arrays(collective: np.ndarray, energy: np.ndarray, t_grid, n_sites: int, correlations=None,
                   correlation_times=(), distances=None, groups: int = JACKKNIFE_GROUPS) -> ObservableSeries:
    """Observables with standard errors from per-trajectory data.

    ``collective`` has shape (n_traj, T, 3). Means use the standard error of
    the mean; variances and the squeezing parameter use a jackknife over
    contiguous trajectory groups.
    """
    n = collective.shape[0]
    if n < 2:
        raise ValueError("need at least two trajectories")
    t = np.asarray(t_grid, dtype=float)
    series = {}
    sem = lambda x: x.std(axis=0, ddof=1) / math.sqrt(n)
    for a, name in enumerate(("Jx", "Jy", "Jz")):
        series[name] = Estimate(collective[..., a].mean(axis=0), sem(collective[..., a]))
    series["energy"] = Estimate(energy.mean(axis=0), sem(energy))

    def second(data):
        mean, cov = _moments(data)
        xi2, _, _ = squeezing_from_moments(mean, cov, n_sites)
        return np.stack([cov[:, 0, 0], cov[:, 1, 1], cov[:, 2, 2], cov[:, 1, 2], xi2])

    est, err = _jackknife(second, collective, groups)
    for k, name in enumerate(("VarJx", "VarJy", "VarJz", "CovJyJz", "xi2")):
        series[name] = Estimate(est[k], err[k])
    mean, cov = _moments(collective)
    _, angle, _ = squeezing_from_moments(mean, cov, n_sites)

    out = ObservableSeries(t, n_sites, series, angle)
    jx, jx_err = series["Jx"].mean, series["Jx"].stderr
    reliable = jx**2 >= 10 * jx_err**2
    out.metadata["xi2_reliable"] = reliable.tolist()
    if not reliable.all():
        out.flags.append(f"squeezing unreliable at {int((~reliable).sum())} times (<Jx>^2 below 10 sigma^2)")
    if correlations is not None and len(correlation_times):
        out.distances = np.asarray(distances)
        for j, tc in enumerate(correlation_times):
            c = correlations[:, j]
            out.correlations[float(tc)] = Estimate(c.mean(axis=0), c.std(axis=0, ddof=1) / math.sqrt(n))
    return out


@dataclass
class MeasureRequest:
    """What to measure on a list of snapshots.

    Correlations are taken from the snapshots closest to ``correlation_times``.
    """

    couplings: CouplingTable
    omega: float
    correlation_times: tuple = ()
    distances: tuple | None = None


def measure(snapshots: list, request: MeasureRequest) -> ObservableSeries:
    """Observables from integrated snapshots (see ``measure_arrays``)."""
    if not snapshots:
        raise ValueError("no snapshots to measure")
    spec = request.couplings.spec
    t = np.array([s.t for s in snapshots])
    field_op = FieldOperator(request.couplings)
    coll = np.stack([s.collective() for s in snapshots], axis=1)
    energy = np.stack([classical_energy(field_op, request.omega, s.spins) for s in snapshots], axis=1)
    distances = np.arange(spec.linear_size // 2 + 1) if request.distances is None else np.asarray(request.distances)
    idx = sorted({int(np.argmin(np.abs(t - ct))) for ct in request.correlation_times})
    corr = None
    if idx:
        corr = np.stack([axis_correlations(np.moveaxis(snapshots[i].spins, -1, 0), spec.shape, distances)
                         for i in idx], axis=1)
    return measure_arrays(coll, energy, t, spec.n_sites, corr, [float(t[i]) for i in idx], distances)


@dataclass
class DtwaRun:
    series: ObservableSeries
    dt: float
    max_energy_drift: float
    max_length_drift: float
    collective: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)


def run(spec: LatticeSpec, omega: float, t_grid, n_traj: int, seed: int, dt: float | None = None,
        correlation_times=(), distances=None, block_size: int = BLOCK_SIZE, workers: int = 1,
        method: str = "rkmk4", energy_tolerance: float = ENERGY_TOL, length_tolerance: float = LENGTH_TOL,
        couplings: CouplingTable | None = None, initial: SpinEnsemble | None = None) -> DtwaRun:
    """Sample, integrate and measure a full dTWA ensemble.

    Correlation snapshots are taken at the grid times closest to the
    requested ``correlation_times``. ``initial`` replaces random sampling
    (e.g. with an exhaustive enumeration).
    """
    t = _check_grid(t_grid)
    couplings = couplings or build_couplings(spec)
    audited = dt is None
    if audited:
        dt = audit_step(couplings, omega, t, tolerance=energy_tolerance, method=method, seed=seed)
    if distances is None:
        distances = np.arange(spec.linear_size // 2 + 1)
    distances = np.asarray(distances, dtype=int)
    corr_idx = sorted({int(np.argmin(np.abs(t - ct))) for ct in correlation_times})

    if initial is not None:
        n_traj = initial.n_traj
        chunks = [initial.spins[i:i + block_size] for i in range(0, n_traj, block_size)]
    else:
        if n_traj < 2:
            raise ValueError("need at least two trajectories")
        chunks = [_sample_block(spec.n_sites, size, _block_rng(seed, b))
                  for b, size in enumerate(_block_sizes(n_traj, block_size))]
    workers = workers or os.cpu_count() or 1
    retries = 0
    while True:
        jobs = [(spec, couplings, omega, t, dt, method, corr_idx, distances, c) for c in chunks]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_block, jobs))
        else:
            results = [_run_block(j) for j in jobs]
        drift_e = max(r.max_energy_drift for r in results)
        drift_len = max(r.max_length_drift for r in results)
        ok = drift_e <= energy_tolerance and drift_len <= length_tolerance
        if ok or not audited or retries == MAX_RETRIES:
            break
        log.info("ensemble drift %.2e at audited dt=%.4g, halving", drift_e, dt)
        dt /= 2
        retries += 1
    if not ok:
        raise IntegrationError(f"energy drift {drift_e:.3e} (tol {energy_tolerance:g}), "
                               f"length drift {drift_len:.3e} (tol {length_tolerance:g}) at dt={dt:.4g}")

    coll = np.concatenate([r.collective for r in results])
    energy = np.concatenate([r.energy for r in results])
    corr = np.concatenate([r.correlations for r in results]) if corr_idx else None
    series = measure_arrays(coll, energy, t, spec.n_sites, corr, [float(t[i]) for i in corr_idx], distances)
    series.metadata.update({"engine": "dtwa", "seed": seed, "n_traj": n_traj, "dt": dt, "method": method,
                            "block_size": block_size, "dt_retries": retries, "max_energy_drift": drift_e,
                            "max_length_drift": drift_len, "energy_tolerance": energy_tolerance,
                            "length_tolerance": length_tolerance})
    return DtwaRun(series, dt, drift_e, drift_len, coll, energy)
