"""Engine-agnostic analysis: squeezing, scaling fits, crossovers, dB units."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, signal, stats

MIN_FIT_POINTS = 4
PEAK_PROMINENCE = 0.05
CROSSOVER_P_VALUE = 0.01


class FitError(ValueError):
    pass


@dataclass
class Estimate:
    mean: np.ndarray
    stderr: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)


@dataclass
class ObservableSeries:
    """Time series of named observables with standard errors.

    Exact engines report zero standard errors. ``correlations`` maps a
    snapshot time to an Estimate over distances ``distances``.
    """

    t_grid: np.ndarray
    n_sites: int
    series: dict = field(default_factory=dict)
    squeezing_angle: np.ndarray | None = None
    distances: np.ndarray | None = None
    correlations: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def __getitem__(self, name) -> Estimate:
        return self.series[name]

    def mean(self, name) -> np.ndarray:
        return self.series[name].mean

    def stderr(self, name) -> np.ndarray:
        return self.series[name].stderr

    def rows(self):
        """(t, name, mean, stderr) rows in a fixed order."""
        for name in sorted(self.series):
            est = self.series[name]
            for t, m, s in zip(self.t_grid, est.mean, est.stderr):
                yield float(t), name, float(m), float(s)

    def correlation_rows(self):
        for t in sorted(self.correlations):
            est = self.correlations[t]
            for d, m, s in zip(self.distances, est.mean, est.stderr):
                yield float(t), int(d), float(m), float(s)


SERIES_NAMES = ("Jx", "Jy", "Jz", "VarJx", "VarJy", "VarJz", "CovJyJz", "xi2", "energy")


def squeezing_from_moments(mean, cov, n_sites):
    """Squeezing parameter N min Var(J_perp) / <J^x>^2 in the (y, z) plane.

    Works on single moments (mean (3,), cov (3, 3)) or stacks of them.
    Returns (xi2, angle, min_variance) with the angle of the squeezed
    direction measured from y toward z in [0, pi).
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    vyy, vzz, vyz = cov[..., 1, 1], cov[..., 2, 2], cov[..., 1, 2]
    half_tr = 0.5 * (vyy + vzz)
    radius = np.sqrt((0.5 * (vyy - vzz)) ** 2 + vyz**2)
    vmin = half_tr - radius
    # angle of the eigenvector for the smaller eigenvalue
    angle = np.mod(0.5 * np.arctan2(-2 * vyz, -(vyy - vzz)), np.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi2 = n_sites * vmin / mean[..., 0] ** 2
    return xi2, angle, vmin


def series_from_moments(times, mean, cov, n_sites, energy=None, stderr=None, metadata=None) -> ObservableSeries:
    """Wrap exact moment arrays into an ObservableSeries with zero errors."""
    xi2, angle, _ = squeezing_from_moments(mean, cov, n_sites)
    zeros = np.zeros(len(times))
    data = {
        "Jx": mean[:, 0], "Jy": mean[:, 1], "Jz": mean[:, 2],
        "VarJx": cov[:, 0, 0], "VarJy": cov[:, 1, 1], "VarJz": cov[:, 2, 2],
        "CovJyJz": cov[:, 1, 2], "xi2": xi2,
    }
    if energy is not None:
        data["energy"] = energy
    series = {k: Estimate(v, zeros if stderr is None else stderr.get(k, zeros)) for k, v in data.items()}
    return ObservableSeries(np.asarray(times, float), n_sites, series, angle, metadata=dict(metadata or {}))


def to_decibels(xi2):
    xi2 = np.asarray(xi2, dtype=float)
    if np.any(~(xi2 > 0)):
        raise ValueError("squeezing parameter must be positive to convert to dB")
    out = 10 * np.log10(xi2)
    return float(out) if out.ndim == 0 else out


def from_decibels(db):
    out = 10 ** (np.asarray(db, dtype=float) / 10)
    return float(out) if out.ndim == 0 else out


@dataclass
class OptimalSqueezing:
    t_opt: float
    xi2_opt: float
    angle: float
    boundary: bool = False


def _parabola_vertex(t, y, i):
    """Vertex of the parabola through points i-1, i, i+1 (non-uniform spacing)."""
    ts, ys = t[i - 1:i + 2], y[i - 1:i + 2]
    a, b, c = np.polyfit(ts - ts[1], ys, 2)
    dt = -b / (2 * a) if a > 0 else 0.0
    if not ts[0] - ts[1] < dt < ts[2] - ts[1]:
        return t[i], y[i]
    return ts[1] + dt, c - b * b / (4 * a)


def optimal_squeezing(series: ObservableSeries, t_max: float | None = None) -> OptimalSqueezing:
    """Minimum of xi2(t) with parabolic refinement around the discrete minimum.

    The search is restricted to t <= t_max when given, and to times where
    xi2 is finite and positive.
    """
    t = series.t_grid
    y = series.mean("xi2")
    ok = np.isfinite(y) & (y > 0)
    if t_max is not None:
        ok &= t <= t_max
    idx = np.flatnonzero(ok)
    if idx.size < 10:
        raise FitError("need at least 10 valid xi2 points to locate the optimum")
    t, y = t[idx], y[idx]
    i = int(np.argmin(y))
    angles = series.squeezing_angle[idx] if series.squeezing_angle is not None else np.zeros_like(t)
    if i == 0 or i == len(t) - 1:
        return OptimalSqueezing(float(t[i]), float(y[i]), float(angles[i]), boundary=True)
    t_opt, y_opt = _parabola_vertex(t, y, i)
    return OptimalSqueezing(float(t_opt), float(min(y_opt, y[i])), float(angles[i]))


@dataclass
class ScalingFit:
    model: str
    exponent: float
    uncertainty: float
    intercept: float
    window: tuple
    residual_norm: float
    n_points: int
    provenance: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = [float(w) for w in self.window]
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _linear_fit(x, y, model, provenance=None) -> ScalingFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < MIN_FIT_POINTS:
        raise FitError(f"fit needs at least {MIN_FIT_POINTS} points, got {x.size}")
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    res = stats.linregress(x, y)
    resid = y - (res.intercept + res.slope * x)
    return ScalingFit(model, float(res.slope), float(res.stderr), float(res.intercept),
                      (float(x[0]), float(x[-1])), float(np.linalg.norm(resid)), int(x.size),
                      dict(provenance or {}))


def fit_power_law(x, y, provenance=None) -> ScalingFit:
    """y = C x^p fitted as a line in log-log; ``exponent`` is p."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("power-law fit needs positive data")
    return _linear_fit(np.log(x), np.log(y), "power_law", provenance)


def fit_exponential_rate(t, y, window=None, provenance=None) -> ScalingFit:
    """y = C exp(r t); ``exponent`` is r. ``window`` restricts t."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = np.ones(t.size, bool) if window is None else (t >= window[0]) & (t <= window[1])
    if np.any(y[mask] <= 0):
        raise FitError("exponential fit needs positive data")
    fit = _linear_fit(t[mask], np.log(y[mask]), "exponential_in_t", provenance)
    return fit


def time_scaling(t_opts: dict, lambda_hint: float | None = None, provenance=None) -> ScalingFit:
    """Affine fit of optimal times against log N.

    With ``lambda_hint`` the provenance records the expected slope 1/(2 lambda)
    and the relative deviation from it.
    """
    sizes = sorted(t_opts)
    if len(sizes) < MIN_FIT_POINTS:
        raise FitError(f"time scaling needs at least {MIN_FIT_POINTS} sizes")
    fit = _linear_fit(np.log(sizes), [t_opts[n] for n in sizes], "log_time", provenance)
    if lambda_hint:
        expected = 1.0 / (2.0 * lambda_hint)
        fit.provenance["expected_slope"] = expected
        fit.provenance["relative_deviation"] = abs(fit.exponent - expected) / expected
    return fit


@dataclass
class PeakResult:
    time: float
    value: float
    rule: str
    flagged: bool = False


def locate_peak(t, y, rule: str = "second_max", prominence: float = PEAK_PROMINENCE) -> PeakResult:
    """Peak of a variance series following the second-local-maximum rule.

    ``rule='second_max'`` takes the second local maximum whose prominence
    exceeds ``prominence`` times the series range; if there is none the
    first maximum is used and the result is flagged. ``rule='plateau'``
    returns the mean over the second half of the series after the first
    time it reaches 90% of its maximum.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    span = float(np.ptp(y))
    if span == 0:
        return PeakResult(float(t[0]), float(y[0]), rule, flagged=rule == "second_max")
    if rule == "plateau":
        start = int(np.argmax(y >= 0.9 * y.max()))
        tail = y[start + (len(y) - start) // 2:] if len(y) - start > 1 else y[start:]
        return PeakResult(float(t[start]), float(np.mean(tail)), rule)
    if rule not in ("second_max", "first_max"):
        raise ValueError(f"unknown peak rule {rule!r}")
    peaks, _ = signal.find_peaks(y, prominence=prominence * span)
    want = 1 if rule == "second_max" else 0
    if len(peaks) > want:
        p = peaks[want]
        return PeakResult(float(t[p]), float(y[p]), rule)
    if rule == "second_max":
        warnings.warn("no second local maximum; using the first", RuntimeWarning, stacklevel=2)
    p = peaks[0] if len(peaks) else int(np.argmax(y))
    return PeakResult(float(t[p]), float(y[p]), rule, flagged=rule == "second_max")


def peak_variance_scaling(series_by_size: dict, component: str = "VarJy", rule: str = "second_max",
                          provenance=None) -> ScalingFit:
    """Power-law exponent of the variance peak against system size.

    ``series_by_size`` maps N to an ObservableSeries or a (t, values) pair.
    """
    sizes, peaks, flags = [], [], []
    for n in sorted(series_by_size):
        s = series_by_size[n]
        t, y = (s.t_grid, s.mean(component)) if isinstance(s, ObservableSeries) else s
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            pk = locate_peak(t, y, rule)
        sizes.append(n)
        peaks.append(pk.value)
        if pk.flagged:
            flags.append(f"N={n}: peak rule ambiguous, first maximum used")
    if np.ptp(peaks) == 0:
        fit = ScalingFit("power_law", 0.0, 0.0, float(np.log(peaks[0])), (sizes[0], sizes[-1]), 0.0,
                         len(sizes), dict(provenance or {}))
    else:
        fit = fit_power_law(sizes, peaks, provenance)
        fit.window = (float(sizes[0]), float(sizes[-1]))
    fit.provenance["peaks"] = {int(n): float(p) for n, p in zip(sizes, peaks)}
    fit.flags.extend(flags)
    return fit


@dataclass
class CrossoverResult:
    found: bool
    size: float | None
    uncertainty: float | None
    slopes: tuple
    residual_norm: float


def _hinge(x, a, b1, b2, x0):
    return a + b1 * x + (b2 - b1) * np.maximum(x - x0, 0.0)


def detect_crossover(peaks: dict, min_points: int = 6) -> CrossoverResult:
    """Two-segment continuous log-log fit; the break is the crossover size."""
    sizes = np.array(sorted(peaks), dtype=float)
    if sizes.size < min_points:
        raise FitError(f"crossover detection needs at least {min_points} sizes")
    x = np.log(sizes)
    y = np.log([peaks[n] for n in sorted(peaks)])
    single = stats.linregress(x, y)
    sse_single = float(np.sum((y - single.intercept - single.slope * x) ** 2))

    best = None
    for x0 in np.linspace(x[1], x[-2], 200):
        A = np.column_stack([np.ones_like(x), x, np.maximum(x - x0, 0.0)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        sse = float(np.sum((A @ coef - y) ** 2))
        if best is None or sse < best[0]:
            best = (sse, x0, coef)
    sse, x0, coef = best
    p0 = [coef[0], coef[1], coef[1] + coef[2], x0]
    try:
        popt, pcov = optimize.curve_fit(_hinge, x, y, p0=p0)
        if not (x[0] < popt[3] < x[-1]):
            raise RuntimeError
    except (RuntimeError, optimize.OptimizeWarning):
        popt, pcov = np.array(p0), np.full((4, 4), np.nan)
    sse = float(np.sum((_hinge(x, *popt) - y) ** 2))
    dof = x.size - 4
    slope_err = math.sqrt(abs(pcov[2, 2]) + abs(pcov[1, 1])) if np.all(np.isfinite(pcov)) else np.inf
    # nested-model F test for the two extra hinge parameters
    if dof > 0 and sse > 0:
        p_value = stats.f.sf((sse_single - sse) / 2 / (sse / dof), 2, dof)
    else:
        p_value = 0.0 if sse_single > sse else 1.0
    significant = p_value < CROSSOVER_P_VALUE and abs(popt[2] - popt[1]) > 2 * slope_err
    if not significant:
        return CrossoverResult(False, None, None, (float(single.slope),), math.sqrt(sse_single))
    size = float(np.exp(popt[3]))
    err = float(size * math.sqrt(pcov[3, 3])) if np.isfinite(pcov[3, 3]) else None
    return CrossoverResult(True, size, err, (float(popt[1]), float(popt[2])), math.sqrt(sse))
