"""Dispatch an ExperimentConfig to an engine and write its outputs."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bosonic, collective, dtwa, spinwave
from .config import ExperimentConfig
from .lattice import LatticeSpec
from .observables import (FitError, ObservableSeries, detect_crossover, fit_power_law, optimal_squeezing,
                          peak_variance_scaling, series_from_moments, squeezing_from_moments, time_scaling,
                          to_decibels)

log = logging.getLogger(__name__)


def atomic_write(path: Path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


@dataclass
class RunContext:
    out: Path
    threads: int = 1
    outputs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def write_csv(self, name, header, rows):
        atomic_write(self.out / name, csv_text(header, rows))
        self.outputs.append(name)

    def write_json(self, name, obj):
        atomic_write(self.out / name, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
        self.outputs.append(name)

    def warn(self, msg):
        log.warning(msg)
        self.warnings.append(msg)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _tag(x) -> str:
    return f"{x:g}"


def _pool_map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _write_series(ctx, name, series: ObservableSeries):
    ctx.write_csv(name + ".csv", ["t", "name", "mean", "stderr"], series.rows())
    if series.correlations:
        ctx.write_csv(name + "_correlations.csv", ["t", "d", "mean", "stderr"], series.correlation_rows())
    for flag in series.flags:
        ctx.warn(f"{name}: {flag}")


def _optimum(ctx, name, series, t_max=None):
    try:
        opt = optimal_squeezing(series, t_max=t_max)
    except FitError as exc:
        ctx.warn(f"{name}: {exc}")
        return None
    if opt.boundary:
        ctx.warn(f"{name}: squeezing minimum on the window boundary")
    return opt


def _lambda(omega, coupling):
    return math.sqrt(omega * (coupling - omega)) if 0 < omega < coupling else None


def _collective_point(args):
    n, omega, coupling, t = args
    ser = collective.tat_series(n, omega, t, coupling=coupling)
    return series_from_moments(t, ser.mean, ser.covariance, n,
                               metadata={"engine": "collective", "N": n, "omega": omega})


def _squeezing_fits(ctx, cfg, table):
    """Per-field nu and time-scaling fits from {(size, omega): (N, OptimalSqueezing)}."""
    fits = {}
    for omega in cfg.fields:
        pts = {n: opt for (s, om), (n, opt) in table.items() if om == omega and opt is not None}
        entry = {}
        try:
            fit = fit_power_law(list(pts), [o.xi2_opt for o in pts.values()],
                                {"engine": cfg.engine, "omega": omega, "quantity": "xi2_opt"})
            entry["squeezing"] = fit.to_dict()
            entry["nu"] = -fit.exponent
        except FitError as exc:
            ctx.warn(f"omega={_tag(omega)}: squeezing fit skipped ({exc})")
        try:
            lam = _lambda(omega, cfg.coupling) if cfg.engine == "collective" else None
            fit = time_scaling({n: o.t_opt for n, o in pts.items()}, lam,
                               {"engine": cfg.engine, "omega": omega})
            entry["time_scaling"] = fit.to_dict()
        except FitError as exc:
            ctx.warn(f"omega={_tag(omega)}: time-scaling fit skipped ({exc})")
        fits[_tag(omega)] = entry
    return fits


def _optimal_rows(table):
    for (size, omega), (n, opt) in sorted(table.items()):
        if opt is None:
            continue
        yield size, n, omega, opt.t_opt, opt.xi2_opt, to_decibels(opt.xi2_opt), opt.angle, int(opt.boundary)


OPTIMAL_HEADER = ["size", "N", "omega", "t_opt", "xi2_opt", "xi2_opt_db", "angle", "boundary"]


def run_collective(cfg: ExperimentConfig, ctx: RunContext):
    t = cfg.t_grid()
    grid = [(n, om) for n in cfg.sizes for om in cfg.fields]
    results = _pool_map(_collective_point, [(n, om, cfg.coupling, t) for n, om in grid], ctx.threads)
    table = {}
    for (n, om), series in zip(grid, results):
        name = f"{cfg.label}_N{n}_omega{_tag(om)}"
        _write_series(ctx, name, series)
        table[(n, om)] = (n, _optimum(ctx, name, series))
    ctx.write_csv(f"{cfg.label}_optimal.csv", OPTIMAL_HEADER, _optimal_rows(table))
    ctx.write_json(f"{cfg.label}_fits.json", _squeezing_fits(ctx, cfg, table))


def run_bosonic(cfg: ExperimentConfig, ctx: RunContext):
    t = cfg.t_grid()
    rows = []
    for n in cfg.sizes:
        for om in cfg.fields:
            p = bosonic.BosonicParams.from_field(om, cfg.coupling)
            xi_b, valid = bosonic.squeezing_curve(p, n, t)
            nb = bosonic.boson_number(p, t)
            ser = collective.tat_series(n, om, t, coupling=cfg.coupling)
            xi_e, _, _ = squeezing_from_moments(ser.mean, ser.covariance, n)
            if not valid.all():
                ctx.warn(f"N={n} omega={_tag(om)}: bosonic mapping invalid after t={t[np.argmin(valid)]:.6g}")
            rows.extend((float(ti), n, om, float(xb), int(v), float(xe), float(b))
                        for ti, xb, v, xe, b in zip(t, xi_b, valid, xi_e, nb))
    ctx.write_csv(f"{cfg.label}.csv", ["t", "N", "omega", "xi2_bosonic", "valid", "xi2_exact", "boson_number"],
                  rows)


def _corr_times(cfg, t):
    return list(t) if cfg.correlation_times == "all" else list(cfg.correlation_times)


def _rsw_point(args):
    cfg, L, om = args
    spec = LatticeSpec(cfg.dimension, L, cfg.alpha, cfg.coupling)
    t = cfg.t_grid()
    return spinwave.rsw_observables(spec, om, t, _corr_times(cfg, t))


def run_rsw(cfg: ExperimentConfig, ctx: RunContext):
    grid = [(L, om) for L in cfg.sizes for om in cfg.fields]
    results = _pool_map(_rsw_point, [(cfg, L, om) for L, om in grid], ctx.threads)
    table = {}
    for (L, om), series in zip(grid, results):
        name = f"{cfg.label}_L{L}_omega{_tag(om)}"
        _write_series(ctx, name, series)
        table[(L, om)] = (series.n_sites, _optimum(ctx, name, series))
    ctx.write_csv(f"{cfg.label}_optimal.csv", OPTIMAL_HEADER, _optimal_rows(table))


def run_dtwa(cfg: ExperimentConfig, ctx: RunContext):
    t = cfg.t_grid()
    table, by_field = {}, {}
    for L in cfg.sizes:
        spec = LatticeSpec(cfg.dimension, L, cfg.alpha, cfg.coupling)
        for om in cfg.fields:
            name = f"{cfg.label}_L{L}_omega{_tag(om)}"
            res = dtwa.run(spec, om, t, cfg.n_traj, cfg.seed, dt=cfg.dt,
                           correlation_times=_corr_times(cfg, t), block_size=cfg.block_size,
                           workers=ctx.threads, energy_tolerance=cfg.energy_tolerance,
                           length_tolerance=cfg.length_tolerance)
            series = res.series
            series.metadata.update({"lattice": {"dimension": cfg.dimension, "L": L, "alpha": cfg.alpha,
                                                "coupling": cfg.coupling}, "omega": om})
            _write_series(ctx, name, series)
            ctx.write_json(name + "_meta.json", series.metadata)
            reliable = np.asarray(series.metadata["xi2_reliable"])
            table[(L, om)] = (spec.n_sites, _optimum(ctx, name, _masked(series, reliable)))
            by_field.setdefault(om, {})[spec.n_sites] = series
            if cfg.with_rsw:
                _write_series(ctx, name + "_rsw", spinwave.rsw_observables(spec, om, t, _corr_times(cfg, t)))
    ctx.write_csv(f"{cfg.label}_optimal.csv", OPTIMAL_HEADER, _optimal_rows(table))
    fits = _squeezing_fits(ctx, cfg, table)
    for om, per_n in by_field.items():
        _peak_fits(ctx, cfg, om, per_n, fits.setdefault(_tag(om), {}))
    ctx.write_json(f"{cfg.label}_fits.json", fits)


def _masked(series, reliable):
    """Copy of ``series`` whose xi2 is NaN where squeezing is unreliable."""
    if reliable.all():
        return series
    out = ObservableSeries(series.t_grid, series.n_sites, dict(series.series), series.squeezing_angle)
    xi = series.series["xi2"]
    out.series["xi2"] = type(xi)(np.where(reliable, xi.mean, np.nan), xi.stderr)
    return out


def _peak_rule(cfg, omega):
    return "plateau" if omega == 0 else cfg.peak_rule


def _peak_fits(ctx, cfg, omega, per_n, entry):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fit = peak_variance_scaling(per_n, "VarJy", _peak_rule(cfg, omega),
                                        {"engine": cfg.engine, "omega": omega})
    except FitError as exc:
        ctx.warn(f"omega={_tag(omega)}: peak-variance fit skipped ({exc})")
        return
    for flag in fit.flags:
        ctx.warn(f"omega={_tag(omega)}: {flag}")
    entry["peak_variance"] = fit.to_dict()
    peaks = fit.provenance["peaks"]
    if len(peaks) >= 6:
        cr = detect_crossover(peaks)
        entry["crossover"] = {"found": cr.found, "size": cr.size, "uncertainty": cr.uncertainty,
                              "slopes": list(cr.slopes), "residual_norm": cr.residual_norm}


def run_scaling(cfg: ExperimentConfig, ctx: RunContext):
    t = cfg.t_grid()
    grid = [(n, om) for om in cfg.fields for n in cfg.sizes]
    results = _pool_map(_collective_point, [(n, om, cfg.coupling, t) for n, om in grid], ctx.threads)
    fits, rows = {}, []
    for om in cfg.fields:
        per_n = {n: s for (n, o), s in zip(grid, results) if o == om}
        entry = fits.setdefault(_tag(om), {})
        _peak_fits(ctx, cfg, om, per_n, entry)
        for n, p in entry.get("peak_variance", {}).get("provenance", {}).get("peaks", {}).items():
            rows.append((om, int(n), float(p), float(p) / int(n) ** 2))
    ctx.write_csv(f"{cfg.label}_peaks.csv", ["omega", "N", "peak_VarJy", "peak_over_N2"], rows)
    ctx.write_json(f"{cfg.label}_fits.json", fits)


def run_stability(cfg: ExperimentConfig, ctx: RunContext):
    smap = spinwave.stability_map(cfg.alpha, cfg.dimension, cfg.sizes, cfg.fields, cfg.coupling)
    ctx.write_csv(f"{cfg.label}.csv", ["omega", "L", "lambda_max", "omega_c"], smap.rows())
    ctx.write_csv(f"{cfg.label}_critical.csv", ["L", "omega_c"],
                  ((int(L), float(c)) for L, c in zip(smap.sizes, smap.critical_fields)))
    report = {"alpha": cfg.alpha, "dimension": cfg.dimension,
              "asymptotic_exponent": -2 * spinwave.dynamical_exponent(cfg.alpha, cfg.dimension)}
    try:
        fit = fit_power_law(smap.sizes, smap.critical_fields, {"engine": "stability", "alpha": cfg.alpha})
        report["power_law"] = fit.to_dict()
        report["log_model"] = log_model_comparison(smap.sizes, smap.critical_fields)
    except FitError as exc:
        ctx.warn(f"critical-field fit skipped ({exc})")
    ctx.write_json(f"{cfg.label}_fits.json", report)


def log_model_comparison(sizes, omega_c) -> dict:
    """Residuals of 1/Omega_c = a + b log L against a power law, both in log Omega_c."""
    L = np.asarray(sizes, dtype=float)
    oc = np.asarray(omega_c, dtype=float)
    b, a = np.polyfit(np.log(L), 1 / oc, 1)
    inv = a + b * np.log(L)
    # a model predicting a non-positive inverse field cannot describe the data
    resid_log = np.log(oc) + np.log(inv) if np.all(inv > 0) else np.full(L.size, np.inf)
    p, c = np.polyfit(np.log(L), np.log(oc), 1)
    resid_pow = np.log(oc) - (c + p * np.log(L))
    rms_log = float(np.sqrt(np.mean(resid_log**2)))
    rms_pow = float(np.sqrt(np.mean(resid_pow**2)))
    return {"log_rms": rms_log, "power_rms": rms_pow, "log_preferred": rms_log < rms_pow,
            "log_slope": float(b), "log_intercept": float(a)}


ENGINE_RUNNERS = {
    "collective": run_collective,
    "bosonic": run_bosonic,
    "rsw": run_rsw,
    "dtwa": run_dtwa,
    "stability": run_stability,
    "scaling": run_scaling,
}


def run(cfg: ExperimentConfig, out, threads: int = 1) -> RunContext:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(out, max(1, threads))
    ENGINE_RUNNERS[cfg.engine](cfg, ctx)
    return ctx
