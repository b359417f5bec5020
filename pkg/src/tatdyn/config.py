"""Plain-text experiment configuration.

One ``key = value`` per line; ``#`` starts a comment. Lists are comma
separated. Numeric grids may also be written as ``linspace(a, b, n)``,
``geomspace(a, b, n)`` or ``range(a, b, step)`` (end inclusive for range).

Keys
  engine             collective | bosonic | rsw | dtwa | stability | scaling
  dimension          1 or 2 (lattice engines)
  alpha              power-law exponent, >= 0
  coupling           interaction scale, > 0
  sizes              N for collective/bosonic/scaling, L for the lattice engines
  fields             transverse fields
  t_max, n_times     uniform time grid from 0 to t_max
  n_traj, seed       dTWA trajectory count and seed
  dt                 dTWA step (default: chosen by the energy audit)
  energy_tolerance   dTWA per-trajectory relative energy drift bound
  length_tolerance   dTWA relative spin-length drift bound
  block_size         dTWA trajectories per RNG block
  correlation_times  times for C^yy snapshots, or ``all``
  peak_rule          second_max | first_max | plateau
  with_rsw           also write rotor/spin-wave predictions (dtwa engine)
  label              prefix for output files
"""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass, fields

import numpy as np

ENGINES = ("collective", "bosonic", "rsw", "dtwa", "stability", "scaling")
PEAK_RULES = ("second_max", "first_max", "plateau")
DESK_MAX_L = 24
LARGE_MAX_L = 90


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points at the offending line when known."""

    def __init__(self, message, source="<config>", line=None):
        self.source, self.line = source, line
        where = f"{source}:{line}: " if line else f"{source}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class ExperimentConfig:
    engine: str
    sizes: tuple
    fields: tuple
    dimension: int = 2
    alpha: float = 0.0
    coupling: float = 1.0
    t_max: float = 10.0
    n_times: int = 201
    n_traj: int = 1000
    seed: int = 0
    dt: float | None = None
    energy_tolerance: float = 1e-6
    length_tolerance: float = 1e-8
    block_size: int = 256
    correlation_times: tuple | str = ()
    peak_rule: str = "second_max"
    with_rsw: bool = False
    label: str = "run"

    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_times)

    def replace(self, **kw) -> "ExperimentConfig":
        d = asdict(self)
        d.update(kw)
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            elif isinstance(v, bool):
                v = "yes" if v else "no"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_GRID = re.compile(r"^(linspace|geomspace|range)\((.*)\)$")


def _numbers(text, cast):
    text = text.strip()
    m = _GRID.match(text)
    if m:
        kind, args = m.group(1), [float(a) for a in m.group(2).split(",")]
        if len(args) != 3:
            raise ValueError(f"{kind} takes three arguments")
        a, b, c = args
        if kind == "range":
            if c <= 0:
                raise ValueError("range step must be positive")
            vals = np.arange(a, b + 0.5 * c, c)
        else:
            if c < 1 or c != int(c):
                raise ValueError(f"{kind} count must be a positive integer")
            vals = (np.linspace if kind == "linspace" else np.geomspace)(a, b, int(c))
        if cast is int:
            return tuple(int(round(v)) for v in vals)
        return tuple(float(v) for v in vals)
    if not text:
        return ()
    return tuple(cast(x) if cast is not int else _int(x) for x in text.split(","))


def _int(text):
    f = float(text)
    if f != int(f):
        raise ValueError(f"{text.strip()!r} is not an integer")
    return int(f)


def _bool(text):
    t = text.strip().lower()
    if t in ("yes", "true", "1", "on"):
        return True
    if t in ("no", "false", "0", "off"):
        return False
    raise ValueError(f"{text.strip()!r} is not a boolean")


def _corr_times(text):
    return "all" if text.strip() == "all" else _numbers(text, float)


_PARSERS = {
    "engine": str.strip,
    "sizes": lambda s: _numbers(s, int),
    "fields": lambda s: _numbers(s, float),
    "dimension": _int,
    "alpha": float,
    "coupling": float,
    "t_max": float,
    "n_times": _int,
    "n_traj": _int,
    "seed": _int,
    "dt": float,
    "energy_tolerance": float,
    "length_tolerance": float,
    "block_size": _int,
    "correlation_times": _corr_times,
    "peak_rule": str.strip,
    "with_rsw": _bool,
    "label": str.strip,
}


def parse_config(text: str, source: str = "<config>", large: bool = False) -> ExperimentConfig:
    values, lines = {}, {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", source, no)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}", source, no)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", source, no)
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", source, no) from None
        lines[key] = no
    for key in ("engine", "sizes", "fields"):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}", source)
    cfg = ExperimentConfig(**values)
    validate(cfg, source, lines, large)
    return cfg


def validate(cfg: ExperimentConfig, source: str = "<config>", lines: dict | None = None, large: bool = False):
    """Raise ConfigError on the first semantic problem."""
    lines = lines or {}

    def fail(key, msg):
        raise ConfigError(msg, source, lines.get(key))

    if cfg.engine not in ENGINES:
        fail("engine", f"engine must be one of {', '.join(ENGINES)}")
    if not cfg.sizes:
        fail("sizes", "size grid is empty")
    if not cfg.fields:
        fail("fields", "field grid is empty")
    if cfg.dimension not in (1, 2):
        fail("dimension", "dimension must be 1 or 2")
    if not cfg.alpha >= 0 or not np.isfinite(cfg.alpha):
        fail("alpha", "alpha must be finite and >= 0")
    if not cfg.coupling > 0:
        fail("coupling", "coupling must be positive")
    if not cfg.t_max > 0:
        fail("t_max", "t_max must be positive")
    if cfg.n_times < 2:
        fail("n_times", "need at least two time points")
    if min(cfg.sizes) < 2:
        fail("sizes", "sizes must be >= 2")
    if cfg.engine == "dtwa":
        cap = LARGE_MAX_L if large else DESK_MAX_L
        if max(cfg.sizes) > cap:
            fail("sizes", f"dTWA linear size {max(cfg.sizes)} above {cap}"
                 + ("" if large else " (use --large for up to %d)" % LARGE_MAX_L))
        if cfg.n_traj < 2:
            fail("n_traj", "dTWA needs at least two trajectories")
        if cfg.block_size < 1:
            fail("block_size", "block_size must be positive")
    if cfg.dt is not None and not cfg.dt > 0:
        fail("dt", "dt must be positive")
    if not cfg.energy_tolerance > 0 or not cfg.length_tolerance > 0:
        fail("energy_tolerance" if not cfg.energy_tolerance > 0 else "length_tolerance", "tolerances must be positive")
    if cfg.engine in ("collective", "bosonic", "scaling") and cfg.alpha != 0:
        fail("alpha", f"the {cfg.engine} engine is all-to-all only (alpha = 0)")
    if cfg.engine == "bosonic" and any(not 0 <= f <= cfg.coupling for f in cfg.fields):
        fail("fields", "bosonic fields must lie in [0, coupling]")
    if cfg.peak_rule not in PEAK_RULES:
        fail("peak_rule", f"peak_rule must be one of {', '.join(PEAK_RULES)}")
    if cfg.correlation_times != "all" and any(t < 0 or t > cfg.t_max for t in cfg.correlation_times):
        fail("correlation_times", "correlation times must lie in [0, t_max]")
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", cfg.label):
        fail("label", "label may only contain letters, digits, '_', '-' and '.'")
