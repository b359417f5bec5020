"""Named experiment configurations, one per reproducible figure panel."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    runtime: str
    config: ExperimentConfig


ALL_TO_ALL_SIZES = (64, 128, 256, 512, 1024)
DIPOLAR_SIZES = (8, 10, 12, 16, 20)


def _grid(a, b, n):
    return tuple(float(x) for x in np.linspace(a, b, n))


_PRESETS = [
    Preset("fig1a", "all-to-all squeezing dynamics at Omega = 0.1 J", "seconds",
           ExperimentConfig("collective", ALL_TO_ALL_SIZES, (0.1,), alpha=0.0, t_max=20.0, n_times=801,
                            label="fig1a")),
    Preset("fig1b", "optimal squeezing against N across the field window, nu fit per field", "seconds",
           ExperimentConfig("collective", ALL_TO_ALL_SIZES, _grid(0.1, 0.9, 9), alpha=0.0, t_max=20.0,
                            n_times=4001, label="fig1b")),
    Preset("fig1c", "time to optimal squeezing against log N", "seconds",
           ExperimentConfig("collective", ALL_TO_ALL_SIZES, (0.2, 0.5, 0.8), alpha=0.0, t_max=12.0,
                            n_times=12001, label="fig1c")),
    Preset("fig1d", "all-to-all magnetization dynamics at Omega = 0.1 J", "seconds",
           ExperimentConfig("collective", ALL_TO_ALL_SIZES, (0.1,), alpha=0.0, t_max=30.0, n_times=601,
                            label="fig1d")),
    Preset("fig2a", "dipolar 2D magnetization at Omega = 0.2 J (dTWA, desk scale)", "about 15 minutes",
           ExperimentConfig("dtwa", DIPOLAR_SIZES, (0.2,), dimension=2, alpha=3.0, t_max=4.0, n_times=161,
                            n_traj=4000, seed=2024, label="fig2a")),
    Preset("fig2b", "dipolar squeezing at Omega = 0.2 J, L = 16, dTWA with RSW overlay", "about 3 minutes",
           ExperimentConfig("dtwa", (16,), (0.2,), dimension=2, alpha=3.0, t_max=2.0, n_times=101,
                            n_traj=4000, seed=2024, with_rsw=True, label="fig2b")),
    Preset("fig2c", "dipolar optimal squeezing against N for several fields (dTWA)", "about 10 minutes",
           ExperimentConfig("dtwa", DIPOLAR_SIZES, (0.2, 0.4, 0.6, 0.8), dimension=2, alpha=3.0, t_max=1.5,
                            n_times=151, n_traj=1000, seed=2024, label="fig2c")),
    Preset("fig3a", "spin-wave stability diagram, alpha = 3, D = 2", "seconds",
           ExperimentConfig("stability", tuple(range(8, 129, 4)), _grid(0.05, 1.0, 96), dimension=2, alpha=3.0,
                            label="fig3a")),
    Preset("fig3b", "spin-wave stability diagram, alpha = 1, D = 1", "seconds",
           ExperimentConfig("stability", tuple(int(x) for x in np.geomspace(16, 4096, 9)), _grid(0.05, 1.0, 96),
                            dimension=1, alpha=1.0, label="fig3b")),
    Preset("fig3c", "spin-wave stability diagram, alpha = 0.5, D = 1", "seconds",
           ExperimentConfig("stability", tuple(int(x) for x in np.geomspace(16, 4096, 9)), _grid(0.05, 1.0, 96),
                            dimension=1, alpha=0.5, label="fig3c")),
    Preset("fig4a", "all-to-all Var(J^y) dynamics for several fields, N = 256", "seconds",
           ExperimentConfig("collective", (256,), (0.0, 0.1, 0.2, 0.5, 0.8), alpha=0.0, t_max=60.0,
                            n_times=3001, label="fig4a")),
    Preset("fig4b", "dipolar Var(J^y) dynamics at Omega = 0.2 J (dTWA)", "about 15 minutes",
           ExperimentConfig("dtwa", (8, 12, 16, 20), (0.2,), dimension=2, alpha=3.0, t_max=4.0, n_times=161,
                            n_traj=4000, seed=2024, label="fig4b")),
    Preset("fig4c", "peak Var(J^y) against N for the all-to-all model", "seconds",
           ExperimentConfig("scaling", (64, 128, 256, 512), (0.2, 0.5, 0.8), alpha=0.0, t_max=64.0,
                            n_times=4001, label="fig4c")),
    Preset("fig5a", "dipolar C^yy(d, t) spreading at Omega = 0.2 J, L = 20 (dTWA)", "about 8 minutes",
           ExperimentConfig("dtwa", (20,), (0.2,), dimension=2, alpha=3.0, t_max=3.0, n_times=61, n_traj=4000,
                            seed=2024, correlation_times="all", label="fig5a")),
    Preset("fig6", "dipolar peak Var(J^y) against N and crossover detection (dTWA)", "about 40 minutes",
           ExperimentConfig("dtwa", (6, 8, 10, 12, 14, 16, 18, 20), (0.2, 0.4, 0.6), dimension=2, alpha=3.0,
                            t_max=4.0, n_times=161, n_traj=1000, seed=2024, label="fig6")),
    Preset("fig7", "bosonic squeezing against the exact engine, N = 512", "seconds",
           ExperimentConfig("bosonic", (512,), (0.1, 0.3, 0.5, 0.7, 0.9), alpha=0.0, t_max=6.0, n_times=601,
                            label="fig7")),
    Preset("fig8", "dipolar magnetization at large fields (dTWA)", "about 5 minutes",
           ExperimentConfig("dtwa", (8, 12, 16, 20), (0.6, 0.8), dimension=2, alpha=3.0, t_max=3.0, n_times=301,
                            n_traj=1000, seed=2024, label="fig8")),
]

PRESETS = {p.name: p for p in _PRESETS}


def presets() -> list:
    return list(_PRESETS)


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
