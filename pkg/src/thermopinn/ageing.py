"""Relative insulation ageing from a temperature field.

The relative ageing rate doubles for every ``doubling_interval`` degrees
above ``theta_base``::

    V = 2 ** ((theta_C - theta_base) / doubling_interval)

Loss of life is the trapezoidal time integral of ``V`` in equivalent hours.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .reference import FieldGrid

KELVIN = 273.15


@dataclass(frozen=True)
class AgeingConfig:
    theta_base: float = 98.0  # degC where V = 1
    doubling_interval: float = 6.0  # degC per doubling

    def __post_init__(self):
        if not (math.isfinite(self.doubling_interval) and self.doubling_interval > 0):
            raise ValueError("doubling_interval must be > 0")
        if not math.isfinite(self.theta_base):
            raise ValueError("theta_base must be finite")

    def as_dict(self) -> dict:
        return asdict(self)


def ageing_factor(theta_K, ac: AgeingConfig | None = None):
    """Relative ageing rate at temperature ``theta_K`` (kelvin)."""
    ac = ac or AgeingConfig()
    theta = np.asarray(theta_K, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("temperature must be finite")
    v = np.exp2((theta - KELVIN - ac.theta_base) / ac.doubling_interval)
    return float(v) if v.ndim == 0 else v


def ageing_field(grid: FieldGrid, ac: AgeingConfig | None = None) -> FieldGrid:
    """Copy of ``grid`` with the ``ageing`` channel filled pointwise."""
    return FieldGrid(grid.xs, grid.ts, grid.theta, grid.std, ageing_factor(grid.theta, ac))


def loss_of_life(grid: FieldGrid, t0: float | None = None, t1: float | None = None) -> np.ndarray:
    """Equivalent aged hours per height, integrated over the grid times in ``[t0, t1]``."""
    if grid.ageing is None:
        raise ValueError("grid has no ageing channel; call ageing_field first")
    return integrate_ageing(grid.ts, grid.ageing, t0, t1)


def integrate_ageing(ts, V, t0=None, t1=None) -> np.ndarray:
    """Trapezoidal integral of ``V`` (rows: heights, columns: ``ts`` in s) in hours.

    ``ts`` may repeat a time to encode a step. Limits, when given, must be
    sample times.
    """
    ts = np.asarray(ts, dtype=float)
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape[-1] != ts.size:
        raise ValueError("V must have one column per time")
    if np.any(np.diff(ts) < 0):
        raise ValueError("times must be non-decreasing")
    lo = 0 if t0 is None else _knot(ts, t0, first=True)
    hi = ts.size - 1 if t1 is None else _knot(ts, t1, first=False)
    if hi < lo:
        raise ValueError("t1 precedes t0")
    dt = np.diff(ts[lo : hi + 1])
    seg = 0.5 * (V[:, lo:hi] + V[:, lo + 1 : hi + 1]) * dt
    return seg.sum(axis=1) / 3600.0


def _knot(ts, t, first):
    hits = np.flatnonzero(ts == t)
    if hits.size == 0:
        raise ValueError(f"time {t} is not a sample time")
    return int(hits[0] if first else hits[-1])


def write_loss_of_life(path, xs, hours) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x_m,equiv_hours\n")
        for x, h in zip(xs, hours):
            fh.write(f"{x:.17g},{h:.17g}\n")
