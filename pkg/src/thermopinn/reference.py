"""Finite-difference reference solution of the oil heat equation.

Crank-Nicolson in time, second-order central differences in space, Dirichlet
rows pinned to the measured ambient (bottom) and top-oil (top) temperatures.
The convective sink is affine in temperature, so it enters the implicit
operator and the scheme stays unconditionally stable. Load, no-load and
ambient forcing are sampled at the half step. A short backward-Euler
start-up (Rannacher) damps the non-smooth start.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .thermal import OperatingProfiles, ThermalConfig, initial_condition

GRID_COLUMNS = ("x_m", "t_s", "theta_K", "std_K", "ageing_pu")


@dataclass
class FieldGrid:
    """Temperature field on a uniform ``(x, t)`` lattice; arrays are ``(nx, nt)``."""

    xs: np.ndarray
    ts: np.ndarray
    theta: np.ndarray
    std: np.ndarray | None = None
    ageing: np.ndarray | None = None

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ts = np.asarray(self.ts, dtype=float)
        nx, nt = self.xs.size, self.ts.size
        if nx < 3 or nt < 3:
            raise ValueError(f"grid needs nx, nt >= 3, got {nx}, {nt}")
        for name, c in (("xs", self.xs), ("ts", self.ts)):
            d = np.diff(c)
            if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
                raise ValueError(f"{name} must be strictly increasing and uniformly spaced")
        for name in ("theta", "std", "ageing"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=float)
            if v.shape != (nx, nt):
                raise ValueError(f"{name} has shape {v.shape}, expected {(nx, nt)}")
            setattr(self, name, v)

    @property
    def shape(self):
        return self.theta.shape

    def same_lattice(self, other: FieldGrid) -> bool:
        return (
            self.xs.shape == other.xs.shape
            and self.ts.shape == other.ts.shape
            and np.allclose(self.xs, other.xs, rtol=1e-12, atol=1e-12)
            and np.allclose(self.ts, other.ts, rtol=1e-12, atol=1e-9)
        )

    def restrict(self, ix=slice(None), it=slice(None)) -> FieldGrid:
        pick = lambda a: None if a is None else a[ix][:, it]  # noqa: E731
        return FieldGrid(self.xs[ix], self.ts[it], pick(self.theta), pick(self.std), pick(self.ageing))


def lattice(cfg: ThermalConfig, nx: int, nt: int):
    if nx < 3 or nt < 3:
        raise ValueError(f"nx and nt must be >= 3, got {nx}, {nt}")
    return np.linspace(0.0, cfg.H, nx), np.linspace(0.0, cfg.t_end, nt)


def solve_crank_nicolson(
    cfg: ThermalConfig,
    profiles: OperatingProfiles,
    nx: int,
    nt: int,
    initial: np.ndarray | None = None,
    startup_steps: int = 2,
) -> FieldGrid:
    """Solve on ``nx`` heights by ``nt`` times spanning ``[0, cfg.t_end]``.

    ``initial`` overrides the linear initial profile (used for verification
    against closed-form solutions). The first ``startup_steps`` intervals are
    each taken as two backward-Euler half steps, which damps the stiff modes
    excited where the initial and boundary data disagree with the source
    (plain Crank-Nicolson leaves them oscillating at every step).
    """
    xs, ts = lattice(cfg, nx, nt)
    if profiles.t_start > 1e-9 * cfg.t_end or profiles.t_stop < cfg.t_end * (1 - 1e-12):
        raise ValueError(
            f"profiles cover [{profiles.t_start}, {profiles.t_stop}] s, need [0, {cfg.t_end}] s"
        )
    if startup_steps < 0:
        raise ValueError("startup_steps must be >= 0")
    dx = xs[1] - xs[0]
    dt = ts[1] - ts[0]
    rc = cfg.rho * cfg.cp

    def forcing(t):
        return (cfg.q0 + profiles.load(t) ** 2 * cfg.q_rated + cfg.h_eff * profiles.ambient(t)) / rc

    def step(old, t0, tau, w):
        # theta-weighted step of length tau: w=1 backward Euler, w=0.5 Crank-Nicolson
        r = cfg.alpha * tau / dx**2
        beta = cfg.h_eff * tau / rc
        t1 = t0 + tau
        lo, hi = profiles.ambient(t1), profiles.top_oil(t1)
        m = nx - 2
        diag = np.full(m, 1.0 + w * (2.0 * r + beta))
        off = np.full(m - 1, -w * r)
        rhs = (1.0 - (1.0 - w) * (2.0 * r + beta)) * old[1:-1] + (1.0 - w) * r * (old[:-2] + old[2:])
        rhs += tau * forcing(t0 + w * tau)
        rhs[0] += w * r * lo
        rhs[-1] += w * r * hi
        new = np.empty(nx)
        new[0], new[-1] = lo, hi
        new[1:-1] = _kernels.thomas(off, diag, off, rhs)
        return new

    theta = np.empty((nx, nt))
    if initial is None:
        theta[:, 0] = initial_condition(xs / cfg.H, profiles, cfg)
    else:
        theta[:, 0] = np.asarray(initial, dtype=float)
    theta[0, 0] = profiles.ambient(ts[0])
    theta[-1, 0] = profiles.top_oil(ts[0])

    for n in range(nt - 1):
        if n < startup_steps:
            half = step(theta[:, n], ts[n], 0.5 * dt, 1.0)
            theta[:, n + 1] = step(half, ts[n] + 0.5 * dt, 0.5 * dt, 1.0)
        else:
            theta[:, n + 1] = step(theta[:, n], ts[n], dt, 0.5)
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError("non-finite temperature in reference solve")
    return FieldGrid(xs, ts, theta)


def manufactured_solution(x, t, cfg: ThermalConfig, offset: float = 300.0, amplitude: float = 1.0):
    """Decaying first sine mode of the source-free heat equation, in K."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    rate = cfg.alpha * np.pi**2 / cfg.H**2
    return offset + amplitude * np.sin(np.pi * x / cfg.H) * np.exp(-rate * t)


def error_map(predicted: FieldGrid, reference: FieldGrid):
    """Signed error field ``predicted - reference`` plus ``{L2_rel, max_abs}``."""
    if not predicted.same_lattice(reference):
        raise ValueError("error_map needs identical grids")
    diff = predicted.theta - reference.theta
    summary = {
        "L2_rel": float(np.linalg.norm(diff) / np.linalg.norm(reference.theta)),
        "max_abs": float(np.max(np.abs(diff))),
    }
    return FieldGrid(reference.xs, reference.ts, diff), summary


# files ---------------------------------------------------------------------


def config_hash(cfg: ThermalConfig) -> str:
    blob = json.dumps(cfg.as_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def header_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".header")


def write_grid(path, grid: FieldGrid, cfg: ThermalConfig | None = None) -> None:
    """Long-format CSV (x-major) plus a ``.header`` sidecar with nx, nt and config hash."""
    cols = ["x_m", "t_s", "theta_K"]
    chans = [grid.theta]
    if grid.std is not None:
        cols.append("std_K")
        chans.append(grid.std)
    if grid.ageing is not None:
        cols.append("ageing_pu")
        chans.append(grid.ageing)
    nx, nt = grid.shape
    X = np.repeat(grid.xs, nt)
    T = np.tile(grid.ts, nx)
    data = np.column_stack([X, T] + [c.ravel() for c in chans])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    meta = {"nx": nx, "nt": nt, "columns": cols, "cfg_hash": config_hash(cfg) if cfg else None}
    header_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def read_grid(path) -> FieldGrid:
    path = Path(path)
    meta = json.loads(header_path(path).read_text(encoding="utf-8"))
    nx, nt = int(meta["nx"]), int(meta["nt"])
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        cols = next(reader)
        unknown = set(cols) - set(GRID_COLUMNS)
        if cols[:3] != ["x_m", "t_s", "theta_K"] or unknown:
            raise ValueError(f"{path}: unexpected columns {cols}")
        data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    if data.shape != (nx * nt, len(cols)):
        raise ValueError(f"{path}: {data.shape[0]} rows, header says {nx}x{nt}")
    xs = data[::nt, 0]
    ts = data[:nt, 1]
    chans = {c: data[:, i].reshape(nx, nt) for i, c in enumerate(cols)}
    return FieldGrid(xs, ts, chans["theta_K"], chans.get("std_K"), chans.get("ageing_pu"))
