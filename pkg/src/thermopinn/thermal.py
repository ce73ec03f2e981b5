"""Transformer oil thermal physics in one spatial dimension.

Governing equation (x is height above the tank bottom)::

    k * d2T/dx2 + q(x, t) = rho * cp * dT/dt
    q = P0 + K(t)^2 * mu_rated - h_eff * (T - T_amb(t))

with Dirichlet values T(0, t) = T_amb(t) and T(H, t) = T_top(t), and an
initial profile linear between T_amb(0) and T_top(0).

Losses are volumetric densities (W/m^3) and ``h_eff`` a volumetric
coefficient (W/m^3/K). ``P0`` and ``mu_rated`` are divided by
``volume_divisor`` so nameplate watts can be entered with an oil volume.

The network works on nondimensional coordinates::

    x~ = x / H,   t~ = t / t_end,   T~ = (T - theta_ref) / theta_scale
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .autodiff import DiffNode, Tape, gradient
from .nn import _find_tape, forward

PROFILE_HEADER = ("t_s", "K_pu", "theta_A_K", "theta_TO_K")

KINDS = ("initial", "boundary_bottom", "boundary_top", "residual", "data")


@dataclass(frozen=True)
class ThermalConfig:
    k: float = 0.12
    rho: float = 870.0
    cp: float = 1880.0
    h_eff: float = 100.0
    P0: float = 600.0
    mu_rated: float = 2400.0
    H: float = 1.5
    theta_ref: float = 293.15
    theta_scale: float = 50.0
    t_end: float = 86400.0
    volume_divisor: float = 1.0

    def __post_init__(self):
        for name in ("k", "rho", "cp", "H", "theta_scale", "t_end", "volume_divisor"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be > 0, got {v}")
        for name in ("h_eff", "P0", "mu_rated"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        if not np.isfinite(self.theta_ref):
            raise ValueError("theta_ref must be finite")

    @property
    def alpha(self) -> float:
        """Thermal diffusivity k / (rho * cp), m^2/s."""
        return self.k / (self.rho * self.cp)

    @property
    def q0(self) -> float:
        return self.P0 / self.volume_divisor

    @property
    def q_rated(self) -> float:
        return self.mu_rated / self.volume_divisor

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True, eq=False)
class OperatingProfiles:
    """Sampled load factor, ambient and top-oil temperature; linear in between."""

    times: np.ndarray
    K: np.ndarray
    theta_A: np.ndarray
    theta_TO: np.ndarray
    _rtol: float = field(default=1e-9, repr=False)

    def __post_init__(self):
        arrays = {}
        for name in ("times", "K", "theta_A", "theta_TO"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            arrays[name] = a
            object.__setattr__(self, name, a)
        n = arrays["times"].shape
        if len(n) != 1 or n[0] < 2:
            raise ValueError("profiles need at least two samples")
        if any(a.shape != n for a in arrays.values()):
            raise ValueError("all profile series must have the same length")
        if not np.all(np.isfinite(np.stack(list(arrays.values())))):
            raise ValueError("profiles contain non-finite values")
        if np.any(np.diff(arrays["times"]) <= 0):
            raise ValueError("profile times must be strictly increasing")
        if np.any(arrays["K"] < 0):
            raise ValueError("load factor K must be >= 0")
        for name in ("theta_A", "theta_TO"):
            a = arrays[name]
            if np.any(a < 200.0) or np.any(a > 500.0):
                warnings.warn(f"{name} outside the plausible 200-500 K range", stacklevel=3)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_stop(self) -> float:
        return float(self.times[-1])

    def _check_range(self, t):
        t = np.asarray(t, dtype=float)
        span = self.t_stop - self.t_start
        tol = self._rtol * max(span, 1.0)
        if np.any(t < self.t_start - tol) or np.any(t > self.t_stop + tol):
            raise ValueError(
                f"time outside profile range [{self.t_start}, {self.t_stop}]: "
                f"min {np.min(t)}, max {np.max(t)}"
            )
        return t

    def load(self, t):
        return np.interp(self._check_range(t), self.times, self.K)

    def ambient(self, t):
        return np.interp(self._check_range(t), self.times, self.theta_A)

    def top_oil(self, t):
        return np.interp(self._check_range(t), self.times, self.theta_TO)

    def window(self, t0: float, t1: float) -> OperatingProfiles:
        """Profiles restricted to ``[t0, t1]``, with interpolated end samples."""
        inner = (self.times > t0) & (self.times < t1)
        ts = np.concatenate([[t0], self.times[inner], [t1]])
        return OperatingProfiles(ts, self.load(ts), self.ambient(ts), self.top_oil(ts))


@dataclass(frozen=True)
class CollocationPoint:
    x: float
    t: float
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown point kind '{self.kind}'")
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.t <= 1.0):
            raise ValueError(f"point ({self.x}, {self.t}) outside [0, 1]^2")


# scaling -------------------------------------------------------------------


def scale(cfg: ThermalConfig, x_phys, t_phys, theta_phys):
    return (
        np.divide(x_phys, cfg.H),
        np.divide(t_phys, cfg.t_end),
        np.divide(np.subtract(theta_phys, cfg.theta_ref), cfg.theta_scale),
    )


def unscale(cfg: ThermalConfig, x_s, t_s, theta_s):
    return (
        np.multiply(x_s, cfg.H),
        np.multiply(t_s, cfg.t_end),
        np.add(np.multiply(theta_s, cfg.theta_scale), cfg.theta_ref),
    )


def temperature(cfg: ThermalConfig, theta_s):
    """Network output to Kelvin; works on arrays and DiffNodes."""
    return cfg.theta_ref + cfg.theta_scale * theta_s


# physics -------------------------------------------------------------------


def heat_source(x, t, theta_O, profiles: OperatingProfiles, cfg: ThermalConfig):
    """Volumetric heat generation (W/m^3) at scaled time ``t`` and oil temperature ``theta_O`` (K).

    Uniform in ``x``; affine in ``theta_O`` with slope ``-h_eff``.
    """
    t_phys = np.multiply(t, cfg.t_end)
    drive = cfg.q0 + profiles.load(t_phys) ** 2 * cfg.q_rated + cfg.h_eff * profiles.ambient(t_phys)
    if isinstance(theta_O, DiffNode):
        return float(drive) - cfg.h_eff * theta_O
    return drive - cfg.h_eff * np.asarray(theta_O, dtype=float)


def boundary_values(t, profiles: OperatingProfiles):
    """Dirichlet temperatures (bottom, top) in K at physical time ``t`` (s)."""
    return profiles.ambient(t), profiles.top_oil(t)


def initial_condition(x, profiles: OperatingProfiles, cfg: ThermalConfig):
    """Initial temperature (K) at scaled height ``x``: linear from bottom to top value."""
    bottom, top = boundary_values(profiles.t_start, profiles)
    return bottom + (top - bottom) * np.asarray(x, dtype=float)


def residual_coefficients(cfg: ThermalConfig):
    """Coefficients mapping network channels to the physical residual.

    ``r = c_xx * u_xx + c_t * u_t + c_u * u + source(t) / k`` where u is the
    nondimensional output and ``source`` collects the terms free of u.
    """
    s = cfg.theta_scale
    return {
        "c_xx": s / cfg.H**2,
        "c_t": -s / (cfg.alpha * cfg.t_end),
        "c_u": -cfg.h_eff * s / cfg.k,
    }


def residual_from_field(u_fn, x, t, profiles: OperatingProfiles, cfg: ThermalConfig):
    """Physical residual (K/m^2) of a nondimensional field ``u_fn(x_node, t_node)``.

    ``x`` and ``t`` are scaled-coordinate tape inputs. The result is a tape
    node, differentiable with respect to whatever ``u_fn`` depends on.
    """
    u = u_fn(x, t)
    if not isinstance(u, DiffNode):
        u = x.tape.const(float(u))
    first = gradient(u, [x, t], create_graph=True)
    u_x, u_t = first[x.name], first[t.name]
    u_xx = gradient(u_x, [x], create_graph=True)[x.name]
    theta = temperature(cfg, u)
    q = heat_source(x.value, t.value, theta, profiles, cfg)
    theta_xx = (cfg.theta_scale / cfg.H**2) * u_xx
    theta_t = (cfg.theta_scale / cfg.t_end) * u_t
    return theta_xx + q / cfg.k - theta_t / cfg.alpha


def pde_residual(net, p: CollocationPoint, profiles: OperatingProfiles, cfg: ThermalConfig, tape=None):
    """Residual at one residual-kind point as a tape node.

    ``net`` may carry plain parameters or tape inputs (see
    :meth:`~thermopinn.nn.MlpParams.as_inputs`); in the latter case the
    residual is differentiable with respect to them.
    """
    if p.kind != "residual":
        raise ValueError(f"pde_residual needs a residual point, got kind '{p.kind}'")
    tape = tape or _find_tape(net) or Tape()
    n = len(tape.nodes)
    x = tape.input(f"x@{n}", p.x)
    t = tape.input(f"t@{n}", p.t)
    return residual_from_field(lambda a, b: forward(net, a, b), x, t, profiles, cfg)


def residual_batch(u, u_t, u_xx, t, profiles: OperatingProfiles, cfg: ThermalConfig):
    """Vectorized physical residual from network channels at scaled times ``t``.

    Returns ``(r, dr_du, dr_dut, dr_duxx)``; the derivatives are constants
    because the residual is affine in the channels.
    """
    c = residual_coefficients(cfg)
    t_phys = np.asarray(t) * cfg.t_end
    drive = cfg.q0 + profiles.load(t_phys) ** 2 * cfg.q_rated + cfg.h_eff * (profiles.ambient(t_phys) - cfg.theta_ref)
    r = c["c_xx"] * u_xx + c["c_t"] * u_t + c["c_u"] * u + drive / cfg.k
    return r, c["c_u"], c["c_t"], c["c_xx"]


# profiles CSV --------------------------------------------------------------


def write_profiles(path, profiles: OperatingProfiles) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_HEADER)
        for row in zip(profiles.times, profiles.K, profiles.theta_A, profiles.theta_TO):
            w.writerow([f"{v:.17g}" for v in row])


def read_profiles(path) -> OperatingProfiles:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty profiles file") from None
        if tuple(h.strip() for h in header) != PROFILE_HEADER:
            raise ValueError(f"{path}: header must be {','.join(PROFILE_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if len(rows[-1]) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 columns")
    data = np.array(rows, dtype=float).reshape(-1, 4)
    return OperatingProfiles(data[:, 0], data[:, 1], data[:, 2], data[:, 3])
