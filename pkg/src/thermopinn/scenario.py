"""Synthetic operating profiles for desk-scale experiments.

Load factor shapes::

    constant:    K(t) = K0
    sinusoidal:  K(t) = max(0, K0 + K_amp * sin(2 pi (t_h - K_phase_h) / 24))
    step:        K(t) = K0 for t_h < step_h, K_step afterwards

Ambient temperature is a diurnal sinusoid peaking at 15:00::

    T_amb(t) = ambient_mean + ambient_amp * sin(2 pi (t_h - 9) / 24)

Top-oil temperature follows the exponential first-order response of the
loading-guide top-oil model. The ultimate temperature at sample i is::

    u_i = T_amb(t_i) + rise_rated * ((1 + R K_i^2) / (1 + R)) ** n_oil

and, starting from steady state ``T_top(0) = u_0``, each step relaxes
towards the ultimate value at the end of the step::

    T_top(t_{i+1}) = u_{i+1} + (T_top(t_i) - u_{i+1}) * exp(-dt / tau)
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .thermal import OperatingProfiles

LOAD_SHAPES = ("constant", "sinusoidal", "step")


@dataclass(frozen=True)
class ProfileParams:
    K0: float = 0.8
    K_amp: float = 0.3
    K_phase_h: float = 12.0
    K_step: float = 1.2
    step_h: float = 12.0
    ambient_mean: float = 293.15
    ambient_amp: float = 5.0
    rise_rated: float = 40.0
    R: float = 4.0
    n_oil: float = 0.8
    tau_h: float = 3.0
    noise_K: float = 0.0

    def __post_init__(self):
        if self.tau_h <= 0:
            raise ValueError("tau_h must be > 0")
        if self.noise_K < 0 or self.R < 0 or self.K0 < 0 or self.K_step < 0:
            raise ValueError("noise_K, R, K0 and K_step must be >= 0")

    def as_dict(self) -> dict:
        return asdict(self)


def synthesize_profiles(
    hours: float,
    dt: float,
    load_shape: str = "sinusoidal",
    params: ProfileParams | None = None,
    seed: int = 0,
) -> OperatingProfiles:
    """Mutually consistent K, ambient and top-oil series sampled every ``dt`` seconds."""
    if hours <= 0 or dt <= 0:
        raise ValueError("hours and dt must be > 0")
    if load_shape not in LOAD_SHAPES:
        raise ValueError(f"load_shape must be one of {LOAD_SHAPES}")
    p = params or ProfileParams()
    n = int(round(hours * 3600.0 / dt))
    if n < 1:
        raise ValueError("dt longer than the horizon")
    t = np.linspace(0.0, hours * 3600.0, n + 1)
    th = t / 3600.0
    if load_shape == "constant":
        K = np.full(t.shape, p.K0)
    elif load_shape == "sinusoidal":
        K = np.maximum(0.0, p.K0 + p.K_amp * np.sin(2 * np.pi * (th - p.K_phase_h) / 24.0))
    else:
        K = np.where(th < p.step_h, p.K0, p.K_step)
    ambient = p.ambient_mean + p.ambient_amp * np.sin(2 * np.pi * (th - 9.0) / 24.0)
    ultimate = ambient + p.rise_rated * ((1.0 + p.R * K**2) / (1.0 + p.R)) ** p.n_oil
    decay = np.exp(-(t[1] - t[0]) / (p.tau_h * 3600.0))
    top = np.empty_like(t)
    top[0] = ultimate[0]
    for i in range(n):
        top[i + 1] = ultimate[i + 1] + (top[i] - ultimate[i + 1]) * decay
    if p.noise_K > 0:
        rng = np.random.default_rng(seed)
        ambient = ambient + rng.normal(0.0, p.noise_K, t.shape)
        top = top + rng.normal(0.0, p.noise_K, t.shape)
    return OperatingProfiles(t, K, ambient, top)
