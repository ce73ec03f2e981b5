"""Deterministic PINN: collocation sampling, composite loss and Adam training.

The composite loss is::

    L = lambda_0 * L_0 + lambda_BC * L_BC + lambda_r * L_r (+ lambda_data * L_data)

``L_0``, ``L_BC`` and ``L_data`` are mean squared errors of the
nondimensional network output. ``L_r`` is the mean squared physical
residual (``loss_normalization="mean"``) or the plain sum of squares
(``"paper_sum"``).

Losses exist in two forms. The ``loss_*``/``total_loss`` functions build
scalar autodiff graphs and serve as the reference. :class:`PhysicsBatch` evaluates the
same quantities with the batched kernels and is what training uses.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import qmc

from . import _kernels
from .autodiff import DiffNode, Tape
from .nn import DEFAULT_LAYERS, MlpParams, _find_tape, forward, n_params
from .thermal import (
    CollocationPoint,
    OperatingProfiles,
    ThermalConfig,
    boundary_values,
    initial_condition,
    pde_residual,
    residual_batch,
    scale,
)

log = logging.getLogger(__name__)

NORMALIZATIONS = ("mean", "paper_sum")
STRATEGIES = ("uniform", "latin_hypercube")
_EDGE = 1e-6


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lambda_0: float = 1.0
    lambda_BC: float = 1.0
    lambda_r: float = 1.0
    lambda_data: float = 0.0
    N0: int = 64
    NBC: int = 128
    Nr: int = 2048
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    iterations: int = 5000
    seed: int = 0
    resample_every: int = 500
    loss_normalization: str = "mean"
    strategy: str = "latin_hypercube"
    layers: tuple = DEFAULT_LAYERS
    lr_decay: float = 1.0

    def __post_init__(self):
        lams = (self.lambda_0, self.lambda_BC, self.lambda_r, self.lambda_data)
        if any(not math.isfinite(v) or v < 0 for v in lams):
            raise ValueError("loss multipliers must be finite and >= 0")
        if not any(v > 0 for v in lams):
            raise ValueError("at least one loss multiplier must be > 0")
        for name in ("N0", "NBC", "Nr", "iterations", "resample_every"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam hyperparameters")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.loss_normalization not in NORMALIZATIONS:
            raise ValueError(f"loss_normalization must be one of {NORMALIZATIONS}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        object.__setattr__(self, "layers", tuple(int(v) for v in self.layers))
        n_params(self.layers)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = list(self.layers)
        return d


@dataclass
class TrainHistory:
    total: list = field(default_factory=list)
    L0: list = field(default_factory=list)
    LBC: list = field(default_factory=list)
    Lr: list = field(default_factory=list)
    Ldata: list | None = None

    def __len__(self):
        return len(self.total)

    def append(self, total, terms):
        self.total.append(total)
        self.L0.append(terms["L0"])
        self.LBC.append(terms["LBC"])
        self.Lr.append(terms["Lr"])
        if self.Ldata is not None:
            self.Ldata.append(terms["Ldata"])

    def write_csv(self, path) -> None:
        cols = ["iter", "total", "L0", "LBC", "Lr"] + (["Ldata"] if self.Ldata is not None else [])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(len(self)):
                row = [self.total[i], self.L0[i], self.LBC[i], self.Lr[i]]
                if self.Ldata is not None:
                    row.append(self.Ldata[i])
                fh.write(f"{i}," + ",".join(f"{v:.17g}" for v in row) + "\n")


# collocation ----------------------------------------------------------------


@dataclass
class PointSet:
    x: np.ndarray
    t: np.ndarray
    kind: str

    def __len__(self):
        return len(self.x)

    def points(self) -> list[CollocationPoint]:
        return [CollocationPoint(float(a), float(b), self.kind) for a, b in zip(self.x, self.t)]


@dataclass
class CollocationSets:
    initial: PointSet
    bottom: PointSet
    top: PointSet
    residual: PointSet

    @property
    def boundary(self) -> PointSet:
        return PointSet(
            np.concatenate([self.bottom.x, self.top.x]),
            np.concatenate([self.bottom.t, self.top.t]),
            "boundary",
        )


def _unit_samples(n, d, strategy, rng):
    if strategy == "latin_hypercube":
        return qmc.LatinHypercube(d=d, seed=rng).random(n)
    return rng.uniform(size=(n, d))


def sample_collocation(counts, strategy: str = "latin_hypercube", seed=0, domain=((0.0, 1.0), (0.0, 1.0))):
    """Initial, boundary and interior residual points on the scaled domain.

    ``counts`` is ``(N0, NBC, Nr)``. Boundary points are split evenly between
    the bottom and top edges (the bottom takes the odd one). ``seed`` may be
    an int, a sequence of ints or a numpy Generator.
    """
    n0, nbc, nr = (int(c) for c in counts)
    if min(n0, nbc, nr) < 1:
        raise ValueError("point counts must be >= 1")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown sampling strategy '{strategy}'")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    (x0, x1), (t0, t1) = domain
    n_bottom = (nbc + 1) // 2
    u0 = _unit_samples(n0, 1, strategy, rng)[:, 0]
    ub = _unit_samples(nbc, 1, strategy, rng)[:, 0]
    ur = np.clip(_unit_samples(nr, 2, strategy, rng), _EDGE, 1.0 - _EDGE)
    return CollocationSets(
        initial=PointSet(x0 + (x1 - x0) * u0, np.full(n0, t0), "initial"),
        bottom=PointSet(np.full(n_bottom, x0), t0 + (t1 - t0) * ub[:n_bottom], "boundary_bottom"),
        top=PointSet(np.full(nbc - n_bottom, x1), t0 + (t1 - t0) * ub[n_bottom:], "boundary_top"),
        residual=PointSet(x0 + (x1 - x0) * ur[:, 0], t0 + (t1 - t0) * ur[:, 1], "residual"),
    )


# targets --------------------------------------------------------------------


def initial_targets(points: PointSet, profiles, cfg) -> np.ndarray:
    return scale(cfg, 0.0, 0.0, initial_condition(points.x, profiles, cfg))[2]


def boundary_targets(points: PointSet, profiles, cfg) -> np.ndarray:
    bottom, top = boundary_values(np.asarray(points.t) * cfg.t_end, profiles)
    kinds = _point_kinds(points)
    theta = np.where(kinds == "boundary_top", top, bottom)
    return scale(cfg, 0.0, 0.0, theta)[2]


def _point_kinds(points):
    if isinstance(points, PointSet):
        if points.kind == "boundary":
            return np.where(np.asarray(points.x) >= 0.5, "boundary_top", "boundary_bottom")
        return np.full(len(points), points.kind)
    return np.array([p.kind for p in points])


def _xt(points):
    if isinstance(points, PointSet):
        return np.asarray(points.x, float), np.asarray(points.t, float)
    return np.array([p.x for p in points], float), np.array([p.t for p in points], float)


# scalar-graph losses ----------------------------------------------------------


def _tape_of(net, tape=None):
    return tape or _find_tape(net) or Tape()


def _net_output(net, tape, x, t):
    n = len(tape.nodes)
    return forward(net, tape.input(f"x@{n}", x), tape.input(f"t@{n}", t))


def _mse(tape, preds, targets):
    if len(preds) == 0:
        raise ValueError("empty point set")
    acc = tape.const(0.0)
    for p, y in zip(preds, targets):
        acc = acc + (p - float(y)).square()
    return acc / float(len(preds))


def loss_initial(net, ic_points, targets, tape=None) -> DiffNode:
    """Mean squared mismatch of the network output against ``targets`` at t~=0 points."""
    tape = _tape_of(net, tape)
    xs, ts = _xt(ic_points)
    if len(xs) != len(targets):
        raise ValueError("one target per initial point required")
    preds = [_net_output(net, tape, a, b) for a, b in zip(xs, ts)]
    return _mse(tape, preds, targets)


def loss_boundary(net, bc_points, profiles, cfg, tape=None) -> DiffNode:
    tape = _tape_of(net, tape)
    xs, ts = _xt(bc_points)
    pts = bc_points if isinstance(bc_points, PointSet) else PointSet(xs, ts, "boundary")
    targets = boundary_targets(pts, profiles, cfg)
    preds = [_net_output(net, tape, a, b) for a, b in zip(xs, ts)]
    return _mse(tape, preds, targets)


def loss_residual(net, residual_points, profiles, cfg, normalization: str = "mean", tape=None) -> DiffNode:
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    tape = _tape_of(net, tape)
    xs, ts = _xt(residual_points)
    if len(xs) == 0:
        raise ValueError("empty point set")
    acc = tape.const(0.0)
    for a, b in zip(xs, ts):
        r = pde_residual(net, CollocationPoint(float(a), float(b), "residual"), profiles, cfg, tape=tape)
        acc = acc + r.square()
    return acc / float(len(xs)) if normalization == "mean" else acc


def loss_data(net, data, cfg, tape=None) -> DiffNode:
    """Mean squared mismatch to measurements ``(x~, t~, theta_K)``."""
    tape = _tape_of(net, tape)
    xs, ts, theta = (np.asarray(v, float) for v in data)
    preds = [_net_output(net, tape, a, b) for a, b in zip(xs, ts)]
    return _mse(tape, preds, scale(cfg, 0.0, 0.0, theta)[2])


def total_loss(net, sets: CollocationSets, tc: TrainConfig, profiles, cfg, data=None) -> DiffNode:
    """Weighted composite loss as one graph; terms with a zero multiplier are skipped."""
    tape = _tape_of(net)
    total = tape.const(0.0)
    if tc.lambda_0 > 0:
        total = total + tc.lambda_0 * loss_initial(
            net, sets.initial, initial_targets(sets.initial, profiles, cfg), tape=tape
        )
    if tc.lambda_BC > 0:
        total = total + tc.lambda_BC * loss_boundary(net, sets.boundary, profiles, cfg, tape=tape)
    if tc.lambda_r > 0:
        total = total + tc.lambda_r * loss_residual(net, sets.residual, profiles, cfg, tc.loss_normalization, tape=tape)
    if tc.lambda_data > 0 and data is not None:
        total = total + tc.lambda_data * loss_data(net, data, cfg, tape=tape)
    return total


# batched evaluation -------------------------------------------------------------


class PhysicsBatch:
    """Fixed point sets with precomputed targets, evaluated through the batched kernels.

    :meth:`evaluate` returns per-group errors: network-minus-target for
    ``initial``, ``boundary`` and ``data`` (nondimensional), and the physical
    residual for ``residual``. :meth:`backward` maps error adjoints to the
    flat parameter gradient.
    """

    def __init__(self, sets: CollocationSets, profiles: OperatingProfiles, cfg: ThermalConfig, data=None):
        self.cfg = cfg
        self.profiles = profiles
        bnd = sets.boundary
        groups = [("initial", sets.initial), ("boundary", bnd), ("residual", sets.residual)]
        targets = {
            "initial": initial_targets(sets.initial, profiles, cfg),
            "boundary": boundary_targets(bnd, profiles, cfg),
        }
        if data is not None:
            dx, dt, dtheta = (np.asarray(v, float) for v in data)
            groups.append(("data", PointSet(dx, dt, "data")))
            targets["data"] = scale(cfg, 0.0, 0.0, dtheta)[2]
        self.slices = {}
        xs, ts = [], []
        pos = 0
        for name, ps in groups:
            self.slices[name] = slice(pos, pos + len(ps))
            pos += len(ps)
            xs.append(ps.x)
            ts.append(ps.t)
        self.X = np.column_stack([np.concatenate(xs), np.concatenate(ts)])
        self.n = pos
        self.targets = targets
        rs = self.slices["residual"]
        # residual is affine in (u, u_t, u_xx): r = c_u u + c_t u_t + c_xx u_xx + offset
        zeros = np.zeros(rs.stop - rs.start)
        self._r_offset, self.c_u, self.c_t, self.c_xx = residual_batch(
            zeros, zeros, zeros, self.X[rs, 1], profiles, cfg
        )

    def counts(self) -> dict:
        return {k: s.stop - s.start for k, s in self.slices.items()}

    def evaluate(self, theta, sizes):
        cache = _kernels.mlp_forward(theta, sizes, self.X)
        errs = {}
        for name, sl in self.slices.items():
            if name == "residual":
                errs[name] = (
                    self.c_u * cache.u[sl] + self.c_t * cache.ut[sl] + self.c_xx * cache.uxx[sl] + self._r_offset
                )
            else:
                errs[name] = cache.u[sl] - self.targets[name]
        return cache, errs

    def backward(self, theta, sizes, cache, adjoints: dict) -> np.ndarray:
        g_u = np.zeros(self.n)
        g_t = np.zeros(self.n)
        g_xx = np.zeros(self.n)
        for name, g in adjoints.items():
            sl = self.slices[name]
            if name == "residual":
                g_u[sl] += self.c_u * g
                g_t[sl] = self.c_t * g
                g_xx[sl] = self.c_xx * g
            else:
                g_u[sl] += g
        return _kernels.mlp_backward(theta, sizes, cache, g_u, g_t, g_xx)

    def loss_and_grad(self, theta, sizes, tc: TrainConfig):
        """Composite loss, its terms and flat gradient at ``theta``."""
        cache, errs = self.evaluate(theta, sizes)
        lam = {"initial": tc.lambda_0, "boundary": tc.lambda_BC, "residual": tc.lambda_r, "data": tc.lambda_data}
        label = {"initial": "L0", "boundary": "LBC", "residual": "Lr", "data": "Ldata"}
        terms, adj = {}, {}
        total = 0.0
        for name, e in errs.items():
            sq = float(np.dot(e, e))
            denom = 1.0 if (name == "residual" and tc.loss_normalization == "paper_sum") else float(e.size)
            terms[label[name]] = sq / denom
            total += lam[name] * terms[label[name]]
            if lam[name] > 0:
                adj[name] = (2.0 * lam[name] / denom) * e
        terms.setdefault("Ldata", 0.0)
        return total, terms, self.backward(theta, sizes, cache, adj)


# optimisation ---------------------------------------------------------------


class Adam:
    def __init__(self, size, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def collocation_for_epoch(tc: TrainConfig, epoch: int) -> CollocationSets:
    return sample_collocation((tc.N0, tc.NBC, tc.Nr), tc.strategy, seed=[tc.seed, epoch])


def train_pinn(init: MlpParams, tc: TrainConfig, profiles, cfg, data=None, callback=None):
    """Adam on the composite loss; collocation is redrawn every ``resample_every`` steps.

    Each history entry is the loss at the parameters *before* that step's
    update. ``callback(iteration, total, terms)`` is called after each
    evaluation when given.
    """
    sizes = init.layer_sizes
    theta = init.flatten()
    opt = Adam(theta.size, tc.learning_rate, tc.beta1, tc.beta2, tc.eps)
    history = TrainHistory(Ldata=[] if (data is not None and tc.lambda_data > 0) else None)
    batch = None
    for it in range(tc.iterations):
        if it % tc.resample_every == 0:
            batch = PhysicsBatch(collocation_for_epoch(tc, it // tc.resample_every), profiles, cfg, data)
        total, terms, grad = batch.loss_and_grad(theta, sizes, tc)
        if not math.isfinite(total) or not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(f"non-finite loss or gradient at iteration {it}")
        history.append(total, terms)
        if callback is not None:
            callback(it, total, terms)
        opt.lr = tc.learning_rate * tc.lr_decay**it
        theta = opt.step(theta, grad)
    return MlpParams.unflatten(sizes, theta), history
