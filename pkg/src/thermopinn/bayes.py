"""Mean-field variational Bayesian PINN.

Every network parameter gets an independent Gaussian ``N(mu_d, sigma_d^2)``
with ``sigma = softplus(rho)``; the prior is ``N(0, 1)`` per parameter. The
training objective is the Monte Carlo estimate of the negative evidence
lower bound::

    L = 1/n_mc * sum_i [ log q(theta_i) - log p(theta_i)
                         - l0 * ll_0(theta_i) - lb * ll_bc(theta_i) - lr * ll_r(theta_i) ]

with ``theta_i = mu + sigma * eps_i`` and Gaussian log-likelihoods of the
initial, boundary and residual errors. Gradients with respect to
``(mu, rho)`` are exact for the frozen noise ``eps``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tape, exp, log
from .nn import MlpParams, init_mlp, load_vectors, n_params, predict, save_vectors
from .pinn import (
    Adam,
    PhysicsBatch,
    TrainConfig,
    TrainingDivergedError,
    collocation_for_epoch,
    initial_targets,
    loss_boundary,
    loss_initial,
    loss_residual,
)
from .reference import FieldGrid

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def softplus(rho):
    return np.logaddexp(0.0, rho)


def softplus_inverse(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be > 0")
    return sigma + np.log(-np.expm1(-sigma))


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


@dataclass
class VariationalPosterior:
    layer_sizes: tuple
    mu: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.layer_sizes = tuple(int(v) for v in self.layer_sizes)
        d = n_params(self.layer_sizes)
        self.mu = np.array(self.mu, dtype=float)
        self.rho = np.array(self.rho, dtype=float)
        if self.mu.shape != (d,) or self.rho.shape != (d,):
            raise ValueError(f"mu and rho must have length {d}")

    @property
    def size(self) -> int:
        return self.mu.size

    @property
    def sigma(self) -> np.ndarray:
        return softplus(self.rho)

    def mean_params(self) -> MlpParams:
        return MlpParams.unflatten(self.layer_sizes, self.mu)


def init_posterior(layer_sizes, seed: int = 0, rho_init: float = -5.0) -> VariationalPosterior:
    """Glorot means and a uniform ``rho``."""
    mu = init_mlp(layer_sizes, seed).flatten()
    return VariationalPosterior(layer_sizes, mu, np.full(mu.shape, float(rho_init)))


@dataclass(frozen=True)
class LikelihoodScales:
    sigma_0: float = 0.01
    sigma_bc: float = 0.01
    sigma_f: float = 1.0

    def __post_init__(self):
        for name in ("sigma_0", "sigma_bc", "sigma_f"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be > 0, got {v}")


@dataclass(frozen=True)
class BayesConfig:
    n_mc: int = 2
    scales: LikelihoodScales = field(default_factory=LikelihoodScales)
    lambda_0: float = 1.0
    lambda_b: float = 1.0
    lambda_r: float = 1.0
    rho_init: float = -5.0
    iterations: int = 5000
    learning_rate: float = 1e-3
    lr_decay: float = 1.0
    n_samples: int = 200  # posterior-predictive draws
    warm_start: bool = False  # start mu from the trained PINN when available

    def __post_init__(self):
        if int(self.n_mc) < 1:
            raise ValueError("n_mc must be >= 1")
        if int(self.iterations) < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate < 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("learning_rate must be >= 0 and lr_decay in (0, 1]")
        if int(self.n_samples) < 2:
            raise ValueError("n_samples must be >= 2")
        if any(not math.isfinite(v) or v < 0 for v in self.multipliers):
            raise ValueError("likelihood multipliers must be finite and >= 0")

    @property
    def multipliers(self):
        return (self.lambda_0, self.lambda_b, self.lambda_r)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class ElboRecord:
    iteration: int
    elbo_loss: float
    kl_part: float
    nll_0: float
    nll_bc: float
    nll_r: float


def write_elbo_csv(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iter,elbo,klq_p,nll_0,nll_bc,nll_r\n")
        for r in records:
            vals = (r.elbo_loss, r.kl_part, r.nll_0, r.nll_bc, r.nll_r)
            fh.write(f"{r.iteration}," + ",".join(f"{v:.17g}" for v in vals) + "\n")


# densities ----------------------------------------------------------------


def sample_params(post: VariationalPosterior, noise) -> np.ndarray:
    """Reparameterized draw ``mu + sigma * noise``."""
    noise = np.asarray(noise, dtype=float)
    if noise.shape[-1] != post.size:
        raise ValueError(f"noise must have trailing length {post.size}")
    return post.mu + post.sigma * noise


def log_prior(theta) -> float:
    theta = np.asarray(theta, dtype=float)
    return float(-HALF_LOG_2PI * theta.size - 0.5 * np.dot(theta.ravel(), theta.ravel()))


def log_variational(theta, post: VariationalPosterior) -> float:
    sigma = post.sigma
    z = (np.asarray(theta, dtype=float) - post.mu) / sigma
    return float(np.sum(-HALF_LOG_2PI - np.log(sigma) - 0.5 * z * z))


def kl_divergence(post: VariationalPosterior) -> float:
    """Closed-form KL(q || N(0, I)) for the diagonal Gaussian posterior."""
    s2 = post.sigma**2
    return float(np.sum(-np.log(post.sigma) + 0.5 * (s2 + post.mu**2 - 1.0)))


def gaussian_loglik(errors, sigma: float) -> float:
    """Sum of pointwise ``log N(err; 0, sigma^2)``."""
    e = np.asarray(errors, dtype=float)
    return float(-e.size * (HALF_LOG_2PI + math.log(sigma)) - np.dot(e, e) / (2.0 * sigma**2))


def log_likelihood_physics(theta_sample, sets, scales: LikelihoodScales, profiles=None, cfg=None, layer_sizes=None):
    """Initial, boundary and residual log-likelihoods of one parameter draw.

    ``theta_sample`` is an :class:`MlpParams` or a flat vector (then
    ``layer_sizes`` is required). ``sets`` is a :class:`CollocationSets`
    (needs ``profiles`` and ``cfg``) or a prepared :class:`PhysicsBatch`.
    """
    if isinstance(theta_sample, MlpParams):
        layer_sizes, flat = theta_sample.layer_sizes, theta_sample.flatten()
    else:
        if layer_sizes is None:
            raise ValueError("layer_sizes is required for a flat parameter vector")
        flat = np.asarray(theta_sample, dtype=float)
    batch = sets if isinstance(sets, PhysicsBatch) else PhysicsBatch(sets, profiles, cfg)
    _, errs = batch.evaluate(flat, tuple(layer_sizes))
    if not all(np.all(np.isfinite(e)) for e in errs.values()):
        raise FloatingPointError("non-finite network output in likelihood")
    return (
        gaussian_loglik(errs["initial"], scales.sigma_0),
        gaussian_loglik(errs["boundary"], scales.sigma_bc),
        gaussian_loglik(errs["residual"], scales.sigma_f),
    )


def save_posterior(path, post: VariationalPosterior) -> None:
    save_vectors(path, post.layer_sizes, {"mu": post.mu, "rho": post.rho})


def load_posterior(path) -> VariationalPosterior:
    sizes, cols = load_vectors(path)
    if "mu" not in cols or "rho" not in cols:
        raise ValueError(f"{path}: posterior checkpoint needs 'mu' and 'rho' columns")
    return VariationalPosterior(sizes, cols["mu"], cols["rho"])


# ELBO ----------------------------------------------------------------------


@dataclass
class ElboEstimate:
    value: float
    grad_mu: np.ndarray
    grad_rho: np.ndarray
    kl_part: float
    nll: tuple
    samples: np.ndarray  # per-sample objective values


def elbo_loss(
    post: VariationalPosterior,
    batch: PhysicsBatch | None,
    scales: LikelihoodScales,
    multipliers=(1.0, 1.0, 1.0),
    n_mc: int = 1,
    rng=None,
    noise=None,
) -> ElboEstimate:
    """Monte Carlo negative ELBO with its gradient in ``(mu, rho)``.

    Pass ``noise`` of shape ``(n_mc, D)`` to freeze the draws; otherwise they
    come from ``rng``. With all multipliers zero the network is not evaluated
    and ``batch`` may be ``None``.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    if noise is None:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        noise = rng.standard_normal((n_mc, post.size))
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    lam0, lamb, lamr = multipliers
    physics = any(v > 0 for v in multipliers)
    if physics and batch is None:
        raise ValueError("a PhysicsBatch is required when any multiplier is > 0")
    sigma = post.sigma
    n = noise.shape[0]
    g_mu = np.zeros(post.size)
    g_sigma = np.zeros(post.size)
    values = np.empty(n)
    kl_parts = np.empty(n)
    nlls = np.zeros((n, 3))
    log_sigma = np.log(sigma)
    for i, eps in enumerate(noise):
        theta = post.mu + sigma * eps
        lq = float(np.sum(-HALF_LOG_2PI - log_sigma - 0.5 * eps * eps))
        lp = log_prior(theta)
        kl_parts[i] = lq - lp
        g_theta = theta.copy()  # d(-log p)/d theta
        if physics:
            cache, errs = batch.evaluate(theta, post.layer_sizes)
            sig = {"initial": scales.sigma_0, "boundary": scales.sigma_bc, "residual": scales.sigma_f}
            lam = {"initial": lam0, "boundary": lamb, "residual": lamr}
            adj = {}
            for j, name in enumerate(("initial", "boundary", "residual")):
                e = errs[name]
                if not np.all(np.isfinite(e)):
                    raise TrainingDivergedError(f"non-finite {name} error in ELBO sample {i}")
                nlls[i, j] = -gaussian_loglik(e, sig[name])
                if lam[name] > 0:
                    adj[name] = (lam[name] / sig[name] ** 2) * e
            g_theta += batch.backward(theta, post.layer_sizes, cache, adj)
        values[i] = kl_parts[i] + lam0 * nlls[i, 0] + lamb * nlls[i, 1] + lamr * nlls[i, 2]
        g_mu += g_theta
        # log q at a reparameterized draw depends on sigma only through -log(sigma)
        g_sigma += g_theta * eps - 1.0 / sigma
    value = float(np.mean(values))
    if not math.isfinite(value):
        raise TrainingDivergedError("non-finite ELBO estimate")
    g_mu /= n
    g_sigma /= n
    return ElboEstimate(
        value=value,
        grad_mu=g_mu,
        grad_rho=g_sigma * _sigmoid(post.rho),
        kl_part=float(np.mean(kl_parts)),
        nll=tuple(float(v) for v in nlls.mean(axis=0)),
        samples=values,
    )


def elbo_graph(post, sets, scales, multipliers, noise, profiles, cfg):
    """The same estimator as one scalar autodiff graph (for small networks).

    Returns ``(tape, loss_node)``. The tape inputs ``mu[d]`` and ``rho[d]``
    hold the variational parameters. Every density is written out literally,
    so this is independent of the simplifications used by :func:`elbo_loss`.
    """
    tape = Tape()
    mus = [tape.input(f"mu[{d}]", v) for d, v in enumerate(post.mu)]
    rhos = [tape.input(f"rho[{d}]", v) for d, v in enumerate(post.rho)]
    sigmas = [log(1.0 + exp(r)) for r in rhos]
    lam0, lamb, lamr = multipliers
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    total = tape.const(0.0)
    for eps in noise:
        theta = [m + s * float(e) for m, s, e in zip(mus, sigmas, eps)]
        lq = tape.const(0.0)
        lp = tape.const(0.0)
        for th, m, s in zip(theta, mus, sigmas):
            lq = lq + (-HALF_LOG_2PI - log(s) - ((th - m) / s).square() * 0.5)
            lp = lp + (-HALF_LOG_2PI - 0.5 * th.square())
        sample = lq - lp
        if any(v > 0 for v in multipliers):
            net = MlpParams.unflatten(post.layer_sizes, np.array(theta, dtype=object))
            n0, nb, nr = len(sets.initial), len(sets.boundary), len(sets.residual)
            s0, sb, sf = scales.sigma_0, scales.sigma_bc, scales.sigma_f
            sq0 = n0 * loss_initial(net, sets.initial, initial_targets(sets.initial, profiles, cfg))
            sqb = nb * loss_boundary(net, sets.boundary, profiles, cfg)
            sqr = loss_residual(net, sets.residual, profiles, cfg, normalization="paper_sum")
            ll0 = -n0 * (HALF_LOG_2PI + math.log(s0)) - sq0 / (2 * s0**2)
            llb = -nb * (HALF_LOG_2PI + math.log(sb)) - sqb / (2 * sb**2)
            llr = -nr * (HALF_LOG_2PI + math.log(sf)) - sqr / (2 * sf**2)
            sample = sample - lam0 * ll0 - lamb * llb - lamr * llr
        total = total + sample
    return tape, total / float(len(noise))


# training -------------------------------------------------------------------


def train_bpinn(
    init_post: VariationalPosterior,
    tc: TrainConfig,
    bayes: BayesConfig,
    profiles,
    cfg,
    callback=None,
):
    """Variational training of ``(mu, rho)`` with Adam on the Monte Carlo ELBO.

    Collocation is redrawn every ``tc.resample_every`` steps; noise comes
    from a dedicated stream seeded by ``tc.seed``. Returns the final
    posterior and one :class:`ElboRecord` per iteration.
    """
    post = VariationalPosterior(init_post.layer_sizes, init_post.mu, init_post.rho)
    d = post.size
    params = np.concatenate([post.mu, post.rho])
    opt = Adam(2 * d, tc.learning_rate, tc.beta1, tc.beta2, tc.eps)
    noise_rng = np.random.default_rng([tc.seed, 0x5EED])
    physics = any(v > 0 for v in bayes.multipliers)
    history = []
    batch = None
    for it in range(tc.iterations):
        if physics and it % tc.resample_every == 0:
            batch = PhysicsBatch(collocation_for_epoch(tc, it // tc.resample_every), profiles, cfg)
        post.mu, post.rho = params[:d], params[d:]
        est = elbo_loss(post, batch, bayes.scales, bayes.multipliers, bayes.n_mc, rng=noise_rng)
        if not (np.all(np.isfinite(est.grad_mu)) and np.all(np.isfinite(est.grad_rho))):
            raise TrainingDivergedError(f"non-finite ELBO gradient at iteration {it}")
        rec = ElboRecord(it, est.value, est.kl_part, *est.nll)
        history.append(rec)
        if callback is not None:
            callback(it, rec)
        opt.lr = tc.learning_rate * tc.lr_decay**it
        params = opt.step(params, np.concatenate([est.grad_mu, est.grad_rho]))
    return VariationalPosterior(post.layer_sizes, params[:d].copy(), params[d:].copy()), history


# prediction -----------------------------------------------------------------


def _sample_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for draw ``index``: Philox keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(index)]))


def posterior_samples(post: VariationalPosterior, n_samples: int, seed: int = 0):
    """Yield parameter draws; draw ``i`` depends only on ``(seed, i)``."""
    for i in range(n_samples):
        yield sample_params(post, _sample_stream(seed, i).standard_normal(post.size))


def posterior_predictive(post: VariationalPosterior, xs, ts, cfg, n_samples: int = 200, seed: int = 0) -> FieldGrid:
    """Sample mean and unbiased std (K) of the predicted field on the lattice ``xs x ts`` (m, s)."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    X, T = np.meshgrid(np.asarray(xs) / cfg.H, np.asarray(ts) / cfg.t_end, indexing="ij")
    mean = np.zeros(X.shape)
    m2 = np.zeros(X.shape)
    for k, theta in enumerate(posterior_samples(post, n_samples, seed), start=1):
        field_k = cfg.theta_ref + cfg.theta_scale * predict(theta, X, T, post.layer_sizes)
        delta = field_k - mean
        mean += delta / k
        m2 += delta * (field_k - mean)
    return FieldGrid(xs, ts, mean, std=np.sqrt(m2 / (n_samples - 1)))


def uncertainty_error_map(pred: FieldGrid, reference: FieldGrid):
    """Mean error and z-score maps of a predictive field against a reference.

    Cells with zero std and nonzero error get an infinite z-score and are
    listed in ``flagged``.
    """
    if pred.std is None:
        raise ValueError("prediction has no std channel")
    if not pred.same_lattice(reference):
        raise ValueError("uncertainty_error_map needs identical grids")
    err = pred.theta - reference.theta
    std = pred.std
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, err / np.where(std > 0, std, 1.0), np.where(err == 0, 0.0, np.sign(err) * np.inf))
    flagged = (std <= 0) & (err != 0)
    summary = {
        "L2_rel": float(np.linalg.norm(err) / np.linalg.norm(reference.theta)),
        "max_abs": float(np.max(np.abs(err))),
        "coverage_3sigma": float(np.mean(np.abs(z) <= 3.0)),
        "std_min": float(np.min(std)),
        "std_mean": float(np.mean(std)),
        "flagged_cells": int(np.count_nonzero(flagged)),
    }
    return {
        "mean_error": FieldGrid(reference.xs, reference.ts, err),
        "zscore": FieldGrid(reference.xs, reference.ts, z),
        "flagged": flagged,
        "summary": summary,
    }
