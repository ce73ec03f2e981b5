"""Acceptance suite: one test group per criterion.

Each group records a one-line summary; the terminal report prints a
PASS/FAIL line per criterion at the end of the run. The desk-scale
training criteria (3-5) run the CLI on ``configs/desk24h.toml``.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from thermopinn.ageing import KELVIN, ageing_factor, ageing_field, loss_of_life
from thermopinn.autodiff import Tape, gradient, second_derivative
from thermopinn.bayes import BayesConfig, elbo_loss, init_posterior, kl_divergence, train_bpinn
from thermopinn.cli import FILES, main
from thermopinn.config import load_config
from thermopinn.nn import MlpParams, forward, n_params
from thermopinn.pinn import PhysicsBatch, PointSet, CollocationSets, TrainConfig, loss_residual
from thermopinn.reference import FieldGrid, manufactured_solution, read_grid, solve_crank_nicolson
from thermopinn.thermal import OperatingProfiles, ThermalConfig

ROOT = Path(__file__).resolve().parents[1]
DESK = ROOT / "configs" / "desk24h.toml"


# 1. autodiff ------------------------------------------------------------------------


def _numpy_mlp(theta, sizes, x, t):
    a = np.array([x, t])
    pos = 0
    for li, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        W = theta[pos : pos + n_in * n_out].reshape(n_out, n_in)
        pos += n_in * n_out
        z = W @ a + theta[pos : pos + n_out]
        pos += n_out
        a = z if li == len(sizes) - 2 else np.tanh(z)
    return float(a[0])


def _random_mlp(rng):
    depth = int(rng.integers(1, 4))
    sizes = (2, *(int(w) for w in rng.integers(1, 17, depth)), 1)
    theta = np.empty(n_params(sizes))
    pos = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        theta[pos : pos + n_in * n_out] = rng.normal(0.0, 1.2 / math.sqrt(n_in), n_in * n_out)
        pos += n_in * n_out
        theta[pos : pos + n_out] = rng.normal(0.0, 0.3, n_out)
        pos += n_out
    return sizes, theta, rng.uniform(0.05, 0.95, 2)


def _rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


@pytest.mark.criterion(1, "autodiff correctness")
def test_criterion_1_autodiff_against_finite_differences(record_property):
    rng = np.random.default_rng(2024)
    worst1 = worst2 = 0.0
    start = time.perf_counter()
    for _ in range(100):
        sizes, theta, (x0, t0) = _random_mlp(rng)
        tape = Tape()
        net = MlpParams.unflatten(sizes, theta).as_inputs(tape)
        x, t = tape.input("x", x0), tape.input("t", t0)
        u = forward(net, x, t)
        names = ["x", "t", *net.input_names()]
        g = gradient(u, names)
        ad1 = np.array([g[n] for n in names])
        ad2 = np.array([second_derivative(u, a, b) for a, b in (("x", "x"), ("x", "t"), ("t", "t"))])

        f = lambda p, xx, tt: _numpy_mlp(p, sizes, xx, tt)  # noqa: E731
        h = 1e-5
        fd1 = [(f(theta, x0 + h, t0) - f(theta, x0 - h, t0)) / (2 * h), (f(theta, x0, t0 + h) - f(theta, x0, t0 - h)) / (2 * h)]
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = h
            fd1.append((f(theta + e, x0, t0) - f(theta - e, x0, t0)) / (2 * h))
        h2 = 1e-4
        c = f(theta, x0, t0)
        fd2 = [
            (f(theta, x0 + h2, t0) - 2 * c + f(theta, x0 - h2, t0)) / h2**2,
            (f(theta, x0 + h2, t0 + h2) - f(theta, x0 + h2, t0 - h2) - f(theta, x0 - h2, t0 + h2) + f(theta, x0 - h2, t0 - h2))
            / (4 * h2**2),
            (f(theta, x0, t0 + h2) - 2 * c + f(theta, x0, t0 - h2)) / h2**2,
        ]
        worst1 = max(worst1, _rel(ad1, fd1))
        worst2 = max(worst2, _rel(ad2, fd2))
    elapsed = time.perf_counter() - start
    record_property("detail", f"worst rel err 1st {worst1:.2e}, 2nd {worst2:.2e}, {elapsed:.1f} s for 100 nets")
    assert worst1 < 1e-5
    assert worst2 < 1e-4
    assert elapsed < 10.0


# 2. reference solver ----------------------------------------------------------------


def _mode_error(nx, nt):
    base = ThermalConfig(k=40.0, P0=0.0, mu_rated=0.0, h_eff=0.0)
    t_end = base.H**2 / (base.alpha * np.pi**2)
    cfg = ThermalConfig(k=40.0, P0=0.0, mu_rated=0.0, h_eff=0.0, t_end=t_end)
    prof = OperatingProfiles([0.0, t_end], [0.0, 0.0], [300.0, 300.0], [300.0, 300.0])
    xs = np.linspace(0.0, cfg.H, nx)
    start = time.perf_counter()
    g = solve_crank_nicolson(cfg, prof, nx, nt, initial=manufactured_solution(xs, 0.0, cfg))
    elapsed = time.perf_counter() - start
    X, T = np.meshgrid(g.xs, g.ts, indexing="ij")
    exact = manufactured_solution(X, T, cfg)
    return np.linalg.norm(g.theta - exact) / np.linalg.norm(exact - 300.0), elapsed


@pytest.mark.criterion(2, "reference solver fidelity")
def test_criterion_2_manufactured_solution(record_property):
    err, elapsed = _mode_error(101, 201)
    errs = [_mode_error(n, 801)[0] for n in (26, 51, 101)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    record_property(
        "detail", f"rel L2 {err:.2e} at 101x201, spatial orders {', '.join(f'{o:.3f}' for o in orders)}, {elapsed * 1e3:.1f} ms"
    )
    assert err < 1e-3
    assert np.all(np.abs(orders - 2.0) <= 0.2)
    assert elapsed < 1.0


# 3-5. desk-scale training -------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory, monkeypatch_module):
    monkeypatch_module.setenv("THERMOPINN_THREADS", "1")
    out = tmp_path_factory.mktemp("desk")
    for cmd in ("generate", "train-pinn", "train-bpinn", "predict", "evaluate"):
        code = main([cmd, "--config", str(DESK), "--out", str(out), "-q"])
        assert code == 0, f"{cmd} exited {code}"
    return out, load_config(DESK)


@pytest.fixture(scope="module")
def monkeypatch_module():
    mp = pytest.MonkeyPatch()
    yield mp
    mp.undo()


def _csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


@pytest.mark.slow
@pytest.mark.criterion(3, "PINN accuracy")
def test_criterion_3_pinn_accuracy(desk_run, record_property):
    out, cfg = desk_run
    m = json.loads((out / FILES["metrics"]).read_text())["pinn"]
    hist = _csv(out / FILES["pinn_history"])
    drop = hist["total"][0] / hist["total"][-1]
    wall = json.loads((out / "manifest_train-pinn.json").read_text())["wall_time_s"]
    record_property(
        "detail",
        f"rel L2 {m['L2_rel']:.2e}, max abs {m['max_abs']:.3f} K, loss drop {drop:.0f}x, "
        f"{cfg.train.iterations} iterations in {wall:.0f} s",
    )
    assert m["L2_rel"] < 0.05
    assert m["max_abs"] < 2.0
    assert cfg.train.iterations <= 20_000
    assert wall < 600.0
    assert drop >= 100.0


def _block_means(values, width=100):
    n = values.size // width * width
    return values[:n].reshape(-1, width).mean(axis=1)


@pytest.mark.slow
@pytest.mark.criterion(4, "B-PINN training")
def test_criterion_4_elbo_moving_average(desk_run, record_property):
    out, _ = desk_run
    elbo = _csv(out / FILES["elbo"])["elbo"]
    ma = _block_means(elbo)
    rises = np.diff(ma)
    record_property(
        "detail",
        f"ELBO 100-iter mean {ma[0]:.4g} -> {ma[-1]:.4g}, {int(np.sum(rises > 0))} of {rises.size} windows rose",
    )
    assert np.all(rises <= 0)


@pytest.mark.criterion(4, "B-PINN training")
def test_criterion_4_kl_only_objective_matches_closed_form(desk_profiles, desk_cfg, record_property):
    post = init_posterior((2, 8, 8, 1), seed=0, rho_init=-2.0)
    tc = TrainConfig(layers=(2, 8, 8, 1), iterations=3000, learning_rate=1e-2, N0=8, NBC=8, Nr=16)
    bc = BayesConfig(lambda_0=0.0, lambda_b=0.0, lambda_r=0.0, n_mc=1)
    post, _ = train_bpinn(post, tc, bc, desk_profiles, desk_cfg)
    est = elbo_loss(post, None, bc.scales, (0.0, 0.0, 0.0), n_mc=10_000, rng=123)
    se = est.samples.std(ddof=1) / math.sqrt(est.samples.size)
    kl = kl_divergence(post)
    record_property("detail", f"KL-only objective {est.value:.4g} vs closed form {kl:.4g} (SE {se:.2g})")
    assert abs(est.value - kl) <= 3 * se


@pytest.mark.slow
@pytest.mark.criterion(5, "B-PINN calibration")
def test_criterion_5_calibration(desk_run, record_property):
    out, _ = desk_run
    m = json.loads((out / FILES["metrics"]).read_text())["bpinn"]
    std = read_grid(out / FILES["bpinn_field"]).std
    record_property(
        "detail",
        f"mean rel L2 {m['L2_rel']:.2e}, 3-sigma coverage {m['coverage_3sigma']:.3f}, std min {std.min():.3g} K",
    )
    assert m["L2_rel"] < 0.10
    assert m["coverage_3sigma"] >= 0.85
    assert np.all(std > 0)


# 6. ageing ----------------------------------------------------------------------------


@pytest.mark.criterion(6, "ageing law")
def test_criterion_6_ageing(record_property):
    assert ageing_factor(98.0 + KELVIN) == 1.0
    assert ageing_factor(104.0 + KELVIN) == 2.0
    assert ageing_factor(92.0 + KELVIN) == 0.5
    rng = np.random.default_rng(6)
    g = ageing_field(FieldGrid(np.linspace(0, 1.5, 21), np.linspace(0, 86400, 49), 320 + 70 * rng.random((21, 49))))
    for j in range(g.ts.size):
        order = np.argsort(g.theta[:, j], kind="stable")
        assert np.all(np.diff(g.ageing[order, j]) >= 0)
    worst = 0.0
    for cut in g.ts[1:-1]:
        whole = loss_of_life(g)
        split = loss_of_life(g, t1=cut) + loss_of_life(g, t0=cut)
        worst = max(worst, float(np.max(np.abs(split - whole) / whole)))
    record_property("detail", f"V(92/98/104 C) = 0.5/1/2 exact, worst split-horizon rel diff {worst:.1e}")
    assert worst <= 1e-12


# 7. determinism -----------------------------------------------------------------------

SMALL = """
seed = 5
[thermal]
k = 40.0
[train]
layers = [2, 6, 6, 1]
iterations = 40
N0 = 8
NBC = 8
Nr = 32
resample_every = 10
[bayes]
iterations = 30
n_samples = 6
[grid]
nx = 11
nt = 13
"""

EVERY_COMMAND = [["generate"], ["train-pinn"], ["train-bpinn"], ["predict"], ["evaluate"], ["ageing", "--source", "bpinn"]]


def _numeric_outputs(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if not p.name.startswith("manifest_")}


@pytest.mark.criterion(7, "determinism")
def test_criterion_7_reruns_are_byte_identical(tmp_path, record_property):
    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL)
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        for cmd in EVERY_COMMAND:
            assert main([*cmd, "--config", str(cfg), "--out", str(out), "-q"]) == 0
        runs.append(_numeric_outputs(out))
    record_property("detail", f"{len(runs[0])} output files identical across reruns of all commands")
    assert runs[0].keys() == runs[1].keys() and len(runs[0]) >= 10
    for name in runs[0]:
        assert runs[0][name] == runs[1][name], name


# 8. loss normalisation ----------------------------------------------------------------


@pytest.mark.criterion(8, "loss-definition fidelity")
def test_criterion_8_paper_sum(record_property):
    # constant field with q / k = 3 gives residual 3 at every point
    cfg = ThermalConfig(theta_ref=300.0, theta_scale=1.0, t_end=3600.0, h_eff=0.0, P0=6.0, mu_rated=0.0, k=2.0)
    prof = OperatingProfiles([0.0, 3600.0], [0.0, 0.0], [300.0, 300.0], [300.0, 300.0])
    sizes = (2, 3, 1)
    net = MlpParams.unflatten(sizes, np.zeros(n_params(sizes)))
    pts = PointSet(np.array([0.3, 0.6]), np.array([0.2, 0.7]), "residual")
    tape_mean = loss_residual(net, pts, prof, cfg, "mean").value
    tape_sum = loss_residual(net, pts, prof, cfg, "paper_sum").value
    sets = CollocationSets(
        initial=PointSet(np.array([0.5]), np.zeros(1), "initial"),
        bottom=PointSet(np.zeros(1), np.array([0.5]), "boundary_bottom"),
        top=PointSet(np.ones(1), np.array([0.5]), "boundary_top"),
        residual=pts,
    )
    batch = PhysicsBatch(sets, prof, cfg)
    only_r = dict(lambda_0=0.0, lambda_BC=0.0, lambda_r=1.0)
    batch_mean = batch.loss_and_grad(net.flatten(), sizes, TrainConfig(**only_r))[1]["Lr"]
    batch_sum = batch.loss_and_grad(net.flatten(), sizes, TrainConfig(**only_r, loss_normalization="paper_sum"))[1]["Lr"]
    record_property("detail", f"mean {tape_mean:g} vs paper_sum {tape_sum:g} (tape), {batch_mean:g} vs {batch_sum:g} (batched)")
    assert tape_mean == pytest.approx(9.0, rel=1e-12) and batch_mean == pytest.approx(9.0, rel=1e-12)
    assert tape_sum == pytest.approx(18.0, rel=1e-12) and batch_sum == pytest.approx(18.0, rel=1e-12)
