"""Batched network kernels and the tridiagonal solver against independent oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_banded

from thermopinn import _kernels
from thermopinn._kernels import _fallback
from thermopinn.autodiff import Tape, gradient
from thermopinn.nn import MlpParams, forward, init_mlp, n_params

try:
    from thermopinn._kernels import _core
except ImportError:  # extension not built
    _core = None

BACKENDS = [pytest.param(_fallback, id="numpy")]
if _core is not None:
    BACKENDS.append(pytest.param(_core, id="cython"))


def _random_theta(sizes, seed, scale=0.7):
    return np.random.default_rng(seed).normal(0.0, scale, n_params(sizes))


def _points(n, seed):
    return np.random.default_rng(seed).uniform(0.0, 1.0, (n, 2))


@pytest.mark.parametrize("mod", BACKENDS)
def test_forward_channels_match_tape(mod):
    sizes = (2, 5, 4, 1)
    theta = _random_theta(sizes, 1)
    X = _points(6, 2)
    cache = mod.mlp_forward(theta, sizes, X)
    net = MlpParams.unflatten(sizes, theta)
    for i, (x0, t0) in enumerate(X):
        tape = Tape()
        x = tape.input("x", x0)
        t = tape.input("t", t0)
        u = forward(net, x, t)
        d = gradient(u, [x, t], create_graph=True)
        uxx = gradient(d["x"], [x])["x"]
        assert cache.u[i] == pytest.approx(u.value, rel=1e-12, abs=1e-14)
        assert cache.ux[i] == pytest.approx(d["x"].value, rel=1e-11, abs=1e-13)
        assert cache.ut[i] == pytest.approx(d["t"].value, rel=1e-11, abs=1e-13)
        assert cache.uxx[i] == pytest.approx(uxx, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("mod", BACKENDS)
def test_backward_matches_finite_differences(mod):
    sizes = (2, 6, 5, 1)
    theta = _random_theta(sizes, 3)
    X = _points(9, 4)
    rng = np.random.default_rng(5)
    gu, gt, gxx = rng.normal(size=(3, len(X)))

    def objective(th):
        c = mod.mlp_forward(th, sizes, X)
        return float(gu @ c.u + gt @ c.ut + gxx @ c.uxx)

    grad = mod.mlp_backward(theta, sizes, mod.mlp_forward(theta, sizes, X), gu, gt, gxx)
    h = 1e-6
    fd = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        fd[k] = (objective(theta + e) - objective(theta - e)) / (2 * h)
    assert np.max(np.abs(grad - fd)) / np.max(np.abs(fd)) < 1e-7


@pytest.mark.skipif(_core is None, reason="compiled core not built")
def test_backends_agree():
    sizes = (2, 32, 32, 32, 1)
    theta = init_mlp(sizes, 0).flatten() + _random_theta(sizes, 9, 0.05)
    X = _points(300, 8)
    a = _core.mlp_forward(theta, sizes, X)
    b = _fallback.mlp_forward(theta, sizes, X)
    for ch in ("u", "ux", "ut", "uxx"):
        np.testing.assert_allclose(getattr(a, ch), getattr(b, ch), rtol=1e-12, atol=1e-13)
    g = np.random.default_rng(1).normal(size=(3, 300))
    ga = _core.mlp_backward(theta, sizes, a, *g)
    gb = _fallback.mlp_backward(theta, sizes, b, *g)
    np.testing.assert_allclose(ga, gb, rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(_core.mlp_value(theta, sizes, X), b.u, rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("mod", BACKENDS)
def test_value_matches_forward(mod):
    sizes = (2, 7, 1)
    theta = _random_theta(sizes, 11)
    X = _points(20, 12)
    np.testing.assert_allclose(mod.mlp_value(theta, sizes, X), mod.mlp_forward(theta, sizes, X).u, rtol=1e-13)


@pytest.mark.parametrize("mod", BACKENDS)
def test_wrong_parameter_length(mod):
    with pytest.raises(ValueError):
        mod.mlp_value(np.zeros(5), (2, 3, 1), _points(2, 0))


def _banded_oracle(lower, diag, upper, rhs):
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return solve_banded((1, 1), ab, rhs)


@pytest.mark.parametrize("mod", BACKENDS)
@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 60), seed=st.integers(0, 2**31))
def test_thomas_matches_banded_solver(mod, n, seed):
    rng = np.random.default_rng(seed)
    lower = rng.uniform(-1, 1, n - 1)
    upper = rng.uniform(-1, 1, n - 1)
    diag = 2.5 + rng.uniform(0, 1, n)  # diagonally dominant
    rhs = rng.normal(size=n)
    x = np.asarray(mod.thomas(lower, diag, upper, rhs))
    np.testing.assert_allclose(x, _banded_oracle(lower, diag, upper, rhs), rtol=1e-12, atol=1e-12)


def test_active_backend_is_reported():
    assert _kernels.BACKEND in ("cython", "numpy")
    if _core is not None:
        assert _kernels.BACKEND == "cython" or _kernels.mlp_forward is _fallback.mlp_forward
