"""Numpy implementations of the hot kernels.

The network kernel propagates four channels per point through a tanh MLP:
the value ``u`` and its derivatives ``u_x``, ``u_t`` and ``u_xx`` with respect
to the two inputs. The backward pass returns the flat parameter gradient of
``sum(g_u*u + g_t*u_t + g_xx*u_xx)``.

Channels are stacked row-wise as ``[value; d/dx; d/dt; d2/dx2]`` so each layer
is a single ``(4N, n_in) @ (n_in, n_out)`` product.
"""

import numpy as np


def _layers(theta, sizes):
    out = []
    pos = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        W = theta[pos : pos + n_in * n_out].reshape(n_out, n_in)
        pos += n_in * n_out
        b = theta[pos : pos + n_out]
        pos += n_out
        out.append((W, b))
    if pos != theta.shape[0]:
        raise ValueError(f"parameter vector has length {theta.shape[0]}, expected {pos}")
    return out


def mlp_value(theta, sizes, X):
    a = np.asarray(X, dtype=float)
    layers = _layers(np.asarray(theta, dtype=float), sizes)
    for W, b in layers[:-1]:
        a = np.tanh(a @ W.T + b)
    W, b = layers[-1]
    return (a @ W.T + b)[:, 0]


class Cache:
    __slots__ = ("n", "inputs", "acts", "zs", "u", "ux", "ut", "uxx")


def _input_stack(X):
    n = X.shape[0]
    A = np.zeros((4 * n, 2))
    A[:n] = X
    A[n : 2 * n, 0] = 1.0
    A[2 * n : 3 * n, 1] = 1.0
    return A


def mlp_forward(theta, sizes, X):
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    layers = _layers(np.asarray(theta, dtype=float), sizes)
    A = _input_stack(X)
    cache = Cache()
    cache.n = n
    cache.inputs = []
    cache.acts = []
    cache.zs = []
    for W, b in layers[:-1]:
        cache.inputs.append(A)
        Z = A @ W.T
        Z[:n] += b
        a = np.tanh(Z[:n])
        s = 1.0 - a * a
        sp = -2.0 * a * s
        zx, zt, zxx = Z[n : 2 * n], Z[2 * n : 3 * n], Z[3 * n :]
        A = np.empty_like(Z)
        A[:n] = a
        A[n : 2 * n] = s * zx
        A[2 * n : 3 * n] = s * zt
        A[3 * n :] = s * zxx + sp * zx * zx
        cache.acts.append((a, s, sp))
        cache.zs.append(Z)
    W, b = layers[-1]
    cache.inputs.append(A)
    out = (A @ W.T)[:, 0]
    out[:n] += b[0]
    cache.u = out[:n]
    cache.ux = out[n : 2 * n]
    cache.ut = out[2 * n : 3 * n]
    cache.uxx = out[3 * n :]
    return cache


def mlp_backward(theta, sizes, cache, g_u, g_t, g_xx):
    n = cache.n
    layers = _layers(np.asarray(theta, dtype=float), sizes)
    G = np.zeros((4 * n, 1))
    G[:n, 0] = g_u
    G[2 * n : 3 * n, 0] = g_t
    G[3 * n :, 0] = g_xx
    grads = []
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        A = cache.inputs[li]
        grads.append((G.T @ A, G[:n].sum(axis=0)))
        if li == 0:
            break
        GA = G @ W
        a, s, sp = cache.acts[li - 1]
        Z = cache.zs[li - 1]
        zx, zt, zxx = Z[n : 2 * n], Z[2 * n : 3 * n], Z[3 * n :]
        gav, gax, gat, gaxx = GA[:n], GA[n : 2 * n], GA[2 * n : 3 * n], GA[3 * n :]
        spp = 2.0 * s * (3.0 * a * a - 1.0)
        G = np.empty_like(GA)
        G[n : 2 * n] = gax * s + 2.0 * gaxx * sp * zx
        G[2 * n : 3 * n] = gat * s
        G[3 * n :] = gaxx * s
        g_s = gax * zx + gat * zt + gaxx * zxx
        G[:n] = gav * s + g_s * sp + gaxx * zx * zx * spp
    flat = []
    for dW, db in reversed(grads):
        flat.append(dW.ravel())
        flat.append(db)
    return np.concatenate(flat)


def thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system by the Thomas algorithm.

    ``lower[i]`` is the entry at row ``i+1``, column ``i``; ``upper[i]`` the
    entry at row ``i``, column ``i+1``. Both have length ``n-1``.
    """
    lower = np.asarray(lower, dtype=float).tolist()
    diag = np.asarray(diag, dtype=float).tolist()
    upper = np.asarray(upper, dtype=float).tolist()
    rhs = np.asarray(rhs, dtype=float).tolist()
    n = len(diag)
    c = [0.0] * n
    d = [0.0] * n
    beta = diag[0]
    if beta == 0.0:
        raise ZeroDivisionError("singular tridiagonal system")
    c[0] = upper[0] / beta if n > 1 else 0.0
    d[0] = rhs[0] / beta
    for i in range(1, n):
        li = lower[i - 1]
        beta = diag[i] - li * c[i - 1]
        if beta == 0.0:
            raise ZeroDivisionError("singular tridiagonal system")
        if i < n - 1:
            c[i] = upper[i] / beta
        d[i] = (rhs[i] - li * d[i - 1]) / beta
    x = np.empty(n)
    x[n - 1] = d[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x
