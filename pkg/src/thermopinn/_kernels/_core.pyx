# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: tanh-MLP derivative channels and the Thomas solve.

Same contracts as ``_fallback``; products go through BLAS ``dgemm`` and the
derivative-channel bookkeeping is fused into single C loops; tanh itself
stays with numpy, whose vectorized version beats libm.
"""

import numpy as np

from scipy.linalg.cython_blas cimport dgemm


cdef class Cache:
    cdef public Py_ssize_t n
    cdef public list inputs
    cdef public list zs
    cdef public object u, ux, ut, uxx


def _offsets(sizes, Py_ssize_t length):
    offs = []
    cdef Py_ssize_t pos = 0
    for n_in, n_out in zip(sizes[:len(sizes) - 1], sizes[1:]):
        offs.append((pos, pos + n_in * n_out, n_in, n_out))
        pos += n_in * n_out + n_out
    if pos != length:
        raise ValueError(f"parameter vector has length {length}, expected {pos}")
    return offs


cdef void _gemm_abt(double[:, ::1] A, double[:, ::1] W, double[:, ::1] Z) noexcept nogil:
    # Z = A @ W.T  with A (m, k), W (p, k), Z (m, p), all row-major
    cdef int m = <int>A.shape[0]
    cdef int k = <int>A.shape[1]
    cdef int p = <int>W.shape[0]
    cdef double one = 1.0
    cdef double zero = 0.0
    cdef char tr = b'T'
    cdef char nt = b'N'
    dgemm(&tr, &nt, &p, &m, &k, &one, &W[0, 0], &k, &A[0, 0], &k, &zero, &Z[0, 0], &p)


cdef void _gemm_atb(double[:, ::1] G, double[:, ::1] A, double* out) noexcept nogil:
    # out (p, k) = G.T @ A  with G (m, p), A (m, k)
    cdef int m = <int>G.shape[0]
    cdef int p = <int>G.shape[1]
    cdef int k = <int>A.shape[1]
    cdef double one = 1.0
    cdef double zero = 0.0
    cdef char tr = b'T'
    cdef char nt = b'N'
    dgemm(&nt, &tr, &k, &p, &m, &one, &A[0, 0], &k, &G[0, 0], &p, &zero, out, &k)


cdef void _gemm_ab(double[:, ::1] G, double[:, ::1] W, double[:, ::1] out) noexcept nogil:
    # out (m, k) = G @ W  with G (m, p), W (p, k)
    cdef int m = <int>G.shape[0]
    cdef int p = <int>G.shape[1]
    cdef int k = <int>W.shape[1]
    cdef double one = 1.0
    cdef double zero = 0.0
    cdef char nt = b'N'
    dgemm(&nt, &nt, &k, &m, &p, &one, &W[0, 0], &k, &G[0, 0], &p, &zero, &out[0, 0], &k)


cdef void _tanh_channels(double[:, ::1] Z, double[:, ::1] A, Py_ssize_t n) noexcept nogil:
    # value rows of A already hold tanh(Z + b); fill the derivative rows
    cdef Py_ssize_t i, j
    cdef Py_ssize_t w = Z.shape[1]
    cdef double a, s, sp, zx
    for i in range(n):
        for j in range(w):
            a = A[i, j]
            s = 1.0 - a * a
            sp = -2.0 * a * s
            zx = Z[n + i, j]
            A[i, j] = a
            A[n + i, j] = s * zx
            A[2 * n + i, j] = s * Z[2 * n + i, j]
            A[3 * n + i, j] = s * Z[3 * n + i, j] + sp * zx * zx


cdef void _tanh_adjoint(double[:, ::1] GA, const double[:, ::1] A, const double[:, ::1] Z,
                        Py_ssize_t n) noexcept nogil:
    # GA holds adjoints of the activation channels; overwritten with those of Z
    cdef Py_ssize_t i, j
    cdef Py_ssize_t w = GA.shape[1]
    cdef double a, s, sp, spp, zx, zt, zxx, gav, gax, gat, gaxx, g_s
    for i in range(n):
        for j in range(w):
            a = A[i, j]
            s = 1.0 - a * a
            sp = -2.0 * a * s
            spp = 2.0 * s * (3.0 * a * a - 1.0)
            zx = Z[n + i, j]
            zt = Z[2 * n + i, j]
            zxx = Z[3 * n + i, j]
            gav = GA[i, j]
            gax = GA[n + i, j]
            gat = GA[2 * n + i, j]
            gaxx = GA[3 * n + i, j]
            g_s = gax * zx + gat * zt + gaxx * zxx
            GA[i, j] = gav * s + g_s * sp + gaxx * zx * zx * spp
            GA[n + i, j] = gax * s + 2.0 * gaxx * sp * zx
            GA[2 * n + i, j] = gat * s
            GA[3 * n + i, j] = gaxx * s


def mlp_value(theta, sizes, X):
    theta = np.ascontiguousarray(theta, dtype=float)
    a = np.ascontiguousarray(X, dtype=float)
    offs = _offsets(sizes, theta.shape[0])
    cdef Py_ssize_t n = a.shape[0], last = len(offs) - 1
    for li, (w0, b0, n_in, n_out) in enumerate(offs):
        Z = np.empty((n, n_out))
        _gemm_abt(a, theta[w0:b0].reshape(n_out, n_in), Z)
        Z += theta[b0:b0 + n_out]
        if li < last:
            np.tanh(Z, out=Z)
        a = Z
    return a[:, 0].copy()


def mlp_forward(theta, sizes, X):
    theta = np.ascontiguousarray(theta, dtype=float)
    Xc = np.ascontiguousarray(X, dtype=float)
    offs = _offsets(sizes, theta.shape[0])
    cdef Py_ssize_t n = Xc.shape[0]
    cdef Py_ssize_t i
    A = np.zeros((4 * n, 2))
    A[:n] = Xc
    A[n:2 * n, 0] = 1.0
    A[2 * n:3 * n, 1] = 1.0
    cache = Cache()
    cache.n = n
    cache.inputs = []
    cache.zs = []
    for w0, b0, n_in, n_out in offs[:len(offs) - 1]:
        cache.inputs.append(A)
        Z = np.empty((4 * n, n_out))
        _gemm_abt(A, theta[w0:b0].reshape(n_out, n_in), Z)
        A = np.empty_like(Z)
        Z[:n] += theta[b0:b0 + n_out]
        np.tanh(Z[:n], out=A[:n])
        _tanh_channels(Z, A, n)
        cache.zs.append(Z)
    w0, b0, n_in, n_out = offs[len(offs) - 1]
    cache.inputs.append(A)
    out = np.empty((4 * n, 1))
    _gemm_abt(A, theta[w0:b0].reshape(n_out, n_in), out)
    cdef double bias = theta[b0]
    cdef double[:, ::1] ov = out
    for i in range(n):
        ov[i, 0] += bias
    flat = out[:, 0]
    cache.u = flat[:n]
    cache.ux = flat[n:2 * n]
    cache.ut = flat[2 * n:3 * n]
    cache.uxx = flat[3 * n:]
    return cache


def mlp_backward(theta, sizes, Cache cache, g_u, g_t, g_xx):
    theta = np.ascontiguousarray(theta, dtype=float)
    offs = _offsets(sizes, theta.shape[0])
    cdef Py_ssize_t n = cache.n
    cdef Py_ssize_t i, j, li
    grad = np.empty(theta.shape[0])
    cdef double[::1] gv = grad
    G = np.zeros((4 * n, 1))
    G[:n, 0] = g_u
    G[2 * n:3 * n, 0] = g_t
    G[3 * n:, 0] = g_xx
    cdef double[:, ::1] Gv
    cdef double acc
    for li in range(len(offs) - 1, -1, -1):
        w0, b0, n_in, n_out = offs[li]
        Gv = G
        _gemm_atb(Gv, cache.inputs[li], &gv[w0])
        for j in range(n_out):
            acc = 0.0
            for i in range(n):
                acc += Gv[i, j]
            gv[b0 + j] = acc
        if li == 0:
            break
        GA = np.empty((4 * n, n_in))
        _gemm_ab(Gv, theta[w0:b0].reshape(n_out, n_in), GA)
        _tanh_adjoint(GA, cache.inputs[li], cache.zs[li - 1], n)
        G = GA
    return grad


def thomas(lower, diag, upper, rhs):
    cdef const double[::1] lo = np.ascontiguousarray(lower, dtype=float)
    cdef const double[::1] di = np.ascontiguousarray(diag, dtype=float)
    cdef const double[::1] up = np.ascontiguousarray(upper, dtype=float)
    cdef const double[::1] r = np.ascontiguousarray(rhs, dtype=float)
    cdef Py_ssize_t n = di.shape[0]
    cdef Py_ssize_t i
    cdef double beta
    c_arr = np.zeros(n)
    x_arr = np.empty(n)
    cdef double[::1] c = c_arr
    cdef double[::1] x = x_arr
    beta = di[0]
    if beta == 0.0:
        raise ZeroDivisionError("singular tridiagonal system")
    if n > 1:
        c[0] = up[0] / beta
    x[0] = r[0] / beta
    for i in range(1, n):
        beta = di[i] - lo[i - 1] * c[i - 1]
        if beta == 0.0:
            raise ZeroDivisionError("singular tridiagonal system")
        if i < n - 1:
            c[i] = up[i] / beta
        x[i] = (r[i] - lo[i - 1] * x[i - 1]) / beta
    for i in range(n - 2, -1, -1):
        x[i] = x[i] - c[i] * x[i + 1]
    return x_arr
