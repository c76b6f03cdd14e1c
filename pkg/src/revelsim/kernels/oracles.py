"""Pure double-precision reference implementations of the workload kernels.

Straightforward textbook algorithms; these are the correctness oracles the
simulated programs are checked against.
"""

from __future__ import annotations

import numpy as np


def gemm_ref(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return a @ b


def cholesky_ref(a) -> np.ndarray:
    """Lower-triangular L with L @ L.T == A; raises on non-SPD input."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("cholesky needs a square matrix")
    l = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - np.dot(l[j, :j], l[j, :j])
        if d <= 0.0:
            raise ValueError("matrix is not symmetric positive definite")
        l[j, j] = np.sqrt(d)
        for i in range(j + 1, n):
            l[i, j] = (a[i, j] - np.dot(l[i, :j], l[j, :j])) / l[j, j]
    return l


def solver_ref(l, b) -> np.ndarray:
    """Forward substitution for lower-triangular l."""
    l = np.asarray(l, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = l.shape[0]
    x = np.zeros(n)
    for j in range(n):
        if l[j, j] == 0.0:
            raise ValueError("singular triangular matrix")
        x[j] = (b[j] - np.dot(l[j, :j], x[:j])) / l[j, j]
    return x


def qr_r_ref(a) -> np.ndarray:
    """R factor via Householder reflections (Q not accumulated).

    Diagonal entries are left with the signs the reflections produce, the
    same convention the simulated kernel uses.
    """
    r = np.array(a, dtype=np.float64, copy=True)
    n, m = r.shape
    for k in range(min(n - 1, m)):
        x = r[k:, k]
        norm = np.sqrt(np.dot(x, x))
        if norm == 0.0:
            continue
        alpha = -norm if x[0] >= 0.0 else norm
        v = x.copy()
        v[0] -= alpha
        vtv = np.dot(v, v)
        if vtv == 0.0:
            continue
        beta = 2.0 / vtv
        for j in range(k, m):
            s = np.dot(v, r[k:, j])
            r[k:, j] -= beta * s * v
        r[k, k] = alpha
        r[k + 1:, k] = 0.0
    return r


def centro_fir_ref(x, h) -> np.ndarray:
    """Centro-symmetric FIR: h[t] == h[m-1-t]; y[i] = sum_t h[t] * x[i+t]."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    n, m = len(x), len(h)
    y = np.zeros(n - m + 1)
    for i in range(n - m + 1):
        y[i] = np.dot(h, x[i:i + m])
    return y


def fft_ref(x) -> np.ndarray:
    return np.fft.fft(np.asarray(x, dtype=np.complex128))


def bit_reverse_permutation(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    out = np.zeros(n, dtype=np.int64)
    for i in range(n):
        r = 0
        v = i
        for _ in range(bits):
            r = (r << 1) | (v & 1)
            v >>= 1
        out[i] = r
    return out


def make_spd(n: int, rng: np.random.Generator) -> np.ndarray:
    m = rng.standard_normal((n, n))
    return m @ m.T + n * np.eye(n)


def make_lower(n: int, rng: np.random.Generator) -> np.ndarray:
    l = np.tril(rng.standard_normal((n, n)))
    l[np.diag_indices(n)] = np.abs(l[np.diag_indices(n)]) + 1.0 + np.arange(n) * 0.01
    return l
