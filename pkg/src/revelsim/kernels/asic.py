"""Ideal-ASIC analytical cycle models.

Each formula assumes perfect pipelining with functional-unit counts and
latencies equal to one lane's, limited only by the algorithmic critical
path. Exact integer evaluation; transcribed verbatim. The QR and SVD
formulas are reference curves, not acceptance targets.
"""

from __future__ import annotations

import math


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def asic_cycles(name: str, dims) -> int:
    """Evaluate the analytical model `name` at problem dims.

    dims: mm -> (n, m, p); fft/cholesky/solver/qr -> (n,) or n;
    fir -> (n, m); svd -> (n, m).
    """
    key = name.lower().replace("-", "").replace("_", "")
    if isinstance(dims, int):
        dims = (dims,)
    if key in ("mm", "gemm"):
        n, m, p = dims
        return _ceil_div(n * m * p, 8)
    if key == "fft":
        (n,) = dims
        if n & (n - 1) or n <= 0:
            raise ValueError("fft size must be a power of two")
        return (n // 8) * int(math.log2(n))
    if key in ("cholesky", "chol"):
        (n,) = dims
        return sum(max(_ceil_div(i * i, 4), 24) for i in range(1, n))
    if key == "solver":
        (n,) = dims
        return 2 * sum(max(_ceil_div(i, 4), 14) for i in range(n))
    if key in ("fir", "centrofir"):
        n, m = dims
        return _ceil_div(n - m + 1, 4)
    if key == "qr":
        (n,) = dims
        return 40 * n + n * n + sum(i + i * n for i in range(1, n + 1))
    if key == "svd":
        n, m = dims
        return 48 * m + 2 * asic_cycles("qr", n) + _ceil_div(n ** 3, 4)
    raise KeyError(f"unknown ASIC model {name!r}")
