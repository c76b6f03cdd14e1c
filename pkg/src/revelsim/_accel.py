"""Array kernels behind the stream engine.

The expansion kernels (inductive address generation, const-pattern
expansion, reuse schedules) are the numeric hot loops of the simulator:
every issued stream and every randomized property test runs through them.
They are compiled with numba when available; set REVEL_SIM_BACKEND=numpy
to force the pure-numpy path (same semantics, used as the benchmark
baseline and as the fallback when numba is not installed).

All stretch/reuse coefficients arrive as raw 8.8 fixed-point ints
(value * 256). Trip counts realize as ceil(raw / 256); a negative realized
bound is a pattern-domain error, reported by returning a negative count so
callers can raise with context (numba nopython functions do not raise
rich errors).
"""

from __future__ import annotations

import os

import numpy as np

_SCALE = 256

_backend_env = os.environ.get("REVEL_SIM_BACKEND", "").strip().lower()
if _backend_env in ("numpy", "python", "purepy"):
    HAS_NUMBA = False
elif _backend_env in ("", "numba"):
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False
else:
    raise RuntimeError(f"unknown REVEL_SIM_BACKEND {_backend_env!r}")

BACKEND = "numba" if HAS_NUMBA else "numpy"


def _trip_counts_np(nj: int, ni_raw: int, sji_raw: int):
    """Realized inner trip counts for j = 0..nj-1, or None on domain error."""
    js = np.arange(nj, dtype=np.int64)
    bounds = ni_raw + js * sji_raw
    if nj and bounds.min() < 0:
        return None
    return (bounds + _SCALE - 1) >> 8


def _gen_addresses_np(base: int, cj: int, ci: int, nj: int, ni_raw: int, sji_raw: int):
    counts = _trip_counts_np(nj, ni_raw, sji_raw)
    if counts is None:
        return None
    total = int(counts.sum())
    js = np.arange(nj, dtype=np.int64)
    j_idx = np.repeat(js, counts)
    starts = np.zeros(nj, dtype=np.int64)
    if nj > 1:
        starts[1:] = np.cumsum(counts)[:-1]
    i_idx = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
    addrs = base + j_idx * cj + i_idx * ci
    run_id = j_idx
    last_i = np.zeros(total, dtype=np.bool_)
    ends = np.cumsum(counts) - 1
    last_i[ends[counts > 0]] = True
    return addrs, j_idx, i_idx, last_i, run_id, counts


def _expand_const_np(v1: float, v2: float, nj: int, ni_raw: int, sji_raw: int):
    counts = _trip_counts_np(nj, ni_raw, sji_raw)
    if counts is None:
        return None
    total = int((counts + 1).sum())
    out = np.full(total, v1, dtype=np.float64)
    ends = np.cumsum(counts + 1) - 1
    out[ends] = v2
    return out


def _reuse_schedule_np(nc_raw: int, sc_raw: int, count: int):
    ks = np.arange(count, dtype=np.int64)
    targets = nc_raw + ks * sc_raw
    if count and targets.min() <= 0:
        return None
    return (targets + _SCALE - 1) >> 8


if HAS_NUMBA:

    @njit(cache=True)
    def _gen_addresses_jit(base, cj, ci, nj, ni_raw, sji_raw):  # pragma: no cover
        counts = np.empty(nj, dtype=np.int64)
        total = 0
        for j in range(nj):
            bound = ni_raw + j * sji_raw
            if bound < 0:
                return (
                    np.empty(0, np.int64),
                    np.empty(0, np.int64),
                    np.empty(0, np.int64),
                    np.empty(0, np.bool_),
                    np.empty(0, np.int64),
                    counts,
                    -1,
                )
            c = (bound + _SCALE - 1) >> 8
            counts[j] = c
            total += c
        addrs = np.empty(total, np.int64)
        j_idx = np.empty(total, np.int64)
        i_idx = np.empty(total, np.int64)
        last_i = np.zeros(total, np.bool_)
        run_id = np.empty(total, np.int64)
        k = 0
        for j in range(nj):
            rowbase = base + j * cj
            c = counts[j]
            for i in range(c):
                addrs[k] = rowbase + i * ci
                j_idx[k] = j
                i_idx[k] = i
                run_id[k] = j
                k += 1
            if c > 0:
                last_i[k - 1] = True
        return addrs, j_idx, i_idx, last_i, run_id, counts, 0

    @njit(cache=True)
    def _expand_const_jit(v1, v2, nj, ni_raw, sji_raw):  # pragma: no cover
        total = 0
        for j in range(nj):
            bound = ni_raw + j * sji_raw
            if bound < 0:
                return np.empty(0, np.float64), -1
            total += ((bound + _SCALE - 1) >> 8) + 1
        out = np.empty(total, np.float64)
        k = 0
        for j in range(nj):
            bound = ni_raw + j * sji_raw
            c = (bound + _SCALE - 1) >> 8
            for _ in range(c):
                out[k] = v1
                k += 1
            out[k] = v2
            k += 1
        return out, 0

    @njit(cache=True)
    def _reuse_schedule_jit(nc_raw, sc_raw, count):  # pragma: no cover
        reads = np.empty(count, np.int64)
        for k in range(count):
            target = nc_raw + k * sc_raw
            if target <= 0:
                return reads, -1
            reads[k] = (target + _SCALE - 1) >> 8
        return reads, 0


class PatternDomainError(ValueError):
    """A realized trip count or reuse target left its legal domain."""


def gen_address_arrays(base, cj, ci, nj, ni_raw, sji_raw):
    """Expand a (possibly inductive) 2-D pattern into flat index arrays.

    Returns (addrs, j_idx, i_idx, last_i, run_id, counts). 1-D patterns are
    the nj=1 case with ni as the run; 0-D degenerates to a single element.
    """
    if HAS_NUMBA:
        out = _gen_addresses_jit(
            np.int64(base), np.int64(cj), np.int64(ci), np.int64(nj),
            np.int64(ni_raw), np.int64(sji_raw),
        )
        if out[6] < 0:
            raise PatternDomainError(
                f"negative realized trip count in pattern (ni={ni_raw / 256}, sji={sji_raw / 256})"
            )
        return out[:6]
    out = _gen_addresses_np(base, cj, ci, nj, ni_raw, sji_raw)
    if out is None:
        raise PatternDomainError(
            f"negative realized trip count in pattern (ni={ni_raw / 256}, sji={sji_raw / 256})"
        )
    return out


def expand_const_array(v1, v2, nj, ni_raw, sji_raw):
    """Expand a Const (val1, val2) pattern into a float64 array."""
    if HAS_NUMBA:
        out, err = _expand_const_jit(
            float(v1), float(v2), np.int64(nj), np.int64(ni_raw), np.int64(sji_raw)
        )
        if err < 0:
            raise PatternDomainError("negative realized count in const pattern")
        return out
    out = _expand_const_np(float(v1), float(v2), nj, ni_raw, sji_raw)
    if out is None:
        raise PatternDomainError("negative realized count in const pattern")
    return out


def reuse_schedule_array(nc_raw, sc_raw, count):
    """Per-element read counts before pop: ceil(nc + k*sc), exact fixed point."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if HAS_NUMBA:
        reads, err = _reuse_schedule_jit(np.int64(nc_raw), np.int64(sc_raw), np.int64(count))
        if err < 0:
            raise PatternDomainError("reuse schedule would require <1 read for some element")
        return reads
    reads = _reuse_schedule_np(nc_raw, sc_raw, count)
    if reads is None:
        raise PatternDomainError("reuse schedule would require <1 read for some element")
    return reads
