"""Pure, cycle-agnostic stream expansion.

Everything here is the semantic ground truth the timed lane model is tested
against: address generation for (inductive) affine patterns, const-pattern
expansion, reuse pop schedules, and vector chunking with implicit masking.
The flat-array versions delegate to the accelerated kernels in _accel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import (
    PatternDomainError,
    expand_const_array,
    gen_address_arrays,
    reuse_schedule_array,
)
from .fixedpoint import Fx, fx_ceil
from .isa import StreamPattern

__all__ = [
    "AddressElement",
    "VectorBeat",
    "PatternDomainError",
    "gen_addresses",
    "gen_address_table",
    "expand_const",
    "reuse_pop_schedule",
    "vectorize_with_mask",
    "chunk_runs",
]


@dataclass(frozen=True)
class AddressElement:
    """One generated address with its iteration coordinates."""

    addr: int
    iter_coords: tuple[int, int]  # (j, i)
    last_in_dim: tuple[bool, bool]  # (last i of this run, last j of pattern)


@dataclass(frozen=True)
class VectorBeat:
    """One vector's worth of lanes plus a per-lane validity predicate.

    Invalid lanes carry zeros; at least one lane is valid.
    """

    lane_values: tuple
    predicate: tuple[bool, ...]

    @property
    def width(self) -> int:
        return len(self.lane_values)

    def valid_values(self):
        return [v for v, p in zip(self.lane_values, self.predicate) if p]


def gen_address_table(p: StreamPattern):
    """Flat numpy arrays (addrs, j_idx, i_idx, last_i, run_id, run_counts).

    For 3-D analysis patterns the outer k dimension is unrolled on top of
    the 2-D kernel; executable commands never reach that path.
    """
    if p.dims <= 2:
        nj = p.nj if p.dims == 2 else 1
        cj = p.cj if p.dims == 2 else 0
        sji = p.sji.raw if p.dims == 2 else 0
        return gen_address_arrays(p.base, cj, p.ci, nj, p.ni * 256, sji)
    # dims == 3: unroll k, reusing the 2-D kernel per slice.
    parts = [[], [], [], [], [], []]
    run_off = 0
    for k in range(p.nk):
        nj_raw = p.nj * 256 + k * p.skj.raw
        if nj_raw < 0:
            raise PatternDomainError("negative realized trip count for dim j")
        nj_real = fx_ceil(nj_raw)
        ni_raw = p.ni * 256 + k * p.ski.raw
        out = gen_address_arrays(p.base + k * p.ck, p.cj, p.ci, nj_real, ni_raw, p.sji.raw)
        for idx in (0, 1, 2, 3, 5):
            parts[idx].append(out[idx])
        parts[4].append(out[4] + run_off)
        run_off += nj_real
    dtypes = (np.int64, np.int64, np.int64, np.bool_, np.int64, np.int64)
    return tuple(
        np.concatenate(ps) if ps else np.empty(0, dt)
        for ps, dt in zip(parts, dtypes)
    )


def gen_addresses(p: StreamPattern) -> list[AddressElement]:
    """Expand a pattern into AddressElements in lexicographic order."""
    addrs, j_idx, i_idx, last_i, _run, counts = gen_address_table(p)
    nj = len(counts)
    out = []
    for a, j, i, li in zip(addrs.tolist(), j_idx.tolist(), i_idx.tolist(), last_i.tolist()):
        out.append(AddressElement(a, (j, i), (bool(li), j == nj - 1)))
    return out


def expand_const(val1: float, val2: float, nj: int, ni: int, sji: Fx | float = 0.0):
    """Per outer iteration j: (ni + j*sji) copies of val1 then one val2."""
    sji = Fx.from_value(sji)
    return expand_const_array(val1, val2, nj, ni * 256, sji.raw)


def reuse_pop_schedule(reuse, element_count: int):
    """Per-element read counts before pop: ceil(nc + k*sc), exact 8.8 math.

    A fractional remainder still costs a full read, which is what halves the
    schedule for vectorized consumers (sc = -1/width style configs).
    """
    nc = reuse.nc if hasattr(reuse, "nc") else Fx.from_value(reuse)
    sc = reuse.sc if hasattr(reuse, "sc") else Fx.zero()
    return reuse_schedule_array(nc.raw, sc.raw, element_count)


def chunk_runs(run_lengths, vec_width: int):
    """Break inner runs into (beat_size, is_partial) chunks, never straddling runs."""
    beats = []
    for run in run_lengths:
        left = int(run)
        while left > 0:
            take = min(vec_width, left)
            beats.append(take)
            left -= take
    return beats


def vectorize_with_mask(p: StreamPattern, vec_width: int) -> list[VectorBeat]:
    """Chunk the pattern's inner runs into predicated beats of vec_width.

    Beats never straddle two inner runs; the final beat of a non-divisible
    run has predicate bits set only for the live lanes and zeros elsewhere.
    Lane values are the generated addresses.
    """
    if vec_width < 1:
        raise ValueError("vec_width must be >= 1")
    addrs, _j, _i, _li, run_id, _counts = gen_address_table(p)
    beats = []
    pos = 0
    total = len(addrs)
    addrs_l = addrs.tolist()
    run_l = run_id.tolist()
    while pos < total:
        rid = run_l[pos]
        end = pos
        while end < total and run_l[end] == rid and end - pos < vec_width:
            end += 1
        vals = addrs_l[pos:end]
        pad = vec_width - len(vals)
        beats.append(VectorBeat(
            lane_values=tuple(vals) + (0,) * pad,
            predicate=tuple([True] * len(vals) + [False] * pad),
        ))
        pos = end
    return beats
