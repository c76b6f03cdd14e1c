"""Centro-symmetric FIR: y[i] = sum_t h[t] * x[i+t] with h[t] == h[m-1-t].

Symmetry halves the multiplies: each pass t < m/2 adds
h[t] * (x[i+t] + x[i+m-1-t]) into the output array, so the kernel is m/2
sweeps of an elementwise multiply-accumulate over contiguous streams; the
tap value is a one-word load latched by port reuse for the whole pass.
Throughput mode splits the signal across all eight lanes with lane-indexed
staging (each chunk overlaps its neighbor by m-1 samples).
"""

from __future__ import annotations

import numpy as np

from .common import (DfgBuilder, KernelBuild, barrier, canon_variant, config,
                     local_ld, local_st, pat1, pat2, reuse, shared_ld,
                     shared_st, slots_of, wait)
from .oracles import centro_fir_ref

WIDTH = 4


def build_dfg():
    b = DfgBuilder("fir_w4")
    x1 = b.inport("Px1", WIDTH)
    x2 = b.inport("Px2", WIDTH)
    yin = b.inport("Pyin", WIDTH)
    h = b.inport("Ph", 1)
    b.outport("Py", WIDTH)
    adds = b.vec_binop("add", b.lanes(x1, WIDTH), b.lanes(x2, WIDTH))
    muls = b.vec_binop("mul", adds, [h] * WIDTH)
    outs = b.vec_binop("add", b.lanes(yin, WIDTH), muls)
    b.connect_out(outs, "Py")
    return b.build()


def gen_input(n, m, seed=0):
    rng = np.random.default_rng(0xF17 + seed)
    x = rng.standard_normal(n)
    half = rng.standard_normal(m // 2)
    h = np.concatenate([half, half[::-1]])
    return x, h


def build(n=32, variant="full", lanes=1, m=None, seed=0) -> KernelBuild:
    canon_variant(variant)  # non-FGOP kernel: one program serves all variants
    if m is None:
        m = 8 if n >= 16 else 4
    if m % 2 or m > n:
        raise ValueError("tap count must be even and <= n")
    x, h = gen_input(n, m, seed)

    chunk = -(-n // lanes)
    chunk = -(-chunk // WIDTH) * WIDTH
    n_pad = chunk * lanes
    dfg = build_dfg()
    s = slots_of(dfg)

    # shared: x (padded, + m-1 tail zeros), h, y (padded)
    sx = 0
    sh = n_pad + m
    sy = sh + m
    shared = np.zeros(sy + n_pad)
    shared[:n] = x
    shared[sh: sh + m] = h
    mask = (1 << lanes) - 1

    lx_, lh, ly = 0, chunk + m, chunk + 2 * m
    cmds = [config("fir_w4", mask)]
    cmds.append(shared_ld(sx, lx_, pat2(cj=chunk, nj=1, ci=1, ni=chunk + m - 1),
                          mask, lx=True))
    cmds.append(shared_ld(sh, lh, pat1(1, m), mask))
    cmds.append(barrier(mask, "st"))
    beats = chunk // WIDTH
    for t in range(m // 2):
        cmds.append(local_ld(lx_ + t, s["Px1"], pat1(1, chunk), mask))
        cmds.append(local_ld(lx_ + m - 1 - t, s["Px2"], pat1(1, chunk), mask))
        cmds.append(local_ld(ly, s["Pyin"], pat1(1, chunk), mask))
        cmds.append(local_ld(lh + t, s["Ph"], pat1(1, 1), mask, ruse=reuse(nc=beats)))
        cmds.append(local_st(s["Py"], ly, pat1(1, chunk), mask))
        cmds.append(barrier(mask, "st"))
    cmds.append(shared_st(ly, sy, pat2(cj=chunk, nj=1, ci=1, ni=chunk), mask, lx=True))
    cmds.append(wait(mask))

    oracle = centro_fir_ref(x, h)

    def extract(res):
        return res.shared_mem[sy: sy + n - m + 1].copy()

    return KernelBuild(
        name="fir", program=cmds, dfgs={"fir_w4": dfg}, lanes=lanes,
        init_shared=shared, extract=extract, oracle_out=oracle,
        tolerance=1e-12, counts={"n": n, "m": m},
    )
