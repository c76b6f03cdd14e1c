"""GEMM workload: C[n x 64] = A[n x 16] @ B[16 x 64].

Vectorized 8 wide over the columns of C; the reduction over k runs through
per-lane accumulators gated by a const control stream. In throughput mode
all eight lanes run the same program on their own problem via lane-indexed
broadcast; the unicast flavor re-issues every command per lane and exists
for the control-amortization comparison.
"""

from __future__ import annotations

import numpy as np

from .common import (DfgBuilder, KernelBuild, barrier, canon_variant, config,
                     const, local_ld, local_st, pat1, pat2, shared_ld,
                     shared_st, slots_of, wait)
from .oracles import gemm_ref

M, P = 16, 64
WIDTH = 8


def build_dfg():
    b = DfgBuilder("gemm_w8")
    pa = b.inport("Pa", 1)
    pb = b.inport("Pb", WIDTH)
    pk = b.inport("Pk", 1)
    po = b.outport("Po", WIDTH)
    muls = b.vec_binop("mul", [pa] * WIDTH, b.lanes(pb, WIDTH))
    accs = b.vec_binop("acc", muls, [pk] * WIDTH)
    b.connect_out(accs, po)
    return b.build()


def gen_input(n, lanes, seed=0):
    rng = np.random.default_rng(0xD00D + seed)
    a = rng.standard_normal((lanes, n, M))
    bm = rng.standard_normal((lanes, M, P))
    return a, bm


def build(n=12, variant="full", lanes=1, seed=0, unicast=False) -> KernelBuild:
    canon_variant(variant)  # all variants share the single RR+reuse program
    if lanes not in (1, 8):
        raise ValueError("gemm supports 1 or 8 lanes")
    a, bm = gen_input(n, lanes, seed)
    dfg = build_dfg()
    s = slots_of(dfg)

    a_words, b_words, c_words = n * M, M * P, n * P
    s_a, s_b = 0, lanes * a_words
    s_c = s_b + lanes * b_words
    if s_c + lanes * c_words > 16384:
        raise ValueError("problem does not fit the shared scratchpad")
    shared = np.zeros(s_c + lanes * c_words)
    for l in range(lanes):
        shared[s_a + l * a_words: s_a + (l + 1) * a_words] = a[l].ravel()
        shared[s_b + l * b_words: s_b + (l + 1) * b_words] = bm[l].ravel()

    l_a, l_b, l_c = 0, n * M, n * M + WIDTH * M

    mask = (1 << lanes) - 1
    cmds = [config("gemm_w8", mask)]
    cmds.append(shared_ld(s_a, l_a, pat1(1, a_words), mask, lx=True))
    for jt in range(P // WIDTH):
        cmds.append(shared_ld(s_b + jt * WIDTH, l_b,
                              pat2(cj=P, nj=M, ci=1, ni=WIDTH), mask, lx=True))
        # waits the B staging store and, after the first tile, the previous
        # C write-back that reads the tile buffer being overwritten next
        cmds.append(barrier(mask, "all"))
        cmds.append(local_ld(l_a, s["Pa"], pat2(cj=M, nj=n, ci=1, ni=M), mask))
        cmds.append(local_ld(l_b, s["Pb"], pat2(cj=0, nj=n, ci=1, ni=M * WIDTH), mask))
        cmds.append(const(0, 1, pat2(cj=0, nj=n, ci=1, ni=M - 1), s["Pk"], mask))
        cmds.append(local_st(s["Po"], l_c, pat2(cj=WIDTH, nj=n, ci=1, ni=WIDTH), mask))
        cmds.append(barrier(mask, "st"))
        cmds.append(shared_st(l_c, s_c + jt * WIDTH,
                              pat2(cj=P, nj=n, ci=1, ni=WIDTH), mask, lx=True))
    cmds.append(wait(mask))

    if unicast:
        expanded = []
        for cmd in cmds:
            for l in range(lanes):
                from dataclasses import replace
                c = cmd
                if cmd.lane_indexed and cmd.pattern is not None:
                    off = l * cmd.pattern.footprint()
                    c = replace(cmd, shared_addr=cmd.shared_addr + off,
                                lane_indexed=False)
                expanded.append(replace(c, lane_mask=1 << l))
        cmds = expanded

    oracle = np.stack([gemm_ref(a[l], bm[l]) for l in range(lanes)])

    def extract(res):
        out = np.zeros((lanes, n, P))
        for l in range(lanes):
            out[l] = res.shared_mem[s_c + l * c_words: s_c + (l + 1) * c_words].reshape(n, P)
        return out

    return KernelBuild(
        name="gemm", program=cmds, dfgs={"gemm_w8": dfg}, lanes=lanes,
        init_shared=shared, extract=extract, oracle_out=oracle,
        tolerance=1e-12,
        counts={"dims": (n, M, P)},
    )
