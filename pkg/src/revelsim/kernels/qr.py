"""QR decomposition, R factor only, via Householder reflections.

Two lanes, column-major A mirrored on both (the update flow streams its
results back across the XFER bus so both copies stay coherent):

  lane 0: dot flow (vectorized multiply + adder tree + accumulator) used
          first for the column norm, then for every v^T A_j product;
          head flow (non-critical: sqrt/compare/select) producing the
          pivot alpha, v0, and the scale denominator d = sigma - xk*alpha
          (the textbook identity v^T v / 2, so beta*s == s/d);
          a wire flow for the v-tail copy and incoming mirror updates.
  lane 1: update flow A_j -= t_j * v (vectorized), scale flow t_j = s_j/d
          with d latched by port reuse, and the mirror wire.

v overwrites the dead pivot slot so [v0; x-tail] is one contiguous slice;
the R diagonal (alpha values) lands in lane 1's dead row 0, one step
delayed, because every live word of an n=32 matrix is spoken for.
"""

from __future__ import annotations

import numpy as np

from .common import (DfgBuilder, KernelBuild, barrier, canon_variant, config,
                     const, local_ld, local_st, pat1, pat2, reuse, shared_ld,
                     slots_of, wait, xfer)
from .oracles import qr_r_ref

WIDTH = 4


def build_dfg_lane0():
    b = DfgBuilder("qr_lane0")
    dctl = b.inport("Pdctl", 1, df=0)
    hs = b.inport("Phs", 1, df=1)
    hxk = b.inport("Phxk", 1, df=1)
    da = b.inport("Pda", WIDTH, df=0)
    db = b.inport("Pdb", WIDTH, df=0)
    b.inport("Pw0", WIDTH, df=2)
    ds = b.outport("Pds", 1, df=0)
    ha = b.outport("Pha", 1, df=1)
    hv = b.outport("Phv", 1, df=1)
    hv2 = b.outport("Phv2", 1, df=1)
    hd = b.outport("Phd", 1, df=1)
    b.outport("Pw0o", WIDTH, df=2)
    # dot: elementwise mul, adder tree, accumulator gated by the const flow
    muls = b.vec_binop("mul", b.lanes(da, WIDTH), b.lanes(db, WIDTH), df=0)
    a0 = b.node("add", df=0); b.edge(muls[0], a0, 0); b.edge(muls[1], a0, 1)
    a1 = b.node("add", df=0); b.edge(muls[2], a1, 0); b.edge(muls[3], a1, 1)
    a2 = b.node("add", df=0); b.edge(a0, a2, 0); b.edge(a1, a2, 1)
    acc = b.node("acc", df=0)
    b.edge(a2, acc, 0)
    b.edge(dctl, acc, 1)
    b.edge(acc, "Pds.0", 0)
    # head: alpha = -sign(xk)*sqrt(sigma); v0 = xk - alpha; d = sigma - xk*alpha
    region = "noncritical"
    norm = b.node("sqrt", df=1, region=region); b.edge(hs, norm, 0)
    zero = b.node("sub", df=1, region=region); b.edge(hxk, zero, 0); b.edge(hxk, zero, 1)
    neg = b.node("cmp", df=1, region=region); b.edge(hxk, neg, 0); b.edge(zero, neg, 1)
    negnorm = b.node("sub", df=1, region=region); b.edge(zero, negnorm, 0); b.edge(norm, negnorm, 1)
    alpha = b.node("select", df=1, region=region)
    b.edge(neg, alpha, 0); b.edge(norm, alpha, 1); b.edge(negnorm, alpha, 2)
    v0 = b.node("sub", df=1, region=region); b.edge(hxk, v0, 0); b.edge(alpha, v0, 1)
    xa = b.node("mul", df=1, region=region); b.edge(hxk, xa, 0); b.edge(alpha, xa, 1)
    d = b.node("sub", df=1, region=region); b.edge(hs, d, 0); b.edge(xa, d, 1)
    b.edge(alpha, "Pha.0", 0)
    b.edge(v0, "Phv.0", 0)
    b.edge(v0, "Phv2.0", 0)
    b.edge(d, "Phd.0", 0)
    for l in range(WIDTH):
        b.edge(f"Pw0.{l}", f"Pw0o.{l}", 0)
    return b.build()


def build_dfg_lane1():
    b = DfgBuilder("qr_lane1")
    ut = b.inport("Put", 1, df=0)
    ss = b.inport("Pss", 1, df=1)
    sd = b.inport("Psd", 1, df=1)
    ua = b.inport("Pua", WIDTH, df=0)
    uv = b.inport("Puv", WIDTH, df=0)
    b.inport("Pw1", 1, df=2)  # scalar: carries v0 then the parked alpha
    st_ = b.outport("Pst", 1, df=1)
    b.outport("Puo", WIDTH, df=0)
    b.outport("Pux", WIDTH, df=0)
    b.outport("Pw1o", 1, df=2)
    muls = b.vec_binop("mul", b.lanes(uv, WIDTH), [ut] * WIDTH, df=0)
    subs = b.vec_binop("sub", b.lanes(ua, WIDTH), muls, df=0)
    for l in range(WIDTH):
        b.edge(subs[l], f"Puo.{l}", 0)
        b.edge(subs[l], f"Pux.{l}", 0)
    t = b.node("div", df=1, region="noncritical")
    b.edge(ss, t, 0)
    b.edge(sd, t, 1)
    b.edge(t, "Pst.0", 0)
    b.edge("Pw1.0", "Pw1o.0", 0)
    return b.build()


def gen_input(n, seed=0):
    rng = np.random.default_rng(0x06A2 + seed)
    return rng.standard_normal((n, n))


def build(n=16, variant="full", lanes=2, seed=0) -> KernelBuild:
    canon_variant(variant)  # QR ships as the full FGOP program
    a = gen_input(n, seed)
    img = np.zeros(n * n)
    for j in range(n):
        img[j * n: (j + 1) * n] = a[:, j]
    g0, g1 = build_dfg_lane0(), build_dfg_lane1()
    s0, s1 = slots_of(g0), slots_of(g1)
    m0, m1, both = 0b01, 0b10, 0b11

    def colp(k):
        return k * (n + 1)

    cmds = [config("qr_lane0", m0), config("qr_lane1", m1)]
    cmds.append(shared_ld(0, 0, pat1(1, n * n), both))
    for k in range(n - 1):
        cnt = n - k           # live slice length [k..n)
        cols = n - 1 - k      # trailing columns
        beats = -(-cnt // WIDTH)
        # ---- lane 0: norm, head, v staging
        cmds.append(barrier(m0, "st"))
        # the "all" barrier also waits the previous step's v-replay loads,
        # whose storage the parked alpha overwrites
        cmds.append(barrier(m1, "all"))
        if k > 0:
            # previous step's alpha lands in a dead lane-1 slot: row 0 of its
            # column, except alpha(0), whose row-0 slot is the live pivot
            cmds.append(local_st(s1["Pw1o"], (k - 1) * n if k > 1 else 1,
                                 pat1(1, 1), m1))
        cmds.append(const(0, 1, pat2(cj=0, nj=cols + 1, ci=1, ni=beats - 1),
                          s0["Pdctl"], m0))
        cmds.append(local_ld(colp(k), s0["Pda"], pat1(1, cnt), m0))
        cmds.append(local_ld(colp(k), s0["Pdb"], pat1(1, cnt), m0))
        cmds.append(xfer(s0["Pds"], s0["Phs"], 1, m0))
        cmds.append(local_ld(colp(k), s0["Phxk"], pat1(1, 1), m0))
        cmds.append(local_st(s0["Phv"], colp(k), pat1(1, 1), m0))
        # v0 first, then alpha: the wire consumes v0 this step and parks
        # alpha for the next step's diagonal store
        cmds.append(xfer(s0["Phv2"], s1["Pw1"], 1, m0, dlane=1))
        cmds.append(xfer(s0["Pha"], s1["Pw1"], 1, m0, dlane=1))
        cmds.append(xfer(s0["Phd"], s1["Psd"], 1, m0, dlane=1,
                         ruse=reuse(nc=max(cols, 1))))
        # v tail is already in place below the pivot; v0 overwrote the pivot,
        # so [v0; tail] is the contiguous slice the replays read
        cmds.append(local_st(s1["Pw1o"], colp(k), pat1(1, 1), m1))
        cmds.append(barrier(both, "st"))
        if cols == 0:
            break
        # ---- dot products v^T A_j and the update, pipelined per column
        cmds.append(local_ld(colp(k), s0["Pda"],
                             pat2(cj=0, nj=cols, ci=1, ni=cnt), m0))
        cmds.append(local_ld(k * n + k + n, s0["Pdb"],
                             pat2(cj=n, nj=cols, ci=1, ni=cnt), m0))
        cmds.append(xfer(s0["Pds"], s1["Pss"], cols, m0, dlane=1))
        cmds.append(xfer(s1["Pst"], s1["Put"], cols, m1, ruse=reuse(nc=beats)))
        cmds.append(local_ld(colp(k), s1["Puv"],
                             pat2(cj=0, nj=cols, ci=1, ni=cnt), m1))
        cmds.append(local_ld(k * n + k + n, s1["Pua"],
                             pat2(cj=n, nj=cols, ci=1, ni=cnt), m1))
        upd = pat2(cj=n, nj=cols, ci=1, ni=cnt)
        cmds.append(local_st(s1["Puo"], k * n + k + n, upd, m1))
        cmds.append(xfer(s1["Pux"], s0["Pw0"], cols * beats, m1, dlane=-1))
        cmds.append(local_st(s0["Pw0o"], k * n + k + n, upd, m0))
    cmds.append(barrier(both, "all"))
    cmds.append(local_st(s1["Pw1o"], (n - 2) * n if n > 2 else 1, pat1(1, 1), m1))
    cmds.append(barrier(both, "st"))
    cmds.append(wait(both))

    oracle = np.triu(qr_r_ref(a))

    def extract(res):
        mem0, mem1 = res.local_mems[0], res.local_mems[1]
        r = np.zeros((n, n))
        for j in range(n):
            r[: j + 1, j] = mem0[j * n: j * n + j + 1]
        r[0, 0] = mem1[1]
        for k in range(1, n - 1):
            r[k, k] = mem1[k * n]
        r[n - 1, n - 1] = mem0[(n - 1) * n + n - 1]
        return r

    return KernelBuild(
        name="qr", program=cmds, dfgs={"qr_lane0": g0, "qr_lane1": g1},
        lanes=2, init_shared=img, extract=extract, oracle_out=oracle,
        tolerance=1e-8, counts={"n": n},
    )
