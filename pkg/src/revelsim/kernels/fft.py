"""Radix-2 FFT, Stockham constant geometry (autosort), eight lanes.

Every stage reads a-operands X[i] and b-operands X[i+n/2] as contiguous
streams and writes interleaved sum/diff runs, so the access pattern never
needs bit reversal and the output lands in natural order. Stage t (run
length m = 2^t) uses twiddle W_n^{(i mod m) * l} for butterfly i, l = n/2m.

Data lives (re, im)-interleaved, n/8 complex atoms per lane, so one
4-wide beat carries two complex values and the whole butterfly needs four
input ports: a-pair, b-pair, twiddle pair, and the wire flow used for
half-block exchanges over the XFER buses. The three late stages
(m > n/16) also route their output runs to owner lanes through the wire.
"""

from __future__ import annotations

import numpy as np

from .common import (DfgBuilder, KernelBuild, barrier, canon_variant, config,
                     local_ld, local_st, pat1, pat2, shared_ld, shared_st,
                     slots_of, wait, xfer)
from .oracles import fft_ref

LANES = 8


def build_dfg():
    """Two butterflies wide; beats are [x(b0), x(b1)] of (re, im) pairs."""
    b = DfgBuilder("fft_bfly")
    b.inport("Pa", 4)
    b.inport("Pb", 4)
    b.inport("Pw", 4)
    b.inport("Pe", 4, df=1)
    b.outport("Ps", 4)
    b.outport("Pd", 4)
    b.outport("Peo", 4, df=1)
    for l in range(2):
        ar, ai = f"Pa.{2 * l}", f"Pa.{2 * l + 1}"
        br, bi = f"Pb.{2 * l}", f"Pb.{2 * l + 1}"
        wr, wi = f"Pw.{l}", f"Pw.{2 + l}"
        m1 = b.node("mul"); b.edge(wr, m1, 0); b.edge(br, m1, 1)
        m2 = b.node("mul"); b.edge(wi, m2, 0); b.edge(bi, m2, 1)
        tr = b.node("sub"); b.edge(m1, tr, 0); b.edge(m2, tr, 1)
        m3 = b.node("mul"); b.edge(wr, m3, 0); b.edge(bi, m3, 1)
        m4 = b.node("mul"); b.edge(wi, m4, 0); b.edge(br, m4, 1)
        ti = b.node("add"); b.edge(m3, ti, 0); b.edge(m4, ti, 1)
        sr = b.node("add"); b.edge(ar, sr, 0); b.edge(tr, sr, 1)
        si = b.node("add"); b.edge(ai, si, 0); b.edge(ti, si, 1)
        dr = b.node("sub"); b.edge(ar, dr, 0); b.edge(tr, dr, 1)
        di = b.node("sub"); b.edge(ai, di, 0); b.edge(ti, di, 1)
        b.edge(sr, f"Ps.{2 * l}", 0)
        b.edge(si, f"Ps.{2 * l + 1}", 0)
        b.edge(dr, f"Pd.{2 * l}", 0)
        b.edge(di, f"Pd.{2 * l + 1}", 0)
    for l in range(4):
        b.edge(f"Pe.{l}", f"Peo.{l}", 0)
    return b.build()


def gen_input(n, seed=0):
    rng = np.random.default_rng(0xFF7 + seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def _twiddles(n):
    """Per-stage packed twiddle beats [wr(b0), wr(b1), wi(b0), wi(b1)]."""
    stages = int(np.log2(n))
    bl = n // 2 // LANES
    out = np.zeros((stages, LANES, 2 * bl))
    for t in range(stages):
        m = 1 << t
        l = n >> (t + 1)
        for lane in range(LANES):
            for f in range(bl // 2):
                i0 = bl * lane + 2 * f
                for x, i in ((0, i0), (1, i0 + 1)):
                    w = np.exp(-2j * np.pi * ((i % m) * l) / n)
                    out[t, lane, 4 * f + x] = w.real
                    out[t, lane, 4 * f + 2 + x] = w.imag
    return out


def build(n=256, variant="full", lanes=LANES, seed=0) -> KernelBuild:
    canon_variant(variant)
    if n < 64 or n & (n - 1):
        raise ValueError("fft size must be a power of two >= 64")
    if lanes != LANES:
        raise ValueError("the fft program spans all 8 lanes")
    x = gen_input(n, seed)
    stages = int(np.log2(n))
    c = n // LANES          # complex atoms per lane block
    bl = c // 2             # butterflies per lane per stage
    dfg = build_dfg()
    s = slots_of(dfg)
    tw = _twiddles(n)

    sx = 0                  # interleaved (re, im), 2n words
    sy = 2 * n
    stw = 4 * n
    shared = np.zeros(stw + stages * n)
    shared[sx: sx + 2 * n: 2] = x.real
    shared[sx + 1: sx + 2 * n: 2] = x.imag
    for t in range(stages):
        shared[stw + t * n: stw + (t + 1) * n] = tw[t].ravel()

    # local: two ping-pong interleaved buffers (2c words each) + twiddles
    bufs = (0, 2 * c)
    ltw = 4 * c
    mask = 0xFF

    # atom homes: per lane, list of (local word addr, first atom, atom count).
    # Early stages keep the canonical block distribution; late-stage outputs
    # stay producer-local and the next exchange gathers from wherever atoms
    # live (outputs then only ever flow into terminal local stores, so the
    # wire/exchange path has no feedback cycle).
    homes = [[(bufs[0], c * lane, c)] for lane in range(LANES)]

    def find_atoms(atom0, count):
        """(producer lane, local word addr) for a bl-aligned atom run."""
        for lane in range(LANES):
            for base, a0, cnt in homes[lane]:
                if a0 <= atom0 and atom0 + count <= a0 + cnt:
                    return lane, base + 2 * (atom0 - a0)
        raise AssertionError(f"atoms {atom0}+{count} unmapped")

    cmds = [config("fft_bfly", mask)]
    cmds.append(shared_ld(sx, bufs[0], pat2(cj=2 * c, nj=1, ci=1, ni=2 * c),
                          mask, lx=True))
    cur = 0
    for t in range(stages):
        m = 1 << t
        dst = bufs[1 - cur]
        # full barrier: the previous stage's twiddle load may still be
        # draining through its port FIFO when the next table is staged
        cmds.append(barrier(mask, "all"))
        cmds.append(shared_ld(stw + t * n, ltw,
                              pat2(cj=2 * bl, nj=1, ci=1, ni=2 * bl), mask, lx=True))
        cmds.append(barrier(mask, "st"))
        # exchange: ship each consumer's a/b half-blocks from their producers
        pieces = []  # (producer, local, consumer, port)
        for dest in range(LANES):
            for port, atom0 in ((s["Pa"], bl * dest), (s["Pb"], n // 2 + bl * dest)):
                prod, local = find_atoms(atom0, bl)
                pieces.append((prod, local, dest, port))
        pieces.sort(key=lambda p: (p[0], p[2], p[3]))
        for prod, local, dest, port in pieces:
            cmds.append(local_ld(local, s["Pe"], pat1(1, 2 * bl), 1 << prod))
        for prod, local, dest, port in pieces:
            cmds.append(xfer(s["Peo"], port, bl // 2, 1 << prod,
                             dlane=(dest - prod) % LANES))
        cmds.append(local_ld(ltw, s["Pw"], pat1(1, 2 * bl), mask))
        if m <= bl:
            run = pat2(cj=4 * m, nj=bl // m, ci=1, ni=2 * m)
            cmds.append(local_st(s["Ps"], dst, run, mask))
            cmds.append(local_st(s["Pd"], dst + 2 * m, run, mask))
            homes = [[(dst, c * lane, c)] for lane in range(LANES)]
        else:
            # outputs stay on their producer; runs are bl-aligned
            cmds.append(local_st(s["Ps"], dst, pat1(1, 2 * bl), mask))
            cmds.append(local_st(s["Pd"], dst + 2 * bl, pat1(1, 2 * bl), mask))
            homes = []
            for lane in range(LANES):
                j = (bl * lane) // m
                homes.append([(dst, j * m + bl * lane, bl),
                              (dst + 2 * bl, j * m + m + bl * lane, bl)])
        cur = 1 - cur
    cmds.append(barrier(mask, "st"))
    for lane in range(LANES):
        for base, a0, cnt in homes[lane]:
            cmds.append(shared_st(base, sy + 2 * a0, pat1(1, 2 * cnt), 1 << lane))
    cmds.append(wait(mask))

    oracle = fft_ref(x)

    def extract(res):
        return res.shared_mem[sy: sy + 2 * n: 2] + 1j * res.shared_mem[sy + 1: sy + 2 * n: 2]

    return KernelBuild(
        name="fft", program=cmds, dfgs={"fft_bfly": dfg}, lanes=LANES,
        init_shared=shared, extract=extract, oracle_out=oracle,
        tolerance=1e-8, counts={"n": n},
    )
