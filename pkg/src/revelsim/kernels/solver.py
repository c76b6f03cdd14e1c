"""Triangular solver: forward substitution x = L^-1 b, column-oriented.

Two dataflows (the Fig-3 shape): a multiply-subtract update flow and a
divide flow, plus a pass-through wire used by the streaming variants to
split the staged [b; diag] stream across ports.

Variant ladder:
  baseline       serialized sweeps through the scratchpad, rectangular
                 per-sweep streams, no reuse, no xfer.
  inductive      same structure; the read-only column/diagonal streams
                 collapse to whole-kernel inductive commands.
  fgdeps         streaming: b' recurrence and x broadcast run through
                 port-to-port xfers with inductive reuse (2 Local_ld total).
  heterogeneous  fgdeps with the divide flow in the temporal region.
  masking        == fgdeps program; the scalar recurrence formulation cannot
                 vectorize the update without beat re-alignment hardware, and
                 the full configuration keeps the divide on the dedicated
                 divider where it is fastest.

The strictly-lower columns live at an affine slope so one inductive command
covers every sweep; b, diag, and x follow. x[i] is consumed n-1-i times,
expressed as destination-port reuse nc=n-1, sc=-1.
"""

from __future__ import annotations

import numpy as np

from .common import (DfgBuilder, KernelBuild, barrier, canon_variant, config,
                     local_ld, local_st, pat1, pat2, reuse, shared_ld,
                     slots_of, wait, xfer)
from .oracles import make_lower, solver_ref


def _dfg(name, streaming, het=False):
    b = DfgBuilder(name)
    # declaration order picks physical slots; the diag port needs a 512-bit
    # slot so the whole diagonal stream can sit buffered in its FIFO
    px = b.inport("Px", 1)
    pdb = b.inport("Pdb", 1, df=1)
    pa = b.inport("Pa", 1)
    pb = b.inport("Pb", 1)
    if streaming:
        b.inport("Ppt", 1, df=2)
    pdd = b.inport("Pdd", 1, df=1)
    # Pbo must buffer a sweep's worth of b' backlog while the next tail
    # xfer waits for the port scoreboard, so it gets a 256-bit slot
    xo = b.outport("Pxo", 1, df=1)
    if streaming:
        b.outport("Pxo2", 1, df=1)
    bo = b.outport("Pbo", 1)
    if streaming:
        b.outport("Ppto", 1, df=2)
    region = "noncritical" if het else "critical"
    m = b.node("mul", df=0)
    b.edge(pa, m, 0)
    b.edge(px, m, 1)
    s = b.node("sub", df=0)
    b.edge(pb, s, 0)
    b.edge(m, s, 1)
    b.edge(s, "Pbo.0", 0)
    d = b.node("div", df=1, region=region)
    b.edge(pdb, d, 0)
    b.edge(pdd, d, 1)
    b.edge(d, "Pxo.0", 0)
    if streaming:
        b.edge(d, "Pxo2.0", 0)
        b.edge("Ppt", "Ppto.0", 0)
    return b.build()


def layout(n):
    """(slope, a_extent, tail_cols) for the strictly-lower column region."""
    slope = n - 1
    extent = (n - 2) * (n - 1) + 1 if n >= 2 else 1
    if extent + 3 * n <= 1024:
        return slope, extent, 0
    # trim the last two (tiny) columns out of the inductive pattern
    tail = 2
    extent = (n - 1 - tail) * slope + (tail + 1)
    return slope, extent + 3, tail


def col_addr(n, i):
    slope, extent, tail = layout(n)
    if tail and i >= n - 1 - tail:
        # packed tail: columns n-3 (2 words) then n-2 (1 word)
        off = 0
        for c in range(n - 1 - tail, i):
            off += n - 1 - c
        return (extent - 3) + off
    return i * slope


def _mem_image(n, l, bb, streaming):
    """Local image: columns, then the staging region, then x.

    The streaming variants stage [b0, diag, b1..] in exactly the order the
    wire flow's xfer splits consume it; the serialized variants keep plain
    [b | diag] arrays (b is updated in place sweep by sweep).
    """
    slope, a_extent, tail = layout(n)
    b_addr = a_extent
    diag_addr = b_addr + n
    x_addr = diag_addr + n
    img = np.zeros(x_addr + n)
    for i in range(n - 1):
        base = col_addr(n, i)
        img[base: base + (n - 1 - i)] = l[i + 1:, i]
    if streaming:
        img[b_addr] = bb[0]
        img[b_addr + 1: b_addr + 1 + n] = np.diag(l)
        img[b_addr + 1 + n: b_addr + 2 * n] = bb[1:]
    else:
        img[b_addr: b_addr + n] = bb
        img[diag_addr: diag_addr + n] = np.diag(l)
    return img, b_addr, diag_addr, x_addr


def gen_input(n, seed=0):
    rng = np.random.default_rng(0x50F7 + seed)
    l = make_lower(n, rng)
    bb = rng.standard_normal(n)
    return l, bb


def build(n=16, variant="full", lanes=1, seed=0) -> KernelBuild:
    v = canon_variant(variant)
    l, bb = gen_input(n, seed)
    streaming = v in ("fgdeps", "heterogeneous", "masking")
    img, b_addr, diag_addr, x_addr = _mem_image(n, l, bb, streaming)
    slope, a_extent, tail = layout(n)
    mask = 1

    if v in ("fgdeps", "heterogeneous", "masking"):
        # masking adds nothing to the scalar recurrence, and the temporal
        # divide placement only trades area here, so the full program keeps
        # the divide on the dedicated divider
        het = v == "heterogeneous"
        name = "solver_stream_het" if het else "solver_stream"
        dfg = _dfg(name, streaming=True, het=het)
        s = slots_of(dfg)
        cmds = [config(name, mask)]
        cmds.append(shared_ld(0, 0, pat1(1, x_addr), mask))
        cmds.append(barrier(mask, "st"))
        # staged [b; diag] feeds the wire flow and is split across ports
        cmds.append(local_ld(b_addr, s["Ppt"], pat1(1, 2 * n), mask))
        if tail:
            cmds.append(local_ld(0, s["Pa"],
                                 pat2(cj=slope, nj=n - 1 - tail, ci=1, ni=n - 1, sji=-1),
                                 mask))
            cmds.append(local_ld(a_extent - 3, s["Pa"], pat1(1, 3), mask))
        else:
            cmds.append(local_ld(0, s["Pa"],
                                 pat2(cj=slope, nj=n - 1, ci=1, ni=n - 1, sji=-1),
                                 mask))
        # staging order is [b0, diag, b-tail]; diag ships before the tail so
        # the divide flow can produce x[0] and unblock the update flow
        cmds.append(xfer(s["Ppto"], s["Pdb"], 1, mask))
        cmds.append(xfer(s["Ppto"], s["Pdd"], n, mask))
        cmds.append(xfer(s["Ppto"], s["Pb"], n - 1, mask))
        cmds.append(xfer(s["Pxo"], s["Px"], n - 1, mask,
                         ruse=reuse(nc=n - 1, sc=-1)))
        cmds.append(local_st(s["Pxo2"], x_addr, pat1(1, n), mask))
        for i in range(n - 1):
            cmds.append(xfer(s["Pbo"], s["Pdb"], 1, mask))
            if n - 2 - i > 0:
                cmds.append(xfer(s["Pbo"], s["Pb"], n - 2 - i, mask))
        # the one x beat the broadcast xfer leaves behind is x[n-1]
        cmds.append(local_st(s["Pxo"], x_addr + n - 1, pat1(1, 1), mask))
        cmds.append(wait(mask))
        dfgs = {name: dfg}
    else:
        name = "solver_serial"
        dfg = _dfg(name, streaming=False)
        s = slots_of(dfg)
        inductive = v == "inductive"
        cmds = [config(name, mask)]
        cmds.append(shared_ld(0, 0, pat1(1, x_addr), mask))
        cmds.append(barrier(mask, "st"))
        if inductive:
            # read-only streams span the sweep barriers safely
            if tail:
                cmds.append(local_ld(0, s["Pa"],
                                     pat2(cj=slope, nj=n - 1 - tail, ci=1, ni=n - 1, sji=-1),
                                     mask))
                cmds.append(local_ld(a_extent - 3, s["Pa"], pat1(1, 3), mask))
            else:
                cmds.append(local_ld(0, s["Pa"],
                                     pat2(cj=slope, nj=n - 1, ci=1, ni=n - 1, sji=-1),
                                     mask))
            cmds.append(local_ld(diag_addr, s["Pdd"], pat1(1, n), mask))
        for i in range(n):
            # divide phase: x[i] = b'[i] / diag[i]
            cmds.append(local_ld(b_addr + i, s["Pdb"], pat1(1, 1), mask))
            if not inductive:
                cmds.append(local_ld(diag_addr + i, s["Pdd"], pat1(1, 1), mask))
            cmds.append(local_st(s["Pxo"], x_addr + i, pat1(1, 1), mask))
            cmds.append(barrier(mask, "st"))
            if i == n - 1:
                break
            # update phase: b'[j] -= L[j,i] * x[i]
            cnt = n - 1 - i
            if not inductive:
                cmds.append(local_ld(col_addr(n, i), s["Pa"], pat1(1, cnt), mask))
            cmds.append(local_ld(x_addr + i, s["Px"], pat1(0, cnt), mask))
            cmds.append(local_ld(b_addr + i + 1, s["Pb"], pat1(1, cnt), mask))
            cmds.append(local_st(s["Pbo"], b_addr + i + 1, pat1(1, cnt), mask))
            cmds.append(barrier(mask, "st"))
        cmds.append(wait(mask))
        dfgs = {name: dfg}

    oracle = solver_ref(l, bb)

    def extract(res):
        return res.local_mems[0][x_addr: x_addr + n].copy()

    return KernelBuild(
        name="solver", program=cmds, dfgs=dfgs, lanes=lanes,
        init_shared=img, extract=extract, oracle_out=oracle,
        tolerance=1e-10, counts={"n": n, "variant": v},
    )
