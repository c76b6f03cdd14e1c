"""Cholesky factorization (lower L, in place, column-major).

Three regions per outer step k: point (sqrt of the pivot and its inverse),
vector (scale column k), matrix (rank-1 update of the trailing columns,
triangular slices). Column-major layout keeps every stream contiguous and
the factor overwrites A in place, so the n=32 problem exactly fills the
8KB scratchpad.

Variants:
  baseline       serialized regions, per-slice rectangular commands, no
                 reuse; the vector region divides by the pivot per element.
  inductive      one inductive command per region instance (slices collapse),
                 still serialized, still no port reuse.
  fgdeps         inverse-pivot broadcast over an xfer with port reuse;
                 L[i,k] scalars are latched by inductive destination reuse.
  heterogeneous  fgdeps with the point flow in the temporal region.
  masking        vectorized (width 4) triangular slices with partial final
                 beats; the scalar latch uses fractional reuse (sc = -1/4).
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .common import (DfgBuilder, KernelBuild, barrier, canon_variant, config,
                     local_ld, local_st, pat1, pat2, reuse, shared_ld,
                     slots_of, wait, xfer)
from .oracles import cholesky_ref, make_spd


def _dfg_serial(width=1):
    b = DfgBuilder("chol_serial")
    akk = b.inport("Pakk", 1, df=0)
    vin = b.inport("Pvin", width, df=1)
    vl = b.inport("Pvl", 1, df=1)
    ma = b.inport("Pma", width, df=2)
    ml = b.inport("Pml", width, df=2)
    mlik = b.inport("Pmlik", 1, df=2)
    b.outport("Pl", 1, df=0)
    b.outport("Pvout", width, df=1)
    b.outport("Pmout", width, df=2)
    sq = b.node("sqrt", df=0)
    b.edge(akk, sq, 0)
    b.edge(sq, "Pl.0", 0)
    divs = b.vec_binop("div", b.lanes(vin, width), [vl] * width, df=1)
    b.connect_out(divs, "Pvout")
    muls = b.vec_binop("mul", b.lanes(ml, width), [mlik] * width, df=2)
    subs = b.vec_binop("sub", b.lanes(ma, width), muls, df=2)
    b.connect_out(subs, "Pmout")
    return b.build()


def _dfg_stream(name, width, het):
    b = DfgBuilder(name)
    region = "noncritical" if het else "critical"
    akk = b.inport("Pakk", 1, df=0)
    vin = b.inport("Pvin", width, df=1)
    vinva = b.inport("Pvinva", 1, df=1)
    ma = b.inport("Pma", width, df=2)
    ml = b.inport("Pml", width, df=2)
    mlik = b.inport("Pmlik", 1, df=2)
    b.outport("Pl", 1, df=0)
    b.outport("Pinva", 1, df=0)
    b.outport("Pvout", width, df=1)
    b.outport("Pmout", width, df=2)
    sq = b.node("sqrt", df=0, region=region)
    b.edge(akk, sq, 0)
    inva = b.node("div", df=0, region=region)  # sqrt(a)/a == 1/sqrt(a)
    b.edge(sq, inva, 0)
    b.edge(akk, inva, 1)
    b.edge(sq, "Pl.0", 0)
    b.edge(inva, "Pinva.0", 0)
    muls_v = b.vec_binop("mul", b.lanes(vin, width), [vinva] * width, df=1)
    b.connect_out(muls_v, "Pvout")
    muls = b.vec_binop("mul", b.lanes(ml, width), [mlik] * width, df=2)
    subs = b.vec_binop("sub", b.lanes(ma, width), muls, df=2)
    b.connect_out(subs, "Pmout")
    return b.build()


def gen_input(n, seed=0):
    rng = np.random.default_rng(0xC401 + seed)
    return make_spd(n, rng)


def build(n=16, variant="full", lanes=1, seed=0) -> KernelBuild:
    v = canon_variant(variant)
    a = gen_input(n, seed)
    img = np.zeros(n * n)
    for i in range(n):
        img[i * n: (i + 1) * n] = a[:, i]
    mask = 1

    serial = v in ("baseline", "inductive")
    width = 4 if v == "masking" else 1
    if serial:
        name = "chol_serial"
        dfg = _dfg_serial()
    else:
        het = v in ("heterogeneous", "masking")
        name = f"chol_stream_w{width}" + ("_het" if het else "")
        dfg = _dfg_stream(name, width, het)
    s = slots_of(dfg)

    def colp(k):  # address of A[k, k] in the column-major image
        return k * (n + 1)

    def matrix_rest(k):
        """Trailing slices i = k+2 .. n-1 of step k's rank-1 update."""
        cnt = n - 1 - k
        if cnt < 2:
            return []
        out = [
            local_ld(colp(k + 2), s["Pma"],
                     pat2(cj=n + 1, nj=cnt - 1, ci=1, ni=cnt - 1, sji=-1), mask),
            local_ld(k * n + k + 2, s["Pml"],
                     pat2(cj=1, nj=cnt - 1, ci=1, ni=cnt - 1, sji=-1), mask),
        ]
        if width > 1:
            r = reuse(nc=float(Fraction(cnt - 1, width)), sc=float(Fraction(-1, width)))
        else:
            r = reuse(nc=cnt - 1, sc=-1)
        out.append(local_ld(k * n + k + 2, s["Pmlik"], pat1(1, cnt - 1), mask, ruse=r))
        out.append(local_st(s["Pmout"], colp(k + 2),
                            pat2(cj=n + 1, nj=cnt - 1, ci=1, ni=cnt - 1, sji=-1), mask))
        return out

    def matrix_first(k):
        """Slice i = k+1 alone: it produces the next pivot column early."""
        cnt = n - 1 - k
        return [
            local_ld(colp(k + 1), s["Pma"], pat1(1, cnt), mask),
            local_ld(k * n + k + 1, s["Pml"], pat1(1, cnt), mask),
            local_ld(k * n + k + 1, s["Pmlik"], pat1(1, 1), mask,
                     ruse=reuse(nc=-(-cnt // width))),
            local_st(s["Pmout"], colp(k + 1), pat1(1, cnt), mask),
        ]

    cmds = [config(name, mask)]
    cmds.append(shared_ld(0, 0, pat1(1, n * n), mask))
    cmds.append(barrier(mask, "st"))
    pending_rest = None
    for k in range(n):
        cnt = n - 1 - k
        cmds.append(local_ld(colp(k), s["Pakk"], pat1(1, 1), mask))
        cmds.append(local_st(s["Pl"], colp(k), pat1(1, 1), mask))
        if cnt == 0:
            if not serial:
                # the last pivot's inverse has no consumer; park it in a dead
                # upper-triangle word so the port drains
                cmds.append(local_st(s["Pinva"], n, pat1(1, 1), mask))
            cmds.append(barrier(mask, "st"))
            break
        if serial:
            # the per-element divide reads the stored pivot back from memory
            cmds.append(barrier(mask, "st"))
            cmds.append(local_ld(colp(k), s["Pvl"], pat1(0, cnt), mask))
        else:
            beats = -(-cnt // width)
            cmds.append(xfer(s["Pinva"], s["Pvinva"], 1, mask,
                             ruse=reuse(nc=beats)))
        cmds.append(local_ld(colp(k) + 1, s["Pvin"], pat1(1, cnt), mask))
        cmds.append(local_st(s["Pvout"], colp(k) + 1, pat1(1, cnt), mask))
        if serial:
            ma_pat = pat2(cj=n + 1, nj=cnt, ci=1, ni=cnt, sji=-1)
            ml_pat = pat2(cj=1, nj=cnt, ci=1, ni=cnt, sji=-1)
            cmds.append(barrier(mask, "st"))
            if v == "baseline":
                for i in range(k + 1, n):
                    ci_cnt = n - i
                    cmds.append(local_ld(colp(i), s["Pma"], pat1(1, ci_cnt), mask))
                    cmds.append(local_ld(k * n + i, s["Pml"], pat1(1, ci_cnt), mask))
                    cmds.append(local_ld(k * n + i, s["Pmlik"], pat1(0, ci_cnt), mask))
                    cmds.append(local_st(s["Pmout"], colp(i), pat1(1, ci_cnt), mask))
            else:
                cmds.append(local_ld(colp(k + 1), s["Pma"], ma_pat, mask))
                cmds.append(local_ld(k * n + k + 1, s["Pml"], ml_pat, mask))
                mlik_pat = pat2(cj=1, nj=cnt, ci=0, ni=cnt, sji=-1)
                cmds.append(local_ld(k * n + k + 1, s["Pmlik"], mlik_pat, mask))
                cmds.append(local_st(s["Pmout"], colp(k + 1), ma_pat, mask))
            cmds.append(barrier(mask, "st"))
        else:
            # the remainder of the previous step's update runs concurrently
            # with this step's point and vector regions (fine-grain overlap)
            if pending_rest:
                cmds.extend(pending_rest)
            cmds.append(barrier(mask, "st"))
            cmds.extend(matrix_first(k))
            cmds.append(barrier(mask, "st"))
            pending_rest = matrix_rest(k)
    if pending_rest:
        cmds.extend(pending_rest)
        cmds.append(barrier(mask, "st"))
    cmds.append(wait(mask))

    oracle = cholesky_ref(a)

    def extract(res):
        mem = res.local_mems[0]
        out = np.zeros((n, n))
        for i in range(n):
            out[i:, i] = mem[i * n + i: (i + 1) * n]
        return out

    return KernelBuild(
        name="cholesky", program=cmds, dfgs={name: dfg}, lanes=lanes,
        init_shared=img, extract=extract, oracle_out=oracle,
        tolerance=1e-10, counts={"n": n, "variant": v},
    )
