"""Shared machinery for the workload programs.

DfgBuilder assembles scalar-node dataflow graphs with vector port lanes;
KernelBuild packages everything a simulation run needs (program, graphs,
placements, initial memory, and an extractor for the kernel's output).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fabric import default_fabric
from ..isa import (Command, DataflowGraph, DfgEdge, DfgNode, DfgPort,
                   ReuseSpec, StreamPattern)
from ..fixedpoint import Fx
from ..machine import Machine, MachineConfig
from ..scheduler import Placement, bind_ports, schedule

VARIANTS = ("baseline", "inductive", "fgdeps", "heterogeneous", "masking")
VARIANT_ALIASES = {
    "full": "masking",
    "rr": "baseline",
    "ri": "fgdeps",
    "het": "heterogeneous",
    "deps": "fgdeps",
}


def canon_variant(v: str) -> str:
    v = v.lower()
    v = VARIANT_ALIASES.get(v, v)
    if v not in VARIANTS:
        raise KeyError(f"unknown variant {v!r}")
    return v


def variant_rank(v: str) -> int:
    return VARIANTS.index(canon_variant(v))


class DfgBuilder:
    def __init__(self, name: str):
        self.name = name
        self.nodes: dict[str, DfgNode] = {}
        self.edges: list[DfgEdge] = []
        self.inports: dict[str, DfgPort] = {}
        self.outports: dict[str, DfgPort] = {}
        self._n = 0

    def node(self, opcode, df=0, region="critical", name=None) -> str:
        nid = name or f"n{self._n}"
        self._n += 1
        self.nodes[nid] = DfgNode(nid, opcode, df, region)
        return nid

    def inport(self, pid, width, df=0) -> str:
        self.inports[pid] = DfgPort(pid, width, df)
        return pid

    def outport(self, pid, width, df=0) -> str:
        self.outports[pid] = DfgPort(pid, width, df)
        return pid

    def edge(self, src, dst, slot=0, **kw):
        self.edges.append(DfgEdge(src, dst, slot=slot, **kw))

    def vec_binop(self, opcode, a_srcs, b_srcs, df=0, region="critical"):
        """Elementwise op over parallel lanes; returns the node ids."""
        out = []
        for a, b in zip(a_srcs, b_srcs):
            nid = self.node(opcode, df=df, region=region)
            self.edge(a, nid, 0)
            self.edge(b, nid, 1)
            out.append(nid)
        return out

    def lanes(self, pid, width):
        return [f"{pid}.{l}" for l in range(width)]

    def connect_out(self, srcs, pid):
        for lane, s in enumerate(srcs):
            self.edge(s, f"{pid}.{lane}", 0)

    def build(self) -> DataflowGraph:
        return DataflowGraph(self.nodes, self.edges, self.inports,
                             self.outports, name=self.name)


@dataclass
class KernelBuild:
    """Everything needed to simulate one kernel instance."""

    name: str
    program: list
    dfgs: dict
    lanes: int
    init_shared: np.ndarray
    extract: object                      # SimResult -> output ndarray
    oracle_out: np.ndarray
    tolerance: float = 1e-10
    exact: bool = False
    placements: dict = field(default_factory=dict)
    machine_config: MachineConfig | None = None
    counts: dict = field(default_factory=dict)

    def count_kinds(self, kinds) -> int:
        return sum(1 for c in self.program if c.kind in kinds)


_PLACEMENT_CACHE: dict = {}


def placements_for(dfgs: dict, seed: int = 0) -> dict:
    """Schedule each graph once per process (placements are deterministic)."""
    out = {}
    for name, dfg in dfgs.items():
        key = (name, seed)
        if key not in _PLACEMENT_CACHE:
            _PLACEMENT_CACHE[key] = schedule(dfg, default_fabric(), seed=seed)
        out[name] = _PLACEMENT_CACHE[key]
    return out


def run_build(build: KernelBuild, max_cycles=None):
    """Schedule (if needed), simulate, and return (SimResult, output)."""
    cfg = build.machine_config or MachineConfig(lane_count=build.lanes)
    if not build.placements:
        build.placements = placements_for(build.dfgs)
    m = Machine(cfg)
    res = m.run(build.program, dfgs=build.dfgs, placements=build.placements,
                init_shared=build.init_shared, max_cycles=max_cycles)
    out = build.extract(res)
    return res, out


def check_output(build: KernelBuild, out: np.ndarray):
    """Returns (ok, max relative error)."""
    dtype = np.complex128 if np.iscomplexobj(build.oracle_out) else np.float64
    want = np.asarray(build.oracle_out, dtype=dtype)
    got = np.asarray(out, dtype=dtype)
    if want.shape != got.shape:
        return False, float("inf")
    if build.exact:
        return bool(np.array_equal(want, got)), float(np.max(np.abs(want - got), initial=0.0))
    denom = np.maximum(np.abs(want), 1.0)
    rel = float(np.max(np.abs(want - got) / denom, initial=0.0))
    return rel <= build.tolerance, rel


# ---- small command helpers (patterns are word-addressed)


def pat1(ci, ni) -> StreamPattern:
    return StreamPattern(base=0, ci=ci, ni=ni, dims=1)


def pat2(cj, nj, ci, ni, sji=0) -> StreamPattern:
    return StreamPattern(base=0, ci=ci, ni=ni, cj=cj, nj=nj,
                         sji=Fx.from_value(sji), dims=2)


def reuse(nc=1, sc=0, np_=1, sp=0) -> ReuseSpec:
    return ReuseSpec(nc=Fx.from_value(nc), sc=Fx.from_value(sc),
                     np=Fx.from_value(np_), sp=Fx.from_value(sp))


def shared_ld(addr, local, pattern, mask, lx=False) -> Command:
    return Command(kind="shared_ld", shared_addr=addr, local_addr=local,
                   pattern=pattern, lane_mask=mask, lane_indexed=lx)


def shared_st(local, addr, pattern, mask, lx=False) -> Command:
    return Command(kind="shared_st", shared_addr=addr, local_addr=local,
                   pattern=pattern, lane_mask=mask, lane_indexed=lx)


def local_ld(addr, port, pattern, mask, ruse=None, lx=False) -> Command:
    return Command(kind="local_ld", local_addr=addr, in_port=port,
                   pattern=pattern, reuse=ruse, lane_mask=mask, lane_indexed=lx)


def local_st(port, addr, pattern, mask, lx=False) -> Command:
    return Command(kind="local_st", local_addr=addr, out_port=port,
                   pattern=pattern, lane_mask=mask, lane_indexed=lx)


def const(v1, v2, pattern, port, mask, ruse=None) -> Command:
    return Command(kind="const", val1=float(v1), val2=float(v2), pattern=pattern,
                   in_port=port, reuse=ruse, lane_mask=mask)


def xfer(out_port, in_port, count, mask, ruse=None, dlane=0) -> Command:
    return Command(kind="xfer", out_port=out_port, in_port=in_port, count=count,
                   reuse=ruse, dlane=dlane, lane_mask=mask)


def config(df, mask) -> Command:
    return Command(kind="config", df=df, lane_mask=mask)


def barrier(mask, which="all") -> Command:
    return Command(kind="barrier", which=which, lane_mask=mask)


def wait(mask) -> Command:
    return Command(kind="wait", lane_mask=mask)


def slots_of(dfg: DataflowGraph) -> dict:
    """DFG port id -> physical slot index under the deterministic binding."""
    return {pid: b[1] for pid, b in bind_ports(dfg, default_fabric()).items()}
