"""ISA definition: stream patterns, control commands, dataflow graphs.

The command set follows the vector-stream control table: scratchpad
transfer streams (shared_ld/st, local_ld/st), const streams, xfer
(port-to-port) streams, configure, ld/st barriers, and wait. Every command
carries a lane bitmask. Patterns are affine loop nests of up to two
executable dimensions whose inner trip count may stretch by a signed 8.8
fixed-point amount per outer iteration; a third dimension exists on the
type for analysis purposes but is rejected in executable commands.

Pure value types and pure functions; no shared mutable state.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .fixedpoint import Fx, fx_ceil

WORD_BYTES = 8

OPCODES = {
    # opcode -> (arity, latency class)
    "add": 2,
    "sub": 2,
    "mul": 2,
    "div": 2,
    "sqrt": 1,
    "cmp": 2,
    "select": 3,
    "acc": 2,  # (value, ctrl): accumulate value; emit+reset when ctrl != 0
}

CAPABILITY_TAGS = ("V", "R", "RR", "RI", "RRR", "RII")

MAX_DATAFLOWS = 4


class IsaError(ValueError):
    pass


class ProgramSyntaxError(IsaError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


# --------------------------------------------------------------------------
# Stream patterns


@dataclass(frozen=True)
class StreamPattern:
    """Affine access/iteration descriptor with stretch terms.

    Iteration order is lexicographic, outermost first. The realized inner
    trip count at outer iteration j is ceil(ni + j*sji) and must stay >= 0
    over the whole domain. dims=1 uses only (ci, ni); dims=3 adds an
    analysis-only k dimension.
    """

    base: int = 0
    ci: int = 1
    ni: int = 1
    cj: int = 0
    nj: int = 1
    sji: Fx = field(default_factory=Fx.zero)
    ck: int = 0
    nk: int = 1
    ski: Fx = field(default_factory=Fx.zero)
    skj: Fx = field(default_factory=Fx.zero)
    dims: int = 1

    def __post_init__(self):
        if self.dims not in (1, 2, 3):
            raise IsaError(f"pattern dims must be 1..3, got {self.dims}")
        if self.ni < 0 or self.nj < 0 or self.nk < 0:
            raise IsaError("initial trip counts must be >= 0")

    @property
    def capability_tag(self) -> str:
        if self.dims == 1:
            return "R"
        if self.dims == 2:
            return "RI" if self.sji.raw != 0 else "RR"
        if self.sji.raw or self.ski.raw or self.skj.raw:
            return "RII"
        return "RRR"

    def outer_iters(self):
        """Yield (k, j, realized ni_raw) triples; raises on negative bounds."""
        for k in range(self.nk if self.dims == 3 else 1):
            nj_bound = self.nj * 256 + (k * self.skj.raw if self.dims == 3 else 0)
            if nj_bound < 0:
                raise IsaError("negative realized trip count for dim j")
            nj_real = fx_ceil(nj_bound) if self.dims >= 2 else 1
            for j in range(nj_real):
                ni_raw = self.ni * 256
                if self.dims >= 2:
                    ni_raw += j * self.sji.raw
                if self.dims == 3:
                    ni_raw += k * self.ski.raw
                if ni_raw < 0:
                    raise IsaError("negative realized trip count for dim i")
                yield k, j, ni_raw

    def run_lengths(self) -> list[int]:
        """Realized inner-run lengths in iteration order."""
        return [fx_ceil(ni_raw) for _, _, ni_raw in self.outer_iters()]

    def length(self) -> int:
        return sum(self.run_lengths())

    def extent(self) -> tuple[int, int]:
        """(min, max) address touched; (base, base-1) for empty patterns."""
        lo, hi = None, None
        for k, j, ni_raw in self.outer_iters():
            cnt = fx_ceil(ni_raw)
            if cnt == 0:
                continue
            start = self.base + k * self.ck + j * self.cj
            end = start + (cnt - 1) * self.ci
            a, b = min(start, end), max(start, end)
            lo = a if lo is None else min(lo, a)
            hi = b if hi is None else max(hi, b)
        if lo is None:
            return self.base, self.base - 1
        return lo, hi

    def footprint(self) -> int:
        """Span used for lane-indexed offsets: nj*cj (2-D) or ni*ci (1-D)."""
        if self.dims >= 2:
            return self.nj * self.cj
        return self.ni * self.ci

    def validate(self) -> list[str]:
        errs = []
        try:
            for _ in self.outer_iters():
                pass
        except IsaError as e:
            errs.append(str(e))
        return errs


@dataclass(frozen=True)
class ReuseSpec:
    """Port-side reuse / production-rate configuration.

    nc/sc: how many times element k is read before being popped
    (ceil(nc + k*sc), exact in 8.8 fixed point). np/sp: how many upstream
    productions each forwarded value consumes (xfer decimation).
    """

    nc: Fx = field(default_factory=lambda: Fx(256))
    sc: Fx = field(default_factory=Fx.zero)
    np: Fx = field(default_factory=lambda: Fx(256))
    sp: Fx = field(default_factory=Fx.zero)

    def is_plain(self) -> bool:
        return self.nc.raw == 256 and self.sc.raw == 0 and self.np.raw == 256 and self.sp.raw == 0


PLAIN_REUSE = ReuseSpec()


# --------------------------------------------------------------------------
# Commands

KINDS = (
    "shared_ld",
    "shared_st",
    "local_ld",
    "local_st",
    "const",
    "xfer",
    "config",
    "barrier",
    "wait",
)

# Field shape per command kind (None-valued fields must match these sets).
_SHAPES = {
    "shared_ld": dict(req={"shared_addr", "local_addr", "pattern"}, opt={"lane_indexed"}, stretch=False),
    "shared_st": dict(req={"shared_addr", "local_addr", "pattern"}, opt={"lane_indexed"}, stretch=False),
    "local_ld": dict(req={"local_addr", "in_port", "pattern"}, opt={"lane_indexed", "reuse"}, stretch=True),
    "local_st": dict(req={"local_addr", "out_port", "pattern"}, opt={"lane_indexed"}, stretch=True),
    "const": dict(req={"val1", "val2", "in_port", "pattern"}, opt={"reuse"}, stretch=True),
    "xfer": dict(req={"out_port", "in_port", "count"}, opt={"reuse", "dlane"}, stretch=False),
    "config": dict(req={"df"}, opt={"local_addr"}, stretch=False),
    "barrier": dict(req=set(), opt={"which"}, stretch=False),
    "wait": dict(req=set(), opt=set(), stretch=False),
}


@dataclass(frozen=True)
class Command:
    """One vector-stream control command (one table row + lane bitmask)."""

    kind: str
    lane_mask: int = 1
    pattern: StreamPattern | None = None
    reuse: ReuseSpec | None = None
    shared_addr: int | None = None
    local_addr: int | None = None
    in_port: int | None = None
    out_port: int | None = None
    val1: float | None = None
    val2: float | None = None
    count: int | None = None   # xfer: logical elements to deliver
    dlane: int = 0             # xfer: destination lane offset (relative)
    df: str | None = None      # config: dataflow-graph/placement key
    which: str = "all"         # barrier: ld | st | all
    lane_indexed: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise IsaError(f"unknown command kind {self.kind!r}")
        errs = self.shape_errors()
        if errs:
            raise IsaError(f"{self.kind}: " + "; ".join(errs))

    def shape_errors(self) -> list[str]:
        shape = _SHAPES[self.kind]
        errs = []
        if self.lane_mask <= 0:
            errs.append("lane_mask must be nonzero")
        present = set()
        for f in ("pattern", "reuse", "shared_addr", "local_addr", "in_port",
                  "out_port", "val1", "val2", "count", "df"):
            if getattr(self, f) is not None:
                present.add(f)
        if self.lane_indexed:
            present.add("lane_indexed")
        if self.dlane:
            present.add("dlane")
        missing = shape["req"] - present
        extra = present - shape["req"] - shape["opt"]
        if missing:
            errs.append(f"missing fields {sorted(missing)}")
        if extra:
            errs.append(f"fields {sorted(extra)} not allowed")
        if self.pattern is not None:
            if self.pattern.dims > 2:
                errs.append("executable commands are limited to 2-D patterns")
            if not shape["stretch"] and self.pattern.sji.raw != 0:
                errs.append(f"{self.kind} pattern carries no stretch term")
        if self.kind == "barrier" and self.which not in ("ld", "st", "all"):
            errs.append(f"bad barrier kind {self.which!r}")
        if self.kind == "xfer" and self.count is not None and self.count < 0:
            errs.append("xfer count must be >= 0")
        return errs


def validate_command(cmd: Command, machine_desc) -> list[str]:
    """Full validation against a machine description. Empty list means ok.

    machine_desc needs: lane_count, local_words, shared_words,
    in_port_widths, out_port_widths.
    """
    errs = list(cmd.shape_errors())
    all_lanes = (1 << machine_desc.lane_count) - 1
    if cmd.lane_mask & ~all_lanes:
        errs.append(f"lane_mask 0x{cmd.lane_mask:x} exceeds {machine_desc.lane_count} lanes")
    if cmd.in_port is not None and not (0 <= cmd.in_port < len(machine_desc.in_port_widths)):
        errs.append(f"unknown input port {cmd.in_port}")
    if cmd.out_port is not None and not (0 <= cmd.out_port < len(machine_desc.out_port_widths)):
        errs.append(f"unknown output port {cmd.out_port}")
    if cmd.pattern is not None:
        errs.extend(cmd.pattern.validate())
    if cmd.reuse is not None:
        if cmd.reuse.nc.raw <= 0:
            errs.append("reuse nc must be positive")
        if cmd.reuse.np.raw <= 0:
            errs.append("reuse np must be positive")
    if errs:
        return errs

    def check_extent(base_field, size, name, pattern_side):
        max_off = 0
        if cmd.lane_indexed and pattern_side:
            max_lane = machine_desc.lane_count - 1
            mask_lanes = [l for l in range(machine_desc.lane_count) if cmd.lane_mask >> l & 1]
            max_lane = max(mask_lanes)
            max_off = max_lane * cmd.pattern.footprint()
        lo, hi = cmd.pattern.extent()
        if hi < lo:
            return
        if lo < 0 or hi + max_off >= size:
            errs.append(f"pattern walks outside {name} scratchpad [{lo}, {hi + max_off}]")

    if cmd.kind in ("shared_ld", "shared_st"):
        # pattern walks the shared side; local side is a dense window
        pat = cmd.pattern
        shared = replace(pat, base=cmd.shared_addr)
        lo, hi = shared.extent()
        if hi >= lo:
            off = 0
            if cmd.lane_indexed:
                lanes = [l for l in range(machine_desc.lane_count) if cmd.lane_mask >> l & 1]
                off = max(lanes) * pat.footprint()
            if lo < 0 or hi + off >= machine_desc.shared_words:
                errs.append(f"pattern walks outside shared scratchpad [{lo}, {hi + off}]")
            n = shared.length()
            if cmd.local_addr < 0 or cmd.local_addr + n > machine_desc.local_words:
                errs.append("local window outside local scratchpad")
    elif cmd.kind in ("local_ld", "local_st"):
        pat = replace(cmd.pattern, base=cmd.local_addr + cmd.pattern.base)
        lo, hi = pat.extent()
        if hi >= lo:
            off = 0
            if cmd.lane_indexed:
                lanes = [l for l in range(machine_desc.lane_count) if cmd.lane_mask >> l & 1]
                off = max(lanes) * cmd.pattern.footprint()
            if lo < 0 or hi + off >= machine_desc.local_words:
                errs.append(f"pattern walks outside local scratchpad [{lo}, {hi + off}]")
    return errs


# --------------------------------------------------------------------------
# Program text format

_FLAG_KEYS = {"lx"}


def _parse_int(tok: str) -> int:
    tok = tok.lower()
    if tok.startswith("0b"):
        return int(tok, 2)
    if tok.startswith("0x"):
        return int(tok, 16)
    return int(tok, 10)


def _split_fields(parts, lineno, allow_bare_mask=False):
    kv = {}
    flags = set()
    for p in parts:
        if p in _FLAG_KEYS:
            flags.add(p)
            continue
        if "=" not in p:
            # `wait 0b11111111` style: a bare literal is the lane mask
            if allow_bare_mask and "mask" not in kv:
                try:
                    _parse_int(p)
                except ValueError:
                    raise ProgramSyntaxError(lineno, f"expected key=value, got {p!r}") from None
                kv["mask"] = p
                continue
            raise ProgramSyntaxError(lineno, f"expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        if k in kv:
            raise ProgramSyntaxError(lineno, f"duplicate field {k!r}")
        kv[k] = v
    return kv, flags


def _pattern_from_fields(kv, lineno):
    keys = {"ci", "ni", "cj", "nj", "sji"}
    got = keys & kv.keys()
    if not got:
        return None
    try:
        ci = _parse_int(kv.pop("ci", "1"))
        ni = _parse_int(kv.pop("ni", "1"))
        has_outer = "cj" in kv or "nj" in kv or "sji" in kv
        cj = _parse_int(kv.pop("cj", "0"))
        nj = _parse_int(kv.pop("nj", "1"))
        sji = Fx.from_value(kv.pop("sji", "0"))
        dims = 2 if has_outer else 1
        return StreamPattern(base=0, ci=ci, ni=ni, cj=cj, nj=nj, sji=sji, dims=dims)
    except (ValueError, IsaError) as e:
        raise ProgramSyntaxError(lineno, str(e)) from None


def _reuse_from_fields(kv, lineno):
    keys = {"nc", "sc", "np", "sp"}
    if not (keys & kv.keys()):
        return None
    try:
        return ReuseSpec(
            nc=Fx.from_value(kv.pop("nc", "1")),
            sc=Fx.from_value(kv.pop("sc", "0")),
            np=Fx.from_value(kv.pop("np", "1")),
            sp=Fx.from_value(kv.pop("sp", "0")),
        )
    except ValueError as e:
        raise ProgramSyntaxError(lineno, str(e)) from None


_MNEMONICS = {
    "shared_ld": "shared_ld",
    "shared_st": "shared_st",
    "local_ld": "local_ld",
    "local_st": "local_st",
    "const": "const",
    "xfer": "xfer",
    "config": "config",
    "barrier": "barrier",
    "wait": "wait",
}


def parse_program(text: str) -> list[Command]:
    """Parse stream-assembly source into commands, preserving program order."""
    cmds = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        mnem = parts[0]
        if mnem not in _MNEMONICS:
            raise ProgramSyntaxError(lineno, f"unknown mnemonic {mnem!r}")
        kind = _MNEMONICS[mnem]
        rest = parts[1:]
        which = "all"
        if kind == "barrier" and rest and rest[0] in ("ld", "st"):
            which = rest[0]
            rest = rest[1:]
        kv, flags = _split_fields(rest, lineno, allow_bare_mask=kind in ("wait", "barrier"))
        try:
            pattern = _pattern_from_fields(kv, lineno)
            reuse = _reuse_from_fields(kv, lineno)
            args = dict(kind=kind, which=which, lane_indexed="lx" in flags)
            if "mask" in kv:
                args["lane_mask"] = _parse_int(kv.pop("mask"))
            if "addr" in kv:
                if kind in ("shared_ld", "shared_st"):
                    args["shared_addr"] = _parse_int(kv.pop("addr"))
                else:
                    args["local_addr"] = _parse_int(kv.pop("addr"))
            if "local" in kv:
                args["local_addr"] = _parse_int(kv.pop("local"))
            if "port" in kv:
                key = "out_port" if kind == "local_st" else "in_port"
                args[key] = _parse_int(kv.pop("port"))
            if "out" in kv:
                args["out_port"] = _parse_int(kv.pop("out"))
            if "in" in kv:
                args["in_port"] = _parse_int(kv.pop("in"))
            if "v1" in kv:
                args["val1"] = float(kv.pop("v1"))
            if "v2" in kv:
                args["val2"] = float(kv.pop("v2"))
            if "count" in kv:
                args["count"] = _parse_int(kv.pop("count"))
            if "dlane" in kv:
                args["dlane"] = _parse_int(kv.pop("dlane"))
            if "df" in kv:
                args["df"] = kv.pop("df")
            if kv:
                raise ProgramSyntaxError(lineno, f"unknown fields {sorted(kv)}")
            if kind == "const" and pattern is None:
                raise ProgramSyntaxError(lineno, "const requires ni/nj fields")
            if pattern is not None:
                args["pattern"] = pattern
            if reuse is not None:
                args["reuse"] = reuse
            cmd = Command(**args)
        except IsaError as e:
            if isinstance(e, ProgramSyntaxError):
                raise
            raise ProgramSyntaxError(lineno, str(e)) from None
        cmds.append(cmd)
    return cmds


def format_command(cmd: Command) -> str:
    parts = [cmd.kind]
    if cmd.kind == "barrier" and cmd.which != "all":
        parts.append(cmd.which)
    if cmd.kind in ("shared_ld", "shared_st"):
        parts.append(f"addr={cmd.shared_addr}")
        parts.append(f"local={cmd.local_addr}")
    elif cmd.kind in ("local_ld", "local_st"):
        parts.append(f"addr={cmd.local_addr}")
        parts.append(f"port={cmd.in_port if cmd.kind == 'local_ld' else cmd.out_port}")
    elif cmd.kind == "const":
        parts.append(f"v1={cmd.val1!r}")
        parts.append(f"v2={cmd.val2!r}")
        parts.append(f"port={cmd.in_port}")
    elif cmd.kind == "xfer":
        parts.append(f"out={cmd.out_port}")
        parts.append(f"in={cmd.in_port}")
        parts.append(f"count={cmd.count}")
        if cmd.dlane:
            parts.append(f"dlane={cmd.dlane}")
    elif cmd.kind == "config":
        parts.append(f"df={cmd.df}")
        if cmd.local_addr is not None:
            parts.append(f"addr={cmd.local_addr}")
    p = cmd.pattern
    if p is not None:
        parts.append(f"ci={p.ci}")
        parts.append(f"ni={p.ni}")
        if p.dims >= 2:
            parts.append(f"cj={p.cj}")
            parts.append(f"nj={p.nj}")
            if p.sji.raw:
                parts.append(f"sji={p.sji.to_str()}")
    r = cmd.reuse
    if r is not None:
        if r.nc.raw != 256:
            parts.append(f"nc={r.nc.to_str()}")
        if r.sc.raw:
            parts.append(f"sc={r.sc.to_str()}")
        if r.np.raw != 256:
            parts.append(f"np={r.np.to_str()}")
        if r.sp.raw:
            parts.append(f"sp={r.sp.to_str()}")
    parts.append(f"mask=0x{cmd.lane_mask:x}")
    if cmd.lane_indexed:
        parts.append("lx")
    return " ".join(parts)


def format_program(cmds) -> str:
    return "\n".join(format_command(c) for c in cmds) + "\n"


# --------------------------------------------------------------------------
# Dataflow graphs


@dataclass(frozen=True)
class DfgNode:
    node_id: str
    opcode: str
    df: int
    region: str = "critical"  # critical | noncritical


@dataclass(frozen=True)
class DfgEdge:
    src: str
    dst: str
    slot: int = 0
    rate_p: int = 1
    rate_c: int = 1
    sp: Fx = field(default_factory=Fx.zero)
    sc: Fx = field(default_factory=Fx.zero)


@dataclass(frozen=True)
class DfgPort:
    port_id: str
    width: int
    df: int


def split_port_lane(name: str) -> tuple[str, int]:
    """Split a lane-addressed port reference: "P0.3" -> ("P0", 3)."""
    if "." in name:
        base, lane = name.rsplit(".", 1)
        return base, int(lane)
    return name, 0


class DataflowGraph:
    """Validated multi-dataflow graph with named vector ports."""

    def __init__(self, nodes, edges, inports, outports, name="dfg"):
        self.name = name
        self.nodes: dict[str, DfgNode] = dict(nodes)
        self.edges: list[DfgEdge] = list(edges)
        self.inports: dict[str, DfgPort] = dict(inports)
        self.outports: dict[str, DfgPort] = dict(outports)
        self._validate()

    # ---- derived views

    def dataflow_ids(self) -> list[int]:
        ids = {n.df for n in self.nodes.values()}
        ids.update(p.df for p in self.inports.values())
        ids.update(p.df for p in self.outports.values())
        return sorted(ids)

    def df_inports(self, df: int) -> list[DfgPort]:
        return [p for p in self.inports.values() if p.df == df]

    def df_outports(self, df: int) -> list[DfgPort]:
        return [p for p in self.outports.values() if p.df == df]

    def df_nodes(self, df: int) -> list[DfgNode]:
        return [n for n in self.nodes.values() if n.df == df]

    def node_inputs(self, node_id: str) -> list[DfgEdge]:
        return sorted((e for e in self.edges if e.dst == node_id), key=lambda e: e.slot)

    def width_of_df(self, df: int) -> int:
        ws = [p.width for p in self.df_inports(df)] + [p.width for p in self.df_outports(df)]
        return max(ws) if ws else 1

    def topo_nodes(self, df: int) -> list[DfgNode]:
        nodes = {n.node_id: n for n in self.df_nodes(df)}
        indeg = {nid: 0 for nid in nodes}
        for e in self.edges:
            if e.dst in nodes and e.src in nodes:
                indeg[e.dst] += 1
        order = [nid for nid in sorted(nodes) if indeg[nid] == 0]
        out = []
        queue = list(order)
        while queue:
            nid = queue.pop(0)
            out.append(nodes[nid])
            for e in self.edges:
                if e.src == nid and e.dst in nodes:
                    indeg[e.dst] -= 1
                    if indeg[e.dst] == 0:
                        queue.append(e.dst)
            queue.sort()
        return out

    # ---- validation

    def _validate(self):
        errs = []
        port_ids = list(self.inports) + list(self.outports)
        if len(set(port_ids)) != len(port_ids):
            errs.append("duplicate port id")
        dfs = self.dataflow_ids()
        if len(dfs) > MAX_DATAFLOWS:
            errs.append(f"{len(dfs)} dataflows exceed the limit of {MAX_DATAFLOWS}")
        for p in list(self.inports.values()) + list(self.outports.values()):
            if p.width not in (1, 2, 4, 8):
                errs.append(f"port {p.port_id} width {p.width} not a configured port width")
        out_lanes: dict[str, set] = {pid: set() for pid in self.outports}
        for e in self.edges:
            sbase, slane = split_port_lane(e.src)
            dbase, dlane = split_port_lane(e.dst)
            if sbase not in self.nodes and sbase not in self.inports:
                errs.append(f"dangling edge endpoint {e.src}->{e.dst}")
                continue
            if dbase not in self.nodes and dbase not in self.outports:
                errs.append(f"dangling edge endpoint {e.src}->{e.dst}")
                continue
            if sbase in self.inports and slane >= self.inports[sbase].width:
                errs.append(f"edge {e.src}: lane outside port width")
            if dbase in self.outports:
                if dlane >= self.outports[dbase].width:
                    errs.append(f"edge {e.dst}: lane outside port width")
                elif dlane in out_lanes[dbase]:
                    errs.append(f"output lane {e.dst} driven twice")
                else:
                    out_lanes[dbase].add(dlane)
            sdf = self._df_of(sbase)
            ddf = self._df_of(dbase)
            if sdf != ddf:
                errs.append(f"edge {e.src}->{e.dst} crosses dataflows {sdf}->{ddf}")
        for pid, lanes in out_lanes.items():
            if lanes and lanes != set(range(self.outports[pid].width)):
                errs.append(f"output port {pid} lanes not fully driven")
        for n in self.nodes.values():
            ins = self.node_inputs(n.node_id)
            arity = OPCODES.get(n.opcode)
            if arity is None:
                errs.append(f"node {n.node_id}: unknown opcode {n.opcode}")
                continue
            slots = [e.slot for e in ins]
            if sorted(slots) != list(range(arity)):
                errs.append(f"node {n.node_id}: needs input slots 0..{arity - 1}, got {slots}")
        for df in dfs:
            if self._df_cyclic(df):
                errs.append(f"dataflow {df} contains a cycle")
            widths = {p.width for p in self.df_inports(df) if p.width > 1}
            widths |= {p.width for p in self.df_outports(df) if p.width > 1}
            if len(widths) > 1:
                errs.append(f"dataflow {df} mixes vector widths {sorted(widths)}")
        if errs:
            raise IsaError("; ".join(errs))

    def _df_of(self, name: str) -> int:
        name, _ = split_port_lane(name)
        if name in self.nodes:
            return self.nodes[name].df
        if name in self.inports:
            return self.inports[name].df
        return self.outports[name].df

    def _df_cyclic(self, df: int) -> bool:
        nodes = {n.node_id for n in self.df_nodes(df)}
        adj = {n: [] for n in nodes}
        for e in self.edges:
            if e.src in nodes and e.dst in nodes:
                adj[e.src].append(e.dst)
        seen, stack = set(), set()

        def visit(n):
            if n in stack:
                return True
            if n in seen:
                return False
            seen.add(n)
            stack.add(n)
            if any(visit(m) for m in adj[n]):
                return True
            stack.discard(n)
            return False

        return any(visit(n) for n in sorted(nodes))


_RATE_RE = re.compile(r"^(-?\d+):(-?\d+)$")


def parse_dfg(text: str, name: str = "dfg") -> DataflowGraph:
    """Parse the line-oriented DFG format."""
    nodes, edges, inports, outports = {}, [], {}, {}
    df_rates: dict[int, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        head = parts[0]
        try:
            if head == "node":
                nid, opcode = parts[1], parts[2]
                kv, _ = _split_fields(parts[3:], lineno)
                region = {"crit": "critical", "noncrit": "noncritical"}.get(
                    kv.pop("region", "crit"))
                if region is None:
                    raise ProgramSyntaxError(lineno, "region must be crit|noncrit")
                nodes[nid] = DfgNode(nid, opcode, int(kv.pop("df", "0")), region)
                if kv:
                    raise ProgramSyntaxError(lineno, f"unknown fields {sorted(kv)}")
            elif head == "edge":
                src, dst = parts[1], parts[2]
                kv, _ = _split_fields(parts[3:], lineno)
                rate_p = rate_c = 1
                if "rate" in kv:
                    m = _RATE_RE.match(kv.pop("rate"))
                    if not m:
                        raise ProgramSyntaxError(lineno, "rate must be <p>:<c>")
                    rate_p, rate_c = int(m.group(1)), int(m.group(2))
                edges.append(DfgEdge(
                    src, dst, slot=int(kv.pop("slot", "0")),
                    rate_p=rate_p, rate_c=rate_c,
                    sp=Fx.from_value(kv.pop("sp", "0")),
                    sc=Fx.from_value(kv.pop("sc", "0")),
                ))
                if kv:
                    raise ProgramSyntaxError(lineno, f"unknown fields {sorted(kv)}")
            elif head in ("inport", "outport"):
                pid = parts[1]
                kv, _ = _split_fields(parts[2:], lineno)
                port = DfgPort(pid, int(kv.pop("width", "1")), int(kv.pop("df", "0")))
                if kv:
                    raise ProgramSyntaxError(lineno, f"unknown fields {sorted(kv)}")
                (inports if head == "inport" else outports)[pid] = port
            elif head == "dfrate":
                df_rates[int(parts[1])] = float(parts[2])
            else:
                raise ProgramSyntaxError(lineno, f"unknown directive {head!r}")
        except (IndexError, ValueError) as e:
            raise ProgramSyntaxError(lineno, str(e)) from None
    # Execution-rate annotations default low-rate dataflows to noncritical.
    if df_rates:
        nodes = {
            nid: (replace(n, region="noncritical")
                  if df_rates.get(n.df, 1.0) < 0.5 and n.region == "critical" else n)
            for nid, n in nodes.items()
        }
    return DataflowGraph(nodes, edges, inports, outports, name=name)


def format_dfg(g: DataflowGraph) -> str:
    lines = []
    for p in g.inports.values():
        lines.append(f"inport {p.port_id} width={p.width} df={p.df}")
    for p in g.outports.values():
        lines.append(f"outport {p.port_id} width={p.width} df={p.df}")
    for n in g.nodes.values():
        region = " region=noncrit" if n.region == "noncritical" else ""
        lines.append(f"node {n.node_id} {n.opcode} df={n.df}{region}")
    for e in g.edges:
        extra = ""
        if (e.rate_p, e.rate_c) != (1, 1):
            extra += f" rate={e.rate_p}:{e.rate_c}"
        if e.sp.raw:
            extra += f" sp={e.sp.to_str()}"
        if e.sc.raw:
            extra += f" sc={e.sc.to_str()}"
        lines.append(f"edge {e.src} {e.dst} slot={e.slot}{extra}")
    return "\n".join(lines) + "\n"
