"""Heterogeneous compute fabric model.

Dedicated tiles host one scalar instruction each, fully pipelined on a
circuit-switched mesh (hop latency 1, no flow control); a small temporal
region time-multiplexes up to 32 instructions per FU, one issue per FU per
cycle. Vector ports expose per-lane 64-bit channels to the grid, so a
width-8 operation is eight nodes plus whatever reduction tree the DFG
declares.

Timing is realized per dataflow firing: with a delay-equalized placement
every operand of a join node arrives simultaneously, so a firing at cycle t
delivers each output beat at t plus a statically known path latency.
div/sqrt tiles keep a next-free cycle to enforce their initiation interval;
temporal instructions are dynamically scheduled through per-FU issue slots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .fixedpoint import fx_ceil
from .isa import DataflowGraph, split_port_lane

FU_LATENCY = {
    "add": 1, "sub": 1, "cmp": 1, "select": 1, "acc": 1,
    "mul": 2,
    "div": 12, "sqrt": 12,
}
FU_INIT_INTERVAL = {"div": 5, "sqrt": 5}

# Which opcodes a dedicated tile class can host.
FU_CLASS_OPS = {
    "add": {"add", "sub", "cmp", "select", "acc"},
    "mul": {"mul"},
    "divsqrt": {"div", "sqrt"},
}

FIFO_DEPTH = 4
TEMPORAL_CAPACITY = 32

IN_PORT_WIDTHS = (8, 8, 4, 4, 2, 1)
OUT_PORT_WIDTHS = (8, 8, 4, 4, 2, 1)


class FabricError(ValueError):
    pass


@dataclass(frozen=True)
class TileDesc:
    x: int
    y: int
    kind: str          # dedicated | temporal
    fu: str            # add | mul | divsqrt | any (temporal)
    capacity: int = 1  # instructions (32 for temporal FUs)


class FabricDesc:
    """Static description of one lane's compute grid."""

    def __init__(self, width, height, tiles, in_port_widths=IN_PORT_WIDTHS,
                 out_port_widths=OUT_PORT_WIDTHS):
        self.width = width
        self.height = height
        self.tiles: dict[tuple[int, int], TileDesc] = dict(tiles)
        self.in_port_widths = tuple(in_port_widths)
        self.out_port_widths = tuple(out_port_widths)
        if len(self.tiles) != width * height:
            raise FabricError("tile map does not cover the grid")

    @property
    def num_tiles(self) -> int:
        return len(self.tiles)

    def config_cycles(self) -> int:
        return self.num_tiles + len(self.in_port_widths) + len(self.out_port_widths)

    def fu_totals(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for t in self.tiles.values():
            if t.kind == "dedicated":
                out[t.fu] = out.get(t.fu, 0) + 1
        return out

    def temporal_tiles(self) -> list[TileDesc]:
        return [t for t in sorted(self.tiles.values(), key=lambda t: (t.y, t.x))
                if t.kind == "temporal"]

    def dedicated_tiles(self) -> list[TileDesc]:
        return [t for t in sorted(self.tiles.values(), key=lambda t: (t.y, t.x))
                if t.kind == "dedicated"]

    # ---- mesh helpers. Links are directed (loc -> loc); input ports attach
    # above the top row at ("in", slot) -> (col, H-1); outputs leave the
    # bottom row to ("out", slot).

    def in_port_loc(self, slot: int) -> tuple:
        return ("in", slot)

    def out_port_loc(self, slot: int) -> tuple:
        return ("out", slot)

    def neighbors(self, loc) -> list[tuple]:
        """Deterministically ordered mesh successors of loc."""
        if isinstance(loc[0], str):
            return []  # handled by port injection in the router
        x, y = loc
        out = []
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < self.width and 0 <= ny < self.height:
                out.append((nx, ny))
        return out


def default_fabric() -> FabricDesc:
    """7x4 grid: 26 dedicated FUs (14 add, 9 mul, 3 div/sqrt) + 2x1 temporal."""
    width, height = 7, 4
    fus = ["add"] * 14 + ["mul"] * 9 + ["divsqrt"] * 3
    tiles = {}
    fi = 0
    for y in range(height):
        for x in range(width):
            if y == 0 and x < 2:
                tiles[(x, y)] = TileDesc(x, y, "temporal", "any", TEMPORAL_CAPACITY)
            else:
                # interleave FU classes across the grid for routability
                tiles[(x, y)] = TileDesc(x, y, "dedicated", fus[fi % len(fus)], 1)
                fi += 1
    return FabricDesc(width, height, tiles)


def format_fabric(desc: FabricDesc) -> str:
    lines = [f"grid {desc.width}x{desc.height}"]
    lines.append("inports " + ",".join(str(w) for w in desc.in_port_widths))
    lines.append("outports " + ",".join(str(w) for w in desc.out_port_widths))
    for t in sorted(desc.tiles.values(), key=lambda t: (t.y, t.x)):
        if t.kind == "temporal":
            lines.append(f"tile {t.x},{t.y} temporal cap={t.capacity}")
        else:
            lines.append(f"tile {t.x},{t.y} {t.fu}")
    return "\n".join(lines) + "\n"


def parse_fabric(text: str) -> FabricDesc:
    width = height = None
    tiles = {}
    inw, outw = IN_PORT_WIDTHS, OUT_PORT_WIDTHS
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "grid":
                width, height = (int(v) for v in parts[1].split("x"))
            elif parts[0] == "inports":
                inw = tuple(int(v) for v in parts[1].split(","))
            elif parts[0] == "outports":
                outw = tuple(int(v) for v in parts[1].split(","))
            elif parts[0] == "tile":
                x, y = (int(v) for v in parts[1].split(","))
                if parts[2] == "temporal":
                    cap = TEMPORAL_CAPACITY
                    for p in parts[3:]:
                        if p.startswith("cap="):
                            cap = int(p[4:])
                    tiles[(x, y)] = TileDesc(x, y, "temporal", "any", cap)
                else:
                    if parts[2] not in FU_CLASS_OPS:
                        raise FabricError(f"unknown fu class {parts[2]}")
                    tiles[(x, y)] = TileDesc(x, y, "dedicated", parts[2], 1)
            else:
                raise FabricError(f"unknown directive {parts[0]!r}")
        except (IndexError, ValueError) as e:
            raise FabricError(f"fabric line {lineno}: {e}") from None
    if width is None:
        raise FabricError("missing grid directive")
    return FabricDesc(width, height, tiles, inw, outw)


def port_distance(desc: FabricDesc, direction: str, col: int, tile) -> int:
    """Point-to-point wire length from a port attach column to a tile."""
    x, y = tile
    if direction == "in":
        return abs(x - col) + (desc.height - y)
    return abs(x - col) + y + 1


def edge_base_latency(desc: FabricDesc, dfg: DataflowGraph, edge, node_locs,
                      temporal_set, port_bindings, routes) -> int:
    """Pre-pad latency of one edge: mesh hops, port wire length, or 0/1."""
    sbase, _ = split_port_lane(edge.src)
    dbase, _ = split_port_lane(edge.dst)
    key = (edge.src, edge.dst, edge.slot)
    if sbase in dfg.inports:
        if dbase in dfg.outports:
            return 1  # wire dataflow: one internal bus hop
        d, slot, col = port_bindings[sbase]
        return port_distance(desc, "in", col, node_locs[dbase])
    if dbase in dfg.outports:
        d, slot, col = port_bindings[dbase]
        return port_distance(desc, "out", col, node_locs[sbase])
    if sbase in temporal_set and dbase in temporal_set:
        return 0  # embedded temporal network
    path = routes.get(key)
    if path is not None:
        links = path[0] if isinstance(path, tuple) else path
        return len(links)
    return abs(node_locs[sbase][0] - node_locs[dbase][0]) + \
        abs(node_locs[sbase][1] - node_locs[dbase][1])


# --------------------------------------------------------------------------
# Port FIFOs


class PortFifo:
    """A vector port: 4-entry beat FIFO + predicate FIFO + reuse state.

    Input ports assemble beats from arriving words plus run boundaries;
    output ports receive whole beats from the fabric. Reads honor the
    configured reuse schedule: beat k is read ceil(nc + k*sc) times before
    it is popped.
    """

    __slots__ = ("port_id", "width", "depth", "beats", "pending", "stage_vals",
                 "stage_pred", "segments", "k", "reads_done",
                 "pushed_words", "popped_beats")

    def __init__(self, port_id, width, depth=FIFO_DEPTH):
        self.port_id = port_id
        self.width = width
        self.depth = depth
        self.beats: list = []
        self.pending = 0          # reserved by in-flight fabric deliveries
        self.stage_vals: list = []
        self.stage_pred: list = []
        # reuse configs arrive per stream: (nc_raw, sc_raw, beats_left)
        self.segments: list = []
        self.k = 0
        self.reads_done = 0
        self.pushed_words = 0
        self.popped_beats = 0

    def push_segment(self, nc_raw: int, sc_raw: int, nbeats: int):
        """Attach the reuse config of the next stream feeding this port."""
        if nbeats > 0:
            self.segments.append([nc_raw, sc_raw, nbeats])

    def set_reuse(self, nc_raw: int, sc_raw: int, nbeats: int = 1 << 30):
        self.segments = [[nc_raw, sc_raw, nbeats]]
        self.k = 0
        self.reads_done = 0

    def occupancy(self) -> int:
        return len(self.beats) + self.pending + (1 if self.stage_vals else 0)

    def has_space(self, n=1) -> bool:
        return self.occupancy() + n <= self.depth

    def landed_full(self) -> bool:
        """Only landed beats count; in-flight pipeline values stall at the
        port boundary instead of reserving FIFO entries."""
        return len(self.beats) >= self.depth

    def can_accept_word(self) -> bool:
        if self.stage_vals and len(self.stage_vals) < self.width:
            return True
        return self.occupancy() < self.depth

    def is_empty(self) -> bool:
        return not self.beats

    def data_words(self) -> int:
        return sum(sum(b[1]) for b in self.beats) + len(self.stage_vals)

    # ---- producer side

    def push_word(self, val: float, end_of_run: bool):
        self.stage_vals.append(val)
        self.stage_pred.append(True)
        self.pushed_words += 1
        if len(self.stage_vals) == self.width or end_of_run:
            self._commit()

    def push_words(self, vals, end_of_run: bool):
        for i, v in enumerate(vals):
            self.push_word(v, end_of_run and i == len(vals) - 1)

    def _commit(self):
        pad = self.width - len(self.stage_vals)
        beat = (tuple(self.stage_vals) + (0.0,) * pad,
                tuple(self.stage_pred) + (False,) * pad)
        self.beats.append(beat)
        self.stage_vals = []
        self.stage_pred = []

    def push_beat(self, vals, pred):
        self.beats.append((tuple(vals), tuple(pred)))
        self.pushed_words += sum(pred)

    # ---- consumer side

    def peek(self):
        return self.beats[0]

    def _current_reuse(self):
        if self.segments:
            seg = self.segments[0]
            return seg[0], seg[1]
        return 256, 0

    def read(self):
        """One firing read; pops the beat once its reuse count is exhausted."""
        beat = self.beats[0]
        self.reads_done += 1
        nc_raw, sc_raw = self._current_reuse()
        target = nc_raw + self.k * sc_raw
        if target <= 0:
            raise FabricError(f"port {self.port_id}: reuse schedule fell below one read")
        if self.reads_done >= fx_ceil(target):
            self._pop_reused()
        return beat

    def _pop_reused(self):
        self.beats.pop(0)
        self.popped_beats += 1
        self.k += 1
        self.reads_done = 0
        if self.segments:
            seg = self.segments[0]
            seg[2] -= 1
            if seg[2] <= 0:
                self.segments.pop(0)
                self.k = 0

    def pop_beat(self):
        self.popped_beats += 1
        if self.segments:
            seg = self.segments[0]
            seg[2] -= 1
            if seg[2] <= 0:
                self.segments.pop(0)
                self.k = 0
        return self.beats.pop(0)


# --------------------------------------------------------------------------
# Configured fabric


def _div(a, b):
    if b == 0.0:
        if a == 0.0:
            return float("nan")
        return float("inf") if a > 0 else float("-inf")
    return a / b


def _sqrt(a):
    return a ** 0.5 if a >= 0.0 else float("nan")


@dataclass
class FabricEvents:
    fired: list = field(default_factory=list)       # (df, kind)
    delivered: list = field(default_factory=list)   # (port_id, beat)

    @property
    def dedicated_fired(self) -> int:
        return sum(1 for _, k in self.fired if k == "dedicated")

    @property
    def temporal_fired(self) -> int:
        return sum(1 for _, k in self.fired if k == "temporal")


class _DfPlan:
    """Precomputed firing plan for one dataflow."""

    __slots__ = ("df", "kind", "in_ports", "out_ports", "nodes", "ops",
                 "out_plan", "ii_nodes", "temporal_nodes", "temporal_preds",
                 "depth", "data_width", "max_offset")

    def __init__(self):
        self.in_ports = []
        self.out_ports = []
        self.nodes = []
        self.ops = []
        self.out_plan = {}
        self.ii_nodes = []
        self.temporal_nodes = []
        self.temporal_preds = {}
        self.depth = {}
        self.data_width = 1
        self.max_offset = 0


class ConfiguredFabric:
    """One lane's fabric, configured with a placed multi-dataflow graph."""

    def __init__(self, desc: FabricDesc, dfg: DataflowGraph | None, placement=None):
        self.desc = desc
        self.dfg = dfg
        self.placement = placement
        self.cycle = 0
        self.in_fifos: dict[str, PortFifo] = {}
        self.out_fifos: dict[str, PortFifo] = {}
        self.events: list = []   # (ready_cycle, seq, port_id, vals, pred)
        self._seq = 0
        self.node_next_free: dict[str, int] = {}
        self.temporal_fu_free: dict[int, int] = {}
        self.acc_state: dict[str, float] = {}
        self.last_delivery: dict[str, int] = {}
        self.plans: dict[int, _DfPlan] = {}
        self.total_firings = 0
        self._temporal_fu_of: dict[str, int] = {}
        if dfg is not None:
            self._build(placement)

    # ---- construction

    def _build(self, placement):
        dfg = self.dfg
        self._check_capacity(placement)
        temporal_ids = set()
        if placement is not None:
            for fu_idx, insts in enumerate(placement.temporal_insts):
                for nid in insts:
                    temporal_ids.add(nid)
                self.temporal_fu_free[fu_idx] = 0
        def fifo_depth(pid, width, direction):
            # the physical FIFO is sized in bits (4 entries x slot width), so
            # a narrow logical stream on a wide slot packs more beats
            if placement is None:
                return FIFO_DEPTH
            b = placement.port_bindings.get(pid)
            if b is None:
                return FIFO_DEPTH
            widths = self.desc.in_port_widths if direction == "in" else self.desc.out_port_widths
            _d, slot, _c = b
            if not (0 <= slot < len(widths)):
                return FIFO_DEPTH
            return FIFO_DEPTH * max(1, widths[slot] // width)

        for pid, port in dfg.inports.items():
            self.in_fifos[pid] = PortFifo(pid, port.width, fifo_depth(pid, port.width, "in"))
        for pid, port in dfg.outports.items():
            self.out_fifos[pid] = PortFifo(pid, port.width, fifo_depth(pid, port.width, "out"))
        for df in dfg.dataflow_ids():
            plan = _DfPlan()
            plan.df = df
            plan.in_ports = [p.port_id for p in dfg.df_inports(df)]
            plan.out_ports = [p.port_id for p in dfg.df_outports(df)]
            plan.data_width = dfg.width_of_df(df)
            nodes = dfg.topo_nodes(df)
            plan.nodes = [n.node_id for n in nodes]
            node_index = {nid: i for i, nid in enumerate(plan.nodes)}
            route_lat = self._route_latency_fn(placement)
            depth = {}
            # operand plan: list of (opcode, [(srckind, a, b)]) where srckind
            # 'port' -> (port_id, lane), 'node' -> (node_idx, None)
            for n in nodes:
                ins = dfg.node_inputs(n.node_id)
                operands = []
                arrivals = []
                for e in ins:
                    base, lane = split_port_lane(e.src)
                    if base in dfg.inports:
                        operands.append(("port", base, lane))
                        arrivals.append(route_lat(e))
                    else:
                        operands.append(("node", node_index[base], 0))
                        arrivals.append(depth[base] + route_lat(e))
                depth[n.node_id] = (max(arrivals) if arrivals else 0) + FU_LATENCY[n.opcode]
                plan.ops.append((n.opcode, operands, n.node_id))
                if n.opcode in FU_INIT_INTERVAL and n.node_id not in temporal_ids:
                    plan.ii_nodes.append(n.node_id)
                    self.node_next_free[n.node_id] = 0
                if n.node_id in temporal_ids:
                    plan.temporal_nodes.append(n.node_id)
                    plan.temporal_preds[n.node_id] = [
                        split_port_lane(e.src)[0] for e in ins
                        if split_port_lane(e.src)[0] in temporal_ids
                    ]
                if n.opcode == "acc":
                    self.acc_state[n.node_id] = 0.0
            plan.depth = depth
            # output delivery plan
            for pid in plan.out_ports:
                port = dfg.outports[pid]
                lanes: list = [None] * port.width
                offs = []
                for e in dfg.edges:
                    base, lane = split_port_lane(e.dst)
                    if base != pid:
                        continue
                    src_base, src_lane = split_port_lane(e.src)
                    if src_base in dfg.inports:
                        lanes[lane] = ("port", src_base, src_lane)
                        offs.append(route_lat(e))
                    else:
                        lanes[lane] = ("node", node_index[src_base], src_base)
                        offs.append(depth[src_base] + route_lat(e))
                offset = max(offs) if offs else 1
                # emission gate: a port fed only by acc nodes whose control
                # operands are port lanes needs output space only on firings
                # whose control value is nonzero
                gate = None
                srcs = [l for l in lanes if l is not None]
                if srcs and all(l[0] == "node" and plan.ops[l[1]][0] == "acc" for l in srcs):
                    ctrls = set()
                    for l in srcs:
                        operands = plan.ops[l[1]][1]
                        c = operands[1]
                        if c[0] == "port":
                            ctrls.add((c[1], c[2]))
                        else:
                            ctrls = None
                            break
                    if ctrls and len(ctrls) == 1:
                        gate = next(iter(ctrls))
                plan.out_plan[pid] = (lanes, offset, gate)
                plan.max_offset = max(plan.max_offset, offset)
            has_dedicated = any(nid not in temporal_ids for nid in plan.nodes)
            if not plan.nodes:
                plan.kind = "dedicated"  # wire-only pass-through
            else:
                plan.kind = "dedicated" if has_dedicated else "temporal"
            self.plans[df] = plan
        # deterministic per-node temporal FU assignment
        self._temporal_fu_of = {}
        if placement is not None:
            for fu_idx, insts in enumerate(placement.temporal_insts):
                for nid in insts:
                    self._temporal_fu_of[nid] = fu_idx

    def _route_latency_fn(self, placement):
        if placement is None:
            return lambda e: 1
        dfg = self.dfg
        node_locs = dict(placement.node_tiles)
        temporal_set = set()
        ttiles = self.desc.temporal_tiles()
        for fu, insts in enumerate(placement.temporal_insts):
            for nid in insts:
                temporal_set.add(nid)
                if fu < len(ttiles):
                    node_locs[nid] = (ttiles[fu].x, ttiles[fu].y)
        lat = {}
        for e in dfg.edges:
            key = (e.src, e.dst, e.slot)
            base = edge_base_latency(self.desc, dfg, e, node_locs, temporal_set,
                                     placement.port_bindings, placement.routes)
            pads = placement.routes.get(key, ((), 0))[1]
            lat[key] = base + pads

        def fn(e):
            return lat.get((e.src, e.dst, e.slot), 1)

        return fn

    def _check_capacity(self, placement):
        if placement is None:
            return
        desc = self.desc
        for nid, loc in placement.node_tiles.items():
            if loc not in desc.tiles:
                raise FabricError(f"placement references absent tile {loc}")
        temporal = desc.temporal_tiles()
        if len(placement.temporal_insts) > len(temporal):
            raise FabricError("placement references absent temporal FU")
        for fu_idx, insts in enumerate(placement.temporal_insts):
            if len(insts) > temporal[fu_idx].capacity:
                raise FabricError(f"temporal FU {fu_idx} over capacity")
        # FU class totals
        want: dict[str, int] = {}
        for nid, loc in placement.node_tiles.items():
            tile = self.desc.tiles[loc]
            if tile.kind != "dedicated":
                raise FabricError(f"node {nid} placed on non-dedicated tile {loc}")
            opcode = self.dfg.nodes[nid].opcode
            if opcode not in FU_CLASS_OPS[tile.fu]:
                raise FabricError(f"node {nid} ({opcode}) cannot run on {tile.fu} tile")
            want[loc] = want.get(loc, 0) + 1
            if want[loc] > 1:
                raise FabricError(f"tile {loc} hosts more than one node")

    # ---- queries

    @property
    def dataflow_count(self) -> int:
        return len([df for df, p in self.plans.items()
                    if p.nodes or p.in_ports or p.out_ports])

    def fire_check(self, df: int) -> bool:
        plan = self.plans.get(df)
        if plan is None:
            raise FabricError(f"unknown dataflow {df}")
        for pid in plan.in_ports:
            if self.in_fifos[pid].is_empty():
                return False
        for pid in plan.out_ports:
            gate = plan.out_plan[pid][2]
            if gate is not None:
                vals, pred = self.in_fifos[gate[0]].beats[0]
                ctrl = vals[gate[1]] if pred[gate[1]] else 0.0
                if ctrl == 0.0:
                    continue  # this firing will not emit to pid
            if self.out_fifos[pid].landed_full():
                return False
        for nid in plan.ii_nodes:
            if self.node_next_free[nid] > self.cycle:
                return False
        return True

    # ---- stepping

    def step(self) -> FabricEvents:
        ev = FabricEvents()
        t = self.cycle
        # deliver due beats; a full port stalls its deliveries (in order)
        blocked_ports = set()
        requeue = []
        while self.events and self.events[0][0] <= t:
            entry = self.events.pop(0)
            _, _, pid, vals, pred = entry
            fifo = self.out_fifos[pid]
            if pid in blocked_ports or fifo.landed_full():
                blocked_ports.add(pid)
                requeue.append((t + 1,) + entry[1:])
                continue
            fifo.pending -= 1
            fifo.push_beat(vals, pred)
            ev.delivered.append((pid, (vals, pred)))
        if requeue:
            self.events.extend(requeue)
            self.events.sort()
        for df in sorted(self.plans):
            if self.fire_check(df):
                self._fire(df, t, ev)
        self.cycle += 1
        return ev

    def _fire(self, df: int, t: int, ev: FabricEvents):
        plan = self.plans[df]
        beats = {}
        for pid in plan.in_ports:
            beats[pid] = self.in_fifos[pid].read()
        width = plan.data_width
        # firing predicate from full-width operand beats
        pred = None
        for pid in plan.in_ports:
            fifo = self.in_fifos[pid]
            if fifo.width == width and width > 1:
                p = beats[pid][1]
                pred = p if pred is None else tuple(a and b for a, b in zip(pred, p))
        if pred is None:
            pred = (True,) * width

        node_vals: list[float] = [0.0] * len(plan.ops)
        node_emit: list[bool] = [True] * len(plan.ops)
        for idx, (opcode, operands, nid) in enumerate(plan.ops):
            args = []
            for kind, a, b in operands:
                if kind == "port":
                    vals, p = beats[a]
                    args.append(vals[b] if p[b] else 0.0)
                else:
                    args.append(node_vals[a])
            if opcode == "add":
                v = args[0] + args[1]
            elif opcode == "sub":
                v = args[0] - args[1]
            elif opcode == "mul":
                v = args[0] * args[1]
            elif opcode == "div":
                v = _div(args[0], args[1])
            elif opcode == "sqrt":
                v = _sqrt(args[0])
            elif opcode == "cmp":
                v = 1.0 if args[0] < args[1] else 0.0
            elif opcode == "select":
                v = args[1] if args[0] != 0.0 else args[2]
            elif opcode == "acc":
                s = self.acc_state[nid] + args[0]
                if args[1] != 0.0:
                    v = s
                    self.acc_state[nid] = 0.0
                    node_emit[idx] = True
                else:
                    v = s
                    self.acc_state[nid] = s
                    node_emit[idx] = False
            else:  # pragma: no cover
                raise FabricError(f"unknown opcode {opcode}")
            node_vals[idx] = v
        for nid in plan.ii_nodes:
            self.node_next_free[nid] = t + FU_INIT_INTERVAL["div"]

        temporal_extra = 0
        if plan.temporal_nodes:
            temporal_extra = self._temporal_delay(plan, t)
            kind = "temporal" if plan.kind == "temporal" else "dedicated"
        else:
            kind = plan.kind
        ev.fired.append((df, kind))
        self.total_firings += 1

        for pid in plan.out_ports:
            lanes, offset, _gate = plan.out_plan[pid]
            out_vals, out_pred, emit = [], [], True
            for lane_src in lanes:
                if lane_src is None:
                    out_vals.append(0.0)
                    out_pred.append(False)
                    continue
                if lane_src[0] == "port":
                    vals, p = beats[lane_src[1]]
                    out_vals.append(vals[lane_src[2]] if p[lane_src[2]] else 0.0)
                    out_pred.append(p[lane_src[2]])
                else:
                    out_vals.append(node_vals[lane_src[1]])
                    opcode = plan.ops[lane_src[1]][0]
                    if opcode == "acc":
                        emit = emit and node_emit[lane_src[1]]
                        out_pred.append(True)
                    else:
                        w = len(lanes)
                        out_pred.append(pred[len(out_pred)] if w == width else True)
            if not emit:
                continue
            if not any(out_pred):
                continue
            fifo = self.out_fifos[pid]
            ready = t + offset + temporal_extra
            last = self.last_delivery.get(pid, -1)
            if ready <= last:
                ready = last + 1
            self.last_delivery[pid] = ready
            fifo.pending += 1
            self._seq += 1
            self.events.append((ready, self._seq, pid, tuple(out_vals), tuple(out_pred)))
        self.events.sort()

    def _temporal_delay(self, plan: _DfPlan, t: int) -> int:
        """Serialize this firing's temporal instructions, one per FU per cycle.

        Returns the extra delay past the static path latency experienced by
        the slowest temporal instruction chain.
        """
        extra = 0
        dyn_done: dict[str, int] = {}
        for nid in plan.temporal_nodes:
            lat = FU_LATENCY[self.dfg.nodes[nid].opcode]
            fu = self._temporal_fu_of.get(nid, 0)
            nominal = t + plan.depth[nid]
            start = max(nominal - lat, self.temporal_fu_free.get(fu, 0), t)
            for pred in plan.temporal_preds.get(nid, ()):
                if pred in dyn_done:
                    start = max(start, dyn_done[pred])
            ii = FU_INIT_INTERVAL.get(self.dfg.nodes[nid].opcode, 1)
            self.temporal_fu_free[fu] = start + ii
            done = start + lat
            dyn_done[nid] = done
            extra = max(extra, done - nominal)
        return extra

    def drain(self) -> int:
        """Cycles until all in-flight values exit, with no new beats admitted."""
        worst = self.cycle
        for ready, _, _, _, _ in self.events:
            worst = max(worst, ready)
        for free in self.temporal_fu_free.values():
            worst = max(worst, free)
        return max(0, worst - self.cycle)

    def busy(self) -> bool:
        if self.events:
            return True
        for f in self.in_fifos.values():
            if f.beats or f.stage_vals:
                return True
        for f in self.out_fifos.values():
            if f.beats or f.pending:
                return True
        return False


def configure(desc: FabricDesc, dfg: DataflowGraph | None, placement=None) -> ConfiguredFabric:
    """Build a ready fabric; configuration time is desc.config_cycles()."""
    return ConfiguredFabric(desc, dfg, placement)
