"""Spatial compiler: place DFG nodes, route edges, equalize operand delays.

Placement is optimized by simulated annealing over node positions and port
attach columns (wirelength + capacity objectives); node-to-node edges are
then routed through the circuit-switched mesh with Pathfinder-style
congestion negotiation (history factor 1.5 per overused round). Port-to-node
connections are point-to-point links and consume no mesh links; their cost
is the manhattan distance from the port's attach column. Delay-equalization
pads are computed bottom-up afterwards; a link can absorb up to 8 cycles of
pad, longer equalization lengthens the route.

verify_placement re-checks every invariant from scratch and is the test
oracle for the annealer.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .fabric import (FU_CLASS_OPS, FU_LATENCY, FabricDesc, edge_base_latency,
                     port_distance)
from .isa import DataflowGraph, split_port_lane

PAD_PER_LINK = 8
COST_LATENCY = 1.0
COST_OVERUSE = 10.0
COST_SPREAD = 0.1
HIST_FACTOR = 1.5


class ScheduleError(ValueError):
    pass


@dataclass
class Placement:
    """Mapping of DFG nodes to tiles plus routes and delay pads."""

    dfg: DataflowGraph
    node_tiles: dict = field(default_factory=dict)       # nid -> (x, y)
    temporal_insts: list = field(default_factory=list)   # [ [nid, ...] per FU ]
    port_bindings: dict = field(default_factory=dict)    # pid -> (dir, slot, col)
    routes: dict = field(default_factory=dict)           # (src,dst,slot) -> (links, pads)

    def temporal_of(self) -> dict:
        out = {}
        for fu, insts in enumerate(self.temporal_insts):
            for nid in insts:
                out[nid] = fu
        return out


@dataclass
class ScheduleCost:
    latency: int = 0
    overuse: int = 0
    spread: float = 0.0
    unroutable: int = 0
    pad_overflow: int = 0

    def total(self) -> float:
        return (COST_LATENCY * self.latency + COST_OVERUSE * self.overuse
                + COST_SPREAD * self.spread
                + 1000.0 * self.unroutable + 50.0 * self.pad_overflow)


# --------------------------------------------------------------------------
# Port binding (deterministic; kernels precompute the same assignment)


def bind_ports(dfg: DataflowGraph, desc: FabricDesc) -> dict:
    """First-fit slot binding by declaration order; smallest sufficient width."""
    bindings = {}
    for direction, ports, widths in (
        ("in", dfg.inports, desc.in_port_widths),
        ("out", dfg.outports, desc.out_port_widths),
    ):
        free = list(range(len(widths)))
        for pid, port in ports.items():
            candidates = [s for s in free if widths[s] >= port.width]
            if not candidates:
                raise ScheduleError(f"no free {direction} port slot of width {port.width}")
            candidates.sort(key=lambda s: (widths[s], s))
            slot = candidates[0]
            free.remove(slot)
            bindings[pid] = (direction, slot, 0)
    return bindings


def port_slot_map(dfg: DataflowGraph, desc: FabricDesc) -> dict:
    """port_id -> physical slot index, as the machine and generators see it."""
    return {pid: slot for pid, (_d, slot, _c) in bind_ports(dfg, desc).items()}


# --------------------------------------------------------------------------
# Geometry helpers


def _edge_endpoints(dfg: DataflowGraph):
    """Classify each edge: returns list of (edge, src_kind, src_base, dst_kind, dst_base)."""
    out = []
    for e in dfg.edges:
        sbase, _ = split_port_lane(e.src)
        dbase, _ = split_port_lane(e.dst)
        skind = "inport" if sbase in dfg.inports else "node"
        dkind = "outport" if dbase in dfg.outports else "node"
        out.append((e, skind, sbase, dkind, dbase))
    return out


# --------------------------------------------------------------------------
# Routing


def _dijkstra(desc: FabricDesc, src, dst, link_cost, blocked=frozenset()):
    """Deterministic least-cost tile path; returns list of directed links."""
    import heapq

    best = {src: 0.0}
    prev = {}
    heap = [(0.0, src)]
    while heap:
        d, loc = heapq.heappop(heap)
        if loc == dst:
            break
        if d > best.get(loc, 1e30):
            continue
        for nxt in desc.neighbors(loc):
            link = (loc, nxt)
            if link in blocked:
                continue
            nd = d + link_cost(link)
            if nd < best.get(nxt, 1e30) - 1e-12:
                best[nxt] = nd
                prev[nxt] = loc
                heapq.heappush(heap, (nd, nxt))
    if dst not in best:
        return None
    path = []
    loc = dst
    while loc != src:
        p = prev[loc]
        path.append((p, loc))
        loc = p
    path.reverse()
    return path


def route(edge_key, src_tile, dst_tile, desc: FabricDesc, used=None, hist=None):
    """Shortest available mesh path for one node-to-node edge.

    `used` maps links to demand from other routes; congested links are
    penalized by the Pathfinder history cost in `hist`.
    """
    used = used or {}
    hist = hist or {}
    if src_tile == dst_tile:
        return []

    def cost(link):
        return (1.0 + 6.0 * used.get(link, 0) * hist.get(link, 1.0)
                + 2.0 * (hist.get(link, 1.0) - 1.0))

    return _dijkstra(desc, src_tile, dst_tile, cost)


def _route_all(dfg, desc, node_loc, temporal_set, max_rounds=24):
    """Pathfinder negotiation over all node-to-node mesh edges."""
    mesh_edges = []
    for e, skind, sbase, dkind, dbase in _edge_endpoints(dfg):
        if skind == "node" and dkind == "node":
            if sbase in temporal_set and dbase in temporal_set:
                continue  # embedded diagonal network, no mesh links
            mesh_edges.append((e, sbase, dbase))
    mesh_edges.sort(key=lambda t: (-_manhattan(node_loc[t[1]], node_loc[t[2]]),
                                   t[0].src, t[0].dst, t[0].slot))
    hist: dict = {}
    routes = {}
    unroutable = 0
    for _ in range(max_rounds):
        used: dict = {}
        routes = {}
        unroutable = 0
        for e, sbase, dbase in mesh_edges:
            path = route((e.src, e.dst, e.slot), node_loc[sbase], node_loc[dbase],
                         desc, used, hist)
            if path is None:
                unroutable += 1
                continue
            for link in path:
                used[link] = used.get(link, 0) + 1
            routes[(e.src, e.dst, e.slot)] = path
        over = [l for l, c in used.items() if c > 1]
        if not over and not unroutable:
            return routes, 0, 0
        for l in over:
            hist[l] = hist.get(l, 1.0) * HIST_FACTOR
    # negotiation did not converge: sequential exclusive routing backstop
    claimed: set = set()
    routes = {}
    unroutable = 0
    for e, sbase, dbase in mesh_edges:
        if node_loc[sbase] == node_loc[dbase]:
            routes[(e.src, e.dst, e.slot)] = []
            continue
        path = _dijkstra(desc, node_loc[sbase], node_loc[dbase],
                         lambda link: 1.0, blocked=frozenset(claimed))
        if path is None:
            unroutable += 1
            continue
        claimed.update(path)
        routes[(e.src, e.dst, e.slot)] = path
    return routes, 0, unroutable


def _manhattan(a, b) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


# --------------------------------------------------------------------------
# Delay equalization


def _edge_latencies(dfg, desc, node_loc, temporal_set, bindings, routes):
    """Raw (pre-pad) latency of every edge, keyed like Placement.routes."""
    lat = {}
    for e in dfg.edges:
        lat[(e.src, e.dst, e.slot)] = edge_base_latency(
            desc, dfg, e, node_loc, temporal_set, bindings, routes)
    return lat


def _equalize(dfg: DataflowGraph, lat: dict):
    """Compute per-edge pads so all operands of each join arrive together.

    Returns (pads dict keyed like routes, depth dict, pad_overflow count,
    max latency). Output-port lanes are joins too.
    """
    pads = {}
    depth = {}
    overflow = 0
    max_latency = 0
    for df in dfg.dataflow_ids():
        for n in dfg.topo_nodes(df):
            ins = dfg.node_inputs(n.node_id)
            arr = []
            for e in ins:
                sbase, _ = split_port_lane(e.src)
                base_depth = 0 if sbase in dfg.inports else depth[sbase]
                arr.append(base_depth + lat[(e.src, e.dst, e.slot)])
            target = max(arr) if arr else 0
            for e, a in zip(ins, arr):
                key = (e.src, e.dst, e.slot)
                pad = target - a
                pads[key] = pad
                cap = PAD_PER_LINK * max(1, lat[key])
                if pad > cap:
                    overflow += pad - cap
            depth[n.node_id] = target + FU_LATENCY[n.opcode]
    # equalize output-port lanes
    for pid in dfg.outports:
        arr = []
        keys = []
        for e in dfg.edges:
            dbase, _ = split_port_lane(e.dst)
            if dbase != pid:
                continue
            sbase, _ = split_port_lane(e.src)
            base_depth = 0 if sbase in dfg.inports else depth[sbase]
            key = (e.src, e.dst, e.slot)
            arr.append(base_depth + lat[key])
            keys.append(key)
        if not arr:
            continue
        target = max(arr)
        max_latency = max(max_latency, target)
        for key, a in zip(keys, arr):
            pad = target - a
            pads[key] = pad
            cap = PAD_PER_LINK * max(1, lat[key])
            if pad > cap:
                overflow += pad - cap
    return pads, depth, overflow, max_latency


# --------------------------------------------------------------------------
# Scheduling (annealing over placement + port columns)


def _compatible_tiles(desc: FabricDesc, opcode: str):
    return [t for t in desc.dedicated_tiles() if opcode in FU_CLASS_OPS[t.fu]]


def _initial_place(dfg, desc, rng):
    """Greedy seed: critical nodes prefer dedicated tiles, noncritical temporal."""
    node_tiles = {}
    temporal = [[] for _ in desc.temporal_tiles()]
    free = {(t.x, t.y) for t in desc.dedicated_tiles()}

    def take_dedicated(n):
        cands = [(t.x, t.y) for t in _compatible_tiles(desc, n.opcode) if (t.x, t.y) in free]
        if not cands:
            return False
        # prefer central tiles but jitter among the closest few so retry
        # attempts start from different congestion patterns
        cx, cy = desc.width / 2, desc.height / 2
        cands.sort(key=lambda p: (abs(p[0] - cx) + abs(p[1] - cy), p))
        loc = cands[rng.randrange(min(3, len(cands)))]
        free.discard(loc)
        node_tiles[n.node_id] = loc
        return True

    def take_temporal(n):
        caps = [desc.temporal_tiles()[i].capacity - len(temporal[i])
                for i in range(len(temporal))]
        if not caps or max(caps) <= 0:
            return False
        fu = max(range(len(caps)), key=lambda i: (caps[i], -i))
        temporal[fu].append(n.node_id)
        return True

    for df in dfg.dataflow_ids():
        for n in dfg.topo_nodes(df):
            if n.region == "noncritical":
                if not take_temporal(n) and not take_dedicated(n):
                    raise ScheduleError(f"no capacity for node {n.node_id}")
            else:
                if not take_dedicated(n) and not take_temporal(n):
                    raise ScheduleError(
                        f"no {dfg.nodes[n.node_id].opcode} capacity for node {n.node_id}")
    return node_tiles, temporal


def _locations(desc, node_tiles, temporal):
    loc = dict(node_tiles)
    ttiles = desc.temporal_tiles()
    for fu, insts in enumerate(temporal):
        for nid in insts:
            loc[nid] = (ttiles[fu].x, ttiles[fu].y)
    return loc


def _proxy_cost(dfg, desc, node_tiles, temporal, bindings):
    """Cheap annealing objective: wirelength + depth proxy + temporal spread.

    Routing and pads are computed once per annealing phase, not per move.
    """
    temporal_set = set()
    for insts in temporal:
        temporal_set.update(insts)
    loc = _locations(desc, node_tiles, temporal)
    wire = 0
    depth = {}
    maxdepth = 0
    out_demand: dict = {}
    in_demand: dict = {}
    for df in dfg.dataflow_ids():
        for n in dfg.topo_nodes(df):
            arr = []
            for e in dfg.node_inputs(n.node_id):
                sbase, _ = split_port_lane(e.src)
                if sbase in dfg.inports:
                    d, s, col = bindings[sbase]
                    dist = port_distance(desc, "in", col, loc[n.node_id])
                    base = 0
                else:
                    if sbase in temporal_set and n.node_id in temporal_set:
                        dist = 0
                    else:
                        dist = max(1, _manhattan(loc[sbase], loc[n.node_id]))
                        if loc[sbase] != loc[n.node_id]:
                            out_demand[loc[sbase]] = out_demand.get(loc[sbase], 0) + 1
                            in_demand[loc[n.node_id]] = in_demand.get(loc[n.node_id], 0) + 1
                    base = depth[sbase]
                wire += dist
                arr.append(base + dist)
            depth[n.node_id] = (max(arr) if arr else 0) + FU_LATENCY[n.opcode]
            maxdepth = max(maxdepth, depth[n.node_id])
    for e, skind, sbase, dkind, dbase in _edge_endpoints(dfg):
        if dkind != "outport":
            continue
        d, s, col = bindings[dbase]
        if skind == "inport":
            wire += 1
        else:
            wire += port_distance(desc, "out", col, loc[sbase])
    counts = [len(i) for i in temporal] or [0]
    spread = max(counts) - min(counts)
    # criticality preference: critical nodes want dedicated tiles (temporal
    # FUs serialize them), noncritical ones want to vacate dedicated tiles
    misplaced = 0.0
    for nid, n in dfg.nodes.items():
        if n.region == "critical" and nid in temporal_set:
            misplaced += 25.0
        elif n.region == "noncritical" and nid not in temporal_set:
            misplaced += 6.0
    # pin-density congestion proxy: mesh-link demand cannot exceed the
    # tile's physical link count, and crowding invites overuse
    congest = 0.0
    for demand, kind in ((out_demand, "out"), (in_demand, "in")):
        for tile, d in demand.items():
            cap = len(desc.neighbors(tile))
            if d > cap - 1:
                congest += 12.0 * (d - cap + 1) ** 2
    return (COST_LATENCY * maxdepth + 0.5 * wire + COST_SPREAD * spread
            + misplaced + congest)


def _lengthen(path, desc, used, min_len):
    """Insert zigzag detours through free links until len(path) >= min_len."""
    if not path:
        return None  # same-tile edges cannot be lengthened
    path = list(path)
    guard = 0
    while len(path) < min_len and guard < 64:
        guard += 1
        done = False
        for idx, (a, b) in enumerate(path):
            for c in desc.neighbors(a):
                if c == b:
                    continue
                l1, l2 = (a, c), (c, b)
                if b not in desc.neighbors(c):
                    continue
                if used.get(l1, 0) or used.get(l2, 0):
                    continue
                if l1 in path or l2 in path:
                    continue
                path[idx:idx + 1] = [l1, l2]
                used[l1] = used.get(l1, 0) + 1
                used[l2] = used.get(l2, 0) + 1
                used[(a, b)] = used.get((a, b), 1) - 1
                done = True
                break
            if done:
                break
        if not done:
            return None
    return path if len(path) >= min_len else None


def _finalize(dfg, desc, node_tiles, temporal, bindings):
    """Route, pad, and package a Placement; returns (placement, cost) or raises."""
    temporal_set = set()
    for insts in temporal:
        temporal_set.update(insts)
    loc = _locations(desc, node_tiles, temporal)
    routes, overuse, unroutable = _route_all(dfg, desc, loc, temporal_set)
    if unroutable or overuse:
        raise ScheduleError(
            f"infeasible: {unroutable} unroutable edges, {overuse} overused links")
    lat = _edge_latencies(dfg, desc, loc, temporal_set, bindings, routes)
    pads, depth, overflow, max_latency = _equalize(dfg, lat)
    if overflow:
        # lengthen mesh routes whose pad exceeds capacity, then re-equalize
        used: dict = {}
        for path in routes.values():
            for link in path:
                used[link] = used.get(link, 0) + 1
        for _ in range(8):
            changed = False
            for key, pad in sorted(pads.items()):
                if key not in routes:
                    continue
                cap = PAD_PER_LINK * max(1, lat[key])
                if pad <= cap:
                    continue
                need = -(-pad // PAD_PER_LINK)  # ceil
                newpath = _lengthen(routes[key], desc, used, need)
                if newpath is not None:
                    routes[key] = newpath
                    changed = True
            lat = _edge_latencies(dfg, desc, loc, temporal_set, bindings, routes)
            pads, depth, overflow, max_latency = _equalize(dfg, lat)
            if not overflow or not changed:
                break
        if overflow:
            raise ScheduleError(f"infeasible: pad overflow {overflow} beyond link capacity")
    counts = [len(i) for i in temporal] or [0]
    cost = ScheduleCost(latency=max_latency, overuse=0,
                        spread=max(counts) - min(counts), unroutable=0, pad_overflow=0)
    full_routes = {}
    for e, skind, sbase, dkind, dbase in _edge_endpoints(dfg):
        key = (e.src, e.dst, e.slot)
        full_routes[key] = (routes.get(key, []), pads.get(key, 0))
    placement = Placement(dfg=dfg, node_tiles=dict(node_tiles),
                          temporal_insts=[list(t) for t in temporal],
                          port_bindings=dict(bindings), routes=full_routes)
    return placement, cost


def schedule(dfg: DataflowGraph, desc: FabricDesc, seed: int = 0, iters: int = 800):
    """Anneal a legal Placement; raises ScheduleError when infeasible.

    Deterministic for a fixed (dfg, desc, seed, iters).
    """
    import math

    rng = random.Random(seed)
    base_bindings = bind_ports(dfg, desc)
    cols = {}
    for i, pid in enumerate(dfg.inports):
        cols[pid] = (2 * i + 1) % desc.width
    for i, pid in enumerate(dfg.outports):
        cols[pid] = (2 * i + 1) % desc.width
    bindings = {pid: (d, s, cols.get(pid, 0)) for pid, (d, s, _c) in base_bindings.items()}

    last_err = None
    for attempt in range(4):
        node_tiles, temporal = _initial_place(dfg, desc, rng)
        state = (node_tiles, temporal, dict(bindings))
        cur = _proxy_cost(dfg, desc, *state)
        best_state = (dict(state[0]), [list(t) for t in state[1]], dict(state[2]))
        best_cost = cur
        # temperature from the spread of 50 probe moves
        probe = []
        for _ in range(50):
            cand = _random_move(dfg, desc, state, rng)
            if cand is not None:
                probe.append(_proxy_cost(dfg, desc, *cand))
        if len(probe) >= 2:
            mean = sum(probe) / len(probe)
            temp = max((sum((p - mean) ** 2 for p in probe) / len(probe)) ** 0.5, 0.5)
        else:
            temp = 5.0
        for it in range(iters):
            cand = _random_move(dfg, desc, state, rng)
            if cand is None:
                continue
            c = _proxy_cost(dfg, desc, *cand)
            delta = c - cur
            if delta <= 0 or rng.random() < math.exp(-delta / max(temp, 1e-9)):
                state = cand
                cur = c
                if c < best_cost - 1e-9:
                    best_cost = c
                    best_state = (dict(state[0]), [list(t) for t in state[1]],
                                  dict(state[2]))
            if it % 100 == 99:
                temp *= 0.98
        try:
            placement, _cost = _finalize(dfg, desc, *best_state)
            return placement
        except ScheduleError as err:
            last_err = err
            continue
    raise last_err


def _random_move(dfg, desc, state, rng):
    node_tiles, temporal, bindings = state
    node_tiles = dict(node_tiles)
    temporal = [list(t) for t in temporal]
    bindings = dict(bindings)
    kind = rng.random()
    nids = sorted(dfg.nodes)
    if kind < 0.55 and nids:
        nid = nids[rng.randrange(len(nids))]
        opcode = dfg.nodes[nid].opcode
        ttiles = desc.temporal_tiles()
        options = []
        occupied = {v: k for k, v in node_tiles.items()}
        for t in _compatible_tiles(desc, opcode):
            options.append(("ded", (t.x, t.y)))
        for fu in range(len(ttiles)):
            if len(temporal[fu]) < ttiles[fu].capacity or nid in temporal[fu]:
                options.append(("tmp", fu))
        if not options:
            return None
        choice = options[rng.randrange(len(options))]
        # remove nid from wherever it is
        if nid in node_tiles:
            del node_tiles[nid]
        for t in temporal:
            if nid in t:
                t.remove(nid)
        if choice[0] == "ded":
            other = occupied.get(choice[1])
            if other is not None and other != nid:
                # swap: other takes nid's nothing -> push other to temporal if fits
                if dfg.nodes[other].opcode in FU_CLASS_OPS[desc.tiles[choice[1]].fu]:
                    # find other a new home: old location of nid if compatible
                    return None
                return None
            node_tiles[nid] = choice[1]
        else:
            temporal[choice[1]].append(nid)
        return node_tiles, temporal, bindings
    if kind < 0.8 and nids:
        # swap two same-class dedicated nodes
        placed = sorted(node_tiles)
        if len(placed) < 2:
            return None
        a = placed[rng.randrange(len(placed))]
        b = placed[rng.randrange(len(placed))]
        if a == b:
            return None
        ta, tb = node_tiles[a], node_tiles[b]
        if dfg.nodes[a].opcode not in FU_CLASS_OPS[desc.tiles[tb].fu]:
            return None
        if dfg.nodes[b].opcode not in FU_CLASS_OPS[desc.tiles[ta].fu]:
            return None
        node_tiles[a], node_tiles[b] = tb, ta
        return node_tiles, temporal, bindings
    pids = sorted(bindings)
    if not pids:
        return None
    pid = pids[rng.randrange(len(pids))]
    d, s, c = bindings[pid]
    bindings[pid] = (d, s, rng.randrange(desc.width))
    return node_tiles, temporal, bindings


# --------------------------------------------------------------------------
# Verification (independent legality checker)


def verify_placement(placement: Placement, dfg: DataflowGraph, desc: FabricDesc) -> list[str]:
    """Re-check every placement invariant from scratch; [] means ok."""
    v = []
    temporal_set = set()
    ttiles = desc.temporal_tiles()
    if len(placement.temporal_insts) > len(ttiles):
        v.append("more temporal FU lists than temporal FUs")
    for fu, insts in enumerate(placement.temporal_insts):
        if fu < len(ttiles) and len(insts) > ttiles[fu].capacity:
            v.append(f"temporal FU {fu} holds {len(insts)} > {ttiles[fu].capacity} instructions")
        for nid in insts:
            if nid in temporal_set:
                v.append(f"node {nid} placed on two temporal FUs")
            temporal_set.add(nid)
    # node coverage and tile legality
    seen_tiles = {}
    for nid in dfg.nodes:
        ded = nid in placement.node_tiles
        tmp = nid in temporal_set
        if ded and tmp:
            v.append(f"node {nid} placed both dedicated and temporal")
        if not ded and not tmp:
            v.append(f"node {nid} not placed")
        if ded:
            loc = placement.node_tiles[nid]
            tile = desc.tiles.get(loc)
            if tile is None:
                v.append(f"node {nid} on absent tile {loc}")
                continue
            if tile.kind != "dedicated":
                v.append(f"node {nid} dedicated-placed on {tile.kind} tile")
                continue
            if dfg.nodes[nid].opcode not in FU_CLASS_OPS[tile.fu]:
                v.append(f"node {nid} ({dfg.nodes[nid].opcode}) on {tile.fu} tile")
            if loc in seen_tiles:
                v.append(f"tile {loc} hosts {seen_tiles[loc]} and {nid}")
            seen_tiles[loc] = nid
    # port bindings
    used_slots = {"in": set(), "out": set()}
    for pid in list(dfg.inports) + list(dfg.outports):
        b = placement.port_bindings.get(pid)
        if b is None:
            v.append(f"port {pid} unbound")
            continue
        d, slot, col = b
        widths = desc.in_port_widths if d == "in" else desc.out_port_widths
        expect_dir = "in" if pid in dfg.inports else "out"
        if d != expect_dir:
            v.append(f"port {pid} bound with wrong direction {d}")
        if not (0 <= slot < len(widths)):
            v.append(f"port {pid} bound to absent slot {slot}")
            continue
        width = dfg.inports[pid].width if pid in dfg.inports else dfg.outports[pid].width
        if widths[slot] < width:
            v.append(f"port {pid} width {width} exceeds slot width {widths[slot]}")
        if slot in used_slots[d]:
            v.append(f"{d} slot {slot} bound twice")
        used_slots[d].add(slot)
        if not (0 <= col < desc.width):
            v.append(f"port {pid} attach column {col} outside grid")
    # routes: connectivity + exclusivity + pad capacity
    link_users: dict = {}
    loc = dict(placement.node_tiles)
    for fu, insts in enumerate(placement.temporal_insts):
        if fu < len(ttiles):
            for nid in insts:
                loc[nid] = (ttiles[fu].x, ttiles[fu].y)
    for e, skind, sbase, dkind, dbase in _edge_endpoints(dfg):
        key = (e.src, e.dst, e.slot)
        entry = placement.routes.get(key)
        if entry is None:
            v.append(f"edge {key} has no route")
            continue
        links, pads = entry
        if pads < 0:
            v.append(f"edge {key} has negative pad")
        if skind == "node" and dkind == "node":
            if sbase in temporal_set and dbase in temporal_set:
                if links:
                    v.append(f"temporal-internal edge {key} consumes mesh links")
                continue
            if sbase not in loc or dbase not in loc:
                continue
            # connectivity
            cur = loc[sbase]
            ok = True
            for a, b in links:
                if a != cur or b not in desc.tiles or b not in desc.neighbors(a):
                    ok = False
                    break
                cur = b
            if not ok or cur != loc[dbase]:
                v.append(f"edge {key} route does not connect {loc[sbase]}->{loc[dbase]}")
            for link in links:
                if link in link_users and link_users[link] != key:
                    v.append(f"link {link} carries two values ({link_users[link]} and {key})")
                link_users[link] = key
            if pads > PAD_PER_LINK * max(1, len(links)):
                v.append(f"edge {key} pad {pads} exceeds capacity")
        else:
            if pads > PAD_PER_LINK * max(1, _route_nominal_len(placement, desc, e, skind, sbase, dkind, dbase, loc)):
                v.append(f"edge {key} pad {pads} exceeds capacity")
    # delay equalization at joins (nodes and output ports)
    lat = {}
    for e, skind, sbase, dkind, dbase in _edge_endpoints(dfg):
        key = (e.src, e.dst, e.slot)
        entry = placement.routes.get(key)
        if entry is None:
            continue
        links, pads = entry
        if skind == "node" and dkind == "node":
            if sbase in temporal_set and dbase in temporal_set:
                base = 0
            else:
                base = len(links)
        else:
            base = _route_nominal_len(placement, desc, e, skind, sbase, dkind, dbase, loc)
        lat[key] = base + pads
    depth = {}
    for df in dfg.dataflow_ids():
        for n in dfg.topo_nodes(df):
            ins = dfg.node_inputs(n.node_id)
            arr = []
            for e in ins:
                sbase, _ = split_port_lane(e.src)
                base_depth = 0 if sbase in dfg.inports else depth.get(sbase, 0)
                arr.append(base_depth + lat.get((e.src, e.dst, e.slot), 0))
            if arr and max(arr) != min(arr):
                v.append(f"delay mismatch at node {n.node_id}: arrivals {sorted(set(arr))}")
            depth[n.node_id] = (max(arr) if arr else 0) + FU_LATENCY[n.opcode]
    for pid in dfg.outports:
        arr = []
        for e in dfg.edges:
            dbase, _ = split_port_lane(e.dst)
            if dbase != pid:
                continue
            sbase, _ = split_port_lane(e.src)
            base_depth = 0 if sbase in dfg.inports else depth.get(sbase, 0)
            arr.append(base_depth + lat.get((e.src, e.dst, e.slot), 0))
        if arr and max(arr) != min(arr):
            v.append(f"delay mismatch at output port {pid}: arrivals {sorted(set(arr))}")
    return v


def _route_nominal_len(placement, desc, e, skind, sbase, dkind, dbase, loc):
    if skind == "inport":
        d, slot, col = placement.port_bindings.get(sbase, ("in", 0, 0))
        if dkind == "outport":
            return 1
        if dbase not in loc:
            return 1
        return port_distance(desc, "in", col, loc[dbase])
    d, slot, col = placement.port_bindings.get(dbase, ("out", 0, 0))
    if sbase not in loc:
        return 1
    return port_distance(desc, "out", col, loc[sbase])


# --------------------------------------------------------------------------
# Placement file format


def format_placement(p: Placement) -> str:
    lines = []
    for nid in sorted(p.node_tiles):
        x, y = p.node_tiles[nid]
        lines.append(f"place {nid} {x},{y}")
    for fu, insts in enumerate(p.temporal_insts):
        if insts:
            lines.append(f"temporal {fu} " + ",".join(insts))
    for pid in sorted(p.port_bindings):
        d, slot, col = p.port_bindings[pid]
        lines.append(f"port {pid} {d} slot={slot} col={col}")
    for key in sorted(p.routes, key=lambda k: (k[0], k[1], k[2])):
        links, pads = p.routes[key]
        src, dst, slot = key
        chain = ">".join(f"{a[0]},{a[1]}" for a, b in links)
        if links:
            chain += f">{links[-1][1][0]},{links[-1][1][1]}"
        lines.append(f"route {src}:{dst}:{slot} {chain or '-'} pad={pads}")
    return "\n".join(lines) + "\n"


def parse_placement(text: str, dfg: DataflowGraph, desc: FabricDesc) -> Placement:
    node_tiles = {}
    temporal = [[] for _ in desc.temporal_tiles()]
    bindings = {}
    routes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "place":
                x, y = (int(t) for t in parts[2].split(","))
                node_tiles[parts[1]] = (x, y)
            elif parts[0] == "temporal":
                fu = int(parts[1])
                temporal[fu] = parts[2].split(",")
            elif parts[0] == "port":
                pid, d = parts[1], parts[2]
                kv = dict(t.split("=", 1) for t in parts[3:])
                bindings[pid] = (d, int(kv["slot"]), int(kv["col"]))
            elif parts[0] == "route":
                src, dst, slot = parts[1].rsplit(":", 2)
                chain = parts[2]
                pads = 0
                for t in parts[3:]:
                    if t.startswith("pad="):
                        pads = int(t[4:])
                links = []
                if chain != "-":
                    pts = [tuple(int(v) for v in c.split(",")) for c in chain.split(">")]
                    links = list(zip(pts[:-1], pts[1:]))
                routes[(src, dst, int(slot))] = (links, pads)
            else:
                raise ScheduleError(f"unknown directive {parts[0]!r}")
        except (IndexError, ValueError, KeyError) as err:
            raise ScheduleError(f"placement line {lineno}: {err}") from None
    return Placement(dfg=dfg, node_tiles=node_tiles, temporal_insts=temporal,
                     port_bindings=bindings, routes=routes)
