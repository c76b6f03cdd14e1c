"""Scheduler: legality of annealed placements, routing, delay equalization."""

import random

import pytest

from revelsim.fabric import FU_CLASS_OPS, FU_LATENCY, default_fabric
from revelsim.isa import DataflowGraph, DfgEdge, DfgNode, DfgPort, parse_dfg
from revelsim.scheduler import (Placement, ScheduleError, bind_ports,
                                format_placement, parse_placement, route,
                                schedule, verify_placement)

DESC = default_fabric()


def random_dfg(rng, max_nodes=26):
    """A feasible random DFG: opcode mix within FU totals + temporal slack."""
    budget = {"add": 14, "mul": 9, "divsqrt": 3}
    n_nodes = rng.randrange(2, max_nodes + 1)
    nodes, edges = {}, []
    avail = []
    width = rng.choice([1, 1, 2, 4])
    inports = {f"I{k}": DfgPort(f"I{k}", width, 0) for k in range(2)}
    outports = {"Out": DfgPort("Out", 1, 0)}
    pool = ["add"] * 20 + ["sub"] * 8 + ["mul"] * 9 + ["cmp", "select"] * 2 + ["div", "sqrt"] * 3
    made = 0
    for i in range(n_nodes):
        op = pool[rng.randrange(len(pool))]
        cls = "mul" if op == "mul" else ("divsqrt" if op in ("div", "sqrt") else "add")
        if budget[cls] <= 0:
            op, cls = "add", "add"
            if budget[cls] <= 0:
                break
        budget[cls] -= 1
        nid = f"n{made}"
        made += 1
        region = "noncritical" if rng.random() < 0.2 else "critical"
        nodes[nid] = DfgNode(nid, op, 0, region)
        arity = {"sqrt": 1, "select": 3}.get(op, 2)
        # operands from a recency window keep join-delay differences
        # within the pad budget (feasible by construction)
        window = avail[-4:]
        for slot in range(arity):
            if window and rng.random() < 0.7:
                src = window[rng.randrange(len(window))]
            else:
                src = f"I{rng.randrange(2)}" + (f".{rng.randrange(width)}" if width > 1 else "")
            edges.append(DfgEdge(src, nid, slot=slot))
        avail.append(nid)
    edges.append(DfgEdge(avail[-1], "Out.0", slot=0))
    return DataflowGraph(nodes, edges, inports, outports,
                         name=f"rand{rng.random()}")


def test_one_node_placement():
    g = parse_dfg("""
    inport A width=1 df=0
    inport B width=1 df=0
    outport O width=1 df=0
    node n0 add df=0
    edge A n0 slot=0
    edge B n0 slot=1
    edge n0 O slot=0
    """, name="sched1")
    pl = schedule(g, DESC, seed=0, iters=150)
    assert verify_placement(pl, g, DESC) == []
    assert len(pl.node_tiles) + sum(len(t) for t in pl.temporal_insts) == 1
    for key, (links, pads) in pl.routes.items():
        if key[0] in g.inports or key[1].split(".")[0] in g.outports:
            continue
        assert links == []


def test_diamond_delay_equalization():
    g = parse_dfg("""
    inport A width=1 df=0
    inport Z width=1 df=0
    outport O width=1 df=0
    node s add df=0
    node b mul df=0
    node c add df=0
    node d add df=0
    edge A s slot=0
    edge Z s slot=1
    edge s b slot=0
    edge s b slot=1
    edge s c slot=0
    edge s c slot=1
    edge b d slot=0
    edge c d slot=1
    edge d O slot=0
    """, name="sched_diamond")
    pl = schedule(g, DESC, seed=3, iters=300)
    assert verify_placement(pl, g, DESC) == []
    # the two paths into d see different FU latencies (mul=2 vs add=1), so
    # there must be nonzero pad or route length difference compensating
    lat = {}
    for e in g.edges:
        links, pads = pl.routes[(e.src, e.dst, e.slot)]
        lat[(e.src, e.dst)] = len(links) + pads
    a_path = FU_LATENCY["mul"] + lat[("b", "d")]
    b_path = FU_LATENCY["add"] + lat[("c", "d")]
    assert a_path == b_path


def test_hand_built_unequal_delays_flagged():
    g = parse_dfg("""
    inport A width=1 df=0
    outport O width=1 df=0
    node b mul df=0
    node c add df=0
    node d add df=0
    edge A b slot=0
    edge A b slot=1
    edge A c slot=0
    edge A c slot=1
    edge b d slot=0
    edge c d slot=1
    edge d O slot=0
    """, name="sched_bad")
    pl = schedule(g, DESC, seed=1, iters=300)
    assert verify_placement(pl, g, DESC) == []
    # zero out all pads: the join at d must now be flagged
    broken = Placement(
        dfg=pl.dfg, node_tiles=dict(pl.node_tiles),
        temporal_insts=[list(t) for t in pl.temporal_insts],
        port_bindings=dict(pl.port_bindings),
        routes={k: (links, 0) for k, (links, pads) in pl.routes.items()},
    )
    v = verify_placement(broken, g, DESC)
    assert any("delay mismatch" in msg for msg in v)


def test_temporal_capacity_violation_detected():
    g = parse_dfg("""
    inport A width=1 df=0
    outport O width=1 df=0
    node n0 add df=0
    edge A n0 slot=0
    edge A n0 slot=1
    edge n0 O slot=0
    """, name="sched_cap")
    pl = schedule(g, DESC, seed=0, iters=100)
    over = Placement(dfg=pl.dfg, node_tiles={},
                     temporal_insts=[["n0"] * 33, []],
                     port_bindings=dict(pl.port_bindings),
                     routes=dict(pl.routes))
    v = verify_placement(over, g, DESC)
    assert any("capacity" in msg or "instructions" in msg for msg in v)


def test_dedicated_overflow_spills_to_temporal():
    # a 31-node balanced add tree exceeds the 14 dedicated add tiles; a
    # legal placement must spill instructions into the temporal region
    nodes, edges = {}, []
    inports = {"A": DfgPort("A", 1, 0), "B": DfgPort("B", 1, 0)}
    outports = {"O": DfgPort("O", 1, 0)}
    layer = []
    made = 0
    for i in range(16):
        nid = f"n{made}"; made += 1
        nodes[nid] = DfgNode(nid, "add", 0, "critical")
        edges.append(DfgEdge("A", nid, slot=0))
        edges.append(DfgEdge("B", nid, slot=1))
        layer.append(nid)
    while len(layer) > 1:
        nxt = []
        for a, b in zip(layer[0::2], layer[1::2]):
            nid = f"n{made}"; made += 1
            nodes[nid] = DfgNode(nid, "add", 0, "critical")
            edges.append(DfgEdge(a, nid, slot=0))
            edges.append(DfgEdge(b, nid, slot=1))
            nxt.append(nid)
        layer = nxt
    edges.append(DfgEdge(layer[0], "O.0", slot=0))
    g = DataflowGraph(nodes, edges, inports, outports, name="sched_spill")
    assert made == 31
    pl = schedule(g, DESC, seed=2, iters=500)
    assert verify_placement(pl, g, DESC) == []
    spilled = sum(len(t) for t in pl.temporal_insts)
    assert spilled >= 31 - 26


def test_route_adjacent_one_hop():
    path = route(("a", "b", 0), (1, 1), (2, 1), DESC)
    assert path == [((1, 1), (2, 1))]


def test_route_avoids_used_link():
    used = {((1, 1), (2, 1)): 1}
    path = route(("a", "b", 0), (1, 1), (2, 1), DESC, used=used, hist={})
    assert path is not None
    assert ((1, 1), (2, 1)) not in path or len(path) > 1


def test_temporal_internal_edges_consume_no_links():
    g = parse_dfg("""
    inport A width=1 df=0
    outport O width=1 df=0
    node t0 add df=0 region=noncrit
    node t1 add df=0 region=noncrit
    edge A t0 slot=0
    edge A t0 slot=1
    edge t0 t1 slot=0
    edge A t1 slot=1
    edge t1 O slot=0
    """, name="sched_tmp")
    pl = schedule(g, DESC, seed=0, iters=300)
    assert verify_placement(pl, g, DESC) == []
    placed_temporally = {n for t in pl.temporal_insts for n in t}
    if {"t0", "t1"} <= placed_temporally:
        links, pads = pl.routes[("t0", "t1", 0)]
        assert links == []


def test_annealing_determinism():
    g = random_dfg(random.Random(123))
    a = schedule(g, DESC, seed=5, iters=250)
    b = schedule(g, DESC, seed=5, iters=250)
    assert format_placement(a) == format_placement(b)


def test_placement_file_roundtrip():
    g = random_dfg(random.Random(7))
    pl = schedule(g, DESC, seed=1, iters=250)
    text = format_placement(pl)
    again = parse_placement(text, g, DESC)
    assert verify_placement(again, g, DESC) == []
    assert format_placement(again) == text


def test_bind_ports_width_compatibility():
    g = parse_dfg("""
    inport A width=8 df=0
    inport B width=8 df=0
    inport C width=1 df=0
    outport O width=4 df=0
    node n0 add df=0
    edge A.0 n0 slot=0
    edge B.0 n0 slot=1
    edge n0 O.0 slot=0
    edge C O.1 slot=0
    edge A.1 O.2 slot=0
    edge A.2 O.3 slot=0
    """, name="sched_bind")
    b = bind_ports(g, DESC)
    widths = DESC.in_port_widths
    for pid, (d, slot, col) in b.items():
        want = (g.inports.get(pid) or g.outports[pid]).width
        have = (DESC.in_port_widths if d == "in" else DESC.out_port_widths)[slot]
        assert have >= want
    slots = [s for d, s, c in b.values() if d == "in"]
    assert len(set(slots)) == len(slots)


def test_randomized_dfgs_verify(seed_count=30):
    rng = random.Random(99)
    for i in range(seed_count):
        g = random_dfg(rng)
        pl = schedule(g, DESC, seed=i, iters=300)
        v = verify_placement(pl, g, DESC)
        assert v == [], (i, v)
