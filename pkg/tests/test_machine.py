"""Lane and machine: issue rules, barriers, arbitration, stats, determinism."""

import numpy as np
import pytest

from revelsim.fabric import default_fabric
from revelsim.isa import Command, parse_dfg, parse_program
from revelsim.kernels.common import (barrier, config, const, local_ld,
                                     local_st, pat1, pat2, shared_ld,
                                     shared_st, wait, xfer, placements_for)
from revelsim.lane import QUEUE_DEPTH, Lane, QueueEntry
from revelsim.machine import (CATEGORIES, Machine, MachineConfig, SimDeadlock,
                              SimStats, classify_cycle, load_memory_image,
                              save_memory_image)
from revelsim.lane import LaneFlags

ADD_DFG = parse_dfg("""
inport A width=1 df=0
inport B width=1 df=0
outport O width=1 df=0
node n0 add df=0
edge A n0 slot=0
edge B n0 slot=1
edge n0 O slot=0
""", name="m_add")

WIRE_DFG = parse_dfg("""
inport A width=1 df=0
outport O width=1 df=0
edge A.0 O.0 slot=0
""", name="m_wire")

_PL = {}


def placements(dfg):
    if dfg.name not in _PL:
        _PL.update(placements_for({dfg.name: dfg}))
    return {dfg.name: _PL[dfg.name]}


def slots(dfg):
    from revelsim.scheduler import bind_ports
    return {p: b[1] for p, b in bind_ports(dfg, default_fabric()).items()}


def run_program(cmds, dfg, lanes=1, init_shared=None, max_cycles=100000):
    m = Machine(MachineConfig(lane_count=lanes))
    res = m.run(cmds, dfgs={dfg.name: dfg}, placements=placements(dfg),
                init_shared=init_shared, max_cycles=max_cycles)
    return m, res


def test_queue_capacity_backpressure():
    lane = Lane(0, MachineConfig())
    for _ in range(QUEUE_DEPTH):
        assert lane.enqueue(QueueEntry(Command(kind="barrier", lane_mask=1)))
    assert not lane.enqueue(QueueEntry(Command(kind="barrier", lane_mask=1)))


def test_add_program_end_to_end():
    s = slots(ADD_DFG)
    cmds = [config("m_add", 1),
            const(2, 3, pat1(1, 3), s["A"], 1),
            const(10, 20, pat1(1, 3), s["B"], 1),
            local_st(s["O"], 0, pat1(1, 4), 1),
            wait(1)]
    m, res = run_program(cmds, ADD_DFG)
    assert list(res.local_mems[0][:4]) == [12.0, 12.0, 12.0, 23.0]
    assert res.stats.check_partition()


def test_determinism_bit_identical():
    s = slots(ADD_DFG)
    cmds = [config("m_add", 1),
            const(1, 2, pat2(cj=0, nj=3, ci=1, ni=2), s["A"], 1),
            const(5, 6, pat2(cj=0, nj=3, ci=1, ni=2), s["B"], 1),
            local_st(s["O"], 0, pat1(1, 9), 1),
            wait(1)]
    runs = [run_program(cmds, ADD_DFG)[1] for _ in range(2)]
    assert runs[0].cycles == runs[1].cycles
    assert np.array_equal(runs[0].local_mems[0], runs[1].local_mems[0])
    assert runs[0].stats.to_csv() == runs[1].stats.to_csv()


def test_barrier_orders_store_then_load():
    # store 4 values, barrier st, reload them through the wire into memory
    s = slots(WIRE_DFG)
    cmds = [config("m_wire", 1),
            const(7, 8, pat1(1, 3), s["A"], 1),
            local_st(s["O"], 0, pat1(1, 4), 1),
            barrier(1, "st"),
            local_ld(0, s["A"], pat1(1, 4), 1),
            local_st(s["O"], 16, pat1(1, 4), 1),
            wait(1)]
    m, res = run_program(cmds, WIRE_DFG)
    assert list(res.local_mems[0][16:20]) == [7.0, 7.0, 7.0, 8.0]


def test_barrier_without_fence_races():
    # same program minus the barrier is not guaranteed to read stored data;
    # the barrier variant is (checked above); here just assert both finish
    s = slots(WIRE_DFG)
    cmds = [config("m_wire", 1),
            const(7, 8, pat1(1, 3), s["A"], 1),
            local_st(s["O"], 0, pat1(1, 4), 1),
            local_ld(0, s["A"], pat1(1, 4), 1),
            local_st(s["O"], 16, pat1(1, 4), 1),
            wait(1)]
    m, res = run_program(cmds, WIRE_DFG)
    assert res.cycles > 0


def test_spad_line_bandwidth():
    # a 9-word inductive load pattern costs two read cycles (8 + 1 words)
    lane = Lane(0, MachineConfig())
    from revelsim.lane import LocalLdStream
    from revelsim.fabric import PortFifo
    fifo = PortFifo("P", 8, depth=16)
    cmd = local_ld(0, 0, pat2(cj=5, nj=3, ci=1, ni=4, sji=-1), 1)
    st = LocalLdStream(0, cmd, fifo)
    spad = np.arange(1024, dtype=np.float64)
    reads = 0
    while not st.done():
        st.do_read(spad)
        reads += 1
    assert reads == 2
    got = [v for b in fifo.beats for v, p in zip(*b) if p]
    assert got == [0, 1, 2, 3, 5, 6, 7, 10, 11]


def test_select_stream_cycles_to_stall():
    s = slots(ADD_DFG)
    m = Machine(MachineConfig(lane_count=1))
    lane = m.lanes[0]
    m.dfgs = {"m_add": ADD_DFG}
    m.placements = placements(ADD_DFG)
    lane.pending_fabric = m.resolve_config(config("m_add", 1))
    lane.config_timer = 1
    lane.issue_cycle(m, 0)
    # two reading streams; fuller destination loses
    a = local_ld(0, s["A"], pat1(1, 64), 1)
    b = local_ld(64, s["B"], pat1(1, 64), 1)
    lane.enqueue(QueueEntry(a))
    lane.enqueue(QueueEntry(b))
    lane.issue_cycle(m, 1)
    lane.issue_cycle(m, 2)
    fa = lane.in_fifo(s["A"])
    fb = lane.in_fifo(s["B"])
    fa.push_beat((0.0,), (True,))
    fa.push_beat((0.0,), (True,))
    assert lane.select_stream() == next(
        sid for sid, st in lane.streams.items()
        if getattr(st.cmd, "in_port", None) == s["B"])
    # equal occupancy: lowest stream id wins
    fb.push_beat((0.0,), (True,))
    fb.push_beat((0.0,), (True,))
    assert lane.select_stream() == min(lane.streams)


def test_shared_transfer_bandwidth():
    # 64 contiguous words, single requester: 8 bus cycles
    init = np.arange(64, dtype=np.float64)
    cmds = [config("m_wire", 1),
            shared_ld(0, 0, pat1(1, 64), 1),
            wait(1)]
    m, res = run_program(cmds, WIRE_DFG, init_shared=init)
    assert np.array_equal(m.lanes[0].spad[:64], init)
    words = 64
    # the transfer itself takes ceil(64/8) = 8 granted cycles; total runtime
    # includes config and command setup, so just bound it
    assert res.cycles < 200


def test_shared_bus_round_robin_two_lanes():
    init = np.arange(128, dtype=np.float64)
    cmds = [config("m_wire", 0b11),
            shared_ld(0, 0, pat2(cj=64, nj=1, ci=1, ni=64), 0b11, lx=True),
            wait(0b11)]
    m, res = run_program(cmds, WIRE_DFG, lanes=2, init_shared=init)
    assert np.array_equal(m.lanes[0].spad[:64], init[:64])
    assert np.array_equal(m.lanes[1].spad[:64], init[64:])


def test_lane_indexed_offset_formula():
    # lane k sees base + k * nj * cj
    init = np.arange(512, dtype=np.float64)
    pat = pat2(cj=16, nj=4, ci=1, ni=16)
    cmds = [config("m_wire", 0b1111),
            shared_ld(0, 0, pat, 0b1111, lx=True),
            wait(0b1111)]
    m, res = run_program(cmds, WIRE_DFG, lanes=4, init_shared=init)
    for k in range(4):
        assert m.lanes[k].spad[0] == init[64 * k]


def test_empty_program_wait():
    m = Machine(MachineConfig(lane_count=1))
    res = m.run([wait(1)])
    assert res.cycles <= 8  # control overhead only
    assert res.stats.check_partition()
    assert res.stats.categories[0]["ctrl_ovhd"] == res.cycles


def test_classify_priority():
    f = LaneFlags(fired_dedicated=2, fired_temporal=1, draining=True)
    assert classify_cycle(f, True) == "multi_issue"
    assert classify_cycle(LaneFlags(fired_dedicated=1), True) == "issue"
    assert classify_cycle(LaneFlags(fired_temporal=1), True) == "temporal"
    assert classify_cycle(LaneFlags(draining=True), True) == "drain"
    assert classify_cycle(LaneFlags(barrier_wait=True), True) == "scr_barrier"
    assert classify_cycle(LaneFlags(contention=True), True) == "scr_bw"
    assert classify_cycle(LaneFlags(), True) == "stream_dpd"
    assert classify_cycle(LaneFlags(), False) == "ctrl_ovhd"


def test_stats_partition_always():
    stats = SimStats(lane_count=2)
    for _ in range(10):
        stats.classify(0, "issue")
        stats.classify(1, "ctrl_ovhd")
    stats.cycles = 10
    assert stats.check_partition()


def test_deadlock_watchdog(monkeypatch):
    monkeypatch.setenv("REVEL_SIM_WATCHDOG", "500")
    s = slots(ADD_DFG)
    # B never receives data: the wait can never retire
    cmds = [config("m_add", 1),
            const(1, 1, pat1(1, 3), s["A"], 1),
            local_st(s["O"], 0, pat1(1, 4), 1),
            wait(1)]
    m = Machine(MachineConfig(lane_count=1))
    with pytest.raises(SimDeadlock) as e:
        m.run(cmds, dfgs={"m_add": ADD_DFG}, placements=placements(ADD_DFG))
    assert "lane 0" in str(e.value)


def test_xfer_cross_lane_placeholder_order():
    # lane0 produces through the wire; values hop to lane1's port and are
    # stored there in program order
    s = slots(WIRE_DFG)
    cmds = [config("m_wire", 0b11),
            const(41, 42, pat1(1, 3), s["A"], 0b01),
            xfer(s["O"], s["A"], 4, 0b01, dlane=1),
            local_st(s["O"], 32, pat1(1, 4), 0b10),
            wait(0b11)]
    m, res = run_program(cmds, WIRE_DFG, lanes=2)
    assert list(m.lanes[1].spad[32:36]) == [41.0, 41.0, 41.0, 42.0]


def test_wait_drains_everything():
    s = slots(ADD_DFG)
    cmds = [config("m_add", 1),
            const(1, 1, pat1(1, 7), 5 if s["A"] == 5 else s["A"], 1),
            const(1, 1, pat1(1, 7), s["B"], 1),
            local_st(s["O"], 0, pat1(1, 8), 1),
            wait(1)]
    m, res = run_program(cmds, ADD_DFG)
    lane = m.lanes[0]
    assert not lane.streams and not lane.queue
    for f in list(lane.fabric.in_fifos.values()) + list(lane.fabric.out_fifos.values()):
        assert not f.beats and not f.stage_vals
    assert not lane.fabric.events


def test_memory_image_roundtrip(tmp_path):
    arr = np.arange(32, dtype=np.float64) * 1.5
    p = tmp_path / "mem.bin"
    save_memory_image(p, arr)
    assert np.array_equal(load_memory_image(p), arr)
    assert p.stat().st_size == 32 * 8


def test_stats_csv_header():
    stats = SimStats(lane_count=1)
    stats.cycles = 0
    head = stats.to_csv().splitlines()[0]
    assert head == ("lane,cycle_total,issue,multi_issue,temporal,drain,"
                    "scr_barrier,scr_bw,stream_dpd,ctrl_ovhd")
