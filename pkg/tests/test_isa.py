"""ISA: parsing, serialization round-trips, shape conformance, validation."""

import numpy as np
import pytest

from revelsim.fixedpoint import Fx
from revelsim.isa import (Command, IsaError, ProgramSyntaxError, ReuseSpec,
                          StreamPattern, format_program, parse_dfg,
                          parse_program, validate_command)
from revelsim.machine import MachineConfig


def test_wait_single_command():
    cmds = parse_program("wait 0b11111111\n")
    assert len(cmds) == 1
    assert cmds[0].kind == "wait"
    assert cmds[0].lane_mask == 0xFF


def test_comments_and_blank_lines():
    cmds = parse_program("# setup\n\nwait mask=0x1  # done\n")
    assert len(cmds) == 1


def test_const_expansion_fields():
    c = parse_program("const v1=0 v2=1 nj=3 ni=3 sji=-1 port=2 mask=0b1")[0]
    assert c.kind == "const"
    assert (c.pattern.nj, c.pattern.ni) == (3, 3)
    assert c.pattern.sji == Fx.from_value(-1)


def test_cholesky_style_sequence_order():
    src = """
    config df=chol mask=0xff
    local_ld addr=0 port=0 ci=1 ni=8 mask=0xff
    const v1=0 v2=1 ni=3 nj=3 sji=-1 port=4 mask=0xff
    xfer out=0 in=1 count=4 mask=0xff
    local_st addr=64 port=1 ci=1 ni=8 mask=0xff
    wait 0xff
    """
    cmds = parse_program(src)
    assert [c.kind for c in cmds] == ["config", "local_ld", "const", "xfer",
                                      "local_st", "wait"]


def test_unknown_mnemonic():
    with pytest.raises(ProgramSyntaxError) as e:
        parse_program("frobnicate mask=1")
    assert "line 1" in str(e.value)


def test_field_kind_mismatch():
    with pytest.raises(ProgramSyntaxError):
        parse_program("shared_ld addr=0 local=0 ci=1 ni=4 sji=-1 mask=1")  # no stretch row


def test_zero_mask_rejected():
    with pytest.raises(ProgramSyntaxError):
        parse_program("wait mask=0")


def test_roundtrip_handwritten():
    src = """
    shared_ld addr=128 local=0 ci=1 ni=64 mask=0xff lx
    local_ld addr=0 port=2 ci=1 ni=9 cj=5 nj=3 sji=-1 nc=2 sc=-0.5 mask=0x3
    barrier st mask=0x1
    xfer out=3 in=1 count=7 np=2 dlane=1 mask=0x1
    config df=k mask=0xff
    wait 0xff
    """
    cmds = parse_program(src)
    text = format_program(cmds)
    assert parse_program(text) == cmds
    assert parse_program(format_program(parse_program(text))) == cmds


def test_roundtrip_randomized():
    rng = np.random.default_rng(2)
    for _ in range(200):
        pat = StreamPattern(
            base=0, ci=int(rng.integers(-8, 9)), ni=int(rng.integers(0, 16)),
            cj=int(rng.integers(-8, 9)), nj=int(rng.integers(1, 8)),
            sji=Fx(int(rng.integers(-512, 512))), dims=2)
        cmd = Command(kind="local_ld", local_addr=int(rng.integers(0, 512)),
                      in_port=int(rng.integers(0, 6)), pattern=pat,
                      reuse=ReuseSpec(nc=Fx(int(rng.integers(1, 1024))),
                                      sc=Fx(int(rng.integers(-256, 257)))),
                      lane_mask=int(rng.integers(1, 256)))
        assert parse_program(format_program([cmd])) == [cmd]


def test_fixed_point_roundtrip_exact():
    for raw in (-32768, -257, -256, -1, 0, 1, 128, 255, 256, 32767):
        fx = Fx(raw)
        assert Fx.from_value(fx.to_str()).raw == raw
    with pytest.raises(ValueError):
        Fx.from_value(0.1)  # not representable in 8.8


def test_table_shape_conformance():
    # a command that validates has exactly its row's fields
    with pytest.raises(IsaError):
        Command(kind="shared_ld", shared_addr=0, local_addr=0,
                pattern=StreamPattern(ci=1, ni=4, dims=1), val1=1.0, lane_mask=1)
    with pytest.raises(IsaError):
        Command(kind="wait", in_port=3, lane_mask=1)
    with pytest.raises(IsaError):
        Command(kind="const", val1=0.0, val2=1.0, lane_mask=1)  # missing port/pattern


def test_validate_unknown_port():
    cfg = MachineConfig()
    cmd = Command(kind="local_ld", local_addr=0, in_port=9,
                  pattern=StreamPattern(ci=1, ni=4, dims=1), lane_mask=1)
    errs = validate_command(cmd, cfg)
    assert any("port" in e for e in errs)


def test_validate_shared_in_range():
    cfg = MachineConfig()
    cmd = Command(kind="shared_ld", shared_addr=0, local_addr=0,
                  pattern=StreamPattern(ci=1, ni=128, dims=1), lane_mask=1)
    assert validate_command(cmd, cfg) == []


def test_validate_pattern_walks_past_scratchpad():
    cfg = MachineConfig()
    pat = StreamPattern(ci=1, ni=128, cj=128, nj=9, dims=2)  # extent > 1024
    cmd = Command(kind="local_st", local_addr=0, out_port=0, pattern=pat, lane_mask=1)
    errs = validate_command(cmd, cfg)
    assert any("scratchpad" in e for e in errs)


def test_validate_mask_exceeds_lanes():
    cfg = MachineConfig(lane_count=2)
    cmd = Command(kind="wait", lane_mask=0xF0)
    assert validate_command(cmd, cfg)


def test_dfg_single_node():
    g = parse_dfg("""
    inport P0 width=8 df=0
    inport P1 width=8 df=0
    outport P2 width=8 df=0
    node n0 add df=0
    edge P0.0 n0 slot=0
    edge P1.0 n0 slot=1
    edge n0 P2.0 slot=0
    """ + "\n".join(f"edge P0.{l} P2.{l} slot=0" for l in range(1, 8)))
    assert len(g.nodes) == 1
    assert g.dataflow_ids() == [0]


def test_dfg_solver_rate_annotation():
    g = parse_dfg("""
    inport A width=1 df=0
    inport X width=1 df=0
    outport O width=1 df=0
    node m mul df=0
    edge A m slot=0
    edge X m slot=1 rate=1:3 sc=-1
    edge m O slot=0
    """)
    e = [e for e in g.edges if e.src == "X"][0]
    assert (e.rate_p, e.rate_c) == (1, 3)
    assert e.sc == Fx.from_value(-1)


def test_dfg_five_dataflows_rejected():
    src = ["node n{0} add df={0}".format(i) for i in range(5)]
    src += ["inport A{0} width=1 df={0}".format(i) for i in range(5)]
    src += ["inport B{0} width=1 df={0}".format(i) for i in range(5)]
    src += ["edge A{0} n{0} slot=0".format(i) for i in range(5)]
    src += ["edge B{0} n{0} slot=1".format(i) for i in range(5)]
    with pytest.raises(IsaError) as e:
        parse_dfg("\n".join(src))
    assert "dataflows" in str(e.value)


def test_dfg_dangling_edge():
    with pytest.raises(IsaError) as e:
        parse_dfg("node n0 add df=0\nedge P9 n0 slot=0\nedge n0 n0 slot=1")
    assert "dangling" in str(e.value) or "cycle" in str(e.value)


def test_dfg_duplicate_port():
    with pytest.raises(IsaError):
        parse_dfg("inport P0 width=1 df=0\noutport P0 width=1 df=0")


def test_dfg_cycle_rejected():
    with pytest.raises(IsaError) as e:
        parse_dfg("""
        node a add df=0
        node b add df=0
        inport P width=1 df=0
        edge P a slot=0
        edge b a slot=1
        edge a b slot=0
        edge P b slot=1
        """)
    assert "cycle" in str(e.value)


def test_program_order_preserved_per_port():
    src = "\n".join(
        f"local_ld addr={i} port=2 ci=1 ni=1 mask=1" for i in range(5))
    cmds = parse_program(src)
    addrs = [c.local_addr for c in cmds if c.in_port == 2]
    assert addrs == list(range(5))
    again = parse_program(format_program(cmds))
    assert [c.local_addr for c in again] == addrs
