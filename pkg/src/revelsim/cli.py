"""Command-line front end: simulate, schedule, analyze, compare to ASICs.

Identical invocations (including seed) produce byte-identical outputs; all
artifacts are CSV or plain text.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .analysis import (CAPABILITIES, analyze_nest, default_params,
                       load_fixture, parse_nest, FIXTURE_NESTS)
from .fabric import default_fabric, parse_fabric
from .isa import parse_dfg
from .kernels import KERNELS, asic_cycles, build_kernel, check_output, run_build
from .kernels.common import canon_variant, placements_for
from .machine import MachineConfig, SimError, save_memory_image
from .scheduler import format_placement, schedule, verify_placement
from .streams import gen_addresses, expand_const


def _machine_config(path) -> MachineConfig:
    cfg = MachineConfig()
    if not path:
        return cfg
    fields = {}
    fabric = None
    for raw in open(path):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        k, v = line.split("=", 1)
        k, v = k.strip(), v.strip()
        if k == "fabric":
            fabric = parse_fabric(open(v).read())
        elif k in ("lane_count", "local_words", "shared_words",
                   "shared_bus_words", "cmd_setup", "watchdog"):
            fields[k] = int(v)
        else:
            raise SystemExit(f"unknown config key {k!r}")
    if fabric is not None:
        fields["fabric"] = fabric
    return MachineConfig(**fields)


def _dump_streams(build, out=sys.stdout):
    """Debug dump: one generated address/value per line per stream command."""
    for i, cmd in enumerate(build.program):
        if cmd.pattern is None:
            continue
        print(f"# command {i}: {cmd.kind}", file=out)
        if cmd.kind == "const":
            p = cmd.pattern
            vals = expand_const(cmd.val1, cmd.val2,
                                p.nj if p.dims >= 2 else 1, p.ni,
                                p.sji if p.dims >= 2 else 0)
            for v in vals:
                print(v, file=out)
        else:
            from dataclasses import replace
            base = cmd.shared_addr if cmd.kind.startswith("shared") else cmd.local_addr
            for a in gen_addresses(replace(cmd.pattern, base=base)):
                print(a.addr, file=out)


def cmd_sim(args) -> int:
    cfg = _machine_config(args.config)
    kw = {}
    if args.kernel == "fir" and args.taps:
        kw["m"] = args.taps
    build = build_kernel(args.kernel, args.size, args.variant, lanes=args.lanes,
                         seed=args.seed, **kw)
    if args.dump_stream:
        _dump_streams(build)
    if cfg.lane_count < build.lanes:
        print(f"error: kernel needs {build.lanes} lanes", file=sys.stderr)
        return 2
    build.machine_config = MachineConfig(**{**cfg.__dict__})
    res, out = run_build(build)
    print(f"cycles: {res.cycles}")
    if args.stats:
        with open(args.stats, "w") as f:
            f.write(res.stats.to_csv())
    if args.dump_mem:
        save_memory_image(args.dump_mem, res.shared_mem)
    if args.verify:
        ok, rel = check_output(build, out)
        print(f"verify: {'ok' if ok else 'FAILED'} (max rel err {rel:.3e})")
        if not ok:
            return 1
    return 0


def cmd_schedule(args) -> int:
    desc = default_fabric()
    if args.fabric:
        desc = parse_fabric(open(args.fabric).read())
    dfg = parse_dfg(open(args.dfg).read(), name=args.dfg)
    try:
        placement = schedule(dfg, desc, seed=args.seed, iters=args.iters)
    except Exception as e:
        print(f"schedule failed: {e}", file=sys.stderr)
        return 1
    text = format_placement(placement)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    violations = verify_placement(placement, dfg, desc)
    print("verify:", "ok" if not violations else "; ".join(violations))
    return 0 if not violations else 1


def cmd_analyze(args) -> int:
    if args.nest in FIXTURE_NESTS:
        nest = load_fixture(args.nest)
        params = default_params(args.nest, args.size)
    else:
        nest = parse_nest(open(args.nest).read(), name=args.nest)
        params = {}
        for kv in args.param or []:
            k, v = kv.split("=", 1)
            params[k] = int(v)
    caps = args.caps.split(",") if args.caps else CAPABILITIES
    report = analyze_nest(nest, params, caps)
    csv = report.to_csv()
    if args.out:
        with open(args.out, "w") as f:
            f.write(csv)
    else:
        sys.stdout.write(csv)
    return 0


def cmd_asic(args) -> int:
    dims = tuple(int(v) for v in args.dims.split("x")) if args.dims else (args.size,)
    cycles = asic_cycles(args.kernel, dims if len(dims) > 1 else dims[0])
    print(f"asic cycles: {cycles}")
    if args.run:
        name = {"mm": "gemm"}.get(args.kernel, args.kernel)
        build = build_kernel(name, dims[0], "full", lanes=args.lanes, seed=args.seed)
        res, out = run_build(build)
        ok, _ = check_output(build, out)
        print(f"sim cycles: {res.cycles}")
        print(f"sim/asic: {res.cycles / cycles:.3f}")
        if not ok:
            print("verify: FAILED")
            return 1
    return 0


def cmd_ablate(args) -> int:
    variants = KERNELS[args.kernel].variants
    print("variant,cycles,verified")
    rows = []
    for v in variants:
        build = build_kernel(args.kernel, args.size, v, seed=args.seed)
        res, out = run_build(build)
        ok, _ = check_output(build, out)
        rows.append((v, res.cycles, ok))
        print(f"{v},{res.cycles},{'ok' if ok else 'FAILED'}")
    if not all(ok for _, _, ok in rows):
        return 1
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="revelsim",
        description="Cycle-level vector-stream dataflow accelerator simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("sim", help="simulate a kernel program")
    p.add_argument("--kernel", required=True, choices=sorted(KERNELS))
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--variant", default="full")
    p.add_argument("--lanes", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--taps", type=int, default=None, help="fir tap count")
    p.add_argument("--verify", action="store_true")
    p.add_argument("--stats", help="bottleneck CSV output path")
    p.add_argument("--dump-mem", help="final shared memory image path")
    p.add_argument("--dump-stream", action="store_true",
                   help="print each stream command's expansion")
    p.add_argument("--config", help="machine config file")
    p.set_defaults(fn=cmd_sim)

    p = sub.add_parser("schedule", help="place and route a dataflow graph")
    p.add_argument("--dfg", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=800)
    p.add_argument("--fabric", help="fabric description file")
    p.add_argument("--out", help="placement output path")
    p.set_defaults(fn=cmd_schedule)

    p = sub.add_parser("analyze", help="stream capability analysis of a loop nest")
    p.add_argument("--nest", required=True,
                   help=f"nest file or fixture name ({', '.join(FIXTURE_NESTS)})")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--caps", help="comma-separated capability list")
    p.add_argument("--param", action="append", help="name=value (for nest files)")
    p.add_argument("--out", help="report CSV path")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("asic", help="ideal-ASIC cycle model")
    p.add_argument("--kernel", required=True)
    p.add_argument("--dims", help="e.g. 12x16x64 for mm")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--lanes", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--run", action="store_true", help="also simulate and print the ratio")
    p.set_defaults(fn=cmd_asic)

    p = sub.add_parser("ablate", help="run every variant of a kernel")
    p.add_argument("--kernel", required=True, choices=sorted(KERNELS))
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_ablate)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (SimError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
