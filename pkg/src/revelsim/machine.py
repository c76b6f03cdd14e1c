"""Whole-accelerator model: control core, lanes, shared scratchpad, buses.

The control core dispenses vector-stream commands from the program at a
fixed setup cost per command and broadcasts each to the lanes selected by
its bitmask (optionally offsetting pattern bases by lane index). Lanes run
autonomously; cross-lane ordering uses the placeholder protocol over the
command-sync channel (1 cycle per notification). Every simulated cycle is
classified into exactly one bottleneck category per lane, so the category
counts always partition total cycles.

Component order within a cycle (fixed for determinism): control core ->
command issue -> stream control -> SPAD/shared-bus transfers -> port
updates (xfer arrivals) -> fabric step -> XFER sends.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .fabric import FabricDesc, default_fabric
from .isa import Command, validate_command
from .lane import Lane, LaneFlags, QueueEntry, SimError

CATEGORIES = ("issue", "multi_issue", "temporal", "drain",
              "scr_barrier", "scr_bw", "stream_dpd", "ctrl_ovhd")

STATS_HEADER = "lane,cycle_total,issue,multi_issue,temporal,drain,scr_barrier,scr_bw,stream_dpd,ctrl_ovhd"

DEFAULT_WATCHDOG = 1_000_000


@dataclass
class MachineConfig:
    lane_count: int = 8
    local_words: int = 1024       # 8KB per lane
    shared_words: int = 16384     # 128KB
    shared_bus_words: int = 8     # 512-bit shared bus
    cmd_setup: int = 4            # control-core cycles per command
    in_port_widths: tuple = (8, 8, 4, 4, 2, 1)
    out_port_widths: tuple = (8, 8, 4, 4, 2, 1)
    fabric: FabricDesc = field(default_factory=default_fabric)
    watchdog: int = DEFAULT_WATCHDOG


class SimDeadlock(SimError):
    def __init__(self, cycle, report):
        super().__init__(f"no progress for watchdog window at cycle {cycle}\n{report}")
        self.cycle = cycle
        self.report = report


@dataclass
class SimStats:
    lane_count: int = 8
    cycles: int = 0
    categories: list = field(default_factory=list)   # per lane dict
    commands_issued: int = 0
    commands_by_kind: dict = field(default_factory=dict)
    stream_words: dict = field(default_factory=dict)  # (lane, sid) -> words

    def __post_init__(self):
        if not self.categories:
            self.categories = [dict.fromkeys(CATEGORIES, 0) for _ in range(self.lane_count)]

    def classify(self, lane: int, category: str):
        self.categories[lane][category] += 1

    def to_csv(self) -> str:
        lines = [STATS_HEADER]
        for lane in range(self.lane_count):
            c = self.categories[lane]
            lines.append(",".join(
                [str(lane), str(self.cycles)] + [str(c[k]) for k in CATEGORIES]))
        return "\n".join(lines) + "\n"

    def check_partition(self) -> bool:
        return all(sum(c.values()) == self.cycles for c in self.categories)


@dataclass
class SimResult:
    cycles: int
    stats: SimStats
    shared_mem: np.ndarray
    local_mems: list


def classify_cycle(flags: LaneFlags, has_work: bool) -> str:
    """Priority: multi-issue > issue > temporal > drain > scr-barrier >
    scr-b/w > stream-dpd > ctrl-ovhd."""
    if flags.fired_dedicated >= 2:
        return "multi_issue"
    if flags.fired_dedicated == 1:
        return "issue"
    if flags.fired_temporal >= 1:
        return "temporal"
    if flags.draining:
        return "drain"
    if flags.barrier_wait:
        return "scr_barrier"
    if flags.contention:
        return "scr_bw"
    if has_work:
        return "stream_dpd"
    return "ctrl_ovhd"


class Machine:
    def __init__(self, config: MachineConfig | None = None, trace=None):
        self.config = config or MachineConfig()
        self.shared = np.zeros(self.config.shared_words, dtype=np.float64)
        self.trace = trace
        self.lanes = [Lane(i, self.config, trace) for i in range(self.config.lane_count)]
        self.cycle = 0
        self.messages: list = []        # (deliver_at, target_lane, payload)
        self.prearmed: set = set()      # arm messages that beat their xfer issue
        self.xfer_inflight: list = []   # (deliver_at, dest_lane, in_port, beat, token?)
        self._bus_rr = 0
        self._xfer_rr = [0] * self.config.lane_count
        self._next_token = 0
        self.dfgs: dict = {}
        self.placements: dict = {}
        self.stats = SimStats(lane_count=self.config.lane_count)

    # ---- configuration plumbing

    def resolve_config(self, cmd: Command):
        name = cmd.df
        if name not in self.dfgs:
            raise SimError(f"config references unknown dataflow graph {name!r}")
        return self.dfgs[name], self.placements.get(name)

    def send_message(self, deliver_at, target_lane, payload):
        self.messages.append((deliver_at, target_lane, payload))

    # ---- broadcast

    def lane_copies(self, cmd: Command):
        """Per-lane command copies, applying lane-indexed address offsets."""
        out = []
        for lane_id in range(self.config.lane_count):
            if not (cmd.lane_mask >> lane_id) & 1:
                continue
            c = cmd
            if cmd.lane_indexed and lane_id and cmd.pattern is not None:
                off = lane_id * cmd.pattern.footprint()
                if cmd.kind in ("shared_ld", "shared_st"):
                    c = replace(cmd, shared_addr=cmd.shared_addr + off)
                else:
                    c = replace(cmd, local_addr=cmd.local_addr + off)
            out.append((lane_id, c))
        return out

    def broadcast(self, cmd: Command) -> bool:
        """Deliver one command to all masked lanes; False if any queue is full."""
        copies = self.lane_copies(cmd)
        entries = []
        for lane_id, c in copies:
            if c.kind == "xfer" and c.dlane != 0:
                token = self._next_token
                self._next_token += 1
                dest = (lane_id + c.dlane) % self.config.lane_count
                entries.append((lane_id, QueueEntry(c, token=token)))
                ph = Command(kind="xfer", lane_mask=1 << dest, in_port=c.in_port,
                             out_port=c.out_port, count=c.count, reuse=c.reuse,
                             dlane=c.dlane)
                entries.append((dest, QueueEntry(ph, token=token, src_lane=lane_id,
                                                 is_placeholder=True)))
            else:
                entries.append((lane_id, QueueEntry(c)))
        need: dict[int, int] = {}
        for lane_id, _e in entries:
            need[lane_id] = need.get(lane_id, 0) + 1
        for lane_id, n in need.items():
            if not self.lanes[lane_id].queue_space(n):
                return False
        for lane_id, e in entries:
            self.lanes[lane_id].enqueue(e)
        return True

    # ---- cycle phases

    def _control_core(self, program, core):
        """Returns True when the control core made progress this cycle."""
        if core["pc"] >= len(program):
            return False
        cmd = program[core["pc"]]
        if cmd.kind == "wait":
            for lane_id in range(self.config.lane_count):
                if (cmd.lane_mask >> lane_id) & 1 and self.lanes[lane_id].active():
                    return False
            for entry in self.xfer_inflight:
                # in-flight cross-lane data keeps the wait blocked
                if (cmd.lane_mask >> entry[1]) & 1:
                    return False
            core["pc"] += 1
            core["timer"] = self.config.cmd_setup
            self.stats.commands_issued += 1
            self.stats.commands_by_kind["wait"] = \
                self.stats.commands_by_kind.get("wait", 0) + 1
            return True
        if core["timer"] > 1:
            core["timer"] -= 1
            return True
        if self.broadcast(cmd):
            core["pc"] += 1
            core["timer"] = self.config.cmd_setup
            self.stats.commands_issued += 1
            self.stats.commands_by_kind[cmd.kind] = \
                self.stats.commands_by_kind.get(cmd.kind, 0) + 1
            return True
        return False

    def _deliver_messages(self, t):
        due = [m for m in self.messages if m[0] <= t]
        self.messages = [m for m in self.messages if m[0] > t]
        for _at, lane_id, payload in sorted(due, key=lambda m: (m[1], m[2])):
            kind, token = payload
            lane = self.lanes[lane_id]
            if kind == "arm":
                armed = False
                for s in lane.streams.values():
                    if getattr(s, "token", None) == token and s.kind == "xfer":
                        s.armed = True
                        armed = True
                if not armed:
                    self.prearmed.add(token)
            elif kind == "release":
                for sid in list(lane.streams):
                    s = lane.streams[sid]
                    if s.kind == "placeholder" and s.token == token:
                        s.released = True

    def _shared_bus(self, t):
        """One lane per cycle gets the 512-bit shared bus, round robin."""
        n = self.config.lane_count
        requesters = []
        for k in range(n):
            lane_id = (self._bus_rr + k) % n
            lane = self.lanes[lane_id]
            for sid in sorted(lane.streams):
                s = lane.streams[sid]
                if s.kind == "shared_ld" and not s.done() and not lane._spad_write_used:
                    requesters.append((lane_id, sid, s))
                    break
                if s.kind == "shared_st" and not s.done() and not lane._spad_read_used:
                    requesters.append((lane_id, sid, s))
                    break
        if not requesters:
            return
        if len(requesters) > 1:
            for lane_id, _sid, _s in requesters[1:]:
                self.lanes[lane_id].flags.contention = True
        lane_id, sid, s = requesters[0]
        lane = self.lanes[lane_id]
        moved = s.do_transfer(self.shared, lane.spad, self.config.shared_bus_words)
        if moved:
            lane.flags.progressed = True
            if s.kind == "shared_ld":
                lane._spad_write_used = True
            else:
                lane._spad_read_used = True
        self._bus_rr = (lane_id + 1) % n

    def _xfer_arrivals(self, t):
        due = [x for x in self.xfer_inflight if x[0] <= t]
        keep = []
        for entry in self.xfer_inflight:
            if entry[0] > t:
                keep.append(entry)
        delivered_keep = []
        for entry in sorted(due, key=lambda x: (x[0], x[1], x[2], x[3])):
            _at, dest, in_port, seq, vals, pred = entry
            lane = self.lanes[dest]
            try:
                fifo = lane.in_fifo(in_port)
            except SimError:
                raise
            if fifo.has_space():
                fifo.push_beat(vals, pred)
                lane.flags.progressed = True
            else:
                delivered_keep.append((t + 1, dest, in_port, seq, vals, pred))
        self.xfer_inflight = sorted(keep + delivered_keep)

    def _xfer_sends(self, t):
        """Each lane's XFER bus ships at most one beat per cycle, round robin."""
        for lane_id, lane in enumerate(self.lanes):
            xfers = [(sid, s) for sid, s in sorted(lane.streams.items())
                     if s.kind == "xfer" and not s.done()]
            if not xfers:
                continue
            start = self._xfer_rr[lane_id] % len(xfers)
            for k in range(len(xfers)):
                sid, s = xfers[(start + k) % len(xfers)]
                # head-of-line: require dest space before consuming
                dest_lane = self.lanes[s.dest_lane]
                try:
                    dest_fifo = dest_lane.in_fifo(s.cmd.in_port)
                except SimError:
                    continue
                inflight_here = sum(1 for x in self.xfer_inflight
                                    if x[1] == s.dest_lane and x[2] == s.cmd.in_port)
                if not dest_fifo.has_space(1 + inflight_here):
                    continue
                beat = s.try_send()
                if beat is None:
                    continue
                latency = 1 if s.dest_lane == lane_id else 2
                self._next_token += 1
                self.xfer_inflight.append(
                    (t + latency, s.dest_lane, s.cmd.in_port, self._next_token,
                     beat[0], beat[1]))
                lane.flags.progressed = True
                self._xfer_rr[lane_id] = (start + k + 1) % len(xfers)
                break
        self.xfer_inflight.sort()

    # ---- main loop

    def run(self, program, dfgs=None, placements=None, init_shared=None,
            init_locals=None, max_cycles=None) -> SimResult:
        cfg = self.config
        errs = []
        for i, cmd in enumerate(program):
            for e in validate_command(cmd, cfg):
                errs.append(f"command {i} ({cmd.kind}): {e}")
        if errs:
            raise SimError("invalid program:\n" + "\n".join(errs))
        self.dfgs = dict(dfgs or {})
        self.placements = dict(placements or {})
        if init_shared is not None:
            arr = np.asarray(init_shared, dtype=np.float64)
            self.shared[:len(arr)] = arr
        if init_locals:
            for lane_id, arr in init_locals.items():
                a = np.asarray(arr, dtype=np.float64)
                self.lanes[lane_id].spad[:len(a)] = a

        watchdog = int(os.environ.get("REVEL_SIM_WATCHDOG", cfg.watchdog))
        limit = max_cycles if max_cycles is not None else 100_000_000
        core = {"pc": 0, "timer": cfg.cmd_setup}
        last_progress = 0
        while self.cycle < limit:
            t = self.cycle
            for lane in self.lanes:
                lane.flags = LaneFlags()
                lane._spad_read_used = False
                lane._spad_write_used = False
            core_progress = self._control_core(program, core)
            if core["pc"] >= len(program):
                if all(not lane.active() for lane in self.lanes) \
                        and not self.xfer_inflight and not self.messages:
                    break
            for lane in self.lanes:
                lane.issue_cycle(self, t)
            for lane in self.lanes:
                lane.spad_cycle(t)
            self._shared_bus(t)
            self._deliver_messages(t)
            self._xfer_arrivals(t)
            for lane in self.lanes:
                if lane.fabric is not None:
                    ev = lane.fabric.step()
                    lane.flags.fired_dedicated += ev.dedicated_fired
                    lane.flags.fired_temporal += ev.temporal_fired
                    if ev.fired or ev.delivered:
                        lane.flags.progressed = True
            self._xfer_sends(t)
            for lane in self.lanes:
                lane.retire_streams(self, t)
            progressed = core_progress
            for lane_id, lane in enumerate(self.lanes):
                has_work = lane.active()
                self.stats.classify(lane_id, classify_cycle(lane.flags, has_work))
                progressed = progressed or lane.flags.progressed
            self.cycle += 1
            self.stats.cycles = self.cycle
            if progressed:
                last_progress = self.cycle
            elif self.cycle - last_progress >= watchdog:
                raise SimDeadlock(self.cycle, self._blocked_report(core))
        self.stats.cycles = self.cycle
        for lane in self.lanes:
            self.stats.stream_words[lane.lane_id] = lane.total_stream_words
        return SimResult(
            cycles=self.cycle,
            stats=self.stats,
            shared_mem=self.shared.copy(),
            local_mems=[lane.spad.copy() for lane in self.lanes],
        )

    def _blocked_report(self, core) -> str:
        lines = [f"control core: pc={core['pc']} timer={core['timer']}"]
        for lane in self.lanes:
            head = lane.queue[0].cmd.kind if lane.queue else "-"
            streams = {sid: s.kind for sid, s in sorted(lane.streams.items())}
            lines.append(
                f"lane {lane.lane_id}: queue={len(lane.queue)} head={head} "
                f"streams={streams} in_use_in={sorted(lane.in_owner)} "
                f"in_use_out={sorted(lane.out_owner)} "
                f"fabric_busy={lane.fabric.busy() if lane.fabric else False}")
        return "\n".join(lines)


def shared_mem_transfer(machine: Machine, cmd: Command):
    """Spec op: run one shared_ld/shared_st command in isolation; returns cycles."""
    prog = [cmd, Command(kind="wait", lane_mask=cmd.lane_mask)]
    start = machine.cycle
    machine.run(prog)
    return machine.cycle - start


def save_memory_image(path, arr):
    np.asarray(arr, dtype="<f8").tofile(path)


def load_memory_image(path) -> np.ndarray:
    return np.fromfile(path, dtype="<f8")
