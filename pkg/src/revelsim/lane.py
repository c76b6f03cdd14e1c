"""One accelerator lane: command queue, stream control, scratchpad, ports.

The lane owns an 8-entry command queue with a port scoreboard, an 8-entry
stream table, a single-bank scratchpad (1 read + 1 write port, 8 words per
aligned line per cycle), the port FIFOs of its configured fabric, and the
XFER endpoint. It is stepped only by the owning machine's cycle loop;
inter-lane traffic flows through machine-owned message/bus queues.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fabric import ConfiguredFabric, configure
from .isa import Command, StreamPattern
from .streams import gen_address_table
from ._accel import expand_const_array

QUEUE_DEPTH = 8
STREAM_TABLE = 8
LINE_WORDS = 8


class SimError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Stream runtime objects


class _StreamBase:
    kind = "?"
    reads_spad = False
    writes_spad = False

    def __init__(self, sid, cmd):
        self.sid = sid
        self.cmd = cmd
        self.words_moved = 0

    def done(self) -> bool:  # pragma: no cover
        raise NotImplementedError


class LocalLdStream(_StreamBase):
    kind = "local_ld"
    reads_spad = True

    def __init__(self, sid, cmd, fifo):
        super().__init__(sid, cmd)
        pat = replace(cmd.pattern, base=cmd.local_addr + cmd.pattern.base)
        addrs, _j, _i, last_i, _run, _counts = gen_address_table(pat)
        self.addrs = addrs.tolist()
        self.last_i = last_i.tolist()
        self.pos = 0
        self.fifo = fifo

    def done(self):
        return self.pos >= len(self.addrs)

    def wants_read(self):
        return not self.done() and self.fifo.can_accept_word()

    def do_read(self, spad):
        """One SPAD read cycle: up to 8 words from one aligned line."""
        line = self.addrs[self.pos] // LINE_WORDS
        moved = 0
        while (self.pos < len(self.addrs) and moved < LINE_WORDS
               and self.addrs[self.pos] // LINE_WORDS == line
               and self.fifo.can_accept_word()):
            a = self.addrs[self.pos]
            self.fifo.push_word(float(spad[a]), self.last_i[self.pos])
            self.pos += 1
            moved += 1
        self.words_moved += moved
        return moved


class ConstStream(_StreamBase):
    kind = "const"

    def __init__(self, sid, cmd, fifo):
        super().__init__(sid, cmd)
        pat = cmd.pattern
        nj = pat.nj if pat.dims >= 2 else 1
        sji = pat.sji.raw if pat.dims >= 2 else 0
        self.values = expand_const_array(cmd.val1, cmd.val2, nj, pat.ni * 256, sji).tolist()
        self.pos = 0
        self.fifo = fifo

    def done(self):
        return self.pos >= len(self.values)

    def advance(self):
        """Const generation does not touch the SPAD; one line-width per cycle."""
        moved = 0
        n = len(self.values)
        while self.pos < n and moved < LINE_WORDS and self.fifo.can_accept_word():
            self.fifo.push_word(self.values[self.pos], self.pos == n - 1)
            self.pos += 1
            moved += 1
        self.words_moved += moved
        return moved


class LocalStStream(_StreamBase):
    kind = "local_st"
    writes_spad = True

    def __init__(self, sid, cmd, fifo):
        super().__init__(sid, cmd)
        pat = replace(cmd.pattern, base=cmd.local_addr + cmd.pattern.base)
        addrs, _j, _i, _l, _run, _counts = gen_address_table(pat)
        self.addrs = addrs.tolist()
        self.pos = 0
        self.fifo = fifo
        self.beat_vals: list = []

    def done(self):
        return self.pos >= len(self.addrs)

    def wants_write(self):
        return not self.done() and (self.beat_vals or self.fifo.beats)

    def do_write(self, spad):
        """One SPAD write cycle: up to 8 words in one aligned line."""
        moved = 0
        line = None
        while moved < LINE_WORDS and self.pos < len(self.addrs):
            if not self.beat_vals:
                if not self.fifo.beats:
                    break
                vals, pred = self.fifo.pop_beat()
                self.beat_vals = [v for v, p in zip(vals, pred) if p]
                if not self.beat_vals:
                    continue
            a = self.addrs[self.pos]
            if line is None:
                line = a // LINE_WORDS
            elif a // LINE_WORDS != line:
                break
            spad[a] = self.beat_vals.pop(0)
            self.pos += 1
            moved += 1
        self.words_moved += moved
        return moved


class SharedLdStream(_StreamBase):
    """Shared -> local staging; pattern walks the shared side."""

    kind = "shared_ld"
    writes_spad = True

    def __init__(self, sid, cmd):
        super().__init__(sid, cmd)
        pat = replace(cmd.pattern, base=cmd.shared_addr)
        addrs, *_ = gen_address_table(pat)
        self.shared_addrs = addrs.tolist()
        self.local_base = cmd.local_addr
        self.pos = 0

    def done(self):
        return self.pos >= len(self.shared_addrs)

    def do_transfer(self, shared, spad, max_words):
        """Move words for one granted bus cycle (one shared line, one local line)."""
        if self.done():
            return 0
        sline = self.shared_addrs[self.pos] // LINE_WORDS
        lline = (self.local_base + self.pos) // LINE_WORDS
        moved = 0
        while (self.pos < len(self.shared_addrs) and moved < max_words
               and self.shared_addrs[self.pos] // LINE_WORDS == sline
               and (self.local_base + self.pos) // LINE_WORDS == lline):
            spad[self.local_base + self.pos] = shared[self.shared_addrs[self.pos]]
            self.pos += 1
            moved += 1
        self.words_moved += moved
        return moved


class SharedStStream(_StreamBase):
    """Local -> shared; pattern walks the shared side."""

    kind = "shared_st"
    reads_spad = True

    def __init__(self, sid, cmd):
        super().__init__(sid, cmd)
        pat = replace(cmd.pattern, base=cmd.shared_addr)
        addrs, *_ = gen_address_table(pat)
        self.shared_addrs = addrs.tolist()
        self.local_base = cmd.local_addr
        self.pos = 0

    def done(self):
        return self.pos >= len(self.shared_addrs)

    def do_transfer(self, shared, spad, max_words):
        if self.done():
            return 0
        sline = self.shared_addrs[self.pos] // LINE_WORDS
        lline = (self.local_base + self.pos) // LINE_WORDS
        moved = 0
        while (self.pos < len(self.shared_addrs) and moved < max_words
               and self.shared_addrs[self.pos] // LINE_WORDS == sline
               and (self.local_base + self.pos) // LINE_WORDS == lline):
            shared[self.shared_addrs[self.pos]] = spad[self.local_base + self.pos]
            self.pos += 1
            moved += 1
        self.words_moved += moved
        return moved


class XferStream(_StreamBase):
    """Out-port to in-port stream, possibly cross-lane, with production
    decimation: each forwarded element consumes ceil(np + k*sp) beats and
    forwards the last of them."""

    kind = "xfer"

    def __init__(self, sid, cmd, out_fifo, dest_lane, token):
        super().__init__(sid, cmd)
        self.out_fifo = out_fifo
        self.dest_lane = dest_lane
        self.token = token
        self.count = cmd.count
        self.sent = 0
        self.k = 0
        self.pending_drop = 0  # beats still to consume for the current element
        self.armed = cmd.dlane == 0  # cross-lane streams wait for the placeholder
        r = cmd.reuse
        self.np_raw = r.np.raw if r is not None else 256
        self.sp_raw = r.sp.raw if r is not None else 0

    def done(self):
        return self.sent >= self.count

    def _needed(self):
        from .fixedpoint import fx_ceil
        target = self.np_raw + self.k * self.sp_raw
        if target <= 0:
            raise SimError("xfer production schedule fell below one beat")
        return fx_ceil(target)

    def try_send(self):
        """Pop beats for one element if available; returns beat to ship or None."""
        if self.done() or not self.armed:
            return None
        need = self._needed()
        if len(self.out_fifo.beats) < need:
            return None
        beat = None
        for _ in range(need):
            beat = self.out_fifo.pop_beat()
        self.k += 1
        self.sent += 1
        self.words_moved += sum(beat[1])
        return beat


class PlaceholderStream(_StreamBase):
    """Ordering token holding a destination port for a remote xfer."""

    kind = "placeholder"

    def __init__(self, sid, cmd, token, src_lane):
        super().__init__(sid, cmd)
        self.token = token
        self.src_lane = src_lane
        self.released = False

    def done(self):
        return self.released


# --------------------------------------------------------------------------
# Queue entries

@dataclass
class QueueEntry:
    cmd: Command
    token: int = -1       # xfer/placeholder pairing token
    src_lane: int = -1    # placeholder: lane that will send
    is_placeholder: bool = False


@dataclass
class LaneFlags:
    """Per-cycle observation used by the machine's bottleneck classifier."""

    fired_dedicated: int = 0
    fired_temporal: int = 0
    draining: bool = False
    barrier_wait: bool = False
    contention: bool = False
    issued: bool = False
    progressed: bool = False


class Lane:
    def __init__(self, lane_id: int, config, trace=None):
        self.lane_id = lane_id
        self.config = config
        self.spad = np.zeros(config.local_words, dtype=np.float64)
        self.queue: list[QueueEntry] = []
        self.streams: dict[int, _StreamBase] = {}
        self.next_sid = 0
        self.fabric: ConfiguredFabric | None = None
        self.pending_fabric = None  # (dfg, placement) queued by an issued config
        self.config_timer = 0
        self.in_owner: dict[int, int] = {}   # port slot -> sid
        self.out_owner: dict[int, int] = {}
        self.slot_in_pid: dict[int, str] = {}
        self.slot_out_pid: dict[int, str] = {}
        self.flags = LaneFlags()
        self.trace = trace
        self.total_stream_words = 0
        self._spad_read_used = False
        self._spad_write_used = False

    # ---- helpers

    def _t(self, unit, event):
        if self.trace is not None:
            self.trace.append((self.cycle_now, self.lane_id, unit, event))

    cycle_now = 0

    def queue_space(self, n=1) -> bool:
        return len(self.queue) + n <= QUEUE_DEPTH

    def enqueue(self, entry: QueueEntry) -> bool:
        if not self.queue_space():
            return False
        self.queue.append(entry)
        return True

    def active(self) -> bool:
        if self.queue or self.streams or self.config_timer > 0:
            return True
        if self.fabric is not None and self.fabric.busy():
            return True
        return False

    def in_fifo(self, slot):
        pid = self.slot_in_pid.get(slot)
        if pid is None:
            raise SimError(f"lane {self.lane_id}: input port {slot} not bound by configuration")
        return self.fabric.in_fifos[pid]

    def out_fifo(self, slot):
        pid = self.slot_out_pid.get(slot)
        if pid is None:
            raise SimError(f"lane {self.lane_id}: output port {slot} not bound by configuration")
        return self.fabric.out_fifos[pid]

    # ---- command issue (one per cycle)

    def issue_cycle(self, machine, t):
        self.cycle_now = t
        if self.config_timer > 0:
            self.config_timer -= 1
            self.flags.draining = True
            if self.config_timer == 0:
                dfg, placement = self.pending_fabric
                self.fabric = configure(self.config.fabric, dfg, placement)
                self.pending_fabric = None
                self.slot_in_pid = {}
                self.slot_out_pid = {}
                bindings = placement.port_bindings if placement is not None else None
                if bindings is None and dfg is not None:
                    from .scheduler import bind_ports
                    bindings = bind_ports(dfg, self.config.fabric)
                if bindings:
                    for pid, (d, slot, _c) in bindings.items():
                        if d == "in":
                            self.slot_in_pid[slot] = pid
                        else:
                            self.slot_out_pid[slot] = pid
                self._t("config", "done")
                self.flags.progressed = True
            return
        blocked_in: set = set()
        blocked_out: set = set()
        barrier_spad = False
        # earlier spad commands still queued, by class (ld reads the SPAD,
        # st writes it); a barrier only orders accesses of its own class
        spad_queued = {"ld": False, "st": False}
        spad_outstanding = {"ld": 0, "st": 0}
        for s in self.streams.values():
            if not s.done():
                if s.reads_spad:
                    spad_outstanding["ld"] += 1
                if s.writes_spad:
                    spad_outstanding["st"] += 1
        for idx, entry in enumerate(self.queue):
            cmd = entry.cmd
            kind = cmd.kind
            if entry.is_placeholder:
                slot = cmd.in_port
                if slot in blocked_in or slot in self.in_owner:
                    blocked_in.add(slot)
                    continue
                self._issue_placeholder(machine, entry, t)
                self.queue.pop(idx)
                self.flags.issued = True
                return
            if kind == "barrier":
                need = 0
                if cmd.which in ("ld", "all"):
                    need += spad_outstanding["ld"] + spad_queued["ld"]
                if cmd.which in ("st", "all"):
                    need += spad_outstanding["st"] + spad_queued["st"]
                if need == 0:
                    self.queue.pop(idx)
                    self.flags.issued = True
                    self.flags.progressed = True
                    self._t("queue", "barrier retired")
                    return
                barrier_spad = True
                self.flags.barrier_wait = True
                continue
            if kind == "config":
                if self.streams or self.queue[:idx]:
                    continue
                if self.fabric is not None and self.fabric.busy():
                    self.flags.draining = True
                    continue
                self.queue.pop(idx)
                self.pending_fabric = machine.resolve_config(cmd)
                self.config_timer = self.config.fabric.config_cycles()
                self.flags.issued = True
                self.flags.progressed = True
                self._t("config", f"start {cmd.df}")
                return
            if kind in ("shared_ld", "shared_st", "local_ld", "local_st") and barrier_spad:
                # held by an unsatisfied earlier barrier
                spad_queued["ld" if kind in ("local_ld", "shared_st") else "st"] = True
                if kind in ("local_ld",):
                    blocked_in.add(cmd.in_port)
                if kind in ("local_st",):
                    blocked_out.add(cmd.out_port)
                continue
            if len(self.streams) >= STREAM_TABLE:
                if kind in ("shared_ld", "shared_st", "local_ld", "local_st"):
                    spad_queued["ld" if kind in ("local_ld", "shared_st") else "st"] = True
                continue
            if kind in ("local_ld", "const"):
                slot = cmd.in_port
                if slot in blocked_in or slot in self.in_owner:
                    blocked_in.add(slot)
                    if kind == "local_ld":
                        spad_queued["ld"] = True
                    continue
                self._issue_stream(machine, entry, t)
                self.queue.pop(idx)
                return
            if kind == "local_st":
                slot = cmd.out_port
                if slot in blocked_out or slot in self.out_owner:
                    blocked_out.add(slot)
                    spad_queued["st"] = True
                    continue
                self._issue_stream(machine, entry, t)
                self.queue.pop(idx)
                return
            if kind in ("shared_ld", "shared_st"):
                self._issue_stream(machine, entry, t)
                self.queue.pop(idx)
                return
            if kind == "xfer":
                slot = cmd.out_port
                if slot in blocked_out or slot in self.out_owner:
                    blocked_out.add(slot)
                    continue
                if cmd.dlane == 0:
                    dslot = cmd.in_port
                    if dslot in blocked_in or dslot in self.in_owner:
                        blocked_in.add(dslot)
                        blocked_out.add(slot)
                        continue
                self._issue_stream(machine, entry, t)
                self.queue.pop(idx)
                return

    def _alloc_sid(self):
        sid = self.next_sid
        self.next_sid += 1
        return sid

    def _issue_placeholder(self, machine, entry, t):
        cmd = entry.cmd
        sid = self._alloc_sid()
        ph = PlaceholderStream(sid, cmd, entry.token, entry.src_lane)
        fifo = self.in_fifo(cmd.in_port)
        r = cmd.reuse
        beats = cmd.count
        fifo.push_segment(r.nc.raw if r else 256, r.sc.raw if r else 0, beats)
        self.in_owner[cmd.in_port] = sid
        self.streams[sid] = ph
        machine.send_message(t + 1, entry.src_lane, ("arm", entry.token))
        self.flags.progressed = True
        self._t("queue", f"placeholder issued port {cmd.in_port}")

    def _expected_beats(self, cmd, fifo):
        if cmd.kind == "const":
            pat = cmd.pattern
            nj = pat.nj if pat.dims >= 2 else 1
            sji = pat.sji.raw if pat.dims >= 2 else 0
            n = len(expand_const_array(cmd.val1, cmd.val2, nj, pat.ni * 256, sji))
            return (n + fifo.width - 1) // fifo.width
        pat = cmd.pattern
        runs = pat.run_lengths()
        return sum((r + fifo.width - 1) // fifo.width for r in runs)

    def _issue_stream(self, machine, entry, t):
        cmd = entry.cmd
        sid = self._alloc_sid()
        if cmd.kind == "local_ld":
            fifo = self.in_fifo(cmd.in_port)
            s = LocalLdStream(sid, cmd, fifo)
            r = cmd.reuse
            fifo.push_segment(r.nc.raw if r else 256, r.sc.raw if r else 0,
                              self._expected_beats(cmd, fifo))
            self.in_owner[cmd.in_port] = sid
        elif cmd.kind == "const":
            fifo = self.in_fifo(cmd.in_port)
            s = ConstStream(sid, cmd, fifo)
            r = cmd.reuse
            fifo.push_segment(r.nc.raw if r else 256, r.sc.raw if r else 0,
                              self._expected_beats(cmd, fifo))
            self.in_owner[cmd.in_port] = sid
        elif cmd.kind == "local_st":
            s = LocalStStream(sid, cmd, self.out_fifo(cmd.out_port))
            self.out_owner[cmd.out_port] = sid
        elif cmd.kind == "shared_ld":
            s = SharedLdStream(sid, cmd)
        elif cmd.kind == "shared_st":
            s = SharedStStream(sid, cmd)
        elif cmd.kind == "xfer":
            dest = (self.lane_id + cmd.dlane) % self.config.lane_count
            s = XferStream(sid, cmd, self.out_fifo(cmd.out_port), dest, entry.token)
            self.out_owner[cmd.out_port] = sid
            if cmd.dlane == 0:
                fifo = self.in_fifo(cmd.in_port)
                r = cmd.reuse
                fifo.push_segment(r.nc.raw if r else 256, r.sc.raw if r else 0, cmd.count)
                self.in_owner[cmd.in_port] = sid << 1 | 1  # distinct owner key
            elif entry.token in machine.prearmed:
                machine.prearmed.discard(entry.token)
                s.armed = True
        else:  # pragma: no cover
            raise SimError(f"cannot issue {cmd.kind}")
        self.streams[sid] = s
        self.flags.issued = True
        self.flags.progressed = True
        self._t("queue", f"issue {cmd.kind} sid={sid}")

    # ---- stream control + SPAD movement

    def spad_cycle(self, t):
        self.cycle_now = t
        # read port: pick the scratchpad-reading stream by cycles-to-stall
        readers = []
        for sid in sorted(self.streams):
            s = self.streams[sid]
            if isinstance(s, LocalLdStream) and s.wants_read():
                ratio = s.fifo.data_words() / s.fifo.width
                readers.append((ratio, sid, s))
        reader = min(readers, default=None, key=lambda r: (r[0], r[1]))
        if len(readers) > 1:
            self.flags.contention = True
        if reader is not None:
            moved = reader[2].do_read(self.spad)
            if moved:
                self.flags.progressed = True
        # const streams generate independently of the SPAD ports
        for sid in sorted(self.streams):
            s = self.streams[sid]
            if isinstance(s, ConstStream) and not s.done():
                if s.advance():
                    self.flags.progressed = True
        # write port: stores, lowest stream id first
        writers = [
            (sid, s) for sid, s in sorted(self.streams.items())
            if isinstance(s, LocalStStream) and s.wants_write()
        ]
        if len(writers) > 1:
            self.flags.contention = True
        wrote = False
        if writers:
            if writers[0][1].do_write(self.spad):
                self.flags.progressed = True
            wrote = True
        self._spad_read_used = reader is not None
        self._spad_write_used = wrote
        return reader is not None, wrote

    def select_stream(self):
        """Spec op: the scratchpad-reading stream chosen this cycle, or None."""
        readers = []
        for sid in sorted(self.streams):
            s = self.streams[sid]
            if isinstance(s, LocalLdStream) and not s.done():
                readers.append((s.fifo.data_words() / s.fifo.width, sid))
        if not readers:
            return None
        return min(readers, key=lambda r: (r[0], r[1]))[1]

    # ---- completion bookkeeping

    def retire_streams(self, machine, t):
        done = [sid for sid, s in self.streams.items() if s.done()]
        for sid in done:
            s = self.streams[sid]
            if isinstance(s, LocalLdStream) and s.fifo.stage_vals:
                continue  # flush pending partial beat first
            self.total_stream_words += s.words_moved
            if isinstance(s, (LocalLdStream, ConstStream)):
                slot = s.cmd.in_port
                if self.in_owner.get(slot) == sid:
                    del self.in_owner[slot]
            elif isinstance(s, LocalStStream):
                slot = s.cmd.out_port
                if self.out_owner.get(slot) == sid:
                    del self.out_owner[slot]
            elif isinstance(s, XferStream):
                slot = s.cmd.out_port
                if self.out_owner.get(slot) == sid:
                    del self.out_owner[slot]
                if s.cmd.dlane == 0:
                    dslot = s.cmd.in_port
                    if self.in_owner.get(dslot) == (sid << 1 | 1):
                        del self.in_owner[dslot]
                else:
                    machine.send_message(t + 1, s.dest_lane, ("release", s.token))
            elif isinstance(s, PlaceholderStream):
                slot = s.cmd.in_port
                if self.in_owner.get(slot) == sid:
                    del self.in_owner[slot]
            del self.streams[sid]
            self.flags.progressed = True
            self._t("stream", f"complete sid={sid}")
