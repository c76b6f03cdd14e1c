"""Static stream-capability analysis over a small affine loop-nest IR.

For each memory access in a nest, the matcher walks loops inner to outer
and greedily maps them onto the dimensions of an address capability
(V, R, RR, RI, RRR, RII). A stride-0 loop folds into the stream-reuse
schedule when reuse is enabled; adjacent rectangular dims whose strides
compose contiguously collapse into one; an inductively-bounded inner dim
needs an 'I' capability letter. Unmapped outer loops become repeated
stream issues. Stream "length" is the number of loop iterations a command
covers, so lengths always sum to the nest's dynamic access count.

Bounds and addresses are affine in iterators and named parameters; trip
counts are evaluated exactly by enumeration (desk-scale nests).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

CAPABILITIES = ("V", "R", "RR", "RI", "RRR", "RII")
VECTOR_WIDTH = 4


class NestError(ValueError):
    pass


# --------------------------------------------------------------------------
# Affine expressions: const + sum(coef * var)


@dataclass(frozen=True)
class Affine:
    """Polynomial over named variables; must reduce to an affine form once
    parameters are substituted. terms maps a sorted variable tuple (with
    multiplicity) to its integer coefficient; () is the constant."""

    terms: tuple = ((), 0),

    @classmethod
    def of(cls, mapping) -> "Affine":
        items = {k: v for k, v in mapping.items() if v}
        items[()] = mapping.get((), 0)
        return cls(tuple(sorted(items.items())))

    @property
    def const(self) -> int:
        return dict(self.terms).get((), 0)

    def coef(self, var) -> int:
        for k, c in self.terms:
            if k == (var,):
                return c
            if len(k) > 1 and var in k and c:
                raise NestError(f"expression is not affine in {var!r}")
        return 0

    def subst(self, env: dict) -> "Affine":
        out: dict = {}
        for k, c in self.terms:
            kept = []
            for v in k:
                if v in env:
                    c *= env[v]
                else:
                    kept.append(v)
            key = tuple(sorted(kept))
            out[key] = out.get(key, 0) + c
        return Affine.of(out)

    def value(self, env: dict) -> int:
        out = self.subst(env)
        free = [k for k, c in out.terms if k and c]
        if free:
            raise NestError(f"unbound variables {free}")
        return out.const

    def depends_on(self, var) -> bool:
        return any(var in k and c for k, c in self.terms)

    def _mul(self, other: "Affine") -> "Affine":
        out: dict = {}
        for k1, c1 in self.terms:
            for k2, c2 in other.terms:
                key = tuple(sorted(k1 + k2))
                out[key] = out.get(key, 0) + c1 * c2
        return Affine.of(out)

    def _add(self, other: "Affine", sign: int = 1) -> "Affine":
        out = dict(self.terms)
        for k, c in other.terms:
            out[k] = out.get(k, 0) + sign * c
        return Affine.of(out)


_TOKEN = re.compile(r"\s*([A-Za-z_]\w*|\d+|[()+\-*/])")


def parse_affine(text: str) -> Affine:
    tokens = _TOKEN.findall(text)
    pos = [0]

    def peek():
        return tokens[pos[0]] if pos[0] < len(tokens) else None

    def take():
        t = peek()
        pos[0] += 1
        return t

    def atom() -> Affine:
        t = take()
        if t == "(":
            e = expr()
            if take() != ")":
                raise NestError(f"unbalanced parens in {text!r}")
            return e
        if t == "-":
            return Affine.of({(): 0})._add(atom(), -1)
        if t is None:
            raise NestError(f"truncated expression {text!r}")
        if t.isdigit():
            return Affine.of({(): int(t)})
        return Affine.of({(t,): 1})

    def term() -> Affine:
        a = atom()
        while peek() in ("*", "/"):
            op = take()
            b = atom()
            if op == "*":
                a = a._mul(b)
            else:
                free = [k for k, c in b.terms if k and c]
                if free or b.const == 0:
                    raise NestError(f"non-constant division in {text!r}")
                out = {}
                for k, c in a.terms:
                    if c % b.const:
                        raise NestError(f"inexact division in {text!r}")
                    out[k] = c // b.const
                a = Affine.of(out)
        return a

    def expr() -> Affine:
        a = term()
        while peek() in ("+", "-"):
            op = take()
            a = a._add(term(), 1 if op == "+" else -1)
        return a

    out = expr()
    if pos[0] != len(tokens):
        raise NestError(f"trailing tokens in {text!r}")
    return out


# --------------------------------------------------------------------------
# IR


@dataclass(frozen=True)
class Loop:
    var: str
    upper: Affine  # trip count, affine in outer iterators and params


@dataclass(frozen=True)
class Access:
    array: str
    addr: Affine
    mode: str = "read"   # read | write
    depth: int | None = None  # loops enclosing the access (default: all)


@dataclass
class LoopNestIR:
    name: str
    params: list = field(default_factory=list)
    loops: list = field(default_factory=list)
    accesses: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.loops) > 3:
            raise NestError("nesting depth is limited to 3")


def parse_nest(text: str, name: str = "nest") -> LoopNestIR:
    params, loops, accesses = [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 2)
        try:
            if parts[0] == "param":
                params.append(parts[1])
            elif parts[0] == "loop":
                loops.append(Loop(parts[1], parse_affine(parts[2])))
            elif parts[0] == "access":
                rest = parts[2]
                mode = "read"
                depth = None
                m = re.search(r"\b(read|write)\b", rest)
                if m:
                    mode = m.group(1)
                    rest = (rest[:m.start()] + rest[m.end():]).strip()
                d = re.search(r"depth=(\d+)", rest)
                if d:
                    depth = int(d.group(1))
                    rest = (rest[:d.start()] + rest[d.end():]).strip()
                accesses.append(Access(parts[1], parse_affine(rest), mode, depth))
            else:
                raise NestError(f"unknown directive {parts[0]!r}")
        except (IndexError, NestError) as e:
            raise NestError(f"{name} line {lineno}: {e}") from None
    return LoopNestIR(name, params, loops, accesses)


def _iterate(loops, env, depth):
    """Yield env dicts over the first `depth` loops (exact enumeration)."""
    if depth == 0:
        yield dict(env)
        return
    def rec(level, env):
        if level == depth:
            yield dict(env)
            return
        lp = loops[level]
        trip = max(0, lp.upper.value(env))
        for it in range(trip):
            env[lp.var] = it
            yield from rec(level + 1, env)
        env.pop(lp.var, None)
    yield from rec(0, dict(env))


# --------------------------------------------------------------------------
# Capability matching


@dataclass
class StreamDecomposition:
    capability: str
    commands: int
    covered_iters: int          # == total dynamic accesses (conservation)
    mapped_loops: list = field(default_factory=list)
    reuse_loops: list = field(default_factory=list)

    @property
    def avg_length(self) -> float:
        return self.covered_iters / self.commands if self.commands else 0.0


def match_capability(access: Access, nest: LoopNestIR, cap: str,
                     params: dict, reuse_enabled: bool = True,
                     vec_width: int = VECTOR_WIDTH) -> StreamDecomposition:
    """Greedy inner-to-outer mapping of loop dims onto capability dims."""
    if cap not in CAPABILITIES:
        raise NestError(f"unknown capability {cap!r}")
    depth = access.depth if access.depth is not None else len(nest.loops)
    loops = nest.loops[:depth]
    addr = access.addr.subst(params)
    uppers = [lp.upper.subst(params) for lp in loops]

    cap_dims = 1 if cap == "V" else len(cap)
    # capability letter for stream-dim position p (1 = innermost)
    def dim_char(p):
        if cap == "V":
            return "R"
        return cap[len(cap) - p]

    def const_trip(level):
        """The loop's trip count if constant over the enclosing space."""
        vals = {max(0, uppers[level].value(env))
                for env in _iterate(loops, params, level)}
        if not vals:
            return 0
        return vals.pop() if len(vals) == 1 else None

    mapped = []   # (level, stride, span or None) innermost-first stream dims
    reuse_loops = []
    covered = 0   # levels covered (stream or reuse), from the innermost
    for level in range(depth - 1, -1, -1):
        if level != depth - 1 - covered:
            break  # a gap appeared; outer loops repeat
        var = loops[level].var
        stride = addr.coef(var)
        if stride == 0 and reuse_enabled and not mapped:
            reuse_loops.append(level)
            covered += 1
            continue
        trip = const_trip(level)
        # contiguity collapse into the current innermost stream dim
        if mapped:
            top_level, top_stride, top_span = mapped[-1]
            if (top_span is not None and trip is not None
                    and stride == top_stride * top_span):
                mapped[-1] = (level, top_stride, top_span * trip)
                covered += 1
                continue
        if len(mapped) >= cap_dims:
            break
        # inner mapped dims whose trips vary with this iterator need 'I'
        ok = True
        for p, (lvl, _s, _n) in enumerate(mapped, start=1):
            inner_upper = uppers[lvl]
            if inner_upper.depends_on(var) and dim_char(p) != "I":
                ok = False
                break
        # rectangular outer dims must themselves have constant trips unless
        # an enclosing iterator may stretch them through an 'I' slot later;
        # a varying trip for this dim is fine (its count is a runtime param
        # per issue) -- variation of *inner* dims is what needs induction
        if not ok:
            break
        mapped.append((level, stride, trip))
        covered += 1

    # command count: one per iteration of the uncovered outer space, with
    # V chunking the innermost runs by the vector width
    outer_depth = depth - covered
    commands = 0
    total_iters = 0
    if cap == "V":
        # vector issues cover <= vec_width consecutive innermost iterations
        inner_level = depth - 1
        for env in _iterate(loops, params, inner_level):
            run = max(0, uppers[inner_level].value(env))
            commands += -(-run // vec_width) if run else 0
            total_iters += run
        if depth == 0:
            commands, total_iters = 1, 1
        return StreamDecomposition(cap, max(commands, 0), total_iters,
                                   [depth - 1], [])
    for env in _iterate(loops, params, outer_depth):
        commands += 1
        inner_total = 0
        for _ in _iterate(loops[outer_depth:], env, depth - outer_depth):
            inner_total += 1
        total_iters += inner_total
    return StreamDecomposition(cap, commands, total_iters,
                               [lvl for lvl, _s, _n in mapped], reuse_loops)


def control_overhead(nest: LoopNestIR, cap: str, params: dict,
                     reuse_enabled: bool = True):
    """(insts_per_inner_iteration, avg stream length) over all accesses."""
    total_cmds = 0
    total_covered = 0
    inner_iters = sum(1 for _ in _iterate(nest.loops, params, len(nest.loops)))
    for acc in nest.accesses:
        d = match_capability(acc, nest, cap, params, reuse_enabled)
        total_cmds += d.commands
        total_covered += d.covered_iters
    if inner_iters == 0:
        return 0.0, 0.0
    avg_len = total_covered / total_cmds if total_cmds else 0.0
    return total_cmds / inner_iters, avg_len


@dataclass
class CapabilityReport:
    nest: str
    rows: list  # (capability, reuse, avg_length, insts_per_iter)

    def to_csv(self) -> str:
        lines = ["kernel,capability,reuse,avg_length,insts_per_iter"]
        for cap, reuse, avg, ipi in self.rows:
            lines.append(f"{self.nest},{cap},{int(reuse)},{avg:.6g},{ipi:.6g}")
        return "\n".join(lines) + "\n"


def analyze_nest(nest: LoopNestIR, params: dict,
                 caps=CAPABILITIES) -> CapabilityReport:
    rows = []
    for cap in caps:
        for reuse in (True, False):
            ipi, avg = control_overhead(nest, cap, params, reuse_enabled=reuse)
            rows.append((cap, reuse, avg, ipi))
    return CapabilityReport(nest.name, rows)


def load_fixture(name: str) -> LoopNestIR:
    import importlib.resources as res

    text = (res.files("revelsim") / "nests" / f"{name}.nest").read_text()
    return parse_nest(text, name=name)


FIXTURE_NESTS = ("cholesky", "qr", "svd", "solver", "fft", "gemm", "fir")


def default_params(name: str, n: int = 32) -> dict:
    if name == "fft":
        size = max(64, 1 << max(6, n.bit_length()))
        return {"n": size, "h": size // 2, "stages": size.bit_length() - 1}
    if name == "gemm":
        return {"n": n, "m": 16, "p": 64}
    if name == "fir":
        return {"n": max(n, 16), "m": 8}
    return {"n": n}
