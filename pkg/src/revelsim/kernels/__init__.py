"""Workload suite: programs, reference oracles, and ideal-ASIC models."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import cholesky, fft, fir, gemm, qr, solver
from .asic import asic_cycles
from .common import (KernelBuild, canon_variant, check_output, run_build,
                     placements_for)
from . import oracles

__all__ = ["KERNELS", "Kernel", "asic_cycles", "run_build", "check_output",
           "build_kernel", "oracle_run", "oracles", "KernelBuild"]


@dataclass(frozen=True)
class Kernel:
    name: str
    module: object
    variants: tuple
    sizes: tuple
    default_lanes: int = 1
    asic_name: str | None = None


KERNELS = {
    "cholesky": Kernel("cholesky", cholesky,
                       ("baseline", "inductive", "fgdeps", "heterogeneous", "masking"),
                       (8, 12, 16, 24, 32), 1, "cholesky"),
    "qr": Kernel("qr", qr, ("masking",), (8, 12, 16, 24, 32), 2, "qr"),
    "solver": Kernel("solver", solver,
                     ("baseline", "inductive", "fgdeps", "heterogeneous", "masking"),
                     (8, 12, 16, 24, 32), 1, "solver"),
    "gemm": Kernel("gemm", gemm, ("baseline", "masking"), (8, 12, 16, 24, 32), 1, "mm"),
    "fir": Kernel("fir", fir, ("baseline", "masking"), (8, 12, 16, 24, 32), 1, "fir"),
    "fft": Kernel("fft", fft, ("masking",), (64, 256, 1024), 8, "fft"),
}


def build_kernel(name: str, size: int, variant: str = "full", lanes: int | None = None,
                 seed: int = 0, **kw) -> KernelBuild:
    k = KERNELS[name]
    v = canon_variant(variant)
    if v not in k.variants:
        raise KeyError(f"kernel {name} does not support variant {variant!r}")
    lanes = k.default_lanes if lanes is None else lanes
    return k.module.build(n=size, variant=v, lanes=lanes, seed=seed, **kw)


def oracle_run(name: str, size: int, input=None, seed: int = 0):
    """Reference output for a kernel instance (generated input when None)."""
    import numpy as np
    if name == "cholesky":
        a = cholesky.gen_input(size, seed) if input is None else np.asarray(input)
        return oracles.cholesky_ref(a)
    if name == "solver":
        if input is None:
            l, b = solver.gen_input(size, seed)
        else:
            l, b = input
        return oracles.solver_ref(l, b)
    if name == "qr":
        a = qr.gen_input(size, seed) if input is None else np.asarray(input)
        return oracles.qr_r_ref(a)
    if name == "gemm":
        if input is None:
            a, b = gemm.gen_input(size, 1, seed)
            return oracles.gemm_ref(a[0], b[0])
        a, b = input
        return oracles.gemm_ref(a, b)
    if name == "fir":
        if input is None:
            m = 8 if size >= 16 else 4
            x, h = fir.gen_input(size, m, seed)
        else:
            x, h = input
        return oracles.centro_fir_ref(x, h)
    if name == "fft":
        x = fft.gen_input(size, seed) if input is None else input
        return oracles.fft_ref(x)
    raise KeyError(f"unknown kernel {name!r}")
