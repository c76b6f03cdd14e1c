"""Cycle-level simulator and toolchain for a vector-stream dataflow accelerator.

Subsystems:
  isa        stream patterns, control commands, dataflow graphs, parsers
  streams    pure expansion of patterns (the semantic oracle for the timing model)
  fabric     heterogeneous dedicated/temporal compute grid and port FIFOs
  lane       command queue, stream control, scratchpad, XFER endpoint
  machine    whole-accelerator cycle loop, broadcast control, statistics
  scheduler  annealing place-and-route with delay equalization
  kernels    workload programs, reference oracles, ideal-ASIC models
  analysis   static stream-capability study over affine loop nests
  cli        `revelsim` command-line driver
"""

from ._accel import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
