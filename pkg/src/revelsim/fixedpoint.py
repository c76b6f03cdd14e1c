"""Signed 8.8 fixed-point scalars for stretch and reuse coefficients.

Stream stretch terms may be fractional (a consumption rate divided by a
vector width, for instance), so they are carried as signed 8.8 fixed point:
raw integer = value * 256, range [-128, 128). All arithmetic in the
simulator happens on raw ints; this wrapper exists for parsing, printing,
and exact serialization round-trips.
"""

from __future__ import annotations

SCALE = 256
RAW_MIN = -(1 << 15)
RAW_MAX = (1 << 15) - 1


class Fx:
    """An exact signed 8.8 fixed-point value."""

    __slots__ = ("raw",)

    def __init__(self, raw: int):
        if not isinstance(raw, int):
            raise TypeError(f"raw must be int, got {type(raw).__name__}")
        if not (RAW_MIN <= raw <= RAW_MAX):
            raise ValueError(f"fixed-point raw value {raw} outside 8.8 range")
        self.raw = raw

    @classmethod
    def from_value(cls, v) -> "Fx":
        """Build from an int/float/str that is exactly representable in 8.8."""
        if isinstance(v, Fx):
            return v
        if isinstance(v, str):
            v = float(v)
        if isinstance(v, bool):
            raise TypeError("bool is not a fixed-point value")
        scaled = v * SCALE
        raw = int(round(scaled))
        if scaled != raw:
            raise ValueError(f"{v!r} is not representable in 8.8 fixed point")
        return cls(raw)

    @classmethod
    def zero(cls) -> "Fx":
        return cls(0)

    def __float__(self) -> float:
        return self.raw / SCALE

    def __bool__(self) -> bool:
        return self.raw != 0

    def __eq__(self, other) -> bool:
        if isinstance(other, Fx):
            return self.raw == other.raw
        if isinstance(other, (int, float)):
            return self.raw == other * SCALE
        return NotImplemented

    def __hash__(self) -> int:
        return hash(("Fx", self.raw))

    def __repr__(self) -> str:
        return f"Fx({self.to_str()})"

    def to_str(self) -> str:
        """Exact decimal text; round-trips through from_value."""
        if self.raw % SCALE == 0:
            return str(self.raw // SCALE)
        return repr(self.raw / SCALE)


def fx_ceil(raw: int) -> int:
    """Ceiling of a raw 8.8 value, as a plain int."""
    return (raw + SCALE - 1) >> 8


def fx_floor(raw: int) -> int:
    return raw >> 8
