"""Batches of torus points with exact phase reduction.

Cocycle evaluation needs e(m x) = exp(2 pi i m x) for integers m up to ~1e8
at many points x. A point set returns frac(m x) for all of its points,
reducing m*x mod 1 in fixed point before anything touches a float.
"""

from __future__ import annotations

import numpy as np

from .torus import RotationSpec, TorusAngle, angle_times_int

_TWO64 = float(1 << 64)
_MASK = (1 << 64) - 1


def _u64(v: int) -> np.uint64:
    return np.uint64(v & _MASK)


class GridPoints:
    """x_j = j / size + shift for j = 0 .. size-1 (size a power of two)."""

    def __init__(self, size: int, shift: TorusAngle | None = None, bits: int = 256):
        if size < 1 or size & (size - 1):
            raise ValueError("grid size must be a power of two")
        self.size = size
        self.shift = shift if shift is not None else TorusAngle.zero(bits)
        self._j = np.arange(size, dtype=np.uint64)

    def __len__(self):
        return self.size

    def shifted(self, by: TorusAngle) -> "GridPoints":
        return GridPoints(self.size, self.shift + by)

    def frac(self, m: int) -> np.ndarray:
        base = _u64(self.shift.times(m).frac64())
        step = (m % self.size) * ((1 << 64) // self.size)
        with np.errstate(over="ignore"):
            u = base + self._j * _u64(step)
        return u.astype(np.float64) / _TWO64

    def x(self) -> np.ndarray:
        return self.frac(1)


class OrbitPoints:
    """x_j = x0 + (start + j) * alpha for j = 0 .. count-1."""

    def __init__(self, x0: TorusAngle, alpha: RotationSpec, start: int, count: int):
        self.x0 = x0
        self.alpha = alpha
        self.start = start
        self.count = count
        self._j = np.arange(count, dtype=np.uint64)

    def __len__(self):
        return self.count

    def shifted(self, by_steps: int = 1) -> "OrbitPoints":
        return OrbitPoints(self.x0, self.alpha, self.start + by_steps, self.count)

    def frac(self, m: int) -> np.ndarray:
        first = (self.x0 + angle_times_int(self.start, self.alpha)).times(m)
        # m*alpha rounded to 64 bits: drift after j steps is at most j * 2^-64
        step = angle_times_int(m, self.alpha).frac64()
        with np.errstate(over="ignore"):
            u = _u64(first.frac64()) + self._j * _u64(step)
        return u.astype(np.float64) / _TWO64

    def x(self) -> np.ndarray:
        return self.frac(1)


class ExplicitPoints:
    """An explicit list of TorusAngle points (exact, any size)."""

    def __init__(self, points):
        self.points = list(points)

    def __len__(self):
        return len(self.points)

    def shifted(self, by: TorusAngle) -> "ExplicitPoints":
        return ExplicitPoints([p + by for p in self.points])

    def frac(self, m: int) -> np.ndarray:
        return np.array([p.times(m).to_float() for p in self.points], dtype=np.float64)

    def x(self) -> np.ndarray:
        return self.frac(1)
