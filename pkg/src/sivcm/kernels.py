"""Smoothing kernels and the interval truncation weight."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Kernel(enum.IntEnum):
    """Compactly supported kernels on [-1, 1]; the value is the id used by the compiled core."""

    EPANECHNIKOV = 0
    UNIFORM = 1
    TRIANGULAR = 2

    @property
    def support_radius(self) -> float:
        return 1.0

    @classmethod
    def from_name(cls, name: str) -> "Kernel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown kernel {name!r}") from None


def kernel_eval(k: Kernel, u):
    """Evaluate ``k`` at ``u`` (scalar or array); zero outside [-1, 1]."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) <= 1.0
    if k == Kernel.EPANECHNIKOV:
        val = 0.75 * (1.0 - u * u)
    elif k == Kernel.UNIFORM:
        val = np.full_like(u, 0.5)
    elif k == Kernel.TRIANGULAR:
        val = 1.0 - np.abs(u)
    else:
        raise ValueError(f"unknown kernel {k!r}")
    out = np.where(inside, np.maximum(val, 0.0), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WeightFn:
    """Indicator of the closed interval ``[lower, upper]``."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("weight bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError("weight interval needs lower < upper")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = ((u >= self.lower) & (u <= self.upper)).astype(float)
        return float(out) if out.ndim == 0 else out

    @classmethod
    def everywhere(cls) -> "WeightFn":
        return cls(-np.finfo(float).max, np.finfo(float).max)
