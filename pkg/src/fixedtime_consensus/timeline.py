"""Sampling partition whose interval lengths sum to the settling time.

Interval ``k`` (0-based) is ``[t_k, t_{k+1})`` with length
``6 T_s / (pi (k+1))^2``; since ``sum 1/k^2 = pi^2/6`` the instants
accumulate at ``T_s`` without reaching it.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

K_MAX_CAP = 10_000
DEFAULT_K_MAX = 60


class PartitionError(ValueError):
    pass


def interval_length(settling_time: float, k: int) -> float:
    """Length of the k-th interval (1-based ``k``)."""
    return 6.0 * settling_time / (math.pi * k) ** 2


@dataclass(frozen=True)
class Interval:
    """One sample interval ``[start, start + length)``."""

    index: int
    start: float
    length: float

    @property
    def end(self) -> float:
        return self.start + self.length

    def offset(self, t: float) -> float:
        """``t - start``, rejecting times outside the half-open interval."""
        s = t - self.start
        if not (0.0 <= s < self.length):
            raise PartitionError(
                f"t={t!r} outside interval {self.index} [{self.start!r}, {self.end!r})"
            )
        return s


@dataclass(frozen=True, eq=False)
class TimePartition:
    """Instants ``t_0 = 0 < t_1 < ... < t_K < T_s``.

    ``instants`` are the rounded running sums; ``instants_residual`` holds the
    compensation term so that ``instants + instants_residual`` carries roughly
    twice the working precision.
    """

    settling_time: float
    k_max: int
    instants: NDArray[np.float64]
    instants_residual: NDArray[np.float64]
    lengths: NDArray[np.float64]

    def interval(self, k: int) -> Interval:
        if not 0 <= k < self.k_max:
            raise PartitionError(f"interval index {k} outside 0..{self.k_max - 1}")
        return Interval(k, float(self.instants[k]), float(self.lengths[k]))

    def intervals(self) -> list[Interval]:
        return [self.interval(k) for k in range(self.k_max)]

    @property
    def final_instant(self) -> float:
        return float(self.instants[-1])

    def reconstructed_lengths(self) -> NDArray[np.float64]:
        """Interval lengths recovered from consecutive instants in compensated form."""
        hi = np.diff(self.instants)
        lo = np.diff(self.instants_residual)
        return hi + lo

    def to_json(self) -> dict:
        return {
            "settling_time": self.settling_time,
            "k_max": self.k_max,
            "instants": [float(t) for t in self.instants],
        }


def build_partition(settling_time: float, k_max: int = DEFAULT_K_MAX) -> TimePartition:
    if not (isinstance(settling_time, (int, float)) and math.isfinite(settling_time) and settling_time > 0):
        raise PartitionError(f"settling_time must be a positive finite number, got {settling_time!r}")
    if isinstance(k_max, bool) or not isinstance(k_max, (int, np.integer)) or not 1 <= k_max <= K_MAX_CAP:
        raise PartitionError(f"k_max must be an integer in 1..{K_MAX_CAP}, got {k_max!r}")
    k_max = int(k_max)
    lengths = np.array([interval_length(settling_time, k) for k in range(1, k_max + 1)])
    hi = np.zeros(k_max + 1)
    lo = np.zeros(k_max + 1)
    total, comp = 0.0, 0.0
    for k, step in enumerate(lengths, start=1):
        # Neumaier summation: the lost low-order bits accumulate in comp
        t = total + step
        if abs(total) >= abs(step):
            comp += (total - t) + step
        else:
            comp += (step - t) + total
        total = t
        hi[k] = total + comp
        lo[k] = comp - (hi[k] - total)
    return TimePartition(float(settling_time), k_max, hi, lo, lengths)


def locate_interval(p: TimePartition, t: float) -> int:
    """Index ``k`` with ``t_k <= t < t_{k+1}``."""
    if not (p.instants[0] <= t < p.instants[-1]):
        raise PartitionError(f"t={t!r} outside [{p.instants[0]!r}, {p.instants[-1]!r})")
    return bisect.bisect_right(p.instants.tolist(), t) - 1
