"""Streaming statistics that can be merged across shards.

Welford's update keeps mean and variance numerically stable for long runs;
the merge rule (Chan et al.) lets disjoint shards be combined so that a
sharded reduction agrees with a serial pass to near machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class RunningStat:
    """Streaming mean/variance accumulator (a commutative monoid under merge)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)

    def merge(self, other: "RunningStat") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / n
        self.m2 += other.m2 + delta * delta * self.count * other.count / n
        self.count = n

    @property
    def variance(self) -> float:
        """Sample variance (ddof=1); 0.0 until two values have been seen."""
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def standard_error(self) -> float:
        if self.count < 2:
            return 0.0
        return self.std / math.sqrt(self.count)
