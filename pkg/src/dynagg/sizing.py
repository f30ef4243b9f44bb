"""Skeleton size as a function of scene complexity.

Four policy families are supported: ``logarithm`` (the default,
``M = a + b * log10(N)``), ``power`` (``coefficient * N ** exponent``),
``linear`` (``slope * N``, i.e. a fixed average receptive field) and
``static``.  Every evaluation is rounded and clamped to ``[m_min, m_max]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

KINDS = ("logarithm", "power", "linear", "static")

# power/linear defaults are anchored so all dynamic policies agree here
ANCHOR_N = 1e5


class SizingConfigError(ValueError):
    pass


def _log_raw(a, b, n):
    return a + b * math.log10(n)


@dataclass(frozen=True)
class SizingPolicy:
    kind: str = "logarithm"
    a: float = -6.0
    b: float = 70.0
    coefficient: float | None = None
    exponent: float = 0.5
    slope: float | None = None
    m_static: int = 256
    m_min: int = 8
    m_max: int = 256

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SizingConfigError(f"sizing.kind: unknown policy {self.kind!r}")
        for name in ("a", "b", "exponent"):
            if not math.isfinite(getattr(self, name)):
                raise SizingConfigError(f"sizing.{name}: must be finite")
        if not (1 <= self.m_min <= self.m_max):
            raise SizingConfigError("sizing.m_min/m_max: need 1 <= m_min <= m_max")
        if self.m_static < 1:
            raise SizingConfigError("sizing.m_static: must be >= 1")

        for name in ("power_coefficient", "linear_slope"):
            if not math.isfinite(getattr(self, name)):
                raise SizingConfigError(f"sizing.{name.split('_')[1]}: must be finite")

    @property
    def power_coefficient(self):
        if self.coefficient is not None:
            return self.coefficient
        return _log_raw(self.a, self.b, ANCHOR_N) / ANCHOR_N ** self.exponent

    @property
    def linear_slope(self):
        if self.slope is not None:
            return self.slope
        return _log_raw(self.a, self.b, ANCHOR_N) / ANCHOR_N

    @classmethod
    def static(cls, m, **kw):
        kw.setdefault("m_max", max(m, 256))
        return cls(kind="static", m_static=m, **kw)

    @classmethod
    def from_gain(cls, k, g, **kw):
        """Linear policy ``M = (K / G) * N`` for a target receptive field ``G``."""
        return cls(kind="linear", slope=k / g, **kw)

    def raw(self, n):
        """Unrounded, unclamped policy value."""
        if self.kind == "logarithm":
            return _log_raw(self.a, self.b, n)
        if self.kind == "power":
            return self.power_coefficient * n ** self.exponent
        if self.kind == "linear":
            return self.linear_slope * n
        return float(self.m_static)

    def label(self):
        if self.kind == "static":
            return f"static({self.m_static})"
        return self.kind


def skeleton_size(policy: SizingPolicy, n: int) -> int:
    if n < 1:
        raise ValueError(f"point count must be >= 1, got {n}")
    m = int(round(policy.raw(n)))
    return min(max(m, policy.m_min), policy.m_max)
