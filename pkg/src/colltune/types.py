"""Domain types shared by the models, the simulator, the fitting code and the selector."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np


class CollectiveOp(str, Enum):
    Broadcast = "Broadcast"
    Gather = "Gather"


class AlgorithmId(str, Enum):
    """Collective algorithms. Declaration order is the tie-break order."""

    BcastLinear = "BcastLinear"
    BcastChain = "BcastChain"
    BcastBinary = "BcastBinary"
    BcastSplitBinary = "BcastSplitBinary"
    BcastKChain = "BcastKChain"
    BcastBinomial = "BcastBinomial"
    GatherLinear = "GatherLinear"
    GatherLinearSync = "GatherLinearSync"
    GatherBinomial = "GatherBinomial"

    @property
    def op(self) -> CollectiveOp:
        return CollectiveOp.Broadcast if self.value.startswith("Bcast") else CollectiveOp.Gather

    @property
    def rank(self) -> int:
        return _ALGORITHM_ORDER[self]

    @property
    def segmented(self) -> bool:
        return self in SEGMENTED_BCAST

    @classmethod
    def for_op(cls, op: CollectiveOp) -> tuple["AlgorithmId", ...]:
        return tuple(a for a in cls if a.op is op)


_ALGORITHM_ORDER = {alg: i for i, alg in enumerate(AlgorithmId)}

SEGMENTED_BCAST = frozenset(
    {
        AlgorithmId.BcastChain,
        AlgorithmId.BcastBinary,
        AlgorithmId.BcastSplitBinary,
        AlgorithmId.BcastKChain,
        AlgorithmId.BcastBinomial,
    }
)


class InvalidArgument(ValueError):
    """An argument violates an operation's precondition."""


class UnsupportedShape(InvalidArgument):
    """The algorithm cannot run on the requested process count."""


@dataclass(frozen=True)
class HockneyParams:
    """Point-to-point cost ``alpha + beta * m`` (seconds, seconds per byte)."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise InvalidArgument(f"non-finite Hockney parameters: {self}")
        if self.alpha < 0 or self.beta < 0:
            raise InvalidArgument(f"Hockney parameters must be non-negative: {self}")
        if self.alpha == 0 and self.beta == 0:
            raise InvalidArgument("alpha and beta cannot both be zero")

    def time(self, m: float) -> float:
        return self.alpha + m * self.beta

    def scaled(self, c: float) -> "HockneyParams":
        return HockneyParams(self.alpha * c, self.beta * c)


class Extrapolation(str, Enum):
    Clamp = "Clamp"
    LinearFit = "LinearFit"


@dataclass(frozen=True)
class GammaTable:
    """Slowdown of a non-blocking linear broadcast to ``p - 1`` children.

    ``entries`` maps process count to gamma. Lookups outside the table use the
    extrapolation policy; gaps inside the table are interpolated linearly.
    """

    entries: Mapping[int, float]
    extrapolation: Extrapolation = Extrapolation.LinearFit

    def __post_init__(self) -> None:
        clean: dict[int, float] = {}
        for p, g in sorted(dict(self.entries).items()):
            p, g = int(p), float(g)
            if p < 2:
                raise InvalidArgument(f"gamma entries need p >= 2, got p={p}")
            if not math.isfinite(g) or g < 1.0:
                raise InvalidArgument(f"gamma({p}) = {g} is below 1")
            clean[p] = g
        if clean.get(2) != 1.0:
            raise InvalidArgument("gamma(2) must be present and exactly 1")
        object.__setattr__(self, "entries", MappingProxyType(clean))
        object.__setattr__(self, "extrapolation", Extrapolation(self.extrapolation))
        object.__setattr__(self, "_line", _least_squares_line(clean.items()) if len(clean) >= 2 else None)

    @classmethod
    def ones(cls, max_p: int = 2) -> "GammaTable":
        return cls({p: 1.0 for p in range(2, max(2, max_p) + 1)}, Extrapolation.Clamp)

    @property
    def max_p(self) -> int:
        return max(self.entries)

    def __call__(self, p: int) -> float:
        p = int(p)
        if p < 2:
            raise InvalidArgument(f"gamma is defined for p >= 2, got {p}")
        entries = self.entries
        if p in entries:
            return entries[p]
        keys = list(entries)
        if p < keys[-1]:
            lo = max(k for k in keys if k < p)
            hi = min(k for k in keys if k > p)
            w = (p - lo) / (hi - lo)
            return entries[lo] + w * (entries[hi] - entries[lo])
        if self.extrapolation is Extrapolation.Clamp or self._line is None:
            return entries[keys[-1]]
        slope, intercept = self._line
        return max(1.0, slope * p + intercept)

    def with_policy(self, policy: Extrapolation | str) -> "GammaTable":
        return GammaTable(dict(self.entries), Extrapolation(policy))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GammaTable):
            return NotImplemented
        return dict(self.entries) == dict(other.entries) and self.extrapolation is other.extrapolation

    def __hash__(self) -> int:
        return hash((tuple(self.entries.items()), self.extrapolation))


def _least_squares_line(points: Iterable[tuple[int, float]]) -> tuple[float, float]:
    pts = np.array(list(points), dtype=float)
    slope, intercept = np.polyfit(pts[:, 0], pts[:, 1], 1)
    return float(slope), float(intercept)


@dataclass(frozen=True)
class ModelConfig:
    segment_bytes: int = 8192
    eager_limit: int = 32768
    k_chain_fanout: int = 4

    def __post_init__(self) -> None:
        if self.segment_bytes <= 0 or self.eager_limit <= 0:
            raise InvalidArgument(f"segment and eager sizes must be positive: {self}")
        if self.k_chain_fanout < 2:
            raise InvalidArgument(f"k-chain fanout must be >= 2, got {self.k_chain_fanout}")


@dataclass(frozen=True)
class PlatformProfile:
    """Fitted model of a cluster: per-algorithm Hockney parameters plus gamma."""

    per_algorithm: Mapping[AlgorithmId, HockneyParams]
    gamma: GammaTable
    config: ModelConfig = field(default_factory=ModelConfig)
    name: str = "unnamed"

    def __post_init__(self) -> None:
        params = {AlgorithmId(k): v for k, v in dict(self.per_algorithm).items()}
        object.__setattr__(self, "per_algorithm", MappingProxyType(params))

    def params(self, alg: AlgorithmId) -> HockneyParams:
        try:
            return self.per_algorithm[alg]
        except KeyError:
            raise MissingParameters(f"profile {self.name!r} has no parameters for {alg.value}") from None

    @property
    def complete(self) -> bool:
        return all(a in self.per_algorithm for a in AlgorithmId)

    def replace(self, **changes) -> "PlatformProfile":
        kw = dict(per_algorithm=dict(self.per_algorithm), gamma=self.gamma, config=self.config, name=self.name)
        kw.update(changes)
        return PlatformProfile(**kw)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PlatformProfile):
            return NotImplemented
        return (
            dict(self.per_algorithm) == dict(other.per_algorithm)
            and self.gamma == other.gamma
            and self.config == other.config
            and self.name == other.name
        )

    __hash__ = None  # type: ignore[assignment]


class MissingParameters(KeyError):
    """A profile lacks Hockney parameters for a requested algorithm."""


@dataclass(frozen=True)
class PredictedTime:
    seconds: float
    breakdown: tuple[tuple[str, float], ...] | None = None
    warnings: tuple[str, ...] = ()

    def __float__(self) -> float:
        return self.seconds
