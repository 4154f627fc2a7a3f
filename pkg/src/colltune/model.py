"""Closed-form cost models of the broadcast and gather algorithms.

Every model is linear in the Hockney parameters once gamma is known: a
segmented broadcast costs ``C * (alpha + (m / n_s) * beta)`` where the round
coefficient ``C`` depends only on the process count, the segment count and
gamma. The coefficient helpers are public so the fitting code and the tests
can reason about them directly.

The forms are exact for the canonical trees built in :mod:`colltune.topology`
under the round semantics of :mod:`colltune.simulator`. For the regimes the
textbook forms assume (power-of-two binomial trees, complete binary trees,
chains of equal length) they reduce to those forms.
"""

from __future__ import annotations

import math
from enum import Enum

from ._validation import ceil_log2, check_count, check_size, floor_log2
from .types import (
    AlgorithmId,
    GammaTable,
    HockneyParams,
    InvalidArgument,
    PlatformProfile,
    PredictedTime,
    UnsupportedShape,
)


def p2p_time(params: HockneyParams, m: float) -> float:
    return params.alpha + check_size(m, "m") * params.beta


def segments_for(m: float, m_s: float) -> int:
    """Number of equal segments used to pipeline a message of ``m`` bytes."""
    m = check_size(m, "m", strict=True)
    m_s = check_size(m_s, "m_s", strict=True)
    return max(1, math.ceil(m / m_s))


def nonblock_linear_bcast_time(params: HockneyParams, gamma: GammaTable, p: int, m: float) -> float:
    p = check_count(p, "p", minimum=2)
    return gamma(p) * p2p_time(params, m)


def _segment_time(params: HockneyParams, m: float, n_s: int) -> float:
    return params.alpha + (check_size(m, "m") / n_s) * params.beta


def _single(label: str, seconds: float, warnings: tuple[str, ...] = ()) -> PredictedTime:
    return PredictedTime(seconds, ((label, seconds),), warnings)


# -- round coefficients -------------------------------------------------------


def binomial_coefficient(gamma: GammaTable, P: int, n_s: int) -> float:
    """Round coefficient of the segmented binomial-tree broadcast.

    The root forwards each of the ``n_s`` segments to its ``ceil(log2 P)``
    children. The last segment then descends the path 0, 1, 3, 7, ...; node
    ``2**i - 1`` on that path has ``floor(log2(P - 2**i)) - i + 1`` children.
    """
    P = check_count(P, "P", minimum=2)
    n_s = check_count(n_s, "n_s")
    coeff = n_s * gamma(ceil_log2(P) + 1)
    for i in range(1, floor_log2(P)):
        coeff += gamma(floor_log2(P - 2**i) - i + 2)
    return coeff


def binary_coefficient(gamma: GammaTable, P: int, n_s: int) -> float:
    P = check_count(P, "P", minimum=2)
    n_s = check_count(n_s, "n_s")
    h = floor_log2(P)
    if h == 1:
        # root alone: one child when P == 2, two when P == 3
        return n_s * gamma(P)
    # the deepest level hangs off a two-child parent only once level h is
    # at least half full
    last = gamma(3) if P >= 3 * 2 ** (h - 1) else gamma(2)
    return (n_s + h - 2) * gamma(3) + last


def kchain_coefficient(gamma: GammaTable, P: int, n_s: int, K: int) -> float:
    P = check_count(P, "P", minimum=2)
    n_s = check_count(n_s, "n_s")
    K = check_count(K, "K", minimum=2)
    longest_chain = -(-(P - 1) // K)
    return longest_chain - 1 + gamma(min(K, P - 1) + 1) * n_s


def split_binary_depth(P: int) -> int:
    """Weighted depth of the split-binary forwarding phase.

    Blocking sends make a parent reach its second child one round after the
    first, so a hop to a second child weighs 2 and a hop to a first child 1.
    Returns the largest weighted root-to-node distance in the balanced binary
    tree of ``P`` ranks; ``2 * floor(log2 P)`` when that tree is complete.
    """
    P = check_count(P, "P", minimum=3)
    h = floor_log2(P)
    return max(2 * h - 2, h + floor_log2(P - 2**h + 1))


def even_segments(n_s: int) -> tuple[int, bool]:
    n_s = check_count(n_s, "n_s")
    return (n_s + 1, True) if n_s % 2 else (n_s, False)


# -- broadcast ----------------------------------------------------------------


def bcast_linear_time(params: HockneyParams, P: int, m: float) -> PredictedTime:
    P = check_count(P, "P")
    return _single("blocking sends", (P - 1) * p2p_time(params, m))


def bcast_chain_time(params: HockneyParams, P: int, m: float, n_s: int) -> PredictedTime:
    P = check_count(P, "P", minimum=2)
    n_s = check_count(n_s, "n_s")
    return _single("pipeline", (P + n_s - 2) * _segment_time(params, m, n_s))


def bcast_binomial_time(
    params: HockneyParams, gamma: GammaTable, P: int, m: float, n_s: int
) -> PredictedTime:
    P = check_count(P, "P", minimum=2)
    n_s = check_count(n_s, "n_s")
    seg = _segment_time(params, m, n_s)
    root = n_s * gamma(ceil_log2(P) + 1) * seg
    rest = binomial_coefficient(gamma, P, n_s) * seg - root
    return PredictedTime(root + rest, (("root rounds", root), ("descent", rest)))


def bcast_binary_time(
    params: HockneyParams, gamma: GammaTable, P: int, m: float, n_s: int
) -> PredictedTime:
    seg = _segment_time(params, m, check_count(n_s, "n_s"))
    return _single("pipeline", binary_coefficient(gamma, P, n_s) * seg)


def bcast_kchain_time(
    params: HockneyParams, gamma: GammaTable, P: int, m: float, n_s: int, K: int
) -> PredictedTime:
    seg = _segment_time(params, m, check_count(n_s, "n_s"))
    return _single("pipeline", kchain_coefficient(gamma, P, n_s, K) * seg)


def bcast_split_binary_time(params: HockneyParams, P: int, m: float, n_s: int) -> PredictedTime:
    """Split-binary broadcast: two half-trees fed alternately, then a pairwise exchange.

    An odd ``n_s`` is rounded up to the next even count and reported in
    ``warnings``.
    """
    P = check_count(P, "P")
    if P < 3:
        raise UnsupportedShape(f"split-binary broadcast needs P >= 3, got {P}")
    n_s, rounded = even_segments(n_s)
    m = check_size(m, "m")
    forward = (n_s - 2 + split_binary_depth(P)) * _segment_time(params, m, n_s)
    exchange = p2p_time(params, m / 2)
    warnings = (f"odd segment count rounded up to {n_s}",) if rounded else ()
    return PredictedTime(forward + exchange, (("forwarding", forward), ("exchange", exchange)), warnings)


# -- gather -------------------------------------------------------------------


def gather_linear_time(params: HockneyParams, P: int, m: float) -> PredictedTime:
    P = check_count(P, "P")
    return _single("blocking receives", (P - 1) * p2p_time(params, m))


def rendezvous(m: float, m_eager: float) -> bool:
    """Whether the half-messages of the synchronised linear gather exceed the eager limit."""
    return m / 2 > m_eager


def gather_linear_sync_time(params: HockneyParams, P: int, m: float, m_eager: float) -> PredictedTime:
    P = check_count(P, "P")
    m = check_size(m, "m")
    m_eager = check_size(m_eager, "m_eager", strict=True)
    if P == 1:
        return _single("no transfer", 0.0)
    if m < 2:
        raise InvalidArgument(f"synchronised gather splits the message in two halves; m={m} < 2")
    if rendezvous(m, m_eager):
        return _single("rendezvous halves", (P - 1) * (2 * params.alpha + m * params.beta))
    return _single("eager halves", (P - 1) * p2p_time(params, m / 2))


def gather_binomial_time(params: HockneyParams, P: int, m: float) -> PredictedTime:
    P = check_count(P, "P")
    m = check_size(m, "m")
    return _single("root receives", ceil_log2(P) * params.alpha + (P - 1) * m * params.beta)


# -- baselines ----------------------------------------------------------------


class BaselineKind(str, Enum):
    BinomialBaseline = "BinomialBaseline"
    BinaryBaseline = "BinaryBaseline"


def baseline_bcast_time(kind: BaselineKind | str, params: HockneyParams, P: int, m: float) -> PredictedTime:
    """Unsegmented textbook estimates that ignore how the trees are driven."""
    kind = BaselineKind(kind)
    P = check_count(P, "P", minimum=2)
    if kind is BaselineKind.BinomialBaseline:
        rounds = ceil_log2(P)
    else:
        rounds = 2 * (ceil_log2(P + 1) - 1)
    return _single("rounds", rounds * p2p_time(params, m))


# -- dispatch -----------------------------------------------------------------


def predict_with(
    params: HockneyParams,
    gamma: GammaTable,
    alg: AlgorithmId,
    P: int,
    m: float,
    *,
    segment_bytes: float,
    eager_limit: float,
    k_chain_fanout: int,
) -> PredictedTime:
    """Evaluate ``alg`` with explicit parameters; ``n_s`` derives from ``segment_bytes``."""
    alg = AlgorithmId(alg)
    P = check_count(P, "P")
    if P == 1:
        return _single("no transfer", 0.0)
    if alg is AlgorithmId.BcastLinear:
        return bcast_linear_time(params, P, m)
    if alg is AlgorithmId.GatherLinear:
        return gather_linear_time(params, P, m)
    if alg is AlgorithmId.GatherLinearSync:
        return gather_linear_sync_time(params, P, m, eager_limit)
    if alg is AlgorithmId.GatherBinomial:
        return gather_binomial_time(params, P, m)
    n_s = segments_for(m, segment_bytes)
    if alg is AlgorithmId.BcastChain:
        return bcast_chain_time(params, P, m, n_s)
    if alg is AlgorithmId.BcastBinary:
        return bcast_binary_time(params, gamma, P, m, n_s)
    if alg is AlgorithmId.BcastSplitBinary:
        return bcast_split_binary_time(params, P, m, n_s)
    if alg is AlgorithmId.BcastKChain:
        return bcast_kchain_time(params, gamma, P, m, n_s, k_chain_fanout)
    return bcast_binomial_time(params, gamma, P, m, n_s)


def predict(profile: PlatformProfile, alg: AlgorithmId, P: int, m: float) -> PredictedTime:
    cfg = profile.config
    return predict_with(
        profile.params(AlgorithmId(alg)),
        profile.gamma,
        alg,
        P,
        m,
        segment_bytes=cfg.segment_bytes,
        eager_limit=cfg.eager_limit,
        k_chain_fanout=cfg.k_chain_fanout,
    )
