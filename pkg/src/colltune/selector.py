"""Model-driven algorithm selection, decision tables and oracle accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_size
from .model import BaselineKind, baseline_bcast_time, predict
from .simulator import SimulatedOracle
from .types import (
    AlgorithmId,
    CollectiveOp,
    InvalidArgument,
    MissingParameters,
    PlatformProfile,
)

TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SelectionQuery:
    op: CollectiveOp
    P: int
    m: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "op", CollectiveOp(self.op))
        object.__setattr__(self, "P", check_count(self.P, "P", minimum=2))
        object.__setattr__(self, "m", check_size(self.m, "m", strict=True))


@dataclass(frozen=True)
class SelectionResult:
    chosen: AlgorithmId
    predictions: dict[AlgorithmId, float]
    tie: bool
    diagnostics: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "chosen": self.chosen.value,
            "tie": self.tie,
            "predictions": {a.value: t for a, t in self.predictions.items()},
            "diagnostics": list(self.diagnostics),
        }


def _candidates(op: CollectiveOp, candidates: Iterable[AlgorithmId] | None) -> tuple[AlgorithmId, ...]:
    if candidates is None:
        return AlgorithmId.for_op(op)
    cands = tuple(sorted({AlgorithmId(a) for a in candidates}, key=lambda a: a.rank))
    if not cands:
        raise InvalidArgument("empty candidate set")
    wrong = [a.value for a in cands if a.op is not op]
    if wrong:
        raise InvalidArgument(f"candidates {wrong} do not implement {op.value}")
    return cands


def argmin_with_ties(times: dict[AlgorithmId, float]) -> tuple[AlgorithmId, bool]:
    best = min(times.values())
    near = [a for a, t in times.items() if t - best <= TIE_TOLERANCE * abs(best)]
    return min(near, key=lambda a: a.rank), len(near) > 1


def select(
    profile: PlatformProfile,
    query: SelectionQuery,
    candidates: Iterable[AlgorithmId] | None = None,
) -> SelectionResult:
    """Pick the candidate with the smallest predicted time.

    Missing parameters raise :class:`MissingParameters`. A candidate whose
    model rejects the query shape is dropped and noted in ``diagnostics``.
    """
    cands = _candidates(query.op, candidates)
    missing = [a.value for a in cands if a not in profile.per_algorithm]
    if missing:
        raise MissingParameters(f"profile {profile.name!r} lacks parameters for {', '.join(missing)}")
    times: dict[AlgorithmId, float] = {}
    notes: list[str] = []
    for alg in cands:
        try:
            times[alg] = predict(profile, alg, query.P, query.m).seconds
        except InvalidArgument as exc:
            notes.append(f"{alg.value} excluded: {exc}")
    if not times:
        raise InvalidArgument(f"no candidate can run {query}: {'; '.join(notes)}")
    chosen, tie = argmin_with_ties(times)
    return SelectionResult(chosen, times, tie, tuple(notes))


@dataclass(frozen=True)
class DecisionTable:
    op: CollectiveOp
    P_values: tuple[int, ...]
    m_values: tuple[float, ...]
    cells: tuple[tuple[AlgorithmId | None, ...], ...]
    diagnostics: tuple[str, ...] = ()

    def lookup(self, P: int, m: float) -> AlgorithmId | None:
        return self.cells[self.P_values.index(P)][self.m_values.index(m)]

    def to_dict(self) -> dict:
        return {
            "op": self.op.value,
            "P_values": list(self.P_values),
            "m_values": list(self.m_values),
            "cells": [[c.value if c else None for c in row] for row in self.cells],
            "diagnostics": list(self.diagnostics),
        }


def _grid(P_values: Iterable[int], m_values: Iterable[float]) -> tuple[tuple[int, ...], tuple[float, ...]]:
    Ps = tuple(sorted({check_count(p, "P", minimum=2) for p in P_values}))
    ms = tuple(sorted({check_size(m, "m", strict=True) for m in m_values}))
    if not Ps or not ms:
        raise InvalidArgument("decision grids must be non-empty")
    return Ps, ms


def build_decision_table(
    profile: PlatformProfile,
    op: CollectiveOp,
    P_values: Iterable[int],
    m_values: Iterable[float],
    candidates: Iterable[AlgorithmId] | None = None,
) -> DecisionTable:
    op = CollectiveOp(op)
    Ps, ms = _grid(P_values, m_values)
    cands = _candidates(op, candidates)
    rows, notes = [], []
    for P in Ps:
        row = []
        for m in ms:
            try:
                res = select(profile, SelectionQuery(op, P, m), cands)
            except InvalidArgument as exc:
                notes.append(f"P={P} m={m:g}: {exc}")
                row.append(None)
                continue
            notes.extend(f"P={P} m={m:g}: {d}" for d in res.diagnostics)
            row.append(res.chosen)
        rows.append(tuple(row))
    return DecisionTable(op, Ps, ms, tuple(rows), tuple(notes))


@dataclass(frozen=True)
class AccuracyReport:
    grid_size: int
    matches: int
    worst_regret: float
    mismatches: tuple[tuple[int, float, AlgorithmId, AlgorithmId], ...] = ()

    @property
    def accuracy(self) -> float:
        return self.matches / self.grid_size if self.grid_size else 1.0

    def to_dict(self) -> dict:
        return {
            "grid_size": self.grid_size,
            "matches": self.matches,
            "accuracy": self.accuracy,
            "worst_regret": self.worst_regret,
            "mismatches": [
                {"P": P, "m": m, "model": a.value, "oracle": b.value} for P, m, a, b in self.mismatches
            ],
        }


def evaluate_accuracy(
    profile: PlatformProfile,
    op: CollectiveOp,
    P_values: Iterable[int],
    m_values: Iterable[float],
    oracle: SimulatedOracle,
    candidates: Iterable[AlgorithmId] | None = None,
) -> AccuracyReport:
    """Compare model choices against the oracle's noise-free argmin on a grid."""
    op = CollectiveOp(op)
    Ps, ms = _grid(P_values, m_values)
    cands = _candidates(op, candidates)
    matches, regret, misses = 0, 0.0, []
    for P in Ps:
        for m in ms:
            chosen = select(profile, SelectionQuery(op, P, m), cands).chosen
            truth = {}
            for a in cands:
                try:
                    truth[a] = oracle.time(a, P, m)
                except InvalidArgument:
                    continue
            best, _ = argmin_with_ties(truth)
            if chosen is best:
                matches += 1
            else:
                misses.append((P, m, chosen, best))
            if chosen in truth:
                regret = max(regret, truth[chosen] / truth[best] - 1.0)
            else:
                regret = math.inf
    return AccuracyReport(len(Ps) * len(ms), matches, regret, tuple(misses))


@dataclass(frozen=True)
class OrderingRow:
    """Times as (binary, binomial) pairs."""

    m: float
    baseline: tuple[float, float]
    proposed: tuple[float, float]

    @property
    def baseline_faster(self) -> AlgorithmId:
        return AlgorithmId.BcastBinary if self.baseline[0] < self.baseline[1] else AlgorithmId.BcastBinomial

    @property
    def proposed_faster(self) -> AlgorithmId:
        return AlgorithmId.BcastBinary if self.proposed[0] < self.proposed[1] else AlgorithmId.BcastBinomial

    @property
    def disagree(self) -> bool:
        return self.baseline_faster is not self.proposed_faster


@dataclass(frozen=True)
class OrderingReport:
    P: int
    rows: tuple[OrderingRow, ...]

    def to_dict(self) -> dict:
        return {
            "P": self.P,
            "rows": [
                {
                    "m": r.m,
                    "baseline": {"BcastBinary": r.baseline[0], "BcastBinomial": r.baseline[1]},
                    "proposed": {"BcastBinary": r.proposed[0], "BcastBinomial": r.proposed[1]},
                    "baseline_faster": r.baseline_faster.value,
                    "proposed_faster": r.proposed_faster.value,
                    "disagree": r.disagree,
                }
                for r in self.rows
            ],
        }


def compare_baseline(profile: PlatformProfile, P: int, m_values: Sequence[float]) -> OrderingReport:
    """Binary versus binomial broadcast under the unsegmented baselines and the full models.

    Each algorithm uses its own parameters in both families, so the two
    orderings differ only through the model structure.
    """
    P = check_count(P, "P", minimum=2)
    pb = profile.params(AlgorithmId.BcastBinary)
    pn = profile.params(AlgorithmId.BcastBinomial)
    rows = []
    for m in m_values:
        m = check_size(m, "m", strict=True)
        baseline = (
            baseline_bcast_time(BaselineKind.BinaryBaseline, pb, P, m).seconds,
            baseline_bcast_time(BaselineKind.BinomialBaseline, pn, P, m).seconds,
        )
        proposed = (
            predict(profile, AlgorithmId.BcastBinary, P, m).seconds,
            predict(profile, AlgorithmId.BcastBinomial, P, m).seconds,
        )
        rows.append(OrderingRow(m, baseline, proposed))
    return OrderingReport(P, tuple(rows))


class AlgorithmSelector(ClassifierMixin, BaseEstimator):
    """Classifier-shaped wrapper: ``predict([[P, m], ...])`` returns algorithm names.

    ``fit`` only checks that the profile covers every candidate; nothing is
    learned from ``X``.
    """

    def __init__(self, profile: PlatformProfile | None = None, op: str = "Broadcast", candidates=None):
        self.profile = profile
        self.op = op
        self.candidates = candidates

    def fit(self, X=None, y=None):
        if self.profile is None:
            raise InvalidArgument("AlgorithmSelector needs a profile")
        op = CollectiveOp(self.op)
        cands = _candidates(op, self.candidates)
        missing = [a.value for a in cands if a not in self.profile.per_algorithm]
        if missing:
            raise MissingParameters(f"profile lacks parameters for {', '.join(missing)}")
        self.candidates_ = cands
        self.classes_ = np.array([a.value for a in cands])
        return self

    def _queries(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise InvalidArgument("X must have shape (n, 2) with columns P, m")
        return [SelectionQuery(CollectiveOp(self.op), int(P), m) for P, m in X]

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "candidates_")
        return np.array([select(self.profile, q, self.candidates_).chosen.value for q in self._queries(X)])

    def predict_times(self, X) -> np.ndarray:
        """Predicted seconds per row and candidate; NaN where a candidate is excluded."""
        check_is_fitted(self, "candidates_")
        out = []
        for q in self._queries(X):
            preds = select(self.profile, q, self.candidates_).predictions
            out.append([preds.get(a, np.nan) for a in self.candidates_])
        return np.array(out)
