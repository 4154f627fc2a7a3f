"""Two-stage parameter estimation.

Gamma comes first, from repeated non-blocking linear broadcasts of one
segment. With gamma known every timed experiment reduces to one linear
equation ``a * alpha + b * beta = t`` and each algorithm's (alpha, beta) pair
is found by ordinary or Huber regression.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, validate_data

from ._validation import check_count, check_size
from .model import bcast_linear_time, gather_linear_time, predict_with
from .types import (
    AlgorithmId,
    CollectiveOp,
    Extrapolation,
    GammaTable,
    HockneyParams,
    InvalidArgument,
    ModelConfig,
    PlatformProfile,
)

log = logging.getLogger(__name__)

BCAST_SIZE_RANGE = (8 * 1024, 4 * 1024 * 1024)
GATHER_SIZE_RANGE = (64 * 1024, 1024 * 1024)
BCAST_SIZES = 10
GATHER_SIZES = 5
SEGMENT_SIZES = (4096, 8192, 16384)
FIT_PROCESSES = 40

HUBER_EPSILON = 1.345
MAD_TO_SIGMA = 1.4826
CONDITION_THRESHOLD = 1e8


class EstimationError(ValueError):
    """The data cannot determine the requested parameters."""


class MissingBaseline(EstimationError):
    """Gamma records lack the two-process baseline."""


@dataclass(frozen=True)
class ExperimentRecord:
    collective: CollectiveOp
    algorithm: AlgorithmId
    P: int
    m: int
    segment_bytes: int
    time: float
    run_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "collective", CollectiveOp(self.collective))
        object.__setattr__(self, "algorithm", AlgorithmId(self.algorithm))
        if self.algorithm.op is not self.collective:
            raise InvalidArgument(f"{self.algorithm.value} is not a {self.collective.value} algorithm")
        check_count(self.P, "P", minimum=2)
        check_size(self.m, "m", strict=True)
        check_size(self.segment_bytes, "segment_bytes", strict=True)
        if not (math.isfinite(self.time) and self.time > 0):
            raise InvalidArgument(f"experiment time must be positive, got {self.time}")


@dataclass(frozen=True)
class GammaRecord:
    """``repetitions`` back-to-back non-blocking linear broadcasts to ``p - 1`` children."""

    p: int
    repetitions: int
    segment_bytes: int
    time: float
    run_id: str = ""

    def __post_init__(self) -> None:
        check_count(self.p, "p", minimum=2)
        check_count(self.repetitions, "repetitions")
        if not (math.isfinite(self.time) and self.time > 0):
            raise InvalidArgument(f"gamma experiment time must be positive, got {self.time}")

    @property
    def per_call(self) -> float:
        return self.time / self.repetitions


@dataclass(frozen=True)
class EquationRow:
    a: float
    b: float
    t: float

    def __post_init__(self) -> None:
        if not self.a > 0 or self.b < 0:
            raise InvalidArgument(f"equation needs a > 0 and b >= 0, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class FitResult:
    alpha: float
    beta: float
    residuals: tuple[float, ...]
    method: str
    condition_number: float
    identifiable: bool
    n_iter: int = 0
    warnings: tuple[str, ...] = ()

    @property
    def params(self) -> HockneyParams:
        return HockneyParams(self.alpha, self.beta)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "method": self.method,
            "condition_number": self.condition_number if math.isfinite(self.condition_number) else None,
            "identifiable": self.identifiable,
            "n_iter": self.n_iter,
            "max_abs_residual": max((abs(r) for r in self.residuals), default=0.0),
            "warnings": list(self.warnings),
        }


# -- gamma --------------------------------------------------------------------


def _as_gamma_record(rec) -> GammaRecord:
    if isinstance(rec, GammaRecord):
        return rec
    p, n, t = rec
    return GammaRecord(int(p), int(n), 0, float(t))


def estimate_gamma(
    records: Iterable[GammaRecord | tuple[int, int, float]],
    extrapolation: Extrapolation | str = Extrapolation.LinearFit,
) -> GammaTable:
    """Gamma as the per-call time ratio against the two-process baseline.

    Several records for one ``p`` are combined by the median per-call time,
    so a single outlier run cannot shift the baseline. Ratios below one are
    clamped to one with a logged warning.
    """
    per_call: dict[int, list[float]] = {}
    for rec in map(_as_gamma_record, records):
        per_call.setdefault(rec.p, []).append(rec.per_call)
    if 2 not in per_call:
        raise MissingBaseline("gamma estimation needs a record for p = 2")
    base = float(np.median(per_call[2]))
    table = {2: 1.0}
    for p in sorted(per_call):
        if p == 2:
            continue
        ratio = float(np.median(per_call[p])) / base
        if ratio < 1.0:
            log.warning("gamma(%d) = %.6g below 1; clamped", p, ratio)
            ratio = 1.0
        table[p] = ratio
    return GammaTable(table, Extrapolation(extrapolation))


def fit_gamma_linear(table: GammaTable | Mapping[int, float] | Iterable[tuple[int, float]]) -> tuple[float, float]:
    """Least-squares line ``gamma(p) ~ slope * p + intercept``."""
    if isinstance(table, GammaTable):
        pairs = list(table.entries.items())
    elif isinstance(table, Mapping):
        pairs = list(table.items())
    else:
        pairs = [(int(p), float(g)) for p, g in table]
    ps = [p for p, _ in pairs]
    if len(set(ps)) != len(ps):
        raise EstimationError(f"duplicate process counts in gamma data: {sorted(ps)}")
    if len(pairs) < 2:
        raise EstimationError("a linear gamma fit needs at least two process counts")
    x = np.array(ps, dtype=float)
    y = np.array([g for _, g in pairs], dtype=float)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(slope), float(intercept)


# -- reduction ----------------------------------------------------------------


def _experiment_model(
    params: HockneyParams,
    alg: AlgorithmId,
    P: int,
    m: float,
    segment_bytes: float,
    gamma: GammaTable,
    config: ModelConfig,
) -> float:
    t = predict_with(
        params,
        gamma,
        alg,
        P,
        m,
        segment_bytes=segment_bytes,
        eager_limit=config.eager_limit,
        k_chain_fanout=config.k_chain_fanout,
    ).seconds
    if alg.op is CollectiveOp.Broadcast:
        # broadcast experiments end with a linear gather of one segment
        t += gather_linear_time(params, P, segment_bytes).seconds
    return t


_UNIT_ALPHA = HockneyParams(1.0, 0.0)
_UNIT_BETA = HockneyParams(0.0, 1.0)


def reduce_to_equation(
    record: ExperimentRecord,
    gamma: GammaTable,
    config: ModelConfig,
    prelude: HockneyParams | None = None,
) -> EquationRow:
    """Turn one timed experiment into ``a * alpha + b * beta = t``.

    The models are linear in (alpha, beta) for fixed gamma, so ``a`` and ``b``
    are the experiment model evaluated at the unit parameter vectors. Gather
    experiments open with a linear broadcast of ``segment_bytes``; its
    predicted time under ``prelude`` (the fitted linear-broadcast parameters)
    is subtracted from the measured time.
    """
    alg = record.algorithm
    args = (alg, record.P, record.m, record.segment_bytes, gamma, config)
    a = _experiment_model(_UNIT_ALPHA, *args)
    b = _experiment_model(_UNIT_BETA, *args)
    t = record.time
    if alg.op is CollectiveOp.Gather:
        if prelude is None:
            raise InvalidArgument("gather experiments need the linear-broadcast parameters as prelude")
        t -= bcast_linear_time(prelude, record.P, record.segment_bytes).seconds
    return EquationRow(a, b, t)


# -- regression ---------------------------------------------------------------


def design_condition_number(X: np.ndarray) -> float:
    """Condition number of the design after scaling each column to unit norm."""
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        return math.inf
    s = np.linalg.svd(X / norms, compute_uv=False)
    return math.inf if s[-1] == 0 else float(s[0] / s[-1])


def _weighted_lstsq(X: np.ndarray, y: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    norms = np.linalg.norm(X, axis=0)
    Xs = X / norms
    if w is not None:
        sw = np.sqrt(w)
        Xs, y = Xs * sw[:, None], y * sw
    coef, *_ = np.linalg.lstsq(Xs, y, rcond=None)
    return coef / norms


class HockneyRegressor(RegressorMixin, BaseEstimator):
    """Fit ``t = a * alpha + b * beta`` without intercept.

    ``X`` holds the coefficient pairs ``(a, b)``, ``y`` the measured times.
    ``method="huber"`` runs iteratively reweighted least squares with threshold
    ``epsilon`` times the MAD-based residual scale, re-estimated each pass.
    With ``relative=True`` each equation is divided by its measured time so
    residuals are relative errors, which suits multiplicative timing noise
    across sizes spanning several decades.

    Attributes set by ``fit``: ``coef_`` (alpha, beta), ``alpha_``, ``beta_``,
    ``residuals_``, ``condition_number_``, ``identifiable_``, ``n_iter_``.
    """

    def __init__(
        self,
        method: str = "huber",
        epsilon: float = HUBER_EPSILON,
        max_iter: int = 100,
        tol: float = 1e-12,
        condition_threshold: float = CONDITION_THRESHOLD,
        require_identifiable: bool = True,
        relative: bool = True,
    ):
        self.method = method
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.tol = tol
        self.condition_threshold = condition_threshold
        self.require_identifiable = require_identifiable
        self.relative = relative

    def fit(self, X, y):
        if self.method not in ("ols", "huber"):
            raise InvalidArgument(f"method must be 'ols' or 'huber', got {self.method!r}")
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if X.shape[1] != 2:
            raise InvalidArgument(f"design must have two columns (a, b), got {X.shape[1]}")
        self.n_features_in_ = 2
        if X.shape[0] < 2:
            raise EstimationError("at least two equations are needed to fit alpha and beta")
        self.condition_number_ = design_condition_number(X)
        self.identifiable_ = bool(self.condition_number_ <= self.condition_threshold)
        if not self.identifiable_ and self.require_identifiable:
            raise EstimationError(
                f"rank-deficient design (condition number {self.condition_number_:.3g}); "
                "alpha and beta cannot be separated"
            )
        Xf, yf = X, y
        if self.relative:
            if np.any(y <= 0):
                raise EstimationError("relative fitting needs positive times")
            Xf, yf = X / y[:, None], np.ones_like(y)
        coef = _weighted_lstsq(Xf, yf)
        n_iter = 0
        if self.method == "huber":
            coef, n_iter = self._irls(Xf, yf, coef)
        self.coef_ = coef
        self.n_iter_ = n_iter
        self.residuals_ = y - X @ coef
        return self

    def _irls(self, X: np.ndarray, y: np.ndarray, coef: np.ndarray) -> tuple[np.ndarray, int]:
        norms = np.linalg.norm(X, axis=0)
        floor = 1e-15 * float(np.max(np.abs(y)))
        for it in range(1, self.max_iter + 1):
            r = y - X @ coef
            scale = MAD_TO_SIGMA * float(np.median(np.abs(r - np.median(r))))
            if scale <= floor:
                return coef, it - 1
            delta = self.epsilon * scale
            absr = np.abs(r)
            w = np.where(absr <= delta, 1.0, delta / np.maximum(absr, floor))
            new = _weighted_lstsq(X, y, w)
            step = np.linalg.norm((new - coef) * norms)
            size = np.linalg.norm(new * norms)
            coef = new
            if step <= self.tol * size:
                return coef, it
        return coef, self.max_iter

    @property
    def alpha_(self) -> float:
        check_is_fitted(self, "coef_")
        return float(self.coef_[0])

    @property
    def beta_(self) -> float:
        check_is_fitted(self, "coef_")
        return float(self.coef_[1])

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return X @ self.coef_


def fit_alpha_beta(
    rows: Sequence[EquationRow],
    method: str = "huber",
    *,
    condition_threshold: float = CONDITION_THRESHOLD,
    require_identifiable: bool = True,
    relative: bool = True,
) -> FitResult:
    rows = list(rows)
    if len(rows) < 2:
        raise EstimationError(f"need at least two equations, got {len(rows)}")
    X = np.array([(r.a, r.b) for r in rows], dtype=float)
    y = np.array([r.t for r in rows], dtype=float)
    reg = HockneyRegressor(
        method=method,
        condition_threshold=condition_threshold,
        require_identifiable=require_identifiable,
        relative=relative,
    ).fit(X, y)
    alpha, beta = reg.alpha_, reg.beta_
    warnings = []
    if alpha < 0:
        warnings.append(f"negative alpha {alpha:.3g} clamped to 0")
        alpha = 0.0
    if beta < 0:
        warnings.append(f"negative beta {beta:.3g} clamped to 0")
        beta = 0.0
    for w in warnings:
        log.warning(w)
    if alpha == 0 and beta == 0:
        raise EstimationError("both fitted parameters are non-positive")
    return FitResult(
        alpha=alpha,
        beta=beta,
        residuals=tuple(float(r) for r in reg.residuals_),
        method=method,
        condition_number=reg.condition_number_,
        identifiable=reg.identifiable_,
        n_iter=reg.n_iter_,
        warnings=tuple(warnings),
    )


# -- planning -----------------------------------------------------------------


@dataclass(frozen=True)
class PlanPoint:
    algorithm: AlgorithmId
    P: int
    m: int
    segment_bytes: int
    repeat: int = 0


def log_spaced_sizes(lo: float, hi: float, M: int) -> list[int]:
    M = check_count(M, "M", minimum=2)
    lo = check_size(lo, "m_range low", strict=True)
    hi = check_size(hi, "m_range high", strict=True)
    if hi < lo:
        raise InvalidArgument(f"empty size range [{lo}, {hi}]")
    sizes = [int(round(s)) for s in np.geomspace(lo, hi, M)]
    if len(set(sizes)) != len(sizes):
        raise InvalidArgument(f"size range [{lo}, {hi}] with M={M} yields duplicate sizes")
    return sizes


def design_experiments(
    alg: AlgorithmId,
    P: int = FIT_PROCESSES,
    m_range: tuple[float, float] | None = None,
    M: int | None = None,
    *,
    segment_sizes: Sequence[int] = SEGMENT_SIZES,
    segment_bytes: int = 8192,
    repetitions: int = 1,
) -> list[PlanPoint]:
    """Experiment plan for one algorithm at a fixed process count.

    Segmented broadcasts cross the message sizes with several segment sizes:
    with a single segment size every equation has ``b = a * m_s`` and the two
    parameters cannot be told apart.
    """
    alg = AlgorithmId(alg)
    P = check_count(P, "P", minimum=2)
    repetitions = check_count(repetitions, "repetitions")
    if m_range is None:
        m_range = BCAST_SIZE_RANGE if alg.op is CollectiveOp.Broadcast else GATHER_SIZE_RANGE
    if M is None:
        M = BCAST_SIZES if alg.op is CollectiveOp.Broadcast else GATHER_SIZES
    sizes = log_spaced_sizes(*m_range, M)
    segs = sorted({int(s) for s in segment_sizes}) if alg.segmented else [int(segment_bytes)]
    return [
        PlanPoint(alg, P, m, s, rep)
        for m in sizes
        for s in segs
        for rep in range(repetitions)
    ]


def design_gamma_experiments(
    max_p: int = 7, repetitions: int = 100, segment_bytes: int = 8192, replicates: int = 5
) -> list[tuple[int, int, int]]:
    """``(p, repetitions, segment_bytes)`` triples; each ``p`` appears ``replicates`` times."""
    max_p = check_count(max_p, "max_p", minimum=2)
    replicates = check_count(replicates, "replicates")
    return [(p, repetitions, segment_bytes) for p in range(2, max_p + 1) for _ in range(replicates)]


# -- whole profile ------------------------------------------------------------


@dataclass
class ProfileFit:
    profile: PlatformProfile
    results: dict[AlgorithmId, FitResult] = field(default_factory=dict)
    failures: dict[AlgorithmId, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def fit_profile(
    records: Iterable[ExperimentRecord],
    gamma_records: Iterable[GammaRecord | tuple[int, int, float]],
    config: ModelConfig = ModelConfig(),
    method: str = "huber",
    *,
    name: str = "fitted",
    extrapolation: Extrapolation | str = Extrapolation.LinearFit,
    algorithms: Iterable[AlgorithmId] | None = None,
) -> ProfileFit:
    """Estimate gamma, then every algorithm's (alpha, beta).

    Broadcasts are fitted before gathers because gather experiments subtract
    the fitted linear-broadcast prelude. Failures are collected per algorithm.
    """
    gamma = estimate_gamma(gamma_records, extrapolation)
    by_alg: dict[AlgorithmId, list[ExperimentRecord]] = {}
    for rec in records:
        by_alg.setdefault(rec.algorithm, []).append(rec)
    wanted = list(AlgorithmId) if algorithms is None else [AlgorithmId(a) for a in algorithms]
    fit = ProfileFit(PlatformProfile({}, gamma, config, name))
    params: dict[AlgorithmId, HockneyParams] = {}
    for alg in sorted(wanted, key=lambda a: a.rank):
        recs = by_alg.get(alg, [])
        if not recs:
            fit.failures[alg] = "no experiment records"
            continue
        prelude = params.get(AlgorithmId.BcastLinear)
        if alg.op is CollectiveOp.Gather and prelude is None:
            fit.failures[alg] = "gather fit needs fitted BcastLinear parameters"
            continue
        try:
            rows = [reduce_to_equation(r, gamma, config, prelude) for r in recs]
            result = fit_alpha_beta(rows, method)
        except (EstimationError, InvalidArgument) as exc:
            fit.failures[alg] = str(exc)
            continue
        fit.results[alg] = result
        params[alg] = result.params
        log.info("%s: alpha=%.6g beta=%.6g cond=%.3g", alg.value, result.alpha, result.beta, result.condition_number)
    fit.profile = PlatformProfile(params, gamma, config, name)
    return fit


class ProfileEstimator(BaseEstimator):
    """Estimator front end for :func:`fit_profile`.

    ``fit(records, gamma_records)`` sets ``profile_``, ``fit_results_`` and
    ``failures_``; ``predict`` maps rows of ``(algorithm, P, m)`` to seconds.
    """

    def __init__(
        self,
        method: str = "huber",
        extrapolation: str = "LinearFit",
        segment_bytes: int = 8192,
        eager_limit: int = 32768,
        k_chain_fanout: int = 4,
        name: str = "fitted",
    ):
        self.method = method
        self.extrapolation = extrapolation
        self.segment_bytes = segment_bytes
        self.eager_limit = eager_limit
        self.k_chain_fanout = k_chain_fanout
        self.name = name

    def fit(self, records, gamma_records):
        config = ModelConfig(self.segment_bytes, self.eager_limit, self.k_chain_fanout)
        result = fit_profile(
            records,
            gamma_records,
            config,
            self.method,
            name=self.name,
            extrapolation=self.extrapolation,
        )
        self.profile_ = result.profile
        self.fit_results_ = result.results
        self.failures_ = result.failures
        return self

    def predict(self, X) -> np.ndarray:
        from .model import predict

        check_is_fitted(self, "profile_")
        return np.array([predict(self.profile_, AlgorithmId(a), int(P), float(m)).seconds for a, P, m in X])
