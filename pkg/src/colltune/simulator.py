"""Discrete-event simulator for collective schedules.

A schedule is a DAG of transfer tasks. A task starts once its dependencies
have finished and, when it occupies its agent exclusively, once the agent's
previous exclusive task has finished. A task sending to ``c`` receivers at
once costs ``gamma(c + 1) * (alpha + weight * unit * beta)`` where ``unit`` is
the segment size ``m / n_s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Sequence

import numpy as np

from ._validation import check_count, check_size
from .estimation import ExperimentRecord, GammaRecord, PlanPoint
from .model import even_segments, rendezvous, segments_for
from .topology import TREE_FOR_ALGORITHM, Tree, build_tree
from .types import (
    AlgorithmId,
    CollectiveOp,
    GammaTable,
    HockneyParams,
    InvalidArgument,
    ModelConfig,
    PlatformProfile,
    UnsupportedShape,
)


@dataclass(frozen=True)
class Task:
    sender: int
    receivers: tuple[int, ...]
    weight: float
    agent: int
    deps: tuple[int, ...] = ()
    exclusive: bool = True
    control: bool = False
    # extra dependencies that only apply under the rendezvous protocol
    sync_deps: tuple[int, ...] = ()


@dataclass(frozen=True)
class Schedule:
    algorithm: AlgorithmId | None
    P: int
    n_s: int
    tasks: tuple[Task, ...]
    tree: Tree | None = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.tasks)
        graph = {}
        for i, t in enumerate(self.tasks):
            for d in t.deps + t.sync_deps:
                if not 0 <= d < n:
                    raise InvalidArgument(f"task {i} depends on unknown task {d}")
            graph[i] = set(t.deps) | set(t.sync_deps)
        try:
            tuple(TopologicalSorter(graph).static_order())
        except CycleError as exc:
            raise InvalidArgument(f"schedule has a dependency cycle: {exc.args[1]}") from None


@dataclass(frozen=True)
class SimResult:
    makespan: float
    finish: tuple[float, ...]
    completion: tuple[float, ...]
    rounds: int


def simulate(
    schedule: Schedule,
    params: HockneyParams,
    gamma: GammaTable,
    m: float,
    *,
    eager_limit: float = ModelConfig().eager_limit,
) -> SimResult:
    """Run ``schedule`` for an ``m``-byte message and return its timing."""
    m = check_size(m, "m")
    unit = m / schedule.n_s
    sync = rendezvous(m, eager_limit)
    tasks = schedule.tasks
    # program order on each agent becomes an implicit dependency
    prev_on_agent: dict[int, int] = {}
    graph: dict[int, set[int]] = {}
    for i, t in enumerate(tasks):
        deps = set(t.deps)
        if sync:
            deps.update(t.sync_deps)
        if t.exclusive:
            if t.agent in prev_on_agent:
                deps.add(prev_on_agent[t.agent])
            prev_on_agent[t.agent] = i
        graph[i] = deps
    finish = [0.0] * len(tasks)
    completion = [0.0] * schedule.P
    for i in TopologicalSorter(graph).static_order():
        t = tasks[i]
        start = max((finish[d] for d in graph[i]), default=0.0)
        if t.control:
            cost = 0.0
        else:
            cost = gamma(len(t.receivers) + 1) * (params.alpha + t.weight * unit * params.beta)
        finish[i] = start + cost
        for r in (t.sender, *t.receivers):
            completion[r] = max(completion[r], finish[i])
    rounds = sum(1 for t in tasks if not t.control)
    return SimResult(max(finish, default=0.0), tuple(finish), tuple(completion), rounds)


# -- broadcast schedules ------------------------------------------------------


def _tree_bcast(tree: Tree, n_s: int) -> list[Task]:
    tasks: list[Task] = []
    delivered: dict[tuple[int, int], int] = {}
    order = [tree.root]
    for r in order:
        order.extend(tree.children[r])
    for r in order:
        kids = tree.children[r]
        if not kids:
            continue
        for s in range(n_s):
            deps = () if r == tree.root else (delivered[r, s],)
            tasks.append(Task(r, kids, 1.0, r, deps))
            for c in kids:
                delivered[c, s] = len(tasks) - 1
    return tasks


def _linear_bcast(P: int) -> list[Task]:
    return [Task(0, (c,), 1.0, 0) for c in range(1, P)]


def _split_binary_bcast(tree: Tree, n_s: int) -> list[Task]:
    P = tree.size
    half = n_s // 2
    tasks: list[Task] = []
    delivered: dict[tuple[int, int], int] = {}
    last_task: dict[int, int] = {}

    def add(task: Task) -> int:
        tasks.append(task)
        idx = len(tasks) - 1
        last_task[task.agent] = idx
        return idx

    for j in range(half):
        for c in tree.children[0]:
            delivered[c, j] = add(Task(0, (c,), 1.0, 0))
    order = list(tree.children[0])
    for r in order:
        order.extend(tree.children[r])
    for r in order:
        for j in range(half):
            for c in tree.children[r]:
                delivered[c, j] = add(Task(r, (c,), 1.0, r, (delivered[r, j],)))
    final = {r: delivered[r, half - 1] for r in range(1, P)}
    own_last = dict(last_task)
    for left in range(1, P - 1, 2):
        right = left + 1
        base = (final[left], final[right])
        for a, b in ((left, right), (right, left)):
            deps = base + ((own_last[b],) if b in own_last else ())
            add(Task(a, (b,), float(half), a, deps))
    if P % 2 == 0:
        # the last odd rank has no partner; the root supplies the other half
        add(Task(0, (P - 1,), float(half), 0, (final[P - 1],)))
    return tasks


@lru_cache(maxsize=512)
def build_bcast_schedule(alg: AlgorithmId, P: int, n_s: int, K: int = 4) -> Schedule:
    alg = AlgorithmId(alg)
    if alg.op is not CollectiveOp.Broadcast:
        raise InvalidArgument(f"{alg.value} is not a broadcast")
    P = check_count(P, "P")
    n_s = check_count(n_s, "n_s")
    warnings: tuple[str, ...] = ()
    if alg is AlgorithmId.BcastLinear:
        n_s = 1
    if alg is AlgorithmId.BcastSplitBinary:
        if P < 3:
            raise UnsupportedShape(f"split-binary broadcast needs P >= 3, got {P}")
        n_s, rounded = even_segments(n_s)
        if rounded:
            warnings = (f"odd segment count rounded up to {n_s}",)
    tree = build_tree(TREE_FOR_ALGORITHM[alg], P, K if alg is AlgorithmId.BcastKChain else None)
    if P == 1:
        tasks: list[Task] = []
    elif alg is AlgorithmId.BcastLinear:
        tasks = _linear_bcast(P)
    elif alg is AlgorithmId.BcastSplitBinary:
        tasks = _split_binary_bcast(tree, n_s)
    else:
        tasks = _tree_bcast(tree, n_s)
    return Schedule(alg, P, n_s, tuple(tasks), tree, warnings)


# -- gather schedules ---------------------------------------------------------


def _linear_gather(P: int) -> list[Task]:
    return [Task(c, (0,), 1.0, 0) for c in range(1, P)]


def _linear_sync_gather(P: int) -> list[Task]:
    tasks: list[Task] = []
    prev: tuple[int, ...] = ()
    for c in range(1, P):
        tasks.append(Task(0, (c,), 0.0, 0, prev, control=True))
        sig = len(tasks) - 1
        tasks.append(Task(c, (0,), 0.5, c, (sig,), exclusive=False))
        first = len(tasks) - 1
        tasks.append(Task(c, (0,), 0.5, c, (sig,), exclusive=False, sync_deps=(first,)))
        prev = (first, first + 1)
    return tasks


def _subtree_sizes(tree: Tree) -> list[int]:
    size = [1] * tree.size
    order = [tree.root]
    for r in order:
        order.extend(tree.children[r])
    for r in reversed(order):
        for c in tree.children[r]:
            size[r] += size[c]
    return size


def _binomial_gather(tree: Tree) -> list[Task]:
    tasks: list[Task] = []
    size = _subtree_sizes(tree)

    def collect(v: int) -> list[int]:
        received = []
        for c in tree.children[v]:
            deps = tuple(collect(c))
            tasks.append(Task(c, (v,), float(size[c]), v, deps))
            received.append(len(tasks) - 1)
        return received

    collect(tree.root)
    return tasks


@lru_cache(maxsize=512)
def build_gather_schedule(alg: AlgorithmId, P: int) -> Schedule:
    alg = AlgorithmId(alg)
    if alg.op is not CollectiveOp.Gather:
        raise InvalidArgument(f"{alg.value} is not a gather")
    P = check_count(P, "P")
    tree = build_tree(TREE_FOR_ALGORITHM[alg], P)
    if alg is AlgorithmId.GatherLinear:
        tasks = _linear_gather(P)
    elif alg is AlgorithmId.GatherLinearSync:
        tasks = _linear_sync_gather(P)
    else:
        tasks = _binomial_gather(tree)
    return Schedule(alg, P, 1, tuple(tasks), tree)


def build_schedule(alg: AlgorithmId, P: int, m: float, config: ModelConfig = ModelConfig(), segment_bytes: float | None = None) -> Schedule:
    alg = AlgorithmId(alg)
    if alg.op is CollectiveOp.Gather:
        return build_gather_schedule(alg, P)
    m_s = config.segment_bytes if segment_bytes is None else segment_bytes
    n_s = segments_for(m, m_s) if alg.segmented else 1
    return build_bcast_schedule(alg, P, n_s, config.k_chain_fanout)


def _gamma_schedule(p: int, repetitions: int) -> Schedule:
    kids = tuple(range(1, p))
    tasks = [Task(0, kids, 1.0, 0) for _ in range(repetitions)]
    return Schedule(None, p, 1, tuple(tasks))


# -- noisy experiments --------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Multiplicative Gaussian jitter plus rare multiplicative outliers."""

    sigma: float = 0.0
    outlier_prob: float = 0.0
    outlier_factor: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma < 0 or not 0 <= self.outlier_prob <= 1 or self.outlier_factor <= 0:
            raise InvalidArgument(f"invalid noise model {self}")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))

    def apply(self, t: float, rng: np.random.Generator) -> float:
        # both draws happen for every record so streams stay aligned
        z = rng.standard_normal()
        u = rng.random()
        factor = max(1.0 + self.sigma * z, 1e-3)
        if u < self.outlier_prob:
            factor *= self.outlier_factor
        return t * factor


NOISELESS = NoiseModel()


@lru_cache(maxsize=65536)
def _makespan(
    alg: AlgorithmId,
    P: int,
    m: float,
    segment_bytes: float | None,
    params: HockneyParams,
    gamma: GammaTable,
    config: ModelConfig,
) -> float:
    sched = build_schedule(alg, P, m, config, segment_bytes)
    return simulate(sched, params, gamma, m, eager_limit=config.eager_limit).makespan


def collective_time(
    profile: PlatformProfile,
    alg: AlgorithmId,
    P: int,
    m: float,
    segment_bytes: float | None = None,
    params: HockneyParams | None = None,
) -> float:
    """Noise-free simulated time of one collective call."""
    alg = AlgorithmId(alg)
    if check_count(P, "P") == 1:
        return 0.0
    p = profile.params(alg) if params is None else params
    return _makespan(alg, P, float(m), segment_bytes, p, profile.gamma, profile.config)


def simulate_bcast_experiment(
    alg: AlgorithmId,
    P: int,
    m: float,
    profile: PlatformProfile,
    noise: NoiseModel = NOISELESS,
    *,
    segment_bytes: int | None = None,
    rng: np.random.Generator | None = None,
    run_id: str = "",
) -> ExperimentRecord:
    """Time a broadcast followed by a linear gather of one segment."""
    alg = AlgorithmId(alg)
    m_s = int(profile.config.segment_bytes if segment_bytes is None else segment_bytes)
    params = profile.params(alg)
    t = collective_time(profile, alg, P, m, m_s)
    t += collective_time(profile, AlgorithmId.GatherLinear, P, m_s, params=params)
    rng = noise.generator() if rng is None else rng
    return ExperimentRecord(CollectiveOp.Broadcast, alg, P, int(m), m_s, noise.apply(t, rng), run_id)


def simulate_gather_experiment(
    alg: AlgorithmId,
    P: int,
    m: float,
    profile: PlatformProfile,
    noise: NoiseModel = NOISELESS,
    *,
    segment_bytes: int | None = None,
    rng: np.random.Generator | None = None,
    run_id: str = "",
) -> ExperimentRecord:
    """Time a linear broadcast of one segment followed by the gather."""
    alg = AlgorithmId(alg)
    m_s = int(profile.config.segment_bytes if segment_bytes is None else segment_bytes)
    t = collective_time(profile, AlgorithmId.BcastLinear, P, m_s)
    t += collective_time(profile, alg, P, m)
    rng = noise.generator() if rng is None else rng
    return ExperimentRecord(CollectiveOp.Gather, alg, P, int(m), m_s, noise.apply(t, rng), run_id)


def simulate_gamma_experiment(
    p: int,
    repetitions: int,
    segment_bytes: int,
    params: HockneyParams,
    gamma: GammaTable,
    noise: NoiseModel = NOISELESS,
    *,
    rng: np.random.Generator | None = None,
    run_id: str = "",
) -> GammaRecord:
    """Time ``repetitions`` back-to-back non-blocking linear broadcasts of one segment."""
    p = check_count(p, "p", minimum=2)
    repetitions = check_count(repetitions, "repetitions")
    t = simulate(_gamma_schedule(p, repetitions), params, gamma, segment_bytes).makespan
    rng = noise.generator() if rng is None else rng
    return GammaRecord(p, repetitions, int(segment_bytes), noise.apply(t, rng), run_id)


def run_plan(
    plan: Iterable[PlanPoint],
    truth: PlatformProfile,
    noise: NoiseModel = NOISELESS,
    rng: np.random.Generator | None = None,
) -> list[ExperimentRecord]:
    rng = noise.generator() if rng is None else rng
    out = []
    for pt in plan:
        fn = simulate_bcast_experiment if pt.algorithm.op is CollectiveOp.Broadcast else simulate_gather_experiment
        out.append(fn(pt.algorithm, pt.P, pt.m, truth, noise, segment_bytes=pt.segment_bytes, rng=rng, run_id=f"r{pt.repeat}"))
    return out


def run_gamma_plan(
    plan: Sequence[tuple[int, int, int]],
    params: HockneyParams,
    gamma: GammaTable,
    noise: NoiseModel = NOISELESS,
    rng: np.random.Generator | None = None,
) -> list[GammaRecord]:
    rng = noise.generator() if rng is None else rng
    return [simulate_gamma_experiment(p, n, s, params, gamma, noise, rng=rng) for p, n, s in plan]


class SimulatedOracle:
    """Ground-truth timings of single collective calls on a planted profile."""

    def __init__(self, truth: PlatformProfile):
        self.truth = truth

    def time(self, alg: AlgorithmId, P: int, m: float) -> float:
        return collective_time(self.truth, alg, P, m)

    def best(self, op: CollectiveOp, P: int, m: float, candidates: Iterable[AlgorithmId] | None = None) -> AlgorithmId:
        cands = AlgorithmId.for_op(op) if candidates is None else tuple(candidates)
        times = {}
        for a in cands:
            try:
                times[a] = self.time(a, P, m)
            except UnsupportedShape:
                continue
        if not times:
            raise InvalidArgument(f"no runnable {op.value} algorithm for P={P}")
        best = min(times.values())
        tol = 1e-12 * best if math.isfinite(best) else 0.0
        return min((a for a, t in times.items() if t - best <= tol), key=lambda a: a.rank)
