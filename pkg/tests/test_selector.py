import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colltune.estimation import log_spaced_sizes
from colltune.io import grisou_profile
from colltune.model import predict
from colltune.selector import (
    AlgorithmSelector,
    SelectionQuery,
    build_decision_table,
    compare_baseline,
    evaluate_accuracy,
    select,
)
from colltune.simulator import SimulatedOracle
from colltune.types import AlgorithmId, CollectiveOp, HockneyParams, InvalidArgument, MissingParameters

from conftest import planted_profile

BCAST_SIZES = log_spaced_sizes(8192, 4 << 20, 10)


def test_uniform_small_message_tie_goes_to_linear(uniform):
    res = select(uniform, SelectionQuery(CollectiveOp.Broadcast, 2, 4096))
    assert res.chosen is AlgorithmId.BcastLinear
    assert res.tie
    assert any("BcastSplitBinary" in d for d in res.diagnostics)


def test_binary_beats_binomial_at_90_ranks_on_grisou():
    res = select(
        grisou_profile(),
        SelectionQuery(CollectiveOp.Broadcast, 90, 4 << 20),
        [AlgorithmId.BcastBinary, AlgorithmId.BcastBinomial],
    )
    assert res.chosen is AlgorithmId.BcastBinary and not res.tie


def test_tiny_gather_excludes_synchronised_variant(planted):
    res = select(planted, SelectionQuery(CollectiveOp.Gather, 2, 1))
    assert AlgorithmId.GatherLinearSync not in res.predictions
    brute = {a: predict(planted, a, 2, 1).seconds for a in (AlgorithmId.GatherLinear, AlgorithmId.GatherBinomial)}
    assert res.chosen is min(brute, key=brute.get)


def test_gather_choice_is_brute_force_argmin():
    prof = grisou_profile()
    res = select(prof, SelectionQuery(CollectiveOp.Gather, 50, 65536))
    brute = {a: predict(prof, a, 50, 65536).seconds for a in AlgorithmId.for_op(CollectiveOp.Gather)}
    assert res.chosen is min(brute, key=brute.get)
    assert res.predictions == brute


def test_incomplete_profile_raises(planted):
    partial = planted.replace(per_algorithm={AlgorithmId.BcastLinear: HockneyParams(1e-5, 1e-9)})
    with pytest.raises(MissingParameters):
        select(partial, SelectionQuery(CollectiveOp.Broadcast, 8, 1000))


def test_wrong_candidates_rejected(planted):
    with pytest.raises(InvalidArgument):
        select(planted, SelectionQuery(CollectiveOp.Broadcast, 8, 1000), [AlgorithmId.GatherLinear])


def test_one_cell_table_matches_select(planted):
    t = build_decision_table(planted, CollectiveOp.Broadcast, [16], [65536])
    assert t.cells == ((select(planted, SelectionQuery(CollectiveOp.Broadcast, 16, 65536)).chosen,),)


def test_table_grid_shape():
    t = build_decision_table(grisou_profile(), CollectiveOp.Broadcast, [90, 40, 80, 50], BCAST_SIZES)
    assert t.P_values == (40, 50, 80, 90)
    assert len(t.cells) == 4 and all(len(r) == 10 for r in t.cells)
    assert t.lookup(90, BCAST_SIZES[-1]) is not None


def test_bandwidth_free_algorithm_wins_large_messages(planted):
    fast = dict(planted.per_algorithm)
    fast[AlgorithmId.BcastChain] = HockneyParams(1e-5, 0.0)
    t = build_decision_table(planted.replace(per_algorithm=fast), CollectiveOp.Broadcast, [8, 32, 64], [1 << 22, 1 << 24])
    assert all(c is AlgorithmId.BcastChain for row in t.cells for c in row)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(1e-3, 1e3))
def test_argmin_invariant_under_common_scaling(c):
    prof = planted_profile()
    scaled = prof.replace(per_algorithm={a: p.scaled(c) for a, p in prof.per_algorithm.items()})
    for op in CollectiveOp:
        a = build_decision_table(prof, op, [4, 17, 64], BCAST_SIZES[::3])
        b = build_decision_table(scaled, op, [4, 17, 64], BCAST_SIZES[::3])
        assert a.cells == b.cells


def test_select_is_pure(planted):
    q = SelectionQuery(CollectiveOp.Broadcast, 33, 300000)
    assert select(planted, q) == select(planted, q)


def test_accuracy_perfect_on_truth_profile(planted):
    rep = evaluate_accuracy(planted, CollectiveOp.Broadcast, [8, 24], BCAST_SIZES[::2], SimulatedOracle(planted))
    assert rep.accuracy == 1.0 and rep.worst_regret == 0.0


def test_accuracy_drops_when_latencies_swapped(planted):
    swapped = dict(planted.per_algorithm)
    lin, bino = swapped[AlgorithmId.GatherLinear], swapped[AlgorithmId.GatherBinomial]
    swapped[AlgorithmId.GatherLinear] = HockneyParams(bino.alpha * 50, lin.beta)
    swapped[AlgorithmId.GatherBinomial] = HockneyParams(lin.alpha, bino.beta)
    wrong = planted.replace(per_algorithm=swapped)
    rep = evaluate_accuracy(wrong, CollectiveOp.Gather, [4, 16, 64], [65536, 1 << 20], SimulatedOracle(planted))
    assert rep.accuracy < 1.0 and rep.worst_regret > 0


def test_single_candidate_accuracy_is_trivial(planted):
    rep = evaluate_accuracy(grisou_profile(), CollectiveOp.Gather, [8], [65536], SimulatedOracle(planted), [AlgorithmId.GatherBinomial])
    assert rep.accuracy == 1.0


def test_ordering_flip_at_90_ranks():
    rep = compare_baseline(grisou_profile(), 90, BCAST_SIZES)
    assert all(r.proposed_faster is AlgorithmId.BcastBinary for r in rep.rows)
    assert all(r.baseline_faster is AlgorithmId.BcastBinomial for r in rep.rows)
    assert all(r.disagree for r in rep.rows)


def test_baseline_two_ranks_prefers_binomial(uniform):
    rep = compare_baseline(uniform, 2, [1.0, 1e6])
    assert all(r.baseline_faster is AlgorithmId.BcastBinomial for r in rep.rows)


def test_one_byte_ordering_follows_round_counts(uniform):
    row = compare_baseline(uniform, 64, [1.0]).rows[0]
    # 6 binomial rounds against 2 * (7 - 1) binary rounds
    assert row.baseline[1] / row.baseline[0] == pytest.approx(6 / 12, rel=1e-3)


def test_selection_latency(planted):
    q = SelectionQuery(CollectiveOp.Broadcast, 64, 1 << 20)
    select(planted, q)
    start = time.perf_counter()
    for _ in range(200):
        select(planted, q)
    assert (time.perf_counter() - start) / 200 < 1e-3


def test_selector_estimator_interface(planted):
    sel = AlgorithmSelector(planted, "Gather").fit()
    labels = sel.predict([[8, 65536], [64, 1 << 20]])
    assert set(labels) <= set(sel.classes_)
    times = sel.predict_times([[8, 65536]])
    assert times.shape == (1, 3) and np.all(times > 0)
    assert sel.get_params()["op"] == "Gather"
