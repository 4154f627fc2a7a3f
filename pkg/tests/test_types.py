import math

import pytest

from colltune.types import (
    AlgorithmId,
    CollectiveOp,
    Extrapolation,
    GammaTable,
    HockneyParams,
    InvalidArgument,
    MissingParameters,
    PlatformProfile,
)


def test_algorithm_order_and_ops():
    assert [a.rank for a in AlgorithmId] == list(range(9))
    assert AlgorithmId.for_op(CollectiveOp.Gather) == (
        AlgorithmId.GatherLinear,
        AlgorithmId.GatherLinearSync,
        AlgorithmId.GatherBinomial,
    )
    assert not AlgorithmId.BcastLinear.segmented
    assert AlgorithmId.BcastKChain.segmented


@pytest.mark.parametrize("alpha,beta", [(-1e-6, 1e-9), (1e-6, -1e-9), (0.0, 0.0), (math.nan, 1.0), (1.0, math.inf)])
def test_hockney_rejects_bad_parameters(alpha, beta):
    with pytest.raises(InvalidArgument):
        HockneyParams(alpha, beta)


def test_hockney_time_and_scale():
    p = HockneyParams(2.0, 0.5)
    assert p.time(4) == 4.0
    assert p.scaled(3).time(4) == 12.0


def test_gamma_table_lookup(gamma):
    assert gamma(2) == 1.0
    assert gamma(7) == 1.540
    with pytest.raises(InvalidArgument):
        gamma(1)


def test_gamma_requires_unit_baseline():
    with pytest.raises(InvalidArgument):
        GammaTable({2: 1.01, 3: 1.2})
    with pytest.raises(InvalidArgument):
        GammaTable({3: 1.2})
    with pytest.raises(InvalidArgument):
        GammaTable({2: 1.0, 3: 0.9})


def test_gamma_interpolates_gaps():
    g = GammaTable({2: 1.0, 4: 1.4})
    assert g(3) == pytest.approx(1.2)


def test_gamma_extrapolation_policies(gamma):
    clamp = gamma.with_policy(Extrapolation.Clamp)
    assert clamp(8) == 1.540
    # least-squares line through the six table points
    xs, ys = zip(*sorted(gamma.entries.items()))
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    slope = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sum((x - mx) ** 2 for x in xs)
    assert gamma(8) == pytest.approx(my + slope * (8 - mx), rel=1e-12)
    assert gamma(8) > gamma(7)


def test_gamma_linear_fit_never_drops_below_one():
    # a falling trend would extrapolate below one at large p
    g = GammaTable({2: 1.0, 3: 1.3, 4: 1.0, 5: 1.0})
    assert g(100) == 1.0


def test_profile_missing_parameters(gamma):
    prof = PlatformProfile({AlgorithmId.BcastLinear: HockneyParams(1e-6, 1e-9)}, gamma)
    assert not prof.complete
    with pytest.raises(MissingParameters):
        prof.params(AlgorithmId.BcastChain)


def test_profile_equality_and_replace(planted):
    again = planted.replace()
    assert again == planted
    assert planted.replace(name="other") != planted
