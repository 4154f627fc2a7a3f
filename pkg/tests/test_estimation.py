import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.linear_model import HuberRegressor

from colltune.estimation import (
    EquationRow,
    EstimationError,
    GammaRecord,
    HockneyRegressor,
    MissingBaseline,
    ProfileEstimator,
    design_experiments,
    design_gamma_experiments,
    estimate_gamma,
    fit_alpha_beta,
    fit_gamma_linear,
    fit_profile,
    log_spaced_sizes,
    reduce_to_equation,
)
from colltune.simulator import NoiseModel, run_gamma_plan, run_plan
from colltune.types import AlgorithmId, InvalidArgument

from conftest import GRISOU_GAMMA, PLANTED


def _gamma_records(planted, noise=NoiseModel()):
    return run_gamma_plan(design_gamma_experiments(), PLANTED[AlgorithmId.BcastLinear], planted.gamma, noise)


def test_gamma_recovered_exactly(planted):
    table = estimate_gamma(_gamma_records(planted))
    assert table(2) == 1.0
    for p, g in GRISOU_GAMMA.items():
        assert table(p) == pytest.approx(g, rel=1e-12)


def test_gamma_median_shrugs_off_one_outlier():
    recs = [GammaRecord(2, 10, 8192, t) for t in (1.0, 1.0, 30.0)] + [GammaRecord(3, 10, 8192, t) for t in (1.2, 1.2, 1.2)]
    assert estimate_gamma(recs)(3) == pytest.approx(1.2)


def test_gamma_needs_two_process_baseline():
    with pytest.raises(MissingBaseline):
        estimate_gamma([(3, 10, 1.0)])


def test_gamma_below_one_is_clamped(caplog):
    table = estimate_gamma([(2, 1, 1.0), (3, 1, 0.9)])
    assert table(3) == 1.0
    assert "clamped" in caplog.text


def test_gamma_line():
    slope, intercept = fit_gamma_linear({2: 1.0, 3: 1.5, 4: 2.0})
    assert slope == pytest.approx(0.5) and intercept == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(EstimationError):
        fit_gamma_linear([(2, 1.0), (2, 1.1)])
    with pytest.raises(EstimationError):
        fit_gamma_linear({2: 1.0})


@pytest.mark.parametrize("alg", list(AlgorithmId))
def test_equations_reproduce_noise_free_times(alg, planted):
    plan = design_experiments(alg, 40)
    prelude = PLANTED[AlgorithmId.BcastLinear]
    p = PLANTED[alg]
    for rec in run_plan(plan, planted):
        row = reduce_to_equation(rec, planted.gamma, planted.config, prelude)
        assert row.a * p.alpha + row.b * p.beta == pytest.approx(row.t, rel=1e-9)


def test_gather_reduction_needs_prelude(planted):
    rec = run_plan(design_experiments(AlgorithmId.GatherLinear, 8), planted)[0]
    with pytest.raises(InvalidArgument):
        reduce_to_equation(rec, planted.gamma, planted.config)


def _rows(alpha=1e-5, beta=1e-9, noise=None, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for m in np.geomspace(1e3, 1e7, 30):
        a = 10.0
        b = 10.0 * m
        t = a * alpha + b * beta
        if noise is not None:
            t *= 1 + noise * rng.standard_normal()
        out.append(EquationRow(a, b, t))
    return out


def test_huber_equals_ols_without_noise():
    h = fit_alpha_beta(_rows(), "huber")
    o = fit_alpha_beta(_rows(), "ols")
    assert h.alpha == pytest.approx(o.alpha, rel=1e-9)
    assert h.beta == pytest.approx(o.beta, rel=1e-9)
    assert h.alpha == pytest.approx(1e-5, rel=1e-9)


def test_fit_scales_with_times():
    base = fit_alpha_beta(_rows(noise=0.01))
    scaled = fit_alpha_beta([EquationRow(r.a, r.b, 7.5 * r.t) for r in _rows(noise=0.01)])
    assert scaled.alpha == pytest.approx(7.5 * base.alpha, rel=1e-9)
    assert scaled.beta == pytest.approx(7.5 * base.beta, rel=1e-9)


def test_huber_resists_outliers():
    rows = _rows(noise=0.005)
    rows = [EquationRow(r.a, r.b, r.t * (3.0 if i % 10 == 3 else 1.0)) for i, r in enumerate(rows)]
    h = fit_alpha_beta(rows, "huber")
    o = fit_alpha_beta(rows, "ols")
    err = lambda f: max(abs(f.alpha / 1e-5 - 1), abs(f.beta / 1e-9 - 1))
    assert err(h) < 0.05
    assert err(h) < err(o)


def test_huber_agrees_with_sklearn():
    rows = _rows(noise=0.01, seed=4)
    rows = [EquationRow(r.a, r.b, r.t * (3.0 if i % 7 == 2 else 1.0)) for i, r in enumerate(rows)]
    ours = fit_alpha_beta(rows, "huber")
    # same relative-error design, columns equilibrated for the quasi-Newton solver
    X = np.array([(r.a / r.t, r.b / r.t) for r in rows])
    norms = np.linalg.norm(X, axis=0)
    ref = HuberRegressor(epsilon=1.345, alpha=0.0, fit_intercept=False, max_iter=1000).fit(X / norms, np.ones(len(rows)))
    alpha, beta = ref.coef_ / norms
    assert ours.alpha == pytest.approx(alpha, rel=0.02)
    assert ours.beta == pytest.approx(beta, rel=0.02)


def test_duplicate_equations_are_rank_deficient():
    with pytest.raises(EstimationError, match="rank-deficient"):
        fit_alpha_beta([EquationRow(1.0, 2.0, 3.0)] * 4)


def test_single_segment_size_is_not_identifiable(planted):
    plan = design_experiments(AlgorithmId.BcastBinomial, 40, segment_sizes=[8192])
    rows = [reduce_to_equation(r, planted.gamma, planted.config) for r in run_plan(plan, planted)]
    res = fit_alpha_beta(rows, require_identifiable=False)
    assert not res.identifiable and res.condition_number > 1e8
    with pytest.raises(EstimationError):
        fit_alpha_beta(rows)


def test_negative_estimates_clamped_with_warning():
    rows = [EquationRow(1.0, m, 1e-9 * m - 1e-7) for m in (1e3, 1e4, 1e5, 1e6)]
    res = fit_alpha_beta(rows, "ols")
    assert res.alpha == 0.0 and res.warnings


def test_regressor_follows_estimator_conventions():
    reg = HockneyRegressor(method="ols", epsilon=2.0)
    assert reg.get_params()["epsilon"] == 2.0
    assert clone(reg).get_params() == reg.get_params()
    with pytest.raises(NotFittedError):
        reg.predict([[1.0, 1.0]])
    X = np.array([[1.0, 10.0], [1.0, 100.0], [1.0, 1000.0]])
    y = X @ [2.0, 0.5]
    reg.fit(X, y)
    assert reg.alpha_ == pytest.approx(2.0) and reg.beta_ == pytest.approx(0.5)
    assert reg.predict([[1.0, 4.0]]) == pytest.approx([4.0])
    assert reg.score(X, y) == pytest.approx(1.0)
    with pytest.raises(InvalidArgument):
        HockneyRegressor(method="lasso").fit(X, y)


def test_planner_shapes():
    seg = design_experiments(AlgorithmId.BcastChain, 40, repetitions=2)
    assert len(seg) == 10 * 3 * 2
    assert {p.segment_bytes for p in seg} == {4096, 8192, 16384}
    lin = design_experiments(AlgorithmId.GatherLinear)
    assert [p.m for p in lin] == [65536, 131072, 262144, 524288, 1048576]
    assert [p.m for p in design_experiments(AlgorithmId.BcastLinear)] == [2**k for k in range(13, 23)]
    with pytest.raises(InvalidArgument):
        log_spaced_sizes(10, 12, 10)
    with pytest.raises(InvalidArgument):
        design_experiments(AlgorithmId.BcastChain, 40, M=1)


def test_profile_fit_reports_missing_algorithms(planted):
    recs = run_plan(design_experiments(AlgorithmId.BcastChain), planted)
    res = fit_profile(recs, _gamma_records(planted))
    assert AlgorithmId.BcastChain in res.results
    assert AlgorithmId.GatherLinear in res.failures
    assert not res.ok


def test_profile_estimator_round_trip(planted):
    plan = [pt for a in AlgorithmId for pt in design_experiments(a)]
    est = ProfileEstimator().fit(run_plan(plan, planted), _gamma_records(planted))
    assert est.failures_ == {}
    for a, p in PLANTED.items():
        assert est.profile_.params(a).alpha == pytest.approx(p.alpha, rel=1e-6)
    pred = est.predict([("BcastChain", 40, 1 << 20)])
    assert pred[0] > 0
