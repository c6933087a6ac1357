import math

import numpy as np
import pytest
from pytest import approx, raises

from driftlab import estimates, exceptions, geometry, nonlinearity
from driftlab.nonlinearity import Nonlinearity
from driftlab.solver import SolutionField
from tests import KERNEL_T0, KERNEL_T1


def test_estimates_li_yau(kernel_fixture):
    sol, space = kernel_fixture.sol, kernel_fixture.space
    # the heat kernel leaves (alpha - 1) n/(2t) of slack at the pole
    # input (alpha, expected margin)
    args = [(2.0, 0.75), (1.1, 0.075)]
    for alpha, margin in args:
        report = estimates.li_yau_check(sol, space, None, alpha, global_variant=True)
        assert report.kind == estimates.LI_YAU_GLOBAL
        assert report.margin == approx(margin, rel=1e-6)
        assert report.argmin == {"r": 0.0, "t": KERNEL_T1}
        assert report.holds
        assert report.rhs_terms.R_terms == 0.0
        assert report.rhs_terms.sqrt_bracket == 0.0

    report = estimates.li_yau_check(sol, space, None, 2.0, R=2.0)
    assert report.kind == estimates.LI_YAU
    assert report.holds
    assert report.rhs_terms.R_terms > 0
    assert report.params.c1 is not None
    assert report.margin > 0.75
    assert report.verification_set["r"] == [0.0, 2.0]


def test_estimates_li_yau_errors(kernel_fixture, spaces_fixture):
    sol, space = kernel_fixture.sol, kernel_fixture.space
    # input (space, keyword arguments, expected exception)
    args = [
        (space, dict(alpha=1.0, global_variant=True), exceptions.ParameterOrder),
        (space, dict(alpha=2.0, epsilon=1.0, global_variant=True), exceptions.ConfigException),
        (space, dict(alpha=2.0), exceptions.ConfigException),
        (spaces_fixture.gaussian, dict(alpha=2.0, global_variant=True), exceptions.NeedFiniteM),
        (spaces_fixture.hyperbolic, dict(alpha=2.0, global_variant=True, k=0.0), exceptions.HypothesisUnverified),
    ]
    for model, kwargs, error in args:
        with raises(error):
            estimates.li_yau_check(sol, model, None, **kwargs)


def test_estimates_souplet_zhang(kernel_fixture):
    sol, space = kernel_fixture.sol, kernel_fixture.space
    report = estimates.souplet_zhang_check(sol, space, None, R=4.0)
    assert report.kind == estimates.SOUPLET_ZHANG
    assert report.mode == "structural"
    assert report.holds
    assert 0 < report.empirical_C < 1
    assert report.params.D == approx((4 * math.pi * KERNEL_T0) ** -1.5 * (1 + 1e-9))
    assert report.verification_set["r"] == [0.0, 2.0]
    assert set(report.rhs_terms) >= {"sqrt_k", "inv_R", "gamma_delta_phi", "G_x", "G_w", "time", "log_factor"}

    # input (C, holds)
    args = [(1.0, True), (report.empirical_C, True), (1e-3, False)]
    for C, holds in args:
        fixed = estimates.souplet_zhang_check(sol, space, None, R=4.0, C=C)
        assert fixed.mode == "fixed"
        assert fixed.holds == holds

    dropped = estimates.souplet_zhang_check(sol, space, None, R=4.0, drop_gamma_term=True)
    assert dropped.rhs_terms.gamma_delta_phi == 0.0
    assert dropped.empirical_C >= report.empirical_C

    report = estimates.souplet_zhang_check(sol, space, None, global_variant=True)
    assert report.kind == estimates.SOUPLET_ZHANG_GLOBAL
    assert report.params.R == 8.0
    assert "inv_R" not in report.rhs_terms
    assert report.holds

    with raises(exceptions.BoundViolated):
        estimates.souplet_zhang_check(sol, space, None, R=4.0, D=0.01)
    with raises(exceptions.ConfigException):
        estimates.souplet_zhang_check(sol, space, None)


def test_estimates_hamilton(kernel_fixture, spaces_fixture):
    sol, space = kernel_fixture.sol, kernel_fixture.space
    report = estimates.hamilton_check(sol, space, None, 2.0, R=4.0)
    assert report.kind == estimates.HAMILTON
    assert report.holds
    assert report.rhs_terms.sup_factor == approx(((4 * math.pi) ** -1.5) ** 0.5)
    assert estimates.hamilton_check(sol, space, None, 2.0, R=4.0, C=report.empirical_C).holds

    # input (alpha, beta)
    args = [(1.0, 0.0), (2.0, 1.0), (3.0, -1.0)]
    for alpha, beta in args:
        with raises(exceptions.ParameterOrder):
            estimates.hamilton_check(sol, space, None, alpha, beta, R=4.0)
    with raises(exceptions.HypothesisUnverified):
        estimates.hamilton_check(sol, spaces_fixture.hyperbolic, None, 2.0, R=4.0, k=0.0)


def test_estimates_elliptic_harnack(kernel_fixture):
    sol, space = kernel_fixture.sol, kernel_fixture.space
    with raises(exceptions.MissingCalibration):
        estimates.elliptic_harnack_check(sol, space, None, [(1.0, 1.0)], KERNEL_T1, R=4.0)

    report = estimates.elliptic_harnack_check(sol, space, None, [(1.0, 1.0), (0.5, 1.5)], KERNEL_T1, R=4.0, C=1.0)
    assert report.kind == estimates.ELLIPTIC_HARNACK
    assert report.pairs[0].d == 0.0
    assert report.pairs[0].margin == approx(0.0, abs=1e-12)
    assert report.pairs[1].margin > 0
    assert 0 < report.pairs[1].exponent < 1
    assert report.holds

    calibration = estimates.souplet_zhang_check(sol, space, None, R=4.0)
    report = estimates.elliptic_harnack_check(sol, space, None, [(0.5, 1.5)], KERNEL_T1, R=4.0,
                                              calibration=calibration)
    assert report.params.C == calibration.empirical_C
    assert report.holds

    report = estimates.elliptic_harnack_check(sol, space, None, [((0.0, 1), (1.0, -1))], KERNEL_T1, R=4.0, C=1.0)
    assert report.pairs[0].d == 1.0
    with raises(exceptions.NotSameRay):
        estimates.elliptic_harnack_check(sol, space, None, [((0.5, 1), (1.0, -1))], KERNEL_T1, R=4.0, C=1.0)

    with raises(exceptions.OutOfDomain):
        estimates.elliptic_harnack_check(sol, space, None, [(0.5, 1.5)], KERNEL_T0, R=4.0, C=1.0)
    with raises(exceptions.OutOfDomain):
        estimates.elliptic_harnack_check(sol, space, None, [(0.5, 3.0)], KERNEL_T1, R=4.0, C=1.0)


def test_estimates_parabolic_harnack(kernel_fixture):
    sol, space = kernel_fixture.sol, kernel_fixture.space
    pairs = [((0.0, KERNEL_T0), (0.0, KERNEL_T1))]
    report = estimates.parabolic_harnack_check(sol, space, None, 1.1, pairs, global_variant=True)
    assert report.kind == estimates.PARABOLIC_HARNACK
    # w(0,2)/w(0,1) = 2^(-3/2) against the bound 2^(-1.65)
    assert report.ratio_margin == approx(2 ** -1.5 - 2 ** -1.65, rel=1e-6)
    assert report.margin == approx(0.15 * math.log(2), rel=1e-6)
    assert report.harnack_constants.H == 0.0
    assert report.harnack_constants.L == [0.0]
    assert report.holds

    report = estimates.parabolic_harnack_check(sol, space, None, 2.0, [((0.5, 1.2), (1.0, 1.8))], R=2.0)
    assert report.holds
    assert report.pairs[0].L <= 0.25 / (4 * 0.6) + 1e-12
    constants = estimates.harnack_constants(sol, space, nonlinearity.fisher_kpp(), 2.0, R=2.0, gamma_E_radius="2R")
    assert constants.gammas["gamma_E"] == approx(1 - (4 * math.pi * KERNEL_T0) ** -1.5, rel=1e-9)

    with raises(exceptions.TimeOrder):
        estimates.parabolic_harnack_check(sol, space, None, 2.0, [((0.0, 1.5), (0.0, 1.5))], R=2.0)
    with raises(exceptions.OutOfDomain):
        estimates.parabolic_harnack_check(sol, space, None, 2.0, [((3.0, 1.2), (0.0, 1.5))], R=2.0)
    with raises(exceptions.ConfigException):
        estimates.harnack_constants(sol, space, None, 2.0, R=2.0, gamma_E_radius="3R")


def test_estimates_path_functional(spaces_fixture):
    # the straight segment of length 1 has energy 1/4 at dt = 1
    value = estimates.path_functional(spaces_fixture.euclidean, 0.5, 1.5, 2.0, 1.0)
    assert value >= 0.25 * (1 - 1e-9)
    assert value == approx(0.25, rel=1e-3)
    assert estimates.path_functional(spaces_fixture.euclidean, 1.0, 1.0, 2.0, 1.0) == approx(0.0, abs=1e-6)


def test_estimates_elliptic_global(spaces_fixture):
    space = spaces_fixture.euclidean
    r = 0.1 * np.arange(41)
    constant = SolutionField(r, [0.0], np.ones((1, 41)), space)
    report = estimates.elliptic_global_check(constant, space, None, 2.0)
    assert report.kind == estimates.ELLIPTIC_GLOBAL
    assert report.lhs_max == 0.0
    assert report.margin == approx(0.0, abs=1e-12)
    assert report.holds
    assert report.stationarity < 1e-12

    report = estimates.elliptic_global_check(SolutionField(r, [0.0], np.ones((1, 41)), space,
                                                           G=nonlinearity.fisher_kpp()), space, None, 2.0)
    assert report.holds

    bumpy = SolutionField(r, [0.0], (1 + r ** 2)[None, :], space)
    with raises(exceptions.NotStationary):
        estimates.elliptic_global_check(bumpy, space, None, 2.0)
    with raises(exceptions.ParameterOrder):
        estimates.elliptic_global_check(constant, space, None, 1.0)
    with raises(exceptions.NeedFiniteM):
        estimates.elliptic_global_check(constant, spaces_fixture.gaussian, None, 2.0)


def test_estimates_calibration(kernel_fixture):
    sol, space = kernel_fixture.sol, kernel_fixture.space
    reports = [estimates.souplet_zhang_check(sol, space, None, R=R) for R in (3.0, 4.0)]
    calibration = estimates.calibrate_constant(reports)
    assert calibration.kind == estimates.SOUPLET_ZHANG
    assert calibration.C_min == max(r.empirical_C for r in reports)
    assert calibration.stability >= 0

    with raises(exceptions.InsufficientData):
        estimates.calibrate_constant(reports[:1])
    with raises(exceptions.MixedKinds):
        estimates.calibrate_constant([reports[0], estimates.hamilton_check(sol, space, None, 2.0, R=4.0)])
    li_yau = estimates.li_yau_check(sol, space, None, 2.0, global_variant=True)
    with raises(exceptions.MixedKinds):
        estimates.calibrate_constant([li_yau, li_yau])


def test_estimates_batch(kernel_fixture):
    sol, space = kernel_fixture.sol, kernel_fixture.space
    grid = [{"R": 2.0}, {"R": 4.0}, {"R": 20.0}]
    results = estimates.batch_estimates(estimates.souplet_zhang_check, grid, workers=2, sol=sol, space=space, G=None)
    assert [res.params for res in results] == grid
    assert results[0].report.holds
    assert results[1].report.holds
    assert results[2].report is None
    assert results[2].error


@pytest.mark.slow
def test_estimates_liouville_demo():
    space = geometry.make_model_space(3, 3, "euclidean", "zero", 2.5)
    result = estimates.liouville_demo(space, nonlinearity.zero(), "log_bracket")
    assert result.verdict == estimates.CONSISTENT
    assert result.final_grad_sup < 1e-4 * result.sup_w

    G = Nonlinearity("PowerSum", coefficients={"A1": 1.0}, exponents={"p1": 0.5})
    result = estimates.liouville_demo(space, G, "power_sum_m")
    assert result.verdict == estimates.NONEXISTENCE
    assert result.growth > 10

    result = estimates.liouville_demo(space, nonlinearity.allen_cahn(), "power_sum")
    assert result.verdict == estimates.NOT_APPLICABLE
    assert not result.predicate.holds

    hyperbolic = geometry.make_model_space(3, 3, "hyperbolic[1]", "zero", 2.5)
    result = estimates.liouville_demo(hyperbolic, nonlinearity.zero(), "log_bracket")
    assert result.verdict == estimates.NOT_APPLICABLE
    assert result.reason.startswith("curvature")


@pytest.mark.slow
def test_estimates_parabolic_harnack_random_pairs(kernel_fixture):
    sol, space = kernel_fixture.sol, kernel_fixture.space
    rng = np.random.default_rng(7)
    nodes = int(np.count_nonzero(sol.r <= 4.0 + 1e-9))
    pairs = []
    while len(pairs) < 50:
        i, j = sorted(rng.integers(0, sol.levels, 2))
        if i == j:
            continue
        a, b = rng.integers(0, nodes, 2)
        pairs.append(((float(sol.r[a]), float(sol.t[i])), (float(sol.r[b]), float(sol.t[j]))))
    report = estimates.parabolic_harnack_check(sol, space, None, 1.1, pairs, global_variant=True)
    assert len(report.pairs) == 50
    assert report.holds
    assert report.margin > 0
    assert len(report.harnack_constants.L) == 50


def test_estimates_harnack_constants_unshared(kernel_fixture):
    sol, space = kernel_fixture.sol, kernel_fixture.space
    constants = estimates.harnack_constants(sol, space, None, 1.1, global_variant=True)
    assert constants.L == []
    assert "inner" not in constants
    first = estimates.parabolic_harnack_check(sol, space, None, 1.1, [((0.0, 1.0), (1.0, 2.0))], global_variant=True)
    second = estimates.parabolic_harnack_check(sol, space, None, 1.1, [((0.0, 1.0), (0.0, 2.0))],
                                               global_variant=True)
    assert first.harnack_constants.L == [approx(0.25)]
    assert second.harnack_constants.L == [0.0]
    assert constants.L == []
