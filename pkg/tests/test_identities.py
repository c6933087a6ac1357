import numpy as np
from hypothesis import given, settings, strategies as st
from pytest import approx, raises

from driftlab import defaults, exceptions, geometry, identities, nonlinearity
from driftlab.solver import SolutionField


def _converging(report):
    return report.exact or report.levels[-1].max_residual < report.levels[0].max_residual


def test_identities_analytic_paths(spaces_fixture):
    # input (space, function, radius)
    args = [
        ("euclidean", "r^2", None),
        ("euclidean", "exp(-r^2)", 3.0),
        ("hyperbolic", "sinh(r)", 3.0),
        ("gaussian", "exp(-r^2)", 3.0),
        ("sphere", "cos(r)", 2.5),
    ]
    for name, u, radius in args:
        space = spaces_fixture[name]
        report = identities.bochner_residual(space, u, path=identities.ANALYTIC, radius=radius)
        assert report.identity == "bochner"
        assert report.exact, f"{name} {u}: {report.levels}"
        assert report.order is None
        assert not report.flagged
        report = identities.exp_laplacian_identity(space, u, path=identities.ANALYTIC, radius=radius)
        assert report.exact


def test_identities_discrete_order(spaces_fixture):
    # input (identity, space, function)
    args = [
        (identities.bochner_residual, "euclidean", "exp(-r^2/4)"),
        (identities.bochner_residual, "hyperbolic", "exp(-r^2/4)"),
        (identities.exp_laplacian_identity, "euclidean", "r^2/4"),
    ]
    for check, name, u in args:
        report = check(spaces_fixture[name], u, radius=4.0)
        assert report.path == identities.DISCRETE
        assert [level.dr for level in report.levels] == [0.1, 0.05, 0.025]
        assert not report.exact
        assert report.order == approx(2.0, abs=0.5)
        assert not report.flagged
    with raises(exceptions.OutOfDomain):
        identities.bochner_residual(spaces_fixture.sphere, "r^2", radius=4.0)
    with raises(exceptions.GridTooCoarse):
        identities.bochner_residual(spaces_fixture.euclidean, "r^2", levels=(0.5,), radius=4.0)


def test_identities_cd_condition(spaces_fixture):
    # exp(-r^2) in the flat 3-space: Γ2 - (Δu)^2/3 = (2/3)(4 r^2 exp(-r^2))^2
    result = identities.cd_condition_check(spaces_fixture.euclidean, "exp(-r^2)", 0.0)
    assert result.margin == approx(0.0, abs=1e-10)
    assert result.flavor == geometry.RIC_PHI_M
    assert result.m == 3

    result = identities.cd_condition_check(spaces_fixture.hyperbolic, "exp(-r^2)", -2.0)
    assert result.margin >= -1e-10
    result = identities.cd_condition_check(spaces_fixture.gaussian, "exp(-r^2)", 1.0)
    assert result.flavor == geometry.RIC_PHI
    assert result.margin >= -1e-10

    # input (space, k)
    args = [("euclidean", 1.0), ("hyperbolic", -1.0), ("gaussian", 2.0)]
    for name, k in args:
        with raises(exceptions.HypothesisUnverified):
            identities.cd_condition_check(spaces_fixture[name], "exp(-r^2)", k)


def test_identities_product_rule(spaces_fixture):
    report = identities.product_rule_residual(spaces_fixture.euclidean, "exp(-r^2 - t)", "r^2*t", radius=2.0)
    assert report.exact
    report = identities.product_rule_residual(spaces_fixture.hyperbolic, "1 + exp(-r*t)", "cosh(r)/t", radius=2.0)
    assert report.exact
    with raises(exceptions.DomainViolation):
        identities.product_rule_residual(spaces_fixture.euclidean, "1 - r", "r", radius=4.0)


def test_identities_quadratic_lemma():
    result = identities.quadratic_lemma_check(samples=10 ** 4)
    assert result.samples == 10 ** 4
    assert result.violations == 0
    assert set(result.worst) >= {"y", "alpha", "eps", "m", "z"}
    again = identities.quadratic_lemma_check(samples=10 ** 4)
    assert again.worst == result.worst
    narrow = identities.quadratic_lemma_check(samples=10 ** 3, ranges={"alpha": (1.01, 1.1), "b": (0.0, 0.0)})
    assert narrow.violations == 0


def test_identities_evolution(kernel_fixture):
    levels = kernel_fixture.levels
    # input (identity, keyword arguments)
    args = [
        (identities.h_evolution_residual, {}),
        (identities.H_evolution_residual, {}),
        (identities.H_evolution_residual, {"D": 1.0}),
        (identities.F_beta_evolution_residual, {"alpha": 2.0, "beta": 0.0}),
        (identities.F_beta_evolution_residual, {"alpha": 3.0, "beta": 1.0}),
        (identities.liyau_F_evolution_residual, {"alpha": 1.0}),
        (identities.liyau_F_evolution_residual, {"alpha": 2.0}),
    ]
    for check, kwargs in args:
        report = check(levels, **kwargs)
        assert len(report.levels) == 3
        assert not report.flagged, f"{report.identity}: orders {report.orders}"
        assert _converging(report), f"{report.identity}: {report.levels}"

    report = identities.H_evolution_residual(levels)
    assert set(report.terms) == {"ricci", "transport", "quadratic", "hessian", "forcing_x", "forcing_w"}
    assert report.terms.ricci == 0.0

    # the Gaussian is the equality case of the Li-Yau bound in the flat space
    report = identities.liyau_F_evolution_residual(levels, alpha=1.0)
    assert report.slack_min == approx(0.0, abs=1e-9)
    assert report.slack_ok

    # a single field works too
    assert len(identities.h_evolution_residual(levels[0]).levels) == 1

    with raises(exceptions.ParameterOrder):
        identities.F_beta_evolution_residual(levels, alpha=1.0, beta=0.0)
    with raises(exceptions.BoundViolated):
        identities.H_evolution_residual(levels, D=0.01)
    with raises(exceptions.ConfigException):
        identities.delta_phi_G_identity_residual(levels)


def test_identities_chain_rule(kernel_fixture):
    # the chain rule is spatial, any positive field with a nonlinearity will do
    for G in (nonlinearity.fisher_kpp(), nonlinearity.log_linear(),
              nonlinearity.Nonlinearity("PowerSum", coefficients={"A1": "1 + r^2"}, exponents={"p1": 2})):
        levels = [SolutionField(sol.r, sol.t, sol.w, sol.space, G=G, dtw=sol.dtw, R_max=sol.R_max)
                  for sol in kernel_fixture.levels]
        report = identities.delta_phi_G_identity_residual(levels)
        assert not report.flagged
        assert _converging(report)
        assert np.isfinite(report.levels[-1].max_residual)


def test_identities_registry():
    assert set(identities.IDENTITIES) == {"bochner", "exp_laplacian", "product_rule", "h_evolution",
                                          "H_evolution", "F_beta_evolution", "liyau_F_evolution", "delta_phi_G"}


@settings(max_examples=100, deadline=None)
@given(name=st.sampled_from(["euclidean", "hyperbolic", "gaussian", "gaussian_m5", "sphere"]),
       a=st.floats(min_value=-2.0, max_value=2.0), b=st.floats(min_value=0.05, max_value=2.0),
       c=st.floats(min_value=-1.0, max_value=1.0))
def test_identities_cd_condition_random_fields(name, a, b, c):
    space = geometry.shipped_spaces()[name]
    flavor = geometry.RIC_PHI if space.m == float("inf") else geometry.RIC_PHI_M
    k, _ = geometry.ricci_minimum(space, flavor, (defaults.RADIAL_FLOOR, space.R_max))
    result = identities.cd_condition_check(space, f"({a!r})*exp(-({b!r})*r^2) + ({c!r})*r^2", k)
    assert result.margin >= -1e-8, f"{name}: worst at r={result.worst_r}"


def test_identities_quadratic_lemma_full_sweep():
    result = identities.quadratic_lemma_check(samples=10 ** 5)
    assert result.samples == 10 ** 5
    assert result.violations == 0


def test_identities_constant_solution(spaces_fixture):
    space = spaces_fixture.euclidean
    levels = []
    for f in (1, 2, 4):
        r = 0.1 / f * np.arange(40 * f + 1)
        t = np.linspace(1.0, 2.0, 10 * f + 1)
        levels.append(SolutionField.from_callable(space, lambda rr, tt: 0.5 + 0.0 * rr, r, t, R_max=4.0))
    # input (identity, keyword arguments)
    args = [
        (identities.h_evolution_residual, {}),
        (identities.H_evolution_residual, {}),
        (identities.F_beta_evolution_residual, {"alpha": 2.0, "beta": 0.0}),
        (identities.liyau_F_evolution_residual, {"alpha": 2.0}),
    ]
    for check, kwargs in args:
        report = check(levels, **kwargs)
        for level in report.levels:
            assert level.max_residual < 1e-12, f"{report.identity}: {report.levels}"
        assert report.exact
