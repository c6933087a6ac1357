import math

import numpy as np
from hypothesis import given, settings, strategies as st
from pytest import approx, raises

from driftlab import exceptions, geometry


def test_geometry_make_model_space_errors():
    # input (n, m, warp, potential, R_max, expected exception)
    args = [
        (3, 3, "r + 1", "zero", 5.0, exceptions.InvalidWarp),
        (3, 3, "2*r", "zero", 5.0, exceptions.InvalidWarp),
        (3, 3, "sphere[1]", "zero", 4.0, exceptions.InvalidWarp),
        (3, "inf", "euclidean", "1000*r^2", 10.0, exceptions.InvalidWarp),
        (3, 3, "euclidean", "gaussian[1]", 5.0, exceptions.DimensionConvention),
        (1, 3, "euclidean", "zero", 5.0, exceptions.ConfigException),
        (3, 2, "euclidean", "zero", 5.0, exceptions.ConfigException),
        (3, 3, "euclidean", "zero", 0.0, exceptions.ConfigException),
        (3, 3, "sinh(r", "zero", 5.0, exceptions.ParseError),
    ]
    for n, m, warp, potential, R_max, error in args:
        with raises(error):
            geometry.make_model_space(n, m, warp, potential, R_max)


def test_geometry_dimension_convention_constant_potential():
    space = geometry.make_model_space(3, 3, "euclidean", "2", 5.0)
    assert space.is_constant_potential()
    assert space.to_dict() == {"n": 3, "m": 3, "warp": "euclidean", "potential": "2", "R_max": 5.0}


def test_geometry_synthetic_dimension():
    # input (raw, parsed)
    args = [(None, math.inf), ("inf", math.inf), ("∞", math.inf), ("5", 5.0), (7, 7.0), (math.inf, math.inf)]
    for raw, parsed in args:
        assert geometry.parse_m(raw) == parsed
    assert geometry.format_m(math.inf) == "inf"
    assert geometry.format_m(5.0) == 5
    assert geometry.format_m(5.5) == 5.5


def test_geometry_curvature_flavor():
    assert geometry.curvature_flavor("Ric_φ^m") == geometry.RIC_PHI_M
    assert geometry.curvature_flavor("ric_phi") == geometry.RIC_PHI
    with raises(exceptions.ConfigException):
        geometry.curvature_flavor("sectional")


def test_geometry_ricci_eigenvalues(spaces_fixture):
    # input (space, r, radial, tangential)
    args = [
        ("euclidean", 1.0, 0.0, 0.0),
        ("hyperbolic", 1.0, -2.0, -2.0),
        ("hyperbolic", 4.0, -2.0, -2.0),
        ("sphere", 1.0, 2.0, 2.0),
    ]
    for name, r, radial, tangential in args:
        ev = geometry.ricci_eigenvalues(spaces_fixture[name], r)
        assert ev.ric_radial == approx(radial, abs=1e-12)
        assert ev.ric_tangential == approx(tangential, abs=1e-12)

    # gaussian drift adds Hess phi = identity
    ev = geometry.ricci_eigenvalues(spaces_fixture.gaussian, 2.0)
    assert ev.ric_phi_radial == approx(1.0)
    assert ev.ric_phi_tangential == approx(1.0)
    assert ev.ric_phi_m_radial == approx(1.0)
    ev = geometry.ricci_eigenvalues(spaces_fixture.gaussian_m5, 2.0)
    assert ev.ric_phi_m_radial == approx(1.0 - 4.0 / 2)
    assert ev.ric_phi_m_tangential == approx(1.0)

    ev = geometry.ricci_eigenvalues(spaces_fixture.hyperbolic, np.array([0.5, 1.0, 2.0]))
    assert ev.ric_radial.shape == (3,)

    for r in (0.0, -1.0, 10.5):
        with raises(exceptions.OutOfDomain):
            geometry.ricci_eigenvalues(spaces_fixture.euclidean, r)


def test_geometry_curvature_lower_bound(spaces_fixture):
    # input (space, flavor, region, k)
    args = [
        ("euclidean", "ric_phi", (0.0, 5.0), 0.0),
        ("hyperbolic", "ric_phi", (0.0, 5.0), 1.0),
        ("sphere", "ric_phi", (0.0, 3.0), 0.0),
        ("gaussian", "ric_phi", (0.0, 5.0), 0.0),
        ("gaussian_m5", "ric_phi_m", (0.0, 4.0), 7.0 / 4),
        ("gaussian_m5", "ric_phi_m", (0.0, 2.0), 1.0 / 4),
    ]
    for name, flavor, region, k in args:
        bound = geometry.curvature_lower_bound(spaces_fixture[name], flavor, region)
        assert bound.k == approx(k, rel=1e-8, abs=1e-10)
        assert bound.stable
        assert bound.region == list(region)

    bound = geometry.curvature_lower_bound(spaces_fixture.gaussian_m5, "ric_phi_m", (0.0, 4.0))
    assert bound.worst_r == approx(4.0)
    with raises(exceptions.NeedFiniteM):
        geometry.curvature_lower_bound(spaces_fixture.gaussian, "ric_phi_m", (0.0, 1.0))
    with raises(exceptions.OutOfDomain):
        geometry.curvature_lower_bound(spaces_fixture.euclidean, "ric_phi", (0.0, 11.0))
    with raises(exceptions.OutOfDomain):
        geometry.curvature_lower_bound(spaces_fixture.euclidean, "ric_phi", (3.0, 2.0))


def test_geometry_certify_curvature(spaces_fixture):
    hyperbolic = spaces_fixture.hyperbolic
    assert geometry.certify_curvature(hyperbolic, "ric_phi", (0.0, 5.0)) == approx(1.0, rel=1e-8)
    assert geometry.certify_curvature(hyperbolic, "ric_phi", (0.0, 5.0), k=2.0) == 2.0
    with raises(exceptions.HypothesisUnverified) as e:
        geometry.certify_curvature(hyperbolic, "ric_phi", (0.0, 5.0), k=0.5)
    assert e.value.payload["k"] == approx(1.0, rel=1e-8)


def test_geometry_weighted_laplacian_exact_on_quadratics(spaces_fixture):
    space = spaces_fixture.euclidean
    for dr in (0.1, 0.05):
        r = dr * np.arange(int(round(3.0 / dr)) + 1)
        lap = geometry.weighted_laplacian_radial(space, r ** 2, dr)
        assert lap == approx(np.full_like(r, 6.0), rel=1e-9)
    # rows are independent time levels
    stacked = np.vstack([r ** 2, 2 * r ** 2])
    lap = geometry.weighted_laplacian_radial(space, stacked, dr)
    assert lap[1] == approx(np.full_like(r, 12.0), rel=1e-9)
    with raises(exceptions.GridTooCoarse):
        geometry.weighted_laplacian_radial(space, np.zeros(3), 0.1)


def test_geometry_weighted_laplacian_second_order(spaces_fixture):
    # Δ cosh r = 3 cosh r on the hyperbolic 3-space
    space = spaces_fixture.hyperbolic
    errors = []
    for dr in (0.1, 0.05):
        r = dr * np.arange(int(round(2.0 / dr)) + 1)
        lap = geometry.weighted_laplacian_radial(space, np.cosh(r), dr)
        errors.append(np.max(np.abs(lap - 3 * np.cosh(r))))
    assert errors[1] < errors[0] / 3


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 31), name=st.sampled_from(["euclidean", "hyperbolic", "gaussian"]))
def test_geometry_weighted_laplacian_self_adjoint(seed, name):
    space = geometry.shipped_spaces()[name]
    dr = 0.1
    rng = np.random.default_rng(seed)
    u, v = rng.uniform(0.0, 1.0, (2, 31))
    lap_u = geometry.weighted_laplacian_radial(space, u, dr, edge="neumann")
    lap_v = geometry.weighted_laplacian_radial(space, v, dr, edge="neumann")
    scale = np.max(np.abs(lap_u)) + np.max(np.abs(lap_v))
    assert geometry.weighted_mass(space, lap_u, dr) == approx(0.0, abs=1e-10 * scale)
    assert geometry.weighted_mass(space, v * lap_u, dr) == approx(geometry.weighted_mass(space, u * lap_v, dr),
                                                                  abs=1e-10 * scale)


def test_geometry_weighted_mass(spaces_fixture):
    dr = 0.1
    r = dr * np.arange(31)
    assert geometry.weighted_mass(spaces_fixture.euclidean, np.ones_like(r), dr) == approx(9.0, rel=1e-12)


def test_geometry_gamma_delta_phi(spaces_fixture):
    # input (space, Δ_φ r at r = 1)
    args = [
        ("euclidean", 2.0),
        ("hyperbolic", 2.0 / math.tanh(1.0)),
        ("gaussian", 1.0),
        ("sphere", 2.0 / math.tan(1.0)),
    ]
    for name, value in args:
        assert geometry.gamma_delta_phi(spaces_fixture[name]) == approx(value, rel=1e-12)
    with raises(exceptions.OutOfDomain):
        geometry.gamma_delta_phi(geometry.make_model_space(3, 3, "euclidean", "zero", 0.5))


def test_geometry_laplacian_comparison(spaces_fixture):
    assert geometry.comparison_bound(0.0, 3, 2.0) == approx(1.0)
    assert geometry.comparison_bound(1.0, 3, 1.0) == approx(2.0 / math.tanh(1.0))

    euclidean = spaces_fixture.euclidean
    assert geometry.laplacian_comparison_margin(euclidean, 0.0, 3, (0.5, 2.0)) == approx(0.0, abs=1e-12)
    assert geometry.laplacian_comparison_margin(euclidean, 0.0, 5, (0.5, 2.0)) == approx(1.0)
    assert geometry.laplacian_comparison_margin(spaces_fixture.gaussian_m5, 1.75, 5, (0.0, 4.0)) > 0
    with raises(exceptions.HypothesisUnverified):
        geometry.laplacian_comparison_margin(spaces_fixture.gaussian_m5, 0.0, 5, (0.0, 4.0))
    with raises(exceptions.HypothesisUnverified):
        geometry.laplacian_comparison_margin(spaces_fixture.gaussian, 0.0, "inf", (0.0, 4.0))


def test_geometry_radial_distance():
    assert geometry.radial_distance(1.0, 3.0) == 2.0
    # the pole lies on every ray
    assert geometry.radial_distance(0.0, 2.0, ray1=1, ray2=2) == 2.0
    with raises(exceptions.NotSameRay):
        geometry.radial_distance(1.0, 2.0, ray1=1, ray2=2)


def test_geometry_shipped_spaces(spaces_fixture):
    assert set(spaces_fixture.keys()) == {"euclidean", "hyperbolic", "gaussian", "gaussian_m5", "sphere"}
    assert math.isinf(spaces_fixture.gaussian.m)
    assert spaces_fixture.gaussian_m5.with_m(7).m == 7.0


def test_geometry_sample_lattice():
    assert geometry.sample_lattice(0.3, 0.7, 0.25) == approx([0.3, 0.5, 0.7])
    assert geometry.sample_lattice(0.0, 1.0, 0.25) == approx([0.0, 0.25, 0.5, 0.75, 1.0])
    # input (lo, hi, spacing)
    args = [(0.1, 0.2, 0.25), (1e-3, 3.0, 2 ** -8), (2.9, 3.0, 2 ** -8), (0.0, 10.0, 0.3)]
    for lo, hi, spacing in args:
        r = geometry.sample_lattice(lo, hi, spacing)
        assert r[0] == lo and r[-1] == hi
        assert np.all((r >= lo) & (r <= hi))
        assert np.all(np.diff(r) > 0)
