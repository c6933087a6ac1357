import math

import numpy as np
from pytest import approx, raises

from driftlab import cutoff, defaults, exceptions


def test_cutoff_steps():
    quintic = cutoff.QuinticStep()
    # input (x, S, S', S'')
    args = [
        (-1.0, 0.0, 0.0, 0.0),
        (0.0, 0.0, 0.0, 0.0),
        (0.5, 0.5, 1.875, 0.0),
        (1.0, 1.0, 0.0, 0.0),
        (2.0, 1.0, 0.0, 0.0),
    ]
    for x, s, d1, d2 in args:
        assert float(quintic(x)) == approx(s)
        assert float(quintic(x, 1)) == approx(d1)
        assert float(quintic(x, 2)) == approx(d2, abs=1e-12)
    with raises(ValueError):
        quintic(0.5, 3)

    logistic = cutoff.LogisticStep()
    value, complement, d1, d2 = logistic.parts(np.array([-0.5, 0.0, 0.5, 1.0, 1.5]))
    assert value == approx([0.0, 0.0, 0.5, 1.0, 1.0])
    assert complement == approx([1.0, 1.0, 0.5, 0.0, 0.0])
    assert d1 == approx([0.0, 0.0, 2.0, 0.0, 0.0])
    assert d2 == approx([0.0, 0.0, 0.0, 0.0, 0.0], abs=1e-12)
    # flat at both ends
    value, complement, d1, d2 = logistic.parts(np.array([1e-3, 1.0 - 1e-3]))
    assert np.all(np.abs(d1) < 1e-100)
    assert complement[1] > 0


def test_cutoff_spatial():
    c = cutoff.build_spatial_cutoff(2.0)
    # input (r, ζ, ζ', ζ'')
    args = [
        (0.0, 1.0, 0.0, 0.0),
        (2.0, 1.0, 0.0, 0.0),
        (3.0, 0.5, -0.9375, 0.0),
        (4.0, 0.0, 0.0, 0.0),
        (5.0, 0.0, 0.0, 0.0),
    ]
    for r, z, dz, ddz in args:
        assert float(c(np.array([r]))[0]) == approx(z)
        assert float(c(np.array([r]), 1)[0]) == approx(dz)
        assert float(c(np.array([r]), 2)[0]) == approx(ddz, abs=1e-12)
    # sup of -S'' for the quintic step is 10/sqrt(3)
    assert c.c2 == approx(defaults.CUTOFF_INFLATION * 10 / math.sqrt(3), rel=1e-6)
    assert c.c1 > 0
    assert c.to_dict()["kind"] == "spatial"
    with raises(exceptions.ConfigException):
        cutoff.build_spatial_cutoff(0.0)


def test_cutoff_spatial_certificate():
    c = cutoff.build_spatial_cutoff(3.0)
    cert = cutoff.certify(c)
    assert cert.valid
    assert cert.kind == "spatial"
    assert cert.density == defaults.CUTOFF_DENSITY
    assert all(cert.flags.values())
    assert cert.max_violation.c2_smooth == 0.0
    assert cert.constants.c1 == approx(defaults.CUTOFF_INFLATION * cert.sampled.c1)
    assert cert.constants.c2 == approx(defaults.CUTOFF_INFLATION * cert.sampled.c2)

    # constants below the sampled sups are caught
    bad = cutoff.SpatialCutoff(3.0, cutoff.SpatialProfile(), 0.1, 10.0)
    cert = cutoff.certify(bad, density=1000)
    assert not cert.valid
    assert not cert.flags.gradient
    assert cert.flags.hessian

    with raises(exceptions.ConfigException):
        cutoff.certify(c, density=999)


def test_cutoff_space_time():
    c = cutoff.build_space_time_cutoff(4.0, 1.0, 1.0, 0.5)
    assert c.ramp == approx(0.5)
    # input (r, t, η̄)
    args = [
        (0.0, 1.0, 1.0),
        (1.5, 0.75, 1.0),
        (3.0, 0.25, 0.25),
        (3.0, 0.0, 0.0),
        (4.0, 1.0, 0.0),
    ]
    for r, t, value in args:
        assert float(c(r, t)) == approx(value)
    assert float(c(1.0, 0.9, dr=1)) == 0.0
    assert float(c(1.0, 0.9, dt=1)) == 0.0
    assert set(c.to_dict()["c_a"]) == {str(a) for a in defaults.CUTOFF_EXPONENTS}

    # input (R, T, t0, tau, expected exception)
    args = [
        (1.0, 1.0, 1.0, 0.5, exceptions.ConfigException),
        (4.0, 0.0, 1.0, 0.5, exceptions.ConfigException),
        (4.0, 1.0, 1.0, 0.0, exceptions.BadWindow),
        (4.0, 1.0, 1.0, 1.5, exceptions.BadWindow),
    ]
    for R, T, t0, tau, error in args:
        with raises(error):
            cutoff.build_space_time_cutoff(R, T, t0, tau)


def test_cutoff_space_time_certificate():
    c = cutoff.build_space_time_cutoff(4.0, 1.0, 2.0, 1.5)
    cert = cutoff.certify(c, density=2000)
    assert cert.kind == "space_time"
    assert cert.valid, cert.max_violation
    assert set(cert.constants.c_a) == {"0.5", "0.75"}
    assert cert.sampled.c <= cert.constants.c
