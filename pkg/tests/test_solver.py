import math
import os

import numpy as np
import pytest
from pytest import approx, raises

from driftlab import exceptions, geometry, nonlinearity, solver
from driftlab.nonlinearity import Nonlinearity
from driftlab.solver import Cylinder, Grid, SolutionField
from tests import KERNEL_T0, KERNEL_T1
from tests.conftest import kernel_value


def test_solver_grid():
    grid = Grid(0.05, 4.0, pad=6.0)
    assert grid.nodes == 201
    assert grid.R_total == approx(10.0)
    assert grid.r[-1] == approx(10.0)
    assert grid.nt == 21

    grid = Grid.from_dict({"dr": 0.1, "R_max": 2}, {"levels": 5, "cfl": 0.25})
    assert grid.nt == 5
    assert grid.cfl == 0.25
    assert grid.to_dict() == {"dr": 0.1, "R_max": 2.0, "pad": 0.0, "nt": 5, "cfl": 0.25}

    # input (keyword arguments, expected exception)
    args = [
        (dict(dr=0.0, R_max=2.0), exceptions.ConfigException),
        (dict(dr=0.1, R_max=0.0), exceptions.ConfigException),
        (dict(dr=0.1, R_max=2.0, pad=-1.0), exceptions.ConfigException),
        (dict(dr=0.1, R_max=2.0, cfl=0.6), exceptions.ConfigException),
        (dict(dr=0.1, R_max=2.0, nt=1), exceptions.ConfigException),
        (dict(dr=1.0, R_max=2.0), exceptions.GridTooCoarse),
    ]
    for kwargs, error in args:
        with raises(error):
            Grid(**kwargs)
    with raises(exceptions.ConfigException):
        Grid.from_dict({"dr": 0.1})


def test_solver_cylinder(kernel_fixture):
    sol = kernel_fixture.sol
    q = Cylinder.Q(2.0, 1.0, KERNEL_T1)
    assert q.to_dict() == {"flavor": "Q", "r": [0.0, 2.0], "t": [1.0, 2.0], "open_start": False}
    s = q.select(sol)
    assert s.w.shape == (11, 21)
    s = Cylinder.Q(2.0, 1.0, KERNEL_T1, open_start=True).select(sol)
    assert s.w.shape == (10, 21)
    assert q.shrink().R == 1.0
    assert q.T == 1.0
    assert Cylinder.H(2.0, 1.0).to_dict()["t"] == [0.0, 1.0]

    # input (cylinder, expected exception)
    args = [
        (Cylinder.Q(9.0, 1.0, KERNEL_T1), exceptions.OutOfDomain),
        (Cylinder.Q(2.0, 1.0, 3.0), exceptions.OutOfDomain),
        (Cylinder.Q(0.5, 1.0, KERNEL_T1), exceptions.GridTooCoarse),
    ]
    for region, error in args:
        with raises(error):
            region.masks(sol)
    with raises(exceptions.ConfigException):
        Cylinder(1.0, 0.5, 0.0, 1.0)


def test_solver_solution_field(kernel_fixture, tempdir):
    sol = kernel_fixture.sol
    assert sol.levels == 11
    assert sol.dr == approx(0.1)
    assert sol.value_at(0.0, 1.0) == approx(kernel_value(0.0, 1.0))
    assert sol.value_at(1.0, 1.5) == approx(kernel_value(1.0, 1.5), rel=1e-12)
    assert sol.value_at(1.05, 1.55) == approx(kernel_value(1.05, 1.55), rel=1e-2)
    with raises(exceptions.OutOfDomain):
        sol.value_at(9.0, 1.5)
    with raises(exceptions.OutOfDomain):
        sol.value_at(1.0, 2.5)
    assert sol.sup() == approx(kernel_value(0.0, 1.0))
    with raises(exceptions.ConfigException):
        SolutionField(sol.r, sol.t, sol.w[:, :-1], sol.space)

    # radial derivative -r/(2t) w, zero at the pole
    exact = -sol.r[None, :] / (2 * sol.t[:, None]) * sol.w
    assert sol.grad_w[:, 0] == approx(np.zeros(11))
    assert np.max(np.abs(sol.grad_w - exact)[:, :40]) < 5e-3 * np.max(np.abs(exact))

    # the heat kernel saturates the Li-Yau inequality: t(|∇f|^2 - f_t) = n/2
    assert sol.F_LY(1.0)[:, :21] == approx(np.full((11, 21), 1.5), abs=1e-2)

    path = os.path.join(tempdir, "kernel.csv")
    sol.with_bound(0.5).write_csv(path)
    again = SolutionField.read_csv(path, sol.space)
    assert again.w == approx(sol.w, rel=1e-15)
    assert again.D == 0.5
    assert again.R_max == sol.R_max


def test_solver_derived_fields(kernel_fixture):
    sol = kernel_fixture.sol
    sup = kernel_value(0.0, KERNEL_T0)
    field = solver.derived_fields(sol, "auto")
    assert field.D == approx(sup * (1 + 1e-9))
    assert np.all(field.h < 0)
    field = solver.derived_fields(sol, 1.0)
    assert field.H[:, 0] == approx(np.zeros(11))
    with raises(exceptions.BoundViolated):
        solver.derived_fields(sol, 0.01)
    with raises(exceptions.BoundViolated):
        sol.h
    negative = SolutionField(sol.r, sol.t, -sol.w, sol.space)
    with raises(exceptions.NonPositiveSolution):
        solver.derived_fields(negative)


def test_solver_comparison_gap(kernel_fixture):
    sol = kernel_fixture.sol
    upper = SolutionField(sol.r, sol.t, 2 * sol.w, sol.space)
    assert solver.comparison_gap(sol, upper) == approx(-np.min(sol.w))
    assert solver.comparison_gap(upper, sol) > 0
    with raises(exceptions.ConfigException):
        solver.comparison_gap(sol, kernel_fixture.levels[0])


@pytest.mark.slow
def test_solver_heat_kernel(solved_kernel_fixture):
    sol = solved_kernel_fixture.sol
    assert sol.t == approx(np.linspace(KERNEL_T0, KERNEL_T1, 21))
    assert sol.metadata.steps > 0
    # mass is conserved with the zero-flux edge
    mass = sol.mass()
    assert mass == approx(np.full(21, mass[0]), rel=1e-10)
    assert mass[0] == approx(1 / (4 * math.pi), rel=1e-3)
    # against the closed form inside the verified radius
    rr, tt = np.meshgrid(sol.r[sol.physical], sol.t)
    exact = np.vectorize(kernel_value)(rr, tt)
    assert np.max(np.abs(sol.w[:, sol.physical] - exact)) < 5e-3 * np.max(exact)


def test_solver_aborts():
    space = geometry.make_model_space(3, 3, "euclidean", "zero", 4.0)
    grid = Grid(0.1, 2.0, nt=3)
    # input (nonlinearity, initial data, expected exception)
    args = [
        (Nonlinearity("Custom", expression="-1"), "bump(1, 1)", exceptions.PositivityLost),
        (Nonlinearity("Custom", expression="w^2"), "10", exceptions.SolverAbort),
    ]
    for G, initial, error in args:
        with raises(error):
            solver.solve_parabolic(space, G, initial, grid, T=2.0)
    with raises(exceptions.ConfigException):
        solver.solve_parabolic(space, None, "1", grid, T=0.0)
    with raises(exceptions.OutOfDomain):
        solver.solve_parabolic(space, None, "1", Grid(0.1, 2.0, pad=4.0), T=1.0)
    with raises(exceptions.PositivityLost):
        solver.solve_parabolic(space, None, "-1", grid, T=1.0)


def test_solver_elliptic():
    space = geometry.make_model_space(3, 3, "euclidean", "zero", 4.0)
    grid = Grid(0.1, 2.5)
    sol = solver.solve_elliptic(space, nonlinearity.zero(), "bump(1, 1)", grid)
    assert sol.levels == 1
    assert np.max(sol.w) - np.min(sol.w) < 1e-6
    assert np.max(np.abs(sol.dtw)) < 1e-8

    G = Nonlinearity("PowerSum", coefficients={"A1": 1.0}, exponents={"p1": 0.5})
    with raises(exceptions.NoConvergence) as e:
        solver.solve_elliptic(space, G, "bump(1, 1)", grid, max_time=2.0, gradient_ratio=1e-4)
    assert e.value.payload["growth"] > 1.0


@pytest.mark.slow
def test_solver_second_order():
    space = geometry.make_model_space(3, 3, "euclidean", "zero", 8.0)
    errors = []
    for dr in (0.04, 0.02, 0.01):
        sol = solver.solve_parabolic(space, None, "heat_kernel(1)", Grid(dr, 4.0, pad=4.0, nt=3), T=1.0,
                                     t_start=KERNEL_T0)
        rr, tt = np.meshgrid(sol.r[sol.physical], sol.t)
        exact = np.vectorize(kernel_value)(rr, tt)
        errors.append(np.max(np.abs(sol.w[:, sol.physical] - exact)) / np.max(exact))
    for coarse, fine in zip(errors, errors[1:]):
        assert 3.0 <= coarse / fine <= 5.0, errors


def test_solver_mass_weighted_gaussian():
    space = geometry.make_model_space(3, "inf", "euclidean", "gaussian[1]", 7.0)
    sol = solver.solve_parabolic(space, None, "bump(1, 1)", Grid(0.05, 3.0, pad=4.0), T=1.0)
    mass = sol.mass()
    assert mass[0] > 0
    assert np.max(np.abs(mass - mass[0])) / mass[0] < 1e-6
