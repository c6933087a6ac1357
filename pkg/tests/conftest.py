import math
import os
import shutil
import tempfile

import numpy as np
import pytest
from munch import Munch

from driftlab import geometry, solver
from driftlab.expressions import parse, derivative, evaluate
from tests import KERNEL_T0, KERNEL_T1

KERNEL = "(4*pi*t)^(-3/2) * exp(-r^2/(4*t))"


@pytest.fixture
def tempdir(scope="module"):
    # contextmanager to generate and delete a temporary directory
    path = tempfile.mkdtemp()
    try:
        yield path
    finally:
        shutil.rmtree(path)


@pytest.fixture
def spaces_fixture(scope="module"):
    return Munch.fromDict(geometry.shipped_spaces())


def kernel_field(space, dr, R_max, levels=21, t0=KERNEL_T0, t1=KERNEL_T1):
    """The Euclidean heat kernel sampled with its exact time derivative"""
    expr = parse(KERNEL, ("r", "t"))
    dt_expr = derivative(expr, "t")
    r = dr * np.arange(int(round(R_max / dr)) + 1)
    t = np.linspace(t0, t1, levels)
    return solver.SolutionField.from_callable(space, lambda rr, tt: evaluate(expr, r=rr, t=tt), r, t,
                                              dtw=lambda rr, tt: evaluate(dt_expr, r=rr, t=tt), R_max=R_max)


def kernel_value(r, t, n=3):
    return (4 * math.pi * t) ** (-n / 2) * math.exp(-r ** 2 / (4 * t))


@pytest.fixture
def kernel_fixture(scope="module"):
    space = geometry.make_model_space(3, 3, "euclidean", "zero", 8.0)
    return Munch(
        space=space,
        sol=kernel_field(space, 0.1, 8.0, levels=11),
        levels=[kernel_field(space, 0.1 / f, 4.0, levels=10 * f + 1) for f in (1, 2, 4)],
    )


@pytest.fixture
def solved_kernel_fixture(scope="module"):
    # heat kernel from t = 1 to 2; on [0, 8] the data stay above the positivity floor
    space = geometry.make_model_space(3, 3, "euclidean", "zero", 12.0)
    grid = solver.Grid(dr=0.05, R_max=4.0, pad=4.0)
    sol = solver.solve_parabolic(space, None, "heat_kernel(1)", grid, T=1.0, t_start=KERNEL_T0)
    return Munch(space=space, grid=grid, sol=sol)


@pytest.fixture
def scenario_fixture():
    return os.path.join(os.path.dirname(os.path.realpath(__file__)), "testdata")
