import logging
import math

import numpy as np
import simplejson as json
from munch import Munch

from driftlab import defaults, exceptions
from driftlab.expressions import Expression, evaluate, initial_profile
from driftlab.geometry import weighted_laplacian_radial, weighted_mass
from driftlab.nonlinearity import ZERO

logger = logging.getLogger(__name__)

NEUMANN = "neumann"
EXTRAPOLATE = "extrapolate"


class Grid:
    """
    Uniform radial grid r_j = j dr on [0, R_max + pad] with stored time levels.
    Verification stays inside [0, R_max]; the pad keeps the far edge away from it.
    """

    def __init__(self, dr, R_max, pad=0.0, nt=defaults.STORED_LEVELS, cfl=defaults.CFL):
        if not dr > 0:
            raise exceptions.ConfigException(f"grid spacing dr must be positive, got {dr}")
        if not R_max > 0 or pad < 0:
            raise exceptions.ConfigException(f"need R_max > 0 and pad >= 0, got R_max={R_max}, pad={pad}")
        if not 0 < cfl <= 0.5:
            raise exceptions.ConfigException(f"cfl safety factor must lie in (0, 0.5], got {cfl}")
        if int(nt) < 2:
            raise exceptions.ConfigException(f"need at least two stored time levels, got {nt}")
        self.dr = float(dr)
        self.R_max = float(R_max)
        self.pad = float(pad)
        self.nt = int(nt)
        self.cfl = float(cfl)
        self.nodes = int(round((self.R_max + self.pad) / self.dr)) + 1
        if self.nodes < defaults.MIN_NODES:
            raise exceptions.GridTooCoarse(f"grid has {self.nodes} nodes, need at least {defaults.MIN_NODES}")

    @property
    def r(self):
        return self.dr * np.arange(self.nodes)

    @property
    def R_total(self):
        return self.dr * (self.nodes - 1)

    def to_dict(self):
        return {"dr": self.dr, "R_max": self.R_max, "pad": self.pad, "nt": self.nt, "cfl": self.cfl}

    @classmethod
    def from_dict(cls, data, time=None):
        time = time or {}
        try:
            return cls(float(data["dr"]), float(data["R_max"]),
                       pad=float(data.get("pad", 0.0)),
                       nt=int(time.get("levels", data.get("nt", defaults.STORED_LEVELS))),
                       cfl=float(time.get("cfl", data.get("cfl", defaults.CFL))))
        except KeyError as e:
            raise exceptions.ConfigException(f"grid is missing the key {e}")


class Cylinder:
    """
    A space-time cylinder [r_lo, r_hi] x [t_lo, t_hi] around the pole.
    Q(R, T, t0) is B_R x [t0 - T, t0]; H(R, T) is B_R x (0, T].
    """

    def __init__(self, r_lo, r_hi, t_lo, t_hi, flavor="Q", open_start=False):
        if r_lo < 0 or r_hi <= r_lo or t_hi < t_lo:
            raise exceptions.ConfigException(f"invalid cylinder [{r_lo}, {r_hi}] x [{t_lo}, {t_hi}]")
        self.r_lo = float(r_lo)
        self.r_hi = float(r_hi)
        self.t_lo = float(t_lo)
        self.t_hi = float(t_hi)
        self.flavor = flavor
        self.open_start = open_start

    @classmethod
    def Q(cls, R, T, t0, open_start=False):
        return cls(0.0, R, t0 - T, t0, flavor="Q", open_start=open_start)

    @classmethod
    def H(cls, R, T):
        return cls(0.0, R, 0.0, T, flavor="H", open_start=True)

    @property
    def R(self):
        return self.r_hi

    @property
    def T(self):
        return self.t_hi - self.t_lo

    def shrink(self, factor=0.5, open_start=True):
        """The same time window over a concentric ball of factor * R"""
        return Cylinder(self.r_lo, self.r_hi * factor, self.t_lo, self.t_hi, flavor=self.flavor,
                        open_start=open_start)

    def with_radius(self, R):
        return Cylinder(self.r_lo, R, self.t_lo, self.t_hi, flavor=self.flavor, open_start=self.open_start)

    def masks(self, sol):
        tol = 1e-12 * max(1.0, abs(self.t_hi))
        if self.r_hi > sol.R_max * (1 + 1e-12):
            raise exceptions.OutOfDomain(f"cylinder radius {self.r_hi} exceeds the verified radius {sol.R_max}",
                                         payload=self.to_dict())
        if self.t_lo < sol.t[0] - tol or self.t_hi > sol.t[-1] + tol:
            raise exceptions.OutOfDomain(f"cylinder times [{self.t_lo}, {self.t_hi}] leave the solution window "
                                         f"[{sol.t[0]}, {sol.t[-1]}]", payload=self.to_dict())
        rows = (sol.t >= self.t_lo - tol) & (sol.t <= self.t_hi + tol)
        if self.open_start:
            rows &= sol.t > self.t_lo + tol
        cols = (sol.r >= self.r_lo - 1e-12) & (sol.r <= self.r_hi + 1e-12)
        if np.count_nonzero(cols) < defaults.VERIFY_MIN_NODES:
            raise exceptions.GridTooCoarse(f"{np.count_nonzero(cols)} radial nodes in the cylinder, "
                                           f"need {defaults.VERIFY_MIN_NODES}", payload=self.to_dict())
        if not np.any(rows):
            raise exceptions.OutOfDomain("no stored time level inside the cylinder", payload=self.to_dict())
        return rows, cols

    def select(self, sol, field=None):
        """(t, r, value) samples on the cylinder as 2-d arrays, value defaults to w"""
        rows, cols = self.masks(sol)
        values = sol.w if field is None else field
        return Munch(
            t=np.broadcast_to(sol.t[rows, None], (np.count_nonzero(rows), np.count_nonzero(cols))),
            r=np.broadcast_to(sol.r[None, cols], (np.count_nonzero(rows), np.count_nonzero(cols))),
            w=values[np.ix_(rows, cols)],
            rows=rows,
            cols=cols,
        )

    def to_dict(self):
        return {"flavor": self.flavor, "r": [self.r_lo, self.r_hi], "t": [self.t_lo, self.t_hi],
                "open_start": self.open_start}


class SolutionField:
    """
    A positive radial solution w on stored time levels, with ∂_t w and the derived fields.

    w and dtw have shape (levels, nodes); derived quantities are computed on demand and cached.
    The field is not modified after construction; attaching D returns a new field.
    """

    def __init__(self, r, t, w, space, G=None, dtw=None, D=None, edge=EXTRAPOLATE, R_max=None, metadata=None):
        self.r = np.asarray(r, dtype=float)
        self.t = np.atleast_1d(np.asarray(t, dtype=float))
        self.w = np.atleast_2d(np.asarray(w, dtype=float))
        if self.w.shape != (self.t.size, self.r.size):
            raise exceptions.ConfigException(f"w has shape {self.w.shape}, expected {(self.t.size, self.r.size)}")
        if self.r.size < defaults.MIN_NODES:
            raise exceptions.GridTooCoarse(f"need at least {defaults.MIN_NODES} radial nodes")
        self.space = space
        self.G = G
        self._dtw = None if dtw is None else np.atleast_2d(np.asarray(dtw, dtype=float))
        self.D = D
        self.edge = edge
        self.R_max = float(R_max) if R_max is not None else float(self.r[-1])
        self.metadata = Munch(metadata or {})
        self._cache = {}

    @property
    def dr(self):
        return float(self.r[1] - self.r[0])

    @property
    def levels(self):
        return self.t.size

    @property
    def physical(self):
        """Radial nodes inside the verified radius"""
        return self.r <= self.R_max * (1 + 1e-12)

    @classmethod
    def from_callable(cls, space, fn, r, t, dtw=None, G=None, D=None, R_max=None, metadata=None):
        """
        Sample a closed-form solution fn(r, t) on the grid r x t.
        :param dtw: optional closed-form ∂_t w(r, t); else differences between levels
        """
        r = np.asarray(r, dtype=float)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        rr, tt = np.meshgrid(r, t)
        w = np.broadcast_to(fn(rr, tt), rr.shape).astype(float)
        if dtw is not None:
            dtw = np.broadcast_to(dtw(rr, tt), rr.shape).astype(float)
        meta = dict(metadata or {}, source="closed form")
        return cls(r, t, w, space, G=G, dtw=dtw, D=D, edge=EXTRAPOLATE, R_max=R_max, metadata=meta)

    def _cached(self, key, compute):
        if key not in self._cache:
            self._cache[key] = compute()
        return self._cache[key]

    def _G_values(self):
        if self.G is None:
            return np.zeros_like(self.w)
        return self.G(self.t[:, None], self.r[None, :], self.w)

    @property
    def dtw(self):
        if self._dtw is not None:
            return self._dtw
        if self.levels < 3:
            raise exceptions.GridTooCoarse("∂_t w needs three stored levels or a closed form")
        return self._cached("dtw", lambda: np.gradient(self.w, self.t, axis=0, edge_order=2))

    @property
    def grad_w(self):
        """Radial derivative, even reflection at the pole"""
        def compute():
            g = np.gradient(self.w, self.dr, axis=1, edge_order=2)
            g[:, 0] = 0.0
            return g
        return self._cached("grad_w", compute)

    @property
    def lap_w(self):
        return self._cached("lap_w", lambda: weighted_laplacian_radial(self.space, self.w, self.dr, edge=self.edge))

    @property
    def G_values(self):
        return self._cached("G", self._G_values)

    @property
    def f(self):
        return np.log(self.w)

    @property
    def h(self):
        if self.D is None:
            raise exceptions.BoundViolated("h = log(w/D) needs a bound D, use derived_fields")
        return np.log(self.w / self.D)

    @property
    def H(self):
        """|∇h|^2 / (1 - h)^2"""
        return (self.grad_w / self.w) ** 2 / (1.0 - self.h) ** 2

    def F_beta(self, alpha, beta):
        """w^((beta+2)/alpha - 2) |∇w|^2 / alpha^2"""
        return self.w ** ((beta + 2.0) / alpha - 2.0) * self.grad_w ** 2 / alpha ** 2

    def F_LY(self, alpha):
        """t [|∇f|^2 - alpha ∂_t f + alpha e^{-f} G]"""
        t = self.t[:, None]
        return t * ((self.grad_w / self.w) ** 2 - alpha * self.dtw / self.w + alpha * self.G_values / self.w)

    def residual(self):
        """∂_t w - Δ_φ w - G on every stored level"""
        return self.dtw - self.lap_w - self.G_values

    def with_bound(self, D):
        field = SolutionField(self.r, self.t, self.w, self.space, G=self.G, dtw=self._dtw, D=D, edge=self.edge,
                              R_max=self.R_max, metadata=self.metadata)
        field._cache = dict(self._cache)
        return field

    def mass(self):
        """Weighted mass of every stored level on the whole grid"""
        return weighted_mass(self.space, self.w, self.dr)

    def value_at(self, r, t):
        """Bilinear interpolation of w in (r, t)"""
        r, t = float(r), float(t)
        if not (self.r[0] <= r <= self.r[-1]) or not (self.t[0] - 1e-12 <= t <= self.t[-1] + 1e-12):
            raise exceptions.OutOfDomain(f"point (r={r}, t={t}) outside the solution", payload={"r": r, "t": t})
        if self.levels == 1:
            return float(np.interp(r, self.r, self.w[0]))
        k = int(np.clip(np.searchsorted(self.t, t) - 1, 0, self.levels - 2))
        s = (t - self.t[k]) / (self.t[k + 1] - self.t[k])
        lo = np.interp(r, self.r, self.w[k])
        hi = np.interp(r, self.r, self.w[k + 1])
        return float((1.0 - s) * lo + s * hi)

    def sup(self, region=None):
        w = self.w[:, self.physical] if region is None else region.select(self).w
        return float(np.max(w))

    def to_dict(self):
        return {
            "space": self.space.to_dict(),
            "nonlinearity": self.G.to_dict() if self.G is not None else None,
            "D": self.D,
            "edge": self.edge,
            "R_max": self.R_max,
            "dr": self.dr,
            "levels": self.levels,
            "metadata": dict(self.metadata),
        }

    def write_csv(self, path):
        """Archive as a CSV of (r, t, w) rows and a JSON metadata file next to it"""
        rr, tt = np.meshgrid(self.r, self.t)
        table = np.column_stack([rr.ravel(), tt.ravel(), self.w.ravel()])
        np.savetxt(path, table, delimiter=",", header="r,t,w", comments="", fmt="%.17g")
        meta_path = f"{path}.json"
        with open(meta_path, "w") as fp:
            json.dump(self.to_dict(), fp, indent=2, sort_keys=True, ignore_nan=True)
        return path, meta_path

    @classmethod
    def read_csv(cls, path, space, G=None):
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        r = np.unique(table[:, 0])
        t = np.unique(table[:, 1])
        w = table[:, 2].reshape(t.size, r.size)
        with open(f"{path}.json") as fp:
            meta = json.load(fp)
        return cls(r, t, w, space, G=G, D=meta.get("D"), edge=meta.get("edge", EXTRAPOLATE),
                   R_max=meta.get("R_max"), metadata=meta.get("metadata"))


#  ___      _
# / __| ___| |_ _____ _ _
# \__ \/ _ \ \ V / -_) '_|
# |___/\___/_|\_/\___|_|
#

class _Integrator:
    """Method of lines: Neumann finite-volume Δ_φ plus G, advanced with classic RK4"""

    def __init__(self, space, G, grid):
        self.space = space
        self.G = G
        self.r = grid.r
        self.dr = grid.dr
        self.cfl = grid.cfl
        rho, volumes = space.stencil(grid.nodes, grid.dr)
        faces = np.concatenate([[0.0], rho, [0.0]])
        # Gershgorin bound of the diffusion operator
        self.lam = float(np.max(2.0 * (faces[:-1] + faces[1:]) / (grid.dr * volumes)))
        self.reaction = G is not None and G.family != ZERO

    def rhs(self, t, w):
        lap = weighted_laplacian_radial(self.space, w, self.dr, edge=NEUMANN)
        if not self.reaction:
            return lap
        return lap + self.G(t, self.r, w)

    def dt(self, t, w):
        rate = self.lam
        if self.reaction:
            rate += float(np.max(np.abs(self.G.partial("G_w", t, self.r, w))))
        kappa = self.dr ** 2 / 4.0 * rate
        return self.cfl * self.dr ** 2 / kappa

    def step(self, t, w, dt):
        k1 = self.rhs(t, w)
        k2 = self.rhs(t + 0.5 * dt, w + 0.5 * dt * k1)
        k3 = self.rhs(t + 0.5 * dt, w + 0.5 * dt * k2)
        k4 = self.rhs(t + dt, w + dt * k3)
        return w + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0

    def check(self, t, w):
        if not np.all(np.isfinite(w)):
            raise exceptions.BlowUp(f"non-finite values at t={t}", payload={"t": t})
        j = int(np.argmin(w))
        if w[j] <= defaults.POSITIVITY_FLOOR:
            raise exceptions.PositivityLost(f"w={w[j]:.3e} at r={self.r[j]}, t={t}",
                                            payload={"r": float(self.r[j]), "t": t, "w": float(w[j])})
        j = int(np.argmax(w))
        if w[j] > defaults.BLOW_UP:
            raise exceptions.BlowUp(f"w={w[j]:.3e} at r={self.r[j]}, t={t}",
                                    payload={"r": float(self.r[j]), "t": t, "w": float(w[j])})

    def advance(self, t, w, target, steps=0):
        """Step from t to exactly target; returns (w, steps)"""
        while target - t > 1e-14 * max(1.0, abs(target)):
            dt = self.dt(t, w)
            if dt < defaults.MIN_DT:
                raise exceptions.CFLFailure(f"time step {dt:.3e} below {defaults.MIN_DT} at t={t}",
                                            payload={"t": t, "dt": dt})
            if dt >= target - t:
                dt = target - t
                w = self.step(t, w, dt)
                t = target
            else:
                w = self.step(t, w, dt)
                t += dt
            steps += 1
            if steps > defaults.MAX_STEPS:
                raise exceptions.CFLFailure(f"more than {defaults.MAX_STEPS} steps", payload={"t": t})
            self.check(t, w)
        return w, steps


def _initial_values(initial, space, r):
    if isinstance(initial, str):
        initial = initial_profile(initial, space.n)
    if isinstance(initial, Expression):
        values = evaluate(initial, r=r)
    elif callable(initial):
        values = np.asarray(initial(r), dtype=float)
    else:
        values = np.asarray(initial, dtype=float)
    values = np.broadcast_to(values, r.shape).astype(float)
    if values.shape != r.shape:
        raise exceptions.ConfigException(f"initial data has shape {values.shape}, expected {r.shape}")
    return values


def solve_parabolic(space, G, initial, grid, T, t_start=0.0):
    """
    Solve ∂_t w = Δ_φ w + G(t, x, w) on the padded radial grid

    Args:
        space (ModelSpace): the model space, R_max must cover the padded grid
        G (Nonlinearity): the reaction term, None for the pure drifting heat flow
        initial: an initial profile spec, expression, callable of r or array on the grid
        grid (Grid): the radial grid and time-step policy
        T (float): the length of the run
        t_start (float): the initial time
    Returns:
        SolutionField on grid.nt equally spaced levels of [t_start, t_start + T]
    Raises:
        PositivityLost, BlowUp, CFLFailure
    """
    if not T > 0:
        raise exceptions.ConfigException(f"run length T must be positive, got {T}")
    if grid.R_total > space.R_max * (1 + 1e-12):
        raise exceptions.OutOfDomain(f"grid radius {grid.R_total} exceeds the space radius {space.R_max}")
    if grid.pad < 4.0 * math.sqrt(T):
        logger.warning(f"pad {grid.pad} is below 4 sqrt(T) = {4.0 * math.sqrt(T):.3g}, "
                       f"the far edge may pollute the verified region")
    r = grid.r
    w = _initial_values(initial, space, r)
    integrator = _Integrator(space, G, grid)
    integrator.check(t_start, w)
    times = t_start + np.linspace(0.0, T, grid.nt)
    W = np.empty((grid.nt, r.size))
    DT = np.empty_like(W)
    W[0] = w
    DT[0] = integrator.rhs(t_start, w)
    t, steps = t_start, 0
    for k in range(1, grid.nt):
        w, steps = integrator.advance(t, w, times[k], steps)
        t = times[k]
        W[k] = w
        DT[k] = integrator.rhs(t, w)
        logger.debug(f"solver level {k}/{grid.nt - 1} t={t:.6g} steps={steps}")
    metadata = {
        "space": space.name,
        "nonlinearity": G.name if G is not None else "zero",
        "steps": steps,
        "min_w": float(np.min(W)),
        "grid": grid.to_dict(),
        "T": T,
    }
    return SolutionField(r, times, W, space, G=G, dtw=DT, edge=NEUMANN, R_max=grid.R_max, metadata=metadata)


def solve_elliptic(space, G, guess, grid, tol=defaults.RELAXATION_TOLERANCE, max_time=defaults.RELAXATION_TIME,
                   gradient_ratio=None):
    """
    Stationary solution of Δ_φ w + G(w) = 0 by parabolic relaxation

    Runs the drifting heat flow from the guess until sup |∂_t w| < tol, or, when
    gradient_ratio is given, until sup |∇w| < gradient_ratio * sup w.
    :return: a one-level SolutionField whose dtw holds the stationarity residual
    :raises NoConvergence: when the time budget runs out or the flow blows up,
        the payload carries sup_w and the growth factor of sup w
    """
    r = grid.r
    w = _initial_values(guess, space, r)
    integrator = _Integrator(space, G, grid)
    integrator.check(0.0, w)
    sup0 = float(np.max(w))
    t, steps = 0.0, 0
    chunk = defaults.RELAXATION_CHECK_EVERY * integrator.dt(0.0, w)
    while True:
        residual = integrator.rhs(t, w)
        if float(np.max(np.abs(residual))) < tol:
            break
        if gradient_ratio is not None:
            grad = np.gradient(w, grid.dr, edge_order=2)
            grad[0] = 0.0
            scale = gradient_ratio * float(np.max(w))
            # a flat but growing state is not stationary
            if float(np.max(np.abs(grad))) < scale and float(np.max(np.abs(residual))) < scale:
                break
        if t >= max_time:
            raise exceptions.NoConvergence(f"no stationary state within t={max_time}",
                                           payload={"sup_w": float(np.max(w)), "growth": float(np.max(w)) / sup0,
                                                    "residual": float(np.max(np.abs(residual))), "t": t})
        try:
            w, steps = integrator.advance(t, w, min(t + chunk, max_time), steps)
        except exceptions.BlowUp as e:
            raise exceptions.NoConvergence(f"relaxation blew up: {e.args[0]}",
                                           payload={"sup_w": defaults.BLOW_UP, "growth": defaults.BLOW_UP / sup0,
                                                    "t": (e.payload or {}).get("t")})
        t = min(t + chunk, max_time)
    logger.debug(f"relaxation converged at t={t:.6g} after {steps} steps")
    metadata = {
        "space": space.name,
        "nonlinearity": G.name if G is not None else "zero",
        "steps": steps,
        "relaxation_time": t,
        "growth": float(np.max(w)) / sup0,
        "grid": grid.to_dict(),
    }
    return SolutionField(r, [t], w[None, :], space, G=G, dtw=residual[None, :], edge=NEUMANN, R_max=grid.R_max,
                         metadata=metadata)


def derived_fields(sol, D=None, region=None):
    """
    Attach the bound D and precompute ∇w, Δ_φ w, ∂_t w and f

    :param D: a number, "auto" for (1 + defaults.D_INFLATION) sup w, or None
    :param region: the cylinder on which w <= D is required, the verified radius by default
    :raises BoundViolated: when w > D on the region
    """
    if np.any(~(sol.w > 0)):
        raise exceptions.NonPositiveSolution("derived fields need a positive solution",
                                             payload={"min_w": float(np.min(sol.w))})
    if D is not None:
        sup = sol.sup(region)
        if D == "auto":
            D = (1.0 + defaults.D_INFLATION) * sup
        D = float(D)
        if sup > D:
            raise exceptions.BoundViolated(f"sup w = {sup} exceeds D = {D}", payload={"sup_w": sup, "D": D})
    field = sol.with_bound(D if D is not None else sol.D)
    for name in ("grad_w", "lap_w", "G_values"):
        getattr(field, name)
    return field


def comparison_gap(lower, upper):
    """max of w_lower - w_upper over all stored levels, <= 0 when the ordering is kept"""
    if lower.w.shape != upper.w.shape:
        raise exceptions.ConfigException("solutions live on different grids")
    return float(np.max(lower.w - upper.w))
