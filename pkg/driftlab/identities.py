"""
Residual checks of the pointwise identities behind the estimates.

Identities on closed-form radial expressions can be checked on the analytic path
(exact symbolic derivatives, residual at roundoff) or on the discrete path
(grid derivatives at several spacings, with an observed convergence order).
Evolution identities along solutions are always discrete.
"""
import logging
import math

import numpy as np
from munch import Munch

from driftlab import defaults, exceptions
from driftlab.expressions import Expression, call, derivative, evaluate, neg, parse
from driftlab.geometry import (RIC_PHI, RIC_PHI_M, curvature_lower_bound, parse_m, ricci_eigenvalues,
                               ricci_minimum, sample_lattice, weighted_laplacian_radial)
from driftlab.nonlinearity import check_parameter_order
from driftlab.solver import derived_fields

logger = logging.getLogger(__name__)

ANALYTIC = "analytic"
DISCRETE = "discrete"
EXACT_RESIDUAL = defaults.EXACT_RESIDUAL
DISCRETE_LEVELS = (0.1, 0.05, 0.025)


def _expression(u, variables=("r",)):
    if isinstance(u, Expression):
        return u
    return parse(str(u), variables)


def _d1(u, dr):
    return np.gradient(u, dr, axis=-1, edge_order=2)


def _d2(u, dr):
    return _d1(_d1(u, dr), dr)


def _dt(q, t):
    if np.size(t) < 3:
        raise exceptions.GridTooCoarse("time derivatives need at least three stored levels")
    return np.gradient(q, t, axis=0, edge_order=2)


def _band(r, R):
    lo, hi = defaults.RESIDUAL_BAND
    return (r >= lo * R - 1e-12) & (r <= hi * R + 1e-12)


def _order(levels):
    """Observed order between the two finest levels, None when the residual is roundoff"""
    orders = []
    for coarse, fine in zip(levels, levels[1:]):
        if coarse.max_residual <= EXACT_RESIDUAL or fine.max_residual <= EXACT_RESIDUAL:
            orders.append(None)
            continue
        orders.append(math.log(coarse.max_residual / fine.max_residual) / math.log(coarse.dr / fine.dr))
    return orders


def residual_report(identity, path, levels, terms=None, **extra):
    """
    Assemble a ResidualReport

    :param levels: list of Munch(dr, max_residual), coarsest first
    :return: Munch(identity, path, levels, order, orders, exact, flagged, terms, ...)
    """
    levels = sorted(levels, key=lambda level: -level.dr)
    orders = _order(levels)
    order = orders[-1] if orders else None
    exact = all(level.max_residual <= EXACT_RESIDUAL for level in levels)
    lo, hi = defaults.ORDER_RANGE
    flagged = order is not None and not (lo <= order <= hi)
    if flagged:
        logger.warning(f"{identity}: observed order {order:.3f} outside [{lo}, {hi}]")
    report = Munch(identity=identity, path=path, levels=levels, order=order, orders=orders, exact=exact,
                   flagged=flagged, terms=Munch(terms or {}))
    report.update(extra)
    return report


def _max_abs(values):
    return float(np.max(np.abs(values))) if np.size(values) else 0.0


def _radial_grid(space, dr, radius):
    radius = space.R_max if radius is None else float(radius)
    if radius > space.R_max * (1 + 1e-12):
        raise exceptions.OutOfDomain(f"radius {radius} exceeds the space radius {space.R_max}")
    nodes = int(round(radius / dr)) + 1
    r = dr * np.arange(nodes)
    if np.count_nonzero(_band(r, r[-1])) < defaults.VERIFY_MIN_NODES:
        raise exceptions.GridTooCoarse(f"spacing {dr} leaves fewer than {defaults.VERIFY_MIN_NODES} band nodes")
    return r


def _sample(expr, **env):
    shape = np.broadcast(*[np.asarray(v) for v in env.values()]).shape
    return np.broadcast_to(evaluate(expr, **env), shape).astype(float)


def _analytic_band(space, radius):
    radius = space.R_max if radius is None else float(radius)
    lo, hi = defaults.RESIDUAL_BAND
    return sample_lattice(lo * radius, hi * radius, defaults.SAMPLE_SPACING)


def _drift(space, r):
    return space.psi(r, 1) / space.psi(r)


def _hessian_norm(space, d1, d2, r):
    """|∇∇u|^2 of a radial function: u''^2 + (n-1) (u' psi'/psi)^2"""
    return d2 ** 2 + (space.n - 1) * (d1 * _drift(space, r)) ** 2


#  ___ _        _   _
# / __| |_ __ _| |_(_)__
# \__ \  _/ _` |  _| / _|
# |___/\__\__,_|\__|_\__|
#

def bochner_residual(space, u, path=DISCRETE, levels=DISCRETE_LEVELS, radius=None):
    """
    Residual of ½ Δ_φ |∇u|^2 = |∇∇u|^2 + <∇u, ∇Δ_φ u> + Ric_φ(∇u, ∇u) for a radial u

    Args:
        space (ModelSpace): the model space
        u (Expression|str): the radial function, an expression in r
        path (str): "analytic" for symbolic derivatives, "discrete" for grid derivatives
        levels (tuple): grid spacings of the discrete path
        radius (float): outer radius of the sampled domain, the space radius by default
    Returns:
        a ResidualReport
    """
    u = _expression(u)
    if path == ANALYTIC:
        r = _analytic_band(space, radius)
        u1, u2 = derivative(u, "r"), derivative(u, "r", 2)
        lap = space.laplacian_expression(u)
        lhs = 0.5 * _sample(space.laplacian_expression(u1 * u1), r=r)
        d1 = _sample(u1, r=r)
        ric = ricci_eigenvalues(space, r).ric_phi_radial
        rhs = _hessian_norm(space, d1, _sample(u2, r=r), r) + d1 * _sample(derivative(lap, "r"), r=r) + ric * d1 ** 2
        found = [Munch(dr=defaults.SAMPLE_SPACING, max_residual=_max_abs(lhs - rhs))]
        return residual_report("bochner", ANALYTIC, found)
    found = []
    for dr in levels:
        r = _radial_grid(space, dr, radius)
        band = _band(r, r[-1])
        values = _sample(u, r=r)
        d1, d2 = _d1(values, dr), _d2(values, dr)
        lap = weighted_laplacian_radial(space, values, dr)
        lhs = 0.5 * weighted_laplacian_radial(space, d1 ** 2, dr)
        rb = r[band]
        ric = ricci_eigenvalues(space, rb).ric_phi_radial
        rhs = _hessian_norm(space, d1[band], d2[band], rb) + d1[band] * _d1(lap, dr)[band] + ric * d1[band] ** 2
        found.append(Munch(dr=dr, max_residual=_max_abs(lhs[band] - rhs)))
    return residual_report("bochner", DISCRETE, found)


def cd_condition_check(space, u, k, m=None, region=None):
    """
    Pointwise margin of the curvature-dimension condition Γ2(u,u) >= (Δ_φ u)^2/m + k Γ(u,u)

    k is signed here: the check assumes Ric_φ^m >= k g (Ric_φ >= k g when m is infinite).
    :return: Munch(margin, worst_r, k, m, flavor)
    :raises HypothesisUnverified: when the sampled curvature goes below k
    """
    u = _expression(u)
    m = space.m if m is None else parse_m(m)
    flavor = RIC_PHI if math.isinf(m) else RIC_PHI_M
    lo, hi = region or (defaults.RADIAL_FLOOR, space.R_max)
    low, where = ricci_minimum(space, flavor, (lo, hi), m=m)
    if k > low + defaults.MARGIN_TOLERANCE * max(1.0, abs(low)):
        raise exceptions.HypothesisUnverified(f"{flavor} >= {k} fails: minimum {low} at r={where}",
                                              payload={"k": k, "minimum": low, "r": where})
    r = np.unique(np.clip(sample_lattice(lo, hi, defaults.SAMPLE_SPACING), defaults.RADIAL_FLOOR, space.R_max))
    d1 = _sample(derivative(u, "r"), r=r)
    d2 = _sample(derivative(u, "r", 2), r=r)
    lap = _sample(space.laplacian_expression(u), r=r)
    ric = ricci_eigenvalues(space, r).ric_phi_radial
    gamma_two = _hessian_norm(space, d1, d2, r) + ric * d1 ** 2
    margin = gamma_two - k * d1 ** 2
    if not math.isinf(m):
        margin = margin - lap ** 2 / m
    i = int(np.argmin(margin))
    return Munch(margin=float(margin[i]), worst_r=float(r[i]), k=float(k), m=m, flavor=flavor)


def exp_laplacian_identity(space, f, path=DISCRETE, levels=DISCRETE_LEVELS, radius=None):
    """Residual of Δ_φ e^(-f) = -e^(-f) (Δ_φ f - |∇f|^2)"""
    f = _expression(f)
    if path == ANALYTIC:
        r = _analytic_band(space, radius)
        ef = np.exp(-_sample(f, r=r))
        lhs = _sample(space.laplacian_expression(call("exp", neg(f))), r=r)
        rhs = -ef * (_sample(space.laplacian_expression(f), r=r) - _sample(derivative(f, "r"), r=r) ** 2)
        return residual_report("exp_laplacian", ANALYTIC,
                               [Munch(dr=defaults.SAMPLE_SPACING, max_residual=_max_abs(lhs - rhs))])
    found = []
    for dr in levels:
        r = _radial_grid(space, dr, radius)
        band = _band(r, r[-1])
        values = _sample(f, r=r)
        ef = np.exp(-values)
        lhs = weighted_laplacian_radial(space, ef, dr)
        rhs = -ef * (weighted_laplacian_radial(space, values, dr) - _d1(values, dr) ** 2)
        found.append(Munch(dr=dr, max_residual=_max_abs((lhs - rhs)[band])))
    return residual_report("exp_laplacian", DISCRETE, found)


def product_rule_residual(space, eta, H, times=(0.5, 1.0), radius=None):
    """
    Residual of the product rule for the weighted heat operator P = Δ_φ - ∂_t:
    P(ηH) = η PH + 2 [<∇η, ∇(ηH)> - |∇η|^2 H] / η + H Pη, for radial η(r, t) > 0 and H(r, t)
    """
    eta = _expression(eta, ("r", "t"))
    H = _expression(H, ("r", "t"))

    def heat(q):
        return space.laplacian_expression(q) - derivative(q, "t")

    r = _analytic_band(space, radius)
    rr, tt = np.meshgrid(r, np.linspace(times[0], times[1], 11))
    eta_values = _sample(eta, r=rr, t=tt)
    if np.any(~(eta_values > 0)):
        raise exceptions.DomainViolation("the cutoff factor must be positive on the sampled band")
    product = eta * H
    eta_r = _sample(derivative(eta, "r"), r=rr, t=tt)
    lhs = _sample(heat(product), r=rr, t=tt)
    rhs = (eta_values * _sample(heat(H), r=rr, t=tt)
           + 2.0 * (eta_r * _sample(derivative(product, "r"), r=rr, t=tt)
                    - eta_r ** 2 * _sample(H, r=rr, t=tt)) / eta_values
           + _sample(H, r=rr, t=tt) * _sample(heat(eta), r=rr, t=tt))
    return residual_report("product_rule", ANALYTIC,
                           [Munch(dr=defaults.SAMPLE_SPACING, max_residual=_max_abs(lhs - rhs))])


def quadratic_lemma_check(samples=defaults.QUADRATIC_SAMPLES, seed=defaults.QUADRATIC_SEED, ranges=None):
    """
    Sweep the scalar inequality used to close the Li-Yau estimate over random admissible tuples

    The inequality, for y > 0, alpha > 1, eps in (0, 1) and y - alpha z > 0:
    (y-z)^2 - (m c1/R) sqrt(y) (y - alpha z) - m a y - m b sqrt(y)
        >= (y - alpha z)^2/alpha^2 - (m c1/R)^2 alpha^2 (y - alpha z)/(8(alpha-1))
           - alpha^2 m^2 a^2/(4(1-eps)(alpha-1)^2) - (3/4) [m^4 b^4 alpha^2/(4 eps (alpha-1)^2)]^(1/3)
    :param ranges: dict of (lo, hi) for y, s, alpha, eps, m, c1, R, a, b; z = (y - s)/alpha with s in (0, 1]
        times y so that y - alpha z = s y > 0
    :return: Munch(samples, violations, worst_margin, worst)
    """
    bounds = {"y": (1e-3, 1e2), "s": (1e-3, 1.0), "alpha": (1.0 + 1e-3, 10.0), "eps": (1e-3, 1.0 - 1e-3),
              "m": (2.0, 10.0), "c1": (0.0, 10.0), "R": (0.5, 50.0), "a": (-5.0, 5.0), "b": (-5.0, 5.0)}
    bounds.update(ranges or {})
    rng = np.random.default_rng(seed)
    x = Munch({name: rng.uniform(lo, hi, samples) for name, (lo, hi) in bounds.items()})
    y, alpha, eps, m, c1, R, a, b = x.y, x.alpha, x.eps, x.m, x.c1, x.R, x.a, x.b
    gap = x.s * y
    z = (y - gap) / alpha
    lhs = (y - z) ** 2 - (m * c1 / R) * np.sqrt(y) * gap - m * a * y - m * b * np.sqrt(y)
    rhs = (gap ** 2 / alpha ** 2
           - (m * c1 / R) ** 2 * alpha ** 2 * gap / (8.0 * (alpha - 1.0))
           - alpha ** 2 * m ** 2 * a ** 2 / (4.0 * (1.0 - eps) * (alpha - 1.0) ** 2)
           - 0.75 * np.cbrt(m ** 4 * b ** 4 * alpha ** 2 / (4.0 * eps * (alpha - 1.0) ** 2)))
    margin = lhs - rhs
    scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    violations = int(np.count_nonzero(margin < -1e-12 * scale))
    i = int(np.argmin(margin / scale))
    return Munch(
        samples=int(samples),
        violations=violations,
        worst_margin=float(margin[i]),
        worst=Munch({name: float(values[i]) for name, values in x.items()}, z=float(z[i])),
    )


#  ___          _      _   _
# | __|_ _____ | |_  _| |_(_)___ _ _
# | _|\ V / _ \| | || |  _| / _ \ ' \
# |___|\_/\___/|_|\_,_|\__|_\___/_||_|
#

def _levels(solutions):
    if not isinstance(solutions, (list, tuple)):
        solutions = [solutions]
    if not solutions:
        raise exceptions.InsufficientData("no solution levels given")
    return sorted(solutions, key=lambda sol: -sol.dr)


class _Window:
    """Discrete derivatives of a solution with the residual window: band radii, interior levels"""

    def __init__(self, sol):
        self.sol = sol
        self.space = sol.space
        self.dr = sol.dr
        self.t = sol.t
        self.cols = _band(sol.r, sol.R_max)
        self.rows = np.zeros(sol.levels, dtype=bool)
        self.rows[1:-1] = True
        if sol.levels < 3:
            raise exceptions.GridTooCoarse("evolution identities need at least three stored levels")
        if np.count_nonzero(self.cols) < defaults.VERIFY_MIN_NODES:
            raise exceptions.GridTooCoarse(f"fewer than {defaults.VERIFY_MIN_NODES} radial nodes in the band")
        self.r = sol.r[self.cols]
        self.tt = self.t[self.rows][:, None]
        eigen = ricci_eigenvalues(self.space, self.r)
        self.ric_phi = eigen.ric_phi_radial[None, :]
        self.ric_phi_m = eigen.ric_phi_m_radial[None, :]
        self.drift = _drift(self.space, self.r)[None, :]

    def d1(self, q):
        return _d1(q, self.dr)

    def d2(self, q):
        return _d2(q, self.dr)

    def lap(self, q):
        return weighted_laplacian_radial(self.space, q, self.dr)

    def dt(self, q):
        return _dt(q, self.t)

    def cut(self, q):
        """Restrict a full field to the residual window"""
        q = np.asarray(q)
        if q.ndim == 2:
            return q[np.ix_(self.rows, self.cols)]
        return q

    def partials(self):
        sol = self.sol
        t = sol.t[:, None] * np.ones_like(sol.r)[None, :]
        r = np.ones_like(sol.t)[:, None] * sol.r[None, :]
        if sol.G is None:
            zero = np.zeros_like(sol.w)
            return Munch(G=zero, G_w=zero, G_x=zero, G_ww=zero, G_xw=zero, G_xx=zero, t=t, r=r)
        p = sol.G.partials(t, r, sol.w)
        p = Munch({k: np.broadcast_to(v, sol.w.shape) for k, v in p.items()})
        p.t, p.r = t, r
        return p

    def hessian_norm(self, d1, d2):
        return d2 ** 2 + (self.space.n - 1) * (d1 * self.drift) ** 2


def _collect_levels(solutions, residual):
    found, terms = [], None
    for sol in _levels(solutions):
        value, terms = residual(sol)
        found.append(Munch(dr=sol.dr, max_residual=_max_abs(value)))
    return found, {name: _max_abs(v) for name, v in (terms or {}).items()}


def h_evolution_residual(solutions, D="auto"):
    """
    Residual of ∂_t h = Δ_φ h + |∇h|^2 + G/w for h = log(w/D)

    :param solutions: a SolutionField or a list of them at different spacings
    :param D: the bound attached through derived_fields, "auto" by default
    :raises BoundViolated: when w exceeds D
    """
    def residual(sol):
        sol = derived_fields(sol, D=D if D is not None else sol.D)
        if sol.D is None:
            raise exceptions.BoundViolated("h = log(w/D) needs a bound D")
        win = _Window(sol)
        p = win.partials()
        h = sol.h
        value = win.dt(h) - win.lap(h) - win.d1(h) ** 2 - p.G / sol.w
        return win.cut(value), None

    found, _ = _collect_levels(solutions, residual)
    return residual_report("h_evolution", DISCRETE, found)


def H_evolution_residual(solutions, D="auto"):
    """
    Residual of the evolution of H = |∇h|^2 / (1-h)^2 under the weighted heat operator

    [Δ_φ - ∂_t] H = 2 Ric_φ(∇h,∇h)/(1-h)^2 + 2h <∇h,∇H>/(1-h) + 2(1-h) H^2
        + 2 |∇²h/(1-h) + ∇h⊗∇h/(1-h)^2|^2 - 2 <∇h, G_x>/(w (1-h)^2) - 2H [G_w + h G/(w (1-h))]

    Every right-hand term is reported in terms (max |value| on the finest level).
    """
    def residual(sol):
        sol = derived_fields(sol, D=D if D is not None else sol.D)
        if sol.D is None:
            raise exceptions.BoundViolated("H needs a bound D")
        win = _Window(sol)
        p = win.partials()
        h = sol.h
        a = 1.0 - h
        h1, h2 = win.d1(h), win.d2(h)
        H = h1 ** 2 / a ** 2
        lhs = win.lap(H) - win.dt(H)
        c = win.cut
        h1c, h2c, ac, Hc, hc, w = c(h1), c(h2), c(a), c(H), c(h), c(sol.w)
        terms = Munch(
            ricci=2.0 * win.ric_phi * h1c ** 2 / ac ** 2,
            transport=2.0 * hc * h1c * c(win.d1(H)) / ac,
            quadratic=2.0 * ac * Hc ** 2,
            hessian=2.0 * ((h2c / ac + h1c ** 2 / ac ** 2) ** 2 + (win.space.n - 1) * (h1c * win.drift / ac) ** 2),
            forcing_x=-2.0 * h1c * c(p.G_x) / (w * ac ** 2),
            forcing_w=-2.0 * Hc * (c(p.G_w) + hc * c(p.G) / (w * ac)),
        )
        return c(lhs) - sum(terms.values()), terms

    found, terms = _collect_levels(solutions, residual)
    return residual_report("H_evolution", DISCRETE, found, terms=terms)


def F_beta_evolution_residual(solutions, alpha, beta):
    """
    Residual of the evolution of F = f^beta |∇f|^2, f = w^(1/alpha)

    [Δ_φ - ∂_t] F = 2 f^beta Ric_φ(∇f,∇f) + 2(1-alpha+beta) f^(beta-1) <∇f, ∇|∇f|^2>
        + 2 f^beta |∇∇f|^2 - [2 - beta^2 - alpha(2-beta)] F^2/f^(beta+2)
        - {2 f^alpha G_w - [2 - (2+beta)/alpha] G} F/f^alpha - (2/alpha) f^(beta+1-alpha) <∇f, G_x>
    """
    check_parameter_order(alpha, beta)

    def residual(sol):
        win = _Window(sol)
        p = win.partials()
        f = sol.w ** (1.0 / alpha)
        f1, f2 = win.d1(f), win.d2(f)
        Q = f1 ** 2
        F = f ** beta * Q
        lhs = win.lap(F) - win.dt(F)
        c = win.cut
        fc, f1c, Fc, w = c(f), c(f1), c(F), c(sol.w)
        terms = Munch(
            ricci=2.0 * fc ** beta * win.ric_phi * f1c ** 2,
            transport=2.0 * (1.0 - alpha + beta) * fc ** (beta - 1.0) * f1c * c(win.d1(Q)),
            hessian=2.0 * fc ** beta * win.hessian_norm(f1c, c(f2)),
            quadratic=-(2.0 - beta ** 2 - alpha * (2.0 - beta)) * Fc ** 2 / fc ** (beta + 2.0),
            forcing_w=-(2.0 * w * c(p.G_w) - (2.0 - (2.0 + beta) / alpha) * c(p.G)) * Fc / w,
            forcing_x=-(2.0 / alpha) * fc ** (beta + 1.0 - alpha) * f1c * c(p.G_x),
        )
        return c(lhs) - sum(terms.values()), terms

    found, terms = _collect_levels(solutions, residual)
    return residual_report("F_beta_evolution", DISCRETE, found, terms=terms, alpha=alpha, beta=beta)


def liyau_F_evolution_residual(solutions, alpha, m=None):
    """
    Residual of the evolution of the Harnack quantity F = t [|∇f|^2 - alpha ∂_t f + alpha e^(-f) G], f = log w

    [Δ_φ - ∂_t] F = 2t |∇∇f|^2 - 2 <∇f, ∇F> + 2t Ric_φ^m(∇f,∇f) + 2t <∇φ,∇f>^2/(m-n)
        - F/t + 2t(alpha-1) <∇f, ∇(e^(-f) G)> + alpha t Δ_φ(e^(-f) G)

    For finite m the report also carries slack_min, the smallest pointwise slack of the
    lower bound 2t (Δ_φ f)^2/m - 2t(m-1)k |∇f|^2 for the curvature-only part, with k certified on the band.
    :raises NeedFiniteM: when m = n with a non-constant potential
    """
    def residual(sol):
        space = sol.space
        mm = space.m if m is None else parse_m(m)
        if mm == space.n and not space.is_constant_potential():
            raise exceptions.NeedFiniteM("m = n needs a constant potential")
        win = _Window(sol)
        p = win.partials()
        f = np.log(sol.w)
        f1, f2 = win.d1(f), win.d2(f)
        psi_G = p.G / sol.w
        F = sol.F_LY(alpha)
        lhs = win.lap(F) - win.dt(F)
        c = win.cut
        t = win.tt
        f1c = c(f1)
        hessian = win.hessian_norm(f1c, c(f2))
        if math.isinf(mm) or mm == space.n:
            curvature = 2.0 * t * win.ric_phi * f1c ** 2
            potential = np.zeros_like(curvature)
        else:
            curvature = 2.0 * t * win.ric_phi_m * f1c ** 2
            potential = 2.0 * t * (space.phi(win.r, 1)[None, :] * f1c) ** 2 / (mm - space.n)
        terms = Munch(
            hessian=2.0 * t * hessian,
            transport=-2.0 * f1c * c(win.d1(F)),
            curvature=curvature,
            potential=potential,
            decay=-c(F) / t,
            forcing_gradient=2.0 * t * (alpha - 1.0) * f1c * c(win.d1(psi_G)),
            forcing_laplacian=alpha * t * c(win.lap(psi_G)),
        )
        extra = {}
        if not math.isinf(mm):
            band = (float(win.r[0]), float(win.r[-1]))
            k = curvature_lower_bound(space, RIC_PHI_M, band, m=mm).k
            lap_f = c(f2) + (space.laplacian_of_r(win.r)[None, :]) * f1c
            slack = (2.0 * t * hessian + curvature + potential
                     - 2.0 * t * lap_f ** 2 / mm + 2.0 * t * (mm - 1.0) * k * f1c ** 2)
            extra["slack_min"] = float(np.min(slack))
        return c(lhs) - sum(terms.values()), terms, extra

    found, terms, extra = [], None, {}
    for sol in _levels(solutions):
        value, terms, extra = residual(sol)
        found.append(Munch(dr=sol.dr, max_residual=_max_abs(value)))
    terms = {name: _max_abs(v) for name, v in terms.items()}
    slack_min = extra.get("slack_min")
    return residual_report("liyau_F_evolution", DISCRETE, found, terms=terms, alpha=alpha, slack_min=slack_min,
                           slack_ok=None if slack_min is None else slack_min >= -defaults.MARGIN_TOLERANCE)


def delta_phi_G_identity_residual(solutions):
    """
    Residual of the chain rule for x -> G(t, x, w(x)) with f = log w:
    Δ_φ G = Δ_φ G^x + 2 e^f <G_xw, ∇f> + e^f |∇f|^2 (G_w + e^f G_ww) + e^f G_w Δ_φ f,
    where Δ_φ G^x is the Laplacian of G at frozen w.
    """
    def residual(sol):
        if sol.G is None:
            raise exceptions.ConfigException("the chain rule check needs a nonlinearity on the solution")
        win = _Window(sol)
        p = win.partials()
        f = np.log(sol.w)
        f1 = win.d1(f)
        lhs = win.lap(p.G)
        c = win.cut
        w = c(sol.w)
        frozen = sol.G.frozen_laplacian(sol.space, c(p.t), c(p.r), w)
        f1c = c(f1)
        terms = Munch(
            frozen=frozen,
            mixed=2.0 * w * c(p.G_xw) * f1c,
            gradient=w * f1c ** 2 * (c(p.G_w) + w * c(p.G_ww)),
            laplacian=w * c(p.G_w) * c(win.lap(f)),
        )
        return c(lhs) - sum(terms.values()), terms

    found, terms = _collect_levels(solutions, residual)
    return residual_report("delta_phi_G", DISCRETE, found, terms=terms)


IDENTITIES = {
    "bochner": bochner_residual,
    "exp_laplacian": exp_laplacian_identity,
    "product_rule": product_rule_residual,
    "h_evolution": h_evolution_residual,
    "H_evolution": H_evolution_residual,
    "F_beta_evolution": F_beta_evolution_residual,
    "liyau_F_evolution": liyau_F_evolution_residual,
    "delta_phi_G": delta_phi_G_identity_residual,
}
