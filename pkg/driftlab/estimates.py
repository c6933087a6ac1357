import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from munch import Munch

from driftlab import defaults, exceptions
from driftlab.cutoff import build_spatial_cutoff
from driftlab.geometry import RIC_PHI, RIC_PHI_M, certify_curvature, gamma_delta_phi, parse_m, radial_distance
from driftlab.nonlinearity import (check_parameter_order, gamma_quantities, hamilton_sup_terms,
                                   souplet_zhang_sup_terms)
from driftlab.predicates import CURVATURE, liouville_predicate
from driftlab.solver import Cylinder, Grid, solve_elliptic

logger = logging.getLogger(__name__)

SOUPLET_ZHANG = "SoupletZhang"
SOUPLET_ZHANG_GLOBAL = "SoupletZhangGlobal"
HAMILTON = "Hamilton"
HAMILTON_GLOBAL = "HamiltonGlobal"
LI_YAU = "LiYau"
LI_YAU_GLOBAL = "LiYauGlobal"
ELLIPTIC_HARNACK = "EllipticHarnack"
PARABOLIC_HARNACK = "ParabolicHarnack"
ELLIPTIC_GLOBAL = "EllipticGlobal"

KINDS = (SOUPLET_ZHANG, SOUPLET_ZHANG_GLOBAL, HAMILTON, HAMILTON_GLOBAL, LI_YAU, LI_YAU_GLOBAL,
         ELLIPTIC_HARNACK, PARABOLIC_HARNACK, ELLIPTIC_GLOBAL)

CONSISTENT = "consistent"
INCONSISTENT = "inconsistent"
NONEXISTENCE = "consistent with nonexistence"
NOT_APPLICABLE = "not-applicable"


def estimate_report(kind, params, lhs_max, rhs_terms, margin, verification_set, argmin=None, empirical_C=None,
                    holds=None, **extra):
    """
    An EstimateReport

    :return: Munch(kind, params, lhs_max, rhs_terms, margin, empirical_C, verification_set, argmin, holds, ...)
    """
    report = Munch(
        kind=kind,
        params=Munch(params),
        lhs_max=float(lhs_max),
        rhs_terms=Munch({name: float(value) for name, value in rhs_terms.items()}),
        margin=float(margin),
        empirical_C=None if empirical_C is None else float(empirical_C),
        verification_set=verification_set,
        argmin=argmin,
        holds=bool(margin >= -defaults.MARGIN_TOLERANCE) if holds is None else bool(holds),
    )
    report.update(extra)
    return report


def _point(sel, index):
    i, j = np.unravel_index(index, sel.w.shape)
    return Munch(r=float(sel.r[i, j]), t=float(sel.t[i, j]))


def _window(sol):
    """(t0, T) of the cylinder Q_{R,T} spanned by the stored levels"""
    return float(sol.t[-1]), float(sol.t[-1] - sol.t[0])


def _cylinders(sol, R, cylinder, global_variant):
    """The outer cylinder of the sups and the inner verification cylinder"""
    t0, T = _window(sol)
    if global_variant:
        outer = cylinder.with_radius(sol.R_max) if cylinder is not None else Cylinder.Q(sol.R_max, T, t0)
        return outer, Cylinder(0.0, outer.R, outer.t_lo, outer.t_hi, flavor=outer.flavor, open_start=True)
    if R is None and cylinder is None:
        raise exceptions.ConfigException("a local estimate needs the radius R or a cylinder")
    outer = cylinder if cylinder is not None else Cylinder.Q(R, T, t0)
    return outer, outer.shrink(0.5)


def _curvature(space, flavor, region, k, m=None):
    try:
        return certify_curvature(space, flavor, region, k=k, m=m)
    except exceptions.NeedFiniteM as e:
        raise exceptions.HypothesisUnverified(str(e))


def _resolve_D(sol, D, outer):
    sup = float(np.max(outer.select(sol).w))
    if D is None or D == "auto":
        return (1.0 + defaults.D_INFLATION) * sup
    D = float(D)
    if sup > D:
        raise exceptions.BoundViolated(f"sup w = {sup} exceeds D = {D}", payload={"sup_w": sup, "D": D})
    return D


def _elliptic_bracket_terms(sol, space, outer, k, global_variant, drop_gamma_term, m):
    """The geometric part of the elliptic-type brackets, each term nonnegative"""
    if drop_gamma_term and not global_variant:
        _curvature(space, RIC_PHI_M, (0.0, outer.R), None, m=m if m is not None else space.m)
    terms = Munch(sqrt_k=math.sqrt(k))
    if not global_variant:
        terms.inv_R = 1.0 / outer.R
        terms.gamma_delta_phi = 0.0 if drop_gamma_term else math.sqrt(max(gamma_delta_phi(space), 0.0) / outer.R)
    return terms


#  ___ _ _ _      _   _         _
# | __| | (_)_ __| |_(_)__   __| |_ _  _ _ __  ___
# | _|| | | | '_ \  _| / _| |_ _| | || | '_ \/ -_)
# |___|_|_|_| .__/\__|_\__|   |_|_|\_, | .__/\___|
#           |_|                    |__/|_|

def souplet_zhang_check(sol, space, G, D="auto", R=None, cylinder=None, C=None, k=None, global_variant=False,
                        drop_gamma_term=False, m=None):
    """
    Souplet-Zhang gradient estimate |∇w|/w <= C (1 - log(w/D)) {bracket}

    Without C the check runs in structural mode: the report carries empirical_C, the least
    constant making the inequality hold on the verification set, and the margin at C = 1.
    With C the inequality itself is asserted.
    Raises:
        BoundViolated: w > D on the outer cylinder
        HypothesisUnverified: the curvature bound k is not certified
    """
    G = G if G is not None else sol.G
    outer, inner = _cylinders(sol, R, cylinder, global_variant)
    k = _curvature(space, RIC_PHI, (0.0, outer.R), k)
    D = _resolve_D(sol, D, outer)
    terms = _elliptic_bracket_terms(sol, space, outer, k, global_variant, drop_gamma_term, m)
    if G is None:
        term_x, term_w = 0.0, 0.0
    else:
        term_x, term_w = souplet_zhang_sup_terms(G, sol, outer, D)
    terms.G_x, terms.G_w = term_x, term_w
    sel = inner.select(sol)
    grad = inner.select(sol, sol.grad_w).w
    lhs = np.abs(grad) / sel.w
    factor = 1.0 - np.log(sel.w / D)
    time = 1.0 / np.sqrt(sel.t - outer.t_lo)
    unit = factor * (sum(terms.values()) + time)
    return _structural(SOUPLET_ZHANG_GLOBAL if global_variant else SOUPLET_ZHANG, sel, lhs, unit, C,
                       dict(terms, time=float(np.max(time)), log_factor=float(np.max(factor))),
                       params=dict(D=D, R=outer.R, T=outer.T, t0=outer.t_hi, k=k, C=C,
                                   drop_gamma_term=drop_gamma_term),
                       verification_set=inner.to_dict())


def _structural(kind, sel, lhs, unit, C, rhs_terms, params, verification_set):
    ratio = lhs / unit
    empirical = float(np.max(ratio))
    constant = 1.0 if C is None else float(C)
    margin = constant * unit - lhs
    worst = int(np.argmin(margin)) if C is not None else int(np.argmax(ratio))
    if C is None:
        holds = bool(np.isfinite(empirical))
        mode = "structural"
    else:
        holds = bool(np.min(margin) >= -defaults.MARGIN_TOLERANCE)
        mode = "fixed"
    logger.debug(f"{kind}: empirical C={empirical:.6g} mode={mode}")
    return estimate_report(kind, params, np.max(lhs), rhs_terms, np.min(margin), verification_set,
                           argmin=_point(sel, worst), empirical_C=empirical, holds=holds, mode=mode,
                           table=Munch(r=sel.r.ravel(), t=sel.t.ravel(), lhs=lhs.ravel(),
                                       rhs=(constant * unit).ravel()))


def elliptic_harnack_check(sol, space, G, pairs, t, D="auto", R=None, C=None, calibration=None, cylinder=None, k=None,
                           global_variant=False):
    """
    Elliptic Harnack inequality w(x1,t)/(eD) <= [w(x2,t)/(eD)]^a with a = exp(-d C {bracket})

    The constant comes from C, or from a calibration (calibrate_constant result or a
    Souplet-Zhang report with an empirical constant). Margins are in log coordinates.
    :param pairs: radial pairs (r1, r2), or ((r1, ray1), (r2, ray2))
    :raises MissingCalibration: without a constant
    """
    G = G if G is not None else sol.G
    if C is None and calibration is not None:
        C = calibration.get("C_min", calibration.get("empirical_C"))
    if C is None:
        raise exceptions.MissingCalibration("the Harnack exponent needs a calibrated Souplet-Zhang constant")
    outer, inner = _cylinders(sol, R, cylinder, global_variant)
    if not inner.t_lo < t <= inner.t_hi + 1e-12:
        raise exceptions.OutOfDomain(f"time {t} outside ({inner.t_lo}, {inner.t_hi}]", payload={"t": t})
    k = _curvature(space, RIC_PHI, (0.0, outer.R), k)
    D = _resolve_D(sol, D, outer)
    terms = _elliptic_bracket_terms(sol, space, outer, k, global_variant, False, None)
    terms.G_x, terms.G_w = souplet_zhang_sup_terms(G, sol, outer, D) if G is not None else (0.0, 0.0)
    terms.time = 1.0 / math.sqrt(t - outer.t_lo)
    bracket = sum(terms.values())
    results = []
    for pair in pairs:
        (r1, ray1), (r2, ray2) = [p if isinstance(p, (tuple, list)) else (p, 1) for p in pair]
        for r in (r1, r2):
            if r > inner.R + 1e-12:
                raise exceptions.OutOfDomain(f"radius {r} outside the ball of radius {inner.R}", payload={"r": r})
        d = radial_distance(r1, r2, ray1, ray2)
        exponent = math.exp(-d * C * bracket)
        lhs = math.log(sol.value_at(r1, t) / (math.e * D))
        rhs = exponent * math.log(sol.value_at(r2, t) / (math.e * D))
        results.append(Munch(r1=r1, r2=r2, d=d, exponent=exponent, lhs=lhs, rhs=rhs, margin=rhs - lhs))
    worst = min(results, key=lambda p: p.margin)
    return estimate_report(ELLIPTIC_HARNACK, dict(D=D, R=outer.R, t=t, k=k, C=C), max(p.lhs for p in results),
                           terms, worst.margin, inner.to_dict(), argmin=Munch(r1=worst.r1, r2=worst.r2, t=t),
                           pairs=results)


def hamilton_check(sol, space, G, alpha, beta=0.0, R=None, cylinder=None, C=None, k=None, global_variant=False,
                   drop_gamma_term=False, m=None):
    """
    Hamilton gradient estimate |∇w| / w^(1-(beta+2)/(2 alpha)) <= C (sup w)^((beta+2)/(2 alpha)) {bracket}

    :raises ParameterOrder: unless beta >= 0 and alpha > 1 + beta
    """
    check_parameter_order(alpha, beta)
    G = G if G is not None else sol.G
    outer, inner = _cylinders(sol, R, cylinder, global_variant)
    k = _curvature(space, RIC_PHI, (0.0, outer.R), k)
    terms = _elliptic_bracket_terms(sol, space, outer, k, global_variant, drop_gamma_term, m)
    if G is None:
        term_x, term_w = 0.0, 0.0
    else:
        term_x, term_w = hamilton_sup_terms(G, sol, outer, alpha, beta)
    terms.G_x, terms.G_w = term_x, term_w
    power = (beta + 2.0) / (2.0 * alpha)
    sup_w = float(np.max(outer.select(sol).w))
    sel = inner.select(sol)
    grad = inner.select(sol, sol.grad_w).w
    lhs = np.abs(grad) / sel.w ** (1.0 - power)
    time = 1.0 / np.sqrt(sel.t - outer.t_lo)
    unit = sup_w ** power * (sum(terms.values()) + time)
    return _structural(HAMILTON_GLOBAL if global_variant else HAMILTON, sel, lhs, unit, C,
                       dict(terms, time=float(np.max(time)), sup_factor=sup_w ** power),
                       params=dict(alpha=alpha, beta=beta, R=outer.R, T=outer.T, t0=outer.t_hi, k=k, C=C,
                                   drop_gamma_term=drop_gamma_term),
                       verification_set=inner.to_dict())


#  _    _    __   __
# | |  (_)___\ \ / /_ _ _  _
# | |__| |___|\ V / _` | || |
# |____|_|     |_|\__,_|\_,_|
#

def _li_yau_setup(sol, space, alpha, epsilon, R, k, m, global_variant):
    if not alpha > 1:
        raise exceptions.ParameterOrder(f"need alpha > 1, got alpha={alpha}")
    if not 0 < epsilon < 1:
        raise exceptions.ConfigException(f"epsilon must lie in (0, 1), got {epsilon}")
    m = space.m if m is None else parse_m(m)
    if math.isinf(m):
        raise exceptions.NeedFiniteM("Li-Yau estimates need a finite synthetic dimension m")
    if sol.t[0] < 0:
        raise exceptions.ConfigException("Li-Yau estimates measure time from 0, stored times must be >= 0")
    open_start = sol.t[0] <= 0
    t_lo, t_hi = float(sol.t[0]), float(sol.t[-1])
    if global_variant:
        R = sol.R_max
        outer = Cylinder(0.0, R, t_lo, t_hi, flavor="H", open_start=open_start)
        inner = outer
    else:
        if R is None:
            raise exceptions.ConfigException("a local estimate needs the radius R")
        outer = Cylinder(0.0, 2.0 * R, t_lo, t_hi, flavor="H", open_start=open_start)
        inner = Cylinder(0.0, R, t_lo, t_hi, flavor="H", open_start=open_start)
    k = _curvature(space, RIC_PHI_M, (0.0, outer.R), k, m=m)
    return m, k, outer, inner


def _li_yau_constants(sol, space, G, alpha, epsilon, m, k, outer, R, global_variant):
    """The t-independent parts of the Li-Yau bound"""
    if G is None:
        gammas = Munch(gamma_A=0.0, gamma_B=0.0, gamma_C=0.0, gamma_D=0.0, gamma_E=0.0, alpha=alpha)
    else:
        gammas = gamma_quantities(G, sol, space, outer, alpha)
    scale = m * alpha / 2.0
    inner = (m * alpha * ((m - 1.0) * k + gammas.gamma_A / 2.0) ** 2 / (2.0 * (1.0 - epsilon) * (alpha - 1.0) ** 2)
             + (27.0 * m * gammas.gamma_B ** 4 / (32.0 * epsilon * alpha * (alpha - 1.0) ** 2)) ** (1.0 / 3.0)
             + gammas.gamma_D)
    constants = Munch(
        sqrt_bracket=math.sqrt(scale) * math.sqrt(inner),
        gamma_C=scale * gammas.gamma_C,
        R_terms=0.0,
        c1=None,
        c2=None,
    )
    if not global_variant:
        cutoff = build_spatial_cutoff(R)
        c1, c2 = cutoff.c1, cutoff.c2
        constants.c1, constants.c2 = c1, c2
        constants.R_terms = scale / R ** 2 * (m * c1 ** 2 * alpha ** 2 / (4.0 * (alpha - 1.0)) + c2
                                              + (m - 1.0) * c1 * (1.0 + R * math.sqrt(k)) + 2.0 * c1 ** 2)
    return constants, gammas


def li_yau_check(sol, space, G, alpha, epsilon=defaults.EPSILON, R=None, k=None, m=None, global_variant=False):
    """
    Li-Yau estimate |∇w|^2/(alpha w^2) - ∂_t w/w + G/w <= (m alpha/2) {R-terms + 1/t + gamma_C}
    + sqrt(m alpha/2) {...}^(1/2), every constant explicit

    The local variant verifies on B_R x (0, T] with the gamma quantities and the curvature
    certificate on B_2R; the global one drops the R-terms and uses the whole verified radius.
    Raises:
        HypothesisUnverified: Ric_φ^m >= -(m-1)k is not certified
        NeedFiniteM: m is infinite
    """
    G = G if G is not None else sol.G
    m, k, outer, inner = _li_yau_setup(sol, space, alpha, epsilon, R, k, m, global_variant)
    constants, gammas = _li_yau_constants(sol, space, G, alpha, epsilon, m, k, outer, R, global_variant)
    sel = inner.select(sol)
    if np.any(sel.t <= 0):
        raise exceptions.OutOfDomain("Li-Yau verification needs t > 0")
    grad = inner.select(sol, sol.grad_w).w
    dtw = inner.select(sol, sol.dtw).w
    G_values = inner.select(sol, sol.G_values).w if G is not None else 0.0
    w = sel.w
    lhs = grad ** 2 / (alpha * w ** 2) - dtw / w + G_values / w
    time = m * alpha / (2.0 * sel.t)
    rhs = constants.R_terms + time + constants.gamma_C + constants.sqrt_bracket
    margin = rhs - lhs
    worst = int(np.argmin(margin))
    rhs_terms = dict(R_terms=constants.R_terms, time=float(np.max(time)), gamma_C=constants.gamma_C,
                     sqrt_bracket=constants.sqrt_bracket)
    return estimate_report(LI_YAU_GLOBAL if global_variant else LI_YAU,
                           dict(alpha=alpha, epsilon=epsilon, k=k, m=m, R=inner.R, T=inner.T, c1=constants.c1,
                                c2=constants.c2),
                           np.max(lhs), rhs_terms, margin.flat[worst], inner.to_dict(), argmin=_point(sel, worst),
                           gammas=gammas,
                           table=Munch(r=sel.r.ravel(), t=sel.t.ravel(), lhs=lhs.ravel(), rhs=rhs.ravel()))


def path_functional(space, r1, r2, R, dt, nodes=defaults.PATH_NODES, sweeps=defaults.PATH_SWEEPS):
    """
    Discrete minimum of ∫ |ζ'|^2 / (4 dt) over piecewise-linear paths in B_R between two points of a ray

    Paths live in the plane through the ray with metric dr^2 + psi(r)^2 dθ^2. The path starts
    off the ray and is relaxed node by node.
    """
    s = np.linspace(0.0, 1.0, nodes + 2)
    r = np.clip(r1 + (r2 - r1) * s + 0.1 * R * np.sin(np.pi * s), 0.0, R)
    theta = 0.25 * np.sin(np.pi * s)
    for _ in range(sweeps):
        mid = 0.5 * (r[:-1] + r[1:])
        weight = space.psi(mid) ** 2
        total = weight[:-1] + weight[1:]
        new_theta = theta.copy()
        new_theta[1:-1] = np.where(total > 0, (weight[:-1] * theta[:-2] + weight[1:] * theta[2:])
                                   / np.where(total > 0, total, 1.0), 0.0)
        new_r = r.copy()
        new_r[1:-1] = np.clip(0.5 * (r[:-2] + r[2:]), 0.0, R)
        change = max(float(np.max(np.abs(new_r - r))), float(np.max(np.abs(new_theta - theta))))
        r, theta = new_r, new_theta
        if change < 1e-15:
            break
    mid = 0.5 * (r[:-1] + r[1:])
    energy = (nodes + 1) * float(np.sum(np.diff(r) ** 2 + space.psi(mid) ** 2 * np.diff(theta) ** 2))
    return energy / (4.0 * dt)


def _harnack_constants(sol, space, G, alpha, epsilon, R, k, m, global_variant, gamma_E_radius):
    """(constants without L, inner verification cylinder)"""
    G = G if G is not None else sol.G
    m, k, outer, inner = _li_yau_setup(sol, space, alpha, epsilon, R, k, m, global_variant)
    constants, gammas = _li_yau_constants(sol, space, G, alpha, epsilon, m, k, outer, R, global_variant)
    if gamma_E_radius not in ("R", "2R"):
        raise exceptions.ConfigException(f"gamma_E radius must be R or 2R, got {gamma_E_radius}")
    if G is None:
        gamma_E = 0.0
    else:
        region = inner if gamma_E_radius == "R" or global_variant else outer
        gamma_E = gamma_quantities(G, sol, space, region, alpha).gamma_E
    H = gamma_E - constants.R_terms - constants.gamma_C - constants.sqrt_bracket
    return dict(H=H, alpha=alpha, gammas=dict(gammas, gamma_E=gamma_E), c1=constants.c1, c2=constants.c2,
                m=m, k=k, R=inner.R), inner


def harnack_constants(sol, space, G, alpha, epsilon=defaults.EPSILON, R=None, k=None, m=None, global_variant=False,
                      gamma_E_radius="R"):
    """
    The constant H of the parabolic Harnack inequality with the gammas and cutoff constants behind it

    L is filled in per pair by parabolic_harnack_check; here it is empty.
    :param gamma_E_radius: "R" (default) or "2R", the ball of inf G/w
    :return: HarnackConstants Munch(H, L, alpha, gammas, c1, c2, m, k, R)
    """
    constants, _ = _harnack_constants(sol, space, G, alpha, epsilon, R, k, m, global_variant, gamma_E_radius)
    return Munch(constants, L=[])


def parabolic_harnack_check(sol, space, G, alpha, pairs, epsilon=defaults.EPSILON, R=None, k=None, m=None,
                            global_variant=False, gamma_E_radius="R"):
    """
    Parabolic Harnack inequality w(x2,t2) >= w(x1,t1) exp[(t2-t1) H - alpha L] (t2/t1)^(-m alpha/2)

    L is the smaller of the straight radial value d^2/(4(t2-t1)) and the discrete path minimum.
    The margin is log w(x2,t2) minus the log of the bound; ratio_margin compares w2/w1 with the bound/w1.
    :param pairs: ((r1, t1), (r2, t2)) with t2 > t1 > 0
    :raises TimeOrder: when t2 <= t1
    """
    constants, inner = _harnack_constants(sol, space, G, alpha, epsilon, R, k, m, global_variant, gamma_E_radius)
    H, mm = constants["H"], constants["m"]
    results = []
    for (r1, t1), (r2, t2) in pairs:
        if not t2 > t1:
            raise exceptions.TimeOrder(f"need t2 > t1, got t1={t1}, t2={t2}", payload={"t1": t1, "t2": t2})
        if not t1 > 0:
            raise exceptions.OutOfDomain(f"need t1 > 0, got {t1}", payload={"t1": t1})
        for r in (r1, r2):
            if r > inner.R + 1e-12:
                raise exceptions.OutOfDomain(f"radius {r} outside the ball of radius {inner.R}", payload={"r": r})
        dt = t2 - t1
        d = radial_distance(r1, r2)
        straight = d ** 2 / (4.0 * dt)
        L = min(straight, path_functional(space, r1, r2, inner.R, dt))
        w1, w2 = sol.value_at(r1, t1), sol.value_at(r2, t2)
        log_bound = math.log(w1) + dt * H - alpha * L - mm * alpha / 2.0 * math.log(t2 / t1)
        results.append(Munch(r1=r1, t1=t1, r2=r2, t2=t2, L=L, ratio=w2 / w1, bound_ratio=math.exp(log_bound) / w1,
                             margin=math.log(w2) - log_bound, ratio_margin=(w2 - math.exp(log_bound)) / w1))
    worst = min(results, key=lambda p: p.margin)
    Ls = [p.L for p in results]
    return estimate_report(PARABOLIC_HARNACK,
                           dict(alpha=alpha, epsilon=epsilon, m=mm, k=constants["k"], R=constants["R"],
                                global_variant=global_variant, gamma_E_radius=gamma_E_radius),
                           max(p.ratio for p in results),
                           dict(H_negative=max(0.0, -H), L=max(Ls)),
                           worst.margin, inner.to_dict(),
                           argmin=Munch(r1=worst.r1, t1=worst.t1, r2=worst.r2, t2=worst.t2),
                           ratio_margin=min(p.ratio_margin for p in results), pairs=results,
                           harnack_constants=Munch(constants, L=Ls))


def elliptic_global_check(sol, space, G, alpha, epsilon=defaults.EPSILON, k=None, m=None,
                          tol=defaults.STATIONARITY_TOLERANCE):
    """
    Global estimate for stationary solutions:
    |∇w|^2/(alpha w^2) + G(w)/w <= (m alpha/2) [((m-1)k + gamma_A/2)/((alpha-1) sqrt(1-eps)) + gamma_C]

    :raises NotStationary: when sup |Δ_φ w + G(w)| >= tol on the verified radius
    """
    G = G if G is not None else sol.G
    if not alpha > 1 or not 0 < epsilon < 1:
        raise exceptions.ParameterOrder(f"need alpha > 1 and epsilon in (0, 1), got {alpha}, {epsilon}")
    m = space.m if m is None else parse_m(m)
    if math.isinf(m):
        raise exceptions.NeedFiniteM("the stationary estimate needs a finite synthetic dimension m")
    level = sol.levels - 1
    physical = sol.physical
    G_values = sol.G_values[level] if G is not None else np.zeros(sol.r.size)
    stationarity = float(np.max(np.abs((sol.lap_w[level] + G_values)[physical])))
    if stationarity >= tol:
        raise exceptions.NotStationary(f"sup |Δ_φ w + G(w)| = {stationarity:.3e} is not below {tol}",
                                       payload={"residual": stationarity})
    k = _curvature(space, RIC_PHI_M, (0.0, sol.R_max), k, m=m)
    t = float(sol.t[level])
    region = Cylinder(0.0, sol.R_max, t, t)
    if G is None:
        gammas = Munch(gamma_A=0.0, gamma_C=0.0)
    else:
        gammas = gamma_quantities(G, sol, space, region, alpha)
    w = sol.w[level][physical]
    lhs = sol.grad_w[level][physical] ** 2 / (alpha * w ** 2) + G_values[physical] / w
    curvature_term = m * alpha / 2.0 * ((m - 1.0) * k + gammas.gamma_A / 2.0) / ((alpha - 1.0) * math.sqrt(1.0 - epsilon))
    gamma_term = m * alpha / 2.0 * gammas.gamma_C
    rhs = curvature_term + gamma_term
    worst = int(np.argmax(lhs))
    return estimate_report(ELLIPTIC_GLOBAL, dict(alpha=alpha, epsilon=epsilon, k=k, m=m), np.max(lhs),
                           dict(curvature=curvature_term, gamma_C=gamma_term), rhs - float(np.max(lhs)),
                           region.to_dict(), argmin=Munch(r=float(sol.r[physical][worst]), t=t),
                           stationarity=stationarity, gammas=gammas)


#  _    _           _ _ _
# | |  (_)___ _  _ __ _(_) | |___
# | |__| / _ \ || \ V / | | / -_)
# |____|_\___/\_,_|\_/|_|_|_\___|
#

def liouville_demo(space, G, theorem, initial="bump(1, 1)", grid=None, params=None, w_window=None,
                   max_time=defaults.LIOUVILLE_TIME):
    """
    Numerical witness of a Liouville statement: relax from nonconstant data and look at the limit

    The verdict is "consistent" when the flow settles with sup |∇w| < 1e-4 sup w,
    "consistent with nonexistence" when it grows without a bounded stationary limit,
    "not-applicable" when the predicate or the nonnegative curvature bound fails,
    and "inconsistent" otherwise.
    :return: Munch(verdict, final_grad_sup, sup_w, growth, predicate, reason)
    """
    predicate = liouville_predicate(G, theorem, w_window=w_window, params=params)
    result = Munch(verdict=NOT_APPLICABLE, final_grad_sup=None, sup_w=None, growth=None, predicate=predicate,
                   reason=predicate.reason, theorem=theorem)
    if not predicate.holds:
        return result
    flavor = CURVATURE[theorem]
    try:
        certify_curvature(space, flavor, (0.0, space.R_max), k=0.0)
    except (exceptions.HypothesisUnverified, exceptions.NeedFiniteM) as e:
        result.reason = f"curvature: {e.args[0]}"
        return result
    grid = grid or Grid(dr=space.R_max / 50.0, R_max=space.R_max)
    try:
        sol = solve_elliptic(space, G, initial, grid, max_time=max_time,
                             gradient_ratio=defaults.LIOUVILLE_GRADIENT_RATIO)
    except exceptions.NoConvergence as e:
        payload = e.payload or {}
        result.sup_w = payload.get("sup_w")
        result.growth = payload.get("growth")
        if result.growth is not None and result.growth > defaults.LIOUVILLE_GROWTH:
            result.verdict = NONEXISTENCE
            result.reason = f"no bounded stationary limit, sup w grew by {result.growth:.3g}"
        else:
            result.verdict = INCONSISTENT
            result.reason = f"relaxation did not settle: {e.args[0]}"
        return result
    grad = float(np.max(np.abs(sol.grad_w[0])))
    sup_w = float(np.max(sol.w[0]))
    result.final_grad_sup, result.sup_w, result.growth = grad, sup_w, sol.metadata.growth
    if grad < defaults.LIOUVILLE_GRADIENT_RATIO * sup_w:
        result.verdict = CONSISTENT
        result.reason = f"settled to a constant at t={sol.metadata.relaxation_time:.3g}"
    else:
        result.verdict = INCONSISTENT
        result.reason = f"stationary limit is not constant, sup |∇w| = {grad:.3g}"
    logger.info(f"liouville demo {theorem} on {space.name}: {result.verdict}")
    return result


def calibrate_constant(reports):
    """
    The calibrated constant of one estimate kind over reports at different resolutions

    :return: Munch(kind, C_min, stability, values)
    :raises InsufficientData: with fewer than two reports
    :raises MixedKinds: when the kinds differ or a kind has no free constant
    """
    reports = list(reports)
    if len(reports) < 2:
        raise exceptions.InsufficientData("calibration needs at least two reports")
    kinds = {r.kind for r in reports}
    if len(kinds) != 1:
        raise exceptions.MixedKinds(f"reports of several kinds: {sorted(kinds)}")
    values = [r.empirical_C for r in reports]
    if any(v is None for v in values):
        raise exceptions.MixedKinds(f"{kinds.pop()} has no free constant to calibrate")
    stability = max(abs(a - b) / max(abs(a), abs(b), 1e-300) for i, a in enumerate(values) for b in values[i + 1:])
    return Munch(kind=reports[0].kind, C_min=max(values), stability=stability, values=values)


def batch_estimates(check, param_grid, workers=defaults.WORKERS, **common):
    """
    Run one check over a parameter grid in a thread pool

    :param check: an estimate function
    :param param_grid: list of keyword dicts, each merged over common
    :return: list of Munch(params, report, error) in grid order
    """
    def run(params):
        try:
            return Munch(params=params, report=check(**dict(common, **params)), error=None)
        except exceptions.DriftLabException as e:
            logger.info(f"batch point {params} failed: {e}")
            return Munch(params=params, report=None, error=str(e))

    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
        return list(pool.map(run, param_grid))


CHECKS = {
    "souplet_zhang": souplet_zhang_check,
    "hamilton": hamilton_check,
    "li_yau": li_yau_check,
    "elliptic_harnack": elliptic_harnack_check,
    "parabolic_harnack": parabolic_harnack_check,
    "elliptic_global": elliptic_global_check,
}
