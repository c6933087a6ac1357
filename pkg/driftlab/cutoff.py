import logging

import numpy as np
from munch import Munch

from driftlab import defaults, exceptions

logger = logging.getLogger(__name__)

# exp arguments are clipped here so the steps never overflow
_EXP_CLIP = 700.0


def _clamp01(x):
    return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)


class QuinticStep:
    """The C^2 smoothstep 6x^5 - 15x^4 + 10x^3 on [0, 1], clamped outside"""

    def __call__(self, x, order=0):
        x = np.asarray(x, dtype=float)
        c = _clamp01(x)
        inside = (x >= 0) & (x <= 1)
        if order == 0:
            return c ** 3 * (c * (6 * c - 15) + 10)
        if order == 1:
            return np.where(inside, 30 * c ** 2 * (c - 1) ** 2, 0.0)
        if order == 2:
            return np.where(inside, 60 * c * (2 * c - 1) * (c - 1), 0.0)
        raise ValueError(f"order {order} not supported")


class LogisticStep:
    """
    The C-infinity step 1/(1 + exp(1/x - 1/(1-x))) on (0, 1), 0 below and 1 above.
    All derivatives vanish at both ends.
    """

    def _u(self, x):
        with np.errstate(all="ignore"):
            u = 1.0 / x - 1.0 / (1.0 - x)
            du = -1.0 / x ** 2 - 1.0 / (1.0 - x) ** 2
            ddu = 2.0 / x ** 3 - 2.0 / (1.0 - x) ** 3
        return u, du, ddu

    def parts(self, x):
        """(S, 1 - S, S', S'') computed without cancellation"""
        x = np.asarray(x, dtype=float)
        inside = (x > 0) & (x < 1)
        xi = np.where(inside, x, 0.5)
        u, du, ddu = self._u(xi)
        value = 1.0 / (1.0 + np.exp(np.clip(u, -_EXP_CLIP, _EXP_CLIP)))
        complement = 1.0 / (1.0 + np.exp(np.clip(-u, -_EXP_CLIP, _EXP_CLIP)))
        with np.errstate(all="ignore"):
            s1 = -value * complement * du
            s2 = -(s1 * (complement - value) * du + value * complement * ddu)
        s1 = np.where(np.isfinite(s1), s1, 0.0)
        s2 = np.where(np.isfinite(s2), s2, 0.0)
        outside = np.where(x >= 1, 1.0, 0.0)
        return (np.where(inside, value, outside),
                np.where(inside, complement, 1.0 - outside),
                np.where(inside, s1, 0.0),
                np.where(inside, s2, 0.0))

    def __call__(self, x, order=0):
        return self.parts(x)[0 if order == 0 else order + 1]


class SpatialProfile:
    """
    The profile ζ̄(s): 1 on [0, 1], S(2 - s) on [1, 2] and 0 after, for a monotone step S.
    Pieces are evaluated separately so one-sided limits at the breakpoints are exact.
    """
    breakpoints = (1.0, 2.0)

    def __init__(self, step=None):
        self.step = step or QuinticStep()

    def transition(self, s, order=0):
        return (-1.0) ** order * self.step(2.0 - np.asarray(s, dtype=float), order)

    def piece(self, index, s, order=0):
        s = np.asarray(s, dtype=float)
        if index == 0:
            return np.full_like(s, 1.0 if order == 0 else 0.0)
        if index == 1:
            return self.transition(s, order)
        return np.zeros_like(s)

    def __call__(self, s, order=0):
        s = np.asarray(s, dtype=float)
        index = np.searchsorted(np.asarray(self.breakpoints), s, side="right")
        out = np.zeros_like(s)
        for i in range(len(self.breakpoints) + 1):
            mask = index == i
            if np.any(mask):
                out[mask] = self.piece(i, s[mask], order)
        return out


class SpatialCutoff:
    """ζ(r) = ζ̄(r / R) with certified constants c1, c2 of the scaled profile"""

    def __init__(self, R, profile, c1, c2):
        self.R = float(R)
        self.profile = profile
        self.c1 = c1
        self.c2 = c2

    def __call__(self, r, order=0):
        return self.profile(np.asarray(r, dtype=float) / self.R, order) / self.R ** order

    def to_dict(self):
        return {"kind": "spatial", "R": self.R, "c1": self.c1, "c2": self.c2}


def _transition_samples(density):
    return np.linspace(1.0, 2.0, int(density) + 1)[1:-1]


def _spatial_constants(profile, density):
    s = _transition_samples(density)
    z = profile(s)
    dz = profile(s, 1)
    positive = z > 0
    with np.errstate(all="ignore"):
        c1 = float(np.max(-dz[positive] / np.sqrt(z[positive]))) if np.any(positive) else 0.0
    c2 = max(0.0, float(np.max(-profile(s, 2))))
    return c1, c2


def build_spatial_cutoff(R):
    """
    Build the spatial cutoff for the localisation radius R

    :param R: the radius, R > 0
    :return: SpatialCutoff with c1, c2 inflated by defaults.CUTOFF_INFLATION
    """
    if not R > 0:
        raise exceptions.ConfigException(f"cutoff radius must be positive, got {R}")
    profile = SpatialProfile()
    c1, c2 = _spatial_constants(profile, defaults.CUTOFF_DENSITY)
    cutoff = SpatialCutoff(R, profile, defaults.CUTOFF_INFLATION * c1, defaults.CUTOFF_INFLATION * c2)
    logger.debug(f"spatial cutoff R={R}: c1={cutoff.c1}, c2={cutoff.c2}")
    return cutoff


class SpaceTimeCutoff:
    """
    η̄(r, t) = ζ(r) θ(t) supported in [0, R] x [t0 - T, t0]:
    ζ = 1 - S((r - R/2) / (R/2)) and θ = S((t - t0 + T) / (τ - t0 + T)).
    """

    def __init__(self, R, T, t0, tau, step, c, c_a):
        self.R = float(R)
        self.T = float(T)
        self.t0 = float(t0)
        self.tau = float(tau)
        self.step = step
        self.c = c
        self.c_a = dict(c_a)

    @property
    def ramp(self):
        """τ - t0 + T, the length of the time ramp"""
        return self.tau - self.t0 + self.T

    def zeta(self, r, order=0):
        y = (np.asarray(r, dtype=float) - self.R / 2) / (self.R / 2)
        value, complement, d1, d2 = self.step.parts(y)
        if order == 0:
            return complement
        if order == 1:
            return -d1 / (self.R / 2)
        return -d2 / (self.R / 2) ** 2

    def theta(self, t, order=0):
        y = (np.asarray(t, dtype=float) - self.t0 + self.T) / self.ramp
        return self.step(y, order) / self.ramp ** order

    def __call__(self, r, t, dr=0, dt=0):
        """η̄ or one of its partials ∂_r, ∂_rr, ∂_t on broadcast (r, t)"""
        return self.zeta(r, dr) * self.theta(t, dt)

    def to_dict(self):
        return {"kind": "space_time", "R": self.R, "T": self.T, "t0": self.t0, "tau": self.tau,
                "c": self.c, "c_a": {str(a): v for a, v in self.c_a.items()}}


def _space_time_constants(step, density, exponents):
    y = np.linspace(0.0, 1.0, int(density) + 1)[1:-1]
    value, complement, d1, d2 = step.parts(y)
    with np.errstate(all="ignore"):
        ok = value > 0
        c = float(np.max(d1[ok] / np.sqrt(value[ok])))
        ok = complement > 0
        c_a = {}
        for a in exponents:
            first = 2.0 * d1[ok] / complement[ok] ** a
            second = 4.0 * np.abs(d2[ok]) / complement[ok] ** a
            c_a[a] = float(max(np.max(first), np.max(second)))
    return c, c_a


def build_space_time_cutoff(R, T, t0, tau):
    """
    Build the space-time cutoff on [0, R] x [t0 - T, t0]

    Args:
        R (float): the radius, R >= 2
        T (float): the length of the time window
        t0 (float): the final time
        tau (float): η̄ is 1 for t in [tau, t0], t0 - T < tau <= t0
    Returns:
        SpaceTimeCutoff with c and c_a (a in defaults.CUTOFF_EXPONENTS) inflated by defaults.CUTOFF_INFLATION
    Raises:
        BadWindow: if tau is outside (t0 - T, t0]
    """
    if not R >= 2:
        raise exceptions.ConfigException(f"space-time cutoff needs R >= 2, got {R}")
    if not T > 0:
        raise exceptions.ConfigException(f"space-time cutoff needs T > 0, got {T}")
    if not (t0 - T < tau <= t0):
        raise exceptions.BadWindow(f"tau={tau} must lie in ({t0 - T}, {t0}]", payload={"T": T, "t0": t0, "tau": tau})
    step = LogisticStep()
    c, c_a = _space_time_constants(step, defaults.CUTOFF_DENSITY, defaults.CUTOFF_EXPONENTS)
    k = defaults.CUTOFF_INFLATION
    cutoff = SpaceTimeCutoff(R, T, t0, tau, step, k * c, {a: k * v for a, v in c_a.items()})
    logger.debug(f"space-time cutoff R={R} T={T}: c={cutoff.c}, c_a={cutoff.c_a}")
    return cutoff


#   ___         _   _  __ _         _
#  / __|___ _ _| |_(_)/ _(_)__ __ _| |_ ___
# | (__/ -_) '_|  _| |  _| / _/ _` |  _/ -_)
#  \___\___|_|  \__|_|_| |_\__\__,_|\__\___|
#

def _violation(values):
    """Largest positive entry, 0 when none"""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    return max(0.0, float(np.nanmax(np.where(np.isfinite(values), values, np.inf))))


def _certify_spatial(cutoff, density):
    profile = cutoff.profile
    s = np.linspace(0.0, 3.0, 3 * int(density) + 1)
    z, dz, ddz = profile(s), profile(s, 1), profile(s, 2)
    plateau = s <= 1.0
    support = s >= 2.0
    positive = (z > 0) & ~support
    with np.errstate(all="ignore"):
        ratio = dz[positive] / np.sqrt(z[positive])
    jumps = []
    for i, bp in enumerate(profile.breakpoints):
        for order in (0, 1, 2):
            left = profile.piece(i, np.array([bp]), order)
            right = profile.piece(i + 1, np.array([bp]), order)
            jumps.append(abs(float(left[0] - right[0])))
    violations = Munch(
        plateau=_violation(np.abs(z[plateau] - 1.0)),
        support=_violation(np.abs(z[support])),
        range=_violation(np.concatenate([-z, z - 1.0])),
        monotone=_violation(np.concatenate([dz, np.diff(z)])),
        gradient=_violation(np.concatenate([-cutoff.c1 - ratio, ratio])),
        hessian=_violation(-cutoff.c2 - ddz),
        c2_smooth=_violation(jumps),
    )
    c1, c2 = _spatial_constants(profile, density)
    return violations, Munch(c1=cutoff.c1, c2=cutoff.c2), Munch(c1=c1, c2=c2)


def _certify_space_time(cutoff, density):
    R, ramp = cutoff.R, cutoff.ramp
    r = np.linspace(0.0, 1.25 * R, int(density) + 1)
    t = np.linspace(cutoff.t0 - cutoff.T, cutoff.t0, max(int(density) // 10, 2) + 1)
    zeta, dzeta, ddzeta = cutoff.zeta(r), cutoff.zeta(r, 1), cutoff.zeta(r, 2)
    theta, dtheta = cutoff.theta(t), cutoff.theta(t, 1)
    inner = r <= R / 2
    late = t >= cutoff.tau
    violations = Munch(
        support=_violation(np.abs(zeta[r >= R])),
        plateau=max(_violation(np.abs(zeta[inner] - 1.0)), _violation(np.abs(theta[late] - 1.0))),
        range=_violation(np.concatenate([-zeta, zeta - 1.0, -theta, theta - 1.0])),
        flat_core=_violation(np.abs(dzeta[inner])),
        initial=_violation(np.abs(theta[0] * zeta)),
        time_derivative=0.0,
    )
    for a in cutoff.c_a:
        violations[f"gradient_{a}"] = 0.0
        violations[f"hessian_{a}"] = 0.0
    # tensor-product grid in chunks of time levels
    chunk = max(1, 10 ** 6 // r.size)
    for start in range(0, t.size, chunk):
        th = theta[start:start + chunk, None]
        dth = dtheta[start:start + chunk, None]
        eta = th * zeta[None, :]
        live = eta > 0
        with np.errstate(all="ignore"):
            lhs = np.abs(dth * zeta[None, :]) * ramp - cutoff.c * np.sqrt(eta)
            violations.time_derivative = max(violations.time_derivative, _violation(lhs[live]))
            for a, c_a in cutoff.c_a.items():
                power = th ** a * zeta[None, :] ** a
                grad = th * dzeta[None, :]
                hess = th * ddzeta[None, :]
                g = np.concatenate([(-c_a * power / R - grad)[live], grad[live]])
                h = (np.abs(hess) - c_a * power / R ** 2)[live]
                violations[f"gradient_{a}"] = max(violations[f"gradient_{a}"], _violation(g))
                violations[f"hessian_{a}"] = max(violations[f"hessian_{a}"], _violation(h))
    c, c_a = _space_time_constants(cutoff.step, density, tuple(cutoff.c_a))
    constants = Munch(c=cutoff.c, c_a={str(a): v for a, v in cutoff.c_a.items()})
    sampled = Munch(c=c, c_a={str(a): v for a, v in c_a.items()})
    return violations, constants, sampled


def certify(cutoff, density=defaults.CUTOFF_DENSITY):
    """
    Sample every clause of a cutoff's defining properties

    :param cutoff: a SpatialCutoff or SpaceTimeCutoff
    :param density: samples per unit of the scaled variable, at least 10^3
    :return: Munch(kind, flags, max_violation, constants, sampled, density, valid);
        constants are the certified ones, sampled the uninflated sups at this density
    """
    if int(density) < 10 ** 3:
        raise exceptions.ConfigException(f"certificate density must be at least 1000, got {density}")
    if isinstance(cutoff, SpaceTimeCutoff):
        kind = "space_time"
        violations, constants, sampled = _certify_space_time(cutoff, density)
    else:
        kind = "spatial"
        violations, constants, sampled = _certify_spatial(cutoff, density)
    flags = Munch({k: v <= defaults.CERTIFICATE_TOLERANCE for k, v in violations.items()})
    valid = all(flags.values())
    if not valid:
        logger.warning(f"{kind} cutoff certificate failed: {[k for k, v in flags.items() if not v]}")
    return Munch(
        kind=kind,
        flags=flags,
        max_violation=violations,
        constants=constants,
        sampled=sampled,
        density=int(density),
        valid=valid,
    )
