import logging
import math
import re

import numpy as np
from munch import Munch

from driftlab import defaults, exceptions
from driftlab.expressions import Expression, Number, Symbol, add, mul, power, call, derivative, evaluate, parse
from driftlab.geometry import weighted_laplacian_radial

logger = logging.getLogger(__name__)

ZERO = "Zero"
LOG_LINEAR = "LogLinear"
POWER_SUM = "PowerSum"
GAMMA_LOG = "GammaLog"
LICHNEROWICZ = "Lichnerowicz"
SPLIT_XY = "SplitXY"
CUSTOM = "Custom"

FAMILIES = (ZERO, LOG_LINEAR, POWER_SUM, GAMMA_LOG, LICHNEROWICZ, SPLIT_XY, CUSTOM)

# the partial derivatives carried by every nonlinearity, x is the radial variable
PARTIALS = ("G", "G_w", "G_x", "G_ww", "G_xw", "G_xx")

_POWER_SUM_NAME = re.compile(r"^([AB])(\d+)$")

W = Symbol("w")
S = Symbol("s")


def _coefficient_expression(spec):
    if isinstance(spec, Expression):
        return spec
    if isinstance(spec, (int, float)):
        return Number(float(spec))
    return parse(spec, ("r", "t"))


class Nonlinearity:
    """
    The reaction term G(t, x, w) of the drifting heat equation.

    Every family compiles to a single expression in (t, r, w); the partial
    derivatives G_w, G_ww, G_x, G_xw and G_xx are exact symbolic derivatives of it.
    """

    def __init__(self, family, coefficients=None, exponents=None, X=None, Y=None, Gamma=None,
                 expression=None, w_window=None, preset=None):
        if family not in FAMILIES:
            raise exceptions.ConfigException(f"Unknown nonlinearity family {family!r}, expected one of {FAMILIES}")
        self.family = family
        self.coefficient_specs = dict(coefficients or {})
        self.coefficients = {k: _coefficient_expression(v) for k, v in self.coefficient_specs.items()}
        self.exponents = {k: float(v) for k, v in (exponents or {}).items()}
        self.X = None if X is None else parse(X, ("w",))
        self.Y = None if Y is None else parse(Y, ("s",))
        self.Gamma = None if Gamma is None else parse(Gamma, ("s",))
        self.source = expression
        self.preset = preset
        lo, hi = w_window if w_window is not None else defaults.W_WINDOW
        if not 0 < float(lo) < float(hi):
            raise exceptions.ConfigException(f"positivity window must satisfy 0 < lo < hi, got [{lo}, {hi}]")
        self.w_window = (float(lo), float(hi))
        self.power_terms = []
        self.expression = self._compile()
        self.partial_expressions = {
            "G": self.expression,
            "G_w": derivative(self.expression, "w"),
            "G_ww": derivative(self.expression, "w", 2),
            "G_x": derivative(self.expression, "r"),
            "G_xx": derivative(self.expression, "r", 2),
        }
        self.partial_expressions["G_xw"] = derivative(self.partial_expressions["G_x"], "w")
        logger.debug(f"nonlinearity {self.family}: G = {self.expression}")

    def _coefficient(self, name, default=None):
        if name in self.coefficients:
            return self.coefficients[name]
        return None if default is None else Number(default)

    def _exponent(self, name, coefficient):
        if name not in self.exponents:
            raise exceptions.ConfigException(
                f"{self.family} needs the exponent {name!r} for coefficient {coefficient!r}")
        return self.exponents[name]

    def _power_term(self, coefficient, exponent, sign, w=W):
        """A coefficient times w^exponent, recorded for the exponent predicates"""
        c = self._coefficient(coefficient)
        if c is None:
            return Number(0)
        p = self._exponent(exponent, coefficient)
        self.power_terms.append(Munch(coefficient=coefficient, exponent=exponent, value=p, sign=sign))
        return mul(c, power(w, Number(p)))

    def _compile(self):
        log_w = call("log", W)
        if self.family == ZERO:
            return Number(0)
        if self.family == LOG_LINEAR:
            return mul(mul(self._coefficient("A", 1.0), W), log_w)
        if self.family == POWER_SUM:
            terms = []
            for name in self.coefficients:
                m = _POWER_SUM_NAME.match(name)
                if m is None:
                    raise exceptions.ConfigException(f"PowerSum coefficients are named A<j> or B<j>, got {name!r}")
                terms.append((m.group(1), int(m.group(2)), name))
            expr = Number(0)
            for letter, j, name in sorted(terms):
                if letter == "A":
                    expr = add(expr, self._power_term(name, f"p{j}", "+"))
                else:
                    expr = add(expr, self._power_term(name, f"q{j}", "-"))
            return expr
        if self.family == GAMMA_LOG:
            if self.Gamma is None:
                raise exceptions.ConfigException("GammaLog needs the Gamma expression in s")
            expr = Number(0)
            A = self._coefficient("A", 1.0)
            p = self.exponents.get("p", 1.0)
            expr = add(expr, mul(mul(A, self.Gamma.substitute("s", log_w)), power(W, Number(p))))
            expr = add(expr, self._power_term("B", "q", "+"))
            C = self._coefficient("C")
            if C is not None:
                expr = add(expr, mul(C, W))
            return expr
        if self.family == LICHNEROWICZ:
            expr = add(self._power_term("A", "p", "+"), self._power_term("B", "q", "-"))
            C = self._coefficient("C")
            if C is not None:
                expr = add(expr, mul(mul(C, W), log_w))
            return expr
        if self.family == SPLIT_XY:
            if self.X is not None:
                x_part = self.X
            else:
                x_part = add(self._power_term("A", "p", "+"), self._power_term("B", "q", "-"))
            if self.Y is None:
                return x_part
            r = self.exponents.get("r", 1.0)
            return add(x_part, mul(power(W, Number(r)), self.Y.substitute("s", log_w)))
        if self.source is None:
            raise exceptions.ConfigException("Custom nonlinearity needs an expression in t, r, w")
        return parse(self.source, ("t", "r", "w"))

    @property
    def name(self):
        return self.preset or f"{self.family}({self.expression})"

    def __str__(self):
        return str(self.expression)

    def __call__(self, t, r, w):
        return evaluate(self.expression, t=t, r=r, w=w)

    def partial(self, name, t, r, w):
        return evaluate(self.partial_expressions[name], t=t, r=r, w=w)

    def partials(self, t, r, w):
        """All partials on broadcast (t, r, w) samples"""
        return Munch({name: self.partial(name, t, r, w) for name in PARTIALS})

    def is_autonomous(self):
        """True when G depends on w only"""
        return not (self.expression.depends_on("r") or self.expression.depends_on("t"))

    def is_spatially_constant(self):
        return not self.expression.depends_on("r")

    def coefficient_values(self, name, r=0.0, t=0.0):
        c = self._coefficient(name)
        if c is None:
            return np.zeros(np.broadcast(np.asarray(r), np.asarray(t)).shape)
        return evaluate(c, r=r, t=t)

    def frozen_laplacian(self, space, t, r, w):
        """
        Analytic Δ_φ of x -> G(t, x, w) at fixed (t, w): G_xx + Δ_φ r G_x,
        with the limit n G_xx at the pole.
        """
        r = np.asarray(r, dtype=float)
        g_x = self.partial("G_x", t, r, w)
        g_xx = self.partial("G_xx", t, r, w)
        with np.errstate(all="ignore"):
            drift = space.laplacian_of_r(np.where(r > 0, r, 1.0))
        return np.where(r > 0, g_xx + drift * g_x, space.n * g_xx)

    def kinks(self):
        return self.expression.kinks()

    def singular_points(self, window=None):
        """
        Values of w where an abs/pos argument changes sign, located by bisection in log w.
        Only kinks that depend on w alone are located.
        """
        lo, hi = window or self.w_window
        found = []
        for arg in self.kinks():
            if arg.depends_on("r") or arg.depends_on("t") or not arg.depends_on("w"):
                logger.debug(f"kink {arg} is not a function of w alone, skipped")
                continue
            x = np.linspace(math.log(lo), math.log(hi), defaults.PREDICATE_SAMPLES)
            v = evaluate(arg, w=np.exp(x))
            ok = np.isfinite(v)
            found.extend(np.exp(x[ok & (v == 0)]).tolist())
            change = np.nonzero(ok[:-1] & ok[1:] & (np.sign(v[:-1]) * np.sign(v[1:]) < 0))[0]
            a, b = x[change], x[change + 1]
            fa = v[change]
            for _ in range(60):
                mid = 0.5 * (a + b)
                fm = evaluate(arg, w=np.exp(mid))
                left = np.sign(fa) * np.sign(fm) <= 0
                b = np.where(left, mid, b)
                a = np.where(left, a, mid)
                fa = np.where(left, fa, fm)
            found.extend(np.exp(0.5 * (a + b)).tolist())
        return sorted(found)

    def to_dict(self):
        data = {"family": self.family}
        if self.preset:
            data["preset"] = self.preset
        if self.coefficient_specs:
            data["coefficients"] = [
                {"name": k, "value": v} if isinstance(v, (int, float)) else {"name": k, "profile": str(v)}
                for k, v in self.coefficient_specs.items()
            ]
        if self.exponents:
            data["exponents"] = dict(self.exponents)
        for key, expr in (("X", self.X), ("Y", self.Y), ("Gamma", self.Gamma)):
            if expr is not None:
                data[key] = str(expr)
        if self.source is not None:
            data["expression"] = str(self.source)
        data["w_window"] = list(self.w_window)
        return data

    @classmethod
    def from_dict(cls, data):
        """
        Build a nonlinearity from its JSON form

        {"family": ..., "coefficients": [{"name", "value" | "profile"}], "exponents": {...},
        "X": ..., "Y": ..., "Gamma": ..., "expression": ..., "w_window": [lo, hi]}
        or {"preset": name, "params": {...}, "w_window": [lo, hi]}
        """
        if not isinstance(data, dict):
            raise exceptions.ConfigException(f"nonlinearity must be an object, got {type(data).__name__}")
        if "family" not in data and "preset" in data:
            return preset(data["preset"], w_window=data.get("w_window"), **data.get("params", {}))
        if "family" not in data:
            raise exceptions.ConfigException("nonlinearity needs a 'family' or a 'preset'")
        coefficients = data.get("coefficients", [])
        if isinstance(coefficients, dict):
            coefficients = [{"name": k, "value": v} for k, v in coefficients.items()]
        specs = {}
        for c in coefficients:
            if "name" not in c:
                raise exceptions.ConfigException(f"coefficient without a name: {c}")
            if "value" in c:
                specs[c["name"]] = float(c["value"])
            elif "profile" in c:
                specs[c["name"]] = str(c["profile"])
            else:
                raise exceptions.ConfigException(f"coefficient {c['name']!r} needs a value or a profile")
        return cls(data["family"],
                   coefficients=specs,
                   exponents=data.get("exponents"),
                   X=data.get("X"),
                   Y=data.get("Y"),
                   Gamma=data.get("Gamma"),
                   expression=data.get("expression"),
                   w_window=data.get("w_window"),
                   preset=data.get("preset"))


#  ___                  _
# | _ \_ _ ___ ___ ___| |_ ___
# |  _/ '_/ -_|_-</ -_)  _(_-<
# |_| |_| \___/__/\___|\__/__/
#

def iterated_log(k, kind="plain"):
    """
    The k-fold iterated logarithm of w written as a function Y(s) of s = log w.

    :param k: the number of logarithms, k >= 1
    :param kind: "plain" log_k, "abs" (|log| at every level) or "plus" (1 + [log]_+ at every level)
    """
    if int(k) < 1:
        raise exceptions.ConfigException(f"iterated log needs k >= 1, got {k}")
    if kind not in ("plain", "abs", "plus"):
        raise exceptions.ConfigException(f"unknown iterated log kind {kind!r}")

    def level(x):
        if kind == "abs":
            return call("abs", x)
        if kind == "plus":
            return add(Number(1), call("pos", x))
        return x

    y = level(S)
    for _ in range(int(k) - 1):
        y = level(call("log", y))
    return y


def zero(w_window=None):
    return Nonlinearity(ZERO, w_window=w_window, preset="zero")


def log_linear(A=1.0, w_window=None):
    return Nonlinearity(LOG_LINEAR, coefficients={"A": A}, w_window=w_window)


def fisher_kpp(A=1.0, w_window=None):
    """w - w^2 scaled by A"""
    return Nonlinearity(POWER_SUM, coefficients={"A1": A, "B1": -A}, exponents={"p1": 1, "q1": 2},
                        w_window=w_window, preset="fisher_kpp")


def allen_cahn(w_window=None):
    """w - w^3"""
    return Nonlinearity(POWER_SUM, coefficients={"A1": 1.0, "B1": -1.0}, exponents={"p1": 1, "q1": 3},
                        w_window=w_window, preset="allen_cahn")


def lichnerowicz(A=1.0, B=-1.0, C=0.0, p=-3.0, q=1.0, w_window=None):
    """A w^p + B w^q + C w log w"""
    return Nonlinearity(LICHNEROWICZ, coefficients={"A": A, "B": B, "C": C}, exponents={"p": p, "q": q},
                        w_window=w_window, preset="lichnerowicz")


def exponential_lichnerowicz(A=1.0, B=1.0, C=0.0, w_window=None):
    """A e^{2w} + B e^{-2w} + C"""
    return Nonlinearity(CUSTOM, expression=f"({A})*exp(2*w) + ({B})*exp(-2*w) + ({C})",
                        w_window=w_window, preset="exponential_lichnerowicz")


def iterated_log_nonlinearity(k=2, kind="plain", A=1.0, p=1.0, w_window=None):
    """A w^p log_k w, the iterated logarithm entering through Gamma(log w)"""
    return Nonlinearity(GAMMA_LOG, coefficients={"A": A}, exponents={"p": p}, Gamma=iterated_log(k, kind),
                        w_window=w_window, preset=f"iterated_log_{kind}_{int(k)}")


PRESETS = {
    "zero": zero,
    "log_linear": log_linear,
    "fisher_kpp": fisher_kpp,
    "allen_cahn": allen_cahn,
    "lichnerowicz": lichnerowicz,
    "exponential_lichnerowicz": exponential_lichnerowicz,
    "iterated_log": iterated_log_nonlinearity,
}


def preset(name, w_window=None, **params):
    try:
        builder = PRESETS[name]
    except KeyError:
        raise exceptions.ConfigException(f"Unknown nonlinearity preset {name!r}, expected one of {sorted(PRESETS)}")
    try:
        return builder(w_window=w_window, **params)
    except TypeError as e:
        raise exceptions.ConfigException(f"Invalid parameters for preset {name!r}: {e}")


#   ___                  _   _ _   _
#  / _ \ _  _ __ _ _ _ | |_(_) |_(_)___ ___
# | (_) | || / _` | ' \|  _| |  _| / -_|_-<
#  \__\_\\_,_\__,_|_||_|\__|_|\__|_\___/__/
#

def eval_with_partials(G, t, r, w):
    """
    Evaluate G and its partials at (t, r, w)

    Returns:
        the tuple (G, G_w, G_x, G_ww, G_xw)
    Raises:
        DomainViolation: when w is outside the positivity window or a value is not finite
    """
    wa = np.asarray(w, dtype=float)
    lo, hi = G.w_window
    outside = ~((wa >= lo) & (wa <= hi))
    if np.any(outside):
        raise exceptions.DomainViolation(f"w outside the positivity window [{lo}, {hi}]",
                                         payload={"w": float(wa[outside].flat[0])})
    p = G.partials(t, r, wa)
    values = (p.G, p.G_w, p.G_x, p.G_ww, p.G_xw)
    for name, v in zip(("G", "G_w", "G_x", "G_ww", "G_xw"), values):
        bad = ~np.isfinite(v)
        if np.any(bad):
            raise exceptions.DomainViolation(f"{name} is not finite, a nested log may be undefined",
                                             payload={"w": float(np.broadcast_to(wa, bad.shape)[bad].flat[0])})
    if np.ndim(values[0]) == 0:
        return tuple(float(v) for v in values)
    return values


def _radial_nodes(grid):
    """Uniform radial nodes from a solver grid or an array starting at the pole"""
    r = getattr(grid, "r", grid)
    r = np.asarray(r, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise exceptions.GridTooCoarse("a radial grid needs at least two nodes")
    return r, float(r[1] - r[0])


def delta_phi_G_frozen(G, space, t, w, grid):
    """Discrete Δ_φ of the frozen field x -> G(t, x, w) on the radial grid"""
    r, dr = _radial_nodes(grid)
    field = np.broadcast_to(G(t, r, w), r.shape)
    return weighted_laplacian_radial(space, field, dr)


def _samples(sol, region):
    """(t, r, w) samples of a solution on a cylinder, or on the whole field"""
    if region is None:
        t = sol.t[:, None] * np.ones_like(sol.r)[None, :]
        r = np.ones_like(sol.t)[:, None] * sol.r[None, :]
        return t, r, sol.w
    s = region.select(sol)
    return s.t, s.r, s.w


def _positive(w):
    if np.any(~(w > 0)):
        raise exceptions.NonPositiveSolution("the solution is not strictly positive on the region",
                                             payload={"min_w": float(np.min(w))})


def _sup_positive(values):
    return max(0.0, float(np.max(values))) if np.size(values) else 0.0


def gamma_quantities(G, sol, space, region, alpha):
    """
    The gamma quantities of G along a solution on a cylinder

    :return: Munch(gamma_A, gamma_B, gamma_C, gamma_D, gamma_E, alpha, region)
    """
    t, r, w = _samples(sol, region)
    _positive(w)
    p = G.partials(t, r, w)
    with np.errstate(all="ignore"):
        gamma_A = _sup_positive(-alpha * w * p.G_ww + p.G_w - p.G / w)
        gamma_B = float(np.max(np.abs(alpha * p.G_xw - p.G_x / w)))
        gamma_C = _sup_positive(p.G_w - p.G / w)
        if G.is_spatially_constant():
            gamma_D = 0.0
        else:
            gamma_D = _sup_positive(-G.frozen_laplacian(space, t, r, w) / w)
        gamma_E = float(np.min(p.G / w))
    return Munch(
        gamma_A=gamma_A,
        gamma_B=gamma_B,
        gamma_C=gamma_C,
        gamma_D=gamma_D,
        gamma_E=gamma_E,
        alpha=alpha,
        region=region.to_dict() if region is not None else None,
    )


def souplet_zhang_sup_terms(G, sol, region, D):
    """
    The two nonlinearity brackets of the Souplet-Zhang estimate, each raised to its power:
    sup (|G_x| / (w (1-h)^2))^(1/3) and sup [(w (1-h) G_w + h G) / (w (1-h)^2)]_+^(1/2), h = log(w/D)
    """
    t, r, w = _samples(sol, region)
    _positive(w)
    if np.max(w) > D:
        raise exceptions.BoundViolated(f"sup w exceeds D={D}", payload={"sup_w": float(np.max(w)), "D": D})
    p = G.partials(t, r, w)
    h = np.log(w / D)
    a = 1.0 - h
    term_x = float(np.max(np.abs(p.G_x) / (w * a ** 2))) ** (1.0 / 3.0)
    term_w = _sup_positive((w * a * p.G_w + h * p.G) / (w * a ** 2)) ** 0.5
    return term_x, term_w


def check_parameter_order(alpha, beta):
    if beta < 0 or not alpha > 1 + beta:
        raise exceptions.ParameterOrder(f"need beta >= 0 and alpha > 1 + beta, got alpha={alpha}, beta={beta}")


def hamilton_sup_terms(G, sol, region, alpha, beta):
    """
    The two nonlinearity brackets of the Hamilton estimate:
    sup (|G_x| / w)^(1/3) and sup [(2 w G_w - (2 - (beta+2)/alpha) G) / w]_+^(1/2)
    """
    check_parameter_order(alpha, beta)
    t, r, w = _samples(sol, region)
    _positive(w)
    p = G.partials(t, r, w)
    term_x = float(np.max(np.abs(p.G_x) / w)) ** (1.0 / 3.0)
    term_w = _sup_positive((2.0 * w * p.G_w - (2.0 - (beta + 2.0) / alpha) * p.G) / w) ** 0.5
    return term_x, term_w
