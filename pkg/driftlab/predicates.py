"""
Liouville hypotheses of a nonlinearity, checked by dense sampling of w.

Every predicate evaluates its conditions on a log-spaced w sample of the window,
then once more at twice the density; it holds only when both samples agree.
"""
import logging

import numpy as np
from munch import Munch

from driftlab import defaults, exceptions
from driftlab.expressions import derivative, evaluate
from driftlab.nonlinearity import GAMMA_LOG, POWER_SUM, SPLIT_XY

logger = logging.getLogger(__name__)

THETA_CONDITION = "1 - (beta/2 + 1)/alpha"


def _theta_grid():
    return np.linspace(0.0, 1.0, defaults.PARAMETER_GRID + 2)[1:-1]


def _alpha_grid():
    return 1.0 + np.geomspace(1e-3, 1e3, defaults.PARAMETER_GRID)


def _gamma_grid(floor):
    return np.unique(np.concatenate([[max(floor, 0.0)], np.geomspace(1e-3, 1e3, defaults.PARAMETER_GRID)]))


class _Samples:
    """w samples of the window with the (r, t) samples of non-autonomous coefficients"""

    def __init__(self, G, window, count, params):
        lo, hi = window
        w = np.geomspace(lo, hi, count)
        keep = np.ones_like(w, dtype=bool)
        for ws in G.singular_points(window):
            keep &= np.abs(w - ws) > defaults.SINGULAR_NEIGHBOURHOOD * ws
        self.w = w[keep][None, :]
        if G.is_autonomous():
            self.r = np.zeros((1, 1))
            self.t = np.zeros((1, 1))
        else:
            rr, tt = np.meshgrid(np.linspace(0.0, params.get("R", 1.0), 9),
                                 np.linspace(0.0, params.get("T", 1.0), 5))
            self.r = rr.reshape(-1, 1)
            self.t = tt.reshape(-1, 1)
        self.G = G
        self.partials = G.partials(self.t, self.r, self.w)
        self.s = np.log(self.w)

    def coefficient(self, name):
        return self.G.coefficient_values(name, self.r, self.t)


def _pointwise(label, q, scale, samples):
    """The first sample violating q >= 0 up to the relative tolerance, or None"""
    q, scale = np.broadcast_arrays(q, scale)
    bad = ~(q >= -defaults.PREDICATE_TOLERANCE * (np.abs(scale) + 1e-300))
    if not np.any(bad):
        return None
    # first violating w, then the first (r, t) row
    col = int(np.argmax(np.any(bad, axis=0)))
    row = int(np.argmax(bad[:, col]))
    witness = Munch(condition=label, w=float(samples.w[0, col]), value=float(q[row, col]))
    if not samples.G.is_autonomous():
        witness.r = float(samples.r[row, 0])
        witness.t = float(samples.t[row, 0])
    return witness


def _parameter(label, name, value, ok):
    return None if ok else Munch(condition=label, parameter=name, value=float(value))


def _coefficient_sign(samples, term):
    values = samples.coefficient(term.coefficient)
    if term.sign == "+":
        label, ok = f"{term.coefficient} >= 0", np.all(values >= 0)
    else:
        label, ok = f"{term.coefficient} <= 0", np.all(values <= 0)
    if ok:
        return None
    return Munch(condition=label, parameter=term.coefficient, value=float(values.flat[int(
        np.argmin(values) if term.sign == "+" else np.argmax(values))]))


def _collect(*failures):
    return [f for f in failures if f is not None]


def _search(candidates, check):
    """The first candidate without failures, else the one with the fewest"""
    best = None
    for candidate in candidates:
        failures = check(candidate)
        if not failures:
            return candidate, []
        if best is None or len(failures) < len(best[1]):
            best = (candidate, failures)
    return best


def _alpha_beta(params):
    alpha, beta = params.get("alpha"), params.get("beta", 0.0)
    if alpha is None:
        return None
    if beta < 0 or not alpha > 1 + beta:
        raise exceptions.ParameterOrder(f"need beta >= 0 and alpha > 1 + beta, got alpha={alpha}, beta={beta}")
    return 1.0 - (beta / 2.0 + 1.0) / alpha


def _theta_params(theta, params):
    if params.get("alpha") is not None:
        return Munch(alpha=params["alpha"], beta=params.get("beta", 0.0), theta=theta)
    return Munch(alpha=1.0 / (1.0 - theta), beta=0.0, theta=theta)


def _require_family(G, families):
    if G.family not in families:
        return [Munch(condition=f"family in {list(families)}", parameter="family", value=None)]
    return None


#  ___            _ _         _
# | _ \_ _ ___ __| (_)__ __ _| |_ ___ ___
# |  _/ '_/ -_) _` | / _/ _` |  _/ -_|_-<
# |_| |_| \___\__,_|_\__\__,_|\__\___/__/
#

def _log_bracket(G, samples, params):
    D = params.get("D", samples.w.max())
    P = samples.partials
    w = samples.w
    h = np.log(w / D)
    bracket = (1.0 - h) * w * P.G_w + h * P.G
    q = np.where(w <= D, -bracket, 0.0)
    return Munch(), _collect(_pointwise("[1 - log(w/D)] w G' + log(w/D) G <= 0", q,
                                      np.abs((1.0 - h) * w * P.G_w) + np.abs(h * P.G), samples))


def _power_bracket(G, samples, params):
    P = samples.partials
    w = samples.w

    def check(theta):
        return _collect(_pointwise(f"[{THETA_CONDITION}] G - w G' >= 0", theta * P.G - w * P.G_w,
                                 np.abs(theta * P.G) + np.abs(w * P.G_w), samples))

    theta = _alpha_beta(params)
    if theta is not None:
        return _theta_params(theta, params), check(theta)
    theta, failures = _search(_theta_grid(), check)
    return _theta_params(theta, params), failures


def _x_conditions(G, samples):
    w = samples.w[0]
    if G.X is not None:
        X = evaluate(G.X, w=w)
        dX = evaluate(derivative(G.X, "w"), w=w)
    else:
        X = np.zeros_like(w)
        dX = np.zeros_like(w)
        for term in G.power_terms:
            c = float(np.max(samples.coefficient(term.coefficient)))
            X = X + c * w ** term.value
            dX = dX + c * term.value * w ** (term.value - 1.0)
    return _collect(
        _pointwise("X'(w) <= 0", -dX[None, :], np.abs(dX)[None, :], samples),
        _pointwise("X(w) - w X'(w) >= 0", (X - w * dX)[None, :], (np.abs(X) + np.abs(w * dX))[None, :], samples),
    )


def _y_values(G, samples):
    s = samples.s[0]
    return (evaluate(G.Y, s=s), evaluate(derivative(G.Y, "s"), s=s), evaluate(derivative(G.Y, "s", 2), s=s))


def _split_xy(G, samples, params):
    wrong = _require_family(G, (SPLIT_XY,))
    if wrong:
        return Munch(), wrong
    failures = _x_conditions(G, samples)
    if G.Y is None:
        return Munch(branch=None), failures
    r = G.exponents.get("r", 1.0)
    lo, hi = float(samples.w.min()), float(samples.w.max())
    Y, dY, _ = _y_values(G, samples)
    s = samples.s[0]
    if lo >= 1.0:
        return Munch(branch="Y1"), failures + _collect(
            _parameter("r >= 1", "r", r, r >= 1.0),
            _pointwise("Y(s) <= 0", -Y[None, :], np.abs(Y)[None, :], samples),
            _pointwise("Y'(s) <= 0", -dY[None, :], np.abs(dY)[None, :], samples),
        )
    if hi <= 1.0:
        def check(gamma):
            return _collect(
                _parameter("r <= min(gamma, 1)", "r", r, r <= min(gamma, 1.0)),
                _pointwise("Y(s) >= 0", Y[None, :], np.abs(Y)[None, :], samples),
                _pointwise("Y'(s) <= 0", -dY[None, :], np.abs(dY)[None, :], samples),
                _pointwise("s Y'(s) >= gamma Y(s)", (s * dY - gamma * Y)[None, :],
                           (np.abs(s * dY) + np.abs(gamma * Y))[None, :], samples),
            )

        if params.get("gamma") is not None:
            gamma = float(params["gamma"])
            return Munch(branch="Y2", gamma=gamma), failures + check(gamma)
        gamma, y_failures = _search(_gamma_grid(r), check)
        return Munch(branch="Y2", gamma=float(gamma)), failures + y_failures
    return Munch(branch=None), failures + [
        Munch(condition="w >= 1 or w <= 1 on the whole window", parameter="w_window", value=[lo, hi])]


def _power_sum_terms(G, samples, theta):
    failures = []
    for term in G.power_terms:
        failures.extend(_collect(_coefficient_sign(samples, term)))
        if term.sign == "+":
            failures.extend(_collect(_parameter(f"{term.exponent} <= {THETA_CONDITION}", term.exponent, term.value,
                                              term.value <= theta)))
        else:
            failures.extend(_collect(_parameter(f"{term.exponent} >= {THETA_CONDITION}", term.exponent, term.value,
                                              term.value >= theta)))
    return failures


def _power_sum(G, samples, params):
    wrong = _require_family(G, (POWER_SUM,))
    if wrong:
        return Munch(), wrong

    def check(theta):
        return _power_sum_terms(G, samples, theta)

    theta = _alpha_beta(params)
    if theta is not None:
        return _theta_params(theta, params), check(theta)
    theta, failures = _search(_theta_grid(), check)
    return _theta_params(theta, params), failures


def _power_log(G, samples, params):
    wrong = _require_family(G, (SPLIT_XY,))
    if wrong:
        return Munch(), wrong
    if G.X is not None:
        return Munch(), [Munch(condition="X given by A w^p + B w^q", parameter="X", value=str(G.X))]
    r = G.exponents.get("r", 1.0)
    if G.Y is not None:
        Y, dY, _ = _y_values(G, samples)
    else:
        Y = dY = np.zeros(samples.w.shape[1])

    def check(theta):
        return _power_sum_terms(G, samples, theta) + _collect(
            _pointwise(f"Y'(s) + [r - ({THETA_CONDITION})] Y(s) <= 0", -(dY + (r - theta) * Y)[None, :],
                       (np.abs(dY) + np.abs((r - theta) * Y))[None, :], samples))

    theta = _alpha_beta(params)
    if theta is None:
        theta, failures = _search(_theta_grid(), check)
    else:
        failures = check(theta)
    found = _theta_params(theta, params)
    lo, hi = float(samples.w.min()), float(samples.w.max())
    found.branch = None
    if np.all(Y <= 0) and np.all(dY <= 0) and lo >= 1.0 and r >= theta:
        found.branch = "H1"
    elif np.all(Y >= 0) and np.all(dY <= 0) and hi <= 1.0 and r <= theta:
        found.branch = "H2"
    return found, failures


def _bakry_emery_m(G, samples, params):
    P = samples.partials
    w = samples.w
    base = P.G - w * P.G_w
    curvature = w ** 2 * P.G_ww
    failures = _collect(
        _pointwise("G >= 0", P.G, np.abs(P.G), samples),
        _pointwise("G - w G_w >= 0", base, np.abs(P.G) + np.abs(w * P.G_w), samples),
    )

    def check(alpha):
        return _collect(_pointwise("G - w G_w + alpha w^2 G_ww >= 0", base + alpha * curvature,
                                 np.abs(P.G) + np.abs(w * P.G_w) + np.abs(alpha * curvature), samples))

    alpha = params.get("alpha")
    if alpha is not None:
        if not alpha > 1:
            raise exceptions.ParameterOrder(f"need alpha > 1, got alpha={alpha}")
        return Munch(alpha=alpha), failures + check(alpha)
    alpha, alpha_failures = _search(_alpha_grid(), check)
    return Munch(alpha=float(alpha)), failures + alpha_failures


def _power_sum_m(G, samples, params):
    wrong = _require_family(G, (POWER_SUM,))
    if wrong:
        return Munch(), wrong
    failures = []
    for term in G.power_terms:
        values = samples.coefficient(term.coefficient)
        failures.extend(_collect(
            _parameter(f"{term.coefficient} >= 0", term.coefficient, np.min(values), np.all(values >= 0)),
            _parameter(f"{term.exponent} <= 1", term.exponent, term.value, term.value <= 1.0),
        ))
    return Munch(), failures


def _log_m(G, samples, params):
    wrong = _require_family(G, (GAMMA_LOG,))
    if wrong:
        return Munch(), wrong
    s = samples.s[0]
    Y = evaluate(G.Gamma, s=s)
    dY = evaluate(derivative(G.Gamma, "s"), s=s)
    ddY = evaluate(derivative(G.Gamma, "s", 2), s=s)
    p = G.exponents.get("p", 1.0)
    q = G.exponents.get("q", 1.0)
    failures = _collect(
        _parameter("p = 1", "p", p, p == 1.0),
        _parameter("A >= 0", "A", np.min(samples.coefficient("A")) if "A" in G.coefficients else 1.0,
                   "A" not in G.coefficients or np.all(samples.coefficient("A") >= 0)),
        _parameter("B >= 0", "B", np.min(samples.coefficient("B")), np.all(samples.coefficient("B") >= 0)),
        _parameter("C >= 0", "C", np.min(samples.coefficient("C")), np.all(samples.coefficient("C") >= 0)),
        _parameter("q <= 1", "q", q, "B" not in G.coefficients or q <= 1.0),
        _pointwise("Y >= 0", Y[None, :], np.abs(Y)[None, :], samples),
        _pointwise("Y' <= 0", -dY[None, :], np.abs(dY)[None, :], samples),
    )

    def check(alpha):
        return _collect(_pointwise("alpha Y'' + (alpha - 1) Y' >= 0", (alpha * ddY + (alpha - 1.0) * dY)[None, :],
                                 (np.abs(alpha * ddY) + np.abs((alpha - 1.0) * dY))[None, :], samples))

    alpha = params.get("alpha")
    if alpha is not None:
        if not alpha > 1:
            raise exceptions.ParameterOrder(f"need alpha > 1, got alpha={alpha}")
        return Munch(alpha=alpha), failures + check(alpha)
    alpha, alpha_failures = _search(_alpha_grid(), check)
    return Munch(alpha=float(alpha)), failures + alpha_failures


def _ancient(G, samples, params):
    P = samples.partials
    w = samples.w
    a = float(np.min(P.G))
    return Munch(a=a), _collect(
        _pointwise("G'(w) <= 0", -P.G_w, np.abs(P.G_w), samples),
        _pointwise("G - w G' >= 0", P.G - w * P.G_w, np.abs(P.G) + np.abs(w * P.G_w), samples),
        _parameter("inf G > 0", "a", a, a > 0),
    )


PREDICATES = {
    "log_bracket": _log_bracket,
    "power_bracket": _power_bracket,
    "split_xy": _split_xy,
    "power_sum": _power_sum,
    "power_log": _power_log,
    "bakry_emery_m": _bakry_emery_m,
    "power_sum_m": _power_sum_m,
    "log_m": _log_m,
    "ancient": _ancient,
}

# curvature hypothesis each predicate's Liouville statement rests on
CURVATURE = {
    "log_bracket": "ric_phi",
    "power_bracket": "ric_phi",
    "split_xy": "ric_phi",
    "power_sum": "ric_phi",
    "power_log": "ric_phi",
    "bakry_emery_m": "ric_phi_m",
    "power_sum_m": "ric_phi_m",
    "log_m": "ric_phi_m",
    "ancient": "ric_phi",
}


def _window(G, w_window):
    lo, hi = G.w_window
    if w_window is not None:
        if float(w_window[0]) < lo or float(w_window[1]) > hi or not 0 < float(w_window[0]) < float(w_window[1]):
            raise exceptions.DomainViolation(f"window {list(w_window)} is not inside the positivity window [{lo}, {hi}]")
        lo, hi = float(w_window[0]), float(w_window[1])
    return lo, hi


def liouville_predicate(G, theorem, w_window=None, params=None):
    """
    Check the hypotheses of a Liouville statement for the nonlinearity G

    Args:
        G (Nonlinearity): the nonlinearity
        theorem (str): the predicate id, one of PREDICATES
        w_window (tuple): the sampled range of w, inside the positivity window of G
        params (dict): alpha, beta, gamma, D as the predicate needs them; missing
            parameters that the statement quantifies with "for some" are searched
    Returns:
        Munch(theorem, holds, witness, reason, sampled_on, params, stable, curvature)
    Raises:
        UnknownPredicate, ParameterOrder, DomainViolation
    """
    try:
        check = PREDICATES[theorem]
    except KeyError:
        raise exceptions.UnknownPredicate(f"Unknown predicate {theorem!r}, expected one of {sorted(PREDICATES)}")
    params = dict(params or {})
    lo, hi = _window(G, w_window)
    if theorem == "log_bracket":
        params.setdefault("D", hi)
        hi = min(hi, params["D"])
    outcomes = []
    for count in (defaults.PREDICATE_SAMPLES, 2 * defaults.PREDICATE_SAMPLES - 1):
        samples = _Samples(G, (lo, hi), count, params)
        with np.errstate(all="ignore"):
            found, failures = check(G, samples, params)
        outcomes.append((found, failures))
    (found, failures), (_, fine_failures) = outcomes
    stable = (not failures) == (not fine_failures)
    holds = not failures and not fine_failures
    witness = (failures or fine_failures or [None])[0]
    if holds:
        reason = f"sampled on [{lo:g}, {hi:g}]"
    else:
        reason = f"{witness.condition} fails" + (" at refinement" if not failures else "")
    logger.debug(f"predicate {theorem} on {G.name}: holds={holds} {reason}")
    return Munch(
        theorem=theorem,
        holds=bool(holds),
        witness=witness,
        reason=reason,
        sampled_on=[lo, hi],
        params=found,
        stable=bool(stable),
        curvature=CURVATURE[theorem],
    )
