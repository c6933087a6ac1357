import logging
import math
import re
from functools import singledispatch

import numpy as np

from driftlab.exceptions import ParseError

logger = logging.getLogger(__name__)

CONSTANTS = {"pi": math.pi, "e": math.e}


def _coth(x):
    return 1.0 / np.tanh(x)


def _step(x):
    return np.heaviside(x, 0.5)


# public functions of the profile grammar
FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "coth": _coth,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "pos": lambda x: np.maximum(x, 0.0),
}

# only produced by differentiation
_INTERNAL_FUNCTIONS = {
    "sign": np.sign,
    "step": _step,
}

_KINK_FUNCTIONS = ("abs", "pos")


class Expression:
    precedence = 100

    def __init__(self, operands=()):
        self.operands = tuple(operands)

    def __repr__(self):
        return f"{type(self).__name__}{repr(self.operands)}"

    def _parenthesize(self, operand, right=False):
        p = operand.precedence
        if p < self.precedence or (right and p == self.precedence and not isinstance(self, Pow)):
            return f"({operand})"
        return str(operand)

    def __eq__(self, other):
        return (
            type(self) == type(other)  # noqa: E721
            and getattr(self, 'value', None) == getattr(other, 'value', None)
            and self.operands == other.operands
        )

    def __hash__(self):
        return hash((type(self), getattr(self, 'value', None), self.operands))

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, other):
        return power(self, _coerce(other))

    def __rpow__(self, other):
        return power(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def symbols(self):
        """Return the set of variable names the expression depends on"""
        found = set()
        for op in self.operands:
            found |= op.symbols()
        return found

    def depends_on(self, var):
        return var in self.symbols()

    def substitute(self, var, replacement):
        """Replace every occurrence of the variable var with the replacement expression"""
        return self.rebuild([op.substitute(var, replacement) for op in self.operands])

    def rebuild(self, operands):
        return type(self)(*operands)

    def kinks(self):
        """Arguments of abs/pos nodes: the expression is only C^0 where one of them vanishes"""
        found = []
        for op in self.operands:
            found.extend(op.kinks())
        return found

    def __call__(self, **env):
        return evaluate(self, env)


class Number(Expression):
    def __init__(self, value):
        super().__init__(())
        self.value = float(value)

    def __str__(self):
        v = self.value
        if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
            s = str(int(v))
        else:
            s = repr(v)
        return f"({s})" if v < 0 else s

    def __repr__(self):
        return f"Number({self.value})"

    def rebuild(self, operands):
        return self

    def substitute(self, var, replacement):
        return self


class Symbol(Expression):
    def __init__(self, value):
        super().__init__(())
        self.value = value

    def __str__(self):
        return self.value

    def __repr__(self):
        return f"Symbol({self.value!r})"

    def symbols(self):
        return {self.value}

    def rebuild(self, operands):
        return self

    def substitute(self, var, replacement):
        return replacement if self.value == var else self


class Add(Expression):
    precedence = 1
    op_symbol = "+"

    def __init__(self, left, right):
        super().__init__((left, right))

    def __str__(self):
        left, right = self.operands
        return f"{self._parenthesize(left)} {self.op_symbol} {self._parenthesize(right, right=True)}"

    def rebuild(self, operands):
        return add(*operands)


class Sub(Add):
    op_symbol = "-"

    def rebuild(self, operands):
        return sub(*operands)


class Mul(Add):
    precedence = 2
    op_symbol = "*"

    def rebuild(self, operands):
        return mul(*operands)


class Div(Add):
    precedence = 2
    op_symbol = "/"

    def rebuild(self, operands):
        return div(*operands)


class Pow(Add):
    precedence = 4
    op_symbol = "^"

    def __str__(self):
        left, right = self.operands
        lhs = f"({left})" if left.precedence <= self.precedence else str(left)
        rhs = f"({right})" if right.precedence < self.precedence else str(right)
        return f"{lhs}^{rhs}"

    def rebuild(self, operands):
        return power(*operands)


class Neg(Expression):
    precedence = 3

    def __init__(self, operand):
        super().__init__((operand,))

    def __str__(self):
        return f"-{self._parenthesize(self.operands[0])}"

    def rebuild(self, operands):
        return neg(*operands)


class Function(Expression):
    def __init__(self, name, operand):
        super().__init__((operand,))
        self.value = name

    def __str__(self):
        return f"{self.value}({self.operands[0]})"

    def __repr__(self):
        return f"Function({self.value!r}, {self.operands[0]!r})"

    def rebuild(self, operands):
        return call(self.value, *operands)

    def kinks(self):
        found = super().kinks()
        if self.value in _KINK_FUNCTIONS:
            found.append(self.operands[0])
        return found


# simplifying constructors

def _coerce(value):
    if isinstance(value, Expression):
        return value
    return Number(value)


def _is(expr, value):
    return isinstance(expr, Number) and expr.value == value


def add(a, b):
    if isinstance(a, Number) and isinstance(b, Number):
        return Number(a.value + b.value)
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(b, Neg):
        return sub(a, b.operands[0])
    return Add(a, b)


def sub(a, b):
    if isinstance(a, Number) and isinstance(b, Number):
        return Number(a.value - b.value)
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    if a == b:
        return Number(0)
    return Sub(a, b)


def mul(a, b):
    if isinstance(a, Number) and isinstance(b, Number):
        return Number(a.value * b.value)
    if _is(a, 0) or _is(b, 0):
        return Number(0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if _is(a, -1):
        return neg(b)
    if _is(b, -1):
        return neg(a)
    return Mul(a, b)


def div(a, b):
    if isinstance(a, Number) and isinstance(b, Number) and b.value != 0:
        return Number(a.value / b.value)
    if _is(a, 0):
        return Number(0)
    if _is(b, 1):
        return a
    return Div(a, b)


def power(a, b):
    if isinstance(a, Number) and isinstance(b, Number) and a.value > 0:
        return Number(a.value ** b.value)
    if _is(b, 0):
        return Number(1)
    if _is(b, 1):
        return a
    return Pow(a, b)


def neg(a):
    if isinstance(a, Number):
        return Number(-a.value)
    if isinstance(a, Neg):
        return a.operands[0]
    return Neg(a)


def call(name, a):
    if isinstance(a, Number) and name in FUNCTIONS:
        with np.errstate(all="ignore"):
            v = float(FUNCTIONS[name](a.value))
        if math.isfinite(v):
            return Number(v)
    return Function(name, a)


def constant(value):
    return Number(value)


def symbol(name):
    return Symbol(name)


#  ___  _   __  __
# |   \(_) / _|/ _|
# | |) | ||  _|  _|
# |___/|_||_| |_|
#

@singledispatch
def differentiate(expr, var):
    raise NotImplementedError(f"Cannot differentiate a {type(expr).__name__}")


@differentiate.register(Number)
def _(expr, var):
    return Number(0)


@differentiate.register(Symbol)
def _(expr, var):
    return Number(1) if expr.value == var else Number(0)


@differentiate.register(Add)
def _(expr, var):
    left, right = expr.operands
    return add(differentiate(left, var), differentiate(right, var))


@differentiate.register(Sub)
def _(expr, var):
    left, right = expr.operands
    return sub(differentiate(left, var), differentiate(right, var))


@differentiate.register(Mul)
def _(expr, var):
    left, right = expr.operands
    return add(mul(differentiate(left, var), right), mul(left, differentiate(right, var)))


@differentiate.register(Div)
def _(expr, var):
    nume, deno = expr.operands
    dn = differentiate(nume, var)
    dd = differentiate(deno, var)
    if _is(dd, 0):
        return div(dn, deno)
    return div(sub(mul(dn, deno), mul(nume, dd)), power(deno, Number(2)))


@differentiate.register(Pow)
def _(expr, var):
    base, exponent = expr.operands
    db = differentiate(base, var)
    if not exponent.depends_on(var):
        return mul(mul(exponent, power(base, sub(exponent, Number(1)))), db)
    de = differentiate(exponent, var)
    if not base.depends_on(var):
        return mul(mul(expr, call("log", base)), de)
    return mul(expr, add(mul(de, call("log", base)), div(mul(exponent, db), base)))


@differentiate.register(Neg)
def _(expr, var):
    return neg(differentiate(expr.operands[0], var))


_OUTER = {
    "sin": lambda u: call("cos", u),
    "cos": lambda u: neg(call("sin", u)),
    "sinh": lambda u: call("cosh", u),
    "cosh": lambda u: call("sinh", u),
    "tanh": lambda u: sub(Number(1), power(call("tanh", u), Number(2))),
    "coth": lambda u: sub(Number(1), power(call("coth", u), Number(2))),
    "exp": lambda u: call("exp", u),
    "log": lambda u: div(Number(1), u),
    "sqrt": lambda u: div(Number(0.5), call("sqrt", u)),
    "abs": lambda u: call("sign", u),
    "pos": lambda u: call("step", u),
    "sign": lambda u: Number(0),
    "step": lambda u: Number(0),
}


@differentiate.register(Function)
def _(expr, var):
    inner = expr.operands[0]
    du = differentiate(inner, var)
    if _is(du, 0):
        return Number(0)
    return mul(_OUTER[expr.value](inner), du)


def derivative(expr, var, order=1):
    for _ in range(order):
        expr = differentiate(expr, var)
    return expr


#  ___           _
# | __|_ ____ _ | |
# | _|\ V / _` || |
# |___|\_/\__,_||_|
#

@singledispatch
def _eval(expr, env):
    raise NotImplementedError(f"Cannot evaluate a {type(expr).__name__}")


@_eval.register(Number)
def _(expr, env):
    return expr.value


@_eval.register(Symbol)
def _(expr, env):
    try:
        return env[expr.value]
    except KeyError:
        raise ParseError(f"Unbound variable '{expr.value}'")


@_eval.register(Add)
def _(expr, env):
    return _eval(expr.operands[0], env) + _eval(expr.operands[1], env)


@_eval.register(Sub)
def _(expr, env):
    return _eval(expr.operands[0], env) - _eval(expr.operands[1], env)


@_eval.register(Mul)
def _(expr, env):
    return _eval(expr.operands[0], env) * _eval(expr.operands[1], env)


@_eval.register(Div)
def _(expr, env):
    return np.divide(_eval(expr.operands[0], env), _eval(expr.operands[1], env))


@_eval.register(Pow)
def _(expr, env):
    base = np.asarray(_eval(expr.operands[0], env), dtype=float)
    return np.power(base, _eval(expr.operands[1], env))


@_eval.register(Neg)
def _(expr, env):
    return -_eval(expr.operands[0], env)


@_eval.register(Function)
def _(expr, env):
    fn = FUNCTIONS.get(expr.value) or _INTERNAL_FUNCTIONS[expr.value]
    return fn(_eval(expr.operands[0], env))


def evaluate(expr, env=None, **kwargs):
    """
    Evaluate an expression on scalars or numpy arrays
    :param expr: the expression
    :param env: mapping variable name -> value (arrays broadcast)
    :return: a float array broadcast to the shape of the inputs
    """
    env = dict(env or {}, **kwargs)
    with np.errstate(all="ignore"):
        value = _eval(expr, env)
    shape = np.broadcast(*[np.asarray(v) for v in env.values()]).shape if env else ()
    return np.broadcast_to(np.asarray(value, dtype=float), shape).copy() if shape else np.asarray(value, dtype=float)


#  ___
# | _ \__ _ _ _ ___ ___
# |  _/ _` | '_(_-</ -_)
# |_| \__,_|_| /__/\___|
#

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),])
""", re.VERBOSE)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"Unexpected character {text[pos]!r}", offset=pos, text=text)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group(kind)
            if value == "**":
                value = "^"
            tokens.append((kind, value, pos))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text, variables):
        self.text = text
        self.variables = set(variables)
        self.tokens = _tokenize(text)
        self.i = 0

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def _offset(self):
        tok = self._peek()
        return tok[2] if tok is not None else len(self.text)

    def _error(self, message):
        raise ParseError(message, offset=self._offset(), text=self.text)

    def _accept(self, value):
        tok = self._peek()
        if tok is not None and tok[0] == "op" and tok[1] == value:
            self.i += 1
            return True
        return False

    def _expect(self, value):
        if not self._accept(value):
            tok = self._peek()
            found = "end of input" if tok is None else repr(tok[1])
            self._error(f"Expected {value!r}, found {found}")

    def parse(self):
        if not self.tokens:
            self._error("Empty expression")
        expr = self.expression()
        if self._peek() is not None:
            self._error(f"Unexpected token {self._peek()[1]!r}")
        return expr

    def expression(self):
        expr = self.term()
        while True:
            if self._accept("+"):
                expr = add(expr, self.term())
            elif self._accept("-"):
                expr = sub(expr, self.term())
            else:
                return expr

    def term(self):
        expr = self.unary()
        while True:
            if self._accept("*"):
                expr = mul(expr, self.unary())
            elif self._accept("/"):
                expr = div(expr, self.unary())
            else:
                return expr

    def unary(self):
        if self._accept("-"):
            return neg(self.unary())
        if self._accept("+"):
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self._accept("^"):
            # right associative, binds tighter than unary minus on the left
            return power(base, self.unary())
        return base

    def atom(self):
        tok = self._peek()
        if tok is None:
            self._error("Unexpected end of input")
        kind, value, offset = tok
        if kind == "number":
            self.i += 1
            return Number(float(value))
        if kind == "name":
            self.i += 1
            if value in FUNCTIONS:
                self._expect("(")
                arg = self.expression()
                self._expect(")")
                return call(value, arg)
            if value in self.variables:
                return Symbol(value)
            if value in CONSTANTS:
                return Number(CONSTANTS[value])
            raise ParseError(f"Unknown identifier {value!r}", offset=offset, text=self.text)
        if self._accept("("):
            expr = self.expression()
            self._expect(")")
            return expr
        self._error(f"Unexpected token {value!r}")


def parse(text, variables=("r",)):
    """
    Parse an arithmetic expression
    :param text: the expression source
    :param variables: the names allowed as free variables
    :return: the expression tree
    """
    if isinstance(text, Expression):
        return text
    if isinstance(text, (int, float)):
        return Number(text)
    if not isinstance(text, str):
        raise ParseError(f"Cannot parse a {type(text).__name__} as expression")
    return _Parser(text, variables).parse()


#  ___              _
# | _ \_ _ ___ ___ ___| |_ ___
# |  _/ '_/ -_|_-</ -_)  _(_-<
# |_| |_| \___/__/\___|\__/__/
#

_PRESET = re.compile(r"^\s*([a-z_]+)\s*(?:\[\s*([^\]]*)\s*\])?\s*$")
_CALL_PRESET = re.compile(r"^\s*([a-z_]+)\s*\(\s*([^)]*)\)\s*$")


def _preset_arg(raw, default, text):
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"Invalid preset parameter {raw!r}", offset=text.find(raw), text=text)


def profile(spec):
    """
    Build a radial profile from a preset name or an expression in r.

    Presets: euclidean (r), hyperbolic[k] (sinh(sqrt(k) r)/sqrt(k)),
    sphere[k] (sin(sqrt(k) r)/sqrt(k)), gaussian[a] (a r^2/2), zero
    """
    if isinstance(spec, (Expression, int, float)):
        return parse(spec)
    m = _PRESET.match(spec)
    if m is not None:
        name, raw = m.group(1), m.group(2)
        r = Symbol("r")
        if name == "euclidean" and raw is None:
            return r
        if name == "zero" and raw is None:
            return Number(0)
        if name in ("hyperbolic", "sphere"):
            k = _preset_arg(raw, 1.0, spec)
            if k <= 0:
                raise ParseError(f"Preset {name} needs k > 0", offset=spec.find("["), text=spec)
            sk = math.sqrt(k)
            fn = "sinh" if name == "hyperbolic" else "sin"
            return div(call(fn, mul(Number(sk), r)), Number(sk))
        if name == "gaussian":
            a = _preset_arg(raw, 1.0, spec)
            return mul(Number(a / 2.0), power(r, Number(2)))
    return parse(spec, ("r",))


def initial_profile(spec, n):
    """
    Build the initial datum of a parabolic run.

    Presets: heat_kernel(t0), the n-dimensional Euclidean heat kernel at time t0,
    and bump(a, s) = 1 + a exp(-r^2/s^2)
    """
    if isinstance(spec, (Expression, int, float)):
        return parse(spec)
    m = _CALL_PRESET.match(spec)
    if m is not None and m.group(1) in ("heat_kernel", "bump"):
        name = m.group(1)
        args = [a.strip() for a in m.group(2).split(",") if a.strip()]
        values = [_preset_arg(a, None, spec) for a in args]
        r = Symbol("r")
        if name == "heat_kernel":
            if len(values) != 1 or values[0] <= 0:
                raise ParseError("heat_kernel needs one positive time", offset=spec.find("("), text=spec)
            t0 = values[0]
            amplitude = (4.0 * math.pi * t0) ** (-n / 2.0)
            return mul(Number(amplitude), call("exp", neg(div(power(r, Number(2)), Number(4.0 * t0)))))
        a, s = (values + [1.0, 1.0])[:2] if values else (1.0, 1.0)
        return add(Number(1), mul(Number(a), call("exp", neg(div(power(r, Number(2)), Number(s * s))))))
    return parse(spec, ("r",))
