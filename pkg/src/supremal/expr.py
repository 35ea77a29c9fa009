"""Small arithmetic expression language for profiles and initial fields.

Expressions are parsed by a recursive-descent parser into a tree of nodes that
evaluate on numpy arrays.  No Python ``eval`` is involved, so scenario files
stay declarative.

Grammar::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := primary (('^' | '**') unary)?
    primary := NUMBER | NAME | NAME '(' expr (',' expr)* ')'
             | '(' expr ')' | '|' expr '|'

Variables are ``x``, ``x1``, ``x2`` (position) and ``xi``, ``xi1``, ``xi2``
(gradient; the Greek letters ``ξ``, ``ξ1``, ``ξ2`` are accepted too).  In two
dimensions ``xi`` is a vector and may only appear under ``abs``/``norm`` or
between bars, which give the euclidean norm.
"""

import math
import re

import numpy as np

__all__ = ["Expr", "ExprError", "parse", "num", "maximum", "minimum", "norm_xi"]


class ExprError(ValueError):
    """Raised for syntax errors and ill-typed evaluations."""


_FUNCS = {
    "abs": (1, 1),
    "norm": (1, 1),
    "min": (2, None),
    "max": (2, None),
    "pow": (2, 2),
    "sqrt": (1, 1),
    "exp": (1, 1),
    "log": (1, 1),
    "sin": (1, 1),
    "cos": (1, 1),
}

_CONSTS = {"pi": math.pi, "inf": math.inf}

_ALIASES = {"ξ": "xi", "ξ1": "xi1", "ξ2": "xi2"}

_VARS = {"x", "x1", "x2", "xi", "xi1", "xi2"}

class _Vec(tuple):
    # components of a vector-valued gradient; only legal under a norm
    pass


class Expr:
    """Base node."""

    def evaluate(self, env):
        raise NotImplementedError

    def variables(self):
        return set()

    def __call__(self, **env):
        out = _scalar(self.evaluate(env))
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return "Expr(%r)" % str(self)


class _Num(Expr):
    def __init__(self, value):
        self.value = float(value)

    def evaluate(self, env):
        return np.float64(self.value)

    def __str__(self):
        if math.isinf(self.value):
            return "inf" if self.value > 0 else "(-inf)"
        text = repr(self.value)
        if text.endswith(".0"):
            text = text[:-2]
        return text if self.value >= 0 else "(%s)" % text


class _Var(Expr):
    def __init__(self, name):
        self.name = name

    def evaluate(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise ExprError("variable %r is not defined here" % self.name) from None

    def variables(self):
        return {self.name}

    def __str__(self):
        return self.name


class _Neg(Expr):
    def __init__(self, arg):
        self.arg = arg

    def evaluate(self, env):
        return -_scalar(self.arg.evaluate(env))

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return "(-%s)" % self.arg


class _BinOp(Expr):
    def __init__(self, op, left, right):
        self.op, self.left, self.right = op, left, right

    def evaluate(self, env):
        a = _scalar(self.left.evaluate(env))
        b = _scalar(self.right.evaluate(env))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.op == "+":
                return a + b
            if self.op == "-":
                return a - b
            if self.op == "*":
                # 0 * inf is taken as 0 so that inf-valued profiles can be scaled
                out = np.multiply(a, b)
                return np.where((a == 0) | (b == 0), 0.0, out)
            if self.op == "/":
                return np.divide(a, b)
            return np.power(a, b)

    def variables(self):
        return self.left.variables() | self.right.variables()

    def __str__(self):
        op = "^" if self.op == "^" else " %s " % self.op
        return "(%s%s%s)" % (self.left, op, self.right)


class _Call(Expr):
    def __init__(self, name, args):
        self.name, self.args = name, tuple(args)

    def evaluate(self, env):
        name = self.name
        if name in ("abs", "norm"):
            v = self.args[0].evaluate(env)
            if isinstance(v, _Vec):
                return np.sqrt(sum(np.square(c) for c in v))
            return np.abs(v)
        vals = [_scalar(a.evaluate(env)) for a in self.args]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if name == "min":
                return _reduce(np.minimum, vals)
            if name == "max":
                return _reduce(np.maximum, vals)
            if name == "pow":
                return np.power(vals[0], vals[1])
            return getattr(np, name)(vals[0])

    def variables(self):
        out = set()
        for a in self.args:
            out |= a.variables()
        return out

    def __str__(self):
        return "%s(%s)" % (self.name, ", ".join(str(a) for a in self.args))


def _reduce(fn, vals):
    out = vals[0]
    for v in vals[1:]:
        out = fn(out, v)
    return out


def _scalar(v):
    if isinstance(v, _Vec):
        raise ExprError("vector-valued 'xi' is only allowed inside abs()/norm() or |...|")
    return v


# ---------------------------------------------------------------------------
# builders used by supremand combinators

def num(value):
    return _Num(value)


def maximum(*args):
    return _Call("max", args)


def minimum(*args):
    return _Call("min", args)


def norm_xi():
    return _Call("norm", [_Var("xi")])


def divide(a, b):
    return _BinOp("/", a, b)


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_ξ][A-Za-z_0-9ξ]*)"
    r"|(?P<op>\*\*|[-+*/^(),|]))"
)


def _tokenize(text):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        while text[pos].isspace():
            pos += 1
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprError("unexpected character %r at column %d in %r" % (text[pos], pos + 1, text))
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "op" and val == "**":
            val = "^"
        out.append((kind, val, m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, val):
        tok = self.take()
        if tok[1] != val:
            self.fail(tok, "expected %r" % val)
        return tok

    def fail(self, tok, msg):
        what = "end of input" if tok[0] == "end" else repr(tok[1])
        raise ExprError("%s but found %s at column %d in %r" % (msg, what, tok[2] + 1, self.text))

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.fail(tok, "expected operator")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = _BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = _BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("-", "+"):
            self.take()
            arg = self.unary()
            return _Neg(arg) if tok[1] == "-" else arg
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return _BinOp("^", base, self.unary())
        return base

    def primary(self):
        tok = self.take()
        kind, val = tok[0], tok[1]
        if kind == "num":
            return _Num(float(val))
        if kind == "name":
            name = _ALIASES.get(val, val)
            if self.peek()[1] == "(":
                if name not in _FUNCS:
                    self.fail(tok, "unknown function")
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                lo, hi = _FUNCS[name]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    self.fail(tok, "wrong number of arguments for %s()" % name)
                return _Call(name, args)
            if name in _CONSTS:
                return _Num(_CONSTS[name])
            if name not in _VARS:
                self.fail(tok, "unknown name")
            return _Var(name)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if val == "|":
            node = self.expr()
            self.expect("|")
            return _Call("abs", [node])
        self.fail(tok, "expected a value")


def parse(text):
    """Parse ``text`` into an :class:`Expr`.

    >>> parse("max(1 - |xi|, 0)")(xi=0.25)
    0.75
    """
    if isinstance(text, Expr):
        return text
    if isinstance(text, (int, float)):
        return _Num(text)
    if not isinstance(text, str) or not text.strip():
        raise ExprError("empty expression")
    return _Parser(text).parse()


def gradient_env(xi, dim):
    """Variables for a batch of gradients ``xi`` with shape (m, dim)."""
    xi = np.asarray(xi, dtype=float).reshape(-1, dim)
    if dim == 1:
        c = xi[:, 0]
        return {"xi": c, "xi1": c}
    return {"xi": _Vec((xi[:, 0], xi[:, 1])), "xi1": xi[:, 0], "xi2": xi[:, 1]}


def position_env(x, dim):
    """Variables for a batch of positions ``x`` with shape (m, dim)."""
    x = np.asarray(x, dtype=float).reshape(-1, dim)
    if dim == 1:
        return {"x": x[:, 0], "x1": x[:, 0]}
    return {"x1": x[:, 0], "x2": x[:, 1]}
