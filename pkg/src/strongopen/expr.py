"""Scalar expression language for weights, metric entries and sections.

Expressions are parsed once into an immutable tree and evaluated on numpy
arrays of points in C^n.  The grammar (also in ``docs/grammar.md``)::

    expr     = term , { ( "+" | "-" ) , term } ;
    term     = unary , { ( "*" | "/" ) , unary } ;
    unary    = ( "-" | "+" ) , unary | power ;
    power    = atom , { "^" , exponent } ;
    exponent = [ "-" | "+" ] , number | "(" , expr , ")" ;   (* constant, real *)
    atom     = number , [ "i" ] | "i" | coord | name
             | func1 , "(" , expr , ")"
             | func2 , "(" , expr , "," , expr , ")"
             | "(" , expr , ")" ;
    coord    = "z" , digit , { digit } ;                      (* z1 .. zn *)
    func1    = "log" | "exp" | "abs2" | "conj" | "re" | "im" ;
    func2    = "min" | "max" ;

``i`` is the imaginary unit and ``2.5i`` an imaginary literal.  Any other
identifier is a real parameter bound at evaluation time.

Values are extended reals where the tree is real-typed: ``log(0)`` is
``-inf``, ``abs2(z1)^-1`` at the origin is ``+inf``.  Operations without a
single-valued meaning (log of a negative number, a fractional power of a
negative or non-real base) produce ``nan``, which callers treat as the
"undefined" tag.  Evaluation never raises on domain errors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

FUNCS1 = ("log", "exp", "abs2", "conj", "re", "im")
FUNCS2 = ("min", "max")
_REAL_FUNCS = {"log", "abs2", "re", "im", "min", "max"}


class ExprError(ValueError):
    """Raised for unbound parameters and dimension mismatches at evaluation."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        pointer = ""
        if text:
            pointer = f"\n  {text}\n  {' ' * position}^"
        super().__init__(f"{message} at position {position}{pointer}")


# ---------------------------------------------------------------------------
# tree
# ---------------------------------------------------------------------------

class Expr:
    """Base class of expression nodes.  Nodes are frozen dataclasses."""

    __slots__ = ()

    def __add__(self, other):
        return BinOp("+", self, as_expr(other))

    def __radd__(self, other):
        return BinOp("+", as_expr(other), self)

    def __sub__(self, other):
        return BinOp("-", self, as_expr(other))

    def __rsub__(self, other):
        return BinOp("-", as_expr(other), self)

    def __mul__(self, other):
        return BinOp("*", self, as_expr(other))

    def __rmul__(self, other):
        return BinOp("*", as_expr(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, as_expr(other))

    def __rtruediv__(self, other):
        return BinOp("/", as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, exponent):
        return Pow(self, float(exponent))

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: complex


@dataclass(frozen=True, eq=True)
class Coord(Expr):
    index: int  # zero based; printed as z{index+1}


@dataclass(frozen=True, eq=True)
class Param(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: float


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    args: tuple = field(default=())


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse_expr(value)
    if isinstance(value, (int, float, complex, np.number)):
        value = complex(value)
        if value.real != 0 and value.imag != 0:
            return BinOp("+", Num(complex(value.real)), Num(complex(0, value.imag)))
        if value.real < 0:
            return Neg(Num(complex(-value.real)))
        if value.imag < 0:
            return Neg(Num(complex(0, -value.imag)))
        return Num(value)
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def func(name: str, *args) -> Expr:
    return Func(name, tuple(as_expr(a) for a in args))


def coord(i: int) -> Expr:
    """Coordinate z_i, one based like the text syntax."""
    return Coord(i - 1)


def is_real(e: Expr) -> bool:
    """Static type: True when the node evaluates to (extended) reals."""
    if isinstance(e, Num):
        return e.value.imag == 0
    if isinstance(e, Coord):
        return False
    if isinstance(e, Param):
        return True
    if isinstance(e, Neg):
        return is_real(e.arg)
    if isinstance(e, BinOp):
        return is_real(e.left) and is_real(e.right)
    if isinstance(e, Pow):
        return is_real(e.base)
    if isinstance(e, Func):
        if e.name in _REAL_FUNCS:
            return True
        return is_real(e.args[0])
    raise TypeError(e)


def max_coord(e: Expr) -> int:
    """Number of coordinates the expression refers to (highest index + 1)."""
    if isinstance(e, Coord):
        return e.index + 1
    return max((max_coord(c) for c in children(e)), default=0)


def parameters(e: Expr) -> set[str]:
    if isinstance(e, Param):
        return {e.name}
    out: set[str] = set()
    for c in children(e):
        out |= parameters(c)
    return out


def children(e: Expr) -> tuple:
    if isinstance(e, Neg):
        return (e.arg,)
    if isinstance(e, BinOp):
        return (e.left, e.right)
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, Func):
        return e.args
    return ()


def substitute(e: Expr, params: Mapping[str, float]) -> Expr:
    """Replace named parameters by numeric literals."""
    if isinstance(e, Param):
        return as_expr(float(params[e.name])) if e.name in params else e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, params))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, params), substitute(e.right, params))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, params), e.exponent)
    if isinstance(e, Func):
        return Func(e.name, tuple(substitute(a, params) for a in e.args))
    return e


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

def _fmt_real(x: float) -> str:
    return repr(float(x))


def to_text(e: Expr) -> str:
    """Fully parenthesised text that parses back to an equal tree."""
    if isinstance(e, Num):
        v = e.value
        if v == 0:
            return "0.0"
        if v.imag == 0:
            s = _fmt_real(v.real)
            return s if v.real >= 0 else f"(-{_fmt_real(-v.real)})"
        if v.real == 0:
            s = _fmt_real(abs(v.imag)) + "i"
            return s if v.imag > 0 else f"(-{s})"
        return f"({to_text(as_expr(complex(v.real)))} + {to_text(as_expr(complex(0, v.imag)))})"
    if isinstance(e, Coord):
        return f"z{e.index + 1}"
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Neg):
        return f"(-({to_text(e.arg)}))"
    if isinstance(e, BinOp):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Pow):
        return f"({to_text(e.base)})^({_fmt_real(e.exponent)})"
    if isinstance(e, Func):
        return f"{e.name}({', '.join(to_text(a) for a in e.args)})"
    raise TypeError(e)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<imag>i(?![A-Za-z0-9_]))?"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad, text)
        start = m.start(m.lastgroup if m.lastgroup != "imag" else "num")
        if m.group("num") is not None:
            kind = "imag" if m.group("imag") else "num"
            tokens.append((kind, m.group("num"), start))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), start))
        else:
            tokens.append(("op", m.group("op"), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, params, dim):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.params = None if params is None else set(params)
        self.dim = dim

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos, self.text)

    def error(self, message, pos=None):
        if pos is None:
            pos = self.peek()[2]
        raise ExprSyntaxError(message, pos, self.text)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            self.error(f"unexpected {val!r}", pos)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            nxt, after = self.tokens[self.i], self.tokens[min(self.i + 1, len(self.tokens) - 1)]
            if nxt[0] in ("num", "imag") and not (after[0] == "op" and after[1] == "^"):
                # a signed literal is one leaf, so printed negative constants round-trip
                self.take()
                v = float(nxt[1])
                return Num(complex(-v) if nxt[0] == "num" else complex(0.0, -v))
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        e = self.atom()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            e = Pow(e, self.exponent())
        return e

    def exponent(self) -> float:
        kind, val, pos = self.peek()
        sign = 1.0
        if kind == "op" and val in "+-":
            self.take()
            sign = -1.0 if val == "-" else 1.0
            kind, val, pos = self.peek()
            if kind != "num":
                self.error("non-constant exponent: expected a number after the sign", pos)
        if kind == "num":
            self.take()
            return sign * float(val)
        if kind == "op" and val == "(":
            self.take()
            sub = self.expr()
            self.expect(")")
            if max_coord(sub) or parameters(sub):
                self.error("non-constant exponent", pos)
            value = evaluate(sub, np.zeros((1, 0), dtype=complex))[0]
            if np.iscomplexobj(value) and value.imag != 0:
                self.error("exponent must be real", pos)
            value = float(np.real(value))
            if not np.isfinite(value):
                self.error("exponent must be finite", pos)
            return value
        if kind in ("name", "imag"):
            self.error("non-constant exponent", pos)
        self.error("expected exponent", pos)

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(complex(float(val)))
        if kind == "imag":
            return Num(complex(0.0, float(val)))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if val in FUNCS1 or val in FUNCS2:
                self.expect("(")
                args = [self.expr()]
                if val in FUNCS2:
                    self.expect(",")
                    args.append(self.expr())
                self.expect(")")
                return Func(val, tuple(args))
            if val == "i":
                return Num(1j)
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                self.error(f"unknown identifier {val!r} (not a function)", pos)
            m = re.fullmatch(r"z(\d+)", val)
            if m:
                idx = int(m.group(1))
                if idx < 1 or (self.dim is not None and idx > self.dim):
                    self.error(f"unknown identifier {val!r}", pos)
                return Coord(idx - 1)
            if self.params is not None and val not in self.params:
                self.error(f"unknown identifier {val!r}", pos)
            return Param(val)
        found = "end of input" if kind == "end" else repr(val)
        self.error(f"unexpected {found}", pos)


def parse_expr(text: str, params=None, dim: int | None = None) -> Expr:
    """Parse ``text`` into an expression tree.

    ``params`` restricts which bare identifiers are accepted as parameters
    (``None`` accepts any).  ``dim`` rejects coordinates beyond ``z{dim}``.
    """
    if not isinstance(text, str):
        raise TypeError("expression text must be a string")
    if text.strip() == "":
        raise ExprSyntaxError("empty expression", 0, text)
    return _Parser(text, params, dim).parse()


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalPoint:
    coords: tuple
    params: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def of(cls, *coords, **params):
        return cls(tuple(complex(c) for c in coords), dict(params))


def _as_real(values: np.ndarray) -> np.ndarray:
    # complex -> real where the imaginary part is negligible, nan otherwise
    if not np.iscomplexobj(values):
        return values
    re_, im_ = values.real, values.imag
    ok = np.abs(im_) <= 1e-13 * np.abs(re_)
    ok |= im_ == 0
    return np.where(ok, re_, np.nan)


def _real_power(base: np.ndarray, p: float) -> np.ndarray:
    out = np.power(np.where(base >= 0, base, 1.0), p)
    if float(p).is_integer():
        neg = base < 0
        if neg.any():
            out = np.where(neg, np.power(base, p), out)
    else:
        out = np.where(base < 0, np.nan, out)
    return out


def _eval(e: Expr, z: np.ndarray, params: Mapping[str, float], n: int) -> np.ndarray:
    if isinstance(e, Num):
        if e.value.imag == 0:
            return np.full(n, e.value.real)
        return np.full(n, e.value, dtype=complex)
    if isinstance(e, Coord):
        if e.index >= z.shape[1]:
            raise ExprError(f"coordinate z{e.index + 1} used but the point has dimension {z.shape[1]}")
        return z[:, e.index]
    if isinstance(e, Param):
        if e.name not in params:
            raise ExprError(f"unbound parameter {e.name!r}")
        return np.full(n, float(params[e.name]))
    if isinstance(e, Neg):
        return -_eval(e.arg, z, params, n)
    if isinstance(e, BinOp):
        a = _eval(e.left, z, params, n)
        b = _eval(e.right, z, params, n)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            if np.iscomplexobj(a) or np.iscomplexobj(b):
                return _complex_mul(a, b)
            return a * b
        if np.iscomplexobj(a) or np.iscomplexobj(b):
            return _complex_div(a, b)
        return a / b
    if isinstance(e, Pow):
        base = _eval(e.base, z, params, n)
        p = e.exponent
        if not np.iscomplexobj(base):
            return _real_power(base, p)
        if float(p).is_integer():
            zero = base == 0
            out = np.power(np.where(zero, 1.0, base), p)
            if zero.any():
                out = np.where(zero, 0.0 if p > 0 else (1.0 if p == 0 else np.inf), out)
            return out
        return _real_power(_as_real(base), p).astype(complex)
    if isinstance(e, Func):
        args = [_eval(a, z, params, n) for a in e.args]
        a = args[0]
        name = e.name
        if name == "abs2":
            if np.iscomplexobj(a):
                return a.real * a.real + a.imag * a.imag
            return a * a
        if name == "conj":
            return np.conj(a) if np.iscomplexobj(a) else a
        if name == "re":
            return a.real if np.iscomplexobj(a) else a
        if name == "im":
            return a.imag if np.iscomplexobj(a) else np.zeros_like(a)
        if name == "exp":
            return np.exp(a)
        if name == "log":
            r = _as_real(a)
            return np.where(r >= 0, np.log(np.where(r >= 0, r, 1.0)), np.nan)
        if name in ("min", "max"):
            x, y = _as_real(a), _as_real(args[1])
            return np.minimum(x, y) if name == "min" else np.maximum(x, y)
    raise TypeError(f"unknown node {e!r}")


def _complex_mul(a, b):
    # keeps real infinities real: (inf + 0j) * 2 is inf, not inf + nan*j
    a = np.asarray(a)
    b = np.asarray(b)
    ar = np.iscomplexobj(a)
    br = np.iscomplexobj(b)
    if ar and br:
        out = a * b
        both_real = (a.imag == 0) & (b.imag == 0)
        if both_real.any():
            out = np.where(both_real, (a.real * b.real).astype(complex), out)
        return out
    real, cplx = (b, a) if ar else (a, b)
    out = real * cplx
    if np.isinf(real).any() or np.isinf(cplx).any():
        purely = cplx.imag == 0
        out = np.where(purely, (real * cplx.real).astype(complex), out)
    return out


def _complex_div(a, b):
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    out = np.empty(np.broadcast(a, b).shape, dtype=complex)
    zero = b == 0
    real_case = (a.imag == 0) & (b.imag == 0)
    with np.errstate(all="ignore"):
        out[:] = a / np.where(zero, 1.0, b)
        if zero.any():
            out = np.where(zero, (a.real / 0.0) * (a.imag == 0) + np.where(a.imag == 0, 0, np.nan), out)
        rc = real_case & ~zero
        if rc.any():
            out = np.where(rc, (a.real / np.where(rc, b.real, 1.0)).astype(complex), out)
    return out


def evaluate(e: Expr, coords, params: Mapping[str, float] | None = None) -> np.ndarray:
    """Vectorised evaluation at points ``coords`` of shape (N, n) (or (n,)).

    Returns a float array for real-typed trees and a complex array otherwise.
    """
    z = np.asarray(coords, dtype=complex)
    if z.ndim == 1:
        z = z[None, :]
    params = params or {}
    with np.errstate(all="ignore"):
        out = _eval(e, z, params, z.shape[0])
        if is_real(e):
            out = _as_real(out) if np.iscomplexobj(out) else out
            out = np.asarray(out, dtype=float)
    return out


def eval_expr(e: Expr, p: EvalPoint):
    """Evaluate at a single point.

    Real-typed trees give a float (possibly +-inf, or nan for "undefined");
    complex-typed trees give a complex.
    """
    value = evaluate(e, np.asarray(p.coords, dtype=complex)[None, :], p.params)[0]
    if is_real(e):
        return float(value)
    return complex(value)


def compile_expr(e: Expr, params: Mapping[str, float] | None = None):
    """Return ``f(points) -> array`` with parameters bound."""
    bound = dict(params or {})
    missing = parameters(e) - set(bound)
    if missing:
        raise ExprError(f"unbound parameter(s): {', '.join(sorted(missing))}")

    def f(points):
        return evaluate(e, points, bound)

    return f


def as_function(obj, params: Mapping[str, float] | None = None):
    """Accept text, an Expr or a vectorised callable and return ``f(points)``."""
    if isinstance(obj, str):
        obj = parse_expr(obj)
    if isinstance(obj, Expr):
        return compile_expr(obj, params)
    if callable(obj):
        return obj
    raise TypeError(f"expected an expression or a callable, got {type(obj).__name__}")
