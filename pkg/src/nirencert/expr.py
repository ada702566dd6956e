"""Curvature expressions over ambient coordinates x1..x{n+1}.

Grammar (lowest to highest binding)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := NUMBER | VAR | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

So ``-x1^2`` is ``-(x1^2)``, ``2^3^2`` is ``2^(3^2)`` and ``2^-1`` is
allowed.  Evaluation is vectorized: a variable reads column ``k-1`` of
an array of shape ``(..., n+1)``.
"""
import re
from dataclasses import dataclass

import numpy as np

from .errors import CertError, DomainError, ParseError
from .geometry import exp_map, normal_frame

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "abs": 1, "sqrt": 1, "pow": 2}


@dataclass(frozen=True)
class Num:
    value: float

    def __str__(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class Var:
    index: int  # 1-based

    def __str__(self):
        return f"x{self.index}"


@dataclass(frozen=True)
class Neg:
    operand: object

    def __str__(self):
        return f"(-{self.operand})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple

    def __str__(self):
        return f"{self.name}({', '.join(map(str, self.args))})"


def to_source(e):
    """Fully parenthesized source text; ``parse(to_source(e)) == e``."""
    return str(e)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            offset = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ParseError(f"unexpected character {src[offset]!r}", offset)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.peek()
        if text != value or kind == "end":
            got = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, got {got}", pos, {value})
        self.advance()

    def parse(self):
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", pos, {"+", "-", "*", "/", "^", "end"})
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            m = re.fullmatch(r"x([1-9]\d*)", text)
            if m:
                return Var(int(m.group(1)))
            if text in FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                while self.peek()[1] == "," and self.peek()[0] == "op":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise ParseError(
                        f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}", pos)
                return Call(text, tuple(args))
            raise ParseError(f"unknown identifier {text!r}", pos,
                             {"x<k>", *FUNCTIONS})
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        got = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {got}", pos, {"number", "x<k>", "(", "-", *FUNCTIONS})


def parse(src):
    """Parse ``src`` into an expression tree.

    Raises :class:`ParseError` with the byte offset and the set of
    tokens that would have been accepted there.
    """
    if not isinstance(src, str) or not src.strip():
        raise ParseError("empty expression", 0, {"number", "x<k>", "(", "-"})
    return _Parser(src).parse()


def max_variable(e):
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Num):
        return 0
    if isinstance(e, Neg):
        return max_variable(e.operand)
    if isinstance(e, BinOp):
        return max(max_variable(e.left), max_variable(e.right))
    return max(max_variable(a) for a in e.args)


def _power(node, base, expo):
    bad = (base < 0) & (expo != np.round(expo))
    if np.any(bad):
        raise DomainError(str(node), "negative base with non-integer exponent")
    if np.any((base == 0) & (expo < 0)):
        raise DomainError(str(node), "zero to a negative power")
    return np.power(base, expo)


def _evaluate(e, x):
    if isinstance(e, Num):
        return np.full(x.shape[:-1], e.value)
    if isinstance(e, Var):
        return x[..., e.index - 1]
    if isinstance(e, Neg):
        return -_evaluate(e.operand, x)
    if isinstance(e, BinOp):
        a = _evaluate(e.left, x)
        b = _evaluate(e.right, x)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if np.any(b == 0):
                raise DomainError(str(e), "division by zero")
            return a / b
        return _power(e, a, b)
    args = [_evaluate(a, x) for a in e.args]
    name = e.name
    u = args[0]
    if name == "log":
        if np.any(u <= 0):
            raise DomainError(str(e), "log of a non-positive value")
        return np.log(u)
    if name == "sqrt":
        if np.any(u < 0):
            raise DomainError(str(e), "sqrt of a negative value")
        return np.sqrt(u)
    if name == "pow":
        return _power(e, u, args[1])
    return {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}[name](u)


def evaluate(e, x):
    """Evaluate on ambient coordinates ``x`` of shape ``(..., dim)``."""
    x = np.asarray(x, dtype=float)
    need = max_variable(e)
    if need > x.shape[-1]:
        raise CertError("unknown-variable", f"x{need} used but points live in R^{x.shape[-1]}")
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        try:
            out = _evaluate(e, x)
        except FloatingPointError as exc:
            raise DomainError(str(e), f"floating-point failure ({exc})") from None
    return np.broadcast_to(out, x.shape[:-1]).astype(float)


def eval_on_sphere(e, p):
    """Value of ``e`` at the sphere point ``p`` (a Python float)."""
    return float(evaluate(e, np.asarray(p, dtype=float)))


def sphere_gradient(e, p, h=1e-5, frame=None):
    """Gradient of ``e`` restricted to S^n, in ``frame`` coordinates.

    Central differences of t -> e(exp_map(frame, t * axis_k)); the
    error is O(h^2) for C^3 integrands.
    """
    if not 1e-8 <= h <= 1e-2:
        raise CertError("bad-step", f"h={h} outside [1e-8, 1e-2]")
    if frame is None:
        frame = normal_frame(p)
    n = frame.n
    pts = []
    for k in range(n):
        v = np.zeros(n)
        v[k] = h
        pts.append(exp_map(frame, v))
        pts.append(exp_map(frame, -v))
    vals = evaluate(e, np.array(pts))
    return (vals[0::2] - vals[1::2]) / (2.0 * h)

