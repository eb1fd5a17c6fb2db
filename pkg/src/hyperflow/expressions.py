"""Polynomial scenario expressions with exact gradients.

Grammar (whitespace insignificant):

    expr     := sign? term (('+'|'-') term)*
    term     := factor ('*' factor)*
    factor   := base ('^' uint)?
    base     := variable | rational | '(' expr ')'
    variable := 'x' uint | 'r' uint
    rational := int ('/' uint | '.' digits)?

`r_k` stands for the squared radius of the k-th block of four coordinates and is
expanded into x variables before differentiation. The leading sign and decimal
literals are extensions of the minimal grammar; decimals are read exactly.
"""

import logging
import re
from typing import Callable, Iterable, List, Optional, Tuple

import numpy as np
import sympy

from hyperflow.errors import ExpressionSyntaxError, StructureError, UnknownVariableError

logger = logging.getLogger(__name__)

TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+/\d+|\d+\.\d+|\d+)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*^()])|(?P<bad>\S))"
)
VARIABLE_RE = re.compile(r"(?P<kind>[xr])(?P<index>[1-9]\d*)")
SIGMA = sympy.Symbol("sigma", real=True)


class Token:
    __slots__ = ("kind", "text", "position")

    def __init__(self, kind: str, text: str, position: int):
        self.kind = kind
        self.text = text
        self.position = position

    def __repr__(self):
        return f"Token({self.kind}, {self.text!r}, {self.position})"


def tokenize(text: str) -> List[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = TOKEN_RE.match(text, pos)
        if match is None:  # only trailing whitespace left
            break
        kind = match.lastgroup
        if kind == "bad":
            raise ExpressionSyntaxError(
                f"unexpected character {match.group(kind)!r}", match.start(kind)
            )
        tokens.append(Token(kind, match.group(kind), match.start(kind)))
        pos = match.end()
    return tokens


def variable_symbols(dim: int) -> Tuple[tuple, tuple]:
    """Sympy symbols (x1..x_dim, r1..r_{dim/4})."""
    if dim <= 0 or dim % 4:
        raise StructureError(f"dimension must be a positive multiple of 4, got {dim}")
    xs = sympy.symbols(f"x1:{dim + 1}", real=True)
    rs = sympy.symbols(f"r1:{dim // 4 + 1}", real=True)
    return tuple(xs), tuple(rs)


class _Parser:
    """Recursive descent over the token list; builds sympy expressions."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        self.names: List[Token] = []

    def peek(self) -> Optional[Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect_more(self, what: str) -> Token:
        token = self.peek()
        if token is None:
            # report at the token that left the expression dangling
            position = self.tokens[self.pos - 1].position if self.tokens else 0
            raise ExpressionSyntaxError(f"expected {what}, found end of input", position)
        return token

    def parse(self) -> sympy.Expr:
        if not self.tokens:
            raise ExpressionSyntaxError("empty expression", 0)
        result = self.expr()
        token = self.peek()
        if token is not None:
            raise ExpressionSyntaxError(f"unexpected {token.text!r}", token.position)
        return result

    def expr(self) -> sympy.Expr:
        sign = 1
        token = self.peek()
        if token is not None and token.text in ("+", "-"):
            self.advance()
            sign = -1 if token.text == "-" else 1
        result = sign * self.term()
        while (token := self.peek()) is not None and token.text in ("+", "-"):
            self.advance()
            rhs = self.term()
            result = result + rhs if token.text == "+" else result - rhs
        return result

    def term(self) -> sympy.Expr:
        result = self.factor()
        while (token := self.peek()) is not None and token.text == "*":
            self.advance()
            result = result * self.factor()
        return result

    def factor(self) -> sympy.Expr:
        base = self.base()
        token = self.peek()
        if token is not None and token.text == "^":
            self.advance()
            exponent = self.expect_more("an exponent")
            if exponent.kind != "number" or not exponent.text.isdigit():
                raise ExpressionSyntaxError(
                    "exponent must be a nonnegative integer", exponent.position
                )
            self.advance()
            return base ** int(exponent.text)
        return base

    def base(self) -> sympy.Expr:
        token = self.expect_more("a term")
        if token.kind == "number":
            self.advance()
            if "/" in token.text:
                numerator, denominator = token.text.split("/")
                if int(denominator) == 0:
                    raise ExpressionSyntaxError("zero denominator", token.position)
                return sympy.Rational(int(numerator), int(denominator))
            return sympy.Rational(token.text)
        if token.kind == "name":
            self.advance()
            self.names.append(token)
            return sympy.Symbol(token.text, real=True)
        if token.text == "(":
            self.advance()
            inner = self.expr()
            closing = self.expect_more("')'")
            if closing.text != ")":
                raise ExpressionSyntaxError(
                    f"expected ')', found {closing.text!r}", closing.position
                )
            self.advance()
            return inner
        raise ExpressionSyntaxError(f"unexpected {token.text!r}", token.position)


class ScalarExpression:
    """Immutable polynomial over x1..x_{4n} and r1..rn with rational coefficients."""

    def __init__(self, expr: sympy.Expr, dim: int, text: Optional[str] = None):
        self._xs, self._rs = variable_symbols(dim)
        stray = expr.free_symbols - set(self._xs) - set(self._rs)
        if stray:
            raise StructureError(f"symbols {sorted(map(str, stray))} are not variables of R^{dim}")
        self._dim = dim
        self._expr = sympy.expand(expr)
        self._text = text if text is not None else sympy.sstr(self._expr)

        substitution = {
            r: sum(x**2 for x in self._xs[4 * k : 4 * k + 4]) for k, r in enumerate(self._rs)
        }
        self._expanded = sympy.expand(self._expr.subs(substitution))
        self._value = sympy.lambdify(self._xs + self._rs, self._expr, modules="numpy")
        self._radial_value = sympy.lambdify(self._rs, self._expr, modules="numpy")
        self._grad = sympy.lambdify(
            self._xs, [sympy.diff(self._expanded, x) for x in self._xs], modules="numpy"
        )

    @classmethod
    def constant(cls, value, dim: int) -> "ScalarExpression":
        return cls(sympy.nsimplify(value, rational=True), dim)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def n(self) -> int:
        return self._dim // 4

    @property
    def sympy_expr(self) -> sympy.Expr:
        return self._expr

    @property
    def expanded(self) -> sympy.Expr:
        """The polynomial with every r_k replaced by its quadratic form."""
        return self._expanded

    @property
    def symbols(self) -> Tuple[tuple, tuple]:
        return self._xs, self._rs

    @property
    def is_radial(self) -> bool:
        """Depends on the point only through the block radii."""
        return not (self._expr.free_symbols & set(self._xs))

    @property
    def is_zero(self) -> bool:
        return self._expr == 0

    @property
    def degree(self) -> int:
        if self.is_zero:
            return 0
        return int(sympy.Poly(self._expanded, *self._xs).total_degree())

    def _check_point(self, point) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        if point.shape != (self._dim,):
            raise StructureError(f"point of shape {point.shape} for dimension {self._dim}")
        return point

    def evaluate(self, point) -> float:
        point = self._check_point(point)
        radii = np.sum(point.reshape(-1, 4) ** 2, axis=1)
        return float(self._value(*point, *radii))

    def evaluate_radial(self, radii) -> float:
        if not self.is_radial:
            raise StructureError(f"'{self}' depends on x variables, not only on radii")
        radii = np.asarray(radii, dtype=float)
        if radii.shape != (self.n,):
            raise StructureError(f"{radii.shape[0] if radii.ndim else 1} radii for {self.n} blocks")
        return float(self._radial_value(*radii))

    def gradient(self, point) -> np.ndarray:
        point = self._check_point(point)
        return np.array(self._grad(*point), dtype=float)

    def radial_derivative(self, k: int = 0) -> "ScalarExpression":
        """Exact partial derivative with respect to r_{k+1}."""
        if not self.is_radial:
            raise StructureError(f"'{self}' is not radial")
        return ScalarExpression(sympy.diff(self._expr, self._rs[k]), self._dim)

    def sum_radial_form(self) -> Optional[sympy.Expr]:
        """p(sigma) if the expression equals p(r1 + ... + rn), else None."""
        if not self.is_radial:
            return None
        rest = sum(self._rs[1:], sympy.Integer(0))
        candidate = sympy.expand(self._expr.subs(self._rs[0], SIGMA - rest))
        if candidate.free_symbols - {SIGMA}:
            return None
        return candidate

    @property
    def is_sum_radial(self) -> bool:
        return self.sum_radial_form() is not None

    def __str__(self) -> str:
        return self._text

    def __repr__(self) -> str:
        return f"ScalarExpression({self._text!r}, dim={self._dim})"


def parse_expression(text: str, dim: int) -> ScalarExpression:
    """Parse `text` into an expanded polynomial on R^dim."""
    variable_symbols(dim)
    parser = _Parser(text)
    expr = parser.parse()

    for token in parser.names:
        match = VARIABLE_RE.fullmatch(token.text)
        if match is None:
            raise UnknownVariableError(token.text, token.position)
        index = int(match.group("index"))
        limit = dim if match.group("kind") == "x" else dim // 4
        if index > limit:
            raise UnknownVariableError(token.text, token.position)

    return ScalarExpression(expr, dim, text=text.strip())


def gradient(expr: ScalarExpression, point) -> np.ndarray:
    """Exact gradient of `expr` at `point`."""
    return expr.gradient(point)


def split_tuple(text: str) -> List[str]:
    """Split '(a, b, c)' at top-level commas; a bare string gives one item."""
    body = text.strip()
    if body.startswith("(") and body.endswith(")"):
        depth = 0
        for i, ch in enumerate(body):
            depth += ch == "("
            depth -= ch == ")"
            if depth == 0 and i < len(body) - 1:
                break
        else:
            body = body[1:-1]
    items, depth, current = [], 0, []
    for ch in body:
        if ch == "," and depth == 0:
            items.append("".join(current).strip())
            current = []
            continue
        depth += ch == "("
        depth -= ch == ")"
        current.append(ch)
    items.append("".join(current).strip())
    return items


def parse_triple(items, dim: int) -> Tuple[ScalarExpression, ScalarExpression, ScalarExpression]:
    """Three expressions from a list of strings/numbers or a '(a, b, c)' string."""
    if isinstance(items, str):
        items = split_tuple(items)
    items = [str(item) for item in items]
    if len(items) != 3:
        raise StructureError(f"expected 3 expressions, got {len(items)}")
    return tuple(parse_expression(item, dim) for item in items)


def lambdify_vector(exprs: Iterable[ScalarExpression]) -> Callable[[np.ndarray], np.ndarray]:
    """A field x -> (e_1(x), ..., e_m(x)) from a sequence of expressions."""
    exprs = list(exprs)

    def field(point: np.ndarray) -> np.ndarray:
        return np.array([e.evaluate(point) for e in exprs], dtype=float)

    return field
