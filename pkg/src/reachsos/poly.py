"""Sparse multivariate polynomial arithmetic over the reals.

Polynomials are stored as a map from exponent tuples to float coefficients.
Exponent tuples ("monomials") have fixed length equal to the ambient state
dimension.  All values are immutable after construction; every operation
returns a fresh polynomial, so instances are safe to share between threads.
"""

from __future__ import annotations

import math
import re
from typing import Iterable, Iterator, Sequence

import numpy as np

# Coefficients below this magnitude are dropped so that floating-point dust
# cannot grow the term map without bound.
ZERO_TOL = 1e-14

Monomial = tuple  # exponent tuple of length n, entries are non-negative ints


def monomial_degree(mono: Monomial) -> int:
    return sum(mono)


class Polynomial:
    """A sparse polynomial in ``n`` real variables.

    ``terms`` maps exponent tuples to coefficients; the zero polynomial is
    the empty map.  Construction canonicalizes: near-zero coefficients are
    pruned and exponent tuples are validated against ``dimension``.
    """

    __slots__ = ("dimension", "terms")

    def __init__(self, dimension: int, terms: dict[Monomial, float] | None = None):
        if dimension < 1:
            raise ValueError(f"dimension must be positive, got {dimension}")
        clean: dict[Monomial, float] = {}
        if terms:
            for mono, coeff in terms.items():
                mono = tuple(int(e) for e in mono)
                if len(mono) != dimension:
                    raise ValueError(
                        f"monomial {mono} has length {len(mono)}, expected {dimension}"
                    )
                if any(e < 0 for e in mono):
                    raise ValueError(f"negative exponent in monomial {mono}")
                c = float(coeff)
                if abs(c) >= ZERO_TOL:
                    clean[mono] = c
        object.__setattr__(self, "dimension", dimension)
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, name, value):  # pragma: no cover - guard
        raise AttributeError("Polynomial is immutable")

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, dimension: int) -> "Polynomial":
        return cls(dimension, {})

    @classmethod
    def constant(cls, dimension: int, value: float) -> "Polynomial":
        return cls(dimension, {(0,) * dimension: value})

    @classmethod
    def variable(cls, dimension: int, index: int) -> "Polynomial":
        """The coordinate polynomial x_{index+1}."""
        if not 0 <= index < dimension:
            raise ValueError(f"variable index {index} out of range for n={dimension}")
        expo = [0] * dimension
        expo[index] = 1
        return cls(dimension, {tuple(expo): 1.0})

    @classmethod
    def monomial(cls, dimension: int, exponents: Sequence[int], coeff: float = 1.0) -> "Polynomial":
        return cls(dimension, {tuple(exponents): coeff})

    # -- basic queries ------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        """Total degree; 0 for the zero polynomial."""
        if not self.terms:
            return 0
        return max(sum(m) for m in self.terms)

    def coefficient(self, mono: Sequence[int]) -> float:
        return self.terms.get(tuple(mono), 0.0)

    def __iter__(self) -> Iterator[tuple[Monomial, float]]:
        return iter(self.terms.items())

    def __len__(self) -> int:
        return len(self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.dimension == other.dimension and self.terms == other.terms

    def __hash__(self):
        return hash((self.dimension, frozenset(self.terms.items())))

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    # -- arithmetic ----------------------------------------------------------

    def _check_dim(self, other: "Polynomial") -> None:
        if self.dimension != other.dimension:
            raise ValueError(
                f"dimension mismatch: {self.dimension} vs {other.dimension}"
            )

    def __add__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.dimension, other)
        self._check_dim(other)
        terms = dict(self.terms)
        for mono, coeff in other.terms.items():
            terms[mono] = terms.get(mono, 0.0) + coeff
        return Polynomial(self.dimension, terms)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.dimension, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.dimension, other)
        return self + (-other)

    def __rsub__(self, other) -> "Polynomial":
        return (-self) + other

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            return Polynomial(
                self.dimension, {m: c * other for m, c in self.terms.items()}
            )
        self._check_dim(other)
        terms: dict[Monomial, float] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(m1, m2))
                terms[key] = terms.get(key, 0.0) + c1 * c2
        return Polynomial(self.dimension, terms)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "Polynomial":
        return self * (1.0 / float(scalar))

    def __pow__(self, exponent: int) -> "Polynomial":
        if exponent < 0 or int(exponent) != exponent:
            raise ValueError(f"polynomial power must be a non-negative integer, got {exponent}")
        result = Polynomial.constant(self.dimension, 1.0)
        base = self
        e = int(exponent)
        while e:
            if e & 1:
                result = result * base
            base = base * base
            e >>= 1
        return result

    # -- calculus ------------------------------------------------------------

    def diff(self, index: int) -> "Polynomial":
        """Partial derivative with respect to x_{index+1}."""
        terms: dict[Monomial, float] = {}
        for mono, coeff in self.terms.items():
            e = mono[index]
            if e == 0:
                continue
            new = list(mono)
            new[index] = e - 1
            key = tuple(new)
            terms[key] = terms.get(key, 0.0) + coeff * e
        return Polynomial(self.dimension, terms)

    def gradient(self) -> "PolyVector":
        return PolyVector([self.diff(i) for i in range(self.dimension)])

    # -- evaluation ----------------------------------------------------------

    def __call__(self, point: Sequence[float]) -> float:
        return self.eval(point)

    def eval(self, point: Sequence[float]) -> float:
        if len(point) != self.dimension:
            raise ValueError(
                f"point has length {len(point)}, expected {self.dimension}"
            )
        total = 0.0
        for mono, coeff in self.terms.items():
            v = coeff
            for x, e in zip(point, mono):
                if e:
                    v *= x**e
            total += v
        if not math.isfinite(total):
            raise ArithmeticError(f"non-finite polynomial value at {tuple(point)}")
        return total

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at each row of an (N, n) array; returns an (N,) array."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dimension:
            raise ValueError(f"expected (N, {self.dimension}) points, got {points.shape}")
        if not self.terms:
            return np.zeros(points.shape[0])
        expo = np.array(list(self.terms.keys()), dtype=float)  # (T, n)
        coeffs = np.array(list(self.terms.values()))  # (T,)
        with np.errstate(invalid="ignore"):
            powers = points[:, None, :] ** expo[None, :, :]  # (N, T, n)
        return powers.prod(axis=2) @ coeffs

    # -- formatting ------------------------------------------------------------

    def to_string(self, var_names: Sequence[str] | None = None) -> str:
        if not self.terms:
            return "0"
        names = var_names or [f"x{i + 1}" for i in range(self.dimension)]
        parts = []
        for mono in sorted(self.terms, key=grlex_key):
            coeff = self.terms[mono]
            factors = []
            for name, e in zip(names, mono):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            mag = abs(coeff)
            if factors and abs(mag - 1.0) < 1e-15:
                body = " * ".join(factors)
            else:
                body = " * ".join([repr(mag)] + factors)
            sign = "-" if coeff < 0 else "+"
            parts.append((sign, body))
        first_sign, first_body = parts[0]
        out = ("-" if first_sign == "-" else "") + first_body
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    def __repr__(self) -> str:
        return f"Polynomial({self.dimension}, {self.to_string()})"


class PolyVector:
    """An ordered list of polynomials, one per state coordinate."""

    __slots__ = ("entries",)

    def __init__(self, entries: Sequence[Polynomial]):
        entries = list(entries)
        if not entries:
            raise ValueError("PolyVector cannot be empty")
        dim = entries[0].dimension
        if any(p.dimension != dim for p in entries):
            raise ValueError("all entries must share one dimension")
        object.__setattr__(self, "entries", entries)

    def __setattr__(self, name, value):  # pragma: no cover - guard
        raise AttributeError("PolyVector is immutable")

    @property
    def dimension(self) -> int:
        return self.entries[0].dimension

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> Polynomial:
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    def eval(self, point: Sequence[float]) -> np.ndarray:
        return np.array([p.eval(point) for p in self.entries])

    def max_degree(self) -> int:
        return max(p.degree() for p in self.entries)

    def __repr__(self) -> str:
        return f"PolyVector([{', '.join(p.to_string() for p in self.entries)}])"


def lie_derivative(v: Polynomial, f: PolyVector) -> Polynomial:
    """Derivative of v along the vector field f: grad(v) . f."""
    if v.dimension != len(f):
        raise ValueError(f"dimension mismatch: poly has n={v.dimension}, field has {len(f)} entries")
    out = Polynomial.zero(v.dimension)
    for i, fi in enumerate(f):
        out = out + v.diff(i) * fi
    return out


def grlex_key(mono: Monomial):
    """Sort key for graded lexicographic order (degree, then x1 > x2 > ...)."""
    return (sum(mono), tuple(-e for e in mono))


def monomial_basis(n: int, d: int) -> list[Monomial]:
    """All exponent tuples of total degree <= d in n variables, graded lex.

    The count is C(n + d, n).
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if d < 0:
        raise ValueError(f"d must be non-negative, got {d}")
    out: list[Monomial] = []

    def rec(prefix: list[int], remaining: int, slots: int) -> None:
        if slots == 1:
            for e in range(remaining + 1):
                out.append(tuple(prefix + [e]))
            return
        for e in range(remaining + 1):
            rec(prefix + [e], remaining - e, slots - 1)

    rec([], d, n)
    out.sort(key=grlex_key)
    return out


# -- parsing -------------------------------------------------------------------
#
# Accepts the schema text form (sums of `c * x1^a1 * ... * xn^an` terms with
# unit coefficients and exponents omitted) and general parenthesized
# expressions such as "(1 - x1)^2" or "x1^2/4".  Division is allowed by
# constants only.

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"
    r"|(?P<var>x\d+)"
    r"|(?P<op>[-+*/^()]))"
)


class PolynomialParseError(ValueError):
    pass


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise PolynomialParseError(
                f"unexpected character {text[pos]!r} at position {pos} in {text!r}"
            )
        tokens.append(m.group(0).strip())
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[str], dimension: int):
        self.tokens = tokens
        self.pos = 0
        self.dim = dimension

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise PolynomialParseError("unexpected end of expression")
        self.pos += 1
        return tok

    def parse(self) -> Polynomial:
        p = self.expr()
        if self.peek() is not None:
            raise PolynomialParseError(f"trailing input near {self.peek()!r}")
        return p

    def expr(self) -> Polynomial:
        if self.peek() in ("+", "-"):
            sign = -1.0 if self.next() == "-" else 1.0
            result = self.term() * sign
        else:
            result = self.term()
        while self.peek() in ("+", "-"):
            op = self.next()
            rhs = self.term()
            result = result + rhs if op == "+" else result - rhs
        return result

    def term(self) -> Polynomial:
        result = self.factor()
        while self.peek() in ("*", "/"):
            op = self.next()
            rhs = self.factor()
            if op == "*":
                result = result * rhs
            else:
                if rhs.degree() != 0:
                    raise PolynomialParseError("division is allowed by constants only")
                divisor = rhs.coefficient((0,) * self.dim)
                if divisor == 0.0:
                    raise PolynomialParseError("division by zero")
                result = result / divisor
        return result

    def factor(self) -> Polynomial:
        if self.peek() in ("+", "-"):
            sign = -1.0 if self.next() == "-" else 1.0
            return self.factor() * sign
        base = self.atom()
        if self.peek() == "^":
            self.next()
            tok = self.next()
            try:
                e = int(tok)
            except ValueError:
                raise PolynomialParseError(f"exponent must be an integer, got {tok!r}") from None
            base = base**e
        return base

    def atom(self) -> Polynomial:
        tok = self.next()
        if tok == "(":
            inner = self.expr()
            if self.next() != ")":
                raise PolynomialParseError("unbalanced parentheses")
            return inner
        if tok.startswith("x"):
            idx = int(tok[1:]) - 1
            if not 0 <= idx < self.dim:
                raise PolynomialParseError(
                    f"variable {tok} out of range for dimension {self.dim}"
                )
            return Polynomial.variable(self.dim, idx)
        try:
            val = float(tok)
        except ValueError:
            raise PolynomialParseError(f"unexpected token {tok!r}") from None
        return Polynomial.constant(self.dim, val)


def parse_polynomial(text: str, dimension: int) -> Polynomial:
    """Parse a polynomial in variables x1..xn from text."""
    tokens = _tokenize(text)
    if not tokens:
        return Polynomial.zero(dimension)
    return _Parser(tokens, dimension).parse()
