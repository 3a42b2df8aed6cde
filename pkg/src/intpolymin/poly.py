"""Sparse multivariate polynomials over the reals.

A :class:`Polynomial` maps exponent tuples (multi-indices) to nonzero float
coefficients.  Instances are immutable; every operation returns a new object.
Iteration and floating accumulation follow graded lexicographic order so that
results are reproducible bit for bit.
"""

from __future__ import annotations

import math
import re
from itertools import product as _cartesian
from math import comb
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

Monomial = tuple[int, ...]

MAX_EXPONENT = 10_000


class ParseError(ValueError):
    """Raised for malformed polynomial text; carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class _MinusInfinity:
    """Degree of the zero polynomial.

    Compares below every integer but supports no arithmetic.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MINUS_INFINITY"

    def __lt__(self, other):
        return other is not self

    def __le__(self, other):
        return True

    def __gt__(self, other):
        return False

    def __ge__(self, other):
        return other is self

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("MINUS_INFINITY")


MINUS_INFINITY = _MinusInfinity()


def grlex_key(alpha: Sequence[int]):
    """Sort key for graded lexicographic order (x1 > x2 > ... within a degree)."""
    return (sum(alpha), tuple(alpha))


def monomials_up_to(n: int, max_deg: int, min_deg: int = 0) -> list[Monomial]:
    """All exponent tuples with ``min_deg <= |alpha| <= max_deg`` in grlex order."""
    out: list[Monomial] = []
    for deg in range(min_deg, max_deg + 1):
        out.extend(monomials_of_degree(n, deg))
    return out


def monomials_of_degree(n: int, deg: int) -> list[Monomial]:
    """Exponent tuples of modulus ``deg``, ascending lexicographically."""
    if n == 0:
        return [()] if deg == 0 else []
    if n == 1:
        return [(deg,)]
    out = []
    for first in range(deg + 1):
        for rest in monomials_of_degree(n - 1, deg - first):
            out.append((first,) + rest)
    return out


def count_monomials(n: int, max_deg: int) -> int:
    return comb(n + max_deg, n)


class Polynomial:
    """Immutable sparse polynomial in ``n`` variables."""

    __slots__ = ("n", "_terms", "_keys", "_exps", "_coefs")

    def __init__(self, n: int, terms: Mapping[Sequence[int], float] | None = None):
        if n < 0:
            raise ValueError("variable count must be nonnegative")
        self.n = int(n)
        clean: dict[Monomial, float] = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n:
                raise ValueError(f"exponent {alpha} has length {len(alpha)}, expected {n}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            c = float(c)
            if c != 0.0:
                clean[alpha] = clean.get(alpha, 0.0) + c
        self._keys = sorted((a for a, c in clean.items() if c != 0.0), key=grlex_key)
        self._terms = {a: clean[a] for a in self._keys}
        self._exps = None
        self._coefs = None

    # -- construction helpers -------------------------------------------------

    @classmethod
    def zero(cls, n: int) -> "Polynomial":
        return cls(n)

    @classmethod
    def constant(cls, n: int, c: float) -> "Polynomial":
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        """The coordinate polynomial X_{i+1} (``i`` is 0-based)."""
        alpha = [0] * n
        alpha[i] = 1
        return cls(n, {tuple(alpha): 1.0})

    @classmethod
    def monomial(cls, alpha: Sequence[int], c: float = 1.0) -> "Polynomial":
        return cls(len(alpha), {tuple(alpha): c})

    # -- basic accessors ------------------------------------------------------

    @property
    def terms(self) -> dict[Monomial, float]:
        return dict(self._terms)

    def items(self) -> Iterator[tuple[Monomial, float]]:
        for a in self._keys:
            yield a, self._terms[a]

    def coefficient(self, alpha: Sequence[int]) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    def __len__(self):
        return len(self._keys)

    def is_zero(self) -> bool:
        return not self._keys

    @property
    def degree(self):
        if not self._keys:
            return MINUS_INFINITY
        return sum(self._keys[-1])

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n == other.n and self._terms == other._terms

    def __hash__(self):
        return hash((self.n, tuple(self.items())))

    def __repr__(self):
        return f"Polynomial(n={self.n}, {format_poly(self)!r})"

    def __str__(self):
        return format_poly(self)

    # -- arithmetic -----------------------------------------------------------

    def _check(self, other: "Polynomial"):
        if self.n != other.n:
            raise ValueError(f"variable count mismatch: {self.n} vs {other.n}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.n, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self._terms)
        for a, c in other.items():
            terms[a] = terms.get(a, 0.0) + c
        return Polynomial(self.n, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.n, {a: -c for a, c in self.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial(self.n, {a: c * float(other) for a, c in self.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: dict[Monomial, float] = {}
        for a, ca in self.items():
            for b, cb in other.items():
                key = tuple(x + y for x, y in zip(a, b))
                terms[key] = terms.get(key, 0.0) + ca * cb
        return Polynomial(self.n, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        result = Polynomial.constant(self.n, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # -- evaluation -----------------------------------------------------------

    def _arrays(self):
        if self._exps is None:
            self._exps = np.array(self._keys, dtype=np.int64).reshape(len(self._keys), self.n)
            self._coefs = np.array([self._terms[a] for a in self._keys], dtype=float)
        return self._exps, self._coefs

    def __call__(self, x):
        return evaluate(self, x)

    def evaluate_many(self, points) -> np.ndarray:
        """Vectorised evaluation at the rows of ``points`` (shape ``(N, n)``).

        Terms are accumulated one at a time in grlex order.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.n:
            raise ValueError(f"expected points of shape (N, {self.n}), got {pts.shape}")
        out = np.zeros(pts.shape[0])
        if not self._keys:
            return out
        exps, coefs = self._arrays()
        max_e = int(exps.max()) if exps.size else 0
        powers = [np.ones_like(pts)]
        for _ in range(max_e):
            powers.append(powers[-1] * pts)
        for row, c in zip(exps, coefs):
            term = np.full(pts.shape[0], c)
            for i, e in enumerate(row):
                if e:
                    term = term * powers[e][:, i]
            out += term
        return out


# ---------------------------------------------------------------------------
# module-level operations


def evaluate(f: Polynomial, x) -> float:
    """Value of ``f`` at ``x``; products summed with :func:`math.fsum`."""
    x = [float(v) for v in x]
    if len(x) != f.n:
        raise ValueError(f"dimension mismatch: polynomial has {f.n} variables, point has {len(x)}")
    parts = []
    for alpha, c in f.items():
        t = c
        for xi, e in zip(x, alpha):
            if e:
                t *= xi**e
        parts.append(t)
    return math.fsum(parts)


def homogeneous_components(f: Polynomial) -> list[Polynomial]:
    """``[f_0, f_1, ..., f_d]``; missing components are zero polynomials."""
    if f.is_zero():
        return []
    d = f.degree
    buckets: list[dict] = [{} for _ in range(d + 1)]
    for a, c in f.items():
        buckets[sum(a)][a] = c
    return [Polynomial(f.n, b) for b in buckets]


def component(f: Polynomial, j: int) -> Polynomial:
    return Polynomial(f.n, {a: c for a, c in f.items() if sum(a) == j})


def leading_form(f: Polynomial) -> Polynomial:
    if f.is_zero():
        raise ValueError("the zero polynomial has no leading form")
    return component(f, f.degree)


def is_homogeneous(f: Polynomial) -> bool:
    return len({sum(a) for a in f.terms}) <= 1


def one_norm(f: Polynomial) -> float:
    return math.fsum(abs(c) for _, c in f.items())


def fix_prefix(f: Polynomial, r: Sequence[float]) -> Polynomial:
    """Substitute ``x_1 = r_1, ..., x_m = r_m``; result has ``n - m`` variables."""
    m = len(r)
    if m > f.n:
        raise ValueError(f"cannot fix {m} of {f.n} variables")
    if m == 0:
        return f
    acc: dict[Monomial, list[float]] = {}
    for a, c in f.items():
        t = c
        for ri, e in zip(r, a[:m]):
            if e:
                t *= float(ri) ** e
        acc.setdefault(a[m:], []).append(t)
    return Polynomial(f.n - m, {k: math.fsum(v) for k, v in acc.items()})


def substitute_signs(f: Polynomial, tau: Sequence[int]) -> Polynomial:
    """``f(tau_1 x_1, ..., tau_n x_n)`` for a sign vector ``tau``."""
    out = {}
    for a, c in f.items():
        s = 1
        for t, e in zip(tau, a):
            if t < 0 and e % 2:
                s = -s
        out[a] = s * c
    return Polynomial(f.n, out)


def shifted_monomial(h: Sequence[float], alpha: Sequence[int]) -> Polynomial:
    """Binomial expansion of ``prod_i (X_i - h_i)^(2 alpha_i)``."""
    n = len(h)
    if len(alpha) != n:
        raise ValueError("shift and exponent lengths differ")
    factors = []
    for i, (hi, ai) in enumerate(zip(h, alpha)):
        e = 2 * ai
        factors.append([(k, comb(e, k) * (-float(hi)) ** (e - k)) for k in range(e + 1)])
    terms: dict[Monomial, float] = {}
    for combo in _cartesian(*factors):
        key = tuple(k for k, _ in combo)
        c = 1.0
        for _, v in combo:
            c *= v
        terms[key] = terms.get(key, 0.0) + c
    return Polynomial(n, terms)


def translate(f: Polynomial, h: Sequence[float]) -> Polynomial:
    """``Y -> f(Y + h)`` expanded in the monomials of ``Y``."""
    if len(h) != f.n:
        raise ValueError("shift has the wrong dimension")
    h = [float(v) for v in h]
    acc: dict[Monomial, list[float]] = {}
    for alpha, c in f.items():
        factors = [[(k, comb(a, k) * hi ** (a - k)) for k in range(a + 1)] for a, hi in zip(alpha, h)]
        for combo in _cartesian(*factors):
            key = tuple(k for k, _ in combo)
            v = c
            for _, w in combo:
                v *= w
            acc.setdefault(key, []).append(v)
    return Polynomial(f.n, {k: math.fsum(v) for k, v in acc.items()})


def coefficient_vector(f: Polynomial, basis: Sequence[Monomial]) -> np.ndarray:
    index = {a: i for i, a in enumerate(basis)}
    v = np.zeros(len(basis))
    for a, c in f.items():
        try:
            v[index[a]] = c
        except KeyError:
            raise ValueError(f"monomial {a} not in basis") from None
    return v


# ---------------------------------------------------------------------------
# text format
#
#   poly   := term (('+'|'-') term)*
#   term   := coeff ['*' factor ('*' factor)*] | factor ('*' factor)*
#   factor := 'x' <k> ['^' <e>]

_NUMBER = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_VAR = re.compile(r"x(\d+)")
_INT = re.compile(r"\d+")


class _Parser:
    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        self.pos = 0

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect_match(self, pattern, what):
        self.skip()
        m = pattern.match(self.text, self.pos)
        if not m:
            raise ParseError(f"expected {what}", self.pos)
        self.pos = m.end()
        return m

    def factor(self, alpha: list[int]):
        start = self.pos
        m = self.expect_match(_VAR, "variable 'x<k>'")
        k = int(m.group(1))
        if k < 1 or k > self.n:
            raise ParseError(f"variable index x{k} outside 1..{self.n}", start)
        e = 1
        if self.peek() == "^":
            self.pos += 1
            epos = self.pos
            e = int(self.expect_match(_INT, "exponent").group(0))
            if e > MAX_EXPONENT:
                raise ParseError(f"exponent {e} exceeds {MAX_EXPONENT}", epos)
        alpha[k - 1] += e
        if alpha[k - 1] > MAX_EXPONENT:
            raise ParseError(f"exponent overflow for x{k}", start)

    def term(self) -> tuple[Monomial, float]:
        alpha = [0] * self.n
        c = 1.0
        ch = self.peek()
        if ch == "x":
            self.factor(alpha)
        else:
            c = float(self.expect_match(_NUMBER, "coefficient or variable").group(0))
            if self.peek() != "*":
                return tuple(alpha), c
            self.pos += 1
            self.factor(alpha)
        while self.peek() == "*":
            self.pos += 1
            self.factor(alpha)
        return tuple(alpha), c

    def parse(self) -> Polynomial:
        terms: dict[Monomial, float] = {}
        sign = 1.0
        ch = self.peek()
        if ch in "+-" and ch:
            sign = -1.0 if ch == "-" else 1.0
            self.pos += 1
        if not self.peek():
            raise ParseError("empty polynomial", self.pos)
        while True:
            alpha, c = self.term()
            terms[alpha] = terms.get(alpha, 0.0) + sign * c
            ch = self.peek()
            if not ch:
                break
            if ch not in "+-":
                raise ParseError(f"unexpected character {ch!r}", self.pos)
            sign = -1.0 if ch == "-" else 1.0
            self.pos += 1
        return Polynomial(self.n, terms)


def parse(text: str, n: int) -> Polynomial:
    """Parse the term-list format, e.g. ``"2*x1^2*x2 - 1"``."""
    return _Parser(text, n).parse()


def _fmt_coef(c: float) -> str:
    s = repr(float(c))
    if s.endswith(".0"):
        s = s[:-2]
    return s


def format_poly(f: Polynomial) -> str:
    """Inverse of :func:`parse`; coefficients are written with ``repr`` so
    reparsing reproduces them exactly."""
    if f.is_zero():
        return "0"
    pieces = []
    for alpha, c in sorted(f.items(), key=lambda t: grlex_key(t[0]), reverse=True):
        factors = []
        for i, e in enumerate(alpha):
            if e == 1:
                factors.append(f"x{i + 1}")
            elif e > 1:
                factors.append(f"x{i + 1}^{e}")
        mag = abs(c)
        if not factors:
            body = _fmt_coef(mag)
        elif mag == 1.0:
            body = "*".join(factors)
        else:
            body = _fmt_coef(mag) + "*" + "*".join(factors)
        if not pieces:
            pieces.append(("-" if c < 0 else "") + body)
        else:
            pieces.append((" - " if c < 0 else " + ") + body)
    return "".join(pieces)


def read_poly_file(path, n: int | None = None) -> Polynomial:
    """Read one polynomial from a file; ``#`` starts a comment.

    When ``n`` is omitted it is inferred from the largest variable index.
    """
    with open(path) as fh:
        text = fh.read()
    return parse_with_inferred_n(text, n)


def strip_comments(text: str) -> str:
    return " ".join(line.split("#", 1)[0] for line in text.splitlines())


def parse_with_inferred_n(text: str, n: int | None = None) -> Polynomial:
    body = strip_comments(text)
    if n is None:
        idx = [int(k) for k in _VAR.findall(body)]
        n = max(idx) if idx else 1
    return parse(body, n)


def variables(n: int) -> list[Polynomial]:
    """Coordinate polynomials ``X_1, ..., X_n``."""
    return [Polynomial.variable(n, i) for i in range(n)]


def sum_polys(polys: Iterable[Polynomial], n: int) -> Polynomial:
    total = Polynomial.zero(n)
    for p in polys:
        total = total + p
    return total
