"""Sparse multivariate polynomials, semi-algebraic sets and the stochastic
system model ``x(k+1) = f(x(k), w(k))``.

Coefficients are double precision.  Every basis enumeration uses graded
lexicographic order with respect to the declared variable order.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Polynomial",
    "PolynomialSyntaxError",
    "parse_poly",
    "monomials",
    "compose",
    "expect_noise",
    "eval_poly",
    "Distribution",
    "Normal",
    "Uniform",
    "PointMass",
    "MomentList",
    "NoiseModel",
    "BasicSet",
    "Region",
    "Labeling",
    "StochasticSystem",
]

Exponent = tuple[int, ...]


class Polynomial:
    """Real polynomial stored as ``{exponent tuple: coefficient}``.

    ``vars`` fixes the variable order; exponent tuples have one entry per
    variable.  Zero coefficients are never stored.
    """

    __slots__ = ("vars", "terms")

    def __init__(self, vars: Sequence[str], terms: Mapping[Exponent, float] | None = None):
        self.vars = tuple(vars)
        n = len(self.vars)
        clean = {}
        for e, c in (terms or {}).items():
            e = tuple(int(k) for k in e)
            if len(e) != n:
                raise ValueError(f"exponent {e} does not match {n} variables")
            if any(k < 0 for k in e):
                raise ValueError("negative exponent")
            c = float(c)
            if c != 0.0:
                clean[e] = clean.get(e, 0.0) + c
        self.terms = {e: c for e, c in clean.items() if c != 0.0}

    # constructors -----------------------------------------------------
    @classmethod
    def constant(cls, vars: Sequence[str], value: float) -> "Polynomial":
        return cls(vars, {(0,) * len(vars): value})

    @classmethod
    def variable(cls, vars: Sequence[str], name: str) -> "Polynomial":
        vars = tuple(vars)
        e = [0] * len(vars)
        e[vars.index(name)] = 1
        return cls(vars, {tuple(e): 1.0})

    @classmethod
    def _raw(cls, vars: tuple[str, ...], terms: dict) -> "Polynomial":
        p = object.__new__(cls)
        p.vars = vars
        p.terms = terms
        return p

    # basic queries ----------------------------------------------------
    @property
    def nvars(self) -> int:
        return len(self.vars)

    def degree(self, indices: Iterable[int] | None = None) -> int:
        """Total degree, optionally counting only the variables at ``indices``."""
        if not self.terms:
            return 0
        if indices is None:
            return max(sum(e) for e in self.terms)
        idx = list(indices)
        return max(sum(e[i] for i in idx) for e in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def coeff(self, exponent: Exponent) -> float:
        return self.terms.get(tuple(exponent), 0.0)

    def used_vars(self) -> set[str]:
        used = set()
        for e in self.terms:
            used.update(v for v, k in zip(self.vars, e) if k)
        return used

    def __len__(self):
        return len(self.terms)

    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.vars, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.vars == other.vars and self.terms == other.terms

    def __hash__(self):
        return hash((self.vars, frozenset(self.terms.items())))

    def almost_equal(self, other: "Polynomial", tol: float = 1e-9) -> bool:
        diff = self - other
        return all(abs(c) <= tol for c in diff.terms.values())

    # arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.vars != self.vars:
                raise ValueError(f"variable mismatch: {self.vars} vs {other.vars}")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.vars, float(other))
        raise TypeError(f"cannot combine polynomial with {type(other).__name__}")

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            v = out.get(e, 0.0) + c
            if v == 0.0:
                out.pop(e, None)
            else:
                out[e] = v
        return Polynomial._raw(self.vars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw(self.vars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            other = float(other)
            if other == 0.0:
                return Polynomial._raw(self.vars, {})
            return Polynomial._raw(self.vars, {e: c * other for e, c in self.terms.items()})
        other = self._coerce(other)
        out: dict[Exponent, float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial._raw(self.vars, {e: c for e, c in out.items() if c != 0.0})

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / float(other))

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = Polynomial.constant(self.vars, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # variable handling ------------------------------------------------
    def lift(self, vars: Sequence[str]) -> "Polynomial":
        """Re-express over a superset of variables (order may change)."""
        vars = tuple(vars)
        pos = []
        for v in self.vars:
            if v not in vars:
                raise ValueError(f"variable {v!r} missing from target space")
            pos.append(vars.index(v))
        out = {}
        for e, c in self.terms.items():
            ne = [0] * len(vars)
            for i, k in zip(pos, e):
                ne[i] = k
            out[tuple(ne)] = c
        return Polynomial._raw(vars, out)

    def restrict(self, vars: Sequence[str]) -> "Polynomial":
        """Drop variables that do not occur; fails if a dropped one is used."""
        vars = tuple(vars)
        keep = []
        for i, v in enumerate(self.vars):
            if v in vars:
                keep.append(i)
        dropped = [i for i in range(self.nvars) if i not in keep]
        out = {}
        for e, c in self.terms.items():
            if any(e[i] for i in dropped):
                raise ValueError("polynomial uses a variable outside the target space")
            out[tuple(e[i] for i in keep)] = c
        order = [self.vars[i] for i in keep]
        return Polynomial._raw(tuple(order), out).lift(vars)

    # evaluation ----------------------------------------------------------
    def __call__(self, point):
        return eval_poly(self, point)

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for e in sorted(self.terms, key=_grlex_key):
            c = self.terms[e]
            mono = "*".join(
                v if k == 1 else f"{v}^{k}" for v, k in zip(self.vars, e) if k
            )
            mag = abs(c)
            if mono and mag == 1.0:
                body = mono
            elif mono:
                body = f"{_fmt(mag)}*{mono}"
            else:
                body = _fmt(mag)
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    def __repr__(self):
        return f"Polynomial({str(self)!r}, vars={self.vars})"

    def to_json(self) -> list:
        return [
            {"exponent": list(e), "coefficient": c}
            for e, c in sorted(self.terms.items(), key=lambda t: _grlex_key(t[0]))
        ]

    @classmethod
    def from_json(cls, vars: Sequence[str], data: list) -> "Polynomial":
        return cls(vars, {tuple(t["exponent"]): t["coefficient"] for t in data})


def _fmt(c: float) -> str:
    return repr(c) if c != int(c) or abs(c) >= 1e16 else str(int(c))


def _grlex_key(e: Exponent):
    # graded: lower total degree first; within a degree, larger exponents of
    # earlier variables first
    return (sum(e), tuple(-k for k in e))


@lru_cache(maxsize=None)
def monomials(nvars: int, max_degree: int, min_degree: int = 0) -> tuple[Exponent, ...]:
    """All exponent tuples with ``min_degree <= |e| <= max_degree`` in graded
    lexicographic order."""
    out = []
    for d in range(min_degree, max_degree + 1):
        level = []
        for combo in itertools.combinations_with_replacement(range(nvars), d):
            e = [0] * nvars
            for i in combo:
                e[i] += 1
            level.append(tuple(e))
        level.sort(key=lambda e: tuple(-k for k in e))
        out.extend(level)
    return tuple(out)


# --------------------------------------------------------------------------
# parsing


class PolynomialSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


_PTOKEN = re.compile(
    r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|(\*\*|[-+*/^()])|([A-Za-z_][A-Za-z0-9_]*))"
)


class _PolyParser:
    def __init__(self, text: str, vars: tuple[str, ...]):
        self.text = text
        self.vars = vars
        self.tokens = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _PTOKEN.match(text, pos)
            if m is None or m.end() == pos:
                col = pos + 1 + (len(text[pos:]) - len(text[pos:].lstrip()))
                raise PolynomialSyntaxError("unexpected character", col)
            for g in (1, 2, 3):
                if m.group(g) is not None:
                    self.tokens.append((g, m.group(g), m.start(g) + 1))
            pos = m.end()
        self.tokens.append((0, "<end>", len(text) + 1))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def parse(self) -> Polynomial:
        p = self.expr()
        kind, tok, pos = self.peek()
        if kind != 0:
            raise PolynomialSyntaxError(f"unexpected token {tok!r}", pos)
        return p

    def expr(self) -> Polynomial:
        p = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> Polynomial:
        p = self.signed()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            q = self.signed()
            if op == "*":
                p = p * q
            else:
                if q.degree() != 0 or q.is_zero():
                    raise PolynomialSyntaxError("division only by non-zero constants", self.peek()[2])
                p = p / q.coeff((0,) * len(self.vars))
        return p

    def signed(self) -> Polynomial:
        if self.peek()[1] == "-":
            self.take()
            return -self.signed()
        if self.peek()[1] == "+":
            self.take()
            return self.signed()
        return self.power()

    def power(self) -> Polynomial:
        base = self.primary()
        if self.peek()[1] in ("^", "**"):
            self.take()
            neg = False
            if self.peek()[1] == "-":
                _, _, pos = self.take()
                neg = True
            kind, tok, pos = self.take()
            if neg:
                raise PolynomialSyntaxError("negative exponent", pos)
            if kind != 1 or not tok.isdigit():
                raise PolynomialSyntaxError("exponent must be a non-negative integer", pos)
            return base ** int(tok)
        return base

    def primary(self) -> Polynomial:
        kind, tok, pos = self.take()
        if kind == 1:
            return Polynomial.constant(self.vars, float(tok))
        if kind == 3:
            if tok not in self.vars:
                raise PolynomialSyntaxError(f"unknown variable {tok!r}", pos)
            return Polynomial.variable(self.vars, tok)
        if tok == "(":
            p = self.expr()
            k2, t2, p2 = self.take()
            if t2 != ")":
                raise PolynomialSyntaxError("expected ')'", p2)
            return p
        if kind == 0:
            raise PolynomialSyntaxError("unexpected end of expression", pos)
        raise PolynomialSyntaxError(f"unexpected token {tok!r}", pos)


def parse_poly(text: str, vars: Sequence[str]) -> Polynomial:
    """Parse an arithmetic expression in ``vars`` (``+ - * ^``, parentheses,
    decimal literals, division by constants)."""
    return _PolyParser(str(text), tuple(vars)).parse()


# --------------------------------------------------------------------------
# composition, expectation, evaluation


def compose(b: Polynomial, fs: Sequence[Polynomial]) -> Polynomial:
    """Substitute ``fs[i]`` for the i-th variable of ``b``.

    All ``fs`` must share one variable space, which becomes the result's.
    """
    if len(fs) != b.nvars:
        raise ValueError(f"expected {b.nvars} substitutions, got {len(fs)}")
    if not fs:
        raise ValueError("nothing to substitute")
    target = fs[0].vars
    for f in fs:
        if f.vars != target:
            raise ValueError("substituted polynomials must share variables")
    powers = _PowerCache(fs)
    out = Polynomial(target)
    for e, c in b.terms.items():
        out = out + powers.monomial(e) * c
    return out


class _PowerCache:
    """Memoised products ``prod_i fs[i]**e[i]``."""

    def __init__(self, fs: Sequence[Polynomial]):
        self.fs = list(fs)
        self.cache: dict[Exponent, Polynomial] = {}
        one = Polynomial.constant(self.fs[0].vars, 1.0)
        self.cache[(0,) * len(self.fs)] = one

    def monomial(self, e: Exponent) -> Polynomial:
        got = self.cache.get(e)
        if got is not None:
            return got
        # peel one factor off the last used variable
        i = max(j for j, k in enumerate(e) if k)
        prev = list(e)
        prev[i] -= 1
        p = self.monomial(tuple(prev)) * self.fs[i]
        self.cache[e] = p
        return p


def expect_noise(p: Polynomial, noise: "NoiseModel", state_vars: Sequence[str]) -> Polynomial:
    """Integrate out the noise variables of ``p`` using raw moments.

    ``p`` lives over ``state_vars + noise.vars``; the result lives over
    ``state_vars`` only.
    """
    state_vars = tuple(state_vars)
    n = len(state_vars)
    if p.vars != state_vars + noise.vars:
        raise ValueError("polynomial must be over state variables followed by noise variables")
    out: dict[Exponent, float] = {}
    for e, c in p.terms.items():
        m = c
        for j, k in enumerate(e[n:]):
            if k:
                m *= noise.moment(j, k)
                if m == 0.0:
                    break
        if m != 0.0:
            key = e[:n]
            out[key] = out.get(key, 0.0) + m
    return Polynomial(state_vars, out)


def eval_poly(p: Polynomial, point) -> float | np.ndarray:
    """Evaluate at one point (1-d) or many points (rows of a 2-d array)."""
    x = np.asarray(point, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[-1] != p.nvars:
        raise ValueError(f"point has {x.shape[-1]} coordinates, polynomial has {p.nvars} variables")
    total = np.zeros(x.shape[0])
    if p.terms:
        maxdeg = np.max(np.array(list(p.terms.keys())), axis=0)
        pows = [
            [np.ones(x.shape[0])] + [None] * int(maxdeg[i]) for i in range(p.nvars)
        ]
        for i in range(p.nvars):
            for k in range(1, int(maxdeg[i]) + 1):
                pows[i][k] = pows[i][k - 1] * x[:, i]
        for e, c in p.terms.items():
            term = np.full(x.shape[0], c)
            for i, k in enumerate(e):
                if k:
                    term = term * pows[i][k]
            total += term
    return float(total[0]) if single else total


# --------------------------------------------------------------------------
# noise distributions


class Distribution:
    name = "distribution"

    def moment(self, k: int) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError(f"{self.name} noise cannot be sampled")

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Normal(Distribution):
    mean: float = 0.0
    std: float = 1.0
    name = "normal"

    def moment(self, k: int) -> float:
        return _normal_moment(self.mean, self.std, k)

    def sample(self, rng, size):
        return rng.normal(self.mean, self.std, size)

    def to_json(self):
        return {"type": "normal", "mean": self.mean, "std": self.std}


@lru_cache(maxsize=4096)
def _normal_moment(mu: float, sigma: float, k: int) -> float:
    # E[X^k] = mu E[X^{k-1}] + (k-1) sigma^2 E[X^{k-2}]
    if k == 0:
        return 1.0
    if k == 1:
        return mu
    return mu * _normal_moment(mu, sigma, k - 1) + (k - 1) * sigma**2 * _normal_moment(mu, sigma, k - 2)


@dataclass(frozen=True)
class Uniform(Distribution):
    low: float = 0.0
    high: float = 1.0
    name = "uniform"

    def __post_init__(self):
        if not self.high > self.low:
            raise ValueError("uniform noise needs low < high")

    def moment(self, k: int) -> float:
        a, b = self.low, self.high
        return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    def to_json(self):
        return {"type": "uniform", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class PointMass(Distribution):
    value: float = 0.0
    name = "point"

    def moment(self, k: int) -> float:
        return self.value**k if k else 1.0

    def sample(self, rng, size):
        return np.full(size, self.value, dtype=float)

    def to_json(self):
        return {"type": "point", "value": self.value}


@dataclass(frozen=True)
class MomentList(Distribution):
    """User-supplied raw moments ``m(0), m(1), ...``."""

    moments: tuple[float, ...] = (1.0,)
    name = "moments"

    def __post_init__(self):
        if not self.moments or abs(self.moments[0] - 1.0) > 1e-12:
            raise ValueError("moment list must start with m(0) = 1")
        for k in range(0, len(self.moments), 2):
            if self.moments[k] < 0:
                raise ValueError(f"even moment m({k}) must be non-negative")

    def moment(self, k: int) -> float:
        if k >= len(self.moments):
            raise ValueError(f"moment of order {k} not supplied")
        return float(self.moments[k])

    def to_json(self):
        return {"type": "moments", "moments": list(self.moments)}


@dataclass(frozen=True)
class NoiseModel:
    """Independent noise components, i.i.d. over time."""

    vars: tuple[str, ...]
    components: tuple[Distribution, ...]

    def __post_init__(self):
        if len(self.vars) != len(self.components):
            raise ValueError("one distribution per noise variable required")

    @classmethod
    def standard_normal(cls, vars: Sequence[str]) -> "NoiseModel":
        return cls(tuple(vars), tuple(Normal() for _ in vars))

    def moment(self, j: int, k: int) -> float:
        return self.components[j].moment(k)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if not self.vars:
            return np.zeros((n, 0))
        return np.column_stack([d.sample(rng, n) for d in self.components])


# --------------------------------------------------------------------------
# semi-algebraic sets


@dataclass
class BasicSet:
    """``{x : g(x) >= 0 for every g}`` over the state variables.

    ``box`` is an optional axis-aligned bounding box ``(low, high)``; when
    omitted it is derived from the linear inequalities if they bound the set.
    """

    inequalities: list[Polynomial]
    box: tuple[np.ndarray, np.ndarray] | None = None
    source: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.inequalities:
            raise ValueError("a basic set needs at least one inequality")
        vars0 = self.inequalities[0].vars
        if any(g.vars != vars0 for g in self.inequalities):
            raise ValueError("inequalities must share variables")
        if self.box is None:
            self.box = _linear_bounding_box(self.inequalities)
        else:
            lo, hi = (np.asarray(b, dtype=float) for b in self.box)
            self.box = (lo, hi)

    @property
    def vars(self) -> tuple[str, ...]:
        return self.inequalities[0].vars

    @property
    def bounded(self) -> bool:
        return self.box is not None

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(x.shape[0], dtype=bool)
        for g in self.inequalities:
            ok &= eval_poly(g, x) >= -tol
        return ok

    def sample(self, rng: np.random.Generator, n: int, max_tries: int = 200) -> np.ndarray:
        """Uniform samples by rejection from the bounding box."""
        if self.box is None:
            raise ValueError("cannot sample uniformly from an unbounded set")
        lo, hi = self.box
        got = []
        count = 0
        for _ in range(max_tries):
            batch = rng.uniform(lo, hi, size=(max(4 * n, 64), len(lo)))
            keep = batch[self.contains(batch)]
            got.append(keep)
            count += len(keep)
            if count >= n:
                break
        pts = np.concatenate(got)[:n] if got else np.zeros((0, len(lo)))
        if len(pts) < n:
            raise ValueError("rejection sampling failed; set may be empty or very thin")
        return pts


def _linear_bounding_box(ineqs: Sequence[Polynomial]):
    lin = [g for g in ineqs if g.degree() <= 1]
    if not lin:
        return None
    n = lin[0].nvars
    # g(x) = a.x + b >= 0  ->  -a.x <= b
    A = np.zeros((len(lin), n))
    b = np.zeros(len(lin))
    for r, g in enumerate(lin):
        for e, c in g.terms.items():
            if sum(e) == 0:
                b[r] = c
            else:
                A[r, e.index(1)] = -c
    from scipy.optimize import linprog

    lo = np.zeros(n)
    hi = np.zeros(n)
    for i in range(n):
        for sign, dest in ((1.0, lo), (-1.0, hi)):
            c = np.zeros(n)
            c[i] = sign
            res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
            if res.status != 0:
                if res.status == 2:
                    raise ValueError("basic set is empty")
                return None
            dest[i] = res.fun * sign
    return lo, hi


@dataclass
class Region:
    """Finite union of basic sets."""

    parts: list[BasicSet]
    name: str = ""

    def __post_init__(self):
        if not self.parts:
            raise ValueError("a region needs at least one basic set")

    @property
    def bounded(self) -> bool:
        return all(p.bounded for p in self.parts)

    @property
    def vars(self) -> tuple[str, ...]:
        return self.parts[0].vars

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.zeros(x.shape[0], dtype=bool)
        for p in self.parts:
            ok |= p.contains(x, tol)
        return ok

    def box(self):
        if not self.bounded:
            return None
        lo = np.min([p.box[0] for p in self.parts], axis=0)
        hi = np.max([p.box[1] for p in self.parts], axis=0)
        return lo, hi

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Uniform over the union (overlaps are counted once)."""
        lo, hi = self.box() or (None, None)
        if lo is None:
            raise ValueError("cannot sample uniformly from an unbounded region")
        got, count = [], 0
        for _ in range(500):
            batch = rng.uniform(lo, hi, size=(max(4 * n, 64), len(lo)))
            keep = batch[self.contains(batch)]
            got.append(keep)
            count += len(keep)
            if count >= n:
                break
        pts = np.concatenate(got)[:n]
        if len(pts) < n:
            raise ValueError("rejection sampling failed; region may be empty or very thin")
        return pts

    @classmethod
    def union(cls, regions: Sequence["Region"], name: str = "") -> "Region":
        parts = []
        for r in regions:
            parts.extend(r.parts)
        return cls(parts, name)


class Labeling:
    """Map from states to propositions.

    ``regions`` maps a proposition to its region; the first region (in the
    given order) containing a point decides its label, and points outside
    every region get ``default``.
    """

    def __init__(self, regions: Mapping[str, Region | None], default: str | None = None):
        self.regions = dict(regions)
        self.props = tuple(self.regions)
        if default is not None and default not in self.regions:
            self.regions[default] = None
            self.props = tuple(self.regions)
        self.default = default
        for p, r in self.regions.items():
            if r is None and p != default:
                raise ValueError(f"proposition {p!r} has no region and is not the default")

    def region(self, prop: str) -> Region | None:
        return self.regions[prop]

    def preimage(self, props: Iterable[str]) -> Region | None:
        """Union of the regions of ``props``; ``None`` if one is the unbounded
        complement."""
        regs = []
        for p in sorted(props, key=self.props.index):
            r = self.regions[p]
            if r is None:
                return None
            regs.append(r)
        return Region.union(regs, "|".join(sorted(props)))

    def label_indices(self, points) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(x.shape[0], -1, dtype=int)
        for i, p in enumerate(self.props):
            r = self.regions[p]
            if r is None:
                continue
            free = out < 0
            if not free.any():
                break
            hit = r.contains(x[free])
            idx = np.flatnonzero(free)[hit]
            out[idx] = i
        if (out < 0).any():
            if self.default is None:
                raise ValueError("state outside every labelled region and no default label")
            out[out < 0] = self.props.index(self.default)
        return out

    def label(self, point) -> str:
        return self.props[int(self.label_indices(point)[0])]


# --------------------------------------------------------------------------
# system


class StochasticSystem:
    """Discrete-time system ``x(k+1) = f(x(k), w(k))`` with polynomial ``f``."""

    def __init__(
        self,
        state_vars: Sequence[str],
        dynamics: Sequence[Polynomial],
        noise: NoiseModel,
    ):
        self.state_vars = tuple(state_vars)
        self.noise = noise
        self.all_vars = self.state_vars + noise.vars
        if len(set(self.all_vars)) != len(self.all_vars):
            raise ValueError("state and noise variable names must be distinct")
        if len(dynamics) != len(self.state_vars):
            raise ValueError(
                f"{len(self.state_vars)} state variables but {len(dynamics)} update maps"
            )
        self.dynamics = []
        for f in dynamics:
            self.dynamics.append(f if f.vars == self.all_vars else f.restrict(self.all_vars))

    @property
    def n(self) -> int:
        return len(self.state_vars)

    @property
    def m(self) -> int:
        return len(self.noise.vars)

    def step(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        w = np.atleast_2d(w)
        z = np.hstack([x, w]) if w.shape[1] else x
        return np.column_stack([eval_poly(f, z) for f in self.dynamics])

    def expected_composition(self, b: Polynomial) -> Polynomial:
        """``E[b(f(x, w)) | x]`` as a polynomial in the state variables."""
        return expect_noise(compose(b, self.dynamics), self.noise, self.state_vars)

    def fingerprint(self) -> str:
        dyn = ";".join(str(f) for f in self.dynamics)
        noise = ";".join(repr(d.to_json()) if hasattr(d, "to_json") else d.name for d in self.noise.components)
        return f"{self.state_vars}|{self.noise.vars}|{dyn}|{noise}"
