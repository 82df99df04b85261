"""Sum-of-squares programs compiled to block-diagonal SDPs.

Decision polynomials are affine in the SDP unknowns.  A constraint "``p`` is
SOS" becomes ``p = z(x)^T G z(x)`` coefficient by coefficient with a fresh
PSD Gram block ``G``; ``z`` is a graded-lex monomial basis of half the degree
of ``p``, pruned with cheap Newton-polytope arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from barrierltl.algebra import Polynomial, monomials
from barrierltl.sdp import Block, SdpInstance

__all__ = ["AffinePoly", "SosBuilder", "SosConstraint", "CONST"]

CONST = -1  # key of the constant part inside a linear form

Exponent = tuple[int, ...]
LinearForm = dict[int, float]


def _axpy(dst: LinearForm, src: LinearForm, a: float) -> None:
    for k, v in src.items():
        nv = dst.get(k, 0.0) + a * v
        if nv == 0.0:
            dst.pop(k, None)
        else:
            dst[k] = nv


class AffinePoly:
    """Polynomial whose coefficients are affine forms in SDP unknowns."""

    __slots__ = ("vars", "terms")

    def __init__(self, vars: Sequence[str], terms: Mapping[Exponent, LinearForm] | None = None):
        self.vars = tuple(vars)
        self.terms: dict[Exponent, LinearForm] = {
            e: dict(f) for e, f in (terms or {}).items() if f
        }

    @classmethod
    def from_poly(cls, p: Polynomial) -> "AffinePoly":
        return cls(p.vars, {e: {CONST: c} for e, c in p.terms.items()})

    @classmethod
    def constant(cls, vars: Sequence[str], value: float) -> "AffinePoly":
        return cls(vars, {(0,) * len(vars): {CONST: float(value)}} if value else {})

    @classmethod
    def unknown(cls, vars: Sequence[str], var_id: int, coef: float = 1.0) -> "AffinePoly":
        return cls(vars, {(0,) * len(vars): {var_id: coef}})

    def copy(self) -> "AffinePoly":
        return AffinePoly(self.vars, self.terms)

    def __add__(self, other):
        other = self._coerce(other)
        out = {e: dict(f) for e, f in self.terms.items()}
        for e, f in other.terms.items():
            d = out.setdefault(e, {})
            _axpy(d, f, 1.0)
            if not d:
                del out[e]
        return AffinePoly(self.vars, out)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            a = float(other)
            if a == 0.0:
                return AffinePoly(self.vars)
            return AffinePoly(self.vars, {e: {k: a * v for k, v in f.items()} for e, f in self.terms.items()})
        if isinstance(other, Polynomial):
            if other.vars != self.vars:
                raise ValueError("variable mismatch")
            out: dict[Exponent, LinearForm] = {}
            for e1, f in self.terms.items():
                for e2, c in other.terms.items():
                    e = tuple(a + b for a, b in zip(e1, e2))
                    _axpy(out.setdefault(e, {}), f, c)
            return AffinePoly(self.vars, {e: f for e, f in out.items() if f})
        return NotImplemented

    __rmul__ = __mul__

    def _coerce(self, other) -> "AffinePoly":
        if isinstance(other, AffinePoly):
            if other.vars != self.vars:
                raise ValueError("variable mismatch")
            return other
        if isinstance(other, Polynomial):
            return AffinePoly.from_poly(other)
        if isinstance(other, (int, float, np.floating)):
            return AffinePoly.constant(self.vars, float(other))
        raise TypeError(f"cannot combine AffinePoly with {type(other).__name__}")

    def substitute(self, images: Mapping[Exponent, Polynomial], target_vars: Sequence[str]) -> "AffinePoly":
        """Replace each monomial ``x^e`` by the polynomial ``images[e]``."""
        out: dict[Exponent, LinearForm] = {}
        for e, f in self.terms.items():
            for e2, c in images[e].terms.items():
                _axpy(out.setdefault(e2, {}), f, c)
        return AffinePoly(target_vars, {e: f for e, f in out.items() if f})

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def value(self, u: np.ndarray) -> Polynomial:
        """Numeric polynomial for a given vector of unknowns."""
        out = {}
        for e, f in self.terms.items():
            v = 0.0
            for k, a in f.items():
                v += a if k == CONST else a * u[k]
            if v != 0.0:
                out[e] = v
        return Polynomial(self.vars, out)


@dataclass
class SosConstraint:
    label: str
    expr: AffinePoly
    basis: list[Exponent]
    block: int  # index into SosBuilder.blocks
    gram: AffinePoly


@dataclass
class _BlockInfo:
    size: int
    first_id: int
    label: str
    basis: list[Exponent] = field(default_factory=list)


class SosBuilder:
    """Accumulates decision variables and SOS/equality constraints."""

    def __init__(self, vars: Sequence[str]):
        self.vars = tuple(vars)
        self.nx = len(self.vars)
        self.n_ids = 0
        self.blocks: list[_BlockInfo] = []
        self.lp_ids: list[int] = []
        self.lp_labels: list[str] = []
        self.constraints: list[SosConstraint] = []
        self.equalities: list[tuple[LinearForm, float, str]] = []
        self.objective: LinearForm = {}

    # unknowns ----------------------------------------------------------
    def scalar(self, label: str = "") -> int:
        """A non-negative scalar unknown; returns its id."""
        k = self.n_ids
        self.n_ids += 1
        self.lp_ids.append(k)
        self.lp_labels.append(label)
        return k

    def _gram_block(self, basis: Sequence[Exponent], label: str) -> tuple[int, AffinePoly]:
        n = len(basis)
        info = _BlockInfo(n, self.n_ids, label, list(basis))
        self.n_ids += n * (n + 1) // 2
        self.blocks.append(info)
        terms: dict[Exponent, LinearForm] = {}
        k = info.first_id
        for i in range(n):
            for j in range(i, n):
                e = tuple(a + b for a, b in zip(basis[i], basis[j]))
                d = terms.setdefault(e, {})
                d[k] = d.get(k, 0.0) + (1.0 if i == j else 2.0)
                k += 1
        return len(self.blocks) - 1, AffinePoly(self.vars, terms)

    def sos_poly(self, degree: int, label: str = "") -> AffinePoly:
        """A fresh SOS polynomial of the given (even) degree."""
        if degree % 2:
            raise ValueError(f"SOS polynomial degree must be even, got {degree}")
        if degree == 0:
            return AffinePoly.unknown(self.vars, self.scalar(label))
        _, poly = self._gram_block(list(monomials(self.nx, degree // 2)), label)
        return poly

    # constraints -------------------------------------------------------
    def add_sos(self, expr: AffinePoly, label: str = "") -> SosConstraint:
        basis = self._basis_for(expr)
        if basis:
            block, gram = self._gram_block(basis, label)
        else:
            block, gram = -1, AffinePoly(self.vars)
        con = SosConstraint(label, expr, basis, block, gram)
        self.constraints.append(con)
        return con

    def add_equality(self, form: LinearForm, value: float, label: str = "") -> None:
        self.equalities.append((dict(form), float(value), label))

    def minimize(self, form: LinearForm) -> None:
        self.objective = dict(form)

    def _basis_for(self, expr: AffinePoly) -> list[Exponent]:
        support = set(expr.terms)
        if not support:
            return []
        half = max(sum(e) for e in support) // 2
        # each exponent of a basis element is at most half the largest
        # exponent of that variable in the support
        caps = [max(e[i] for e in support) // 2 for i in range(self.nx)]
        lows = [min(e[i] for e in support) for i in range(self.nx)]
        mins = [(lo + 1) // 2 for lo in lows]
        mindeg = (min(sum(e) for e in support) + 1) // 2
        basis = [
            e
            for e in monomials(self.nx, half)
            if sum(e) >= mindeg and all(mins[i] <= e[i] <= caps[i] for i in range(self.nx))
        ]
        # a basis element whose square cannot be matched must vanish
        changed = True
        while changed and basis:
            changed = False
            squares = {}
            for i, a in enumerate(basis):
                for b in basis[i + 1 :]:
                    s = tuple(x + y for x, y in zip(a, b))
                    squares[s] = squares.get(s, 0) + 1
            keep = []
            for a in basis:
                sq = tuple(2 * x for x in a)
                if sq in support or squares.get(sq, 0) > 0:
                    keep.append(a)
                else:
                    changed = True
            basis = keep
        return basis

    # compilation -------------------------------------------------------
    def columns(self) -> tuple[list[Block], np.ndarray]:
        """SDP block list and the column of every unknown id."""
        col = np.full(self.n_ids, -1, dtype=np.int64)
        blocks = []
        pos = 0
        for info in self.blocks:
            blocks.append(Block(info.size, False, info.label))
            nvec = info.size * (info.size + 1) // 2
            col[info.first_id : info.first_id + nvec] = np.arange(pos, pos + nvec)
            pos += nvec
        if self.lp_ids:
            blocks.append(Block(len(self.lp_ids), True, "scalars"))
            col[self.lp_ids] = np.arange(pos, pos + len(self.lp_ids))
            pos += len(self.lp_ids)
        return blocks, col

    def compile(self) -> tuple[SdpInstance, np.ndarray]:
        """Build the SDP; returns it with the id -> column map.

        Raises ``InfeasibleProgram`` when coefficient matching alone is
        contradictory (e.g. an odd-degree leading term).
        """
        blocks, col = self.columns()
        rows: list[LinearForm] = []
        rhs: list[float] = []
        labels: list[str] = []
        owned: list[bool] = []
        for con in self.constraints:
            mons = set(con.expr.terms) | set(con.gram.terms)
            for m in sorted(mons, key=lambda e: (sum(e), tuple(-k for k in e))):
                form = dict(con.expr.terms.get(m, {}))
                _axpy(form, con.gram.terms.get(m, {}), -1.0)
                const = form.pop(CONST, 0.0)
                if not form:
                    if abs(const) > 0.0:
                        raise InfeasibleProgram(
                            f"{con.label}: coefficient of {m} is fixed to {const:g} "
                            "but cannot be matched by the Gram basis"
                        )
                    continue
                rows.append(form)
                rhs.append(-const)
                labels.append(f"{con.label}:{m}")
                owned.append(m in con.gram.terms)
        for form, value, label in self.equalities:
            form = dict(form)
            const = form.pop(CONST, 0.0)
            rows.append(form)
            rhs.append(value - const)
            labels.append(label)
            owned.append(False)

        ri, ci, data = [], [], []
        for r, form in enumerate(rows):
            for k, v in form.items():
                ri.append(r)
                ci.append(col[k])
                data.append(v)
        nvec = sum(b.nvec for b in blocks)
        A = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), nvec))
        b = np.array(rhs)
        keep = self._independent_rows(A, b, np.array(owned, dtype=bool), labels)
        A, b = A[keep], b[keep]
        labels = [labels[i] for i in keep]
        c = np.zeros(nvec)
        for k, v in self.objective.items():
            if k != CONST:
                c[col[k]] += v
        return SdpInstance(blocks, A, b, c, labels), col

    @staticmethod
    def _independent_rows(A, b, owned, labels) -> np.ndarray:
        """Rows owning Gram entries are independent by construction; the
        rest are checked for rank and consistency."""
        free = np.flatnonzero(~owned)
        keep = set(np.flatnonzero(owned).tolist())
        if len(free) == 0:
            return np.array(sorted(keep), dtype=np.int64)
        sub = A[free]
        cols = np.unique(sub.indices)
        dense = sub[:, cols].toarray()
        # pivoted QR of the transpose ranks the rows
        _, R, piv = scipy.linalg.qr(dense.T, pivoting=True, mode="economic")
        diag = np.abs(np.diag(R)) if R.size else np.zeros(0)
        tol = max(dense.shape) * np.finfo(float).eps * (diag[0] if len(diag) else 0.0) * 10
        rank = int(np.sum(diag > max(tol, 1e-12)))
        chosen = np.sort(piv[:rank])
        rest = np.setdiff1d(np.arange(len(free)), chosen)
        if len(rest):
            basis_rows = dense[chosen]
            coef, *_ = np.linalg.lstsq(basis_rows.T, dense[rest].T, rcond=None)
            pred = coef.T @ b[free[chosen]]
            gap = np.abs(pred - b[free[rest]])
            if np.any(gap > 1e-9 * (1 + np.abs(b[free[rest]]))):
                bad = free[rest[int(np.argmax(gap))]]
                raise InfeasibleProgram(f"inconsistent coefficient constraints at {labels[bad]}")
        keep.update(free[chosen].tolist())
        return np.array(sorted(keep), dtype=np.int64)


class InfeasibleProgram(ValueError):
    """Coefficient matching is contradictory before any solving."""
