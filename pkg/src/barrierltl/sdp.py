"""Block-diagonal semidefinite programs in primal standard form.

    minimize    c . u
    subject to  A u = b,   mat(u) is PSD block by block

``u`` stacks the upper triangles of the symmetric blocks (row-major) followed
by the entries of diagonal blocks.  ``A[i, k]`` is the coefficient of the
scalar unknown ``u_k``, so for an off-diagonal entry the matrix inner product
``<A_i, Z>`` uses half of it on each side of the diagonal.

The interior-point iterations are delegated to cvxopt's cone solver; the
result is re-checked here (eigenvalues, equality residual, duality gap) so
callers never trust solver status flags alone.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Block",
    "SdpInstance",
    "SdpSolution",
    "SolverOptions",
    "solve_sdp",
    "write_sdpa",
    "read_sdpa",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Block:
    size: int
    diagonal: bool = False
    label: str = ""

    @property
    def nvec(self) -> int:
        return self.size if self.diagonal else self.size * (self.size + 1) // 2


@dataclass
class SdpInstance:
    blocks: list[Block]
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    row_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.A = sp.csr_matrix(self.A)
        self.A.eliminate_zeros()
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        nvec = sum(bl.nvec for bl in self.blocks)
        if self.A.shape != (len(self.b), nvec) or self.c.shape != (nvec,):
            raise ValueError(
                f"inconsistent SDP shapes: A {self.A.shape}, b {self.b.shape}, "
                f"c {self.c.shape}, {nvec} unknowns"
            )

    @property
    def n_constraints(self) -> int:
        return len(self.b)

    @property
    def n_unknowns(self) -> int:
        return self.A.shape[1]

    def offsets(self) -> list[int]:
        out, k = [], 0
        for bl in self.blocks:
            out.append(k)
            k += bl.nvec
        return out

    def unpack(self, u: np.ndarray) -> list[np.ndarray]:
        """Split a stacked vector into symmetric (or diagonal) matrices."""
        mats = []
        for bl, off in zip(self.blocks, self.offsets()):
            if bl.diagonal:
                mats.append(np.diag(u[off : off + bl.size]))
            else:
                M = np.zeros((bl.size, bl.size))
                iu = np.triu_indices(bl.size)
                M[iu] = u[off : off + bl.nvec]
                M = M + np.triu(M, 1).T
                mats.append(M)
        return mats

    def pack(self, mats: Sequence[np.ndarray]) -> np.ndarray:
        parts = []
        for bl, M in zip(self.blocks, mats):
            if bl.diagonal:
                parts.append(np.diag(M).copy() if M.ndim == 2 else np.asarray(M))
            else:
                parts.append(M[np.triu_indices(bl.size)])
        return np.concatenate(parts) if parts else np.zeros(0)

    def entry_index(self):
        """Per unknown: (block index, row, col) with row <= col."""
        out = []
        for bi, bl in enumerate(self.blocks):
            if bl.diagonal:
                out.extend((bi, i, i) for i in range(bl.size))
            else:
                r, c = np.triu_indices(bl.size)
                out.extend((bi, int(i), int(j)) for i, j in zip(r, c))
        return out


@dataclass
class SolverOptions:
    tol_gap: float = 1e-7
    tol_psd: float = 1e-8
    tol_eq: float = 1e-8
    max_iters: int = 200
    verbose: bool = False


@dataclass
class SdpSolution:
    """Outcome of :func:`solve_sdp`.

    ``status`` is ``optimal``, ``inaccurate`` (finished but a tolerance was
    missed), ``infeasible`` (with a checked Farkas certificate ``y``),
    ``unbounded`` or ``failed`` (numerical breakdown).
    """

    status: str
    u: np.ndarray | None = None
    y: np.ndarray | None = None
    primal_objective: float = float("nan")
    dual_objective: float = float("nan")
    iterations: int = 0
    residual: float = float("nan")
    min_eigenvalue: float = float("nan")
    gap: float = float("nan")
    message: str = ""
    seconds: float = 0.0
    matrices: list[np.ndarray] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "inaccurate")


def _to_cvxopt(inst: SdpInstance):
    """Map to cvxopt's conelp with our problem as its dual:

    min b.y  s.t.  -sum_i y_i A_i + s = C,  s in K
    whose dual is  max -<C, Z>  s.t.  <A_i, Z> = b_i,  Z in K.
    """
    from cvxopt import matrix, spmatrix

    lin = [bi for bi, bl in enumerate(inst.blocks) if bl.diagonal]
    sdp = [bi for bi, bl in enumerate(inst.blocks) if not bl.diagonal]
    n_l = sum(inst.blocks[bi].size for bi in lin)
    sizes = [inst.blocks[bi].size for bi in sdp]

    # row position in cvxopt's stacked vector for every unknown and the
    # scale turning "coefficient of u_k" into the matrix entry
    offs = inst.offsets()
    pos = np.zeros(inst.n_unknowns, dtype=np.int64)
    scale = np.ones(inst.n_unknowns)
    lpos = 0
    for bi in lin:
        bl = inst.blocks[bi]
        pos[offs[bi] : offs[bi] + bl.size] = np.arange(lpos, lpos + bl.size)
        lpos += bl.size
    spos = n_l
    for bi in sdp:
        bl = inst.blocks[bi]
        r, c = np.triu_indices(bl.size)
        # lower-triangle storage: entry (row=c, col=r) at col*size + row
        pos[offs[bi] : offs[bi] + bl.nvec] = spos + r * bl.size + c
        scale[offs[bi] : offs[bi] + bl.nvec] = np.where(r == c, 1.0, 0.5)
        spos += bl.size * bl.size
    K = spos

    At = inst.A.tocoo()
    G = spmatrix(
        (-At.data * scale[At.col]).tolist(),
        pos[At.col].tolist(),
        At.row.tolist(),
        (K, inst.n_constraints),
    )
    h = np.zeros(K)
    np.add.at(h, pos, inst.c * scale)
    dims = {"l": n_l, "q": [], "s": sizes}
    return G, matrix(h), matrix(inst.b), dims, pos, scale


def _from_cvxopt_z(inst: SdpInstance, z: np.ndarray, pos: np.ndarray) -> np.ndarray:
    return z[pos]


def _check_rows(inst: SdpInstance):
    """Drop all-zero rows; report if such a row demands a non-zero value."""
    A = inst.A.tocsr()
    nnz = np.diff(A.indptr)
    empty = nnz == 0
    if np.any(empty & (np.abs(inst.b) > 0)):
        bad = int(np.flatnonzero(empty & (np.abs(inst.b) > 0))[0])
        label = inst.row_labels[bad] if inst.row_labels else str(bad)
        return None, f"constraint {label} has no unknowns but right-hand side {inst.b[bad]:g}"
    keep = np.flatnonzero(~empty)
    return keep, ""


def solve_sdp(inst: SdpInstance, opts: SolverOptions | None = None) -> SdpSolution:
    """Solve with a primal-dual interior-point method and verify the result."""
    from cvxopt import solvers

    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    keep, msg = _check_rows(inst)
    if keep is None:
        return SdpSolution("infeasible", message=msg, seconds=time.perf_counter() - t0)
    sub = inst
    if len(keep) != inst.n_constraints:
        sub = SdpInstance(
            inst.blocks,
            inst.A[keep],
            inst.b[keep],
            inst.c,
            [inst.row_labels[i] for i in keep] if inst.row_labels else [],
        )
    if sub.n_constraints == 0:
        # nothing couples the blocks: Z = 0 is optimal iff C is PSD
        u = np.zeros(inst.n_unknowns)
        return _finish(inst, "optimal", u, np.zeros(0), 0, opts, t0, "no constraints")

    G, h, c, dims, pos, scale = _to_cvxopt(sub)
    options = {
        "show_progress": opts.verbose,
        "maxiters": opts.max_iters,
        "abstol": opts.tol_gap,
        "reltol": opts.tol_gap,
        "feastol": max(opts.tol_eq, 1e-10),
        "refinement": 2,
    }
    try:
        res = solvers.conelp(c, G, h, dims, options=options)
    except (ValueError, ArithmeticError) as exc:
        return SdpSolution("failed", message=f"solver error: {exc}", seconds=time.perf_counter() - t0)

    iters = int(res.get("iterations", 0))
    status = res["status"]
    if status == "dual infeasible":
        # cvxopt's dual is our problem; its certificate y satisfies
        # sum y_i A_i PSD and b.y < 0
        y = np.array(res["x"]).ravel()
        ok, why = _check_farkas(sub, y, opts)
        sol = SdpSolution(
            "infeasible" if ok else "failed",
            y=y,
            iterations=iters,
            message="certified infeasible" if ok else f"infeasibility certificate rejected: {why}",
            seconds=time.perf_counter() - t0,
        )
        return sol
    if status == "primal infeasible":
        return SdpSolution("unbounded", iterations=iters, message="objective unbounded below",
                           seconds=time.perf_counter() - t0)
    if res["z"] is None:
        return SdpSolution("failed", iterations=iters, message=f"solver status {status}",
                           seconds=time.perf_counter() - t0)
    z = np.array(res["z"]).ravel()
    u = _from_cvxopt_z(sub, z, pos)
    # cvxopt's x is the negated multiplier of our equality constraints
    y = -np.array(res["x"]).ravel()
    y_full = np.zeros(inst.n_constraints)
    y_full[keep] = y
    return _finish(inst, "optimal" if status == "optimal" else "inaccurate", u, y_full, iters, opts, t0, status)


def _finish(inst, status, u, y, iters, opts, t0, message) -> SdpSolution:
    mats = inst.unpack(u)
    min_eig = min((float(np.linalg.eigvalsh(M)[0]) for M in mats), default=0.0)
    r = inst.A @ u - inst.b
    scale_b = 1.0 + np.max(np.abs(inst.b)) if len(inst.b) else 1.0
    residual = float(np.max(np.abs(r))) / scale_b if len(r) else 0.0
    primal = float(inst.c @ u)
    dual = float(inst.b @ y) if len(y) else primal
    gap = abs(primal - dual) / (1.0 + abs(primal))
    if status == "optimal" and (
        min_eig < -opts.tol_psd or residual > max(opts.tol_eq, 1e-7) or gap > max(opts.tol_gap, 1e-6)
    ):
        status = "inaccurate"
    return SdpSolution(
        status,
        u=u,
        y=y,
        primal_objective=primal,
        dual_objective=dual,
        iterations=iters,
        residual=residual,
        min_eigenvalue=min_eig,
        gap=gap,
        message=str(message),
        seconds=time.perf_counter() - t0,
        matrices=mats,
    )


def _check_farkas(inst: SdpInstance, y: np.ndarray, opts: SolverOptions):
    by = float(inst.b @ y)
    if not by < 0:
        return False, f"b.y = {by:g} is not negative"
    # S = sum_i y_i A_i as a packed vector of coefficients per unknown
    s = inst.A.T @ y
    mats = []
    for bl, off in zip(inst.blocks, inst.offsets()):
        seg = s[off : off + bl.nvec]
        if bl.diagonal:
            mats.append(np.diag(seg))
        else:
            M = np.zeros((bl.size, bl.size))
            r, c = np.triu_indices(bl.size)
            M[r, c] = np.where(r == c, seg, seg / 2)
            M = M + np.triu(M, 1).T
            mats.append(M)
    worst = min(float(np.linalg.eigvalsh(M)[0]) for M in mats)
    if worst < -1e-6 * abs(by):
        return False, f"certificate matrix has eigenvalue {worst:g}"
    return True, ""


# --------------------------------------------------------------------------
# SDPA sparse format


def write_sdpa(inst: SdpInstance, path_or_file) -> None:
    """Write the instance in SDPA sparse format (``.dat-s``).

    SDPA's dual form ``max <F0, Y> s.t. <F_i, Y> = c_i, Y PSD`` matches ours
    with ``F0 = -C``, ``F_i = A_i`` and ``c_i = b_i``.
    """
    lines = [
        f'"barrierltl SDP: {inst.n_constraints} constraints, {len(inst.blocks)} blocks"',
        str(inst.n_constraints),
        str(len(inst.blocks)),
        " ".join(str(-bl.size if bl.diagonal else bl.size) for bl in inst.blocks),
        " ".join(_num(v) for v in inst.b),
    ]
    index = inst.entry_index()

    def entries(matno: int, coeffs):
        for k, v in coeffs:
            if v == 0:
                continue
            bi, i, j = index[k]
            val = v if i == j else v / 2
            lines.append(f"{matno} {bi + 1} {i + 1} {j + 1} {_num(val)}")

    entries(0, ((k, -v) for k, v in enumerate(inst.c) if v != 0))
    A = inst.A.tocsr()
    for row in range(inst.n_constraints):
        start, end = A.indptr[row], A.indptr[row + 1]
        entries(row + 1, zip(A.indices[start:end], A.data[start:end]))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)


def _num(v: float) -> str:
    return repr(float(v))


def read_sdpa(path_or_text: str) -> SdpInstance:
    """Parse SDPA sparse format back into an instance (round-trip helper)."""
    text = path_or_text
    if "\n" not in text:
        with open(path_or_text) as fh:
            text = fh.read()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line[0] in '"*':
            continue
        rows.append(line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " "))
    m = int(rows[0].split()[0])
    nblocks = int(rows[1].split()[0])
    sizes = [int(float(t)) for t in rows[2].split()[:nblocks]]
    b = np.array([float(t) for t in rows[3].split()[:m]])
    blocks = [Block(abs(s), diagonal=s < 0) for s in sizes]
    offs, k = [], 0
    for bl in blocks:
        offs.append(k)
        k += bl.nvec
    nvec = k
    c = np.zeros(nvec)
    data, ri, ci = [], [], []
    for line in rows[4:]:
        t = line.split()
        matno, bi, i, j = (int(x) for x in t[:4])
        val = float(t[4])
        bi -= 1
        i, j = min(i, j) - 1, max(i, j) - 1
        bl = blocks[bi]
        if bl.diagonal:
            kk = offs[bi] + i
        else:
            kk = offs[bi] + i * bl.size - i * (i - 1) // 2 + (j - i)
        coef = val if i == j else 2 * val
        if matno == 0:
            c[kk] -= coef
        else:
            ri.append(matno - 1)
            ci.append(kk)
            data.append(coef)
    A = sp.csr_matrix((data, (ri, ci)), shape=(m, nvec))
    return SdpInstance(blocks, A, b, c)
