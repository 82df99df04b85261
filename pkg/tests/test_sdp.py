import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from barrierltl.algebra import parse_poly
from barrierltl.sdp import Block, SdpInstance, read_sdpa, solve_sdp, write_sdpa
from barrierltl.sos import AffinePoly, InfeasibleProgram, SosBuilder


def coeffs_of(M: np.ndarray) -> np.ndarray:
    """Packed coefficient vector ``a`` with ``a . pack(Z) = <M, Z>``."""
    n = M.shape[0]
    r, c = np.triu_indices(n)
    return np.where(r == c, M[r, c], 2 * M[r, c])


def sos_check(text, vars):
    b = SosBuilder(vars)
    b.add_sos(AffinePoly.from_poly(parse_poly(text, vars)), "s")
    inst, _ = b.compile()
    return b, inst, solve_sdp(inst)


class TestSmallSdps:
    def test_two_by_two(self):
        # minimise t subject to [[t, 1], [1, t]] PSD
        A = sp.csr_matrix(np.array([[0.0, 1.0, 0.0], [1.0, 0.0, -1.0]]))
        inst = SdpInstance([Block(2)], A, np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]))
        sol = solve_sdp(inst)
        assert sol.status == "optimal"
        assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)

    def test_scalar_block(self):
        # [t] PSD and t - s = 1 with s >= 0 in a diagonal block
        A = sp.csr_matrix(np.array([[1.0, -1.0]]))
        inst = SdpInstance([Block(2, diagonal=True)], A, np.array([1.0]), np.array([1.0, 0.0]))
        sol = solve_sdp(inst)
        assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)

    def test_infeasible(self):
        # t >= 0 and t = -1
        inst = SdpInstance([Block(1, diagonal=True)], sp.csr_matrix([[1.0]]), np.array([-1.0]), np.array([0.0]))
        sol = solve_sdp(inst)
        assert sol.status == "infeasible"

    def test_bad_shapes(self):
        with pytest.raises(ValueError):
            SdpInstance([Block(2)], sp.csr_matrix((1, 2)), np.zeros(1), np.zeros(3))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(1, 4), min_size=1, max_size=3))
def test_random_feasible_instances(seed, sizes):
    """Build a primal-dual optimal pair first, then the problem around it."""
    rng = np.random.default_rng(seed)
    blocks = [Block(n) for n in sizes]
    X, S = [], []
    for n in sizes:
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        r = rng.integers(0, n + 1)
        lam = np.concatenate([rng.uniform(0.5, 2, r), np.zeros(n - r)])
        mu = np.concatenate([np.zeros(r), rng.uniform(0.5, 2, n - r)])
        X.append(Q @ np.diag(lam) @ Q.T)
        S.append(Q @ np.diag(mu) @ Q.T)
    nvec = sum(b.nvec for b in blocks)
    m = max(1, nvec - 1)
    mats = []
    for _ in range(m):
        mats.append([(lambda G: (G + G.T) / 2)(rng.normal(size=(n, n))) for n in sizes])
    A = np.array([np.concatenate([coeffs_of(M) for M in row]) for row in mats])
    y = rng.normal(size=m)
    C = [sum(y[i] * mats[i][k] for i in range(m)) + S[k] for k in range(len(sizes))]
    c = np.concatenate([coeffs_of(M) for M in C])
    inst = SdpInstance(blocks, A, np.zeros(m), c)
    b = A @ inst.pack(X)
    inst = SdpInstance(blocks, A, b, c)
    expected = float(c @ inst.pack(X))
    sol = solve_sdp(inst)
    assert sol.status in ("optimal", "inaccurate")
    assert sol.primal_objective == pytest.approx(expected, rel=1e-5, abs=1e-6)


class TestSos:
    def test_square(self):
        b, inst, sol = sos_check("x1^2", ["x1"])
        assert sol.ok
        assert b.constraints[0].basis == [(1,)]

    def test_perfect_square_gram(self):
        b, inst, sol = sos_check("x1^2 - 2*x1 + 1", ["x1"])
        assert sol.ok
        (G,) = [M for M in sol.matrices if M.shape == (2, 2)]
        assert np.allclose(G, [[1, -1], [-1, 1]], atol=1e-6)

    def test_odd_degree(self):
        with pytest.raises(InfeasibleProgram):
            sos_check("x1", ["x1"])

    def test_negative_constant(self):
        _, _, sol = sos_check("-1", ["x1"])
        assert sol.status == "infeasible"

    def test_motzkin(self):
        _, _, sol = sos_check("x^4*y^2 + x^2*y^4 - 3*x^2*y^2 + 1", ["x", "y"])
        assert sol.status == "infeasible"

    def test_motzkin_times_denominator(self):
        # (x^2 + y^2 + 1) * Motzkin is SOS
        _, _, sol = sos_check("(x^2 + y^2 + 1)*(x^4*y^2 + x^2*y^4 - 3*x^2*y^2 + 1)", ["x", "y"])
        assert sol.ok

    def test_minimise_lower_bound(self):
        # largest t with x^4 - 2x^2 + 3 - t SOS is t = 2
        b = SosBuilder(["x"])
        t = b.scalar("t")
        s = b.scalar("s")
        expr = AffinePoly.from_poly(parse_poly("x^4 - 2*x^2 + 3", ["x"]))
        expr = expr - AffinePoly.unknown(["x"], t) + AffinePoly.unknown(["x"], s)
        b.add_sos(expr, "p")
        b.minimize({t: -1.0, s: 1.0})
        inst, col = b.compile()
        sol = solve_sdp(inst)
        u = sol.u
        assert u[col[t]] - u[col[s]] == pytest.approx(2.0, abs=1e-5)

    def test_sdpa_roundtrip(self):
        _, inst, _ = sos_check("x1^4 + x1^2*x2^2 + 1", ["x1", "x2"])
        buf = io.StringIO()
        write_sdpa(inst, buf)
        again = read_sdpa(buf.getvalue())
        assert [(b.size, b.diagonal) for b in again.blocks] == [(b.size, b.diagonal) for b in inst.blocks]
        assert np.allclose(again.A.toarray(), inst.A.toarray())
        assert np.allclose(again.b, inst.b) and np.allclose(again.c, inst.c)
