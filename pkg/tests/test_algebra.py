import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barrierltl.algebra import (
    BasicSet,
    Labeling,
    MomentList,
    NoiseModel,
    Normal,
    PointMass,
    Polynomial,
    PolynomialSyntaxError,
    Region,
    StochasticSystem,
    Uniform,
    compose,
    eval_poly,
    expect_noise,
    monomials,
    parse_poly,
)

XW = ("x1", "w1")


def poly_strategy(vars, max_deg=3, max_terms=5):
    n = len(vars)
    exps = st.tuples(*[st.integers(0, max_deg) for _ in range(n)]).filter(lambda e: sum(e) <= max_deg)
    coefs = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
    return st.dictionaries(exps, coefs, max_size=max_terms).map(lambda d: Polynomial(vars, d))


class TestParse:
    def test_three_terms(self):
        p = parse_poly("x1 - 0.01*x2^2 + 0.1*w1", ["x1", "x2", "w1"])
        assert len(p) == 3
        assert p.coeff((0, 2, 0)) == -0.01

    def test_zero(self):
        assert parse_poly("0", ["x1"]).terms == {}

    def test_distribution(self):
        assert parse_poly("x1*(x1+1)", ["x1"]) == parse_poly("x1^2 + x1", ["x1"])

    def test_division_by_constant(self):
        assert parse_poly("x1/4", ["x1"]).coeff((1,)) == 0.25

    def test_unknown_variable(self):
        with pytest.raises(PolynomialSyntaxError):
            parse_poly("y + 1", ["x1"])

    def test_negative_exponent(self):
        with pytest.raises(PolynomialSyntaxError):
            parse_poly("x1^-1", ["x1"])

    def test_garbage(self):
        with pytest.raises(PolynomialSyntaxError):
            parse_poly("x1 + * 2", ["x1"])

    @settings(max_examples=100, deadline=None)
    @given(poly_strategy(("x1", "x2")))
    def test_print_parse(self, p):
        assert parse_poly(str(p), p.vars).almost_equal(p, 1e-9)


class TestCompose:
    def test_binomial(self):
        b = parse_poly("x1^2", ["x1"])
        f = parse_poly("x1 + 0.1*w1", XW)
        assert compose(b, [f]).almost_equal(parse_poly("x1^2 + 0.2*x1*w1 + 0.01*w1^2", XW))

    def test_constant(self):
        b = Polynomial.constant(["x1"], 1.0)
        assert compose(b, [parse_poly("x1 + w1", XW)]) == Polynomial.constant(XW, 1.0)

    def test_swap(self):
        v = ("x1", "x2")
        b = parse_poly("x1*x2", v)
        assert compose(b, [parse_poly("x2", v), parse_poly("x1", v)]) == b

    def test_arity(self):
        with pytest.raises(ValueError):
            compose(parse_poly("x1", ["x1"]), [])

    @settings(max_examples=60, deadline=None)
    @given(poly_strategy(("x1", "x2")), poly_strategy(("x1", "x2", "w1"), 2, 3),
           poly_strategy(("x1", "x2", "w1"), 2, 3), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
    def test_commutes_with_eval(self, b, f1, f2, pt):
        pt = np.array(pt)
        lhs = eval_poly(compose(b, [f1, f2]), pt)
        rhs = eval_poly(b, np.array([eval_poly(f1, pt), eval_poly(f2, pt)]))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-9)


class TestExpectation:
    def test_standard_normal(self):
        nm = NoiseModel.standard_normal(["w1"])
        p = parse_poly("x1^2 + 0.2*x1*w1 + 0.01*w1^2", XW)
        assert expect_noise(p, nm, ["x1"]).almost_equal(parse_poly("x1^2 + 0.01", ["x1"]))

    def test_odd_moment(self):
        nm = NoiseModel.standard_normal(["w1"])
        assert expect_noise(parse_poly("w1^3", XW), nm, ["x1"]).is_zero()

    def test_multiplicative_noise(self):
        nm = NoiseModel.standard_normal(["w3"])
        p = parse_poly("(0.025*x3*w3)^2", ["x3", "w3"])
        assert expect_noise(p, nm, ["x3"]).almost_equal(parse_poly("0.000625*x3^2", ["x3"]), 1e-15)

    def test_monte_carlo_cross_check(self):
        nm = NoiseModel.standard_normal(["w1"])
        p = parse_poly("x1^2 + 0.2*x1*w1 + 0.01*w1^2", XW)
        e = expect_noise(p, nm, ["x1"])
        rng = np.random.default_rng(0)
        w = rng.normal(size=1_000_000)
        for x in (-1.0, 0.5, 2.0):
            mc = np.mean(x**2 + 0.2 * x * w + 0.01 * w**2)
            assert abs(mc - eval_poly(e, np.array([x]))) < 1e-2

    def test_missing_moment(self):
        nm = NoiseModel(("w1",), (MomentList((1.0, 0.0, 1.0)),))
        with pytest.raises(ValueError, match="order 3"):
            expect_noise(parse_poly("w1^3", XW), nm, ["x1"])

    def test_moment_formulas(self):
        assert Normal(1.0, 2.0).moment(2) == 5.0
        assert Normal(0.0, 1.0).moment(4) == 3.0
        assert Uniform(-1, 1).moment(2) == pytest.approx(1 / 3)
        assert PointMass(2.0).moment(3) == 8.0
        assert PointMass(0.0).moment(0) == 1.0
        with pytest.raises(ValueError):
            MomentList((0.5,))

    @settings(max_examples=60, deadline=None)
    @given(poly_strategy(XW, 4), poly_strategy(XW, 4), st.floats(-3, 3), st.floats(-3, 3))
    def test_linear(self, p, q, a, b):
        nm = NoiseModel(("w1",), (Normal(0.3, 1.2),))
        lhs = expect_noise(p * a + q * b, nm, ["x1"])
        rhs = expect_noise(p, nm, ["x1"]) * a + expect_noise(q, nm, ["x1"]) * b
        scale = 1 + max([abs(c) for c in rhs.terms.values()], default=0)
        assert lhs.almost_equal(rhs, 1e-9 * scale)

    def test_against_simulation_at_random_points(self):
        v = ("x1", "x2")
        sys = StochasticSystem(
            v,
            [parse_poly("x1 - 0.01*x2^2 + 0.1*w1", v + ("w1", "w2")),
             parse_poly("x2 - 0.01*x1*x2 + 0.1*w2", v + ("w1", "w2"))],
            NoiseModel.standard_normal(["w1", "w2"]),
        )
        B = parse_poly("0.3*x1^2 + 0.1*x1*x2 + x2^4/50 + 1", v)
        EB = sys.expected_composition(B)
        rng = np.random.default_rng(1)
        for x in rng.uniform(-5, 5, size=(100, 2)):
            w = rng.normal(size=(4000, 2))
            nxt = sys.step(np.tile(x, (4000, 1)), w)
            vals = eval_poly(B, nxt)
            se = vals.std(ddof=1) / np.sqrt(len(vals))
            assert abs(vals.mean() - eval_poly(EB, x)) <= 4 * se + 1e-12


class TestEval:
    def test_examples(self):
        assert eval_poly(parse_poly("x1^2", ["x1"]), [3.0]) == 9.0
        f1 = parse_poly("x1 - 0.01*x2^2 + 0.1*w1", ["x1", "x2", "w1"])
        assert eval_poly(f1, [1.0, 2.0, 0.0]) == pytest.approx(0.96)
        assert eval_poly(Polynomial.constant(["x1"], 5.0), [17.0]) == 5.0

    def test_batch(self):
        p = parse_poly("x1*x2 + 1", ["x1", "x2"])
        assert np.allclose(eval_poly(p, np.array([[1, 2], [3, 4]])), [3, 13])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            eval_poly(parse_poly("x1", ["x1"]), [1.0, 2.0])


class TestPolynomial:
    def test_no_zero_terms(self):
        p = Polynomial(["x"], {(1,): 1.0, (2,): 0.0})
        assert p.terms == {(1,): 1.0}
        assert (p - p).is_zero()

    def test_exponent_length(self):
        with pytest.raises(ValueError):
            Polynomial(["x"], {(1, 0): 1.0})

    def test_grlex_monomials(self):
        assert monomials(2, 2) == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
        assert len(monomials(3, 4)) == 35

    def test_json_roundtrip(self):
        p = parse_poly("x1^2 - 3*x1*x2 + 0.5", ["x1", "x2"])
        assert Polynomial.from_json(p.vars, p.to_json()) == p

    def test_lift_restrict(self):
        p = parse_poly("x1 + 2", ["x1"])
        q = p.lift(["x1", "x2"])
        assert q.vars == ("x1", "x2") and q.restrict(["x1"]) == p


class TestSets:
    def test_box_from_linear(self):
        s = BasicSet([parse_poly("x1 + 10", ["x1", "x2"]), parse_poly("-x2", ["x1", "x2"]),
                      parse_poly("x2 + 10", ["x1", "x2"]), parse_poly("-x1 - x2", ["x1", "x2"])])
        lo, hi = s.box
        assert np.allclose(lo, [-10, -10]) and np.allclose(hi, [10, 0])

    def test_unbounded(self):
        s = BasicSet([parse_poly("x1", ["x1"])])
        assert not s.bounded
        with pytest.raises(ValueError):
            s.sample(np.random.default_rng(0), 5)

    def test_empty_basic_set(self):
        with pytest.raises(ValueError, match="empty"):
            BasicSet([parse_poly("x1 - 2", ["x1"]), parse_poly("1 - x1", ["x1"])])

    def test_sampling_inside(self):
        s = BasicSet([parse_poly("1 - x1^2 - x2^2", ["x1", "x2"])],
                     box=([-1, -1], [1, 1]))
        pts = s.sample(np.random.default_rng(0), 500)
        assert pts.shape == (500, 2) and s.contains(pts).all()

    def test_labelling(self):
        v = ["x"]
        a = Region([BasicSet([parse_poly("x", v), parse_poly("1 - x", v)])])
        b = Region([BasicSet([parse_poly("x - 2", v), parse_poly("3 - x", v)])])
        lab = Labeling({"a": a, "b": b}, default="rest")
        assert lab.props == ("a", "b", "rest")
        assert [lab.label([x]) for x in (0.5, 2.5, 10.0)] == ["a", "b", "rest"]
        assert lab.preimage(["rest"]) is None
        assert lab.preimage(["a", "b"]).contains([[0.5], [2.5]]).all()
