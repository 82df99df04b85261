import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barrierltl.formula import (
    FALSE,
    LAST,
    TRUE,
    Always,
    And,
    Atom,
    Eventually,
    FormulaSyntaxError,
    Next,
    Not,
    Or,
    Until,
    evaluate,
    is_safe,
    parse_formula,
    to_nnf,
)
from oracles import formula_corpus, holds, words

P0, P1, P2 = Atom("p0"), Atom("p1"), Atom("p2")
RUNNING = Or(And(P0, Or(Always(Not(P1)), Always(Not(P2)))), And(P2, Always(Not(P1))))
PROPS = ["p0", "p1", "p2", "p3"]


def formulas(props=("p0", "p1")):
    leaf = st.sampled_from([TRUE, FALSE] + [Atom(p) for p in props])
    return st.recursive(
        leaf,
        lambda sub: st.one_of(
            sub.map(Not),
            sub.map(Next),
            sub.map(Eventually),
            sub.map(Always),
            st.tuples(sub, sub).map(lambda ab: And(*ab)),
            st.tuples(sub, sub).map(lambda ab: Or(*ab)),
            st.tuples(sub, sub).map(lambda ab: Until(*ab)),
        ),
        max_leaves=6,
    )


class TestParse:
    def test_always_not(self):
        assert parse_formula("G !p1", ["p0", "p1"]) == Always(Not(P1))

    def test_running_formula(self):
        got = parse_formula("(p0 & (G !p1 | G !p2)) | (p2 & G !p1)", PROPS)
        assert got == RUNNING

    def test_incomplete_until_offset(self):
        with pytest.raises(FormulaSyntaxError) as err:
            parse_formula("p0 U", ["p0"])
        assert err.value.position == 5

    def test_undeclared(self):
        with pytest.raises(FormulaSyntaxError, match="undeclared"):
            parse_formula("G q", ["p"])

    def test_bad_character(self):
        with pytest.raises(FormulaSyntaxError) as err:
            parse_formula("p0 # p1", ["p0", "p1"])
        assert err.value.position == 4

    def test_unbalanced(self):
        with pytest.raises(FormulaSyntaxError):
            parse_formula("(p0 & p1", ["p0", "p1"])

    def test_needs_props(self):
        with pytest.raises(ValueError):
            parse_formula("true", [])

    def test_precedence(self):
        f = parse_formula("!p0 U p1 & p0 | p1 -> p0", ["p0", "p1"])
        assert f == Or(Not(Or(And(Until(Not(P0), P1), P0), P1)), P0)

    def test_until_right_assoc(self):
        assert parse_formula("p0 U p1 U p0", ["p0", "p1"]) == Until(P0, Until(P1, P0))

    @settings(max_examples=200, deadline=None)
    @given(formulas())
    def test_print_parse_roundtrip(self, f):
        assert parse_formula(str(f), ["p0", "p1"]) == f


class TestNnf:
    def test_dualities(self):
        p = Atom("p")
        assert to_nnf(Not(Always(p))) == Eventually(Not(p))
        assert to_nnf(Not(Not(p))) == p

    def test_not_next_is_trace_equivalent(self):
        f = Not(Next(P0))
        g = to_nnf(f)
        for w in words(["p0", "p1"], 4):
            assert evaluate(g, w) == holds(f, w)

    def test_last_holds_only_at_end(self):
        for w in words(["p0"], 4):
            assert evaluate(LAST, w) == (len(w) == 1)

    def test_corpus_equivalence(self):
        for f, props in formula_corpus(150, seed=3):
            g = to_nnf(f)
            for w in words(props, 6 if len(props) < 3 else 5):
                assert evaluate(g, w) == evaluate(f, w), (f, w)

    @settings(max_examples=150, deadline=None)
    @given(formulas())
    def test_negations_only_on_atoms(self, f):
        def ok(g):
            if g.op == "not":
                return g.args[0].op == "atom" or g == LAST
            return all(ok(a) for a in g.args)

        assert ok(to_nnf(f))


class TestSafe:
    def test_running_is_safe(self):
        assert is_safe(RUNNING)

    def test_eventually_unsafe(self):
        assert not is_safe(Eventually(Atom("p")))

    def test_until_unsafe(self):
        assert not is_safe(Until(P0, P1))

    def test_negated_eventually_is_safe(self):
        assert is_safe(Not(Eventually(P0)))

    def test_negated_always_unsafe(self):
        assert not is_safe(Not(Always(P0)))


class TestEvaluate:
    def test_examples(self):
        assert evaluate(Always(Not(P1)), ["p0", "p0", "p0"])
        assert not evaluate(RUNNING, ["p1"])
        assert not evaluate(Next(P0), ["p0"])

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            evaluate(TRUE, [])

    def test_matches_oracle(self):
        for f, props in formula_corpus(120, seed=11):
            for w in words(props, 5):
                assert evaluate(f, w) == holds(f, w), (f, w)

    @settings(max_examples=100, deadline=None)
    @given(formulas(), formulas())
    def test_boolean_laws(self, a, b):
        for w in words(["p0", "p1"], 4):
            assert evaluate(Eventually(a), w) == evaluate(Until(TRUE, a), w)
            assert evaluate(Always(a), w) == evaluate(Not(Eventually(Not(a))), w)
            assert evaluate(Not(And(a, b)), w) == evaluate(Or(Not(a), Not(b)), w)


def test_formula_hash_consistent():
    a = parse_formula("G (p0 | X p1)", ["p0", "p1"])
    b = Always(Or(P0, Next(P1)))
    assert a == b and hash(a) == hash(b)
    assert len({a, b}) == 1


def test_exhaustive_words_count():
    assert sum(1 for _ in words(["a", "b"], 3)) == 2 + 4 + 8
    assert list(itertools.islice(words(["a"], 2), 2)) == [("a",), ("a", "a")]
