import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barrierltl.algebra import BasicSet, Labeling, NoiseModel, PointMass, Region, StochasticSystem, Uniform, parse_poly
from barrierltl.config import bundled, load_config
from barrierltl.formula import TRUE, parse_formula
from barrierltl.montecarlo import SimConfig, clopper_pearson, dump_csv, estimate, run_traces, simulate, simulate_trace
from oracles import clopper_pearson_bisect

V = ("x",)


def region(*ineqs):
    return Region([BasicSet([parse_poly(g, V) for g in ineqs])])


def system(expr, dist):
    return StochasticSystem(V, [parse_poly(expr, V + ("w",))], NoiseModel(("w",), (dist,)))


def bernoulli_toy(p):
    """x(1) is uniform on [0, 1]; the trace satisfies "X a" iff x(1) <= p."""
    sys = system("w", Uniform(0.0, 1.0))
    labels = Labeling({"a": region("x + 1", f"{p} - x")}, default="b")
    return sys, labels, parse_formula("X a", labels.props)


class TestClopperPearson:
    def test_all_successes(self):
        lo, hi = clopper_pearson(10, 10, 0.95)
        assert lo == pytest.approx(0.025 ** (1 / 10), abs=1e-12)
        assert hi == 1.0

    def test_all_successes_one_sided_figure(self):
        # 0.05**(1/10) is the one-sided 95% limit, i.e. the two-sided 90% one
        lo, _ = clopper_pearson(10, 10, 0.90)
        assert lo == pytest.approx(0.05 ** (1 / 10), abs=1e-12)
        assert lo == pytest.approx(0.7411, abs=1e-4)

    def test_no_successes(self):
        lo, hi = clopper_pearson(0, 10, 0.95)
        assert lo == 0.0 and hi == pytest.approx(1 - 0.025 ** (1 / 10))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 40).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))),
           st.sampled_from([0.8, 0.95, 0.999]))
    def test_matches_bisection(self, kn, conf):
        k, n = kn
        got = clopper_pearson(k, n, conf)
        want = clopper_pearson_bisect(k, n, conf)
        assert got == pytest.approx(want, abs=1e-9)

    def test_invalid(self):
        with pytest.raises(ValueError):
            clopper_pearson(3, 2, 0.9)

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    def test_coverage(self, p):
        rng = np.random.default_rng(int(p * 100))
        conf, n, reps = 0.9, 200, 1000
        hits = 0
        for k in rng.binomial(n, p, size=reps):
            lo, hi = clopper_pearson(int(k), n, conf)
            hits += lo <= p <= hi
        # exact intervals are conservative; allow 3 binomial standard deviations
        assert hits / reps >= conf - 3 * np.sqrt(conf * (1 - conf) / reps)


class TestSimulation:
    def test_deterministic_recursion(self):
        sys = system("0.5*x + w", PointMass(0.0))
        states, trace = simulate_trace(sys, Labeling({"a": region("x", "2 - x")}), [1.0], 3, np.random.default_rng(0))
        assert np.allclose(states.ravel(), [1.0, 0.5, 0.25])
        assert trace == ["a", "a", "a"]

    def test_mean_of_first_step(self):
        from barrierltl.algebra import Normal

        sys = system("x + w", Normal())
        out = simulate(sys, np.zeros((100_000, 1)), 2, np.random.default_rng(3))
        assert abs(out[:, 1, 0].mean()) < 0.02

    def test_letters_in_alphabet(self):
        cfg = load_config(bundled("running_example.json"))
        _, trace = simulate_trace(cfg.system, cfg.labels, [-5.0, -3.0], 5, np.random.default_rng(7))
        assert len(trace) == 5 and set(trace) <= set(cfg.props)

    def test_true_always_holds(self):
        sys, labels, _ = bernoulli_toy(0.5)
        est = estimate(sys, labels, TRUE, SimConfig(3, 500, 1, [0.2]))
        assert est.successes == 500 and est.interval[1] == 1.0

    def test_estimate_consistent_with_probability(self):
        sys, labels, phi = bernoulli_toy(0.3)
        est = estimate(sys, labels, phi, SimConfig(2, 20_000, 5, [0.5], 0.999))
        lo, hi = est.interval
        assert lo <= 0.3 <= hi

    def test_same_seed_same_traces(self):
        sys, labels, phi = bernoulli_toy(0.4)
        cfg = SimConfig(4, 300, 11, region("x", "1 - x"))
        a, ia = run_traces(sys, labels, cfg)
        b, ib = run_traces(sys, labels, cfg)
        assert np.array_equal(a, b) and np.array_equal(ia, ib)
        assert estimate(sys, labels, phi, cfg) == estimate(sys, labels, phi, cfg)

    def test_unique_word_shortcut(self):
        # counting through unique words must agree with a per-trace loop
        from barrierltl.formula import evaluate

        cfg = load_config(bundled("running_example.json"))
        sc = SimConfig(5, 3000, 2, Region.union([cfg.labels.region("p0"), cfg.labels.region("p2")]))
        _, idx = run_traces(cfg.system, cfg.labels, sc)
        direct = sum(evaluate(cfg.formula, [cfg.props[i] for i in row]) for row in idx)
        assert estimate(cfg.system, cfg.labels, cfg.formula, sc).successes == direct

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(0, 10, 0, [0.0])
        with pytest.raises(ValueError):
            SimConfig(3, 10, 0, [0.0], confidence=1.0)
        with pytest.raises(ValueError):
            SimConfig(3, 10, 0, None)

    def test_csv(self, tmp_path):
        sys, labels, _ = bernoulli_toy(0.5)
        path = tmp_path / "t.csv"
        dump_csv(path, sys, labels, SimConfig(3, 4, 0, [0.1]))
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["trace", "step", "x", "label"]
        assert len(rows) == 1 + 4 * 3
