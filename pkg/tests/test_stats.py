import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

import oracles
from kgcep.stats import MetricSeries, UndefinedCorrelation, correlate, pearson, rankdata, spearman

vals = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=30)


def pairs():
    return st.integers(2, 30).flatmap(lambda n: st.tuples(
        st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=n, max_size=n),
        st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=n, max_size=n)))


def _spread(x):
    return max(x) - min(x) > 1e-6 * max(1.0, max(abs(v) for v in x))


class TestFixtures:
    def test_linear(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == 1.0
        assert pearson([1, 2, 3], [3, 2, 1]) == -1.0

    def test_hand_value(self):
        assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)
        assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)

    def test_monotone_cubic(self):
        x = [-2, -1, 0, 1, 2]
        assert spearman(x, [v ** 3 for v in x]) == pytest.approx(1.0, abs=1e-15)

    def test_constant_is_undefined(self):
        with pytest.raises(UndefinedCorrelation):
            spearman([1, 2, 3], [5, 5, 5])
        with pytest.raises(UndefinedCorrelation):
            pearson([4, 4], [1, 2])
        assert correlate([1, 2, 3], [5, 5, 5]) == (None, None)

    def test_two_points(self):
        assert pearson([0, 1], [3, -2]) == -1.0

    def test_input_errors(self):
        with pytest.raises(ValueError):
            pearson([1, 2], [1, 2, 3])
        with pytest.raises(ValueError):
            pearson([1], [1])
        with pytest.raises(ValueError):
            MetricSeries("m", (1.0, float("nan")))

    def test_metric_series(self):
        assert pearson(MetricSeries("a", (1, 2, 3)), MetricSeries("b", (2, 4, 7))) > 0.9

    def test_average_ranks(self):
        assert rankdata([10, 20, 20, 5]).tolist() == [2.0, 3.5, 3.5, 1.0]


class TestAgainstDefinition:
    def test_random_series(self):
        rng = np.random.default_rng(0)
        for i in range(1000):
            n = int(rng.integers(2, 40))
            x = rng.normal(size=n) * rng.uniform(0.1, 100)
            y = rng.normal(size=n) + rng.uniform(-2, 2) * x
            if i % 3 == 0:
                # coarse values force ties
                x, y = np.round(x), np.round(y)
            px, sx = oracles.pearson(x.tolist(), y.tolist()), oracles.spearman(x.tolist(), y.tolist())
            p, s = correlate(x, y)
            if px is None:
                assert p is None
            else:
                assert abs(p - px) < 1e-10
            if sx is None:
                assert s is None
            else:
                assert abs(s - sx) < 1e-10

    def test_rankdata_matches_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            x = rng.integers(0, 6, size=int(rng.integers(1, 15))).astype(float)
            assert rankdata(x).tolist() == oracles.average_ranks(x.tolist())


class TestProperties:
    @given(pairs())
    def test_symmetry_and_bounds(self, xy):
        x, y = xy
        assume(_spread(x) and _spread(y))
        p = pearson(x, y)
        assert -1 <= p <= 1
        assert p == pytest.approx(pearson(y, x), abs=1e-12)
        assert spearman(x, y) == pytest.approx(spearman(y, x), abs=1e-12)

    @given(pairs(), st.floats(0.1, 10), st.floats(-100, 100), st.booleans())
    def test_affine(self, xy, a, b, negate):
        x, y = xy
        assume(_spread(x) and _spread(y))
        a = -a if negate else a
        moved = [a * v + b for v in x]
        assume(_spread(moved))
        assert pearson(moved, y) == pytest.approx(np.sign(a) * pearson(x, y), abs=1e-8)

    @given(st.integers(2, 30).flatmap(lambda n: st.tuples(
        st.lists(st.integers(-1000, 1000), min_size=n, max_size=n),
        st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=n, max_size=n))))
    def test_spearman_monotone_invariance(self, xy):
        # integer x keeps ties in play and makes the cube exact, so no values merge
        x, y = xy
        assume(len(set(x)) > 1 and _spread(y))
        t = [float(v) ** 3 for v in x]
        assert spearman(t, y) == pytest.approx(spearman(x, y), abs=1e-12)

    @given(pairs())
    @settings(max_examples=50)
    def test_spearman_is_pearson_of_ranks(self, xy):
        x, y = xy
        assume(_spread(x) and _spread(y))
        rx, ry = oracles.average_ranks(x), oracles.average_ranks(y)
        assume(len(set(rx)) > 1 and len(set(ry)) > 1)
        assert spearman(x, y) == pytest.approx(oracles.pearson(rx, ry), abs=1e-12)
