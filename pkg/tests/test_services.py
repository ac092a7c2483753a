from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from didcnc.services import (ArrivalProcess, Client, Function, PopularityChain, ServiceSpec,
                             cumulative_scaling, draw_arrivals, zipf_popularity)

from conftest import PHI1


def test_cumulative_scaling_phi1():
    assert np.allclose(cumulative_scaling(PHI1), [1.0, 0.83, 0.8798], atol=1e-12)


def test_cumulative_scaling_trivial_cases():
    assert cumulative_scaling(ServiceSpec("e"))[0] == 1.0
    ones = ServiceSpec("o", tuple(Function(1.0, 1.0, 0, 0.5) for _ in range(4)))
    assert np.all(cumulative_scaling(ones) == 1.0)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.fractions(min_value=Fraction(1, 10), max_value=Fraction(3), max_denominator=1000),
                max_size=6))
def test_cumulative_scaling_matches_rational_recursion(xis):
    spec = ServiceSpec("r", tuple(Function(float(x), 1.0, 0, 0.0) for x in xis))
    exact = [Fraction(1)]
    for x in xis:
        exact.append(exact[-1] * Fraction(float(x)))
    got = cumulative_scaling(spec)
    assert np.all(got > 0)
    for g, e in zip(got, exact):
        assert g == pytest.approx(float(e), rel=1e-14)


def test_function_validation():
    with pytest.raises(ValueError):
        Function(0.0, 1.0, 0, 0.0)
    with pytest.raises(ValueError):
        Function(1.0, 1.0, 0, -0.1)


def test_zipf_examples():
    assert np.allclose(zipf_popularity(5, 0.0), 0.2)
    assert np.allclose(zipf_popularity(4, 1.0), [12 / 25, 6 / 25, 4 / 25, 3 / 25])


@settings(max_examples=50, deadline=None)
@given(st.permutations(range(6)), st.floats(0, 3))
def test_zipf_permutation_invariance(order, gamma):
    p = zipf_popularity(6, gamma, order)
    assert np.isclose(p.sum(), 1.0)
    assert np.allclose(sorted(p), sorted(zipf_popularity(6, gamma)))


def test_zero_rate_never_arrives():
    rng = np.random.default_rng(0)
    a = [draw_arrivals(np.array([0.0, 0.0]), np.array([1, 1]), rng) for _ in range(1000)]
    assert np.all(np.array(a) == 0)


def test_poisson_sample_mean():
    c = Client("c", 0, 0, ServiceSpec("e"), rate=2.0)
    proc = ArrivalProcess([c], np.random.default_rng(2024))
    total = sum(int(proc.draw()[0]) for _ in range(100_000))
    assert 1.98 <= total / 100_000 <= 2.02


def test_arrivals_reproducible():
    def stream(seed):
        c = [Client("a", 0, 0, ServiceSpec("e"), rate=1.5), Client("b", 0, 0, ServiceSpec("e"), rate=0.3)]
        proc = ArrivalProcess(c, np.random.default_rng(seed))
        return np.array([proc.draw() for _ in range(500)])
    assert np.array_equal(stream(9), stream(9))
    assert not np.array_equal(stream(9), stream(10))


def test_burst_clipping_counted():
    c = Client("c", 0, 0, ServiceSpec("e"), rate=5.0, max_burst=2)
    proc = ArrivalProcess([c], np.random.default_rng(1))
    draws = [int(proc.draw()[0]) for _ in range(200)]
    assert max(draws) <= 2 and proc.stats.clipped > 0


def test_popularity_chain_swap_rate():
    rng = np.random.default_rng(3)
    chain = PopularityChain(4, 1.0, 1e-3, rng, order=[0, 1, 2, 3])
    n = 200_000
    for _ in range(n):
        chain.advance()
    # swaps ~ Binomial(n, 1e-3): mean 200, sd ~14
    assert 150 <= chain.swaps <= 250
    assert sorted(chain.order.tolist()) == [0, 1, 2, 3]


def test_popularity_chain_swaps_adjacent_ranks():
    class Always:
        def random(self):
            return 0.0

        def integers(self, lo, hi):
            return 1

    chain = PopularityChain(4, 1.0, 1e-6, Always(), order=[0, 1, 2, 3])
    chain.advance()
    assert chain.order.tolist() == [0, 2, 1, 3]
    assert np.allclose(chain.popularity, zipf_popularity(4, 1.0, [0, 2, 1, 3]))

