import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gammaln

from dpmix.errors import ResourceLimitError
from dpmix.numerics import (
    bell_number,
    composition_count,
    enumerate_compositions,
    enumerate_set_partitions,
    log_ascending_factorial,
    log_binomial,
    log_sum_exp,
    lower_incomplete_gamma,
    partial_bell_log_column,
    partial_bell_log_sum,
)


class TestAscendingFactorial:
    def test_known_values(self):
        assert log_ascending_factorial(1.0, 3) == pytest.approx(math.log(6), abs=1e-14)
        assert log_ascending_factorial(7.3, 0) == 0.0
        assert log_ascending_factorial(0.5, 2) == pytest.approx(
            math.log(0.75), abs=1e-14
        )

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            log_ascending_factorial(0.0, 3)
        with pytest.raises(ValueError):
            log_ascending_factorial(-1.0, 3)
        with pytest.raises(ValueError):
            log_ascending_factorial(math.inf, 3)
        with pytest.raises(ValueError):
            log_ascending_factorial(1.0, -1)

    def test_vectorized_alpha(self):
        a = np.array([0.5, 1.0, 2.0])
        out = log_ascending_factorial(a, 3)
        want = [math.log(0.5 * 1.5 * 2.5), math.log(6.0), math.log(24.0)]
        np.testing.assert_allclose(out, want, rtol=1e-14)

    def test_telescoping_small_n_strict(self):
        """alpha^(n) / alpha^(n-1) = alpha + n - 1, exactly in the product regime."""
        rng = np.random.default_rng(42)
        for _ in range(200):
            a = rng.uniform(1e-4, 10.0)
            n = int(rng.integers(1, 30))
            lhs = log_ascending_factorial(a, n) - log_ascending_factorial(a, n - 1)
            assert lhs == pytest.approx(math.log(a + n - 1), abs=1e-12)

    def test_telescoping_large_n(self):
        """For n up to 1e6 the identity holds to 1e-12 relative to the
        magnitude of the differenced log values (float64 cannot do better:
        both terms are ~1e7, so the difference carries their rounding)."""
        rng = np.random.default_rng(43)
        for _ in range(200):
            a = rng.uniform(1e-4, 10.0)
            n = int(rng.integers(2, 10**6))
            big = log_ascending_factorial(a, n)
            lhs = big - log_ascending_factorial(a, n - 1)
            tol = 1e-12 * max(1.0, abs(big))
            assert abs(lhs - math.log(a + n - 1)) <= tol

    def test_matches_gammaln_form(self):
        for a in (0.3, 1.0, 5.5):
            for n in (1, 7, 31, 32, 33, 100):
                direct = float(np.sum(np.log(a + np.arange(n))))
                assert log_ascending_factorial(a, n) == pytest.approx(
                    direct, rel=1e-13, abs=1e-12
                )


class TestLowerIncompleteGamma:
    def test_exponential_cdf_case(self):
        for y in (0.1, 1.0, 5.0):
            assert lower_incomplete_gamma(1.0, y) == pytest.approx(
                1 - math.exp(-y), rel=1e-13
            )

    def test_zero_upper_limit(self):
        assert lower_incomplete_gamma(2.5, 0.0) == 0.0

    def test_integration_by_parts_value(self):
        # gamma(2, 1) = 1 - 2/e
        assert lower_incomplete_gamma(2.0, 1.0) == pytest.approx(
            1 - 2 * math.exp(-1), rel=1e-12
        )

    def test_quadrature_oracle_grid(self):
        for x in (0.5, 1.0, 2.0, 5.0):
            for y in (0.1, 1.0, 10.0):
                oracle, err = quad(lambda t: t ** (x - 1) * math.exp(-t), 0.0, y)
                assert abs(lower_incomplete_gamma(x, y) - oracle) <= 1e-10 + 10 * err

    def test_monotone_in_y_and_limit(self):
        x = 3.7
        ys = np.linspace(0.0, 50.0, 40)
        vals = [lower_incomplete_gamma(x, y) for y in ys]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(math.exp(gammaln(x)), rel=1e-12)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            lower_incomplete_gamma(0.0, 1.0)
        with pytest.raises(ValueError):
            lower_incomplete_gamma(-2.0, 1.0)
        with pytest.raises(ValueError):
            lower_incomplete_gamma(1.0, -0.5)


class TestLogSumExp:
    def test_basic(self):
        assert log_sum_exp([math.log(2), math.log(3)]) == pytest.approx(
            math.log(5), abs=1e-14
        )
        assert log_sum_exp([0.0, 0.0, 0.0]) == pytest.approx(math.log(3), abs=1e-14)

    def test_single_entry_exact(self):
        assert log_sum_exp([1234.5678]) == 1234.5678

    def test_neg_inf_handling(self):
        assert log_sum_exp([-math.inf, 2.5]) == 2.5
        assert log_sum_exp([-math.inf, -math.inf]) == -math.inf

    def test_usage_errors(self):
        with pytest.raises(ValueError):
            log_sum_exp([])
        with pytest.raises(ValueError):
            log_sum_exp([0.0, math.nan])

    def test_large_shift(self):
        assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(
            1000.0 + math.log(2), abs=1e-12
        )


class TestCompositions:
    def test_examples(self):
        assert sorted(enumerate_compositions(3, 2)) == [(1, 2), (2, 1)]
        assert list(enumerate_compositions(5, 1)) == [(5,)]
        assert len(list(enumerate_compositions(5, 3))) == 6

    def test_counts_and_sums(self):
        for n in range(1, 16):
            for s in range(1, n + 1):
                comps = list(enumerate_compositions(n, s))
                assert len(comps) == composition_count(n, s) == math.comb(n - 1, s - 1)
                assert len(set(comps)) == len(comps)
                for c in comps:
                    assert len(c) == s and sum(c) == n and min(c) >= 1

    def test_domain_error(self):
        with pytest.raises(ValueError):
            enumerate_compositions(3, 4)
        with pytest.raises(ValueError):
            enumerate_compositions(0, 1)


class TestSetPartitions:
    def test_examples(self):
        assert len(list(enumerate_set_partitions(3))) == 5
        assert len(list(enumerate_set_partitions(4, 2))) == 7  # Stirling2(4, 2)
        assert list(enumerate_set_partitions(1)) == [((0,),)]

    def test_bell_counts(self):
        for n in range(1, 9):
            assert len(list(enumerate_set_partitions(n))) == bell_number(n)

    def test_canonical_form_and_coverage(self):
        n = 6
        seen = set()
        for part in enumerate_set_partitions(n):
            seen.add(part)
            flat = sorted(i for b in part for i in b)
            assert flat == list(range(n))
            heads = [b[0] for b in part]
            assert heads == sorted(heads)
            for b in part:
                assert list(b) == sorted(b)
        assert len(seen) == bell_number(n)

    def test_stirling_restriction(self):
        # Stirling2 row for n = 6: 1, 31, 90, 65, 15, 1
        row = [1, 31, 90, 65, 15, 1]
        for s, want in enumerate(row, start=1):
            assert len(list(enumerate_set_partitions(6, s))) == want

    def test_resource_cap(self):
        with pytest.raises(ResourceLimitError):
            enumerate_set_partitions(14)


class TestPartialBell:
    def test_stirling2_weights(self):
        # unit weights give Stirling numbers of the second kind
        assert partial_bell_log_sum(np.zeros(8), 4, 2) == pytest.approx(
            math.log(7), abs=1e-12
        )

    def test_stirling1_weights(self):
        # w_a = (a-1)! gives unsigned Stirling numbers of the first kind
        w = gammaln(np.arange(1, 9))
        assert partial_bell_log_sum(w, 4, 2) == pytest.approx(math.log(11), abs=1e-12)

    def test_singleton_only_weights(self):
        w = np.full(5, -np.inf)
        w[0] = 0.0
        assert partial_bell_log_sum(w, 3, 3) == pytest.approx(0.0, abs=1e-12)
        assert partial_bell_log_sum(w, 3, 2) == -math.inf

    def test_bell_sum_identity(self):
        for n in range(1, 11):
            col = partial_bell_log_column(np.zeros(n), n, n)
            total = np.exp(col).sum()
            assert total == pytest.approx(bell_number(n), rel=1e-10)

    def test_brute_force_oracle_random_weights(self):
        rng = np.random.default_rng(7)
        for _ in range(12):
            n = int(rng.integers(2, 11))
            log_w = rng.normal(scale=2.0, size=n)
            if rng.random() < 0.3:
                log_w[rng.integers(0, n)] = -np.inf
            col = partial_bell_log_column(log_w, n, n)
            for s in range(1, n + 1):
                brute = -math.inf
                for part in enumerate_set_partitions(n, s):
                    v = sum(log_w[len(b) - 1] for b in part)
                    brute = np.logaddexp(brute, v)
                if brute == -math.inf:
                    assert col[s - 1] == -math.inf
                else:
                    assert abs(col[s - 1] - brute) <= 1e-10 * max(1.0, abs(brute))

    def test_errors(self):
        with pytest.raises(ValueError):
            partial_bell_log_sum(np.zeros(3), 4, 2)  # weights too short
        with pytest.raises(ValueError):
            partial_bell_log_sum(np.zeros(8), 4, 5)  # s > n
        with pytest.raises(ValueError):
            partial_bell_log_sum(np.array([0.0, math.nan, 0.0]), 3, 2)


def test_log_binomial():
    assert log_binomial(10, 3) == pytest.approx(math.log(120), rel=1e-13)
    assert log_binomial(5, 7) == -math.inf
    assert log_binomial(5, -1) == -math.inf
