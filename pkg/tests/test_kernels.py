import json
import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from dpmix.kernels import (
    BoundedLocation,
    GaussianConjugate,
    MixtureTruth,
    TabulatedDensity,
    UniformLocation,
    constant_data_size_log_marginal,
    kernel_model_from_dict,
    read_data,
    sample_truth,
    scaled_range_statistic,
    write_data,
    write_truth_sidecar,
)
from dpmix.numerics import enumerate_set_partitions


class TestUniformLocation:
    def test_constant_block_at_center(self):
        um = UniformLocation(0.0, 1.0)
        for n in (1, 5, 40):
            assert um.block_log_marginal(np.zeros(n)) == pytest.approx(
                -n * math.log(2), abs=1e-13
            )

    def test_closed_form_value(self):
        um = UniformLocation(0.0, 1.0)
        # spread = max(0.25, 0) - min(-0.5, 0) = 0.75; m = 1.25 / 2^3
        assert um.block_log_marginal([-0.5, 0.25]) == pytest.approx(
            math.log(1.25 / 8), abs=1e-13
        )

    def test_full_spread_gives_exact_zero(self):
        um = UniformLocation(0.0, 1.0)
        assert um.block_log_marginal([-1.0, 1.0]) == -math.inf

    def test_out_of_support_is_domain_error(self):
        um = UniformLocation(0.0, 1.0)
        with pytest.raises(ValueError, match="support"):
            um.block_log_marginal([0.2, 1.7])

    def test_normalization_single_point(self):
        """The a=1 marginal integrates to 1 over its full support
        [theta*-2c, theta*+2c].  UniformLocation itself refuses data outside
        the truth box [theta*-c, theta*+c], so the integral is taken through
        the equivalent bounded-location model (identical kernel/base pair)."""
        theta, c = 0.3, 0.8
        um = UniformLocation(theta, c)
        bl = BoundedLocation.uniform_kernel(c, theta - c, theta + c)
        # equivalence inside the truth box, where both are defined
        for x in np.linspace(theta - c, theta + c, 9):
            assert bl.block_log_marginal([x]) == pytest.approx(
                um.block_log_marginal([x]), abs=1e-12
            )
        total, err = quad(
            lambda x: math.exp(bl.block_log_marginal([x])),
            theta - 2 * c, theta + 2 * c, limit=200,
        )
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_size_only_vector_matches_blocks(self):
        um = UniformLocation(0.0, 1.0)
        w = um.size_log_marginals_constant(0.25, 6)
        for a in range(1, 7):
            assert w[a - 1] == pytest.approx(
                um.block_log_marginal(np.full(a, 0.25)), abs=1e-13
            )


class TestGaussianConjugate:
    def test_single_point_value(self):
        gm = GaussianConjugate()
        assert gm.block_log_marginal([0.0]) == pytest.approx(
            -0.5 * math.log(2) - 0.5 * math.log(2 * math.pi), abs=1e-13
        )

    def test_normalization_single_point(self):
        gm = GaussianConjugate()
        total, err = quad(lambda x: math.exp(gm.block_log_marginal([x])), -30, 30)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_constant_block_formula_matches(self):
        gm = GaussianConjugate()
        for a in (1, 7, 111, 1000):
            for th in (0.0, 1.0, -2.5):
                assert constant_data_size_log_marginal(a, th) == pytest.approx(
                    gm.block_log_marginal(np.full(a, th)), abs=1e-12
                )

    def test_pair_ratio_value(self):
        # m({x}) m({x}) / m({x, x}) at x = 0 equals sqrt(3/4)
        r = 2 * constant_data_size_log_marginal(1, 0.0) - constant_data_size_log_marginal(2, 0.0)
        assert math.exp(r) == pytest.approx(math.sqrt(0.75), rel=1e-13)

    def test_size_marginal_strictly_below_simple_bound(self):
        # a^2/(a+1) < a makes the marginal smaller than the naive bound
        for a in (1, 4, 50):
            for th in (0.5, 1.0, 2.0):
                bound = (
                    -0.5 * math.log(a + 1)
                    + a * (-0.5 * math.log(2 * math.pi) - 0.5 * th**2)
                    + 0.5 * th**2 * a
                )
                assert constant_data_size_log_marginal(a, th) < bound

    def test_partition_ratio_inequality(self):
        """prod_j m / m(full) < (n / prod a_j)^(1/2) on constant data, for
        every partition of every n <= 10."""
        th = 1.0
        logm = constant_data_size_log_marginal(np.arange(1, 11), th)
        for n in range(2, 11):
            profiles = {
                tuple(sorted(len(b) for b in part))
                for part in enumerate_set_partitions(n)
            }
            for sizes in profiles:
                lhs = sum(logm[a - 1] for a in sizes) - logm[n - 1]
                rhs = 0.5 * (math.log(n) - math.log(np.prod(sizes)))
                assert lhs < rhs + 1e-12


class TestBoundedLocation:
    def test_uniform_fast_path_reproduces_closed_form(self):
        um = UniformLocation(0.0, 1.0)
        bl = BoundedLocation.uniform_kernel(1.0, -1.0, 1.0)
        rng = np.random.default_rng(5)
        for _ in range(40):
            blk = rng.uniform(-1, 1, size=int(rng.integers(1, 7)))
            assert bl.block_log_marginal(blk) == pytest.approx(
                um.block_log_marginal(blk), abs=1e-12
            )

    def test_quadrature_path_reproduces_closed_form(self):
        um = UniformLocation(0.0, 1.0)
        bl = BoundedLocation(
            TabulatedDensity.uniform(-1, 1), TabulatedDensity.uniform(-1, 1)
        )
        rng = np.random.default_rng(6)
        for _ in range(15):
            blk = rng.uniform(-1, 1, size=int(rng.integers(1, 6)))
            assert bl.block_log_marginal(blk) == pytest.approx(
                um.block_log_marginal(blk), abs=1e-8
            )

    def test_trapezoid_kernel_normalization(self):
        # strictly positive on the closed support, as the model requires
        grid = np.linspace(-1, 1, 201)
        trap = TabulatedDensity(grid, 0.25 + (1 - np.abs(grid)))
        bl = BoundedLocation(trap, TabulatedDensity.uniform(-2, 2))
        total, err = quad(
            lambda x: math.exp(bl.block_log_marginal([x])), -3.2, 3.2, limit=300
        )
        assert total == pytest.approx(1.0, abs=1e-5)

    def test_kernel_must_be_positive_on_support(self):
        grid = np.linspace(-1, 1, 11)
        with pytest.raises(ValueError, match="strictly positive"):
            BoundedLocation(
                TabulatedDensity(grid, 1 - np.abs(grid)),
                TabulatedDensity.uniform(-2, 2),
            )

    def test_separated_block_is_exact_zero(self):
        bl = BoundedLocation.uniform_kernel(1.0, -1.0, 11.0)
        assert bl.block_log_marginal([0.0, 10.0]) == -math.inf
        assert bl.block_log_marginal([9.5, 10.0]) > -math.inf

    def test_interval_mass_exact(self):
        grid = np.linspace(0, 2, 101)
        d = TabulatedDensity(grid, grid)  # triangular ramp, density x/2
        assert d.interval_mass(0, 2) == pytest.approx(1.0, rel=1e-12)
        assert d.interval_mass(0, 1) == pytest.approx(0.25, rel=1e-12)
        assert d.interval_mass(0.5, 1.5) == pytest.approx(0.5, rel=1e-12)
        assert d.interval_mass(-3, 0.0) == 0.0


class TestTruths:
    def test_degenerate(self):
        truth = MixtureTruth((1.0,), (1.0,), "degenerate")
        x, labels = truth.sample(3, seed=0)
        assert np.all(x == 1.0) and np.all(labels == 0)

    def test_single_component_mean(self):
        truth = MixtureTruth((1.0,), (0.4,), "uniform", c=1.0)
        x, _ = truth.sample(4000, seed=1)
        sigma = 1.0 / math.sqrt(3)
        assert abs(x.mean() - 0.4) <= 3 * sigma / math.sqrt(4000)

    def test_separation_puts_each_datum_in_one_support(self):
        truth = MixtureTruth((0.35, 0.65), (0.0, 10.0), "uniform", c=1.0)
        assert truth.completely_separated
        x, labels = truth.sample(500, seed=2)
        in0 = np.abs(x - 0.0) <= 1.0
        in1 = np.abs(x - 10.0) <= 1.0
        assert np.all(in0 ^ in1)
        assert np.all(in1 == labels.astype(bool))

    def test_not_separated(self):
        truth = MixtureTruth((0.5, 0.5), (0.0, 1.5), "uniform", c=1.0)
        assert not truth.completely_separated

    def test_validation(self):
        with pytest.raises(ValueError):
            MixtureTruth((0.5, 0.6), (0.0, 1.0), "uniform", c=1.0)  # weights sum
        with pytest.raises(ValueError):
            MixtureTruth((0.5, 0.5), (1.0, 1.0), "uniform", c=1.0)  # distinct
        with pytest.raises(ValueError):
            MixtureTruth((1.0,), (0.0,), "uniform")  # missing c

    def test_reproducible(self):
        truth = MixtureTruth((0.4, 0.6), (0.0, 5.0), "gaussian")
        x1, l1 = truth.sample(50, seed=9)
        x2, l2 = truth.sample(50, seed=9)
        assert np.array_equal(x1, x2) and np.array_equal(l1, l2)


class TestRangeStatistic:
    def test_edges(self):
        um = UniformLocation(0.0, 1.0)
        assert scaled_range_statistic(um, [-1.0, 1.0]) == 0.0
        assert scaled_range_statistic(um, [0.3, 0.3, 0.3]) == 1.0
        with pytest.raises(ValueError):
            scaled_range_statistic(um, [0.5])

    def test_beta_law_single_size(self):
        um = UniformLocation(0.0, 1.0)
        truth = MixtureTruth((1.0,), (0.0,), "uniform", c=1.0)
        a = 5
        x, _ = truth.sample(a * 4000, seed=13)
        samples = np.array(
            [scaled_range_statistic(um, b) for b in x.reshape(4000, a)]
        )
        p = stats.kstest(samples, stats.beta(2, a - 1).cdf).pvalue
        assert p > 0.01


class TestDataIO:
    def test_roundtrip(self, tmp_path):
        x = np.array([1.5, -2.25, 0.0, 3.125e-7])
        path = tmp_path / "data.txt"
        write_data(path, x)
        assert read_data(path) == pytest.approx(x, rel=0, abs=0)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 4  # one real per line

    def test_sidecar(self, tmp_path):
        truth = MixtureTruth((0.4, 0.6), (0.0, 5.0), "uniform", c=1.0)
        path = tmp_path / "data.json"
        write_truth_sidecar(path, truth, seed=7, n=100)
        doc = json.loads(path.read_text())
        assert doc["seed"] == 7 and doc["n"] == 100
        assert doc["truth"]["weights"] == [0.4, 0.6]

    def test_model_from_dict(self):
        m = kernel_model_from_dict({"kind": "uniform", "theta_star": 0.0, "c": 1.0})
        assert isinstance(m, UniformLocation)
        m = kernel_model_from_dict({"kind": "gaussian"})
        assert isinstance(m, GaussianConjugate)
        m = kernel_model_from_dict(
            {"kind": "bounded", "c": 1.0, "base_lo": -1.0, "base_hi": 11.0}
        )
        assert isinstance(m, BoundedLocation)
        with pytest.raises(ValueError):
            kernel_model_from_dict({"kind": "gaussian", "mu": 0.0})
