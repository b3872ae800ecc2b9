import numpy as np
import pytest
import scipy.stats

from burgerslab.covariance import DenseCovariance, DiagonalCovariance, kl_factor, kl_truncate
from burgerslab.noise import (
    KEY_SALT,
    NoiseStream,
    UnsupportedCovarianceError,
    _philox_grid,
    convolution_variances,
    keyed_normals,
    keyed_normals_block,
    ou_exact_step,
    ou_pair_distance_sq,
    ou_step_variances,
    wiener_increment,
)
from burgerslab.spectral import SpectralField, eigenvalues


class TestPhiloxKernel:
    def test_matches_numpy_philox(self, rng):
        # numpy's Philox emits the block at counter+1 (increment on word 0)
        for _ in range(12):
            ctr = rng.integers(1, 2**63, size=4, dtype=np.uint64)
            key = rng.integers(0, 2**63, size=2, dtype=np.uint64)
            expected = np.random.Philox(
                counter=[int(ctr[0]) - 1, int(ctr[1]), int(ctr[2]), int(ctr[3])],
                key=[int(key[0]), int(key[1])],
            ).random_raw(4)
            mine = _philox_grid(
                np.array([ctr[0]], dtype=np.uint64),
                np.array([ctr[2]], dtype=np.uint64),
                np.uint64(ctr[1]), np.uint64(ctr[3]),
                np.uint64(key[0]), np.uint64(key[1]),
            )[0]
            assert [int(x) for x in mine] == [int(x) for x in expected]

    def test_vectorization_matches_scalar(self):
        c0 = np.arange(10, dtype=np.uint64)
        c2 = np.arange(100, 110, dtype=np.uint64)
        batch = _philox_grid(c0, c2, np.uint64(3), np.uint64(1),
                             np.uint64(42), np.uint64(KEY_SALT))
        for i in range(10):
            single = _philox_grid(c0[i : i + 1].copy(), c2[i : i + 1].copy(),
                                  np.uint64(3), np.uint64(1),
                                  np.uint64(42), np.uint64(KEY_SALT))
            assert np.array_equal(batch[i], single[0])


class TestKeyedDraws:
    def test_determinism(self):
        a = keyed_normals(123, 4, 17, 12)
        b = keyed_normals(123, 4, 17, 12)
        assert np.array_equal(a, b)

    def test_streams_with_equal_keys_identical(self):
        s1 = NoiseStream(99, 2)
        s2 = NoiseStream(99, 2)
        assert np.array_equal(s1.normals(5, 64), s2.normals(5, 64))

    def test_distinct_keys_differ(self):
        base = keyed_normals(123, 4, 17, 12)
        assert not np.array_equal(base, keyed_normals(124, 4, 17, 12))
        assert not np.array_equal(base, keyed_normals(123, 5, 17, 12))
        assert not np.array_equal(base, keyed_normals(123, 4, 18, 12))
        assert not np.array_equal(base, keyed_normals(123, 4, 17, 12, substream=1))

    def test_mode_prefix_independent_of_request_width(self):
        short = keyed_normals(7, 0, 3, 9)
        long = keyed_normals(7, 0, 3, 21)
        assert np.array_equal(short, long[:9])

    def test_block_matches_per_replication(self):
        block = keyed_normals_block(11, [3, 8, 2], 6, 10)
        for i, rep in enumerate([3, 8, 2]):
            assert np.array_equal(block[i], keyed_normals(11, rep, 6, 10))

    def test_order_of_generation_irrelevant(self):
        later = keyed_normals(5, 1, 9, 4)
        earlier = keyed_normals(5, 1, 2, 4)
        again_later = keyed_normals(5, 1, 9, 4)
        assert np.array_equal(later, again_later)
        assert not np.array_equal(earlier, later)


class TestStatisticalQuality:
    def test_moments_and_jarque_bera(self):
        z = keyed_normals_block(2024, np.arange(100), 0, 1000).ravel()
        assert z.size == 100_000
        assert abs(z.mean()) < 4 / np.sqrt(z.size)
        assert abs(z.std() - 1) < 0.01
        stat, p = scipy.stats.jarque_bera(z)
        assert p > 0.001

    def test_chi_square_uniformity(self):
        z = keyed_normals_block(77, np.arange(100), 5, 1000).ravel()
        u = scipy.stats.norm.cdf(z)
        counts, _ = np.histogram(u, bins=20, range=(0, 1))
        stat, p = scipy.stats.chisquare(counts)
        assert p > 0.001

    def test_lag_autocorrelation(self):
        z = keyed_normals_block(31337, np.arange(50), 2, 2000).ravel()
        for lag in (1, 2, 7):
            c = np.corrcoef(z[:-lag], z[lag:])[0, 1]
            assert abs(c) < 4 / np.sqrt(z.size)


class TestWienerIncrement:
    def test_zero_covariance(self):
        q = DiagonalCovariance(np.zeros(6))
        inc = wiener_increment(NoiseStream(1, 0), q, 0, 0.1, 6)
        assert np.all(inc.dW == 0)

    def test_truncation_coupling(self):
        q1 = DiagonalCovariance(np.arange(1, 9.0) ** -2)
        q2 = kl_truncate(q1, 3)
        s = NoiseStream(42, 5)
        full = wiener_increment(s, q1, 7, 0.01, 8).dW
        trunc = wiener_increment(s, q2, 7, 0.01, 8).dW
        assert np.array_equal(full[:3], trunc[:3])
        assert np.all(trunc[3:] == 0)

    def test_variance_contract(self):
        q = DiagonalCovariance([0.7, 0.3])
        dt = 0.1
        draws = np.empty((100_000, 2))
        block = keyed_normals_block(5150, np.arange(100_000), 3, 2)
        draws = np.sqrt(q.q * dt) * block
        sample_var = draws.var(axis=0, ddof=1)
        assert np.all(sample_var > q.q * dt * 0.98)
        assert np.all(sample_var < q.q * dt * 1.02)

    def test_dense_shares_standard_normals(self):
        mat = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 0.5]])
        q = DenseCovariance(mat)
        s = NoiseStream(8, 1)
        inc = wiener_increment(s, q, 4, 0.25, 3).dW
        xi = s.normals(4, 3)
        expected = kl_factor(q) @ (np.sqrt(0.25) * xi)
        assert np.allclose(inc, expected, atol=1e-12)

    def test_dense_truncation_subsum(self):
        mat = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 0.5]])
        q = DenseCovariance(mat)
        qn = kl_truncate(q, 2)
        s = NoiseStream(8, 1)
        full = wiener_increment(s, q, 4, 0.25, 3).dW
        part = wiener_increment(s, qn, 4, 0.25, 3).dW
        xi = s.normals(4, 3)
        tail = kl_factor(q)[:, 2:] @ (np.sqrt(0.25) * xi[2:])
        assert np.allclose(full - part, tail, atol=1e-7)

    def test_invalid_arguments(self):
        q = DiagonalCovariance([1.0])
        with pytest.raises(ValueError):
            wiener_increment(NoiseStream(1, 0), q, 0, 0.0, 1)
        with pytest.raises(ValueError):
            wiener_increment(NoiseStream(1, 0), q, 0, 0.1, 2)


class TestOuExactStep:
    def test_pure_decay_for_zero_covariance(self):
        q = DiagonalCovariance(np.zeros(4))
        y = SpectralField([1.0, 0.5, 0.25, 0.125])
        out = ou_exact_step(y, NoiseStream(3, 0), q, 0, 0.01)
        expected = np.exp(-eigenvalues(4) * 0.01) * y.coeffs
        assert np.allclose(out.coeffs, expected, atol=1e-15)

    def test_bitwise_reproducible(self):
        q = DiagonalCovariance([1.0, 0.5])
        y = SpectralField([0.0, 0.0])
        a = ou_exact_step(y, NoiseStream(7, 1), q, 5, 0.1)
        b = ou_exact_step(y, NoiseStream(7, 1), q, 5, 0.1)
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_stationary_variance(self):
        # iterate mode 1 to stationarity: var -> q_1/(2 lambda_1)
        q = DiagonalCovariance([1.0])
        dt, n_steps, n_paths = 0.05, 40, 10_000
        decay = np.exp(-eigenvalues(1)[0] * dt)
        std = np.sqrt(ou_step_variances(q.q, dt))[0]
        y = np.zeros(n_paths)
        for n in range(n_steps):
            xi = keyed_normals_block(314, np.arange(n_paths), n, 1)[:, 0]
            y = decay * y + std * xi
        target = q.q[0] / (2 * eigenvalues(1)[0])
        sample = y.var(ddof=1)
        se = target * np.sqrt(2.0 / n_paths)
        assert abs(sample - target) <= 3 * se

    def test_dense_rejected(self):
        q = DenseCovariance(np.eye(2))
        with pytest.raises(UnsupportedCovarianceError):
            ou_exact_step(SpectralField([0.0, 0.0]), NoiseStream(1, 0), q, 0, 0.1)


class TestOuPairDistance:
    def test_equal_covariances(self):
        q = DiagonalCovariance([1.0, 2.0])
        assert ou_pair_distance_sq(q, q, 1.0) == 0.0

    def test_zero_time(self):
        q1 = DiagonalCovariance([1.0])
        q2 = DiagonalCovariance([0.5])
        assert ou_pair_distance_sq(q1, q2, 0.0) == 0.0

    def test_single_mode_long_time(self):
        q1 = DiagonalCovariance([1.0])
        q2 = DiagonalCovariance([0.0])
        val = ou_pair_distance_sq(q1, q2, 1e3)
        assert val == pytest.approx(1.0 / (2 * np.pi**2), rel=1e-12)
        assert val == pytest.approx(0.0506606, abs=1e-7)

    def test_two_mode_value(self):
        q1 = DiagonalCovariance([1.0, 1.0])
        q2 = DiagonalCovariance([1.0, 0.0])
        val = ou_pair_distance_sq(q1, q2, 1.0)
        expected = (1 - np.exp(-8 * np.pi**2)) / (8 * np.pi**2)
        assert val == pytest.approx(expected, rel=1e-12)
        assert val == pytest.approx(0.0126651, abs=1e-7)

    def test_dense_rejected(self):
        with pytest.raises(UnsupportedCovarianceError):
            ou_pair_distance_sq(DenseCovariance(np.eye(2)),
                                DenseCovariance(np.eye(2)), 1.0)

    def test_mc_matches_oracle(self):
        # coupled exact transitions: MC estimate within 3 standard errors
        k = np.arange(1, 9.0)
        q1 = DiagonalCovariance(k**-2)
        q2 = kl_truncate(q1, 2)
        t, n_steps, n_paths = 0.5, 16, 10_000
        dt = t / n_steps
        lam = eigenvalues(8)
        decay = np.exp(-lam * dt)
        s1 = np.sqrt(ou_step_variances(q1.q, dt))
        s2 = np.sqrt(ou_step_variances(q2.q, dt))
        y1 = np.zeros((n_paths, 8))
        y2 = np.zeros((n_paths, 8))
        for n in range(n_steps):
            xi = keyed_normals_block(2718, np.arange(n_paths), n, 8)
            y1 = decay * y1 + s1 * xi
            y2 = decay * y2 + s2 * xi
        d = ((y1 - y2) ** 2).sum(axis=1)
        exact = ou_pair_distance_sq(q1, q2, t)
        se = d.std(ddof=1) / np.sqrt(n_paths)
        assert abs(d.mean() - exact) <= 3 * se


class TestConvolutionVariances:
    def test_zero_time(self):
        q = DiagonalCovariance([1.0, 2.0])
        assert np.all(convolution_variances(q, 0.0) == 0)

    def test_matches_direct_formula(self):
        q = DiagonalCovariance([1.0, 0.5, 0.25])
        t = 0.3
        lam = eigenvalues(3)
        direct = q.q * (1 - np.exp(-2 * lam * t)) / (2 * lam)
        assert np.allclose(convolution_variances(q, t), direct, rtol=1e-12)
