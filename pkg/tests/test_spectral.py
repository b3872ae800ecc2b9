import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from burgerslab.spectral import (
    GridField,
    SpectralField,
    apply_fractional_power,
    coeffs_to_grid,
    eigenvalue,
    eigenvalues,
    from_grid,
    grid_nodes,
    h_alpha_norm,
    l2_norm,
    semigroup_apply,
    smoothing_constant,
    sobolev_embedding_constant,
    sup_norm,
    to_grid,
    to_grid_direct,
)


def unit_mode(k, m):
    c = np.zeros(m)
    c[k - 1] = 1.0
    return SpectralField(c)


coeff_arrays = st.integers(2, 48).flatmap(
    lambda m: st.lists(
        st.floats(-10, 10, allow_nan=False, allow_infinity=False),
        min_size=m, max_size=m,
    )
)


class TestEigenvalue:
    def test_first_modes(self):
        assert eigenvalue(1) == pytest.approx(np.pi**2)
        assert eigenvalue(1) == pytest.approx(9.8696044, abs=1e-6)
        assert eigenvalue(2) == pytest.approx(4 * np.pi**2)
        assert eigenvalue(2) == pytest.approx(39.478418, abs=1e-5)

    def test_quadratic_scaling(self):
        assert eigenvalue(10) == pytest.approx(100 * np.pi**2)

    @pytest.mark.parametrize("k", [0, -1, -7])
    def test_domain_error(self, k):
        with pytest.raises(ValueError):
            eigenvalue(k)

    def test_vector_version(self):
        assert np.allclose(eigenvalues(3), [np.pi**2, 4 * np.pi**2, 9 * np.pi**2])


class TestFractionalPower:
    def test_h1_alpha_one(self):
        out = apply_fractional_power(unit_mode(1, 4), 1.0)
        assert out.coeffs[0] == pytest.approx(np.pi**2)
        assert np.all(out.coeffs[1:] == 0)

    def test_identity_at_zero(self, rng):
        x = SpectralField(rng.standard_normal(9))
        assert apply_fractional_power(x, 0.0) is x

    def test_h2_negative_half(self):
        out = apply_fractional_power(unit_mode(2, 2), -0.5)
        assert out.coeffs[1] == pytest.approx(1.0 / (2 * np.pi))
        assert out.coeffs[1] == pytest.approx(0.159155, abs=1e-6)

    @given(coeff_arrays, st.floats(-1, 1), st.floats(-1, 1))
    @settings(max_examples=30, deadline=None)
    def test_composition(self, coeffs, a, b):
        x = SpectralField(coeffs)
        two = apply_fractional_power(apply_fractional_power(x, a), b)
        one = apply_fractional_power(x, a + b)
        scale = max(np.abs(one.coeffs).max(), 1e-300)
        assert np.abs(two.coeffs - one.coeffs).max() <= 1e-12 * scale


class TestSemigroup:
    def test_identity_at_zero(self, rng):
        x = SpectralField(rng.standard_normal(5))
        assert semigroup_apply(x, 0.0) is x

    def test_h1_decay_value(self):
        out = semigroup_apply(unit_mode(1, 1), 0.1)
        assert out.coeffs[0] == pytest.approx(np.exp(-0.1 * np.pi**2))
        assert out.coeffs[0] == pytest.approx(0.372708, abs=1e-6)

    def test_monotone_decay(self):
        x = unit_mode(3, 3)
        values = [semigroup_apply(x, t).coeffs[2] for t in (0.0, 0.1, 0.5, 2.0, 10.0)]
        assert all(a > b >= 0 for a, b in zip(values, values[1:]))

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            semigroup_apply(unit_mode(1, 1), -1e-9)

    @given(coeff_arrays, st.floats(0.05, 2.0), st.floats(1e-3, 1.0))
    @settings(max_examples=30, deadline=None)
    def test_smoothing_bound(self, coeffs, alpha, t):
        x = SpectralField(coeffs)
        lhs = h_alpha_norm(semigroup_apply(x, t), alpha)
        rhs = smoothing_constant(alpha) * t ** (-alpha) * l2_norm(x)
        assert lhs <= rhs * (1 + 1e-12)

    def test_smoothing_constant_at_one(self, rng):
        # at alpha = 1, t = 0.01 the bound reads e^-1 * 100 * ||x||
        assert smoothing_constant(1.0) == pytest.approx(np.exp(-1.0))
        x = SpectralField(rng.standard_normal(32))
        lhs = h_alpha_norm(semigroup_apply(x, 0.01), 1.0)
        assert lhs <= np.exp(-1.0) * 100.0 * l2_norm(x) * (1 + 1e-12)


class TestNorms:
    def test_orthonormality(self):
        assert l2_norm(unit_mode(1, 6)) == 1.0

    def test_h_half_of_h2(self):
        assert h_alpha_norm(unit_mode(2, 2), 0.5) == pytest.approx(2 * np.pi)

    def test_zero(self):
        assert l2_norm(SpectralField(np.zeros(4))) == 0.0

    @given(coeff_arrays, st.floats(-1, 1), st.floats(0, 1))
    @settings(max_examples=30, deadline=None)
    def test_parseval_monotonicity(self, coeffs, alpha, gap):
        x = SpectralField(coeffs)
        beta = alpha + gap
        assert h_alpha_norm(x, alpha) <= h_alpha_norm(x, beta) * (1 + 1e-12) + 1e-300

    @given(coeff_arrays)
    @settings(max_examples=30, deadline=None)
    def test_poincare(self, coeffs):
        x = SpectralField(coeffs)
        grad = h_alpha_norm(x, 0.5)
        assert l2_norm(x) <= grad / np.sqrt(2) * (1 + 1e-12)
        assert l2_norm(x) <= grad / np.pi * (1 + 1e-12)


class TestTransforms:
    def test_h1_values(self):
        g = to_grid(unit_mode(1, 1), 7)
        expected = np.sqrt(2) * np.sin(np.pi * np.arange(1, 8) / 8)
        assert np.allclose(g.values, expected, atol=1e-14)

    @pytest.mark.parametrize("m,g", [(4, 4), (4, 9), (8, 16), (13, 40)])
    def test_roundtrip(self, rng, m, g):
        x = SpectralField(rng.standard_normal(m))
        back = from_grid(to_grid(x, g), m)
        assert np.abs(back.coeffs - x.coeffs).max() <= 1e-12

    def test_zero_grid(self):
        assert np.all(from_grid(GridField(np.zeros(9)), 4).coeffs == 0)

    def test_direct_agrees_with_fast(self, rng):
        for m in (3, 16, 33):
            x = SpectralField(rng.standard_normal(m))
            g = 2 * m + 1
            assert np.abs(
                to_grid(x, g).values - to_grid_direct(x, g).values
            ).max() <= 1e-12

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            to_grid(unit_mode(1, 4), 3)
        with pytest.raises(ValueError):
            to_grid(unit_mode(1, 4), 0)
        with pytest.raises(ValueError):
            from_grid(GridField(np.zeros(3)), 4)

    def test_nodes(self):
        assert np.allclose(grid_nodes(3), [0.25, 0.5, 0.75])

    def test_batched_transform(self, rng):
        batch = rng.standard_normal((5, 6))
        vals = coeffs_to_grid(batch, 10)
        for i in range(5):
            single = to_grid(SpectralField(batch[i]), 10).values
            assert np.allclose(vals[i], single, atol=1e-14)


class TestSupNorm:
    def test_h1_max(self):
        # the default odd grid has a node at z = 1/2, the peak of h_1
        assert sup_norm(unit_mode(1, 1)) == pytest.approx(np.sqrt(2), abs=1e-12)
        assert sup_norm(unit_mode(1, 1), g=255) == pytest.approx(np.sqrt(2), abs=1e-3)

    def test_zero(self):
        assert sup_norm(SpectralField(np.zeros(8))) == 0.0

    def test_undersampled_grid_rejected(self):
        with pytest.raises(ValueError):
            sup_norm(unit_mode(1, 4), g=8)
        assert sup_norm(unit_mode(1, 4), g=16) > 0.0

    @given(coeff_arrays, st.floats(0.05, 2.0))
    @settings(max_examples=30, deadline=None)
    def test_embedding_bound(self, coeffs, delta):
        x = SpectralField(coeffs)
        bound = sobolev_embedding_constant(delta) * h_alpha_norm(x, (1 + delta) / 4)
        assert sup_norm(x) <= bound * (1 + 1e-12)

    def test_embedding_constant_matches_partial_sums(self):
        for delta, rel in ((0.3, 1e-2), (1.0, 1e-6)):
            k = np.arange(1, 2_000_001)
            partial = np.sqrt(2.0) * np.sqrt(np.sum((np.pi * k) ** (-(1 + delta))))
            assert sobolev_embedding_constant(delta) == pytest.approx(partial, rel=rel)
            assert sobolev_embedding_constant(delta) >= partial


class TestFieldInvariants:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            SpectralField([1.0, np.nan])
        with pytest.raises(ValueError):
            SpectralField([np.inf])

    def test_rejects_matrix(self):
        with pytest.raises(ValueError):
            SpectralField(np.zeros((2, 2)))

    def test_padding_projects(self):
        x = SpectralField([1.0, 2.0, 3.0])
        assert np.allclose(x.padded(5).coeffs, [1, 2, 3, 0, 0])
        assert np.allclose(x.padded(2).coeffs, [1, 2])
