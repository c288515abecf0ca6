"""
Tests for grids, Fourier coefficients and the multiplier operators.

Validates:
- grid construction and wavenumber conventions
- coefficient normalization and Hermitian symmetry
- fractional Laplacian, Bessel and derivative multipliers on pure modes
- dealiasing and the second-difference semiconcavity surrogate
"""

import numpy as np
import pytest

from fmfg.function_spaces import bessel_norm, random_field
from fmfg.spectral_core import (
    IDENTITY_SYMBOL,
    TWO_PI,
    FourierSymbol,
    SpectralField,
    VectorField,
    apply_multiplier,
    bessel_symbol,
    dealias,
    divergence,
    fractional_laplacian,
    gradient,
    hessian,
    laplacian_symbol,
    make_grid,
    second_difference_hessian_bound,
)


class TestMakeGrid:

    def test_spacing_and_size(self):
        """h = 1/n and n^d nodes."""
        assert make_grid(1, 64).h == 1.0 / 64
        assert make_grid(2, 32).size == 1024
        assert make_grid(2, 32).shape == (32, 32)

    def test_rejects_odd_n(self):
        with pytest.raises(ValueError, match="n must be even"):
            make_grid(1, 7)

    def test_rejects_small_n(self):
        with pytest.raises(ValueError, match="at least 8"):
            make_grid(1, 6)

    def test_rejects_dimension(self):
        with pytest.raises(ValueError, match="d must be 1 or 2"):
            make_grid(3, 16)

    def test_wavenumbers_follow_fft_order(self, grid1d):
        """k runs 0..n/2-1 then -n/2..-1."""
        k = grid1d.wavenumbers[0]
        assert k[0] == 0
        assert k[31] == 31
        assert k[32] == -32
        assert k[-1] == -1
        assert grid1d.nyquist_mask[32]
        assert grid1d.nyquist_mask.sum() == 1

    def test_coordinates(self, grid2d):
        x, y = grid2d.coordinates
        assert x[3, 0] == pytest.approx(3 / 32)
        assert y[0, 5] == pytest.approx(5 / 32)


class TestSpectralField:

    def test_zero_mode_is_mean(self, grid1d, rng):
        f = random_field(grid1d, rng) + 0.7
        assert f.coeffs[0].real == pytest.approx(f.mean(), abs=1e-14)

    def test_hermitian_symmetry(self, grid2d, rng):
        """u_hat(-k) = conj(u_hat(k)) for real values."""
        f = random_field(grid2d, rng)
        c = f.coeffs
        flipped = np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1))
        np.testing.assert_allclose(flipped, np.conj(c), atol=1e-14)

    def test_values_are_read_only(self, cosine1d):
        with pytest.raises(ValueError):
            cosine1d.values[0] = 2.0

    def test_shift_by_cells(self, grid1d):
        f = SpectralField(grid1d, np.arange(64.0))
        assert f.shift([1]).values[1] == 0.0

    def test_arithmetic_rejects_other_grid(self, grid1d):
        other = SpectralField.constant(make_grid(1, 32), 1.0)
        with pytest.raises(ValueError, match="different grids"):
            SpectralField.constant(grid1d, 1.0) + other

    def test_vector_field_shares_grid(self, grid1d):
        with pytest.raises(ValueError, match="different grids"):
            VectorField((SpectralField.constant(grid1d, 0.0), SpectralField.constant(make_grid(1, 32), 0.0)))


class TestApplyMultiplier:

    def test_constant_picks_zero_mode(self, grid1d):
        """Only the zero mode is present, so the output is lambda(0) everywhere."""
        out = apply_multiplier(SpectralField.constant(grid1d, 1.0), bessel_symbol(2.0))
        np.testing.assert_allclose(out.values, 1.0, atol=1e-10)

    def test_bessel_on_cosine(self, cosine1d):
        """(I - Delta) cos(2 pi x) = (1 + 4 pi^2) cos(2 pi x)."""
        out = apply_multiplier(cosine1d, bessel_symbol(2.0))
        np.testing.assert_allclose(out.values, (1 + 4 * np.pi ** 2) * cosine1d.values, atol=1e-12 * (1 + 4 * np.pi ** 2))

    def test_identity_round_trip_is_bit_exact(self, grid1d, rng):
        f = random_field(grid1d, rng)
        assert np.array_equal(apply_multiplier(f, IDENTITY_SYMBOL).values, f.values)

    def test_symbols_sharing_a_label_keep_their_own_values(self, cosine1d):
        doubled = apply_multiplier(cosine1d, FourierSymbol("scale", lambda k: 2.0 * np.ones(k.shape[1:])))
        quintupled = apply_multiplier(cosine1d, FourierSymbol("scale", lambda k: 5.0 * np.ones(k.shape[1:])))
        np.testing.assert_allclose(doubled.values, 2.0 * cosine1d.values, atol=1e-12)
        np.testing.assert_allclose(quintupled.values, 5.0 * cosine1d.values, atol=1e-12)

    @pytest.mark.parametrize("p", [2.0, 3.0])
    def test_bessel_multiplier_is_an_isometry(self, grid2d, rng, p):
        """||(I - Delta)^(eta/2) f||_{mu,p} = ||f||_{mu+eta,p}."""
        f = random_field(grid2d, rng)
        lifted = apply_multiplier(f, bessel_symbol(0.7))
        assert bessel_norm(lifted, 0.4, p) == pytest.approx(bessel_norm(f, 1.1, p), rel=1e-10)

    def test_rejects_non_finite_symbol(self, grid1d, cosine1d):
        singular = FourierSymbol("1/|k|", lambda k: 1.0 / np.abs(k[0]))
        with np.errstate(divide="ignore"):
            with pytest.raises(ValueError, match="non-finite"):
                apply_multiplier(cosine1d, singular)


class TestFractionalLaplacian:

    def test_constant_is_annihilated(self, grid1d):
        out = fractional_laplacian(SpectralField.constant(grid1d, 3.0), 0.4)
        assert out.sup_norm() < 1e-12

    def test_half_order_on_cosine(self, cosine1d):
        """(-Delta)^(1/2) cos(2 pi x) = 2 pi cos(2 pi x)."""
        out = fractional_laplacian(cosine1d, 0.5)
        np.testing.assert_allclose(out.values, TWO_PI * cosine1d.values, atol=1e-12 * TWO_PI)

    def test_sine_mode_two(self, grid1d):
        """(-Delta)^0.75 sin(4 pi x) = (4 pi)^1.5 sin(4 pi x)."""
        f = SpectralField.from_function(grid1d, lambda x: np.sin(4 * np.pi * x))
        out = fractional_laplacian(f, 0.75)
        scale = (4 * np.pi) ** 1.5
        np.testing.assert_allclose(out.values, scale * f.values, atol=1e-12 * scale)

    def test_integration_by_parts(self, grid1d, rng):
        """<(-Delta)^s u, v> = <(-Delta)^(s/2) u, (-Delta)^(s/2) v>."""
        u, v = random_field(grid1d, rng), random_field(grid1d, rng)
        s = 0.6
        lhs = fractional_laplacian(u, s).inner(v)
        rhs = fractional_laplacian(u, s / 2).inner(fractional_laplacian(v, s / 2))
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_eigenrelation_in_2d(self, grid2d):
        """|k| = sqrt(5) for k = (1, 2)."""
        f = SpectralField.from_function(grid2d, lambda x, y: np.cos(TWO_PI * (x + 2 * y)))
        out = fractional_laplacian(f, 0.3)
        scale = (TWO_PI * np.sqrt(5.0)) ** 0.6
        np.testing.assert_allclose(out.values, scale * f.values, atol=1e-12 * scale)

    @pytest.mark.parametrize("s_exp", [0.0, 1.0, 1.2, -0.1])
    def test_rejects_order(self, cosine1d, s_exp):
        with pytest.raises(ValueError, match="s must lie in"):
            fractional_laplacian(cosine1d, s_exp)


class TestGradientDivergence:

    def test_gradient_of_constant(self, grid2d):
        grad = gradient(SpectralField.constant(grid2d, 2.0))
        assert grad.sup_norm() < 1e-12

    def test_gradient_of_sine(self, grid2d):
        f = SpectralField.from_function(grid2d, lambda x, y: np.sin(TWO_PI * x))
        grad = gradient(f)
        expected = TWO_PI * np.cos(TWO_PI * grid2d.coordinates[0])
        np.testing.assert_allclose(grad[0].values, expected, atol=1e-12 * TWO_PI)
        assert grad[1].sup_norm() < 1e-12

    def test_divergence_of_gradient_is_laplacian(self, grid1d, rng):
        f = random_field(grid1d, rng)
        out = divergence(gradient(f))
        reference = apply_multiplier(f, laplacian_symbol())
        assert np.max(np.abs(out.values - reference.values)) < 1e-12 * reference.sup_norm()

    def test_divergence_has_zero_mean(self, grid2d, rng):
        v = VectorField((random_field(grid2d, rng) + 1.0, random_field(grid2d, rng)))
        out = divergence(v)
        assert abs(out.coeffs[0]) < 1e-12

    def test_hessian_shape_and_trace(self, grid2d, rng):
        f = random_field(grid2d, rng)
        hess = hessian(f)
        assert hess.shape == (2, 2, 32, 32)
        np.testing.assert_allclose(hess[0, 1], hess[1, 0], atol=1e-9)
        trace = hess[0, 0] + hess[1, 1]
        np.testing.assert_allclose(trace, divergence(gradient(f)).values, atol=1e-9)


class TestDealias:

    def test_band_edges(self, grid1d):
        """n = 64 keeps |k| <= 21 and removes |k| >= 22."""
        kept = SpectralField.from_function(grid1d, lambda x: np.cos(TWO_PI * 21 * x))
        removed = SpectralField.from_function(grid1d, lambda x: np.cos(TWO_PI * 22 * x))
        np.testing.assert_allclose(dealias(kept).values, kept.values, atol=1e-13)
        assert dealias(removed).sup_norm() < 1e-13

    def test_idempotent(self, grid2d, rng):
        f = random_field(grid2d, rng, max_mode=16)
        once = dealias(f)
        np.testing.assert_allclose(dealias(once).values, once.values, atol=1e-13)


class TestSecondDifferences:

    def test_cosine_bound(self, cosine1d):
        """max of discrete f'' for cos(2 pi x) is attained at x = 1/2."""
        bound = second_difference_hessian_bound(cosine1d)
        assert bound.shape == (1,)
        assert bound[0] == pytest.approx(4 * np.pi ** 2, rel=1e-2)

    def test_directions_in_2d(self, grid2d):
        f = SpectralField.from_function(grid2d, lambda x, y: np.cos(TWO_PI * x))
        bound = second_difference_hessian_bound(f)
        assert bound.shape == (4,)
        assert bound[1] == pytest.approx(0.0, abs=1e-9)
