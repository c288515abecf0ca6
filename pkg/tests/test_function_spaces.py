"""
Tests for norms, seminorms, corpora and the sampled inequality verifiers.
"""

import numpy as np
import pytest
from scipy.integrate import trapezoid

from fmfg.function_spaces import (
    CompositionMap,
    NormKind,
    NormSpec,
    band_corpus,
    bessel_norm,
    fit_log_log_slope,
    holder_seminorm,
    lp_norm,
    parabolic_holder_seminorm,
    parabolic_norm,
    random_corpus,
    random_field,
    smooth_test_functions,
    spectral_tail_ratio,
    verify_chain_rule,
    verify_interpolation_inequality,
    verify_kato_ponce,
    verify_norm_equivalence,
    verify_sobolev_embedding,
    verify_time_embedding,
)
from fmfg.semigroup import EvolutionOperator, Trajectory, heat_step, time_grid
from fmfg.spectral_core import TWO_PI, SpectralField


def constant_trajectory(f, T=0.5, nt=16):
    times = time_grid(T, nt)
    return Trajectory(times, tuple(f for _ in times))


def heat_trajectory(f, op, T, levels):
    times = time_grid(T, levels - 1)
    return Trajectory(times, tuple(heat_step(f, t, op) for t in times))


class TestNorms:

    def test_bessel_norm_of_cosine(self, cosine1d):
        """||cos(2 pi x)||_{1,2} = sqrt((1 + 4 pi^2) / 2)."""
        assert bessel_norm(cosine1d, 1.0, 2.0) == pytest.approx(np.sqrt((1 + 4 * np.pi ** 2) / 2), rel=1e-12)

    def test_bessel_norm_matches_parseval(self, grid1d, rng):
        """The p = 2 norm is the weighted coefficient sum."""
        f = random_field(grid1d, rng)
        mu = 0.7
        weights = (1 + (TWO_PI * grid1d.k_norm) ** 2) ** mu
        expected = np.sqrt(np.sum(weights * np.abs(f.coeffs) ** 2))
        assert bessel_norm(f, mu, 2.0) == pytest.approx(expected, rel=1e-10)

    def test_lp_special_exponents(self, grid1d, rng):
        f = random_field(grid1d, rng)
        assert lp_norm(f, 2.0) == pytest.approx(f.l2_norm(), rel=1e-14)
        assert lp_norm(f, np.inf) == f.sup_norm()

    def test_lp_norms_increase_with_p(self, grid1d, rng):
        """Grid means are probability averages, so ||f||_p is nondecreasing in p."""
        f = random_field(grid1d, rng)
        assert lp_norm(f, 1.5) <= lp_norm(f, 3.0) + 1e-12 <= lp_norm(f, np.inf) + 2e-12

    def test_rejects_exponent(self, cosine1d):
        with pytest.raises(ValueError, match="p must exceed 1"):
            lp_norm(cosine1d, 1.0)

    def test_norm_spec_dispatch(self, cosine1d):
        assert NormSpec(1.0, 2.0).evaluate(cosine1d) == bessel_norm(cosine1d, 1.0, 2.0)
        assert NormSpec(0.0, 4.0, NormKind.LP).evaluate(cosine1d) == lp_norm(cosine1d, 4.0)
        with pytest.raises(ValueError, match="Hölder order"):
            NormSpec(1.5, 2.0, NormKind.HOLDER)


class TestHolderSeminorm:

    def test_lipschitz_constant_of_cosine(self, cosine1d):
        """alpha = 1 recovers the slope 2 pi up to the chord defect."""
        value = holder_seminorm(cosine1d, 1.0)
        assert value <= TWO_PI
        assert value == pytest.approx(TWO_PI, rel=5e-3)

    def test_orders_are_related(self, grid1d, rng):
        """Torus distances are at most 1/2, so [f]_{1/2} <= [f]_1 (1/2)^(1/2)."""
        f = random_field(grid1d, rng)
        assert holder_seminorm(f, 0.5) <= holder_seminorm(f, 1.0) * np.sqrt(0.5) + 1e-12

    def test_two_dimensional_sampling_is_seeded(self, grid2d, rng):
        f = random_field(grid2d, rng)
        assert holder_seminorm(f, 0.5, seed=3) == holder_seminorm(f, 0.5, seed=3)

    @pytest.mark.parametrize("alpha", [0.0, 1.5])
    def test_rejects_order(self, cosine1d, alpha):
        with pytest.raises(ValueError, match="alpha must lie"):
            holder_seminorm(cosine1d, alpha)


class TestParabolicNorms:

    def test_constant_in_time(self, cosine1d):
        """d_t u = 0, so the norm is (T ||u||_{mu,p}^p)^(1/p)."""
        traj = constant_trajectory(cosine1d, T=0.5)
        expected = np.sqrt(0.5) * bessel_norm(cosine1d, 1.0, 2.0)
        assert parabolic_norm(traj, 1.0, 2.0, 0.5) == pytest.approx(expected, rel=1e-12)

    def test_time_derivative_is_counted(self, cosine1d):
        """A decaying trajectory has a norm above its spatial part alone."""
        moving = heat_trajectory(cosine1d, EvolutionOperator(0.5), 0.5, 33)
        spatial = np.sqrt(trapezoid([lp_norm(f, 2.0) ** 2 for f in moving], moving.times))
        assert parabolic_norm(moving, 0.0, 2.0, 0.5) > spatial * (1.0 + 1e-3)

    def test_holder_seminorm_of_frozen_trajectory(self, cosine1d):
        traj = constant_trajectory(cosine1d)
        assert parabolic_holder_seminorm(traj, 0.5, 0.5) == pytest.approx(holder_seminorm(cosine1d, 0.5))


class TestCorpora:

    def test_random_field_is_normalized_and_band_limited(self, grid1d, rng):
        f = random_field(grid1d, rng, max_mode=8)
        assert f.l2_norm() == pytest.approx(1.0, rel=1e-12)
        assert np.max(np.abs(f.coeffs[grid1d.k_norm > 8])) < 1e-14

    def test_corpus_is_seeded(self, grid1d):
        a = random_corpus(grid1d, seed=5, samples=3)
        b = random_corpus(grid1d, seed=5, samples=3)
        assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))

    def test_band_corpus(self, grid1d):
        corpus = band_corpus(grid1d)
        assert len(corpus) == 31
        assert corpus[4].values[0] == 1.0

    def test_spectral_tail_ratio(self, grid1d, cosine1d):
        high = SpectralField.from_function(grid1d, lambda x: np.cos(TWO_PI * 20 * x))
        assert spectral_tail_ratio(cosine1d) < 1e-20
        assert spectral_tail_ratio(high) == pytest.approx(1.0)
        assert spectral_tail_ratio(SpectralField.constant(grid1d, 2.0)) == 0.0

    def test_fit_log_log_slope(self):
        x = np.geomspace(1e-3, 1.0, 10)
        assert fit_log_log_slope(x, 3.0 * x ** -1.5) == pytest.approx(-1.5, rel=1e-10)

    def test_smooth_test_functions(self, grid2d):
        functions = smooth_test_functions(grid2d, 8)
        assert len(functions) == 8
        assert functions[0].values.min() == 1.0
        gram = np.array([[f.inner(g) for g in functions] for f in functions])
        np.testing.assert_allclose(gram - np.diag(np.diag(gram)), 0.0, atol=1e-12)


class TestInterpolationInequality:

    @pytest.mark.parametrize("s_exp, order", [(0.3, 1), (0.75, 2)])
    def test_constants_are_finite(self, grid1d, s_exp, order):
        report = verify_interpolation_inequality(s_exp, 2.0, seed=0, samples=50, grid=grid1d)
        assert report.passed
        assert report.config["order"] == order
        assert set(report.constants) == {"C(1)", "C(0.5)", "C(0.1)"}

    def test_constant_grows_as_delta_shrinks(self, grid1d):
        report = verify_interpolation_inequality(0.75, 2.0, seed=1, samples=50, grid=grid1d)
        assert report.constants["C(0.1)"] >= report.constants["C(1)"]


class TestKatoPonce:

    def test_holds_with_bounded_ratio(self, grid1d):
        report = verify_kato_ponce(0.5, (2.0, 4.0, 4.0, 4.0, 4.0), seed=0, samples=50, grid=grid1d)
        assert report.passed
        assert 0.0 < report.worst_ratio <= 10.0

    def test_rejects_exponent_relation(self):
        with pytest.raises(ValueError, match="exponent relation"):
            verify_kato_ponce(0.5, (2.0, 3.0, 4.0, 4.0, 4.0))

    def test_rejects_order(self):
        with pytest.raises(ValueError, match="mu must lie"):
            verify_kato_ponce(1.5, (2.0, 4.0, 4.0, 4.0, 4.0))


class TestChainRule:

    @pytest.mark.parametrize("psi", list(CompositionMap))
    def test_every_composition_passes(self, grid1d, psi):
        report = verify_chain_rule(0.5, 2.0, psi, seed=0, samples=30, grid=grid1d)
        assert report.passed
        assert report.name == f"chain_rule[{psi.value}]"

    def test_smoothed_abs_vanishes_at_zero(self, grid1d):
        zero = SpectralField.constant(grid1d, 0.0)
        assert CompositionMap.SMOOTHED_ABS.apply(zero).sup_norm() == 0.0


class TestTimeEmbedding:

    def test_heat_flow_is_refinement_stable(self, grid1d, rng):
        f = random_field(grid1d, rng)
        op = EvolutionOperator(0.6)
        report = verify_time_embedding(
            heat_trajectory(f, op, 0.5, 32), 0.0, 2.0, 0.6, 0.45, refined=heat_trajectory(f, op, 0.5, 64)
        )
        assert report.passed
        assert report.constants["refinement_spread"] < 2.0

    def test_rejects_beta(self, grid1d, rng):
        traj = heat_trajectory(random_field(grid1d, rng), EvolutionOperator(0.6), 0.5, 32)
        with pytest.raises(ValueError, match="beta must lie"):
            verify_time_embedding(traj, 0.0, 2.0, 0.6, 0.2)

    def test_needs_sixteen_levels(self, cosine1d):
        with pytest.raises(ValueError, match="at least 16"):
            verify_time_embedding(constant_trajectory(cosine1d, nt=8), 0.0, 2.0, 0.6, 0.45)


class TestEquivalenceAndEmbedding:

    def test_norm_equivalence(self, grid1d):
        report = verify_norm_equivalence(1.0, 2.0, seed=0, samples=50, grid=grid1d)
        assert report.passed
        assert report.constants["min_ratio"] <= report.constants["max_ratio"]

    def test_norm_equivalence_rejects_order(self):
        with pytest.raises(ValueError, match="mu must be positive"):
            verify_norm_equivalence(0.0, 2.0)

    def test_sobolev_embedding(self, grid2d):
        report = verify_sobolev_embedding(1.5, 2.0, seed=0, samples=20, grid=grid2d)
        assert report.passed

    def test_sobolev_embedding_needs_p_mu_above_d(self, grid2d):
        with pytest.raises(ValueError, match="p\\*mu > d"):
            verify_sobolev_embedding(1.0, 2.0, grid=grid2d)
