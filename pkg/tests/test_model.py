"""
Tests for the Hamiltonian family, couplings, d_1 and the problem invariants.

The Monge-Kantorovich distance is checked against two oracles: the transport
linear program (scipy) and the circular W1 of POT.
"""

import logging

import numpy as np
import ot

try:
    from ot.lp.solver_circle import wasserstein1_circle
except ImportError:  # POT < 0.9.6
    from ot.lp.solver_1d import wasserstein1_circle
import pytest
from scipy.optimize import linprog

from fmfg.model import (
    Coupling,
    CouplingMode,
    FieldKind,
    Hamiltonian,
    HamiltonianOrder,
    MFGProblem,
    benchmark_problem,
    bump_density,
    coupling_apply,
    cosine_field,
    evaluate_hamiltonian,
    monotonicity_integral,
    random_density,
    uniform_density,
    verify_coupling_assumptions,
    verify_hamiltonian_assumptions,
    wasserstein1,
)
from fmfg.spectral_core import SpectralField, VectorField, make_grid


def torus_cost(grid):
    points = grid.coordinates.reshape(grid.d, -1).T
    delta = np.abs(points[:, None, :] - points[None, :, :])
    delta = np.minimum(delta, 1.0 - delta)
    return np.sqrt(np.sum(delta ** 2, axis=-1))


def transport_lp(m1, m2):
    """Exact W1 of the node masses by the transport linear program."""
    grid = m1.grid
    a = m1.values.ravel() / grid.size
    b = m2.values.ravel() / grid.size
    size = len(a)
    rows = np.zeros((2 * size, size * size))
    for i in range(size):
        rows[i, i * size:(i + 1) * size] = 1.0
        rows[size + i, i::size] = 1.0
    result = linprog(torus_cost(grid).ravel(), A_eq=rows, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert result.success
    return result.fun


class TestHamiltonian:

    def test_quadratic_case(self, grid1d):
        """gamma = 2 and c = 1 give H = |p|^2, D_pH = 2p, D_ppH = 2."""
        ham = Hamiltonian.constant(grid1d, gamma=2.0)
        p = VectorField.from_array(grid1d, np.full((1, 64), 3.0))
        assert evaluate_hamiltonian(ham, p).max() == pytest.approx(9.0, rel=1e-14)
        assert evaluate_hamiltonian(ham, p, HamiltonianOrder.GRAD_P)[0].max() == pytest.approx(6.0, rel=1e-14)
        np.testing.assert_allclose(evaluate_hamiltonian(ham, p, "hess_pp"), 2.0, rtol=1e-14)

    def test_vanishes_at_zero_momentum(self, grid2d):
        ham = Hamiltonian(1.5, cosine_field(grid2d, mean=1.0, amplitude=0.5))
        assert ham.value(VectorField.zeros(grid2d)).sup_norm() == 0.0

    def test_gradient_matches_finite_differences(self, grid2d, rng):
        ham = Hamiltonian(1.4, cosine_field(grid2d, mean=1.0, amplitude=0.5))
        arr = rng.standard_normal((2, 32, 32))
        step = 1e-6
        grad = ham.grad_p(VectorField.from_array(grid2d, arr)).as_array()
        for j in range(2):
            shift = np.zeros_like(arr)
            shift[j] = step
            upper = ham.value(VectorField.from_array(grid2d, arr + shift)).values
            lower = ham.value(VectorField.from_array(grid2d, arr - shift)).values
            np.testing.assert_allclose((upper - lower) / (2 * step), grad[j], rtol=1e-6, atol=1e-8)

    def test_hessian_is_positive_semidefinite(self, grid2d, rng):
        ham = Hamiltonian.constant(grid2d, gamma=1.2)
        hpp = ham.hess_pp(VectorField.from_array(grid2d, 5.0 * rng.standard_normal((2, 32, 32))))
        eigenvalues = np.linalg.eigvalsh(np.moveaxis(hpp, (0, 1), (-2, -1)))
        assert eigenvalues.min() >= -1e-12

    @pytest.mark.parametrize("gamma", [1.0, 2.5])
    def test_rejects_growth(self, grid1d, gamma):
        with pytest.raises(ValueError, match="gamma must lie"):
            Hamiltonian.constant(grid1d, gamma)

    def test_rejects_negative_c(self, grid1d):
        with pytest.raises(ValueError, match="nonnegative"):
            Hamiltonian(1.5, SpectralField.constant(grid1d, -1.0))

    def test_rejects_other_grid(self, grid1d):
        ham = Hamiltonian.constant(grid1d, 1.5)
        with pytest.raises(ValueError, match="different grids"):
            evaluate_hamiltonian(ham, VectorField.zeros(make_grid(1, 32)))

    @pytest.mark.parametrize("d, n", [(1, 64), (2, 16)])
    def test_assumptions_verifier(self, d, n):
        grid = make_grid(d, n)
        ham = Hamiltonian(1.5, cosine_field(grid, mean=1.0, amplitude=0.5))
        report = verify_hamiltonian_assumptions(ham, seed=0, samples=500)
        assert report.passed
        assert report.constants["C_H"] > 0.0
        assert report.constants["min_eig_pp"] >= -1e-10


class TestCoupling:

    def test_uniform_density_gives_zero_mode(self, grid1d):
        generic = Coupling.gaussian(grid1d, kappa=2.0, mode=CouplingMode.GENERIC)
        out = coupling_apply(generic, uniform_density(grid1d))
        np.testing.assert_allclose(out.values, 1.0, atol=1e-12)

    @pytest.mark.parametrize("mode, sign", [(CouplingMode.MONOTONE, 1.0), (CouplingMode.ANTI, -1.0)])
    def test_monotonicity_sign(self, grid1d, rng, mode, sign):
        coupling = Coupling.gaussian(grid1d, kappa=3.0, mode=mode)
        m1, m2 = random_density(grid1d, rng), random_density(grid1d, rng)
        assert sign * monotonicity_integral(coupling, m1, m2) > 0.0

    @pytest.mark.parametrize("mode", list(CouplingMode))
    def test_commutes_with_translations(self, grid1d, rng, mode):
        coupling = Coupling.gaussian(grid1d, kappa=2.0, mode=mode)
        m = random_density(grid1d, rng)
        shifted = coupling_apply(coupling, m.shift([5]))
        np.testing.assert_allclose(shifted.values, coupling_apply(coupling, m).shift([5]).values, atol=1e-12)

    def test_output_bounded_by_mass(self, grid1d):
        coupling = Coupling.gaussian(grid1d, kappa=2.0)
        out = coupling.apply(bump_density(grid1d, width=0.02))
        assert out.sup_norm() <= coupling.c_f * (1.0 + 1e-8)

    def test_constant_couplings(self, grid1d):
        assert Coupling.null(grid1d).is_constant
        assert Coupling.gaussian(grid1d, amplitude=0.0).is_constant
        assert not Coupling.gaussian(grid1d).is_constant

    def test_warns_on_mass_drift(self, grid1d, caplog):
        with caplog.at_level(logging.WARNING, logger="fmfg.model"):
            Coupling.gaussian(grid1d).apply(SpectralField.constant(grid1d, 2.0))
        assert "mass" in caplog.text

    def test_assumptions_verifier(self, grid1d):
        report = verify_coupling_assumptions(Coupling.gaussian(grid1d), seed=0, samples=20)
        assert report.passed
        assert report.constants["C_F"] > 0.0


class TestWasserstein:

    def test_identical_densities(self, grid1d, rng):
        m = random_density(grid1d, rng)
        assert wasserstein1(m, m) == 0.0

    def test_symmetric_and_triangle(self, grid1d, rng):
        m1, m2, m3 = (random_density(grid1d, rng, amplitude=1.0) for _ in range(3))
        assert wasserstein1(m1, m2) == pytest.approx(wasserstein1(m2, m1), rel=1e-12)
        assert wasserstein1(m1, m3) <= wasserstein1(m1, m2) + wasserstein1(m2, m3) + 1e-12

    def test_matches_linear_program(self, rng):
        grid = make_grid(1, 16)
        m1, m2 = random_density(grid, rng, amplitude=1.0), random_density(grid, rng, amplitude=1.0)
        assert wasserstein1(m1, m2) == pytest.approx(transport_lp(m1, m2), rel=1e-6, abs=1e-10)

    def test_matches_circular_solver(self, grid1d, rng):
        m1, m2 = random_density(grid1d, rng), bump_density(grid1d, center=0.2, width=0.05)
        x = grid1d.coordinates[0]
        expected = wasserstein1_circle(
            x, x, u_weights=m1.values / grid1d.size, v_weights=m2.values / grid1d.size
        )
        assert wasserstein1(m1, m2) == pytest.approx(float(np.ravel(expected)[0]), rel=1e-6)

    def test_sinkhorn_in_two_dimensions(self, rng):
        grid = make_grid(2, 8)
        m1 = bump_density(grid, center=(0.5, 0.5), width=0.15)
        m2 = bump_density(grid, center=(0.25, 0.5), width=0.15)
        assert wasserstein1(m1, m2, reg=1e-3) == pytest.approx(transport_lp(m1, m2), rel=0.1)

    def test_rejects_mass_mismatch(self, grid1d):
        with pytest.raises(ValueError, match="mass mismatch"):
            wasserstein1(uniform_density(grid1d), SpectralField.constant(grid1d, 2.0))

    def test_rejects_negative_density(self, grid1d):
        with pytest.raises(ValueError, match="not a density"):
            wasserstein1(cosine_field(grid1d, mean=0.0), cosine_field(grid1d, mean=0.0, amplitude=-1.0))


class TestFieldKinds:

    def test_bump_has_unit_mass(self, grid2d):
        m = FieldKind("bump").build(grid2d, {"center": [0.3, 0.6], "width": 0.1})
        assert m.mean() == pytest.approx(1.0, abs=1e-14)
        assert m.min() > 0.0

    def test_cosine_axis(self, grid2d):
        f = FieldKind.COSINE.build(grid2d, {"mean": 1.0, "amplitude": 0.5, "axis": 1})
        assert f.values[0, 16] == pytest.approx(0.5)
        with pytest.raises(ValueError, match="axis must lie"):
            cosine_field(grid2d, axis=2)

    def test_unknown_parameter(self, grid1d):
        with pytest.raises(TypeError):
            FieldKind.CONSTANT.build(grid1d, {"level": 1.0})


class TestMFGProblem:

    def test_benchmark(self):
        problem = benchmark_problem()
        assert problem.describe() == {
            "d": 1, "n": 64, "s": 0.75, "sigma": 0.0, "T": 0.5, "gamma": 1.5, "coupling_mode": "monotone",
        }
        assert problem.m0.mean() == pytest.approx(1.0)

    def test_negative_initial_density(self, bench_problem):
        bad = cosine_field(bench_problem.grid, mean=1.0, amplitude=1.5)
        with pytest.raises(ValueError, match=r"\(I\): m0 negative at node 32"):
            MFGProblem(0.75, 0.0, 0.5, bench_problem.ham, bench_problem.coupling, bad, bench_problem.uT)

    def test_initial_mass(self, bench_problem):
        double = SpectralField.constant(bench_problem.grid, 2.0)
        with pytest.raises(ValueError, match="∫m₀\\(x\\)dx = 1"):
            MFGProblem(0.75, 0.0, 0.5, bench_problem.ham, bench_problem.coupling, double, bench_problem.uT)

    def test_rejects_order(self, bench_problem):
        with pytest.raises(ValueError, match="s must lie"):
            MFGProblem(1.2, 0.0, 0.5, bench_problem.ham, bench_problem.coupling, bench_problem.m0, bench_problem.uT)

    def test_rejects_mixed_grids(self, bench_problem):
        other = SpectralField.constant(make_grid(1, 32), 0.0)
        with pytest.raises(ValueError, match="different grids"):
            MFGProblem(0.75, 0.0, 0.5, bench_problem.ham, bench_problem.coupling, bench_problem.m0, other)

    def test_variants(self, bench_problem):
        assert bench_problem.with_sigma(0.1).operator.sigma == 0.1
        assert bench_problem.with_horizon(0.2).T == 0.2
        assert bench_problem.with_coupling(Coupling.null(bench_problem.grid)).coupling.is_constant
