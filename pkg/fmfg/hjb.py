"""
Backward solver for the fractional Hamilton-Jacobi-Bellman equation

    -d_t u - sigma Delta u + (-Delta)^s u + H(x, Du) = V(x, t),   u(T) = uT,

its adjoint (the linearized Fokker-Planck equation started at an intermediate
time tau), and the monitors built on them: comparison bound, semiconcavity,
Lipschitz and Hölder constants, PDE residuals and the duality identity.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .config import SolverConfig
from .errors import SolverError
from .fokker_planck import require_time_grid, space_time_l2, march_forward
from .function_spaces import parabolic_holder_seminorm, smooth_test_functions
from .model import Hamiltonian, MFGProblem
from .semigroup import Trajectory, step_factors, time_grid
from .spectral_core import SpectralField, VectorField, dealias, gradient, second_difference_hessian_bound

logger = logging.getLogger(__name__)


@dataclass
class HJBDiagnostics:
    sup_norm_bound_slack: float
    semiconcavity_constant: float
    lipschitz_constant: float
    residual_l2: float
    holder_constant: float = 0.0

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in asdict(self).values())

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def hamiltonian_term(ham: Hamiltonian, u: SpectralField, dealias_output: bool = True) -> SpectralField:
    """H(x, Du), dealiased by the two-thirds rule when requested."""
    if ham.bypassed:
        return SpectralField.constant(u.grid, 0.0)
    value = ham.value(gradient(u))
    return dealias(value) if dealias_output else value


def solve_hjb_backward(
    problem: MFGProblem,
    v_field: Trajectory,
    config: SolverConfig,
) -> Tuple[Trajectory, HJBDiagnostics]:
    """
    March u backward from u(T) = uT.

    With tau = T - t each step solves, mode by mode,
        (I + dt lambda) u^n = u^(n+1) + dt (V^n - H(x, Du^(n+1)))
    (or its ETD1 counterpart), so diffusion is implicit and H explicit.

    Args:
        problem: Supplies uT, H, s, sigma and T
        v_field: Coupling values V(t_n), n = 0..nt, on the solver time grid
        config: Integrator, dealiasing and residual ceiling

    Returns:
        (u trajectory, diagnostics)

    Raises:
        SolverError: non-finite values at some step, or residual above the ceiling
    """
    times = time_grid(problem.T, config.nt)
    require_time_grid(v_field, times, "coupling field")
    dt = float(times[1] - times[0])
    factors = step_factors(problem.operator, problem.grid, dt, config.integrator)

    states = [None] * len(times)
    states[-1] = problem.uT
    u = problem.uT
    for n in range(config.nt - 1, -1, -1):
        source = v_field[n] - hamiltonian_term(problem.ham, u, config.dealias)
        u = factors.advance(u, source)
        if not u.is_finite():
            raise SolverError("hjb", "non-finite values", step=n)
        states[n] = u

    traj = Trajectory(times, tuple(states), kind="u")
    residual = hjb_residual(traj, v_field, problem, config.dealias)
    if not np.isfinite(residual) or residual > config.residual_ceiling:
        raise SolverError("hjb", f"residual {residual:.3g} above ceiling {config.residual_ceiling:.3g}")

    diagnostics = HJBDiagnostics(
        sup_norm_bound_slack=check_comparison_bound(traj, problem, v_field),
        semiconcavity_constant=float(max(np.max(second_difference_hessian_bound(f)) for f in traj)),
        lipschitz_constant=float(max(gradient(f).sup_norm() for f in traj)),
        residual_l2=residual,
        holder_constant=parabolic_holder_seminorm(traj, 0.5, 0.5, seed=config.seed),
    )
    logger.info(
        "hjb solve: residual %.2e, lipschitz %.4g, semiconcavity %.4g",
        residual,
        diagnostics.lipschitz_constant,
        diagnostics.semiconcavity_constant,
    )
    return traj, diagnostics


def comparison_rhs(problem: MFGProblem, v_field: Trajectory) -> float:
    """||uT||_inf + T (||V||_inf + ||H(., 0)||_inf); H(x, 0) = 0 for this family."""
    return problem.uT.sup_norm() + problem.T * v_field.sup_norm()


def check_comparison_bound(u: Trajectory, problem: MFGProblem, v_field: Trajectory) -> float:
    """
    Slack of the comparison bound, RHS - ||u||_inf on the space-time grid.

    The bound holds when the slack is at least -1e-6 * comparison_rhs(...).
    """
    return comparison_rhs(problem, v_field) - u.sup_norm()


def optimal_drift(u: Trajectory, ham: Hamiltonian) -> Trajectory:
    """b(t) = -D_pH(x, Du(t)) at every time level."""
    if ham.bypassed:
        fields = tuple(VectorField.zeros(u.grid) for _ in u)
    else:
        fields = tuple(-ham.grad_p(gradient(f)) for f in u)
    return Trajectory(u.times, fields, kind="drift")


def solve_adjoint(
    rho_tau: SpectralField,
    u: Trajectory,
    problem: MFGProblem,
    tau_index: int,
    config: SolverConfig,
) -> Trajectory:
    """
    Solve d_t rho - sigma Delta rho + (-Delta)^s rho - div(D_pH(x, Du) rho) = 0 on
    [t_tau, T] with rho(t_tau) = rho_tau.

    Uses the same marching kernel as the Fokker-Planck solver, so both produce
    identical states from identical data.

    Raises:
        ValueError: rho_tau is not a probability density, or tau_index is out of range
        SolverError: rho drops below the negativity floor
    """
    if not 0 <= tau_index < len(u) - 1:
        raise ValueError(f"tau_index must lie in [0, {len(u) - 2}], got {tau_index}")
    if rho_tau.min() < 0.0 or abs(rho_tau.mean() - 1.0) > 1e-8:
        raise ValueError("rho_tau must be a probability density (nonnegative, grid mean 1)")

    drift = optimal_drift(u, problem.ham)
    states, first_negative = march_forward(
        rho_tau,
        drift.fields[tau_index:-1],
        problem.operator,
        u.dt,
        config.integrator,
        config.dealias,
        solver="adjoint",
        negativity_floor=config.negativity_floor,
    )
    if first_negative is not None:
        raise SolverError("adjoint", "density below the negativity floor", step=tau_index + first_negative)
    return Trajectory(u.times[tau_index:], tuple(states), kind="rho")


def duality_residual(
    u: Trajectory,
    rho: Trajectory,
    v_field: Trajectory,
    problem: MFGProblem,
    tau_index: int,
) -> float:
    """
    Relative defect of the duality identity

        int u(tau) rho_tau = int u(T) rho(T) + int int V rho + int int (D_pH(Du).Du - H(Du)) rho

    with trapezoid quadrature in time and grid means in space.
    """
    window = slice(tau_index, len(u))
    us = u.fields[window]
    vs = v_field.fields[window]
    if len(us) != len(rho):
        raise ValueError("rho must cover [t_tau, T] on the solver time grid")

    ham = problem.ham
    coupling_pairing = np.array([v.inner(r) for v, r in zip(vs, rho)])
    if ham.bypassed:
        lagrangian_pairing = np.zeros(len(rho))
    else:
        lagrangian_pairing = np.array([
            (ham.grad_p(gradient(f)).dot(gradient(f)) - ham.value(gradient(f))).inner(r)
            for f, r in zip(us, rho)
        ])

    lhs = us[0].inner(rho[0])
    rhs = (
        us[-1].inner(rho[-1])
        + float(trapezoid(coupling_pairing, rho.times))
        + float(trapezoid(lagrangian_pairing, rho.times))
    )
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-14)


def hjb_residual(u: Trajectory, v_field: Trajectory, problem: MFGProblem, dealias_output: bool = True) -> float:
    """
    Centered-in-time residual
        -(u^(n+1) - u^n)/dt + L (u^n + u^(n+1))/2 + (H^n + H^(n+1))/2 - (V^n + V^(n+1))/2
    in L^2(Q), relative to the sum of the L^2(Q) norms of the four terms.
    """
    op = problem.operator
    values = u.values_array()
    rate = -np.diff(values, axis=0) / u.dt
    diffusion = np.stack([op.apply(f).values for f in u])
    hamiltonian = np.stack([hamiltonian_term(problem.ham, f, dealias_output).values for f in u])
    coupling = v_field.values_array()

    terms = [
        rate,
        0.5 * (diffusion[1:] + diffusion[:-1]),
        0.5 * (hamiltonian[1:] + hamiltonian[:-1]),
        -0.5 * (coupling[1:] + coupling[:-1]),
    ]
    residual = space_time_l2(sum(terms), u.dt)
    scale = sum(space_time_l2(t, u.dt) for t in terms)
    return residual / scale if scale > 0.0 else 0.0


def hjb_weak_residual(
    u: Trajectory,
    v_field: Trajectory,
    problem: MFGProblem,
    spatial: int = 8,
    temporal: int = 4,
) -> float:
    """
    Weak-form residual against phi(x, t) = psi_i(x) sin(pi (l + 1/2) t / T), which
    vanish at t = 0:

        int int u d_t phi - int uT phi(T) + int int u L phi + int int (H(Du) - V) phi = 0.

    Returns max |residual| / max of the summed absolute term sizes over the basis.
    """
    op = problem.operator
    times = u.times
    T = u.T
    ham_values = [hamiltonian_term(problem.ham, f, dealias_output=False) for f in u]
    worst = 0.0
    scale = 0.0
    for psi in smooth_test_functions(u.grid, spatial):
        L_psi = op.apply(psi)
        pair_u = np.array([f.inner(psi) for f in u])
        pair_L = np.array([f.inner(L_psi) for f in u])
        pair_source = np.array([(h - v).inner(psi) for h, v in zip(ham_values, v_field)])
        for l in range(temporal):
            w = np.pi * (l + 0.5) / T
            theta = np.sin(w * times)
            d_theta = w * np.cos(w * times)
            terms = (
                float(trapezoid(pair_u * d_theta, times)),
                -problem.uT.inner(psi) * theta[-1],
                float(trapezoid(pair_L * theta, times)),
                float(trapezoid(pair_source * theta, times)),
            )
            worst = max(worst, abs(sum(terms)))
            scale = max(scale, sum(abs(t) for t in terms))
    return worst / scale if scale > 0.0 else 0.0
