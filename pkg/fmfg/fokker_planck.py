"""
Forward solver for the fractional Fokker-Planck equation in divergence form

    d_t m - sigma Delta m + (-Delta)^s m + div(b m) = 0,   m(0) = m0,

with the drift frozen per step, plus the mass, positivity, energy and weak-form
monitors. Inside the MFG the drift is b = -D_pH(x, Du).
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .config import SolverConfig
from .errors import SolverError
from .function_spaces import smooth_test_functions
from .model import MFGProblem
from .semigroup import EvolutionOperator, Integrator, Trajectory, step_factors, time_grid
from .spectral_core import SpectralField, VectorField, dealias, divergence, gradient

logger = logging.getLogger(__name__)


@dataclass
class FPDiagnostics:
    """Monitored bounds of a forward solve."""

    mass_error_max: float
    min_density: float
    energy_residual: float
    sup_norm: float
    dissipation: float = 0.0
    k_hat: float = 0.0
    comparison_bound: float = 0.0
    bound_holds: bool = True
    gronwall_slack: float = 0.0
    negativity_flagged: bool = False
    weak_residual: float = 0.0

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in asdict(self).values() if isinstance(v, float))

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def transport_flux(b: VectorField, m: SpectralField, dealias_product: bool = True) -> VectorField:
    """b m, each component dealiased by the two-thirds rule when requested."""
    flux = b.scale(m)
    if not dealias_product:
        return flux
    return VectorField(tuple(dealias(c) for c in flux.components))


def march_forward(
    m0: SpectralField,
    drift: Sequence[VectorField],
    op: EvolutionOperator,
    dt: float,
    integrator: Integrator = Integrator.IMEX,
    dealias_product: bool = True,
    solver: str = "fokker_planck",
    negativity_floor: Optional[float] = None,
) -> Tuple[List[SpectralField], Optional[int]]:
    """
    March m forward one step per drift entry; step n uses the drift b^n and density m^n.

    Shared by the Fokker-Planck and adjoint solvers. Returns the states and the first
    step at which min m fell below -negativity_floor * sup |m| (None if never).
    """
    factors = step_factors(op, m0.grid, float(dt), Integrator(integrator))
    states = [m0]
    first_negative = None
    m = m0
    for n, b in enumerate(drift):
        source = -divergence(transport_flux(b, m, dealias_product))
        m = factors.advance(m, source)
        if not m.is_finite():
            raise SolverError(solver, "non-finite density", step=n + 1)
        if negativity_floor is not None and first_negative is None:
            if m.min() < -negativity_floor * m.sup_norm():
                first_negative = n + 1
        states.append(m)
    return states, first_negative


def require_time_grid(traj: Trajectory, times: np.ndarray, name: str):
    if len(traj) != len(times) or not np.allclose(traj.times, times, rtol=0.0, atol=1e-12):
        raise ValueError(f"{name} must live on the solver time grid ({len(times)} levels)")


def cfl_number(drift: Trajectory) -> float:
    """dt * sup |b| / h."""
    return drift.dt * drift.sup_norm() / drift.grid.h


def solve_fp_forward(
    problem: MFGProblem,
    drift: Trajectory,
    config: SolverConfig,
) -> Tuple[Trajectory, FPDiagnostics]:
    """
    Solve the Fokker-Planck equation on the configured time grid.

    Args:
        problem: Supplies m0, s, sigma and T
        drift: Trajectory of VectorFields b(t_n), n = 0..nt
        config: Integrator, dealiasing and monitor thresholds

    Returns:
        (m trajectory, diagnostics). Densities below the negativity floor are flagged
        in the diagnostics and logged; the run is still returned.
    """
    times = time_grid(problem.T, config.nt)
    require_time_grid(drift, times, "drift")
    cfl = cfl_number(drift)
    if cfl > 1.0:
        logger.warning("transport CFL number %.3g exceeds 1; consider a larger nt", cfl)

    states, first_negative = march_forward(
        problem.m0,
        drift.fields[:-1],
        problem.operator,
        drift.dt,
        config.integrator,
        config.dealias,
        negativity_floor=config.negativity_floor,
    )
    m = Trajectory(times, tuple(states), kind="m")
    diagnostics = stability_report(m, drift, problem, tol=config.stability_tol)
    if first_negative is not None:
        diagnostics.negativity_flagged = True
        logger.warning("density below the negativity floor from step %d (min %.3g)", first_negative, diagnostics.min_density)
    logger.info(
        "fp solve: mass error %.2e, min %.4g, sup %.4g, energy residual %.2e",
        diagnostics.mass_error_max,
        diagnostics.min_density,
        diagnostics.sup_norm,
        diagnostics.energy_residual,
    )
    return m, diagnostics


def _dissipation_rates(m: Trajectory, op: EvolutionOperator) -> np.ndarray:
    """<L m, m> per time level, L = sigma(-Delta) + (-Delta)^s (exact Parseval sum)."""
    lam = op.on_grid(m.grid)
    return np.array([float(np.sum(lam * np.abs(f.coeffs) ** 2)) for f in m])


def _transport_rates(m: Trajectory, drift: Trajectory) -> np.ndarray:
    """1/2 integral div(b) m^2 per time level."""
    return np.array([0.5 * divergence(b).inner(f * f) for b, f in zip(drift, m)])


def energy_identity_residual(m: Trajectory, drift: Trajectory, problem: MFGProblem) -> float:
    """
    Relative defect of the energy identity integrated over [0, T]:
    1/2 ||m(T)||^2 - 1/2 ||m0||^2 + int <L m, m> dt + 1/2 int int div(b) m^2 = 0.

    Time integrals use the trapezoid rule; spatial integrals are grid means.
    """
    change = 0.5 * (m[-1].inner(m[-1]) - m[0].inner(m[0]))
    dissipation = float(trapezoid(_dissipation_rates(m, problem.operator), m.times))
    transport = float(trapezoid(_transport_rates(m, drift), m.times))
    scale = abs(change) + dissipation + abs(transport)
    if scale == 0.0:
        return 0.0
    return abs(change + dissipation + transport) / scale


def stability_report(
    m: Trajectory,
    drift: Trajectory,
    problem: MFGProblem,
    tol: float = 1e-3,
) -> FPDiagnostics:
    """
    Mass, positivity, sup-norm and energy bounds of a solved density.

    The sup norm is compared with ||m0||_inf exp(K T), K the largest negative part
    of div b over the space-time grid. gronwall_slack is
    1/2 ||m0||^2 + K/2 int ||m||^2 - (1/2 ||m(T)||^2 + dissipation).
    """
    values = m.values_array()
    masses = values.reshape(len(m), -1).mean(axis=1)
    k_hat = max(0.0, max(-divergence(b).min() for b in drift))
    sup = float(np.max(np.abs(values)))
    bound = m[0].sup_norm() * float(np.exp(k_hat * m.T))

    dissipation = float(trapezoid(_dissipation_rates(m, problem.operator), m.times))
    squares = np.array([f.inner(f) for f in m])
    gronwall = 0.5 * squares[0] + 0.5 * k_hat * float(trapezoid(squares, m.times)) - (0.5 * squares[-1] + dissipation)

    return FPDiagnostics(
        mass_error_max=float(np.max(np.abs(masses - problem.m0.mean()))),
        min_density=float(np.min(values)),
        energy_residual=energy_identity_residual(m, drift, problem),
        sup_norm=sup,
        dissipation=dissipation,
        k_hat=float(k_hat),
        comparison_bound=bound,
        bound_holds=bool(sup <= bound * (1.0 + tol)),
        gronwall_slack=float(gronwall),
        weak_residual=weak_residual(m, drift, problem),
    )


def space_time_l2(values: np.ndarray, dt: float) -> float:
    flat = values.reshape(values.shape[0], -1)
    return float(np.sqrt(dt * np.sum(np.mean(flat ** 2, axis=1))))


def fp_residual(m: Trajectory, drift: Trajectory, problem: MFGProblem, dealias_product: bool = True) -> float:
    """
    Centered-in-time residual of the Fokker-Planck equation in L^2(Q), relative to
    the L^2(Q) norms of its terms plus sqrt(T) ||m0||.
    """
    op = problem.operator
    values = m.values_array()
    rate = np.diff(values, axis=0) / m.dt
    diffusion = np.stack([op.apply(f).values for f in m])
    transport = np.stack([divergence(transport_flux(b, f, dealias_product)).values for b, f in zip(drift, m)])
    mid_diffusion = 0.5 * (diffusion[1:] + diffusion[:-1])
    mid_transport = 0.5 * (transport[1:] + transport[:-1])

    residual = space_time_l2(rate + mid_diffusion + mid_transport, m.dt)
    scale = (
        space_time_l2(rate, m.dt)
        + space_time_l2(mid_diffusion, m.dt)
        + space_time_l2(mid_transport, m.dt)
        + np.sqrt(m.T) * problem.m0.l2_norm()
    )
    return residual / scale if scale > 0.0 else 0.0


def weak_residual(m: Trajectory, drift: Trajectory, problem: MFGProblem, spatial: int = 8, temporal: int = 4) -> float:
    """
    Residual of the weak formulation against phi(x, t) = psi_i(x) cos(pi (l + 1/2) t / T),
    which vanish at t = T:

        int m0 phi(0) + int int m (d_t phi - L phi + b . D phi) = 0.

    Returns max |residual| / max of the summed absolute term sizes over the basis.
    """
    op = problem.operator
    times = m.times
    T = m.T
    worst = 0.0
    scale = 0.0
    for psi in smooth_test_functions(m.grid, spatial):
        L_psi = op.apply(psi)
        grad_psi = gradient(psi)
        pair_m = np.array([f.inner(psi) for f in m])
        pair_L = np.array([f.inner(L_psi) for f in m])
        pair_b = np.array([f.inner(b.dot(grad_psi)) for f, b in zip(m, drift)])
        for l in range(temporal):
            w = np.pi * (l + 0.5) / T
            theta = np.cos(w * times)
            d_theta = -w * np.sin(w * times)
            terms = (
                problem.m0.inner(psi) * theta[0],
                float(trapezoid(pair_m * d_theta, times)),
                -float(trapezoid(pair_L * theta, times)),
                float(trapezoid(pair_b * theta, times)),
            )
            worst = max(worst, abs(sum(terms)))
            scale = max(scale, sum(abs(t) for t in terms))
    return worst / scale if scale > 0.0 else 0.0
