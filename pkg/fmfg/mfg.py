"""
The coupled MFG system: damped fixed-point solver, vanishing-viscosity sweep,
short-time Picard contraction study and uniqueness experiments.

One pass of the fixed-point map takes a density trajectory mu to
    V = F[mu(t)]  ->  u solving HJB with V  ->  m solving FP with b = -D_pH(x, Du).
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import SolverConfig, TrajectoryMetric
from .fokker_planck import FPDiagnostics, fp_residual, solve_fp_forward, stability_report, transport_flux
from .function_spaces import bessel_norm, fit_log_log_slope, parabolic_norm, random_field
from .hjb import (
    HJBDiagnostics,
    check_comparison_bound,
    hamiltonian_term,
    hjb_residual,
    optimal_drift,
    solve_hjb_backward,
)
from .model import CouplingMode, MFGProblem, wasserstein1
from .semigroup import Integrator, Trajectory, heat_step, step_factors, time_grid
from .spectral_core import SpectralField, divergence, gradient, second_difference_hessian_bound

logger = logging.getLogger(__name__)


@dataclass
class PairDiagnostics:
    """HJB and FP monitors of a solved pair plus the outer-loop record."""

    hjb: HJBDiagnostics
    fp: FPDiagnostics
    outer_iterations: int
    final_fixed_point_gap: float
    converged: bool
    hjb_residual: float
    fp_residual: float
    damping: float
    gap_history: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        flat = {f"hjb_{k}": v for k, v in self.hjb.to_dict().items()}
        flat.update({f"fp_{k}": v for k, v in self.fp.to_dict().items()})
        flat.update(
            outer_iterations=self.outer_iterations,
            final_fixed_point_gap=self.final_fixed_point_gap,
            converged=self.converged,
            hjb_residual=self.hjb_residual,
            fp_residual=self.fp_residual,
            damping=self.damping,
        )
        return flat


@dataclass(eq=False)
class SolutionPair:
    u: Trajectory
    m: Trajectory
    diagnostics: PairDiagnostics

    def __post_init__(self):
        if len(self.u) != len(self.m) or not np.array_equal(self.u.times, self.m.times):
            raise ValueError("u and m must share one time grid")
        if self.u.grid != self.m.grid:
            raise ValueError("u and m must share one spatial grid")


def constant_in_time(f: SpectralField, times: np.ndarray, kind: str = "m") -> Trajectory:
    return Trajectory(times, tuple(f for _ in times), kind=kind)


def coupling_trajectory(problem: MFGProblem, m: Trajectory) -> Trajectory:
    """V(t) = F[m(t)]."""
    return Trajectory(m.times, tuple(problem.coupling.apply(f) for f in m), kind="V")


def _probability(f: SpectralField) -> SpectralField:
    values = np.clip(f.values, 0.0, None)
    return SpectralField(f.grid, values / np.mean(values))


def trajectory_distance(
    a: Trajectory,
    b: Trajectory,
    metric: TrajectoryMetric = TrajectoryMetric.L2_TRAJ,
    reg: float = 1e-3,
) -> float:
    """
    sup over time of ||a(t) - b(t)||_2 (l2_traj), or of d_1(a(t), b(t)) (d1_sup).

    The d_1 variant measures densities clipped at zero and renormalized.
    """
    if TrajectoryMetric(metric) is TrajectoryMetric.L2_TRAJ:
        return float(max((fa - fb).l2_norm() for fa, fb in zip(a, b)))
    return float(max(wasserstein1(_probability(fa), _probability(fb), reg=reg) for fa, fb in zip(a, b)))


def _mix(current: Trajectory, target: Trajectory, damping: float) -> Trajectory:
    fields = tuple(fc * (1.0 - damping) + ft * damping for fc, ft in zip(current, target))
    return Trajectory(current.times, fields, kind="m")


def _best_response(problem: MFGProblem, m: Trajectory, config: SolverConfig):
    v_field = coupling_trajectory(problem, m)
    u, hjb_diag = solve_hjb_backward(problem, v_field, config)
    drift = optimal_drift(u, problem.ham)
    m_next, fp_diag = solve_fp_forward(problem, drift, config)
    return u, hjb_diag, m_next, fp_diag


def _assemble_pair(
    problem: MFGProblem,
    u: Trajectory,
    hjb_diag: HJBDiagnostics,
    m: Trajectory,
    config: SolverConfig,
    iterations: int,
    gap: float,
    converged: bool,
    damping: float,
    history: List[float],
) -> SolutionPair:
    drift = optimal_drift(u, problem.ham)
    fp_diag = stability_report(m, drift, problem, tol=config.stability_tol)
    pair = SolutionPair(
        u=u,
        m=m,
        diagnostics=PairDiagnostics(
            hjb=hjb_diag,
            fp=fp_diag,
            outer_iterations=iterations,
            final_fixed_point_gap=gap,
            converged=converged,
            hjb_residual=0.0,
            fp_residual=0.0,
            damping=damping,
            gap_history=list(history),
        ),
    )
    pair.diagnostics.hjb_residual, pair.diagnostics.fp_residual = mfg_residual(problem, pair, config.dealias)
    return pair


def solve_mfg_fixed_point(
    problem: MFGProblem,
    config: SolverConfig,
    init: Optional[Trajectory] = None,
) -> SolutionPair:
    """
    Damped fixed-point iteration m <- (1 - delta) m + delta Phi(m).

    Starts from m(t) = m0 for all t unless an initial trajectory is given, stops
    when successive iterates are closer than config.tol in the configured metric,
    and halves delta whenever the gap grows twice in a row. Couplings that ignore
    the density make Phi constant, so a single pass is returned.

    Args:
        problem: Problem data
        config: Solver and outer-loop settings
        init: Optional initial density trajectory on the solver time grid

    Returns:
        SolutionPair; converged=False (not an error) when max_iter is reached
    """
    times = time_grid(problem.T, config.nt)
    m = init if init is not None else constant_in_time(problem.m0, times)
    if len(m) != len(times):
        raise ValueError(f"initial trajectory must have {len(times)} time levels")

    if problem.coupling.is_constant:
        u, hjb_diag, m_next, _ = _best_response(problem, m, config)
        logger.info("coupling is independent of m: single pass")
        return _assemble_pair(problem, u, hjb_diag, m_next, config, 1, 0.0, True, config.damping, [0.0])

    damping = config.damping
    history: List[float] = []
    rises = 0
    converged = False
    gap = float("inf")
    for iteration in range(1, config.max_iter + 1):
        _, _, m_next, _ = _best_response(problem, m, config)
        mixed = _mix(m, m_next, damping)
        gap = trajectory_distance(mixed, m, config.metric, config.sinkhorn_reg)
        m = mixed
        if history and gap > history[-1]:
            rises += 1
        else:
            rises = 0
        history.append(gap)
        logger.debug("outer iteration %d: gap %.3e, damping %.3g", iteration, gap, damping)
        if gap < config.tol:
            converged = True
            break
        if rises >= 2:
            damping *= 0.5
            rises = 0
            logger.warning("fixed-point gap grew twice in a row; damping halved to %.3g", damping)

    if not converged:
        logger.warning("fixed point not reached after %d iterations (gap %.3e)", config.max_iter, gap)

    v_field = coupling_trajectory(problem, m)
    u, hjb_diag = solve_hjb_backward(problem, v_field, config)
    pair = _assemble_pair(problem, u, hjb_diag, m, config, len(history), gap, converged, damping, history)
    logger.info(
        "mfg solve: %d iterations, gap %.3e, residuals hjb %.2e fp %.2e",
        len(history),
        gap,
        pair.diagnostics.hjb_residual,
        pair.diagnostics.fp_residual,
    )
    return pair


def mfg_residual(problem: MFGProblem, pair: SolutionPair, dealias: bool = True) -> Tuple[float, float]:
    """Centered-in-time relative L^2(Q) residuals (hjb, fp) of a solved pair."""
    v_field = coupling_trajectory(problem, pair.m)
    drift = optimal_drift(pair.u, problem.ham)
    return (
        hjb_residual(pair.u, v_field, problem, dealias),
        fp_residual(pair.m, drift, problem, dealias),
    )


class SweepReport(BaseModel):
    """Convergence observables of a vanishing-viscosity ladder, aligned with sigmas."""

    model_config = ConfigDict(populate_by_name=True)

    sigmas: List[float]
    sup_errors_u: List[float]
    lp_errors_du: List[float]
    weak_gaps_m: List[float]
    contraction_factors: List[float]
    iterations: List[int]
    converged: List[bool]
    semiconcavity: List[float]
    hjb_residuals: List[float]
    fp_residuals: List[float]
    m_metric: str
    semiconcavity_ratio: float
    passed: bool = Field(alias="pass")
    nonconverged: List[float] = Field(default_factory=list)

    def rows(self) -> List[Dict[str, Any]]:
        keys = (
            "sup_errors_u", "lp_errors_du", "weak_gaps_m", "contraction_factors",
            "iterations", "converged", "semiconcavity", "hjb_residuals", "fp_residuals",
        )
        return [
            {"sigma": sigma, **{key: getattr(self, key)[i] for key in keys}}
            for i, sigma in enumerate(self.sigmas)
        ]


def _decreasing(values: Sequence[float], slack: float = 0.05) -> bool:
    return all(later < earlier * (1.0 + slack) for earlier, later in zip(values, values[1:]))


def _lp_space_time(values: np.ndarray, dt: float, p: float) -> float:
    flat = values.reshape(values.shape[0], -1)
    return float((dt * np.sum(np.mean(np.abs(flat) ** p, axis=1))) ** (1.0 / p))


def _gap_contraction(history: Sequence[float]) -> float:
    """Geometric mean of successive gap ratios of the outer loop."""
    gaps = np.asarray([g for g in history if g > 0.0])
    if len(gaps) < 2:
        return 0.0
    return float(np.exp(np.mean(np.log(gaps[1:] / gaps[:-1]))))


def vanishing_viscosity_sweep(
    problem: MFGProblem,
    sigmas: Sequence[float],
    config: SolverConfig,
) -> SweepReport:
    """
    Solve along a descending viscosity ladder ending at sigma = 0 and measure the
    distance of each rung to the sigma = 0 solution.

    Density gaps use the sup norm for s > 1/2 and the parabolic H^s_2 norm otherwise.
    pass = sup errors of u and L^p errors of Du decrease (5% slack) along the last
    three nonzero rungs.
    """
    sigmas = [float(s) for s in sigmas]
    if len(sigmas) < 2 or sigmas[-1] != 0.0 or any(b >= a for a, b in zip(sigmas, sigmas[1:])):
        raise ValueError("sigmas must be strictly descending and end at 0")

    pairs = []
    for sigma in sigmas:
        logger.info("sweep rung sigma=%g", sigma)
        pairs.append(solve_mfg_fixed_point(problem.with_sigma(sigma), config))
    reference = pairs[-1]
    weak_regime = problem.s_exp <= 0.5
    p = config.norm_p

    ref_u = reference.u.values_array()
    ref_du = np.stack([gradient(f).as_array() for f in reference.u])
    sup_errors, du_errors, m_gaps = [], [], []
    for pair in pairs:
        sup_errors.append(float(np.max(np.abs(pair.u.values_array() - ref_u))))
        du = np.stack([gradient(f).as_array() for f in pair.u])
        du_errors.append(_lp_space_time(np.sqrt(np.sum((du - ref_du) ** 2, axis=1)), pair.u.dt, p))
        diff = Trajectory(pair.m.times, tuple(a - b for a, b in zip(pair.m, reference.m)), kind="m")
        if weak_regime:
            m_gaps.append(parabolic_norm(diff, problem.s_exp, 2.0, problem.s_exp))
        else:
            m_gaps.append(diff.sup_norm())

    tail = slice(max(0, len(sigmas) - 4), len(sigmas) - 1)
    passed = _decreasing(sup_errors[tail]) and _decreasing(du_errors[tail])
    semiconcavity = [pair.diagnostics.hjb.semiconcavity_constant for pair in pairs]
    nonconverged = [sigma for sigma, pair in zip(sigmas, pairs) if not pair.diagnostics.converged]
    if nonconverged:
        logger.warning("sweep rungs without convergence: %s", nonconverged)

    return SweepReport(
        sigmas=sigmas,
        sup_errors_u=sup_errors,
        lp_errors_du=du_errors,
        weak_gaps_m=m_gaps,
        contraction_factors=[_gap_contraction(pair.diagnostics.gap_history) for pair in pairs],
        iterations=[pair.diagnostics.outer_iterations for pair in pairs],
        converged=[pair.diagnostics.converged for pair in pairs],
        semiconcavity=semiconcavity,
        hjb_residuals=[pair.diagnostics.hjb_residual for pair in pairs],
        fp_residuals=[pair.diagnostics.fp_residual for pair in pairs],
        m_metric="parabolic_Hs2" if weak_regime else "sup",
        semiconcavity_ratio=semiconcavity[-1] / semiconcavity[0] if semiconcavity[0] > 0.0 else 0.0,
        passed=bool(passed),
        nonconverged=nonconverged,
    )


class PicardReport(BaseModel):
    """Empirical Lipschitz factors L(T) of the Duhamel map on a horizon ladder."""

    model_config = ConfigDict(populate_by_name=True)

    horizons: List[float]
    contraction_factors: List[float]
    gap_histories: List[List[float]]
    fitted_slope: Optional[float] = None
    expected_slope: float
    largest_contracting_T: Optional[float] = None
    increasing: bool
    passed: bool = Field(alias="pass")

    def rows(self) -> List[Dict[str, Any]]:
        return [
            {"T": T, "contraction_factor": L, "iterations": len(history)}
            for T, L, history in zip(self.horizons, self.contraction_factors, self.gap_histories)
        ]


def _duhamel_map(
    problem: MFGProblem,
    v: List[SpectralField],
    m: List[SpectralField],
    dt: float,
    dealias: bool,
) -> Tuple[List[SpectralField], List[SpectralField]]:
    """
    One undamped application of the map (v, m) -> (v', m'), v(tau) = u(T - tau).

    Both components are stepped with ETD1 using sources built from the INPUT pair:
        d_tau v' + L v' = F[m(T - tau)] - H(x, Dv(tau)),   v'(0) = uT
        d_t m' + L m' = -div(m b),  b = -D_pH(x, Dv(T - t)),  m'(0) = m0
    """
    factors = step_factors(problem.operator, problem.grid, dt, Integrator.ETD1)
    nt = len(v) - 1
    ham = problem.ham

    v_next = [problem.uT]
    for j in range(nt):
        source = problem.coupling.apply(m[nt - j]) - hamiltonian_term(ham, v[j], dealias)
        v_next.append(factors.advance(v_next[-1], source))

    m_next = [problem.m0]
    for n in range(nt):
        u_now = v[nt - n]
        drift = -ham.grad_p(gradient(u_now)) if not ham.bypassed else None
        if drift is None:
            m_next.append(factors.advance(m_next[-1]))
        else:
            source = -divergence(transport_flux(drift, m[n], dealias))
            m_next.append(factors.advance(m_next[-1], source))
    return v_next, m_next


def _sup_bessel(fields: Sequence[SpectralField], mu: float, p: float) -> float:
    return float(max(bessel_norm(f, mu, p) for f in fields))


def _picard_factor(
    problem: MFGProblem,
    config: SolverConfig,
) -> Tuple[float, List[float], List[SpectralField], List[SpectralField]]:
    times = time_grid(problem.T, config.nt)
    dt = float(times[1] - times[0])
    s2 = 2.0 * problem.s_exp
    p = config.norm_p

    v = [problem.uT] * len(times)
    m = [problem.m0] * len(times)
    gaps: List[float] = []
    for _ in range(config.picard_iterations):
        v_next, m_next = _duhamel_map(problem, v, m, dt, config.dealias)
        gap = _sup_bessel([a - b for a, b in zip(v_next, v)], s2, p) + _sup_bessel(
            [a - b for a, b in zip(m_next, m)], s2 - 1.0, p
        )
        gaps.append(gap)
        v, m = v_next, m_next
        if gap == 0.0:
            break

    if len(gaps) < 2 or gaps[-1] == 0.0 or min(gaps) == 0.0:
        return 0.0, gaps, v, m
    ratios = np.asarray(gaps[1:]) / np.asarray(gaps[:-1])
    factor = float(np.exp(np.mean(np.log(ratios[-4:]))))
    return factor, gaps, v, m


def picard_short_time(
    problem: MFGProblem,
    config: SolverConfig,
    horizons: Sequence[float],
) -> Tuple[List[SolutionPair], PicardReport]:
    """
    Empirical Lipschitz factor L(T) of the undamped Duhamel map for each horizon.

    L(T) is the geometric mean of the last four ratios of successive gaps, measured
    in sup_t ||.||_{2s,p} for v plus sup_t ||.||_{2s-1,p} for m. The integrator is
    ETD1 regardless of config. The log-log slope of L against T is compared with
    (2s - 1)/2s within 30%.

    Raises:
        ValueError: s <= 1/2, or horizons not strictly ascending
    """
    if problem.s_exp <= 0.5:
        raise ValueError(f"Picard contraction requires s > 1/2, got {problem.s_exp}")
    horizons = [float(T) for T in horizons]
    if len(horizons) < 2 or any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be strictly ascending, at least two")

    config = config.with_updates(integrator=Integrator.ETD1)
    pairs, factors, histories = [], [], []
    for T in horizons:
        local = problem.with_horizon(T)
        factor, gaps, v, m = _picard_factor(local, config)
        logger.info("picard T=%g: L=%.4g after %d iterations", T, factor, len(gaps))
        factors.append(factor)
        histories.append(gaps)

        times = time_grid(T, config.nt)
        u = Trajectory(times, tuple(v[::-1]), kind="u")
        m_traj = Trajectory(times, tuple(m), kind="m")
        v_field = coupling_trajectory(local, m_traj)
        hjb_diag = HJBDiagnostics(
            sup_norm_bound_slack=check_comparison_bound(u, local, v_field),
            semiconcavity_constant=float(max(np.max(second_difference_hessian_bound(f)) for f in u)),
            lipschitz_constant=float(max(gradient(f).sup_norm() for f in u)),
            residual_l2=hjb_residual(u, v_field, local, config.dealias),
        )
        pairs.append(_assemble_pair(local, u, hjb_diag, m_traj, config, len(gaps), gaps[-1], factor < 1.0, 1.0, gaps))

    expected = (2.0 * problem.s_exp - 1.0) / (2.0 * problem.s_exp)
    positive = [(T, L) for T, L in zip(horizons, factors) if L > 0.0]
    slope = fit_log_log_slope(*zip(*positive)) if len(positive) >= 2 else None
    increasing = all(b > a for a, b in zip(factors, factors[1:]))
    contracting = [T for T, L in zip(horizons, factors) if L < 1.0]
    passed = (
        factors[0] < 1.0
        and increasing
        and slope is not None
        and abs(slope - expected) <= 0.3 * expected
    )
    report = PicardReport(
        horizons=horizons,
        contraction_factors=factors,
        gap_histories=histories,
        fitted_slope=slope,
        expected_slope=expected,
        largest_contracting_T=max(contracting) if contracting else None,
        increasing=increasing,
        passed=bool(passed),
    )
    return pairs, report


class UniquenessReport(BaseModel):
    """Pairwise gaps between fixed points reached from different initial guesses."""

    model_config = ConfigDict(populate_by_name=True)

    max_gap: float
    pairwise_gaps: List[float]
    iterations: List[int]
    converged: List[bool]
    tolerance: float
    coupling_mode: str
    passed: Optional[bool] = Field(default=None, alias="pass")


def perturbed_initial_guess(
    problem: MFGProblem,
    config: SolverConfig,
    seed: int,
    amplitude: float = 0.5,
    smoothing: float = 0.01,
) -> Trajectory:
    """A heat-smoothed, randomly modulated copy of m0, constant in time and of mass 1."""
    rng = np.random.default_rng(seed)
    modulation = random_field(problem.grid, rng, max_mode=4)
    values = problem.m0.values * np.exp(amplitude * modulation.values)
    density = heat_step(SpectralField(problem.grid, values / np.mean(values)), smoothing, problem.operator)
    return constant_in_time(density, time_grid(problem.T, config.nt))


def initial_guesses(problem: MFGProblem, config: SolverConfig, count: int, seed: int = 0) -> List[Optional[Trajectory]]:
    """m(t) = m0 first, then count - 1 perturbed guesses."""
    if count < 2:
        raise ValueError(f"need at least two initial guesses, got {count}")
    return [None] + [perturbed_initial_guess(problem, config, seed + i) for i in range(count - 1)]


def uniqueness_experiment(
    problem: MFGProblem,
    inits: Sequence[Optional[Trajectory]],
    config: SolverConfig,
) -> UniquenessReport:
    """
    Solve from each initial guess and report max over pairs of
    sup |u_a - u_b| + metric(m_a, m_b). A pass flag is set only for monotone
    couplings (gap < 10 tol); other modes are reported without one.
    """
    if len(inits) < 2:
        raise ValueError("need at least two initial guesses")
    pairs = [solve_mfg_fixed_point(problem, config, init) for init in inits]
    gaps = [
        float(np.max(np.abs(a.u.values_array() - b.u.values_array())))
        + trajectory_distance(a.m, b.m, config.metric, config.sinkhorn_reg)
        for a, b in combinations(pairs, 2)
    ]
    converged = [pair.diagnostics.converged for pair in pairs]
    if not all(converged):
        logger.warning("uniqueness branches without convergence: %s", [i for i, c in enumerate(converged) if not c])

    max_gap = max(gaps)
    monotone = problem.coupling.mode is CouplingMode.MONOTONE
    return UniquenessReport(
        max_gap=max_gap,
        pairwise_gaps=gaps,
        iterations=[pair.diagnostics.outer_iterations for pair in pairs],
        converged=converged,
        tolerance=config.tol,
        coupling_mode=problem.coupling.mode.value,
        passed=bool(max_gap < 10.0 * config.tol) if monotone else None,
    )
