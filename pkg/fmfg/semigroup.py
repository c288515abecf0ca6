"""
Fractional heat semigroup and its viscous extension on the torus.

The evolution operator has the Fourier symbol
    lambda(k) = sigma (2 pi |k|)^2 + (2 pi |k|)^(2s),
so heat_step is exactly exp(-t (sigma(-Delta) + (-Delta)^s)). Time stepping of
inhomogeneous problems follows Duhamel's formula with either an implicit-Euler
IMEX step or a first-order exponential integrator (ETD1).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from .function_spaces import (
    band_corpus,
    bessel_norm,
    fit_log_log_slope,
    lp_norm,
    parabolic_norm,
    vector_lp_norm,
)
from .reports import InequalityReport, clamp_ratio
from .spectral_core import (
    TWO_PI,
    FourierSymbol,
    PeriodicGrid,
    SpectralField,
    VectorField,
    gradient,
    make_grid,
)

logger = logging.getLogger(__name__)


class Integrator(str, Enum):
    """Time integrators for u' = -lambda u + source, mode by mode."""
    IMEX = "imex"
    ETD1 = "etd1"


@lru_cache(maxsize=None)
def evolution_symbol(s_exp: float, sigma: float) -> FourierSymbol:
    return FourierSymbol(
        f"sigma={sigma!r}, s={s_exp!r}",
        lambda k: sigma * (TWO_PI * np.sqrt(np.sum(k.astype(float) ** 2, axis=0))) ** 2
        + (TWO_PI * np.sqrt(np.sum(k.astype(float) ** 2, axis=0))) ** (2.0 * s_exp),
    )


@dataclass(frozen=True)
class EvolutionOperator:
    """
    The operator sigma(-Delta) + (-Delta)^s.

    The symbol vanishes at k = 0, is real, nonnegative and radially nondecreasing.
    Unlike the derivative multipliers, it keeps the Nyquist row.
    """

    s_exp: float
    sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.s_exp < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s_exp}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def symbol(self) -> FourierSymbol:
        return evolution_symbol(float(self.s_exp), float(self.sigma))

    def on_grid(self, grid: PeriodicGrid) -> np.ndarray:
        return self.symbol.on_grid(grid)

    def apply(self, f: SpectralField) -> SpectralField:
        return SpectralField.from_coeffs(f.grid, f.coeffs * self.on_grid(f.grid))


def time_grid(T: float, nt: int) -> np.ndarray:
    """Uniform time nodes t_0 = 0 < ... < t_nt = T."""
    if T <= 0.0:
        raise ValueError(f"T must be positive, got {T}")
    if nt < 1:
        raise ValueError(f"nt must be at least 1, got {nt}")
    return np.linspace(0.0, T, nt + 1)


FieldLike = Union[SpectralField, VectorField]


@dataclass(eq=False)
class Trajectory:
    """
    Fields sampled on a uniform time grid, all on one spatial grid.

    kind is a free label carried into manifests ("u", "m", "rho", "V", "drift", ...).
    """

    times: np.ndarray
    fields: Tuple[FieldLike, ...]
    kind: str = "u"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.fields = tuple(self.fields)
        if len(self.times) != len(self.fields):
            raise ValueError(f"{len(self.times)} times but {len(self.fields)} fields")
        if len(self.times) < 2:
            raise ValueError("a trajectory needs at least two time levels")
        steps = np.diff(self.times)
        if np.any(steps <= 0.0):
            raise ValueError("times must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("times must be uniformly spaced")
        grid = self.fields[0].grid
        if any(f.grid != grid for f in self.fields):
            raise ValueError("all fields of a trajectory must share one grid")

    @classmethod
    def from_array(cls, grid: PeriodicGrid, times: np.ndarray, values: np.ndarray, kind: str = "u") -> "Trajectory":
        return cls(times, tuple(SpectralField(grid, v) for v in values), kind)

    @property
    def grid(self) -> PeriodicGrid:
        return self.fields[0].grid

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def nt(self) -> int:
        return len(self.times) - 1

    def __len__(self) -> int:
        return len(self.fields)

    def __getitem__(self, index: int) -> FieldLike:
        return self.fields[index]

    def __iter__(self):
        return iter(self.fields)

    def values_array(self) -> np.ndarray:
        """Stacked values, shape (nt+1, n, ..., n), or (nt+1, d, n, ..., n) for vector fields."""
        if isinstance(self.fields[0], VectorField):
            return np.stack([f.as_array() for f in self.fields])
        return np.stack([f.values for f in self.fields])

    def sup_norm(self) -> float:
        return float(max(f.sup_norm() for f in self.fields))

    def reversed_in_time(self, kind: Optional[str] = None) -> "Trajectory":
        """v(tau) = u(T - tau) on the same time grid."""
        return Trajectory(self.times, self.fields[::-1], kind or self.kind)


def heat_step(f: SpectralField, t: float, op: EvolutionOperator) -> SpectralField:
    """
    Apply the semigroup exp(-t lambda) to f.

    Args:
        f: Field to propagate
        t: Elapsed time, t >= 0
        op: Evolution operator

    Returns:
        Propagated field; the zero mode is unchanged, t = 0 returns f itself

    Examples:
        >>> grid = make_grid(1, 64)
        >>> f = SpectralField.from_function(grid, lambda x: np.cos(2 * np.pi * x))
        >>> g = heat_step(f, 0.1, EvolutionOperator(0.5))   # exp(-0.1 * 2 pi) cos(2 pi x)
    """
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if t == 0.0:
        return f
    return SpectralField.from_coeffs(f.grid, f.coeffs * np.exp(-t * op.on_grid(f.grid)))


@dataclass(frozen=True, eq=False)
class StepFactors:
    """Mode-wise factors of one step: u_hat <- decay * u_hat + forcing * source_hat."""

    decay: np.ndarray
    forcing: np.ndarray

    def advance_coeffs(self, coeffs: np.ndarray, source_coeffs: Optional[np.ndarray]) -> np.ndarray:
        if source_coeffs is None:
            return self.decay * coeffs
        return self.decay * coeffs + self.forcing * source_coeffs

    def advance(self, f: SpectralField, source: Optional[SpectralField] = None) -> SpectralField:
        source_coeffs = None if source is None else source.coeffs
        return SpectralField.from_coeffs(f.grid, self.advance_coeffs(f.coeffs, source_coeffs))


@lru_cache(maxsize=64)
def step_factors(op: EvolutionOperator, grid: PeriodicGrid, dt: float, integrator: Integrator) -> StepFactors:
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    lam = op.on_grid(grid)
    if integrator is Integrator.IMEX:
        decay = 1.0 / (1.0 + dt * lam)
        forcing = dt * decay
    else:
        decay = np.exp(-dt * lam)
        safe = np.where(lam > 0.0, lam, 1.0)
        forcing = np.where(lam > 0.0, -np.expm1(-dt * lam) / safe, dt)
    decay.setflags(write=False)
    forcing.setflags(write=False)
    return StepFactors(decay, forcing)


def imex_step(
    f: SpectralField,
    source: Optional[SpectralField],
    dt: float,
    op: EvolutionOperator,
    integrator: Integrator = Integrator.IMEX,
) -> SpectralField:
    """
    One Duhamel step of u' = -lambda u + source with the source frozen over the step.

    IMEX: (I + dt lambda)^(-1) (f_hat + dt source_hat).
    ETD1: exp(-dt lambda) f_hat + (1 - exp(-dt lambda)) / lambda * source_hat, and
    dt * source_hat at lambda = 0.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if source is not None and source.grid != f.grid:
        raise ValueError("fields live on different grids")
    return step_factors(op, f.grid, float(dt), Integrator(integrator)).advance(f, source)


def _as_corpus(fields: Union[SpectralField, Sequence[SpectralField]]) -> List[SpectralField]:
    corpus = [fields] if isinstance(fields, SpectralField) else list(fields)
    if not corpus:
        raise ValueError("at least one field is required")
    return corpus


def _check_ladder(times: Sequence[float]) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if len(times) < 4:
        raise ValueError(f"need at least 4 time points, got {len(times)}")
    if np.any(times <= 0.0) or np.any(np.diff(times) <= 0.0):
        raise ValueError("times must be positive and increasing")
    return times


def _small_time_slope(times: np.ndarray, values: np.ndarray) -> float:
    return float(np.log(values[1] / values[0]) / np.log(times[1] / times[0]))


def _rate_report(
    name: str,
    times: np.ndarray,
    values: np.ndarray,
    expected: float,
    tolerance: float,
    config: dict,
) -> InequalityReport:
    fitted = fit_log_log_slope(times, values)
    early = _small_time_slope(times, values)
    scaled = values * times ** (-expected)
    passed = bool(np.all(np.isfinite(values)) and early >= expected - tolerance)
    return InequalityReport(
        name=name,
        samples=len(times),
        worst_ratio=clamp_ratio(np.max(scaled)),
        fitted_exponent=fitted,
        passed=passed,
        config=config,
        constants={"expected_exponent": expected, "small_time_slope": early},
        series={"t": times.tolist(), "ratio": values.tolist()},
    )


def measure_decay_rate(
    fields: Union[SpectralField, Sequence[SpectralField]],
    nu: float,
    gamma: float,
    p: float,
    op: EvolutionOperator,
    times: Sequence[float],
    tolerance: float = 0.1,
) -> InequalityReport:
    """
    Smoothing rate of the semigroup: log-log fit of sup_f ||T_t f||_{nu+gamma,p} / ||f||_{nu,p}.

    The bound is C t^(-gamma/2s). The fitted slope over the ladder is reported;
    pass requires the small-time slope (first two ladder points) to be no steeper
    than -gamma/2s - tolerance. worst_ratio is max_t ratio(t) t^(gamma/2s).
    """
    if gamma < 0.0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    times = _check_ladder(times)
    corpus = _as_corpus(fields)
    if any(np.ptp(f.values) == 0.0 for f in corpus):
        raise ValueError("decay rates need nonconstant fields")

    base = [bessel_norm(f, nu, p) for f in corpus]
    values = np.array([
        max(bessel_norm(heat_step(f, t, op), nu + gamma, p) / b for f, b in zip(corpus, base))
        for t in times
    ])
    expected = -gamma / (2.0 * op.s_exp)
    logger.debug("decay ratios %s", values)
    return _rate_report(
        "semigroup_decay",
        times,
        values,
        expected,
        tolerance,
        {"nu": nu, "gamma": gamma, "p": p, "s": op.s_exp, "sigma": op.sigma, "fields": len(corpus)},
    )


def measure_continuity_rate(
    fields: Union[SpectralField, Sequence[SpectralField]],
    theta: float,
    p: float,
    op: EvolutionOperator,
    times: Sequence[float],
    tolerance: float = 0.1,
) -> InequalityReport:
    """
    Continuity at t = 0: fit of sup_f ||T_t f - f||_p / ||f||_{2 theta,p} against t.

    pass = fitted exponent >= theta/s - tolerance. Constant fields give identically
    zero differences and pass trivially.
    """
    if not 0.0 < theta <= op.s_exp:
        raise ValueError(f"theta must lie in (0, s] = (0, {op.s_exp:g}], got {theta}")
    times = _check_ladder(times)
    corpus = [f for f in _as_corpus(fields) if np.ptp(f.values) > 0.0]
    config = {"theta": theta, "p": p, "s": op.s_exp, "sigma": op.sigma}
    expected = theta / op.s_exp

    if not corpus:
        return InequalityReport(
            name="semigroup_continuity",
            samples=len(times),
            worst_ratio=0.0,
            passed=True,
            config=config,
            notes=["constant fields: T_t f - f vanishes identically"],
        )

    base = [bessel_norm(f, 2.0 * theta, p) for f in corpus]
    values = np.array([
        max(lp_norm(heat_step(f, t, op) - f, p) / b for f, b in zip(corpus, base))
        for t in times
    ])
    fitted = fit_log_log_slope(times, values)
    return InequalityReport(
        name="semigroup_continuity",
        samples=len(times),
        worst_ratio=clamp_ratio(np.max(values * times ** (-expected))),
        fitted_exponent=fitted,
        passed=bool(np.all(np.isfinite(values)) and fitted >= expected - tolerance),
        config=config,
        constants={"expected_exponent": expected},
        series={"t": times.tolist(), "ratio": values.tolist()},
    )


def measure_gradient_decay(
    fields: Union[SpectralField, Sequence[SpectralField]],
    p: float,
    op: EvolutionOperator,
    times: Sequence[float],
    tolerance: float = 0.1,
) -> InequalityReport:
    """Kernel-gradient rate: sup_f ||D T_t f||_p / ||f||_p against the bound C t^(-1/2s)."""
    times = _check_ladder(times)
    corpus = _as_corpus(fields)
    if any(np.ptp(f.values) == 0.0 for f in corpus):
        raise ValueError("decay rates need nonconstant fields")

    base = [lp_norm(f, p) for f in corpus]
    values = np.array([
        max(vector_lp_norm(gradient(heat_step(f, t, op)), p) / b for f, b in zip(corpus, base))
        for t in times
    ])
    return _rate_report(
        "gradient_decay",
        times,
        values,
        -1.0 / (2.0 * op.s_exp),
        tolerance,
        {"p": p, "s": op.s_exp, "sigma": op.sigma, "fields": len(corpus)},
    )


def default_decay_ladder(grid: PeriodicGrid, op: EvolutionOperator, exponent: float, points: int = 8) -> np.ndarray:
    """
    Geometric ladder on which sup_k lambda^a exp(-t lambda) is attained inside the
    represented band: t from 2a/lambda_max to a/(2 lambda_1).
    """
    lam = op.on_grid(grid)
    lam_1 = float(np.min(lam[lam > 0.0]))
    lam_max = float(np.max(lam))
    if exponent <= 0.0:
        raise ValueError(f"exponent must be positive, got {exponent}")
    return np.geomspace(2.0 * exponent / lam_max, exponent / (2.0 * lam_1), points)


def _manufactured_forcing(grid: PeriodicGrid, t: float) -> SpectralField:
    x = grid.coordinates[0]
    return SpectralField(grid, np.cos(TWO_PI * t) * (np.cos(TWO_PI * x) + 0.5 * np.sin(2.0 * TWO_PI * x)))


def verify_parabolic_regularity(
    s_exp: float,
    p: float = 2.0,
    resolutions: Sequence[Tuple[int, int]] = ((32, 64), (64, 128), (128, 256)),
    T: float = 0.5,
    sigma: float = 0.0,
    integrator: Integrator = Integrator.IMEX,
) -> InequalityReport:
    """
    Maximal-regularity constant C = ||u||_{H^{2s}_p(Q)} / (||f||_{L^p(Q)} + ||u_0||_{2s-2s/p,p})
    for d_t u + (sigma(-Delta) + (-Delta)^s) u = f with a fixed smooth forcing,
    measured at each (n, nt). pass = max/min of C across resolutions below 1.5.
    """
    op = EvolutionOperator(s_exp, sigma)
    constants = {}
    for n, nt in resolutions:
        grid = make_grid(1, n)
        times = time_grid(T, nt)
        dt = float(times[1] - times[0])
        u = SpectralField.from_function(grid, lambda x: 0.3 * np.cos(2.0 * TWO_PI * x))
        states = [u]
        for t in times[:-1]:
            u = imex_step(u, _manufactured_forcing(grid, t), dt, op, integrator)
            states.append(u)
        traj = Trajectory(times, tuple(states))

        forcing_norms = np.array([lp_norm(_manufactured_forcing(grid, t), p) ** p for t in times])
        data = trapezoid(forcing_norms, times) ** (1.0 / p) + bessel_norm(
            states[0], 2.0 * s_exp - 2.0 * s_exp / p, p
        )
        constants[f"C(n={n},nt={nt})"] = parabolic_norm(traj, 2.0 * s_exp, p, s_exp) / data

    values = np.array(list(constants.values()))
    spread = float(values.max() / values.min())
    constants["spread"] = spread
    return InequalityReport(
        name="parabolic_regularity",
        samples=len(resolutions),
        worst_ratio=clamp_ratio(values.max()),
        passed=bool(np.all(np.isfinite(values)) and spread < 1.5),
        config={"s": s_exp, "p": p, "T": T, "sigma": sigma, "integrator": Integrator(integrator).value},
        constants=constants,
    )


def decay_suite(grid: Optional[PeriodicGrid] = None, tolerance: float = 0.1) -> List[InequalityReport]:
    """
    Semigroup checks run by the CLI: smoothing rates for (s, gamma/2s) in
    {(0.3, 1), (0.5, 1), (0.75, 1), (0.75, 0.5)}, continuity at theta = s and s/2,
    and the kernel-gradient rate.
    """
    grid = grid or make_grid(1, 256)
    corpus = band_corpus(grid)
    reports = []
    for s_exp, a in ((0.3, 1.0), (0.5, 1.0), (0.75, 1.0), (0.75, 0.5)):
        op = EvolutionOperator(s_exp)
        times = default_decay_ladder(grid, op, a)
        reports.append(measure_decay_rate(corpus, 0.0, 2.0 * s_exp * a, 2.0, op, times, tolerance))

    op = EvolutionOperator(0.75)
    low = np.geomspace(1e-5, 1e-3, 8)
    reports.append(measure_continuity_rate(corpus[0], 0.75, 2.0, op, low, tolerance))
    reports.append(measure_continuity_rate(corpus[:8], 0.375, 2.0, op, low, tolerance))
    reports.append(measure_gradient_decay(corpus, 2.0, op, default_decay_ladder(grid, op, 1.0 / 1.5), tolerance))
    return reports
