"""
Bessel potential norms, parabolic norms and Hölder seminorms on the torus, plus
sampled verifiers for the functional inequalities the solvers rely on.

Verifiers never assert an analytic constant. They report the empirical constant
seen on a seeded random corpus and pass when it is finite (or below a ceiling).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft
from scipy.integrate import trapezoid
from sklearn.linear_model import LinearRegression

from .reports import InequalityReport, clamp_ratio
from .spectral_core import (
    PeriodicGrid,
    SpectralField,
    VectorField,
    apply_multiplier,
    bessel_symbol,
    dealias,
    fractional_laplacian,
    fractional_symbol,
    gradient,
    hessian,
    make_grid,
)

logger = logging.getLogger(__name__)


class NormKind(str, Enum):
    """Families of norms the verifiers evaluate."""
    BESSEL = "bessel"
    LP = "lp"
    HOLDER = "holder_seminorm"


@dataclass(frozen=True)
class NormSpec:
    """Order mu, exponent p and kind of a norm; evaluate() dispatches on kind."""

    mu: float
    p: float
    kind: NormKind = NormKind.BESSEL

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.kind is NormKind.HOLDER and not 0.0 < self.mu <= 1.0:
            raise ValueError(f"Hölder order must lie in (0, 1], got {self.mu}")

    def evaluate(self, f: SpectralField, seed: int = 0) -> float:
        if self.kind is NormKind.BESSEL:
            return bessel_norm(f, self.mu, self.p)
        if self.kind is NormKind.LP:
            return lp_norm(f, self.p)
        return holder_seminorm(f, self.mu, seed=seed)


def _check_exponent(p: float):
    if not p > 1.0:
        raise ValueError(f"p must exceed 1, got {p}")


def _mean_power(values: np.ndarray, p: float) -> float:
    if np.isinf(p):
        return float(np.max(np.abs(values)))
    return float(np.mean(np.abs(values) ** p) ** (1.0 / p))


def lp_norm(f: SpectralField, p: float) -> float:
    """
    Grid L^p norm. p = 2 uses the raw values (exact Parseval); other finite p use
    the dealiased field; p = inf is the grid maximum of |f|.
    """
    _check_exponent(p)
    if p == 2.0 or np.isinf(p):
        return _mean_power(f.values, p)
    return _mean_power(dealias(f).values, p)


def vector_lp_norm(v: VectorField, p: float) -> float:
    """L^p norm of the pointwise Euclidean magnitude."""
    _check_exponent(p)
    if p == 2.0 or np.isinf(p):
        arr = v.as_array()
    else:
        arr = np.stack([dealias(c).values for c in v.components])
    return _mean_power(np.sqrt(np.sum(arr ** 2, axis=0)), p)


def hessian_lp_norm(f: SpectralField, p: float) -> float:
    """L^p norm of the pointwise Frobenius norm of D^2 f."""
    _check_exponent(p)
    hess = hessian(f if p == 2.0 else dealias(f))
    return _mean_power(np.sqrt(np.sum(hess ** 2, axis=(0, 1))), p)


def bessel_norm(f: SpectralField, mu: float, p: float) -> float:
    """
    Bessel potential norm ||(I - Delta)^(mu/2) f||_p.

    Args:
        f: Field to measure
        mu: Differentiability order (any real)
        p: Integrability exponent, p > 1

    Returns:
        Nonnegative norm; for p = 2 it equals the Parseval sum
        (sum_k (1 + 4 pi^2 |k|^2)^mu |f_hat(k)|^2)^(1/2)

    Examples:
        >>> grid = make_grid(1, 64)
        >>> f = SpectralField.from_function(grid, lambda x: np.cos(2 * np.pi * x))
        >>> bessel_norm(f, 1.0, 2.0)   # sqrt((1 + 4 pi^2) / 2)
    """
    _check_exponent(p)
    return lp_norm(apply_multiplier(f, bessel_symbol(mu)), p)


def _torus_separation(delta: np.ndarray, n: int) -> np.ndarray:
    delta = np.abs(delta) % n
    return np.minimum(delta, n - delta)


def holder_seminorm(f: SpectralField, alpha: float, seed: int = 0, pairs: int = 10_000) -> float:
    """
    Discrete Hölder seminorm sup |f(x) - f(y)| / dist(x, y)^alpha, geodesic distance.

    All node pairs are used in d=1. In d=2 a seeded subsample of `pairs` random pairs
    is taken, plus every axis-neighbour pair.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    grid = f.grid
    n = grid.n

    if grid.d == 1:
        v = f.values
        idx = np.arange(n)
        sep = _torus_separation(idx[:, None] - idx[None, :], n)
        mask = sep > 0
        diff = np.abs(v[:, None] - v[None, :])[mask]
        return float(np.max(diff / (sep[mask] * grid.h) ** alpha))

    rng = np.random.default_rng(seed)
    flat = f.values.ravel()
    first = rng.integers(0, grid.size, size=pairs)
    second = rng.integers(0, grid.size, size=pairs)
    nodes = np.arange(grid.size)
    i1, i2 = np.divmod(nodes, n)
    right = ((i1 + 1) % n) * n + i2
    up = i1 * n + (i2 + 1) % n
    first = np.concatenate([first, nodes, nodes])
    second = np.concatenate([second, right, up])

    a1, a2 = np.divmod(first, n)
    b1, b2 = np.divmod(second, n)
    sep = np.sqrt(_torus_separation(a1 - b1, n) ** 2 + _torus_separation(a2 - b2, n) ** 2)
    mask = sep > 0
    diff = np.abs(flat[first] - flat[second])[mask]
    return float(np.max(diff / (sep[mask] * grid.h) ** alpha))


def parabolic_norm(traj, mu: float, p: float, s_exp: float) -> float:
    """
    Parabolic norm of a trajectory:
    (int_0^T ||u(t)||_{mu,p}^p + ||d_t u(t)||_{mu-2s,p}^p dt)^(1/p).

    The time derivative is a second-order centered difference; the time integral
    is the trapezoid rule.
    """
    _check_exponent(p)
    grid = traj.grid
    values = traj.values_array()
    edge_order = 2 if len(traj) >= 3 else 1
    rate = np.gradient(values, traj.dt, axis=0, edge_order=edge_order)
    integrand = np.array([
        bessel_norm(SpectralField(grid, u), mu, p) ** p
        + bessel_norm(SpectralField(grid, du), mu - 2.0 * s_exp, p) ** p
        for u, du in zip(values, rate)
    ])
    return float(trapezoid(integrand, traj.times) ** (1.0 / p))


def parabolic_holder_seminorm(traj, alpha: float, beta: float, seed: int = 0, max_slices: int = 16) -> float:
    """
    Sampled space-time Hölder seminorm [u]_{alpha, x} + [u]_{beta, t}.

    The spatial part is taken on at most max_slices evenly spaced time levels; the
    temporal part uses every pair of time levels with the grid sup norm in x.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    picks = np.unique(np.linspace(0, len(traj) - 1, min(max_slices, len(traj))).astype(int))
    spatial = max(holder_seminorm(traj[i], alpha, seed=seed) for i in picks)

    values = traj.values_array()
    temporal = 0.0
    for lag in range(1, len(traj)):
        jumps = np.max(np.abs(values[lag:] - values[:-lag]).reshape(len(traj) - lag, -1), axis=1)
        temporal = max(temporal, float(np.max(jumps)) / (lag * traj.dt) ** beta)
    return spatial + temporal


def spectral_tail_ratio(f: SpectralField) -> float:
    """Fraction of non-mean energy carried by modes with some |k_j| > n/4."""
    energy = np.abs(f.coeffs) ** 2
    energy.flat[0] = 0.0
    total = float(np.sum(energy))
    if total == 0.0:
        return 0.0
    tail = np.any(np.abs(f.grid.wavenumbers) > f.grid.n // 4, axis=0)
    return float(np.sum(energy[tail]) / total)


def fit_log_log_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    x = np.log(np.asarray(x, dtype=float)).reshape(-1, 1)
    y = np.log(np.asarray(y, dtype=float))
    return float(LinearRegression().fit(x, y).coef_[0])


def random_field(
    grid: PeriodicGrid,
    rng: np.random.Generator,
    max_mode: Optional[int] = None,
    decay: float = 1.5,
) -> SpectralField:
    """
    Band-limited random field with unit L^2 norm.

    Coefficients are complex Gaussian with |u_hat(k)| ~ (1 + |k|)^(-decay) on
    |k| <= max_mode (default n/4); taking the real part enforces Hermitian symmetry.
    """
    max_mode = grid.n // 4 if max_mode is None else max_mode
    k = grid.k_norm
    amplitude = np.where(k <= max_mode, (1.0 + k) ** (-decay), 0.0)
    coeffs = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * amplitude
    values = np.real(fft.ifftn(coeffs))
    norm = np.sqrt(np.mean(values ** 2))
    return SpectralField(grid, values / norm)


def random_corpus(
    grid: PeriodicGrid,
    seed: int,
    samples: int,
    max_mode: Optional[int] = None,
    decay: float = 1.5,
) -> List[SpectralField]:
    """Seeded list of random band-limited fields."""
    rng = np.random.default_rng(seed)
    return [random_field(grid, rng, max_mode=max_mode, decay=decay) for _ in range(samples)]


def band_corpus(grid: PeriodicGrid) -> List[SpectralField]:
    """Single-mode fields cos(2 pi k x_1), one per band k = 1 .. n/2 - 1."""
    x = grid.coordinates[0]
    return [SpectralField(grid, np.cos(2.0 * np.pi * k * x)) for k in range(1, grid.n // 2)]


INTERPOLATION_DELTAS = (1.0, 0.5, 0.1)


def verify_interpolation_inequality(
    s_exp: float,
    p: float,
    seed: int = 0,
    samples: int = 200,
    grid: Optional[PeriodicGrid] = None,
    fields: Optional[Sequence[SpectralField]] = None,
    deltas: Sequence[float] = INTERPOLATION_DELTAS,
) -> InequalityReport:
    """
    Empirical constants C(delta) in ||(-Delta)^s u||_p <= delta ||D^j u||_p + C(delta) ||u||_p,
    with j = 1 for s < 1/2 and j = 2 for s >= 1/2.

    For each delta in the ladder, C(delta) is the smallest constant that makes the
    inequality hold on every sample. pass = all C(delta) finite.
    """
    _check_exponent(p)
    grid = grid or make_grid(1, 64)
    corpus = list(fields) if fields is not None else random_corpus(grid, seed, samples)
    first_order = s_exp < 0.5

    needed = {delta: 0.0 for delta in deltas}
    for u in corpus:
        base = lp_norm(u, p)
        if base == 0.0:
            continue
        lhs = lp_norm(fractional_laplacian(u, s_exp), p)
        top = vector_lp_norm(gradient(u), p) if first_order else hessian_lp_norm(u, p)
        for delta in deltas:
            needed[delta] = max(needed[delta], (lhs - delta * top) / base)

    constants = {f"C({delta:g})": max(value, 0.0) for delta, value in needed.items()}
    worst = max(constants.values())
    return InequalityReport(
        name="interpolation",
        samples=len(corpus),
        worst_ratio=clamp_ratio(worst),
        passed=all(np.isfinite(v) for v in constants.values()),
        seed=seed,
        config={"s": s_exp, "p": p, "n": grid.n, "d": grid.d, "order": 1 if first_order else 2},
        constants=constants,
    )


def verify_kato_ponce(
    mu: float,
    exponents: Tuple[float, float, float, float, float],
    seed: int = 0,
    samples: int = 500,
    grid: Optional[PeriodicGrid] = None,
    ceiling: float = 10.0,
    pairs: Optional[Sequence[Tuple[SpectralField, SpectralField]]] = None,
) -> InequalityReport:
    """
    Worst ratio ||fg||_{mu,p} / (||f||_{p1} ||g||_{mu,q1} + ||f||_{mu,p2} ||g||_{q2})
    over random band-limited pairs (modes |k| <= n/8 so that products stay below
    the dealiasing cutoff).
    """
    p, p1, q1, p2, q2 = exponents
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    for e in exponents:
        _check_exponent(e)
        if np.isinf(e):
            raise ValueError("exponents must be finite")
    if abs(1.0 / p - 1.0 / p1 - 1.0 / q1) > 1e-12 or abs(1.0 / p - 1.0 / p2 - 1.0 / q2) > 1e-12:
        raise ValueError("exponent relation 1/p = 1/p1 + 1/q1 = 1/p2 + 1/q2 violated")

    grid = grid or make_grid(1, 64)
    if pairs is None:
        corpus = random_corpus(grid, seed, 2 * samples, max_mode=grid.n // 8)
        pairs = list(zip(corpus[::2], corpus[1::2]))

    worst = 0.0
    for f, g in pairs:
        lhs = bessel_norm(f * g, mu, p)
        rhs = lp_norm(f, p1) * bessel_norm(g, mu, q1) + bessel_norm(f, mu, p2) * lp_norm(g, q2)
        if rhs > 0.0:
            worst = max(worst, lhs / rhs)

    return InequalityReport(
        name="kato_ponce",
        samples=len(pairs),
        worst_ratio=clamp_ratio(worst),
        passed=bool(np.isfinite(worst) and worst <= ceiling),
        seed=seed,
        config={"mu": mu, "exponents": list(exponents), "ceiling": ceiling, "n": grid.n, "d": grid.d},
        notes=["ceiling is an engineering choice; no analytic constant is available"],
    )


class CompositionMap(str, Enum):
    """Smooth maps Psi(x, v) with bounded derivatives used by the chain-rule check."""
    IDENTITY = "identity"
    SINE = "sine"
    TANH = "tanh"
    SMOOTHED_ABS = "smoothed_abs"
    MODULATED = "modulated"

    def apply(self, u: SpectralField) -> SpectralField:
        v = u.values
        if self is CompositionMap.IDENTITY:
            return u
        if self is CompositionMap.SINE:
            out = np.sin(v)
        elif self is CompositionMap.TANH:
            out = np.tanh(v)
        elif self is CompositionMap.SMOOTHED_ABS:
            out = np.sqrt(1.0 + v ** 2) - 1.0
        else:
            out = (1.0 + 0.5 * np.cos(2.0 * np.pi * u.grid.coordinates[0])) * np.sin(v)
        return SpectralField(u.grid, out)


def verify_chain_rule(
    mu: float,
    p: float,
    psi: CompositionMap = CompositionMap.SINE,
    seed: int = 0,
    samples: int = 200,
    grid: Optional[PeriodicGrid] = None,
    eps: float = 0.1,
    fields: Optional[Sequence[SpectralField]] = None,
    ceiling: float = 10.0,
) -> InequalityReport:
    """Worst ratio ||Psi(., u)||_{mu-eps,p} / (||u||_{mu,p} + 1) over the corpus."""
    _check_exponent(p)
    grid = grid or make_grid(1, 64)
    corpus = list(fields) if fields is not None else random_corpus(grid, seed, samples)

    worst = 0.0
    for u in corpus:
        ratio = bessel_norm(psi.apply(u), mu - eps, p) / (bessel_norm(u, mu, p) + 1.0)
        worst = max(worst, ratio)

    return InequalityReport(
        name=f"chain_rule[{psi.value}]",
        samples=len(corpus),
        worst_ratio=clamp_ratio(worst),
        passed=bool(np.isfinite(worst) and worst <= ceiling),
        seed=seed,
        config={"mu": mu, "p": p, "eps": eps, "psi": psi.value, "n": grid.n, "d": grid.d},
    )


def _holder_quotient_in_time(traj, mu: float, p: float, exponent: float) -> float:
    grid = traj.grid
    transformed = np.stack([apply_multiplier(f, bessel_symbol(mu)).values for f in traj])
    if p != 2.0:
        transformed = np.stack([dealias(SpectralField(grid, v)).values for v in transformed])
    flat = transformed.reshape(len(traj), -1)

    worst = 0.0
    for lag in range(1, len(traj)):
        diff = flat[lag:] - flat[:-lag]
        norms = np.mean(np.abs(diff) ** p, axis=1) ** (1.0 / p)
        worst = max(worst, float(np.max(norms)) / (lag * traj.dt) ** exponent)
    return worst


def verify_time_embedding(
    traj,
    mu: float,
    p: float,
    s_exp: float,
    beta: float,
    refined=None,
) -> InequalityReport:
    """
    Discrete Hölder quotient sup ||u(t) - u(tau)||_{mu-2beta,p} / |t - tau|^(beta/s - 1/p).

    With a refined trajectory (same problem, more time levels) the check also
    requires the two quotients to agree within a factor 2.
    """
    _check_exponent(p)
    if not s_exp / p < beta < s_exp:
        raise ValueError(f"beta must lie in (s/p, s) = ({s_exp / p:g}, {s_exp:g}), got {beta}")
    if len(traj) < 16:
        raise ValueError("time embedding needs at least 16 time samples")

    exponent = beta / s_exp - 1.0 / p
    quotient = _holder_quotient_in_time(traj, mu - 2.0 * beta, p, exponent)
    constants = {"quotient": quotient}
    passed = bool(np.isfinite(quotient))

    if refined is not None:
        finer = _holder_quotient_in_time(refined, mu - 2.0 * beta, p, exponent)
        constants["quotient_refined"] = finer
        low, high = sorted([quotient, finer])
        spread = high / low if low > 0.0 else (1.0 if high == 0.0 else np.inf)
        constants["refinement_spread"] = float(spread)
        passed = passed and bool(spread < 2.0)

    return InequalityReport(
        name="time_embedding",
        samples=len(traj) * (len(traj) - 1) // 2,
        worst_ratio=clamp_ratio(quotient),
        fitted_exponent=exponent,
        passed=passed,
        config={"mu": mu, "p": p, "s": s_exp, "beta": beta},
        constants=constants,
    )


def verify_norm_equivalence(
    mu: float,
    p: float,
    seed: int = 0,
    samples: int = 200,
    grid: Optional[PeriodicGrid] = None,
    bounds: Tuple[float, float] = (0.1, 10.0),
) -> InequalityReport:
    """Ratio ||f||_{mu,p} / (||f||_p + ||(-Delta)^(mu/2) f||_p) stays inside bounds."""
    _check_exponent(p)
    if mu <= 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    grid = grid or make_grid(1, 64)
    corpus = random_corpus(grid, seed, samples)

    ratios = []
    for f in corpus:
        denominator = lp_norm(f, p) + lp_norm(apply_multiplier(f, fractional_symbol(mu / 2.0)), p)
        ratios.append(bessel_norm(f, mu, p) / denominator)
    low, high = float(min(ratios)), float(max(ratios))

    return InequalityReport(
        name="norm_equivalence",
        samples=len(corpus),
        worst_ratio=clamp_ratio(max(high, 1.0 / low)),
        passed=bool(bounds[0] <= low and high <= bounds[1]),
        seed=seed,
        config={"mu": mu, "p": p, "bounds": list(bounds), "n": grid.n, "d": grid.d},
        constants={"min_ratio": low, "max_ratio": high},
    )


def verify_sobolev_embedding(
    mu: float,
    p: float,
    seed: int = 0,
    samples: int = 200,
    grid: Optional[PeriodicGrid] = None,
) -> InequalityReport:
    """Worst ratio sup|f| / ||f||_{mu,p} for p mu > d."""
    _check_exponent(p)
    grid = grid or make_grid(1, 64)
    if p * mu <= grid.d:
        raise ValueError(f"embedding into continuous functions needs p*mu > d, got {p * mu:g}")
    corpus = random_corpus(grid, seed, samples)
    worst = max(f.sup_norm() / bessel_norm(f, mu, p) for f in corpus)

    return InequalityReport(
        name="sobolev_embedding",
        samples=len(corpus),
        worst_ratio=clamp_ratio(worst),
        passed=bool(np.isfinite(worst)),
        seed=seed,
        config={"mu": mu, "p": p, "n": grid.n, "d": grid.d},
    )


def smooth_test_functions(grid: PeriodicGrid, count: int = 8) -> List[SpectralField]:
    """
    The constant, then cos/sin pairs of the smallest wavevectors (one of each +-k),
    truncated to count functions.
    """
    waves = grid.wavenumbers.reshape(grid.d, -1).T
    norms = np.sqrt(np.sum(waves.astype(float) ** 2, axis=1))
    order = np.lexsort((*waves.T[::-1], norms))

    functions = [SpectralField.constant(grid, 1.0)]
    seen = set()
    for index in order:
        k = tuple(int(v) for v in waves[index])
        if not any(k) or tuple(-v for v in k) in seen:
            continue
        seen.add(k)
        phase = 2.0 * np.pi * np.tensordot(np.asarray(k, dtype=float), grid.coordinates, axes=1)
        functions.append(SpectralField(grid, np.cos(phase)))
        functions.append(SpectralField(grid, np.sin(phase)))
        if len(functions) >= count:
            break
    return functions[:count]
