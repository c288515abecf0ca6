"""
Problem data for the fractional MFG system: the Hamiltonian family, nonlocal
couplings, initial/terminal data, assumption verifiers and the
Monge-Kantorovich distance d_1.

Hamiltonian family:  H(x, p) = c(x) ((1 + |p|^2)^(gamma/2) - 1),  gamma in (1, 2].
Couplings:           F[m] = K * m with K_hat = k_hat (generic), k_hat^2 (monotone)
                     or -k_hat^2 (anti-monotone), k_hat Gaussian and band-limited.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Optional, Tuple

import numpy as np
import ot

from .errors import SolverError
from .function_spaces import random_field
from .reports import InequalityReport, clamp_ratio
from .semigroup import EvolutionOperator
from .spectral_core import (
    TWO_PI,
    PeriodicGrid,
    SpectralField,
    VectorField,
    gradient,
    hessian,
    make_grid,
    second_differences,
)

logger = logging.getLogger(__name__)


class HamiltonianOrder(str, Enum):
    VALUE = "value"
    GRAD_P = "grad_p"
    HESS_PP = "hess_pp"


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """
    H(x, p) = c(x) ((1 + |p|^2)^(gamma/2) - 1).

    H(x, 0) = 0, H >= 0 and H is convex in p. A field c identically zero gives
    H = 0 (the "bypassed" Hamiltonian used by linear test problems).
    """

    gamma: float
    c_field: SpectralField

    def __post_init__(self):
        if not 1.0 < self.gamma <= 2.0:
            raise ValueError(f"gamma must lie in (1, 2], got {self.gamma}")
        if self.c_field.min() < 0.0:
            raise ValueError("c(x) must be nonnegative")

    @classmethod
    def constant(cls, grid: PeriodicGrid, gamma: float, value: float = 1.0) -> "Hamiltonian":
        return cls(gamma, SpectralField.constant(grid, value))

    @property
    def grid(self) -> PeriodicGrid:
        return self.c_field.grid

    @property
    def bypassed(self) -> bool:
        return self.c_field.sup_norm() == 0.0

    def _growth(self, p: VectorField) -> Tuple[np.ndarray, np.ndarray]:
        """(q^(gamma/2) - 1, gamma q^(gamma/2 - 1)) with q = 1 + |p|^2."""
        sq = np.sum(p.as_array() ** 2, axis=0)
        half = 0.5 * self.gamma
        log_q = np.log1p(sq)
        return np.expm1(half * log_q), self.gamma * np.exp((half - 1.0) * log_q)

    def value(self, p: VectorField) -> SpectralField:
        lifted, _ = self._growth(p)
        return SpectralField(p.grid, self.c_field.values * lifted)

    def grad_p(self, p: VectorField) -> VectorField:
        _, slope = self._growth(p)
        return VectorField.from_array(p.grid, self.c_field.values * slope * p.as_array())

    def hess_pp(self, p: VectorField) -> np.ndarray:
        """D^2_pp H per node, shape (d, d, n, ..., n)."""
        arr = p.as_array()
        q = 1.0 + np.sum(arr ** 2, axis=0)
        _, slope = self._growth(p)
        d = p.grid.d
        eye = np.eye(d).reshape((d, d) + (1,) * d)
        outer = arr[:, None] * arr[None, :]
        return self.c_field.values * slope * (eye + (self.gamma - 2.0) * outer / q)

    def grad_x(self, p: VectorField) -> VectorField:
        lifted, _ = self._growth(p)
        return VectorField.from_array(p.grid, gradient(self.c_field).as_array() * lifted)

    def hess_px(self, p: VectorField) -> np.ndarray:
        """D^2_px H, entry (i, j) = d_{x_j} c * gamma q^(gamma/2-1) p_i."""
        _, slope = self._growth(p)
        dc = gradient(self.c_field).as_array()
        return slope * p.as_array()[:, None] * dc[None, :]

    def hess_xx(self, p: VectorField) -> np.ndarray:
        lifted, _ = self._growth(p)
        return hessian(self.c_field) * lifted

    def evaluate(self, p: VectorField, order: HamiltonianOrder = HamiltonianOrder.VALUE):
        order = HamiltonianOrder(order)
        if order is HamiltonianOrder.VALUE:
            return self.value(p)
        if order is HamiltonianOrder.GRAD_P:
            return self.grad_p(p)
        return self.hess_pp(p)


def evaluate_hamiltonian(ham: Hamiltonian, p: VectorField, order: HamiltonianOrder = HamiltonianOrder.VALUE):
    """
    Pointwise closed forms of the Hamiltonian family.

    Args:
        ham: Hamiltonian
        p: Momentum field on the Hamiltonian's grid
        order: value -> SpectralField, grad_p -> VectorField,
            hess_pp -> array of shape (d, d, n, ..., n)

    Examples:
        >>> grid = make_grid(1, 32)
        >>> ham = Hamiltonian.constant(grid, gamma=2.0)
        >>> p = VectorField.from_array(grid, np.full((1, 32), 3.0))
        >>> evaluate_hamiltonian(ham, p).max()   # |p|^2 = 9
    """
    if p.grid != ham.grid:
        raise ValueError("fields live on different grids")
    return ham.evaluate(p, order)


def verify_hamiltonian_assumptions(
    ham: Hamiltonian,
    seed: int = 0,
    samples: int = 2000,
    p_cap: float = 10.0,
) -> InequalityReport:
    """
    Sampled growth constants of the Hamiltonian.

    Samples (x, p, xi) with x a grid node, |p| <= p_cap and |xi| = 1, and reports
      C_H        lower growth constant, min of the Euler-type ratio
                 (D_pH.p - H)/|p|^gamma and of xi.D_ppH.xi/|p|^(gamma-2), both on |p| >= 1
      c_H        smallest offset making D_pH.p - H >= C_H |p|^gamma - c_H hold
      C_H_upper  sup |D_pH| / (1 + |p|)^(gamma-1)
      C_tilde_H  sup of the x-derivative ratios and of the lower Hessian defect
    pass = all constants finite, C_H > 0 and D_ppH positive semidefinite.
    """
    grid = ham.grid
    d = grid.d
    rng = np.random.default_rng(seed)
    nodes = rng.integers(0, grid.size, size=samples)
    radii = p_cap * rng.random(samples)
    radii[: max(samples // 50, 1)] = 0.0
    directions = rng.standard_normal((samples, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    p = directions * radii[:, None]
    xi = rng.standard_normal((samples, d))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)

    c = ham.c_field.values.ravel()[nodes]
    dc = gradient(ham.c_field).as_array().reshape(d, -1)[:, nodes].T
    d2c = hessian(ham.c_field).reshape(d, d, -1)[:, :, nodes].transpose(2, 0, 1)

    gamma = ham.gamma
    sq = radii ** 2
    q = 1.0 + sq
    lifted = np.expm1(0.5 * gamma * np.log1p(sq))
    slope = gamma * q ** (0.5 * gamma - 1.0)
    H = c * lifted
    DpH = (c * slope)[:, None] * p
    Hpp = (c * slope)[:, None, None] * (np.eye(d)[None] + (gamma - 2.0) * p[:, :, None] * p[:, None, :] / q[:, None, None])
    DxH = dc * lifted[:, None]
    Hpx = slope[:, None, None] * p[:, :, None] * dc[:, None, :]
    Hxx = d2c * lifted[:, None, None]

    large = radii >= 1.0
    euler = np.einsum("sd,sd->s", DpH, p) - H
    curvature = np.einsum("si,sij,sj->s", xi, Hpp, xi)
    C_H = float(min(np.min(euler[large] / radii[large] ** gamma), np.min(curvature[large] / radii[large] ** (gamma - 2.0))))
    c_H = float(max(0.0, np.max(C_H * radii ** gamma - euler)))

    weight = 1.0 + radii
    C_H_upper = float(np.max(np.linalg.norm(DpH, axis=1) / weight ** (gamma - 1.0)))
    C_tilde_H = float(max(
        np.max(np.linalg.norm(DxH, axis=1) / weight ** gamma),
        np.max(np.linalg.norm(Hpx, axis=(1, 2)) / weight ** (gamma - 1.0)),
        np.max(np.linalg.norm(Hxx, axis=(1, 2)) / weight ** gamma),
        np.max(np.maximum(C_H * radii[large] ** (gamma - 2.0) - curvature[large], 0.0)),
    ))
    min_eig = float(np.min(np.linalg.eigvalsh(Hpp)))

    constants = {"C_H": C_H, "c_H": c_H, "C_H_upper": C_H_upper, "C_tilde_H": C_tilde_H, "min_eig_pp": min_eig}
    passed = bool(all(np.isfinite(v) for v in constants.values()) and C_H > 0.0 and min_eig >= -1e-10)
    return InequalityReport(
        name="hamiltonian_assumptions",
        samples=samples,
        worst_ratio=clamp_ratio(max(C_H_upper, C_tilde_H)),
        passed=passed,
        seed=seed,
        config={"gamma": gamma, "p_cap": p_cap, "n": grid.n, "d": d},
        constants=constants,
        notes=["Hessian lower bound sampled on |p| >= 1 only; |p|^(gamma-2) is singular at p = 0"],
    )


class CouplingMode(str, Enum):
    MONOTONE = "monotone"
    GENERIC = "generic"
    ANTI = "anti"


@dataclass(frozen=True, eq=False)
class Coupling:
    """Nonlocal coupling F[m] = K * m, the effective kernel K set by the mode."""

    grid: PeriodicGrid
    kernel_hat: np.ndarray
    mode: CouplingMode = CouplingMode.MONOTONE

    @classmethod
    def gaussian(
        cls,
        grid: PeriodicGrid,
        kappa: float = 2.0,
        amplitude: float = 1.0,
        mode: CouplingMode = CouplingMode.MONOTONE,
    ) -> "Coupling":
        """k_hat(k) = amplitude exp(-|k|^2 / kappa^2) on |k| <= n/4, zero above."""
        if kappa <= 0.0:
            raise ValueError(f"kappa must be positive, got {kappa}")
        k = grid.k_norm
        kernel_hat = np.where(k <= grid.n // 4, amplitude * np.exp(-(k / kappa) ** 2), 0.0)
        return cls(grid, kernel_hat, CouplingMode(mode))

    @classmethod
    def null(cls, grid: PeriodicGrid) -> "Coupling":
        return cls(grid, np.zeros(grid.shape), CouplingMode.GENERIC)

    @property
    def kernel(self) -> SpectralField:
        return SpectralField.from_coeffs(self.grid, self.kernel_hat)

    @cached_property
    def multiplier(self) -> np.ndarray:
        if self.mode is CouplingMode.GENERIC:
            return self.kernel_hat
        if self.mode is CouplingMode.MONOTONE:
            return self.kernel_hat ** 2
        return -self.kernel_hat ** 2

    @property
    def is_constant(self) -> bool:
        """True when F[m] does not depend on m beyond its mass."""
        nonzero = self.multiplier.copy()
        nonzero.flat[0] = 0.0
        return not np.any(nonzero)

    @cached_property
    def c_f(self) -> float:
        """sup |K|, so that |F[m]| <= c_f * integral |m|."""
        return SpectralField.from_coeffs(self.grid, self.multiplier).sup_norm()

    def apply(self, m: SpectralField) -> SpectralField:
        if m.grid != self.grid:
            raise ValueError("fields live on different grids")
        drift = abs(m.mean() - 1.0)
        if drift > 1e-8:
            logger.warning("coupling applied to a density with mass %.12g", m.mean())
        out = SpectralField.from_coeffs(self.grid, m.coeffs * self.multiplier)
        bound = self.c_f * float(np.mean(np.abs(m.values)))
        if out.sup_norm() > bound * (1.0 + 1e-8) + 1e-12:
            raise SolverError("coupling", f"|F[m]| = {out.sup_norm():.6g} exceeds c_f * |m|_1 = {bound:.6g}")
        return out


def coupling_apply(coupling: Coupling, m: SpectralField) -> SpectralField:
    """
    Evaluate F[m] by mode-wise products with the kernel coefficients.

    Examples:
        >>> grid = make_grid(1, 64)
        >>> coupling = Coupling.gaussian(grid, kappa=2.0, mode=CouplingMode.GENERIC)
        >>> coupling_apply(coupling, uniform_density(grid)).mean()   # k_hat(0) = 1
    """
    return coupling.apply(m)


def monotonicity_integral(coupling: Coupling, m1: SpectralField, m2: SpectralField) -> float:
    """Grid value of integral (F[m1] - F[m2]) (m1 - m2) dx."""
    return (coupling.apply(m1) - coupling.apply(m2)).inner(m1 - m2)


def c2_surrogate_norm(f: SpectralField) -> float:
    """sup |f| + sup |Df| + sup of |centered second differences|, standing in for a C^(2+alpha) norm."""
    return f.sup_norm() + gradient(f).sup_norm() + float(np.max(np.abs(second_differences(f))))


def random_density(
    grid: PeriodicGrid,
    rng: np.random.Generator,
    amplitude: float = 0.5,
    max_mode: int = 4,
) -> SpectralField:
    """Smooth positive density exp(amplitude * g) / mean, g a unit random field."""
    g = random_field(grid, rng, max_mode=max_mode)
    values = np.exp(amplitude * g.values)
    return SpectralField(grid, values / np.mean(values))


def _check_densities(m1: SpectralField, m2: SpectralField):
    if m1.grid != m2.grid:
        raise ValueError("fields live on different grids")
    for name, m in (("m1", m1), ("m2", m2)):
        if m.min() < -1e-8:
            raise ValueError(f"{name} is not a density: minimum {m.min():.3g}")
    if abs(m1.mean() - m2.mean()) > 1e-8:
        raise ValueError(f"mass mismatch: {m1.mean():.12g} vs {m2.mean():.12g}")


def _torus_cost(grid: PeriodicGrid) -> np.ndarray:
    points = grid.coordinates.reshape(grid.d, -1).T
    delta = np.abs(points[:, None, :] - points[None, :, :])
    delta = np.minimum(delta, 1.0 - delta)
    return np.sqrt(np.sum(delta ** 2, axis=-1))


def wasserstein1(m1: SpectralField, m2: SpectralField, reg: float = 1e-3) -> float:
    """
    Monge-Kantorovich distance between two grid densities.

    d=1 is exact: with D the cumulative difference of the node masses, the periodic
    distance is min_c h * sum |D - c|, minimized at the median of D. d=2 uses
    entropic optimal transport (Sinkhorn with epsilon scaling down to reg) on the
    geodesic torus cost; an approximation, used as a diagnostic only.
    """
    _check_densities(m1, m2)
    grid = m1.grid
    if grid.d == 1:
        cumulative = np.cumsum(m1.values - m2.values) * grid.h
        return float(grid.h * np.sum(np.abs(cumulative - np.median(cumulative))))

    a = np.clip(m1.values.ravel(), 0.0, None)
    b = np.clip(m2.values.ravel(), 0.0, None)
    cost = _torus_cost(grid)
    value = ot.sinkhorn2(
        a / a.sum(),
        b / b.sum(),
        cost,
        reg,
        method="sinkhorn_epsilon_scaling",
        numItermax=2000,
        stopThr=1e-9,
    )
    return float(np.asarray(value)) * m1.mean()


def verify_coupling_assumptions(
    coupling: Coupling,
    seed: int = 0,
    samples: int = 100,
    reg: float = 1e-3,
) -> InequalityReport:
    """
    Lipschitz constant of F from d_1 into the C^2 surrogate norm, sampled on pairs of
    random smooth densities. pass = bounded (finite) worst ratio.
    """
    grid = coupling.grid
    rng = np.random.default_rng(seed)
    worst = 0.0
    used = 0
    for _ in range(samples):
        m1 = random_density(grid, rng)
        m2 = random_density(grid, rng)
        distance = wasserstein1(m1, m2, reg=reg)
        if distance == 0.0:
            continue
        worst = max(worst, c2_surrogate_norm(coupling.apply(m1) - coupling.apply(m2)) / distance)
        used += 1

    notes = ["C^2 surrogate (sup, gradient, second differences) stands in for the C^(2+alpha) norm"]
    if grid.d == 2:
        notes.append(f"d_1 approximated by Sinkhorn with regularization {reg:g}")
    return InequalityReport(
        name=f"coupling_assumptions[{coupling.mode.value}]",
        samples=used,
        worst_ratio=clamp_ratio(worst),
        passed=bool(np.isfinite(worst)),
        seed=seed,
        config={"mode": coupling.mode.value, "n": grid.n, "d": grid.d},
        constants={"C_F": worst, "c_f": coupling.c_f},
        notes=notes,
    )


class FieldKind(str, Enum):
    """Closed-form initial/terminal data accepted by problem files."""
    CONSTANT = "constant"
    COSINE = "cosine"
    BUMP = "bump"
    UNIFORM = "uniform"

    def build(self, grid: PeriodicGrid, params: Optional[Dict[str, Any]] = None) -> SpectralField:
        params = dict(params or {})
        if self is FieldKind.CONSTANT:
            return constant_field(grid, **params)
        if self is FieldKind.COSINE:
            return cosine_field(grid, **params)
        if self is FieldKind.BUMP:
            return bump_density(grid, **params)
        return uniform_density(grid, **params)


def constant_field(grid: PeriodicGrid, value: float = 0.0) -> SpectralField:
    return SpectralField.constant(grid, value)


def cosine_field(
    grid: PeriodicGrid,
    mean: float = 0.0,
    amplitude: float = 1.0,
    mode: int = 1,
    axis: int = 0,
) -> SpectralField:
    """mean + amplitude * cos(2 pi mode x_axis)."""
    if not 0 <= axis < grid.d:
        raise ValueError(f"axis must lie in [0, {grid.d}), got {axis}")
    return SpectralField(grid, mean + amplitude * np.cos(TWO_PI * mode * grid.coordinates[axis]))


def bump_density(grid: PeriodicGrid, center=0.5, width: float = 0.05) -> SpectralField:
    """Periodized Gaussian of the given width, normalized to grid mean 1."""
    if width <= 0.0:
        raise ValueError(f"width must be positive, got {width}")
    centers = np.broadcast_to(np.asarray(center, dtype=float), (grid.d,))
    log_values = np.zeros(grid.shape)
    for axis in range(grid.d):
        delta = grid.coordinates[axis] - centers[axis]
        delta = delta - np.round(delta)
        log_values = log_values - 0.5 * (delta / width) ** 2
    values = np.exp(log_values)
    return SpectralField(grid, values / np.mean(values))


def uniform_density(grid: PeriodicGrid) -> SpectralField:
    return SpectralField.constant(grid, 1.0)


@dataclass(frozen=True, eq=False)
class MFGProblem:
    """
    Data of the system
        -d_t u - sigma Delta u + (-Delta)^s u + H(x, Du) = F[m(t)](x),   u(T) = uT
         d_t m - sigma Delta m + (-Delta)^s m - div(m D_pH(x, Du)) = 0, m(0) = m0
    """

    s_exp: float
    sigma: float
    T: float
    ham: Hamiltonian
    coupling: Coupling
    m0: SpectralField
    uT: SpectralField

    def __post_init__(self):
        if not 0.0 < self.s_exp < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s_exp}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.T <= 0.0:
            raise ValueError(f"T must be positive, got {self.T}")
        grid = self.m0.grid
        if any(g != grid for g in (self.uT.grid, self.ham.grid, self.coupling.grid)):
            raise ValueError("problem data live on different grids")
        lowest = int(np.argmin(self.m0.values))
        if self.m0.values.flat[lowest] < 0.0:
            raise ValueError(f"(I): m0 negative at node {lowest}")
        if abs(self.m0.mean() - 1.0) > 1e-8:
            raise ValueError(f"(I): ∫m₀(x)dx = 1 violated (grid mean {self.m0.mean():.12g})")

    @property
    def grid(self) -> PeriodicGrid:
        return self.m0.grid

    @property
    def operator(self) -> EvolutionOperator:
        return EvolutionOperator(self.s_exp, self.sigma)

    def with_sigma(self, sigma: float) -> "MFGProblem":
        return replace(self, sigma=sigma)

    def with_horizon(self, T: float) -> "MFGProblem":
        return replace(self, T=T)

    def with_coupling(self, coupling: Coupling) -> "MFGProblem":
        return replace(self, coupling=coupling)

    def describe(self) -> Dict[str, Any]:
        return {
            "d": self.grid.d,
            "n": self.grid.n,
            "s": self.s_exp,
            "sigma": self.sigma,
            "T": self.T,
            "gamma": self.ham.gamma,
            "coupling_mode": self.coupling.mode.value,
        }


def benchmark_problem(
    d: int = 1,
    n: int = 64,
    s_exp: float = 0.75,
    sigma: float = 0.0,
    T: float = 0.5,
    gamma: float = 1.5,
    mode: CouplingMode = CouplingMode.MONOTONE,
    kappa: float = 2.0,
) -> MFGProblem:
    """
    The monotone benchmark: c = 1, Gaussian kernel, m0 = 1 + cos(2 pi x_1)/2, uT = 0.

    Examples:
        >>> problem = benchmark_problem()
        >>> problem.describe()["coupling_mode"]
        'monotone'
    """
    grid = make_grid(d, n)
    return MFGProblem(
        s_exp=s_exp,
        sigma=sigma,
        T=T,
        ham=Hamiltonian.constant(grid, gamma),
        coupling=Coupling.gaussian(grid, kappa=kappa, mode=mode),
        m0=cosine_field(grid, mean=1.0, amplitude=0.5),
        uT=constant_field(grid, 0.0),
    )
