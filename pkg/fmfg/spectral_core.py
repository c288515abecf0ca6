"""
Periodic grids, discrete Fourier analysis and Fourier-multiplier operators on the
flat torus [0, 1)^d.

Fields are stored by their node values; Fourier coefficients are normalized so that
the zero mode equals the grid mean, i.e. u(x) = sum_k u_hat(k) exp(2 pi i k.x).
All integrals over the torus are grid means (rectangle rule).
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Dict, Iterator, Sequence, Tuple, Union

import numpy as np
from scipy import fft

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PeriodicGrid:
    """
    Uniform grid on the unit torus with n points per dimension.

    Node j sits at x_j = j * h with h = 1/n. Wavenumbers follow FFT ordering,
    k in {0, 1, ..., n/2 - 1, -n/2, ..., -1}.
    """

    d: int
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if self.n % 2 != 0:
            raise ValueError(f"n must be even, got {self.n}")
        if self.n < 8:
            raise ValueError(f"n must be at least 8, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (d, n, ..., n)."""
        axis = np.arange(self.n) * self.h
        return np.stack(np.meshgrid(*([axis] * self.d), indexing="ij"))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavevectors k, shape (d, n, ..., n)."""
        k1d = np.rint(fft.fftfreq(self.n, d=1.0 / self.n)).astype(int)
        return np.stack(np.meshgrid(*([k1d] * self.d), indexing="ij"))

    @cached_property
    def k_norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.wavenumbers.astype(float) ** 2, axis=0))

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes with some component equal to -n/2."""
        return np.any(self.wavenumbers == -self.n // 2, axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True on modes kept by the two-thirds rule (all |k_j| <= n/3)."""
        return np.all(np.abs(self.wavenumbers) <= self.n / 3.0, axis=0)


def make_grid(d: int, n: int) -> PeriodicGrid:
    """
    Build the periodic grid used by every field in a run.

    Args:
        d: Spatial dimension, 1 or 2
        n: Points per dimension, even and at least 8

    Returns:
        PeriodicGrid with spacing h = 1/n

    Examples:
        >>> make_grid(1, 64).h
        0.015625
        >>> make_grid(2, 32).size
        1024
    """
    return PeriodicGrid(d=d, n=n)


class SpectralField:
    """
    Real periodic field on a PeriodicGrid.

    Values are read-only after construction. Fourier coefficients are computed
    on first access and memoized; the cache is never invalidated because the
    values never change.
    """

    def __init__(self, grid: PeriodicGrid, values):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            values = values.reshape(grid.shape)
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    @classmethod
    def from_coeffs(cls, grid: PeriodicGrid, coeffs: np.ndarray) -> "SpectralField":
        """Build a field from coefficients normalized so that coeffs[0] is the mean."""
        values = np.real(fft.ifftn(coeffs)) * grid.size
        return cls(grid, values)

    @classmethod
    def constant(cls, grid: PeriodicGrid, value: float) -> "SpectralField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: PeriodicGrid, func: Callable[..., np.ndarray]) -> "SpectralField":
        """Sample func(x1, ..., xd) on the grid nodes."""
        return cls(grid, func(*grid.coordinates))

    @cached_property
    def coeffs(self) -> np.ndarray:
        c = fft.fftn(self.values) / self.grid.size
        c.setflags(write=False)
        return c

    def mean(self) -> float:
        return float(np.mean(self.values))

    def max(self) -> float:
        return float(np.max(self.values))

    def min(self) -> float:
        return float(np.min(self.values))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2_norm(self) -> float:
        return float(np.sqrt(np.mean(self.values ** 2)))

    def inner(self, other: "SpectralField") -> float:
        """Grid mean of the pointwise product."""
        self._check_grid(other)
        return float(np.mean(self.values * other.values))

    def shift(self, offsets: Sequence[int]) -> "SpectralField":
        """Translate by whole grid cells: result(x) = self(x - offsets*h)."""
        return SpectralField(self.grid, np.roll(self.values, tuple(offsets), axis=tuple(range(self.grid.d))))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def _check_grid(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def _operand(self, other) -> Union[np.ndarray, float]:
        if isinstance(other, SpectralField):
            self._check_grid(other)
            return other.values
        return other

    def __add__(self, other) -> "SpectralField":
        return SpectralField(self.grid, self.values + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other) -> "SpectralField":
        return SpectralField(self.grid, self.values - self._operand(other))

    def __rsub__(self, other) -> "SpectralField":
        return SpectralField(self.grid, self._operand(other) - self.values)

    def __mul__(self, other) -> "SpectralField":
        return SpectralField(self.grid, self.values * self._operand(other))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "SpectralField":
        return SpectralField(self.grid, self.values / self._operand(other))

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.values)

    def __repr__(self) -> str:
        return f"SpectralField(d={self.grid.d}, n={self.grid.n}, mean={self.mean():.6g})"


@dataclass(frozen=True)
class VectorField:
    """d SpectralFields on one grid (gradients, drifts, D_pH)."""

    components: Tuple[SpectralField, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("a vector field needs at least one component")
        grid = self.components[0].grid
        if any(c.grid != grid for c in self.components):
            raise ValueError("vector components live on different grids")

    @property
    def grid(self) -> PeriodicGrid:
        return self.components[0].grid

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self) -> Iterator[SpectralField]:
        return iter(self.components)

    def __getitem__(self, j: int) -> SpectralField:
        return self.components[j]

    def as_array(self) -> np.ndarray:
        """Stacked component values, shape (d, n, ..., n)."""
        return np.stack([c.values for c in self.components])

    def magnitude(self) -> SpectralField:
        return SpectralField(self.grid, np.sqrt(np.sum(self.as_array() ** 2, axis=0)))

    def dot(self, other: "VectorField") -> SpectralField:
        return SpectralField(self.grid, np.sum(self.as_array() * other.as_array(), axis=0))

    def scale(self, factor: Union[SpectralField, float]) -> "VectorField":
        return VectorField(tuple(c * factor for c in self.components))

    def __neg__(self) -> "VectorField":
        return VectorField(tuple(-c for c in self.components))

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(tuple(a - b for a, b in zip(self.components, other.components)))

    def sup_norm(self) -> float:
        return self.magnitude().sup_norm()

    def is_finite(self) -> bool:
        return all(c.is_finite() for c in self.components)

    @classmethod
    def from_array(cls, grid: PeriodicGrid, array: np.ndarray) -> "VectorField":
        return cls(tuple(SpectralField(grid, a) for a in array))

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "VectorField":
        return cls(tuple(SpectralField.constant(grid, 0.0) for _ in range(grid.d)))


@dataclass(frozen=True)
class FourierSymbol:
    """
    Fourier multiplier k -> lambda(k).

    The evaluator maps the integer wavevector array of shape (d, n, ..., n) to the
    symbol values. Each instance memoizes its per-grid evaluation; the factories
    below are cached, so equal parameters give the same object and share that memo.
    """

    label: str
    evaluator: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    zero_nyquist: bool = False
    identity: bool = False
    _tables: Dict[PeriodicGrid, np.ndarray] = field(default_factory=dict, init=False, compare=False, repr=False)

    def on_grid(self, grid: PeriodicGrid) -> np.ndarray:
        table = self._tables.get(grid)
        if table is None:
            table = _evaluate_symbol(self, grid)
            self._tables[grid] = table
        return table


def _evaluate_symbol(sym: FourierSymbol, grid: PeriodicGrid) -> np.ndarray:
    values = np.asarray(sym.evaluator(grid.wavenumbers))
    values = np.broadcast_to(values, grid.shape).copy()
    bad = ~np.isfinite(values)
    if np.any(bad):
        k = tuple(int(w[bad][0]) for w in grid.wavenumbers)
        raise ValueError(f"non-finite value of symbol '{sym.label}' at k={k}")
    if sym.zero_nyquist:
        values[grid.nyquist_mask] = 0.0
    values.setflags(write=False)
    return values


def _k_norm(k: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(k.astype(float) ** 2, axis=0))


IDENTITY_SYMBOL = FourierSymbol("identity", lambda k: np.ones(k.shape[1:]), identity=True)


@lru_cache(maxsize=None)
def fractional_symbol(order: float) -> FourierSymbol:
    """(2 pi |k|)^(2 order), the symbol of (-Delta)^order, Nyquist row zeroed."""
    if order == 0:
        return IDENTITY_SYMBOL
    return FourierSymbol(
        f"(-Delta)^{order!r}",
        lambda k: (TWO_PI * _k_norm(k)) ** (2.0 * order),
        zero_nyquist=True,
    )


@lru_cache(maxsize=None)
def bessel_symbol(mu: float) -> FourierSymbol:
    """(1 + 4 pi^2 |k|^2)^(mu/2), the symbol of (I - Delta)^(mu/2)."""
    if mu == 0:
        return IDENTITY_SYMBOL
    return FourierSymbol(
        f"(I-Delta)^({mu!r}/2)",
        lambda k: (1.0 + (TWO_PI * _k_norm(k)) ** 2) ** (mu / 2.0),
    )


@lru_cache(maxsize=None)
def laplacian_symbol() -> FourierSymbol:
    """-(2 pi |k|)^2, the symbol of the Laplacian."""
    return FourierSymbol("Delta", lambda k: -(TWO_PI * _k_norm(k)) ** 2, zero_nyquist=True)


def apply_multiplier(f: SpectralField, sym: FourierSymbol) -> SpectralField:
    """
    Multiply the coefficients of f by sym(k) and return to physical space.

    The identity symbol returns f itself, so values are bit-identical.
    """
    if sym.identity:
        return f
    return SpectralField.from_coeffs(f.grid, f.coeffs * sym.on_grid(f.grid))


def fractional_laplacian(f: SpectralField, s_exp: float) -> SpectralField:
    """
    Spectral fractional Laplacian (-Delta)^s on the torus.

    Args:
        f: Input field
        s_exp: Fractional order in (0, 1)

    Returns:
        Field with coefficient k scaled by (2 pi |k|)^(2 s); zero mode annihilated

    Examples:
        >>> grid = make_grid(1, 64)
        >>> f = SpectralField.from_function(grid, lambda x: np.cos(2 * np.pi * x))
        >>> g = fractional_laplacian(f, 0.5)   # 2 pi cos(2 pi x)
    """
    if not 0.0 < s_exp < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s_exp}")
    return apply_multiplier(f, fractional_symbol(s_exp))


@lru_cache(maxsize=32)
def _derivative_symbols(grid: PeriodicGrid) -> np.ndarray:
    """2 pi i k_j per direction, with the Nyquist entry of k_j zeroed."""
    k = grid.wavenumbers.astype(float)
    k[k == -grid.n // 2] = 0.0
    sym = 1j * TWO_PI * k
    sym.setflags(write=False)
    return sym


def gradient(f: SpectralField) -> VectorField:
    """Spectral gradient: component j has coefficients 2 pi i k_j f_hat(k)."""
    sym = _derivative_symbols(f.grid)
    return VectorField(tuple(SpectralField.from_coeffs(f.grid, f.coeffs * sym[j]) for j in range(f.grid.d)))


def divergence(v: VectorField) -> SpectralField:
    """Spectral divergence; the zero mode of the output is exactly zero."""
    grid = v.grid
    sym = _derivative_symbols(grid)
    total = np.zeros(grid.shape, dtype=complex)
    for j, comp in enumerate(v.components):
        total += comp.coeffs * sym[j]
    total.flat[0] = 0.0
    return SpectralField.from_coeffs(grid, total)


def hessian(f: SpectralField) -> np.ndarray:
    """Spectral Hessian values, shape (d, d, n, ..., n)."""
    grad = gradient(f)
    return np.stack([gradient(g).as_array() for g in grad.components])


def dealias(f: SpectralField) -> SpectralField:
    """Two-thirds rule: zero every mode with some |k_j| > n/3. Idempotent."""
    return SpectralField.from_coeffs(f.grid, f.coeffs * f.grid.dealias_mask)


def _difference_directions(d: int) -> Tuple[Tuple[int, ...], ...]:
    if d == 1:
        return ((1,),)
    return ((1, 0), (0, 1), (1, 1), (1, -1))


def second_differences(f: SpectralField) -> np.ndarray:
    """
    Centered second differences (f(x+h xi) - 2 f(x) + f(x-h xi)) / (h^2 |xi|^2).

    Directions are the axes, plus the two diagonals in d=2. Shape (ndirs, n, ..., n).
    """
    grid = f.grid
    axes = tuple(range(grid.d))
    out = []
    for xi in _difference_directions(grid.d):
        xi_arr = np.asarray(xi)
        forward = np.roll(f.values, tuple(-xi_arr), axis=axes)
        backward = np.roll(f.values, tuple(xi_arr), axis=axes)
        out.append((forward - 2.0 * f.values + backward) / (grid.h ** 2 * float(xi_arr @ xi_arr)))
    return np.stack(out)


def second_difference_hessian_bound(f: SpectralField) -> np.ndarray:
    """
    Per-direction maxima of centered second differences, the discrete surrogate of
    the one-sided bound D^2 u <= C I.

    Examples:
        >>> grid = make_grid(1, 64)
        >>> f = SpectralField.from_function(grid, lambda x: np.cos(2 * np.pi * x))
        >>> second_difference_hessian_bound(f)   # ~[4 pi^2], attained at x = 1/2
    """
    sd = second_differences(f)
    return sd.reshape(sd.shape[0], -1).max(axis=1)
