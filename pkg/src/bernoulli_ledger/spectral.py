"""Periodic grids, grid-sampled fields and exact spectral operators.

Everything lives on the torus [0, 2pi)^dim sampled on a uniform grid.  Fields
are stored in physical space; the Fourier representation is obtained on
demand with real FFTs (numpy.fft, which keeps no shared scratch state, so
fields and operators are safe to use from several threads).

Wavenumber conventions
----------------------
First derivatives drop the Nyquist mode (its derivative is not real-valued),
second derivatives keep it.  The Leray projector uses the Nyquist-free
wavenumbers so that it is an exact orthogonal projector on every grid
function.  For fields band-limited below the Nyquist frequency the
distinction is invisible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import GridMismatch, NonZeroMeanRHS

TWO_PI = 2.0 * np.pi

# Fraction of energy above cutoff/2 below which a field counts as resolved.
RESOLVED_ENERGY_FRACTION = 1e-8


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with period 2pi on every axis."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"resolution must be even and >= 8, got {self.n}")

    @property
    def period(self) -> float:
        return TWO_PI

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def dealias_cutoff(self) -> int:
        return self.n // 3

    def coords(self) -> tuple[np.ndarray, ...]:
        """Sample coordinates, one broadcastable array per axis."""
        x = np.arange(self.n) * self.spacing
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij", sparse=True))

    def zeros(self) -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape))


@lru_cache(maxsize=16)
def _wavenumbers(dim: int, n: int):
    """Integer wavenumbers in the rfftn layout.

    Returns (k_full, k_odd, k_sq) where k_odd has its Nyquist entries zeroed.
    Arrays are read-only and broadcastable against the rfftn output.
    """
    k_full, k_odd = [], []
    for axis in range(dim):
        if axis == dim - 1:
            k = np.fft.rfftfreq(n, 1.0 / n)
        else:
            k = np.fft.fftfreq(n, 1.0 / n)
        ko = k.copy()
        ko[np.abs(ko) == n // 2] = 0.0
        shape = [1] * dim
        shape[axis] = k.size
        k_full.append(k.reshape(shape))
        k_odd.append(ko.reshape(shape))
    k_sq = sum(k**2 for k in k_full)
    k_sq = np.broadcast_to(k_sq, _spectral_shape(dim, n)).copy()
    for arr in (*k_full, *k_odd, k_sq):
        arr.flags.writeable = False
    return tuple(k_full), tuple(k_odd), k_sq


def _spectral_shape(dim: int, n: int) -> tuple[int, ...]:
    return (n,) * (dim - 1) + (n // 2 + 1,)


@lru_cache(maxsize=16)
def _rfft_weights(dim: int, n: int) -> np.ndarray:
    """Multiplicity of each rfftn coefficient in the full spectrum."""
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    shape = [1] * dim
    shape[-1] = w.size
    w = np.broadcast_to(w.reshape(shape), _spectral_shape(dim, n)).copy()
    w.flags.writeable = False
    return w


@lru_cache(maxsize=16)
def _dealias_mask(dim: int, n: int) -> np.ndarray:
    k_full, _, _ = _wavenumbers(dim, n)
    cutoff = n // 3
    mask = np.ones(_spectral_shape(dim, n), dtype=bool)
    for k in k_full:
        mask &= np.abs(k) <= cutoff
    mask.flags.writeable = False
    return mask


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real scalar samples on a grid.  Immutable after construction."""

    grid: Grid
    values: np.ndarray
    mean: float = field(init=False)

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.size != self.grid.n**self.grid.dim:
            raise ValueError(f"expected {self.grid.n ** self.grid.dim} samples, got {arr.size}")
        arr = arr.reshape(self.grid.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("field contains non-finite samples")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "mean", float(arr.mean()))

    @classmethod
    def from_spectral(cls, grid: Grid, coeffs: np.ndarray) -> "ScalarField":
        return cls(grid, np.fft.irfftn(coeffs, s=grid.shape, axes=tuple(range(grid.dim))))

    def to_spectral(self) -> np.ndarray:
        return np.fft.rfftn(self.values)

    def integral(self) -> float:
        """Periodic trapezoidal rule; exact for trigonometric polynomials."""
        return float(self.values.sum() * self.grid.cell_volume)

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridMismatch(f"{self.grid} vs {other.grid}")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """A dim-component vector field.

    ``divergence_free`` records a claim made by whoever built the field;
    :func:`leray_project` sets it legitimately and :func:`is_solenoidal`
    checks it.
    """

    grid: Grid
    components: tuple[ScalarField, ...]
    divergence_free: bool = False

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, ScalarField) else ScalarField(self.grid, c) for c in self.components
        )
        if len(comps) != self.grid.dim:
            raise ValueError(f"need {self.grid.dim} components, got {len(comps)}")
        for c in comps:
            if c.grid != self.grid:
                raise GridMismatch(f"component on {c.grid}, field on {self.grid}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_arrays(cls, grid: Grid, arrays: Iterable[np.ndarray], divergence_free: bool = False):
        return cls(grid, tuple(ScalarField(grid, a) for a in arrays), divergence_free)

    @classmethod
    def zeros(cls, grid: Grid, divergence_free: bool = True) -> "VectorField":
        return cls(grid, tuple(grid.zeros() for _ in range(grid.dim)), divergence_free)

    @property
    def array(self) -> np.ndarray:
        """Components stacked along a new leading axis (a fresh copy)."""
        return np.stack([c.values for c in self.components])

    def max_norm(self) -> float:
        return float(np.sqrt(self.norm_sq().values.max()))

    def norm_sq(self) -> ScalarField:
        return ScalarField(self.grid, sum(c.values**2 for c in self.components))

    def dot(self, other: "VectorField") -> ScalarField:
        if other.grid != self.grid:
            raise GridMismatch(f"{self.grid} vs {other.grid}")
        return ScalarField(
            self.grid, sum(a.values * b.values for a, b in zip(self.components, other.components))
        )

    def scaled(self, factor: float) -> "VectorField":
        return VectorField(
            self.grid, tuple(c * factor for c in self.components), self.divergence_free
        )

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(
            self.grid, tuple(a + b for a, b in zip(self.components, other.components))
        )

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(
            self.grid, tuple(a - b for a, b in zip(self.components, other.components))
        )


@dataclass(frozen=True)
class SpectralDiagnostics:
    max_wavenumber_energy_fraction: float
    dealias_cutoff: int

    @property
    def well_resolved(self) -> bool:
        return self.max_wavenumber_energy_fraction < RESOLVED_ENERGY_FRACTION


FieldLike = Union[ScalarField, VectorField]


def _scalars(f: FieldLike) -> Sequence[ScalarField]:
    return f.components if isinstance(f, VectorField) else (f,)


def spectral_energy(f: FieldLike) -> float:
    """Parseval sum, equal to the integral of |f|^2 over the torus."""
    g = f.grid
    w = _rfft_weights(g.dim, g.n)
    total = sum(float(np.sum(w * np.abs(c.to_spectral()) ** 2)) for c in _scalars(f))
    return total * g.cell_volume / g.n**g.dim


def spectral_diagnostics(f: FieldLike) -> SpectralDiagnostics:
    """Fraction of spectral energy at |k| > cutoff/2 (Euclidean norm)."""
    g = f.grid
    _, _, k_sq = _wavenumbers(g.dim, g.n)
    w = _rfft_weights(g.dim, g.n)
    cutoff = g.dealias_cutoff
    high = k_sq > (cutoff / 2) ** 2
    total = 0.0
    upper = 0.0
    for c in _scalars(f):
        e = w * np.abs(c.to_spectral()) ** 2
        total += float(e.sum())
        upper += float(e[high].sum())
    frac = upper / total if total > 0 else 0.0
    return SpectralDiagnostics(frac, cutoff)


def gradient(f: ScalarField) -> VectorField:
    g = f.grid
    _, k_odd, _ = _wavenumbers(g.dim, g.n)
    fh = f.to_spectral()
    return VectorField(g, tuple(ScalarField.from_spectral(g, 1j * k * fh) for k in k_odd))


def divergence(u: VectorField) -> ScalarField:
    g = u.grid
    _, k_odd, _ = _wavenumbers(g.dim, g.n)
    dh = sum(1j * k * c.to_spectral() for k, c in zip(k_odd, u.components))
    return ScalarField.from_spectral(g, dh)


def velocity_gradient(u: VectorField) -> list[list[ScalarField]]:
    """Tensor ``J[j][k] = d_j u_k``."""
    g = u.grid
    _, k_odd, _ = _wavenumbers(g.dim, g.n)
    hats = [c.to_spectral() for c in u.components]
    return [[ScalarField.from_spectral(g, 1j * kj * uh) for uh in hats] for kj in k_odd]


def vorticity_norm_sq(u: VectorField) -> ScalarField:
    """|omega|^2 = 1/2 sum_{j,k} (d_j u_k - d_k u_j)^2."""
    J = velocity_gradient(u)
    d = u.grid.dim
    out = np.zeros(u.grid.shape)
    for j in range(d):
        for k in range(j + 1, d):
            out += (J[j][k].values - J[k][j].values) ** 2
    return ScalarField(u.grid, out)


def laplacian(f: ScalarField) -> ScalarField:
    g = f.grid
    _, _, k_sq = _wavenumbers(g.dim, g.n)
    return ScalarField.from_spectral(g, -k_sq * f.to_spectral())


def solve_poisson(rhs: ScalarField, rtol: float = 1e-10) -> ScalarField:
    """Zero-mean solution of lap(f) = rhs.

    Raises NonZeroMeanRHS when |mean(rhs)| exceeds ``rtol * max|rhs|``.
    """
    g = rhs.grid
    scale = rhs.max_norm()
    if abs(rhs.mean) > rtol * scale and abs(rhs.mean) > 0.0:
        raise NonZeroMeanRHS(f"mean {rhs.mean:.3e} vs max-norm {scale:.3e}")
    _, _, k_sq = _wavenumbers(g.dim, g.n)
    rh = rhs.to_spectral()
    with np.errstate(divide="ignore", invalid="ignore"):
        fh = np.where(k_sq > 0, -rh / np.where(k_sq > 0, k_sq, 1.0), 0.0)
    return ScalarField.from_spectral(g, fh)


def leray_project(u: VectorField) -> VectorField:
    """Orthogonal projection onto divergence-free fields, u - grad lap^-1 div u."""
    g = u.grid
    _, k_odd, _ = _wavenumbers(g.dim, g.n)
    hats = [c.to_spectral() for c in u.components]
    ko_sq = sum(k**2 for k in k_odd)
    k_dot_u = sum(k * uh for k, uh in zip(k_odd, hats))
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(ko_sq > 0, k_dot_u / np.where(ko_sq > 0, ko_sq, 1.0), 0.0)
    comps = tuple(ScalarField.from_spectral(g, uh - k * phi) for k, uh in zip(k_odd, hats))
    return VectorField(g, comps, divergence_free=True)


def dealias(f: ScalarField) -> ScalarField:
    """Zero every coefficient with a wavenumber component above n // 3."""
    g = f.grid
    return ScalarField.from_spectral(g, f.to_spectral() * _dealias_mask(g.dim, g.n))


def is_solenoidal(u: VectorField, rtol: float = 1e-10) -> bool:
    scale = u.max_norm()
    return divergence(u).max_norm() <= rtol * max(scale, np.finfo(float).tiny)


def upsample(f: ScalarField, factor: int) -> ScalarField:
    """Trigonometric interpolation of f onto a grid ``factor`` times finer.

    Works one axis at a time.  The Nyquist coefficient is split evenly between
    +n/2 and -n/2 so the result is real and matches f on the coarse samples.
    """
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"upsampling factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return f
    g = f.grid
    n, half = g.n, g.n // 2
    a = f.values.astype(complex)
    for axis in range(g.dim):
        ah = np.moveaxis(np.fft.fft(a, axis=axis), axis, 0)
        out = np.zeros((n * factor,) + ah.shape[1:], dtype=complex)
        out[:half] = ah[:half]
        out[-half + 1 :] = ah[half + 1 :]
        out[half] = 0.5 * ah[half]
        out[-half] = 0.5 * ah[half]
        a = np.moveaxis(np.fft.ifft(out, axis=0) * factor, 0, axis)
    return ScalarField(Grid(g.dim, n * factor), np.real(a))
