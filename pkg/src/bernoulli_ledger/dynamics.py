"""Pseudo-spectral Navier-Stokes/Euler solver on the periodic box.

The nonlinear term is evaluated in advective form, (v . grad) v, with the
2/3 rule applied to the product.  Time stepping is classical RK4 with a hard
CFL guard; the velocity is re-projected onto divergence-free fields after
every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .errors import CFLViolation, UnresolvedField
from .spectral import Grid, ScalarField, VectorField

CFL_LIMIT = 0.5

# Energy fraction above cutoff/2 at which the solver refuses to continue.  The
# stricter "well resolved" criterion (spectral.RESOLVED_ENERGY_FRACTION) is
# what verification runs check; the solver only stops once results would be
# meaningless.
UNRESOLVED_LIMIT = 1e-4


@dataclass(frozen=True)
class FlowState:
    v: VectorField
    nu: float
    t: float = 0.0

    def __post_init__(self):
        if not self.v.divergence_free:
            raise ValueError("FlowState velocity must carry the divergence_free flag")
        if self.nu < 0:
            raise ValueError(f"viscosity must be non-negative, got {self.nu}")

    @property
    def grid(self) -> Grid:
        return self.v.grid


@dataclass(frozen=True)
class RHSResult:
    dvdt: VectorField
    p: ScalarField


def _project_hat(uh: np.ndarray, grid: Grid) -> np.ndarray:
    _, k_odd, _ = sp._wavenumbers(grid.dim, grid.n)
    ko_sq = sum(k**2 for k in k_odd)
    k_dot = sum(k * u for k, u in zip(k_odd, uh))
    phi = np.where(ko_sq > 0, k_dot / np.where(ko_sq > 0, ko_sq, 1.0), 0.0)
    return np.stack([u - k * phi for k, u in zip(k_odd, uh)])


def _high_fraction(vh: np.ndarray, grid: Grid) -> float:
    _, _, k_sq = sp._wavenumbers(grid.dim, grid.n)
    w = sp._rfft_weights(grid.dim, grid.n)
    e = w * np.sum(np.abs(vh) ** 2, axis=0)
    total = float(e.sum())
    if total == 0.0:
        return 0.0
    return float(e[k_sq > (grid.dealias_cutoff / 2) ** 2].sum()) / total


def _check_resolved(vh: np.ndarray, grid: Grid, tol: float) -> None:
    frac = _high_fraction(vh, grid)
    if frac >= tol:
        raise UnresolvedField(
            f"energy fraction {frac:.2e} above |k| = {grid.dealias_cutoff / 2} exceeds {tol:.0e}"
        )


def _rhs_hat(vh: np.ndarray, nu: float, grid: Grid, form: str = "projection", with_pressure=True):
    """Spectral right-hand side.  Returns (dvdt_hat, p_hat or None)."""
    d = grid.dim
    k_full, k_odd, k_sq = sp._wavenumbers(d, grid.n)
    mask = sp._dealias_mask(d, grid.n)
    shape = grid.shape
    axes = tuple(range(d))
    v = [np.fft.irfftn(vh[k], s=shape, axes=axes) for k in range(d)]
    J = [[np.fft.irfftn(1j * k_odd[j] * vh[k], s=shape, axes=axes) for k in range(d)] for j in range(d)]
    adv = np.stack(
        [np.fft.rfftn(sum(v[j] * J[j][k] for j in range(d))) * mask for k in range(d)]
    )
    ph = None
    if with_pressure or form == "pressure":
        src = -sum(J[j][k] * J[k][j] for j in range(d) for k in range(d))
        sh = np.fft.rfftn(src) * mask
        ph = np.where(k_sq > 0, -sh / np.where(k_sq > 0, k_sq, 1.0), 0.0)
    visc = -nu * k_sq * vh
    if form == "projection":
        dvh = visc - _project_hat(adv, grid)
    elif form == "pressure":
        dvh = visc - adv - np.stack([1j * k * ph for k in k_odd])
    else:
        raise ValueError(f"unknown form {form!r}")
    return dvh, ph


def _hat(v: VectorField) -> np.ndarray:
    return np.stack([c.to_spectral() for c in v.components])


def _field_from_hat(vh: np.ndarray, grid: Grid, divergence_free: bool) -> VectorField:
    return VectorField(
        grid, tuple(ScalarField.from_spectral(grid, c) for c in vh), divergence_free
    )


def ns_rhs(
    state: FlowState,
    form: str = "projection",
    resolution_tol: float = UNRESOLVED_LIMIT,
) -> RHSResult:
    """Time derivative of the velocity and the zero-mean pressure.

    ``form="projection"`` returns nu lap v - P[(v.grad)v];
    ``form="pressure"`` returns nu lap v - (v.grad)v - grad p.  The two agree
    to rounding for solenoidal, resolved input.
    """
    grid = state.grid
    vh = _hat(state.v)
    _check_resolved(vh, grid, resolution_tol)
    dvh, ph = _rhs_hat(vh, state.nu, grid, form=form)
    dvdt = _field_from_hat(dvh, grid, divergence_free=True)
    return RHSResult(dvdt, ScalarField.from_spectral(grid, ph))


def cfl_number(v: VectorField, dt: float) -> float:
    return dt * v.max_norm() / v.grid.spacing


def step_rk4(
    state: FlowState, dt: float, resolution_tol: float = UNRESOLVED_LIMIT
) -> FlowState:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    cfl = cfl_number(state.v, dt)
    if cfl > CFL_LIMIT:
        raise CFLViolation(f"CFL number {cfl:.3f} exceeds {CFL_LIMIT}")
    grid, nu = state.grid, state.nu
    vh = _hat(state.v)
    _check_resolved(vh, grid, resolution_tol)
    vh = _advance_hat(vh, nu, grid, dt)
    return FlowState(_field_from_hat(vh, grid, True), nu, state.t + dt)


def _advance_hat(vh, nu, grid, dt):
    def f(u):
        return _rhs_hat(u, nu, grid, with_pressure=False)[0]

    k1 = f(vh)
    k2 = f(vh + 0.5 * dt * k1)
    k3 = f(vh + 0.5 * dt * k2)
    k4 = f(vh + dt * k3)
    return _project_hat(vh + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), grid)


def integrate(state: FlowState, dt: float, n_steps: int, callback=None) -> FlowState:
    """Take ``n_steps`` RK4 steps; ``callback(step, state)`` sees every state."""
    if callback is not None:
        callback(0, state)
    for i in range(1, n_steps + 1):
        state = step_rk4(state, dt)
        if callback is not None:
            callback(i, state)
    return state


def kinetic_energy(state: FlowState) -> float:
    return 0.5 * state.v.norm_sq().integral()


def enstrophy(state: FlowState) -> float:
    return sp.vorticity_norm_sq(state.v).integral()


# -- initial conditions -----------------------------------------------------


def taylor_green_fields(grid: Grid, nu: float = 0.0, t: float = 0.0):
    """Exact 2D Taylor-Green velocity and zero-mean pressure at time t."""
    if grid.dim != 2:
        raise ValueError("Taylor-Green vortex is defined on 2D grids")
    x, y = grid.coords()
    decay = np.exp(-2.0 * nu * t)
    u = np.sin(x) * np.cos(y) * decay
    w = -np.cos(x) * np.sin(y) * decay
    p = 0.25 * (np.cos(2 * x) + np.cos(2 * y)) * decay**2
    v = VectorField.from_arrays(grid, np.broadcast_arrays(u, w), divergence_free=True)
    return v, ScalarField(grid, np.broadcast_to(p, grid.shape))


def init_taylor_green_2d(grid: Grid, nu: float = 0.0) -> FlowState:
    v, _ = taylor_green_fields(grid)
    return FlowState(v, nu, 0.0)


def init_abc_3d(grid: Grid, A: float = 1.0, B: float = 1.0, C: float = 1.0, nu: float = 0.0):
    """Arnold-Beltrami-Childress flow (curl v = v)."""
    if grid.dim != 3:
        raise ValueError("ABC flow is defined on 3D grids")
    x, y, z = grid.coords()
    comps = np.broadcast_arrays(
        A * np.sin(z) + C * np.cos(y),
        B * np.sin(x) + A * np.cos(z),
        C * np.sin(y) + B * np.cos(x),
    )
    return FlowState(VectorField.from_arrays(grid, comps, divergence_free=True), nu, 0.0)


def init_random_solenoidal(
    grid: Grid,
    seed: int = 0,
    peak_wavenumber: float = 3.0,
    amplitude: float = 1.0,
    nu: float = 0.0,
) -> FlowState:
    """Projected random field with energy spectrum ~ k^4 exp(-2 (k/k0)^2).

    Modes are drawn on the fixed box |k_i| <= 2 k0 (Euclidean |k| <= 2 k0
    retained), in an order that does not depend on the grid, so a given seed
    describes the same continuous field at every resolution.  ``amplitude``
    is the rms velocity.
    """
    k0 = float(peak_wavenumber)
    kmax = int(np.floor(2 * k0))
    if kmax < 1 or kmax >= grid.n // 2:
        raise ValueError(f"peak wavenumber {k0} does not fit on a {grid.n}-point grid")
    d, n = grid.dim, grid.n
    rng = np.random.default_rng(seed)
    box = np.arange(-kmax, kmax + 1)
    kk = np.meshgrid(*([box] * d), indexing="ij")
    kmag = np.sqrt(sum(k**2 for k in kk))
    with np.errstate(divide="ignore", invalid="ignore"):
        envelope = (kmag / k0) ** 2 * np.exp(-((kmag / k0) ** 2)) / kmag ** ((d - 1) / 2)
    envelope[(kmag == 0) | (kmag > kmax)] = 0.0
    idx = tuple(np.mod(k, n) for k in kk)
    comps = []
    for _ in range(d):
        coef = rng.standard_normal(kmag.shape) + 1j * rng.standard_normal(kmag.shape)
        full = np.zeros(grid.shape, dtype=complex)
        full[idx] = coef * envelope
        comps.append(np.real(np.fft.ifftn(full)) * n**d)
    v = sp.leray_project(VectorField.from_arrays(grid, comps))
    rms = np.sqrt(v.norm_sq().mean)
    if rms == 0:
        raise ValueError("random field vanished; choose a larger peak wavenumber")
    return FlowState(v.scaled(amplitude / rms), nu, 0.0)


def init_zero(grid: Grid, nu: float = 0.0) -> FlowState:
    """Fluid at rest."""
    return FlowState(VectorField.zeros(grid, divergence_free=True), nu, 0.0)


INITIAL_CONDITIONS = {
    "taylor_green": ("nu",),
    "abc": ("A", "B", "C", "nu"),
    "random": ("seed", "peak_wavenumber", "amplitude", "nu"),
    "zero": ("nu",),
}


def build_initial_state(name: str, grid: Grid, nu: float = 0.0, **params) -> FlowState:
    """Initial condition by name; parameters the flow does not use are ignored."""
    if name not in INITIAL_CONDITIONS:
        known = ", ".join(sorted(INITIAL_CONDITIONS))
        raise ValueError(f"unknown initial condition {name!r} (known: {known})")
    kw = {k: v for k, v in params.items() if k in INITIAL_CONDITIONS[name]}
    if name == "taylor_green":
        return init_taylor_green_2d(grid, nu)
    if name == "abc":
        return init_abc_3d(grid, nu=nu, **kw)
    if name == "random":
        return init_random_solenoidal(grid, nu=nu, **kw)
    return init_zero(grid, nu)
