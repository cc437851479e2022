"""Strip-by-strip energy balance between levels of the Bernoulli function.

For alpha < beta the balance reads

    int_{alpha < Q < beta} (1/2 d/dt |v|^2 + nu |omega|^2) dx
        = nu int_{Q = beta} |grad Q| dS - nu int_{Q = alpha} |grad Q| dS.

A level at or below min Q (at or above max Q) turns the strip into a
one-sided region and drops the corresponding surface term.  Every entry also
carries the residual of the balance with the two surface terms swapped, so a
run can tell which orientation the data supports.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bernoulli import BernoulliBundle, compute_bundle
from .dynamics import FlowState
from .errors import InvalidStrip, MissingFullRange
from .levelset import (
    Isosurface,
    RegularityReport,
    StripQuadrature,
    check_regularity,
    extract_isosurface,
    surface_integral,
)
from .spectral import Grid

RESIDUAL_FLOOR = 1e-14

CSV_COLUMNS = [
    "alpha",
    "beta",
    "volume_term",
    "beta_flux",
    "alpha_flux",
    "residual",
    "relative_residual",
    "alpha_regular",
    "beta_regular",
    "min_grad_alpha",
    "min_grad_beta",
    "opposite_residual",
    "opposite_relative_residual",
]


def _relative(residual: float, volume: float, beta_flux: float, alpha_flux: float) -> float:
    return abs(residual) / max(abs(volume), beta_flux + alpha_flux, RESIDUAL_FLOOR)


@dataclass(frozen=True)
class LedgerEntry:
    alpha: float
    beta: float
    volume_term: float
    beta_flux: float
    alpha_flux: float
    residual: float
    relative_residual: float
    opposite_residual: float
    opposite_relative_residual: float
    alpha_report: RegularityReport
    beta_report: RegularityReport

    @property
    def is_regular(self) -> bool:
        """Both sides are regular levels or one-sided limits."""
        return self.alpha_report.usable and self.beta_report.usable

    @property
    def is_full_range(self) -> bool:
        return self.alpha_report.degenerate and self.beta_report.degenerate

    @property
    def is_interior(self) -> bool:
        return not (self.alpha_report.degenerate or self.beta_report.degenerate)

    def row(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "volume_term": self.volume_term,
            "beta_flux": self.beta_flux,
            "alpha_flux": self.alpha_flux,
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "alpha_regular": self.alpha_report.usable,
            "beta_regular": self.beta_report.usable,
            "min_grad_alpha": self.alpha_report.min_grad,
            "min_grad_beta": self.beta_report.min_grad,
            "opposite_residual": self.opposite_residual,
            "opposite_relative_residual": self.opposite_relative_residual,
        }


class LevelCache:
    """Per-bundle work shared by every strip: quadrature tables and surfaces."""

    def __init__(self, bundle: BernoulliBundle):
        self.bundle = bundle
        self.quadrature = StripQuadrature(bundle.energy_integrand, bundle.Q)
        self._levels: dict[float, tuple[Isosurface, float, RegularityReport]] = {}

    def level(self, c: float):
        """(surface, surface integral of |grad Q|, regularity) at level c."""
        if c not in self._levels:
            b = self.bundle
            iso = extract_isosurface(b.Q, c)
            flux = surface_integral(iso, b.grad_norm)
            report = check_regularity(b.Q, b.grad_norm, c, iso=iso)
            self._levels[c] = (iso, flux, report)
        return self._levels[c]

    def degenerate(self, c: float) -> bool:
        return c <= self.bundle.q_min or c >= self.bundle.q_max


def _degenerate_report(c: float) -> RegularityReport:
    return RegularityReport(c, 0.0, 0.0, False, 0.0, degenerate=True)


def assemble_entry(
    bundle: BernoulliBundle,
    state: FlowState,
    alpha: float,
    beta: float,
    cache: LevelCache | None = None,
) -> LedgerEntry:
    """Both sides of the strip balance for {alpha < Q < beta}."""
    if not alpha < beta:
        raise InvalidStrip(f"alpha={alpha} must be below beta={beta}")
    cache = LevelCache(bundle) if cache is None else cache
    nu = state.nu
    quad = cache.quadrature

    if alpha <= bundle.q_min:
        lower, alpha_flux, alpha_report = quad.total, 0.0, _degenerate_report(alpha)
    elif alpha >= bundle.q_max:
        lower, alpha_flux, alpha_report = 0.0, 0.0, _degenerate_report(alpha)
    else:
        _, s, alpha_report = cache.level(alpha)
        lower, alpha_flux = quad.superlevel(alpha), nu * s

    if beta >= bundle.q_max:
        upper, beta_flux, beta_report = 0.0, 0.0, _degenerate_report(beta)
    elif beta <= bundle.q_min:
        upper, beta_flux, beta_report = quad.total, 0.0, _degenerate_report(beta)
    else:
        _, s, beta_report = cache.level(beta)
        upper, beta_flux = quad.superlevel(beta), nu * s

    volume = lower - upper
    residual = volume - (beta_flux - alpha_flux)
    opposite = volume - (alpha_flux - beta_flux)
    return LedgerEntry(
        alpha=float(alpha),
        beta=float(beta),
        volume_term=volume,
        beta_flux=beta_flux,
        alpha_flux=alpha_flux,
        residual=residual,
        relative_residual=_relative(residual, volume, beta_flux, alpha_flux),
        opposite_residual=opposite,
        opposite_relative_residual=_relative(opposite, volume, beta_flux, alpha_flux),
        alpha_report=alpha_report,
        beta_report=beta_report,
    )


@dataclass
class LedgerTable:
    entries: list[LedgerEntry]
    q_min: float
    q_max: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda e: (e.alpha, e.beta))

    def __len__(self) -> int:
        return len(self.entries)

    def full_range(self) -> LedgerEntry:
        for e in self.entries:
            if e.is_full_range:
                return e
        raise MissingFullRange("table has no full-range entry")

    def partition(self) -> list[LedgerEntry]:
        """Entries tiling [q_min, q_max]: one-sided ends and adjacent strips."""
        return [e for e in self.entries if not e.is_full_range]

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for e in self.entries:
                writer.writerow({k: _csv_value(v) for k, v in e.row().items()})
        return path

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "q_min": self.q_min,
            "q_max": self.q_max,
            "entries": [e.row() for e in self.entries],
        }


def _csv_value(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    return repr(float(v))


def sweep_levels(
    bundle: BernoulliBundle,
    state: FlowState,
    levels: Sequence[float],
    metadata: dict | None = None,
    cache: LevelCache | None = None,
) -> LedgerTable:
    """Ledger for the partition of [min Q, max Q] cut at ``levels``.

    Rows: the lower one-sided region {Q < c_1}, the strips between adjacent
    levels, the upper one-sided region {Q > c_m}, and the full range.
    Levels outside the open range of Q carry no surface and are dropped.
    """
    levels = [float(c) for c in levels]
    if any(b < a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be sorted")
    q_min, q_max = bundle.q_min, bundle.q_max
    inner = sorted({c for c in levels if q_min < c < q_max})
    cache = LevelCache(bundle) if cache is None else cache
    cuts = [q_min, *inner, q_max]
    entries = [assemble_entry(bundle, state, a, b, cache) for a, b in zip(cuts, cuts[1:])]
    if inner:
        entries.append(assemble_entry(bundle, state, q_min, q_max, cache))
    meta = {"resolution": state.grid.n, "dim": state.grid.dim, "nu": state.nu, "t": state.t}
    meta.update(metadata or {})
    return LedgerTable(entries, q_min, q_max, meta)


def verify_global_limit(table: LedgerTable) -> float:
    """Residual of the full-range entry (its volume term; both fluxes vanish)."""
    return table.full_range().residual


@dataclass(frozen=True)
class SignCheck:
    level: float
    upper: float  # integral over {Q > level}; mandated <= 0
    lower: float  # integral over {Q < level}; mandated >= 0
    flux: float  # nu times the surface integral of |grad Q|
    sign_ok: bool
    regular: bool

    def __iter__(self):
        yield self.level
        yield self.sign_ok


def verify_sign_constraints(
    bundle: BernoulliBundle,
    state: FlowState,
    levels: Sequence[float],
    rel_tol: float = 0.02,
    atol: float = 0.0,
    cache: LevelCache | None = None,
) -> list[SignCheck]:
    """One-sided balances at each level.

    The region above a level loses exactly what flows out through it, so its
    integral is -flux <= 0; the region below gains +flux >= 0.  A sign is
    accepted within ``rel_tol * flux + atol``.
    """
    cache = LevelCache(bundle) if cache is None else cache
    quad = cache.quadrature
    out = []
    for c in levels:
        c = float(c)
        if cache.degenerate(c):
            upper = quad.total if c <= bundle.q_min else 0.0
            out.append(SignCheck(c, upper, quad.total - upper, 0.0, True, True))
            continue
        _, s, report = cache.level(c)
        flux = state.nu * s
        upper = quad.superlevel(c)
        lower = quad.total - upper
        tol = rel_tol * flux + atol
        ok = upper <= tol and lower >= -tol
        out.append(SignCheck(c, upper, lower, flux, bool(ok), report.is_regular))
    return out


def quantile_levels(bundle: BernoulliBundle, quantiles: Sequence[float]) -> list[float]:
    return [float(c) for c in np.quantile(bundle.Q.values, quantiles)]


# -- convergence ------------------------------------------------------------


@dataclass
class ConvergenceReport:
    resolutions: list[int]
    alpha: float
    beta: float
    relative_residuals: list[float]
    regular: list[bool]
    pairwise_orders: list[float]
    fitted_order: float | None
    status: str  # "ok", "exact" or "excluded"
    metadata: dict = field(default_factory=dict)

    @property
    def monotone(self) -> bool:
        r = self.relative_residuals
        return all(b < a for a, b in zip(r, r[1:]))

    def to_dict(self) -> dict:
        return asdict(self)


def fit_order(resolutions: Sequence[int], errors: Sequence[float]) -> float:
    """Least-squares slope of -log(error) against log(resolution)."""
    logn = np.log(np.asarray(resolutions, dtype=float))
    loge = np.log(np.asarray(errors, dtype=float))
    slope = np.polyfit(logn, loge, 1)[0]
    return float(-slope)


def convergence_study(
    initial_condition: Callable[[Grid], FlowState],
    nu: float,
    strip_quantiles: tuple[float, float],
    resolutions: Sequence[int],
    dim: int = 2,
    min_resolutions: int = 3,
    exact_tol: float = 1e-13,
) -> ConvergenceReport:
    """Relative residual of one strip across a sequence of doubled grids.

    ``initial_condition(grid)`` must describe the same continuous flow at
    every resolution.  The strip levels are the requested quantiles of Q on
    the coarsest grid, then held fixed.
    """
    resolutions = [int(n) for n in resolutions]
    if len(resolutions) < min_resolutions:
        raise ValueError(f"need at least {min_resolutions} resolutions, got {len(resolutions)}")
    if any(b != 2 * a for a, b in zip(resolutions, resolutions[1:])):
        raise ValueError("each resolution must double the previous one")
    alpha = beta = None
    residuals, regular = [], []
    for n in resolutions:
        state = initial_condition(Grid(dim, n))
        if state.nu != nu:
            state = FlowState(state.v, nu, state.t)
        bundle = compute_bundle(state)
        if alpha is None:
            if bundle.q_max - bundle.q_min <= 0:
                alpha, beta = bundle.q_min, bundle.q_min + 1.0
            else:
                alpha, beta = quantile_levels(bundle, strip_quantiles)
        entry = assemble_entry(bundle, state, alpha, beta)
        residuals.append(entry.relative_residual)
        regular.append(entry.is_regular)

    pairwise, fitted = [], None
    if max(residuals) <= exact_tol:
        status = "exact"
    elif not all(regular):
        status = "excluded"
    else:
        status = "ok"
        safe = [max(r, RESIDUAL_FLOOR) for r in residuals]
        pairwise = [float(np.log2(a / b)) for a, b in zip(safe, safe[1:])]
        fitted = fit_order(resolutions, safe)
    return ConvergenceReport(
        resolutions=resolutions,
        alpha=float(alpha),
        beta=float(beta),
        relative_residuals=[float(r) for r in residuals],
        regular=regular,
        pairwise_orders=pairwise,
        fitted_order=fitted,
        status=status,
        metadata={"nu": nu, "dim": dim, "strip_quantiles": list(strip_quantiles)},
    )


def write_json(obj: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
