"""Level sets of a periodic scalar field and integrals over them.

Surfaces come from marching squares (2D, implemented here) or marching cubes
(3D, scikit-image's Lewiner tables run on a one-cell periodic pad).  Each
element stores its measure, centroid and a unit normal pointing towards
increasing Q.  Surface integrals use the one-point centroid rule.

Volume integrals over {alpha < Q < beta} split every grid cell into simplices
(two triangles per square, six Kuhn tetrahedra per cube), treat Q and the
integrand as linear on each simplex, and integrate the clipped simplex
exactly.  The integral over {Q > c} is therefore a single function F(c) and
strips are differences F(alpha) - F(beta), which makes strip additivity hold
to rounding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import permutations
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage import measure

from . import spectral as sp
from .errors import GridMismatch, InvalidStrip
from .spectral import Grid, ScalarField, VectorField

# Relative guard: a level is regular when min |grad Q| on it is at least this
# fraction of the torus-wide median |grad Q|.
REGULARITY_FACTOR = 1e-3


@dataclass(frozen=True, eq=False)
class Isosurface:
    """Segments (2D) or triangles (3D) approximating {Q = level}.

    ``vertices`` has shape (m, dim, dim): m elements of dim vertices each.
    Coordinates are not wrapped into [0, 2pi); elements touching the last
    cell layer may reach 2pi.
    """

    grid: Grid
    level: float
    vertices: np.ndarray
    measure: np.ndarray
    centroid: np.ndarray
    normal: np.ndarray

    def __len__(self) -> int:
        return len(self.measure)

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    @property
    def empty(self) -> bool:
        return len(self.measure) == 0

    @classmethod
    def empty_surface(cls, grid: Grid, level: float) -> "Isosurface":
        d = grid.dim
        return cls(grid, level, np.zeros((0, d, d)), np.zeros(0), np.zeros((0, d)), np.zeros((0, d)))


@dataclass(frozen=True)
class RegularityReport:
    level: float
    min_grad: float
    median_grad: float
    is_regular: bool
    threshold: float = 0.0
    # Level at or beyond the range of Q (a one-sided limit, not a surface).
    degenerate: bool = False

    @property
    def usable(self) -> bool:
        return self.is_regular or self.degenerate


@dataclass(frozen=True)
class LevelStrip:
    alpha: float
    beta: float
    alpha_report: RegularityReport
    beta_report: RegularityReport

    def __post_init__(self):
        if not self.alpha < self.beta:
            raise InvalidStrip(f"alpha={self.alpha} must be below beta={self.beta}")


# -- interpolation ----------------------------------------------------------


def interpolate(f: ScalarField, points: np.ndarray) -> np.ndarray:
    """Periodic multilinear interpolation of ``f`` at physical ``points``."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return np.zeros(0)
    coords = (pts / f.grid.spacing).T
    return ndimage.map_coordinates(f.values, coords, order=1, mode="grid-wrap")


def _check_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise GridMismatch(f"{a} vs {b}")


# -- extraction -------------------------------------------------------------

# Marching-squares edges: 0 bottom (00-10), 1 right (10-11), 2 top (01-11),
# 3 left (00-01).  Case bits: 1 q00, 2 q10, 4 q11, 8 q01 (set when q > c).
# Saddle cases isolate the corners above the level.
_MS_SEGMENTS = {
    1: [(0, 3)], 14: [(0, 3)],
    2: [(0, 1)], 13: [(0, 1)],
    4: [(1, 2)], 11: [(1, 2)],
    8: [(2, 3)], 7: [(2, 3)],
    3: [(1, 3)], 12: [(1, 3)],
    6: [(0, 2)], 9: [(0, 2)],
    5: [(0, 3), (1, 2)],
    10: [(0, 1), (2, 3)],
}
_MS_EDGE_CORNERS = [(0, 1), (1, 2), (3, 2), (0, 3)]
_SQUARE_OFFSETS = np.array([(0, 0), (1, 0), (1, 1), (0, 1)])


def _marching_squares(Q: ScalarField, c: float) -> Isosurface:
    grid = Q.grid
    h = grid.spacing
    q = Q.values
    corners = [np.roll(q, (-a, -b), axis=(0, 1)) for a, b in _SQUARE_OFFSETS]
    bits = sum((corner > c).astype(np.int8) << i for i, corner in enumerate(corners))
    ii, jj = np.meshgrid(np.arange(grid.n), np.arange(grid.n), indexing="ij")

    starts, ends, cells, refs, ref_above = [], [], [], [], []
    for case, segs in _MS_SEGMENTS.items():
        sel = np.nonzero(bits == case)
        if sel[0].size == 0:
            continue
        cq = [corner[sel] for corner in corners]
        base = np.stack([ii[sel], jj[sel]], axis=1).astype(float)
        for e_a, e_b in segs:
            pts = []
            for e in (e_a, e_b):
                a, b = _MS_EDGE_CORNERS[e]
                t = (c - cq[a]) / (cq[b] - cq[a])
                pa = base + _SQUARE_OFFSETS[a]
                pb = base + _SQUARE_OFFSETS[b]
                pts.append((pa + t[:, None] * (pb - pa)) * h)
            starts.append(pts[0])
            ends.append(pts[1])
            cells.append(np.stack(sel, axis=1))
            # The corner the segment cuts off (or corner 0 when it crosses the
            # cell) fixes which side is uphill.
            shared = set(_MS_EDGE_CORNERS[e_a]) & set(_MS_EDGE_CORNERS[e_b])
            r = shared.pop() if shared else 0
            refs.append((base + _SQUARE_OFFSETS[r]) * h)
            ref_above.append(np.full(len(base), bool(case >> r & 1)))
    if not starts:
        return Isosurface.empty_surface(grid, c)
    p0 = np.concatenate(starts)
    p1 = np.concatenate(ends)
    cell = np.concatenate(cells)
    ref = np.concatenate(refs)
    above = np.concatenate(ref_above)
    d = p1 - p0
    length = np.hypot(d[:, 0], d[:, 1])
    keep = length > 0
    p0, p1, d, length, cell = p0[keep], p1[keep], d[keep], length[keep], cell[keep]
    ref, above = ref[keep], above[keep]
    centroid = 0.5 * (p0 + p1)
    normal = np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None]
    side = np.einsum("ij,ij->i", normal, ref - centroid)
    side = np.where(above, side, -side)
    # A corner sitting exactly on the level gives no side; use the local gradient.
    flat = np.abs(side) <= 1e-12 * h
    if np.any(flat):
        local = _cell_gradient(q, cell[flat], centroid[flat] / h - cell[flat])
        side[flat] = np.einsum("ij,ij->i", normal[flat], local)
    normal[side < 0] *= -1
    return Isosurface(grid, c, np.stack([p0, p1], axis=1), length, centroid, normal)


def _cell_gradient(q: np.ndarray, cell: np.ndarray, local: np.ndarray) -> np.ndarray:
    """Gradient of the multilinear interpolant of ``q`` in the given cells.

    ``local`` holds coordinates in [0, 1]^dim inside each cell; the result is
    in index units, which is all orientation needs.
    """
    n = q.shape[0]
    dim = q.ndim
    grad = np.zeros_like(local)
    for offset in np.ndindex(*(2,) * dim):
        idx = tuple((cell[:, a] + offset[a]) % n for a in range(dim))
        val = q[idx]
        for a in range(dim):
            w = np.ones(len(val))
            for b in range(dim):
                if b == a:
                    continue
                w *= local[:, b] if offset[b] else 1.0 - local[:, b]
            grad[:, a] += (1.0 if offset[a] else -1.0) * w * val
    return grad


def _refine_vertices(q: np.ndarray, verts: np.ndarray, c: float, h: float) -> np.ndarray:
    """Recompute single-precision marching-cubes vertices in double precision.

    Every vertex lies on a grid edge; the edge is recovered from the rounded
    position and the crossing is re-interpolated linearly.  Returns positions
    in index units.
    """
    s = verts.astype(float) / h
    nearest = np.round(s)
    frac = np.abs(s - nearest)
    axis = np.argmax(frac, axis=1)
    rows = np.arange(len(s))
    on_edge = frac[rows, axis] > 1e-4
    lo = nearest.astype(int)
    lo[rows, axis] = np.where(on_edge, np.floor(s[rows, axis]).astype(int), lo[rows, axis])
    hi = lo.copy()
    hi[rows, axis] += 1
    hi = np.minimum(hi, q.shape[0] - 1)
    q0 = q[tuple(lo.T)]
    q1 = q[tuple(hi.T)]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip((c - q0) / (q1 - q0), 0.0, 1.0)
    out = lo.astype(float)
    out[rows, axis] += np.where(on_edge & np.isfinite(t), t, 0.0)
    return np.where(on_edge[:, None], out, nearest)


def _marching_cubes(Q: ScalarField, c: float) -> Isosurface:
    grid = Q.grid
    h = grid.spacing
    q = Q.values
    if not (q.min() < c < q.max()):
        return Isosurface.empty_surface(grid, c)
    padded = np.pad(q, ((0, 1),) * 3, mode="wrap")
    try:
        verts, faces, _, _ = measure.marching_cubes(
            padded, level=c, spacing=(h, h, h), allow_degenerate=False, method="lewiner"
        )
    except (ValueError, RuntimeError):
        return Isosurface.empty_surface(grid, c)
    tri = _refine_vertices(padded, verts, c, h)[faces] * h
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    twice_area = np.linalg.norm(cross, axis=1)
    keep = twice_area > 0
    tri, cross, twice_area = tri[keep], cross[keep], twice_area[keep]
    centroid = tri.mean(axis=1)
    # Lewiner winding is consistent over the whole mesh, so one orientation
    # decision covers every triangle; per-element checks misfire in cells
    # where the trilinear gradient is a poor guide.
    normal = cross / twice_area[:, None]
    scaled = centroid / h
    cell = np.clip(np.floor(scaled).astype(int), 0, grid.n - 1)
    local = _cell_gradient(q, cell, np.clip(scaled - cell, 0.0, 1.0))
    if np.sum(twice_area * np.sign(np.einsum("ij,ij->i", normal, local))) < 0:
        normal = -normal
    return Isosurface(grid, c, tri, 0.5 * twice_area, centroid, normal)


def extract_isosurface(Q: ScalarField, c: float) -> Isosurface:
    """Closed periodic level set {Q = c}; empty when c is outside the data range."""
    if not np.isfinite(c) or c > Q.values.max() or c < Q.values.min():
        return Isosurface.empty_surface(Q.grid, c)
    if Q.grid.dim == 2:
        return _marching_squares(Q, c)
    return _marching_cubes(Q, c)


# -- surface integrals ------------------------------------------------------


def surface_integral(iso: Isosurface, g: ScalarField) -> float:
    """Centroid-rule approximation of the integral of g over the surface."""
    _check_grid(iso.grid, g.grid)
    if iso.empty:
        return 0.0
    return float(np.dot(iso.measure, interpolate(g, iso.centroid)))


def _velocity_at(v: VectorField, points: np.ndarray) -> np.ndarray:
    return np.stack([interpolate(c, points) for c in v.components], axis=1)


def flux_integral(v: VectorField, iso: Isosurface) -> float:
    """Integral of v . n over the surface (n towards increasing Q)."""
    _check_grid(iso.grid, v.grid)
    if iso.empty:
        return 0.0
    vel = _velocity_at(v, iso.centroid)
    return float(np.dot(iso.measure, np.einsum("ij,ij->i", vel, iso.normal)))


def speed_integral(v: VectorField, iso: Isosurface) -> float:
    """Integral of |v| over the surface; the natural scale for the flux."""
    _check_grid(iso.grid, v.grid)
    if iso.empty:
        return 0.0
    vel = _velocity_at(v, iso.centroid)
    return float(np.dot(iso.measure, np.linalg.norm(vel, axis=1)))


# -- coarea oracle ----------------------------------------------------------


def coarea_level_integral(
    Q: ScalarField,
    g: ScalarField,
    levels,
    grad_norm: ScalarField | None = None,
    upsample: int = 1,
) -> list[float]:
    """Bin averages of the surface integral of g via the coarea formula.

    For each pair of adjacent levels returns
    sum_{c_i <= Q < c_{i+1}} g |grad Q| dV / (c_{i+1} - c_i), using a sharp
    sample mask (the last bin includes its upper edge).

    With ``upsample > 1`` Q, g and grad Q are first interpolated spectrally
    onto a finer grid, which suppresses the lattice noise of the sharp mask
    for narrow bins.  ``grad_norm`` is ignored in that case; |grad Q| is
    rebuilt from the interpolated gradient components.
    """
    _check_grid(Q.grid, g.grid)
    levels = np.asarray(levels, dtype=float)
    if levels.ndim != 1 or levels.size < 2 or np.any(np.diff(levels) <= 0):
        raise ValueError("levels must be a strictly increasing sequence of length >= 2")
    if upsample > 1:
        comps = [sp.upsample(c, upsample).values for c in sp.gradient(Q).components]
        gn = np.sqrt(sum(c**2 for c in comps))
        Q, g = sp.upsample(Q, upsample), sp.upsample(g, upsample)
    elif grad_norm is None:
        gn = np.sqrt(sp.gradient(Q).norm_sq().values)
    else:
        gn = grad_norm.values
    weights = (g.values * gn).ravel()
    sums, _ = np.histogram(Q.values.ravel(), bins=levels, weights=weights)
    return list(sums * Q.grid.cell_volume / np.diff(levels))


def coarea_bin(c: float, q_min: float, q_max: float, rel_width: float = 0.025):
    """Bin (c - d, c + d) centred on level c for the coarea cross-check.

    d is ``rel_width`` of the range of Q, shrunk to half the distance to the
    nearer extreme so the bin never reaches a critical value of Q.
    """
    if not q_min < c < q_max:
        raise ValueError(f"level {c} is not inside ({q_min}, {q_max})")
    d = min(rel_width * (q_max - q_min), 0.5 * min(c - q_min, q_max - c))
    return c - d, c + d


# -- strip volume integrals -------------------------------------------------


def _simplex_corners(dim: int) -> list[np.ndarray]:
    if dim == 2:
        return [np.array([(0, 0), (1, 0), (1, 1)]), np.array([(0, 0), (1, 1), (0, 1)])]
    out = []
    for perm in permutations(range(3)):
        path = [np.zeros(3, dtype=int)]
        for axis in perm:
            step = path[-1].copy()
            step[axis] = 1
            path.append(step)
        out.append(np.array(path))
    return out


def _vertex_values(a: np.ndarray, corners: np.ndarray) -> np.ndarray:
    axes = tuple(range(a.ndim))
    return np.stack([np.roll(a, tuple(-o for o in off), axis=axes).ravel() for off in corners], axis=1)


class StripQuadrature:
    """Integrals of ``f`` over super-level sets {Q > c}, reusable across levels.

    Q and f are linear on each simplex of the Kuhn subdivision of the grid;
    clipped simplices are integrated exactly.  Uncut simplices reduce to the
    periodic trapezoidal rule, so the full-torus integral is spectrally
    accurate.
    """

    def __init__(self, f: ScalarField, Q: ScalarField):
        _check_grid(f.grid, Q.grid)
        grid = Q.grid
        d = grid.dim
        qs, fs = [], []
        for corners in _simplex_corners(d):
            qs.append(_vertex_values(Q.values, corners))
            fs.append(_vertex_values(f.values, corners))
        q = np.concatenate(qs)
        fv = np.concatenate(fs)
        order = np.argsort(q, axis=1, kind="stable")
        self.q = np.take_along_axis(q, order, axis=1)
        self.f = np.take_along_axis(fv, order, axis=1)
        self.dim = d
        self.simplex_volume = grid.cell_volume / (2 if d == 2 else 6)
        full = self.simplex_volume * self.f.mean(axis=1)
        by_low = np.argsort(self.q[:, 0], kind="stable")
        self._low_sorted = self.q[by_low, 0]
        # suffix[i] = sum of full-simplex integrals for sorted positions >= i
        self._suffix = np.concatenate([np.cumsum(full[by_low][::-1])[::-1], [0.0]])
        self.total = float(f.values.sum() * grid.cell_volume)
        self.grid = grid

    def superlevel(self, c: float) -> float:
        """Integral of f over {Q > c}."""
        if c == -np.inf:
            return self.total
        if c == np.inf:
            return 0.0
        start = np.searchsorted(self._low_sorted, c, side="right")
        full = float(self._suffix[start])
        cut = (self.q[:, 0] <= c) & (self.q[:, -1] > c)
        if not cut.any():
            return full
        q = self.q[cut]
        f = self.f[cut]
        if self.dim == 2:
            part = _clip_triangles(q, f, c)
        else:
            part = _clip_tetrahedra(q, f, c)
        return full + self.simplex_volume * float(part.sum())

    def strip(self, alpha: float, beta: float) -> float:
        if not alpha < beta:
            raise InvalidStrip(f"alpha={alpha} must be below beta={beta}")
        return self.superlevel(alpha) - self.superlevel(beta)


def _edge(q, f, i, j, c):
    """Fraction along edge i->j where Q = c, and f there."""
    s = (c - q[:, i]) / (q[:, j] - q[:, i])
    return s, f[:, i] + s * (f[:, j] - f[:, i])


def _clip_triangles(q, f, c):
    """Integral of f over {Q > c} per triangle, in units of the triangle area."""
    out = np.empty(len(q))
    low = q[:, 1] > c  # only vertex 0 below the level
    if low.any():
        qq, ff = q[low], f[low]
        s1, f1 = _edge(qq, ff, 0, 1, c)
        s2, f2 = _edge(qq, ff, 0, 2, c)
        out[low] = ff.mean(axis=1) - s1 * s2 * (ff[:, 0] + f1 + f2) / 3.0
    high = ~low  # only vertex 2 above the level
    if high.any():
        qq, ff = q[high], f[high]
        t0, f0 = _edge(qq, ff, 2, 0, c)
        t1, f1 = _edge(qq, ff, 2, 1, c)
        out[high] = t0 * t1 * (ff[:, 2] + f0 + f1) / 3.0
    return out


_REF_TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def _tet_fraction(a, b, c, d):
    """Volume of tetrahedra abcd relative to the reference tetrahedron."""
    return np.abs(np.einsum("ij,ij->i", b - a, np.cross(c - a, d - a)))


def _clip_tetrahedra(q, f, c):
    """Integral of f over {Q > c} per tetrahedron, in units of its volume."""
    out = np.empty(len(q))
    one = q[:, 1] > c  # only vertex 0 below
    three = q[:, 2] <= c  # only vertex 3 above
    two = ~(one | three)
    if one.any():
        qq, ff = q[one], f[one]
        s = [_edge(qq, ff, 0, k, c) for k in (1, 2, 3)]
        corner = s[0][0] * s[1][0] * s[2][0]
        out[one] = ff.mean(axis=1) - corner * (ff[:, 0] + s[0][1] + s[1][1] + s[2][1]) / 4.0
    if three.any():
        qq, ff = q[three], f[three]
        t = [_edge(qq, ff, 3, k, c) for k in (0, 1, 2)]
        corner = t[0][0] * t[1][0] * t[2][0]
        out[three] = corner * (ff[:, 3] + t[0][1] + t[1][1] + t[2][1]) / 4.0
    if two.any():
        qq, ff = q[two], f[two]
        R = _REF_TET
        pts, vals = {}, {}
        for i in (0, 1):
            for j in (2, 3):
                s, fv = _edge(qq, ff, i, j, c)
                pts[i, j] = R[i] + s[:, None] * (R[j] - R[i])
                vals[i, j] = fv
        m = len(qq)
        r2 = np.broadcast_to(R[2], (m, 3))
        r3 = np.broadcast_to(R[3], (m, 3))
        pieces = [
            ((r3, ff[:, 3]), (pts[0, 2], vals[0, 2]), (pts[0, 3], vals[0, 3]), (pts[1, 3], vals[1, 3])),
            ((r3, ff[:, 3]), (pts[0, 2], vals[0, 2]), (pts[1, 3], vals[1, 3]), (pts[1, 2], vals[1, 2])),
            ((r3, ff[:, 3]), (r2, ff[:, 2]), (pts[0, 2], vals[0, 2]), (pts[1, 2], vals[1, 2])),
        ]
        acc = np.zeros(m)
        for piece in pieces:
            frac = _tet_fraction(*(p for p, _ in piece))
            acc += frac * sum(v for _, v in piece) / 4.0
        out[two] = acc
    return out


def superlevel_integral(f: ScalarField, Q: ScalarField, c: float) -> float:
    return StripQuadrature(f, Q).superlevel(c)


def strip_volume_integral(f: ScalarField, Q: ScalarField, alpha: float, beta: float) -> float:
    """Integral of f over {alpha < Q < beta}; infinite bounds are allowed."""
    return StripQuadrature(f, Q).strip(alpha, beta)


# -- regularity guard -------------------------------------------------------


def check_regularity(
    Q: ScalarField,
    gradQ_norm: ScalarField,
    c: float,
    iso: Isosurface | None = None,
    factor: float = REGULARITY_FACTOR,
) -> RegularityReport:
    """Flag levels that pass (numerically) through critical points of Q.

    |grad Q| is sampled at every element centroid and vertex.  The level is
    regular when the minimum is at least ``factor`` times the median of
    |grad Q| over the whole torus.  Empty levels are not regular.
    """
    _check_grid(Q.grid, gradQ_norm.grid)
    threshold = factor * float(np.median(gradQ_norm.values))
    if iso is None:
        iso = extract_isosurface(Q, c)
    if iso.empty:
        return RegularityReport(c, 0.0, 0.0, False, threshold)
    at_centroids = interpolate(gradQ_norm, iso.centroid)
    at_vertices = interpolate(gradQ_norm, iso.vertices.reshape(-1, Q.grid.dim))
    min_grad = float(min(at_centroids.min(), at_vertices.min()))
    return RegularityReport(
        level=c,
        min_grad=min_grad,
        median_grad=float(np.median(at_centroids)),
        is_regular=min_grad >= threshold and threshold > 0,
        threshold=threshold,
    )


# -- mesh dump --------------------------------------------------------------


def write_isosurface(iso: Isosurface, path) -> Path:
    """Plain-text mesh: one element per line (vertex coords, measure, normal)."""
    path = Path(path)
    d = iso.grid.dim
    rows = np.hstack(
        [iso.vertices.reshape(len(iso), d * d), iso.measure[:, None], iso.normal]
    ) if len(iso) else np.zeros((0, d * d + 1 + d))
    header = f"level={iso.level!r} dim={d} n={iso.grid.n} elements={len(iso)}"
    np.savetxt(path, rows, fmt="%.17g", header=header)
    return path


def read_isosurface(path) -> Isosurface:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().lstrip("# ").split()
    meta = dict(item.split("=", 1) for item in header)
    d, n = int(meta["dim"]), int(meta["n"])
    grid = Grid(d, n)
    with warnings.catch_warnings():
        # an empty level set is a header-only file
        warnings.simplefilter("ignore", UserWarning)
        rows = np.loadtxt(path, ndmin=2).reshape(-1, d * d + 1 + d)
    verts = rows[:, : d * d].reshape(-1, d, d)
    return Isosurface(
        grid, float(meta["level"]), verts, rows[:, d * d], verts.mean(axis=1), rows[:, d * d + 1 :]
    )
