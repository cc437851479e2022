import numpy as np
import pytest

from bernoulli_ledger import levelset as ls
from bernoulli_ledger import spectral as sp
from bernoulli_ledger.errors import GridMismatch, InvalidStrip
from conftest import ORACLES, random_scalar, scalar


def cos2(n):
    return scalar(sp.Grid(2, n), lambda x, y: np.cos(x) + np.cos(y))


def grad_norm(Q):
    return sp.ScalarField(Q.grid, np.sqrt(sp.gradient(Q).norm_sq().values))


def constant_velocity(grid, u):
    return sp.VectorField.from_arrays(grid, [np.full(grid.shape, c) for c in u], divergence_free=True)


def cube_cos(n):
    return scalar(sp.Grid(3, n), lambda x, y, z: np.cos(x) + np.cos(y) + np.cos(z))


def level_area_near_max(c, m=200):
    """Area of the closed surface {cos x + cos y + cos z = c} around the origin.

    Radial Newton solve on a Gauss-Legendre x uniform sphere grid, with the
    area element r^2 / cos(angle between radius and normal).
    """
    mu, w = np.polynomial.legendre.leggauss(m)
    phi = np.linspace(0, 2 * np.pi, 2 * m, endpoint=False)
    MU, PHI = np.meshgrid(mu, phi, indexing="ij")
    st = np.sqrt(1 - MU**2)
    n = np.stack([st * np.cos(PHI), st * np.sin(PHI), MU])
    r = np.full(MU.shape, np.sqrt(2 * (3 - c)))
    for _ in range(30):
        x = r * n
        r = r - (np.cos(x).sum(0) - c) / (-np.sin(x) * n).sum(0)
    g = -np.sin(r * n)
    cosang = np.abs((g * n).sum(0)) / np.linalg.norm(g, axis=0)
    return float((r**2 / cosang * w[:, None]).sum() * np.pi / m)


class TestExtraction:
    def test_level_above_range_is_empty(self):
        Q = cos2(32)
        for c in (2.5, -2.5, np.nan):
            iso = ls.extract_isosurface(Q, c)
            assert iso.empty and iso.total_measure == 0

    def test_zero_level_length(self):
        iso = ls.extract_isosurface(cos2(128), 0.0)
        exact = ORACLES["cos2_level0_length_exact"]
        assert iso.total_measure == pytest.approx(exact, rel=5e-3)

    def test_small_sphere_quadratic_oracle(self):
        # near the maximum of cos x + cos y + cos z, Q ~ 3 - r^2/2
        c = 2.9
        iso = ls.extract_isosurface(cube_cos(64), c)
        assert iso.total_measure == pytest.approx(4 * np.pi * 2 * (3 - c), rel=1e-2)

    def test_small_sphere_converges_to_exact_area(self):
        # the quadratic oracle is itself 1% high at c = 2.9; against the exact
        # area the extraction error falls off at second order
        c = 2.9
        exact = level_area_near_max(c)
        errors = [abs(ls.extract_isosurface(cube_cos(n), c).total_measure / exact - 1) for n in (32, 64, 128)]
        assert errors[2] <= 5e-3
        assert np.all(np.log2(np.array(errors[:-1]) / errors[1:]) >= 1.8)

    @pytest.mark.parametrize("dim,n", [(2, 64), (3, 32)])
    def test_normals_point_uphill(self, dim, n):
        grid = sp.Grid(dim, n)
        Q = scalar(grid, lambda *xs: sum(np.cos(x) for x in xs))
        grad = sp.gradient(Q)
        for c in (-0.7, 0.3, 1.1):
            iso = ls.extract_isosurface(Q, c)
            g = np.stack([ls.interpolate(comp, iso.centroid) for comp in grad.components], axis=1)
            assert np.all(np.einsum("ij,ij->i", g, iso.normal) > 0)
            assert np.allclose(np.linalg.norm(iso.normal, axis=1), 1.0)

    @pytest.mark.parametrize("dim,n,seed", [(2, 256, 0), (3, 64, 1)])
    def test_normals_point_uphill_on_random_fields(self, dim, n, seed):
        # single-element disagreements come from cells where the sampled
        # gradient nearly vanishes; they must stay rare
        Q = random_scalar(sp.Grid(dim, n), seed=seed, kmax=3)
        grad = sp.gradient(Q)
        for c in np.quantile(Q.values, [0.25, 0.5, 0.75]):
            iso = ls.extract_isosurface(Q, c)
            g = np.stack([ls.interpolate(comp, iso.centroid) for comp in grad.components], axis=1)
            bad = np.einsum("ij,ij->i", g, iso.normal) <= 0
            assert bad.mean() <= 1e-3

    def test_saddle_level_is_closed(self):
        # c = 0 passes through the saddles of cos x + cos y; every vertex is still
        # shared by exactly two segments
        iso = ls.extract_isosurface(cos2(64), 0.0)
        pts = np.round(np.mod(iso.vertices.reshape(-1, 2), 2 * np.pi) / 1e-9).astype(np.int64)
        pts[pts == round(2 * np.pi / 1e-9)] = 0
        _, counts = np.unique(pts, axis=0, return_counts=True)
        assert np.all(counts % 2 == 0)


class TestSurfaceIntegrals:
    def test_constants(self):
        Q = cos2(64)
        iso = ls.extract_isosurface(Q, 0.4)
        one = scalar(Q.grid, lambda x, y: np.ones_like(x + y))
        assert ls.surface_integral(iso, one) == pytest.approx(iso.total_measure, rel=1e-12)
        assert ls.surface_integral(iso, Q.grid.zeros()) == 0

    def test_divergence_theorem(self):
        # the integral of |grad Q| over {Q = c} is minus the integral of lap Q over
        # {Q > c}, and lap Q = -Q here
        Q = cos2(256)
        iso = ls.extract_isosurface(Q, 0.5)
        value = ls.surface_integral(iso, grad_norm(Q))
        assert value == pytest.approx(ORACLES["cos2_superlevel_05_q_integral_quad"], rel=1e-2)

    def test_empty(self):
        Q = cos2(32)
        iso = ls.extract_isosurface(Q, 5.0)
        assert ls.surface_integral(iso, Q) == 0
        assert ls.flux_integral(constant_velocity(Q.grid, (1.0, 0.0)), iso) == 0

    def test_grid_mismatch(self):
        iso = ls.extract_isosurface(cos2(32), 0.1)
        with pytest.raises(GridMismatch):
            ls.surface_integral(iso, cos2(64))


class TestFlux:
    def test_rest(self):
        Q = cos2(64)
        iso = ls.extract_isosurface(Q, 0.2)
        assert ls.flux_integral(sp.VectorField.zeros(Q.grid), iso) == 0

    @pytest.mark.parametrize("dim,n", [(2, 64), (3, 32)])
    def test_constant_velocity(self, dim, n):
        # a closed periodic surface has zero net area vector
        grid = sp.Grid(dim, n)
        Q = random_scalar(grid, seed=4, kmax=2)
        iso = ls.extract_isosurface(Q, float(np.median(Q.values)))
        v = constant_velocity(grid, (0.3, -1.2, 0.7)[:dim])
        flux = ls.flux_integral(v, iso)
        assert abs(flux) <= 1e-10 * ls.speed_integral(v, iso)

    def test_speed_integral(self):
        Q = cos2(64)
        iso = ls.extract_isosurface(Q, 0.2)
        v = constant_velocity(Q.grid, (3.0, 4.0))
        assert ls.speed_integral(v, iso) == pytest.approx(5 * iso.total_measure, rel=1e-12)


class TestCoarea:
    def test_zero_integrand(self):
        Q = cos2(64)
        assert ls.coarea_level_integral(Q, Q.grid.zeros(), [-1, 0, 1]) == [0.0, 0.0]

    def test_partition(self):
        # summing bin averages times widths over the whole range gives the
        # volume integral of g |grad Q|
        Q = cos2(64)
        g = random_scalar(Q.grid, seed=2)
        levels = np.linspace(Q.values.min(), Q.values.max(), 9)
        bins = ls.coarea_level_integral(Q, g, levels)
        total = float((g.values * grad_norm(Q).values).sum() * Q.grid.cell_volume)
        assert np.dot(bins, np.diff(levels)) == pytest.approx(total, rel=1e-12)

    def test_matches_surface_integral(self):
        Q = cos2(256)
        g = scalar(Q.grid, lambda x, y: 1.0 + 0.5 * np.sin(x) * np.cos(2 * y))
        c = 0.6
        lo, hi = ls.coarea_bin(c, -2.0, 2.0)
        (coarea,) = ls.coarea_level_integral(Q, g, [lo, hi], upsample=4)
        surface = ls.surface_integral(ls.extract_isosurface(Q, c), g)
        assert coarea == pytest.approx(surface, rel=2e-2)

    def test_bad_levels(self):
        Q = cos2(32)
        with pytest.raises(ValueError):
            ls.coarea_level_integral(Q, Q, [0.5])
        with pytest.raises(ValueError):
            ls.coarea_level_integral(Q, Q, [0.5, 0.1])

    def test_bin_stays_away_from_extremes(self):
        lo, hi = ls.coarea_bin(0.0, -2.0, 2.0)
        assert (lo, hi) == pytest.approx((-0.1, 0.1))
        lo, hi = ls.coarea_bin(1.98, -2.0, 2.0)
        assert hi == pytest.approx(1.99) and lo == pytest.approx(1.97)
        with pytest.raises(ValueError):
            ls.coarea_bin(2.0, -2.0, 2.0)


class TestStripVolume:
    def test_area(self):
        Q = cos2(256)
        one = scalar(Q.grid, lambda x, y: np.ones_like(x + y))
        area = ls.strip_volume_integral(one, Q, 0.0, 0.5)
        assert area == pytest.approx(ORACLES["cos2_strip_0_05_area_quad"], rel=5e-3)

    @pytest.mark.parametrize("dim,n", [(2, 32), (3, 16)])
    def test_whole_torus(self, dim, n):
        grid = sp.Grid(dim, n)
        one = scalar(grid, lambda *xs: np.ones_like(sum(xs)))
        Q = random_scalar(grid, seed=1)
        for lo, hi in [(-np.inf, np.inf), (Q.values.min() - 1, Q.values.max() + 1)]:
            assert ls.strip_volume_integral(one, Q, lo, hi) == pytest.approx((2 * np.pi) ** dim, rel=1e-13)

    @pytest.mark.parametrize("dim,n", [(2, 64), (3, 16)])
    def test_additivity(self, dim, n):
        grid = sp.Grid(dim, n)
        Q = random_scalar(grid, seed=3)
        f = random_scalar(grid, seed=4)
        quad = ls.StripQuadrature(f, Q)
        a, b, c = np.quantile(Q.values, [0.2, 0.45, 0.9])
        scale = float(np.abs(f.values).sum() * grid.cell_volume)
        assert abs(quad.strip(a, b) + quad.strip(b, c) - quad.strip(a, c)) <= 1e-12 * scale

    def test_linear_case_is_exact(self):
        # on one simplex with linear Q and f the clipped integral is exact, so a
        # piecewise-linear Q whose levels are lattice-aligned gives exact areas
        g = sp.Grid(3, 16)
        one = scalar(g, lambda x, y, z: np.ones_like(x + y + z))
        Q = scalar(g, lambda x, y, z: np.cos(x) + 0 * y + 0 * z)
        h = g.spacing
        lo, hi = np.cos(3 * h), np.cos(h)
        # {cos h < cos x < ...} between grid lines is linear in x within each cell
        area = ls.strip_volume_integral(one, Q, lo, hi)
        assert area == pytest.approx(2 * 2 * h * (2 * np.pi) ** 2, rel=1e-12)

    def test_invalid_strip(self):
        Q = cos2(32)
        with pytest.raises(InvalidStrip):
            ls.strip_volume_integral(Q, Q, 0.5, 0.5)
        with pytest.raises(InvalidStrip):
            ls.LevelStrip(0.6, 0.2, None, None)


class TestRegularity:
    def test_saddle_and_regular_levels(self):
        Q = cos2(128)
        gn = grad_norm(Q)
        assert not ls.check_regularity(Q, gn, 0.0).is_regular
        report = ls.check_regularity(Q, gn, 0.5)
        assert report.is_regular and report.min_grad > report.threshold > 0

    def test_empty_level(self):
        Q = cos2(32)
        report = ls.check_regularity(Q, grad_norm(Q), 3.0)
        assert not report.is_regular and report.min_grad == 0

    def test_flat_field(self):
        g = sp.Grid(2, 16)
        Q = scalar(g, lambda x, y: np.full_like(x + y, 0.25))
        report = ls.check_regularity(Q, g.zeros(), 0.25)
        assert not report.is_regular


class TestMeshDump:
    @pytest.mark.parametrize("dim,n", [(2, 32), (3, 16)])
    def test_round_trip(self, tmp_path, dim, n):
        grid = sp.Grid(dim, n)
        Q = random_scalar(grid, seed=0, kmax=2)
        iso = ls.extract_isosurface(Q, float(np.median(Q.values)))
        back = ls.read_isosurface(ls.write_isosurface(iso, tmp_path / "mesh.txt"))
        assert back.grid == grid and back.level == iso.level
        for name in ("vertices", "measure", "centroid", "normal"):
            assert np.allclose(getattr(back, name), getattr(iso, name), rtol=0, atol=1e-15)

    def test_empty(self, tmp_path):
        iso = ls.extract_isosurface(cos2(16), 9.0)
        back = ls.read_isosurface(ls.write_isosurface(iso, tmp_path / "empty.txt"))
        assert back.empty
