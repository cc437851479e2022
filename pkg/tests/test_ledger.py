import csv

import numpy as np
import pytest

from bernoulli_ledger import bernoulli as be
from bernoulli_ledger import dynamics as dy
from bernoulli_ledger import ledger as lg
from bernoulli_ledger import spectral as sp
from bernoulli_ledger.errors import InvalidStrip, MissingFullRange
from conftest import ORACLES


@pytest.fixture(scope="module")
def tg256():
    state = dy.init_taylor_green_2d(sp.Grid(2, 256), nu=ORACLES["taylor_green_strip"]["nu"])
    return state, be.compute_bundle(state)


@pytest.fixture(scope="module")
def random128():
    state = dy.init_random_solenoidal(sp.Grid(2, 128), seed=0, peak_wavenumber=3.0, nu=0.01)
    return state, be.compute_bundle(state)


class TestEntry:
    def test_rest(self, grid2):
        state = dy.init_zero(grid2, 0.1)
        e = lg.assemble_entry(be.compute_bundle(state), state, 0.1, 0.2)
        assert (e.volume_term, e.beta_flux, e.alpha_flux, e.residual) == (0, 0, 0, 0)

    def test_steady_euler(self, grid2):
        state = dy.init_taylor_green_2d(grid2, 0.0)
        b = be.compute_bundle(state)
        e = lg.assemble_entry(b, state, 0.1, 0.3)
        assert e.beta_flux == e.alpha_flux == 0
        assert abs(e.volume_term) <= 1e-11

    def test_taylor_green_against_oracle(self, tg256):
        state, bundle = tg256
        ref = ORACLES["taylor_green_strip"]
        alpha, beta = lg.quantile_levels(bundle, ref["quantiles"])
        assert alpha == pytest.approx(ref["alpha"], abs=1e-12)
        assert beta == pytest.approx(ref["beta"], abs=1e-12)
        e = lg.assemble_entry(bundle, state, alpha, beta)
        assert e.relative_residual <= 0.02
        assert e.volume_term == pytest.approx(ref["volume_quad"], rel=0.02)
        assert e.beta_flux == pytest.approx(ref["beta_flux_quad"], rel=0.02)
        assert e.alpha_flux == pytest.approx(ref["alpha_flux_quad"], rel=0.02)
        assert e.is_regular and e.is_interior
        assert abs(e.residual) < abs(e.opposite_residual)

    def test_invalid_strip(self, tg64):
        b = be.compute_bundle(tg64)
        with pytest.raises(InvalidStrip):
            lg.assemble_entry(b, tg64, 0.3, 0.3)

    def test_one_sided_levels(self, tg64):
        b = be.compute_bundle(tg64)
        e = lg.assemble_entry(b, tg64, b.q_min, 0.3)
        assert e.alpha_flux == 0 and e.alpha_report.degenerate and e.beta_flux > 0
        e = lg.assemble_entry(b, tg64, 0.3, b.q_max + 1.0)
        assert e.beta_flux == 0 and e.beta_report.degenerate

    def test_scaling_covariance(self, random128):
        # v -> s v with nu -> s nu is the time rescaling t -> t / s; both sides
        # of every strip scale by s^3 at fixed levels s^2 c
        state, bundle = random128
        s = 1.7
        scaled = dy.FlowState(state.v.scaled(s), s * state.nu)
        b2 = be.compute_bundle(scaled)
        a, c = lg.quantile_levels(bundle, [0.3, 0.6])
        e1 = lg.assemble_entry(bundle, state, a, c)
        e2 = lg.assemble_entry(b2, scaled, s**2 * a, s**2 * c)
        for name in ("volume_term", "beta_flux", "alpha_flux"):
            assert getattr(e2, name) == pytest.approx(s**3 * getattr(e1, name), rel=1e-10)


class TestSweep:
    def test_single_level(self, tg64):
        b = be.compute_bundle(tg64)
        table = lg.sweep_levels(b, tg64, [0.25])
        assert len(table) == 3
        lower, upper = table.partition()
        assert lower.alpha == b.q_min and lower.beta == 0.25
        assert upper.alpha == 0.25 and upper.beta == b.q_max
        assert table.full_range().alpha == b.q_min

    def test_telescoping(self, random128):
        state, bundle = random128
        levels = lg.quantile_levels(bundle, [0.25, 0.5, 0.75])
        table = lg.sweep_levels(bundle, state, levels)
        assert len(table) == 5
        parts = table.partition()
        full = table.full_range()
        scale = max(abs(full.volume_term), max(abs(e.volume_term) for e in parts))
        assert abs(sum(e.volume_term for e in parts) - full.volume_term) <= 1e-10 * scale
        assert sum(e.residual for e in parts) == pytest.approx(full.residual, abs=1e-10 * scale)

    def test_no_levels(self, tg64):
        b = be.compute_bundle(tg64)
        table = lg.sweep_levels(b, tg64, [])
        assert len(table) == 1
        e = table.entries[0]
        assert e.alpha == b.q_min and e.beta == b.q_max

    def test_global_limit(self, random128):
        state, bundle = random128
        table = lg.sweep_levels(bundle, state, lg.quantile_levels(bundle, [0.5]))
        diss = state.nu * bundle.enstrophy_density.integral()
        assert abs(lg.verify_global_limit(table)) <= 1e-8 * diss

    def test_missing_full_range(self, tg64):
        b = be.compute_bundle(tg64)
        table = lg.sweep_levels(b, tg64, [0.25])
        table.entries = table.partition()
        with pytest.raises(MissingFullRange):
            lg.verify_global_limit(table)

    def test_unsorted_levels(self, tg64):
        with pytest.raises(ValueError):
            lg.sweep_levels(be.compute_bundle(tg64), tg64, [0.3, 0.1])

    def test_csv(self, tmp_path, tg64):
        b = be.compute_bundle(tg64)
        path = lg.sweep_levels(b, tg64, [0.1, 0.3]).write_csv(tmp_path / "ledger.csv")
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == lg.CSV_COLUMNS
        assert len(rows) == 4
        assert float(rows[0]["alpha"]) == b.q_min
        assert rows[1]["alpha_regular"] in ("0", "1")


class TestSignConstraints:
    def test_taylor_green(self, tg256):
        state, bundle = tg256
        levels = lg.quantile_levels(bundle, np.arange(0.1, 0.95, 0.1))
        checks = lg.verify_sign_constraints(bundle, state, levels)
        for check in checks:
            assert check.sign_ok
            assert check.upper == pytest.approx(-check.flux, rel=0.02)
            assert check.lower == pytest.approx(check.flux, rel=0.02)

    def test_degenerate_levels(self, tg64):
        b = be.compute_bundle(tg64)
        checks = lg.verify_sign_constraints(b, tg64, [b.q_min - 1, b.q_max + 1])
        assert all(ok for _, ok in checks)

    def test_wrong_sign_is_caught(self, tg64):
        # time reversal flips d/dt |v|^2 / 2 but not the dissipation
        b = be.compute_bundle(tg64)
        flipped = be.BernoulliBundle(**{**b.__dict__, "dt_kin": -b.dt_kin})
        checks = lg.verify_sign_constraints(flipped, tg64, [0.25])
        assert not checks[0].sign_ok


class TestConvergence:
    def test_rest_is_exact(self):
        r = lg.convergence_study(lambda g: dy.init_zero(g, 0.1), 0.1, (0.3, 0.7), [16, 32, 64])
        assert r.status == "exact" and r.fitted_order is None

    def test_taylor_green(self):
        r = lg.convergence_study(lambda g: dy.init_taylor_green_2d(g, 0.01), 0.01, (0.3, 0.7), [64, 128, 256])
        assert r.status == "ok" and r.monotone
        assert 1.5 <= r.fitted_order <= 4
        assert len(r.pairwise_orders) == 2

    def test_near_critical_strip_is_excluded(self):
        # Taylor-Green Q reaches its maximum 1/2 along the grid lines x, y in
        # {0, pi}, so the top quantile sits on a critical value
        r = lg.convergence_study(lambda g: dy.init_taylor_green_2d(g, 0.01), 0.01, (0.5, 1.0), [32, 64, 128])
        assert r.status == "excluded"
        assert r.fitted_order is None

    def test_resolution_rules(self):
        ic = lambda g: dy.init_taylor_green_2d(g, 0.01)
        with pytest.raises(ValueError):
            lg.convergence_study(ic, 0.01, (0.3, 0.7), [64, 128])
        with pytest.raises(ValueError):
            lg.convergence_study(ic, 0.01, (0.3, 0.7), [32, 64, 256])

    def test_fit_order(self):
        n = [32, 64, 128]
        assert lg.fit_order(n, [1.0 / k**2 for k in n]) == pytest.approx(2.0)

    def test_json(self, tmp_path):
        r = lg.convergence_study(lambda g: dy.init_zero(g, 0.1), 0.1, (0.3, 0.7), [16, 32, 64])
        path = lg.write_json(r.to_dict(), tmp_path / "c.json")
        assert '"status": "exact"' in path.read_text()
