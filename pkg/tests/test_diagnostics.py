import math

import numpy as np
import pytest
from scipy.stats import norm

from mckv.coefficients import scenario, zero_coefficients
from mckv.diagnostics import (EstimateReport, density_bound_fit, density_snapshot,
                              holder_time_fit, krylov_functional, off_grid_mass,
                              tail_and_moments)
from mckv.grid import gaussian_density, uniform_density, uniform_grid
from mckv.mollify import MollifierFamily, UnderResolvedError, mollifier_eval
from mckv.particles import ParticleCloud, SimConfig, sample_initial, simulate

# integral over [0, 1] of P(|N(0, 1 + s)| <= 1) ds (mpmath quadrature)
KRYLOV_BALL = 0.590961779062125913
# E[|Z|; |Z| > 3] = 2 phi(3)
GAUSS_TAIL_3 = 0.00886369682387601435

DYADIC = tuple(np.round(np.arange(0, 1.0001, 1 / 16), 12))


class TestDensitySnapshot:
    def test_uniform_cloud(self):
        l = uniform_density(0, 1, -1, 2, 300)
        cloud = sample_initial(l, 100_000, 4)
        grid = uniform_grid(-0.5, 1.5, 400)
        d = density_snapshot(cloud, MollifierFamily(16), grid)
        inner = (d.axis(0) > 0.2) & (d.axis(0) < 0.8)
        assert np.max(np.abs(d.values[inner] - 1.0)) < 0.08

    def test_point_cloud_is_kernel(self):
        fam = MollifierFamily(4)
        grid = uniform_grid(-1, 1, 200)
        d = density_snapshot(ParticleCloud(np.zeros(10)), fam, grid)
        ref = np.array([mollifier_eval(fam, [x]) for x in d.axis(0)])
        np.testing.assert_allclose(d.values, ref, rtol=1e-13)

    def test_off_grid_mass_accounting(self, rng):
        fam = MollifierFamily(8)
        grid = uniform_grid(-1, 1, 400)
        d = density_snapshot(ParticleCloud(rng.normal(size=5000)), fam, grid)
        assert d.mass() + off_grid_mass(d) == pytest.approx(1.0, abs=1e-9)
        assert off_grid_mass(d) == pytest.approx(2 * norm.sf(1.0), abs=0.03)

    def test_under_resolved(self):
        with pytest.raises(UnderResolvedError):
            density_snapshot(ParticleCloud(np.zeros(3)), MollifierFamily(16), uniform_grid(-1, 1, 20))

    def test_bound_fit(self):
        l = gaussian_density(0, 1, -5, 5, 100)
        rep = density_bound_fit([l, l.with_values(l.values * 0.5)], l)
        assert rep.fitted_constant == 1.0


class TestHolder:
    l = gaussian_density(0, 1, -10, 10, 2000)

    def test_translation_slope_one(self):
        cfg = SimConfig(N=500, T=1.0, dt=1 / 64, snapshot_times=DYADIC)
        st = simulate(cfg, scenario("translation", c=1.0, eps=0.0), self.l)
        rep = holder_time_fit(st, 1.0)
        assert rep.exponent_fit == pytest.approx(1.0, abs=1e-6)
        assert rep.fitted_constant == pytest.approx(1.0, rel=1e-6)

    def test_frozen_cloud_flagged(self):
        cfg = SimConfig(N=100, T=1.0, dt=1 / 16, snapshot_times=DYADIC)
        rep = holder_time_fit(simulate(cfg, zero_coefficients(), self.l), 1.0)
        assert rep.flags and not rep.passed
        assert rep.fitted_constant == 0.0

    def test_too_few_gaps(self):
        cfg = SimConfig(N=100, T=1.0, dt=0.5, snapshot_times=(0.0, 0.5, 1.0))
        with pytest.raises(ValueError, match="distinct"):
            holder_time_fit(simulate(cfg, scenario("pure-diffusion"), self.l))

    def test_law_distances_match_gaussian_closed_form(self):
        cfg = SimConfig(N=100_000, T=1.0, dt=1 / 64, seed=2, snapshot_times=(0.0, 0.25, 0.5, 0.75, 1.0))
        st = simulate(cfg, scenario("pure-diffusion"), self.l)
        rep = holder_time_fit(st, 1.0)
        pairs = [(s, t) for i, s in enumerate((0.25, 0.5, 0.75, 1.0)) for t in (0.25, 0.5, 0.75, 1.0)[i + 1:]]
        expected = [math.sqrt(2 / math.pi) * (math.sqrt(1 + t) - math.sqrt(1 + s)) for s, t in pairs]
        np.testing.assert_allclose(rep.details["distances"], expected, atol=0.012)

    def test_coupling_slope_half(self):
        cfg = SimConfig(N=20_000, T=1.0, dt=1 / 64, seed=1, snapshot_times=DYADIC)
        st = simulate(cfg, scenario("pure-diffusion"), self.l)
        rep = holder_time_fit(st, 1.0, method="coupling")
        assert 0.45 <= rep.exponent_fit <= 0.55


class TestTails:
    def test_inside_ball(self, rng):
        x = rng.uniform(-0.5, 0.5, (1000, 2))
        rep = tail_and_moments(ParticleCloud(x), 1.0, [2.0])
        assert rep.details["tail"][0] == 0.0

    def test_gaussian_partial_moment(self, rng):
        z = rng.normal(size=10**6)
        rep = tail_and_moments(ParticleCloud(z), 1.0, [1.0, 2.0, 3.0])
        assert rep.details["tail"][-1] == pytest.approx(GAUSS_TAIL_3, rel=0.3)
        assert rep.passed

    def test_moment_monotone_in_p_outside_ball(self, rng):
        x = 1 + rng.exponential(size=2000)
        cloud = ParticleCloud(x)
        m = [tail_and_moments(cloud, p, [1.0]).fitted_constant for p in (1.0, 1.5, 2.0, 4.0)]
        assert all(a <= b for a, b in zip(m, m[1:]))

    def test_report_rejects_negative_constant(self):
        with pytest.raises(ValueError):
            EstimateReport("x", -1.0)


class TestKrylov:
    l = gaussian_density(0, 1, -10, 10, 2000)

    def dense(self, N=2000, seed=0):
        cfg = SimConfig(N=N, T=1.0, dt=0.01, seed=seed, dense=True)
        return simulate(cfg, scenario("pure-diffusion"), self.l)

    def test_constant(self):
        st = self.dense(200)
        for j in (1, 2, 3):
            assert krylov_functional(st, lambda t, x: np.ones(len(x)), j).value == pytest.approx(1.0, rel=1e-12)

    def test_half_interval(self):
        st = self.dense(200)
        g = lambda t, x: np.full(len(x), 1.0 if t <= 0.5 + 1e-12 else 0.0)
        for j in (1, 2):
            assert krylov_functional(st, g, j).value == pytest.approx(0.5**j, rel=1e-12)

    def test_gaussian_ball(self):
        st = self.dense(20_000, seed=3)
        est = krylov_functional(st, lambda t, x: (np.abs(x[:, 0]) <= 1).astype(float), 1)
        assert abs(est.value - KRYLOV_BALL) <= 3 * est.stderr

    def test_needs_dense(self):
        cfg = SimConfig(N=10, T=0.1, dt=0.01)
        with pytest.raises(ValueError, match="dense"):
            krylov_functional(simulate(cfg, scenario("pure-diffusion"), self.l), lambda t, x: x, 1)
