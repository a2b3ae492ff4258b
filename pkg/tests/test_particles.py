import math

import numpy as np
import pytest

from mckv._backend import kernels
from mckv.coefficients import scenario, zero_coefficients
from mckv.grid import GridDensity, gaussian_density, uniform_density
from mckv.mollify import MollifierFamily
from mckv.particles import (DOMAIN_EM, ParticleCloud, ParticleStateError, SimConfig,
                            TrajectoryStore, em_step, sample_initial, simulate)


class TestSampleInitial:
    def test_support(self):
        l = uniform_density(0, 1, -1, 2, 300)
        c = sample_initial(l, 4, seed=1)
        assert np.all((c.positions >= 0) & (c.positions <= 1))

    def test_mean_clt(self):
        l = uniform_density(0, 1, -1, 2, 300)
        c = sample_initial(l, 10**6, seed=2)
        assert abs(c.positions.mean() - 0.5) <= 4 * (1 / math.sqrt(12)) / math.sqrt(1e6)

    def test_determinism(self):
        l = gaussian_density(0, 1, -8, 8, 800)
        a, b = sample_initial(l, 100, 5), sample_initial(l, 100, 5)
        np.testing.assert_array_equal(a.positions, b.positions)
        assert not np.array_equal(a.positions, sample_initial(l, 100, 6).positions)

    def test_prefix_stable_in_N(self):
        l = gaussian_density(0, 1, -8, 8, 800)
        np.testing.assert_array_equal(sample_initial(l, 50, 3).positions,
                                      sample_initial(l, 500, 3).positions[:50])

    def test_zero_mass(self):
        with pytest.raises(ValueError):
            sample_initial(GridDensity([0.0], [0.1], np.zeros(10)), 10, 0)

    def test_2d_rejection(self):
        g = np.zeros((40, 40))
        g[10:30, 10:30] = 1.0
        l = GridDensity([0.0, 0.0], [0.05, 0.05], g / (g.sum() * 0.0025))
        c = sample_initial(l, 4000, 1)
        assert np.all((c.positions >= 0.5) & (c.positions <= 1.5))
        assert abs(c.positions.mean() - 1.0) < 0.03


class TestEMStep:
    fam = MollifierFamily(8)

    def test_zero_coefficients(self):
        c = ParticleCloud(np.linspace(-1, 1, 11), 0.2)
        out = em_step(c, zero_coefficients(), self.fam, 0.1, np.ones((11, 1)))
        np.testing.assert_array_equal(out.positions, c.positions)
        assert out.time == pytest.approx(0.3)

    def test_translation(self):
        c = ParticleCloud(np.linspace(-1, 1, 11))
        out = em_step(c, scenario("translation", c=1.0, eps=0.0), self.fam, 0.1,
                      np.random.default_rng(0).normal(size=(11, 1)))
        np.testing.assert_array_equal(out.positions, c.positions + 0.1)

    def test_gaussian_increment_variance(self):
        N, dt = 10**6, 0.01
        noise = kernels.normals(1, np.arange(N, dtype=np.uint64), 0, 1, DOMAIN_EM)
        out = em_step(ParticleCloud(np.zeros(N)), scenario("pure-diffusion"), self.fam, dt, noise)
        assert abs(out.positions.var() - dt) <= 3 * dt * math.sqrt(2 / N)

    def test_noise_shape_checked(self):
        with pytest.raises(ValueError):
            em_step(ParticleCloud(np.zeros(3)), scenario("pure-diffusion"), self.fam, 0.1,
                    np.zeros((2, 1)))

    def test_nonfinite_aborts_with_index(self):
        cs = scenario("pure-diffusion")
        noise = np.zeros((3, 1))
        noise[1, 0] = np.inf
        with pytest.raises(ParticleStateError, match="particle 1"):
            em_step(ParticleCloud(np.zeros(3)), cs, self.fam, 0.1, noise)

    def test_order_independent(self, rng):
        cs = scenario("tanh-mean")
        x = rng.normal(size=400)
        z = rng.normal(size=(400, 1))
        perm = rng.permutation(400)
        a = em_step(ParticleCloud(x), cs, self.fam, 0.01, z)
        b = em_step(ParticleCloud(x[perm]), cs, self.fam, 0.01, z[perm])
        np.testing.assert_array_equal(a.positions[perm], b.positions)


def small_config(**kw):
    base = dict(N=2000, T=0.2, dt=0.01, n_mollifier=8, seed=3,
                snapshot_times=(0.0, 0.05, 0.1, 0.2))
    base.update(kw)
    return SimConfig(**base)


class TestSimulate:
    l = gaussian_density(0, 1, -10, 10, 2000)

    def test_snapshot_times(self):
        st = simulate(small_config(), scenario("tanh-mean"), self.l)
        assert st.times().tolist() == [0.0, 0.05, 0.1, 0.2]

    def test_bit_identical_reruns_and_threads(self):
        cs = scenario("tanh-mean")
        a = simulate(small_config(kde_method="exact"), cs, self.l)
        b = simulate(small_config(kde_method="exact"), cs, self.l, threads=4)
        assert a.content_hash() == b.content_hash()
        assert a.snapshots_csv() == b.snapshots_csv()

    def test_exchangeability(self):
        cs = scenario("density-repulsion")
        cfg = small_config(N=500, kde_method="exact")
        x0 = sample_initial(self.l, 500, 11)
        perm = np.random.default_rng(1).permutation(500)
        streams = np.arange(500, dtype=np.uint64)
        a = simulate(cfg, cs, self.l, initial=x0, streams=streams)
        b = simulate(cfg, cs, self.l, initial=ParticleCloud(x0.positions[perm]),
                     streams=streams[perm])
        np.testing.assert_array_equal(a.cloud_at(0.2).positions[perm],
                                      b.cloud_at(0.2).positions)

    def test_translation_exact_flow(self):
        cfg = small_config(T=1.0, dt=0.125, snapshot_times=(0.0, 0.5, 1.0))
        st = simulate(cfg, scenario("translation", c=1.0, eps=0.0), self.l)
        x0 = st.cloud_at(0.0).positions
        np.testing.assert_allclose(st.cloud_at(1.0).positions, x0 + 1.0, rtol=0, atol=1e-13)

    def test_tanh_mean_linear_growth(self):
        cs = scenario("tanh-mean")
        cfg = small_config(T=1.0, dt=0.01, snapshot_times=(0.0, 1.0), N=1000)
        st = simulate(cfg, cs, self.l)
        x0 = st.cloud_at(0.0).positions[:, 0]
        x1 = st.cloud_at(1.0).positions[:, 0]
        # bounded drift 1 + 2.5; Brownian part below 6 standard deviations
        assert np.all(np.abs(x1) <= np.abs(x0) + 3.5 + 6.0)

    def test_pure_diffusion_variance(self):
        cfg = SimConfig(N=20000, T=1.0, dt=0.01, seed=8)
        st = simulate(cfg, scenario("pure-diffusion"), self.l)
        assert abs(st.cloud_at(1.0).positions.var() - 2.0) <= 3 * 2 * math.sqrt(2 / 20000)

    def test_wall_clock_budget(self):
        cfg = small_config(T=5.0, snapshot_times=(0.0, 5.0), max_wall_seconds=1e-9)
        st = simulate(cfg, scenario("tanh-mean"), self.l)
        assert not st.complete
        assert st.metadata["complete"] is False

    def test_save_load(self, tmp_path):
        st = simulate(small_config(), scenario("tanh-mean"), self.l)
        st.save(tmp_path)
        back = TrajectoryStore.load(tmp_path)
        for (t, c), (u, d) in zip(st.snapshots, back.snapshots):
            assert t == u
            np.testing.assert_array_equal(c.positions, d.positions)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            small_config(snapshot_times=(0.0, 0.055))
        with pytest.raises(ValueError):
            small_config(p=0.5)
        with pytest.raises(ValueError):
            small_config(snapshot_times=(0.1, 0.05))

    def test_2d_runs(self):
        g = np.ones((20, 20))
        l = GridDensity([-1.0, -1.0], [0.1, 0.1], g / (g.sum() * 0.01))
        cfg = SimConfig(N=300, T=0.05, dt=0.01, d=2, n_mollifier=2)
        st = simulate(cfg, scenario("density-repulsion", d=2), l)
        assert st.cloud_at(0.05).positions.shape == (300, 2)
