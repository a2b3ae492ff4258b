"""Hot-loop kernels: known-answer vectors and agreement between the two backends."""
import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from mckv import _backend
from tests.conftest import BACKENDS

# Random123 known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF, 0xFFFFFFFF), (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(backend, ctr, key, expected):
    out = backend.philox4x32(np.array([ctr], dtype=np.uint64), key)
    assert tuple(int(v) for v in out[0]) == expected


def test_uniforms_open_interval_and_stream_independence(backend):
    u = backend.uniforms(5, np.arange(1000, dtype=np.uint64), 3, 4, 0)
    assert u.shape == (1000, 4)
    assert np.all((u > 0) & (u < 1))
    # a stream's draws do not depend on which other streams are requested
    sub = backend.uniforms(5, np.array([17, 400], dtype=np.uint64), 3, 4, 0)
    np.testing.assert_array_equal(sub, u[[17, 400]])


def test_normals_moments(backend):
    z = backend.normals(1, np.arange(200_000, dtype=np.uint64), 0, 2, 0).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / z.size)


def test_domains_and_steps_differ(backend):
    s = np.arange(8, dtype=np.uint64)
    a = backend.uniforms(0, s, 0, 2, 0)
    assert not np.array_equal(a, backend.uniforms(0, s, 0, 2, 1))
    assert not np.array_equal(a, backend.uniforms(0, s, 1, 2, 0))
    assert not np.array_equal(a, backend.uniforms(1, s, 0, 2, 0))


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
class TestBackendAgreement:
    py = _backend.python_kernels
    cy = _backend.compiled_kernels

    def test_uniforms_bit_identical(self):
        s = np.arange(5000, dtype=np.uint64) * 7919
        np.testing.assert_array_equal(self.py.uniforms(9, s, 11, 3, 2),
                                      self.cy.uniforms(9, s, 11, 3, 2))

    def test_normals_agree(self):
        s = np.arange(5000, dtype=np.uint64)
        np.testing.assert_allclose(self.py.normals(9, s, 2, 3, 0),
                                   self.cy.normals(9, s, 2, 3, 0), rtol=0, atol=1e-14)

    def test_kde_agree(self, rng):
        xs = np.sort(rng.normal(size=3000))
        q = np.linspace(-4, 4, 501)
        np.testing.assert_allclose(self.py.kde_sorted(xs, q, 8, 2.25),
                                   self.cy.kde_sorted(xs, q, 8, 2.25), rtol=1e-13, atol=1e-15)

    def test_w1d_agree(self, rng):
        for p in (1.0, 2.0, 3.5):
            x, y = np.sort(rng.normal(size=40)), np.sort(rng.normal(size=55))
            wx, wy = rng.dirichlet(np.ones(40)), rng.dirichlet(np.ones(55))
            assert abs(self.py.wasserstein_1d_cost(x, wx, y, wy, p)
                       - self.cy.wasserstein_1d_cost(x, wx, y, wy, p)) < 1e-12

    def test_thomas_agree(self, rng):
        n = 300
        lo, up = -rng.random(n), -rng.random(n)
        diag = 3 + rng.random(n)
        rhs = rng.normal(size=n)
        np.testing.assert_allclose(self.py.thomas(lo, diag, up, rhs),
                                   self.cy.thomas(lo, diag, up, rhs), rtol=1e-12)

    def test_simplex_agree(self, rng):
        a, b = rng.dirichlet(np.ones(30)), rng.dirichlet(np.ones(25))
        c = rng.random((30, 25))
        pa, _ = self.py.network_simplex(a, b, c)
        pb, _ = self.cy.network_simplex(a, b, c)
        assert abs(np.sum(pa * c) - np.sum(pb * c)) < 1e-12


def test_kde_pruned_equals_naive(backend, rng):
    xs = np.sort(rng.normal(size=2000))
    q = rng.normal(size=300)
    np.testing.assert_array_equal(backend.kde_sorted(xs, q, 16, 2.25),
                                  backend.kde_naive(xs, q, 16, 2.25))


def test_thomas_solves_tridiagonal(backend, rng):
    n = 50
    lo, up, diag = -rng.random(n), -rng.random(n), 3 + rng.random(n)
    A = np.diag(diag) + np.diag(up[:-1], 1) + np.diag(lo[1:], -1)
    x = rng.normal(size=n)
    np.testing.assert_allclose(backend.thomas(lo, diag, up, A @ x), x, rtol=1e-10)


def test_simplex_matches_assignment(backend, rng):
    n = 40
    c = rng.random((n, n))
    r, k = linear_sum_assignment(c)
    plan, _ = backend.network_simplex(np.full(n, 1 / n), np.full(n, 1 / n), c)
    assert abs(np.sum(plan * c) - c[r, k].mean()) < 1e-12
    np.testing.assert_allclose(plan.sum(1), 1 / n, atol=1e-12)
    np.testing.assert_allclose(plan.sum(0), 1 / n, atol=1e-12)
