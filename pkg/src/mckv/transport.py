"""Wasserstein distances, Kantorovich dual values and weighted total variation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from mckv._backend import kernels
from mckv.grid import GridDensity

LP_MAX_SUPPORT = 512
SUBSAMPLE_SIZE = 512


@dataclass
class DiscreteMeasure:
    """Weighted point support; ``points`` is (M, d)."""

    points: np.ndarray
    weights: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        self.points = pts
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if self.check:
            if pts.ndim != 2 or pts.shape[0] != self.weights.shape[0]:
                raise ValueError("points and weights must have equal length")
            if pts.shape[0] == 0:
                raise ValueError("empty support")
            if np.any(self.weights < 0):
                raise ValueError("weights must be nonnegative")
            if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
                raise ValueError(f"weights sum to {np.sum(self.weights)!r}, not 1")
            if not np.all(np.isfinite(pts)):
                raise ValueError("support points must be finite")

    @classmethod
    def uniform(cls, points, check: bool = True) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=np.float64)
        n = pts.shape[0]
        return cls(pts, np.full(n, 1.0 / n), check=check)

    @classmethod
    def dirac(cls, x) -> "DiscreteMeasure":
        return cls(np.atleast_2d(np.asarray(x, dtype=np.float64)), [1.0])

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def moment(self, p: float) -> float:
        return float(self.weights @ np.linalg.norm(self.points, axis=1) ** p)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k}" for k in range(self.d)] + ["weight"])
            for pt, wt in zip(self.points, self.weights):
                w.writerow([repr(float(v)) for v in pt] + [repr(float(wt))])

    @classmethod
    def from_csv(cls, path, check: bool = True) -> "DiscreteMeasure":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if rows[0][-1] != "weight":
            raise ValueError(f"{path}: last column must be 'weight'")
        data = np.array(rows[1:], dtype=np.float64)
        return cls(data[:, :-1], data[:, -1], check=check)


@dataclass
class TransportPlan:
    plan: np.ndarray

    def check_marginals(self, mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-9) -> bool:
        return (
            bool(np.all(self.plan >= 0))
            and np.allclose(self.plan.sum(axis=1), mu.weights, rtol=0, atol=tol)
            and np.allclose(self.plan.sum(axis=0), nu.weights, rtol=0, atol=tol)
        )


def _root(cost: float, p: float) -> float:
    if cost < 1e-15:
        return 0.0
    return cost ** (1.0 / p)


def _check_p(p: float) -> None:
    if not p >= 1:
        raise ValueError(f"Wasserstein order must be >= 1, got {p}")


def _sorted_1d(m: DiscreteMeasure):
    x = m.points[:, 0]
    order = np.argsort(x, kind="stable")
    return np.ascontiguousarray(x[order]), np.ascontiguousarray(m.weights[order])


def wasserstein_1d(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 1.0) -> float:
    """Exact W_p on the line via the monotone (quantile) coupling."""
    _check_p(p)
    if mu.d != 1 or nu.d != 1:
        raise ValueError("wasserstein_1d requires one-dimensional supports")
    x, wx = _sorted_1d(mu)
    y, wy = _sorted_1d(nu)
    return _root(kernels.wasserstein_1d_cost(x, wx, y, wy, float(p)), p)


def wasserstein_1d_samples(x, y, p: float = 1.0) -> float:
    """W_p between two equally weighted 1-D samples (any sizes)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    return wasserstein_1d(DiscreteMeasure.uniform(x[:, None], check=False),
                          DiscreteMeasure.uniform(y[:, None], check=False), p)


def cost_matrix(x: np.ndarray, y: np.ndarray, p: float) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1)) ** p


def wasserstein_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 1.0):
    """Exact discrete W_p by network simplex; returns ``(value, TransportPlan)``."""
    _check_p(p)
    if len(mu) > LP_MAX_SUPPORT or len(nu) > LP_MAX_SUPPORT:
        raise ValueError(
            f"supports of size {len(mu)} x {len(nu)} exceed the LP limit {LP_MAX_SUPPORT}"
        )
    if mu.d != nu.d:
        raise ValueError("measures live in different dimensions")
    cost = cost_matrix(mu.points, nu.points, p)
    plan, _ = kernels.network_simplex(mu.weights, nu.weights, cost)
    return _root(float(np.sum(plan * cost)), p), TransportPlan(plan)


def wasserstein_subsampled(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 1.0,
                           size: int = SUBSAMPLE_SIZE, seed: int = 0):
    """W_p estimate for large supports in any dimension.

    Draws ``size`` atoms from each measure (weighted, seeded) and solves the
    LP between the two uniform subsamples.  Returns ``(estimate, bias)`` where
    ``bias`` is the same estimator applied to two independent subsamples of
    ``mu`` against itself: the floor the subsampling alone produces.
    """
    if mu.d == 1 and nu.d == 1:
        return wasserstein_1d(mu, nu, p), 0.0
    if len(mu) <= size and len(nu) <= size:
        return wasserstein_lp(mu, nu, p)[0], 0.0
    rng = np.random.default_rng(seed)

    def draw(m):
        idx = rng.choice(len(m), size=size, replace=True, p=m.weights)
        return DiscreteMeasure.uniform(m.points[idx], check=False)

    a, b = draw(mu), draw(nu)
    est = wasserstein_lp(a, b, p)[0]
    bias = wasserstein_lp(draw(mu), draw(mu), p)[0]
    return est, bias


def kantorovich_dual_value(f, mu: DiscreteMeasure, nu: DiscreteMeasure, lipschitz: float = 1.0) -> float:
    """Return the integral of ``f`` against mu - nu, after checking [f]_1 <= 1 on the supports.

    ``f`` maps an (M, d) array of points to M values; ``lipschitz`` is the
    declared constant and must not exceed 1.
    """
    if lipschitz > 1.0:
        raise ValueError(f"declared Lipschitz constant {lipschitz} exceeds 1")
    pts = np.vstack([mu.points, nu.points])
    vals = np.asarray(f(pts), dtype=np.float64).ravel()
    if vals.shape[0] != pts.shape[0] or not np.all(np.isfinite(vals)):
        raise ValueError("test function must return one finite value per point")
    dist = np.sqrt(np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1))
    gap = np.abs(vals[:, None] - vals[None, :])
    bad = gap > lipschitz * dist * (1 + 1e-12) + 1e-15
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise ValueError(
            f"test function violates the Lipschitz bound between {pts[i]} and {pts[j]}: "
            f"|f diff| = {gap[i, j]:.6g} > {lipschitz} * {dist[i, j]:.6g}"
        )
    m = len(mu)
    return float(mu.weights @ vals[:m] - nu.weights @ vals[m:])


@dataclass(frozen=True)
class WeightedTV:
    """Grid quadrature of (1 + |x|^p) |l1 - l2|, split into its two parts."""

    total: float
    plain: float
    weighted: float
    p: float

    def __float__(self) -> float:
        return self.total


def weighted_tv(l1: GridDensity, l2: GridDensity, p: float = 1.0) -> WeightedTV:
    if p < 0:
        raise ValueError("weight exponent must be >= 0")
    l1.require_same_grid(l2)
    diff = np.abs(l1.values - l2.values).ravel()
    vol = l1.cell_volume
    r = np.linalg.norm(l1.nodes(), axis=1)
    plain = float(np.sum(diff) * vol)
    weighted = float(np.sum(r**p * diff) * vol)
    return WeightedTV(plain + weighted, plain, weighted, p)


def mc_noise_floor(x, n_a: int | None = None, n_b: int | None = None) -> float:
    """Expected W_1 between two independent 1-D empirical measures of one law.

    The law is estimated by the pooled sample ``x``.  For sample sizes
    ``n_a`` and ``n_b`` the CDF difference is asymptotically a Brownian bridge
    of variance F(1-F)(1/n_a + 1/n_b), so the expected W_1 is
    sqrt(2/pi) * sqrt(1/n_a + 1/n_b) * integral of sqrt(F(1-F)).
    """
    xs = np.sort(np.asarray(x, dtype=np.float64).ravel())
    n = xs.shape[0]
    n_a = n if n_a is None else n_a
    n_b = n_a if n_b is None else n_b
    F = np.arange(1, n) / n
    integral = float(np.sum(np.sqrt(F * (1.0 - F)) * np.diff(xs)))
    return float(np.sqrt(2.0 / np.pi) * np.sqrt(1.0 / n_a + 1.0 / n_b) * integral)


def wasserstein_1d_to_grid(samples, l: GridDensity) -> float:
    """Exact W_1 between an equally weighted sample and a 1-D grid density.

    The grid law has a piecewise-linear CDF, the sample a step CDF; their
    absolute difference is integrated exactly between merged breakpoints.
    """
    if l.d != 1:
        raise ValueError("wasserstein_1d_to_grid requires a 1-D grid")
    xs = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = xs.shape[0]
    edges = l.edges(0)
    cdf_edges = np.concatenate([[0.0], np.cumsum(l.values * l.cell_width[0])])
    cdf_edges /= cdf_edges[-1]
    z = np.union1d(xs, edges)
    G = np.interp(z, edges, cdf_edges, left=0.0, right=1.0)
    F = np.searchsorted(xs, z, side="right") / n
    a = G[:-1] - F[:-1]
    b = G[1:] - F[:-1]
    width = np.diff(z)
    same = a * b >= 0
    seg = np.where(
        same,
        0.5 * np.abs(a + b),
        (a * a + b * b) / (2.0 * np.maximum(np.abs(a) + np.abs(b), 1e-300)),
    )
    return float(np.sum(width * seg))
