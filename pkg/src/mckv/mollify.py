"""The bump mollifier family and kernel density evaluation.

The base profile is exp(-1 / (1 - |u|^2)) on the open unit ball; the
family member of index n is rho_n(x) = n^d rho(n x), supported in B(0, 1/n).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, signal

from mckv._backend import kernels
from mckv.grid import GridDensity


class UnderResolvedError(ValueError):
    """Grid cells too coarse to resolve the kernel support."""


@lru_cache(maxsize=None)
def bump_normalization(d: int) -> float:
    """1 / integral of the bump profile over the unit ball of R^d."""
    radial, _ = integrate.quad(
        lambda r: r ** (d - 1) * math.exp(-1.0 / (1.0 - r * r)) if r < 1 else 0.0,
        0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200,
    )
    sphere = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
    return 1.0 / (sphere * radial)


def bump_profile(r2):
    """Unnormalized profile as a function of the squared radius."""
    r2 = np.asarray(r2, dtype=np.float64)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@dataclass(frozen=True)
class BaseKernel:
    d: int = 1
    name: str = "bump"

    @property
    def normalization(self) -> float:
        return bump_normalization(self.d)

    def __call__(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        return self.normalization * bump_profile(np.sum(u * u, axis=-1))

    def describe(self) -> dict:
        return {"profile": "exp(-1/(1-|u|^2)) on |u|<1", "d": self.d,
                "normalization": self.normalization}


@dataclass(frozen=True)
class MollifierFamily:
    n: int
    base: BaseKernel = BaseKernel()

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"mollifier index must be a positive integer, got {self.n}")

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def radius(self) -> float:
        return 1.0 / self.n

    @property
    def peak(self) -> float:
        """rho_n(0) = n^d rho(0), the largest value any KDE can take."""
        return self.n**self.d * self.base.normalization * math.exp(-1.0)

    def describe(self) -> dict:
        return {"n": int(self.n), **self.base.describe()}


def mollifier_eval(fam: MollifierFamily, x) -> np.ndarray | float:
    """rho_n at one point (d-vector) or at each row of an (M, d) array."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim <= 1
    pts = x.reshape(1, -1) if single else x
    if pts.shape[1] != fam.d:
        raise ValueError(f"point dimension {pts.shape[1]} != kernel dimension {fam.d}")
    vals = fam.n**fam.d * fam.base(fam.n * pts)
    return float(vals[0]) if single else vals


def _positions(cloud) -> np.ndarray:
    pos = np.asarray(getattr(cloud, "positions", cloud), dtype=np.float64)
    if pos.ndim == 1:
        pos = pos[:, None]
    if pos.shape[0] == 0:
        raise ValueError("empty particle cloud")
    return pos


def _sorted_1d(pos: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.sort(pos[:, 0], kind="stable"))


def kde_many(cloud, fam: MollifierFamily, queries, method: str = "exact",
             threads: int = 1, presorted: bool = False) -> np.ndarray:
    """(1/N) sum_i rho_n(q - X_i) at every query point.

    ``method="exact"`` sums kernel terms directly (1-D: over the sorted
    window of particles within 1/n of the query, ascending).  ``"binned"``
    (1-D only) deposits the cloud onto a grid of spacing 1/(64 n) and
    convolves, which is O(N) per call.  Query points are independent, so
    ``threads`` only partitions work and never changes a result.
    """
    pos = _positions(cloud)
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim == 1:
        q = q[:, None] if fam.d == 1 else q[None, :]
    if pos.shape[1] != fam.d or q.shape[1] != fam.d:
        raise ValueError("cloud, queries and kernel dimensions differ")
    if method == "binned":
        if fam.d != 1:
            raise ValueError("binned KDE is 1-D only")
        xs = pos[:, 0] if presorted else _sorted_1d(pos)
        return kde_binned_1d(xs, fam, q[:, 0])
    if method != "exact":
        raise ValueError(f"unknown KDE method {method!r}")
    if fam.d == 1:
        xs = np.ascontiguousarray(pos[:, 0]) if presorted else _sorted_1d(pos)
        norm = fam.base.normalization
        qs = np.ascontiguousarray(q[:, 0])
        if threads <= 1 or qs.shape[0] < 2048:
            return kernels.kde_sorted(xs, qs, fam.n, norm)
        chunks = np.array_split(qs, threads)
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda c: kernels.kde_sorted(xs, c, fam.n, norm), chunks))
        return np.concatenate(parts)
    return _kde_exact_nd(pos, fam, q)


def _kde_exact_nd(pos: np.ndarray, fam: MollifierFamily, q: np.ndarray) -> np.ndarray:
    order = np.lexsort(pos.T[::-1])
    pos = pos[order]
    out = np.empty(q.shape[0])
    scale = fam.n**fam.d * fam.base.normalization / pos.shape[0]
    step = max(1, 2_000_000 // pos.shape[0])
    for s in range(0, q.shape[0], step):
        diff = fam.n * (q[s:s + step, None, :] - pos[None, :, :])
        out[s:s + step] = scale * np.sum(bump_profile(np.sum(diff * diff, axis=-1)), axis=1)
    return out


def kde_at(cloud, fam: MollifierFamily, x) -> float:
    """Mollified empirical density (rho_n * mu_N)(x) at a single point."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(kde_many(cloud, fam, x)[0])


def kde_naive(cloud, fam: MollifierFamily, x) -> float:
    """Reference for :func:`kde_at`: every particle's term, ascending order, no window."""
    pos = _positions(cloud)
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if fam.d == 1:
        return float(kernels.kde_naive(_sorted_1d(pos), x[:, 0], fam.n, fam.base.normalization)[0])
    return float(_kde_exact_nd(pos, fam, x)[0])


BIN_OVERSAMPLE = 64


def kde_binned_1d(xs_sorted: np.ndarray, fam: MollifierFamily, queries: np.ndarray,
                  oversample: int = BIN_OVERSAMPLE) -> np.ndarray:
    """Linear-binning KDE: deposit, convolve with sampled rho_n, interpolate."""
    n = fam.n
    h = 1.0 / (n * oversample)
    lo = xs_sorted[0] - (oversample + 2) * h
    t = (xs_sorted - lo) / h
    k = np.floor(t).astype(np.int64)
    frac = t - k
    size = int(k[-1]) + oversample + 4
    w = np.bincount(k, weights=1.0 - frac, minlength=size)
    w += np.bincount(k + 1, weights=frac, minlength=size)
    w /= xs_sorted.shape[0]
    taps = np.arange(-oversample, oversample + 1) * h
    kern = n * fam.base.normalization * bump_profile((n * taps) ** 2)
    dens = np.convolve(w, kern, mode="same")
    nodes = lo + np.arange(size) * h
    return np.interp(queries, nodes, dens, left=0.0, right=0.0)


def mollify_grid(l: GridDensity, fam: MollifierFamily, extend: bool = True) -> GridDensity:
    """Discrete convolution rho_n * l on the grid.

    Kernel weights are sampled at grid offsets and rescaled to unit discrete
    mass, so the output carries exactly the input mass.  With ``extend`` the
    output grid grows by the kernel radius on every side so nothing spills off.
    """
    if l.d != fam.d:
        raise ValueError("grid and kernel dimensions differ")
    if np.any(l.cell_width >= 1.0 / (2 * fam.n)):
        raise UnderResolvedError(
            f"cell width {l.cell_width} does not resolve kernel radius 1/{fam.n}"
        )
    half = [int(math.ceil(fam.radius / w)) for w in l.cell_width]
    offs = np.meshgrid(*[np.arange(-m, m + 1) * w for m, w in zip(half, l.cell_width)],
                       indexing="ij")
    r2 = sum((fam.n * o) ** 2 for o in offs)
    taps = bump_profile(r2)
    taps /= np.sum(taps) * l.cell_volume
    if extend:
        out = signal.convolve(l.values, taps, mode="full", method="direct") * l.cell_volume
        origin = l.origin - np.asarray(half) * l.cell_width
    else:
        out = signal.convolve(l.values, taps, mode="same", method="direct") * l.cell_volume
        origin = l.origin
    return GridDensity(origin, l.cell_width, np.clip(out, 0.0, None), check=False)
