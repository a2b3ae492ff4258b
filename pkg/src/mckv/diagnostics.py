"""Empirical checks on simulation output: densities, moments, tails, time regularity."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from mckv.grid import GridDensity
from mckv.mollify import MollifierFamily, UnderResolvedError, kde_many
from mckv.particles import ParticleCloud, TrajectoryStore
from mckv.transport import DiscreteMeasure, wasserstein_1d, wasserstein_subsampled


@dataclass
class EstimateReport:
    name: str
    fitted_constant: float
    exponent_fit: float | None = None
    passed: bool = True
    samples: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if self.fitted_constant < 0 or math.isnan(self.fitted_constant):
            raise ValueError("fitted constant must be a nonnegative number")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_plain)


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o))


def density_snapshot(cloud: ParticleCloud, fam: MollifierFamily, grid: GridDensity,
                     threads: int = 1) -> GridDensity:
    """Mollified empirical density at the cell midpoints of ``grid``.

    Mass falling outside the grid is ``off_grid_mass(result)``.
    """
    if np.any(grid.cell_width >= 1.0 / (2 * fam.n)):
        raise UnderResolvedError(
            f"cell width {grid.cell_width} does not resolve kernel radius 1/{fam.n}"
        )
    vals = kde_many(cloud.positions, fam, grid.nodes(), method="exact", threads=threads)
    return GridDensity(grid.origin, grid.cell_width, vals.reshape(grid.shape), check=False)


def off_grid_mass(l: GridDensity) -> float:
    return 1.0 - l.mass()


def density_bound_fit(densities, l_nu: GridDensity) -> EstimateReport:
    """c1 = sup_t ||l_t||_inf / ||l_nu||_inf over a sequence of densities."""
    sups = [float(l.sup_norm()) for l in densities]
    c1 = max(sups) / l_nu.sup_norm()
    return EstimateReport("density_sup_bound", c1, samples={"count": len(sups)},
                          details={"sup_norms": sups, "initial_sup": l_nu.sup_norm()})


def _pair_distance(a: ParticleCloud, b: ParticleCloud, p: float, method: str) -> float:
    if method == "coupling":
        gap = np.linalg.norm(a.positions - b.positions, axis=1)
        return float(np.mean(gap**p) ** (1.0 / p))
    ma = DiscreteMeasure.uniform(a.positions, check=False)
    mb = DiscreteMeasure.uniform(b.positions, check=False)
    if a.d == 1:
        return wasserstein_1d(ma, mb, p)
    return wasserstein_subsampled(ma, mb, p)[0]


def holder_time_fit(store: TrajectoryStore, p: float = 1.0, method: str = "law",
                    min_time_frac: float = 0.05) -> EstimateReport:
    """Fit W_p(mu_s, mu_t) ~ c2 |t - s|^delta over snapshot pairs.

    ``method="law"`` measures the distance between the snapshot marginals
    (exact on the line).  ``method="coupling"`` uses the particle labels:
    (mean |X_t - X_s|^p)^{1/p}, an upper bound on W_p.  Pairs with either
    time below ``min_time_frac * T`` are skipped.
    """
    if method not in ("law", "coupling"):
        raise ValueError(f"unknown method {method!r}")
    snaps = store.snapshots
    T = max(t for t, _ in snaps)
    keep = [(t, c) for t, c in snaps if t >= min_time_frac * T - 1e-12]
    gaps, dists = [], []
    for (s, a), (t, b) in itertools.combinations(keep, 2):
        gaps.append(t - s)
        dists.append(_pair_distance(a, b, p, method))
    gaps = np.array(gaps)
    dists = np.array(dists)
    distinct = np.unique(np.round(gaps, 12))
    if distinct.shape[0] < 3:
        raise ValueError(f"need at least 3 distinct time gaps, got {distinct.shape[0]}")
    samples = {"snapshots": len(keep), "pairs": int(gaps.shape[0]), "p": p, "method": method}
    details = {"gaps": gaps, "distances": dists}
    pos = dists > 0
    if np.count_nonzero(pos) < 2 or np.unique(np.round(gaps[pos], 12)).shape[0] < 2:
        return EstimateReport("holder_time", 0.0, float("nan"), False, samples, details,
                              ["degenerate: distances vanish"])
    slope, intercept = np.polyfit(np.log(gaps[pos]), np.log(dists[pos]), 1)
    details |= {"log_gap": np.log(gaps[pos]), "log_w": np.log(dists[pos]),
                "intercept": float(intercept)}
    return EstimateReport("holder_time", float(math.exp(intercept)), float(slope),
                          bool(slope >= 0.4), samples, details)


def tail_and_moments(cloud: ParticleCloud, p: float, radii) -> EstimateReport:
    """M_p of the cloud and phi(R) = mean(|X|^p; |X| > R) for each radius."""
    r = np.linalg.norm(cloud.positions, axis=1)
    rp = r**p
    radii = np.sort(np.asarray(radii, dtype=np.float64))
    tails = np.array([float(np.sum(np.where(r > R, rp, 0.0))) / r.shape[0] for R in radii])
    monotone = bool(np.all(np.diff(tails) <= 0))
    return EstimateReport(
        "tail_moments", float(np.mean(rp)), None, monotone,
        {"N": cloud.N, "p": p, "time": cloud.time},
        {"radii": radii, "tail": tails, "moment": float(np.mean(rp))},
    )


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float

    def __float__(self) -> float:
        return self.value


def krylov_functional(store: TrajectoryStore, g, j: int = 1) -> MCEstimate:
    """Monte Carlo estimate of E[(int_0^T g(s, X_s) ds)^j].

    The time integral is a right-endpoint Riemann sum over the stored steps;
    ``g(t, x)`` receives an (N, d) array and returns N values.
    """
    if store.dense_paths is None:
        raise ValueError("krylov_functional needs dense paths (simulate with dense=True)")
    if int(j) != j or j < 1:
        raise ValueError("j must be a positive integer")
    times = store.dense_times
    dt = times[1] - times[0]
    acc = np.zeros(store.dense_paths.shape[1])
    for k in range(1, times.shape[0]):
        gv = np.asarray(g(times[k], store.dense_paths[k]), dtype=np.float64)
        if np.any(gv < 0):
            raise ValueError("g must be nonnegative")
        acc += gv
    vals = (acc * dt) ** j
    n = vals.shape[0]
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return MCEstimate(float(np.mean(vals)), se)
