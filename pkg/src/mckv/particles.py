"""Mollified interacting particle system with Euler-Maruyama stepping.

Each particle i owns a counter-based noise stream keyed by (seed, i); the
draw for step k is a pure function of (seed, i, k), so neither the particle
count nor the thread layout perturbs any other particle's noise.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time as _time
from dataclasses import asdict, dataclass, field

import numpy as np

from mckv._backend import BACKEND, kernels
from mckv.coefficients import CoefficientSet
from mckv.grid import GridDensity
from mckv.mollify import MollifierFamily, kde_many
from mckv.transport import DiscreteMeasure

DOMAIN_EM = 0
DOMAIN_INIT = 1
# "auto" switches to binned KDE above this many kernel-term evaluations per step
EXACT_PAIR_BUDGET = 20_000_000


class ParticleStateError(RuntimeError):
    """A particle update produced a non-finite state."""


@dataclass
class ParticleCloud:
    positions: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.shape[0] < 1:
            raise ValueError("a cloud needs at least one particle")
        self.positions = pos

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def measure(self) -> DiscreteMeasure:
        return DiscreteMeasure.uniform(self.positions, check=False)


@dataclass
class SimConfig:
    N: int
    T: float
    dt: float
    n_mollifier: int = 16
    seed: int = 0
    snapshot_times: tuple = ()
    d: int = 1
    p: float = 1.0
    kde_method: str = "auto"
    dense: bool = False
    max_wall_seconds: float | None = None

    def __post_init__(self):
        self.snapshot_times = tuple(float(t) for t in self.snapshot_times) or (0.0, float(self.T))
        self.validate()

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def snapshot_steps(self) -> list[int]:
        return [int(round(t / self.dt)) for t in self.snapshot_times]

    def validate(self) -> None:
        if self.N < 1 or self.d < 1:
            raise ValueError("N and d must be positive")
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("T and dt must be positive")
        if abs(self.steps * self.dt - self.T) > 1e-12 * max(1.0, self.T):
            raise ValueError(f"dt={self.dt} does not divide T={self.T}")
        if self.p < 1:
            raise ValueError("Wasserstein order p must be >= 1")
        if self.kde_method not in ("auto", "exact", "binned"):
            raise ValueError(f"unknown kde_method {self.kde_method!r}")
        prev = -math.inf
        for t in self.snapshot_times:
            k = round(t / self.dt)
            if abs(k * self.dt - t) > 1e-12 * max(1.0, t):
                raise ValueError(f"snapshot time {t} is not a multiple of dt={self.dt}")
            if t < 0 or t > self.T + 1e-12:
                raise ValueError(f"snapshot time {t} outside [0, T]")
            if t <= prev:
                raise ValueError("snapshot times must be strictly increasing")
            prev = t

    def to_dict(self) -> dict:
        out = asdict(self)
        out["snapshot_times"] = list(self.snapshot_times)
        return out


@dataclass
class TrajectoryStore:
    snapshots: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    dense_times: np.ndarray | None = None
    dense_paths: np.ndarray | None = None
    complete: bool = True

    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])

    def cloud_at(self, t: float) -> ParticleCloud:
        for s, c in self.snapshots:
            if abs(s - t) <= 1e-12 * max(1.0, abs(t)):
                return c
        raise KeyError(f"no snapshot at t={t}")

    def snapshots_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.snapshots[0][1].d
        w.writerow(["t", "particle"] + [f"x{k}" for k in range(d)])
        for t, cloud in self.snapshots:
            ts = repr(float(t))
            for i, row in enumerate(cloud.positions):
                w.writerow([ts, i] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def metadata_json(self) -> str:
        return json.dumps(self.metadata, indent=2, sort_keys=True, default=_json_default)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.snapshots_csv().encode("utf-8"))
        h.update(self.metadata_json().encode("utf-8"))
        return h.hexdigest()

    def save(self, directory) -> dict:
        """Write ``snapshots.csv`` and ``metadata.json``; return {name: sha256}."""
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = {"snapshots.csv": self.snapshots_csv(), "metadata.json": self.metadata_json()}
        hashes = {}
        for name, text in files.items():
            data = text.encode("utf-8")
            (directory / name).write_bytes(data)
            hashes[name] = hashlib.sha256(data).hexdigest()
        return hashes

    @classmethod
    def load(cls, directory) -> "TrajectoryStore":
        from pathlib import Path

        directory = Path(directory)
        meta = json.loads((directory / "metadata.json").read_text(encoding="utf-8"))
        with open(directory / "snapshots.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        data = np.array(rows[1:], dtype=np.float64)
        snaps = []
        for t in np.unique(data[:, 0]):
            block = data[data[:, 0] == t]
            block = block[np.argsort(block[:, 1])]
            snaps.append((float(t), ParticleCloud(block[:, 2:], float(t))))
        return cls(snaps, meta, complete=meta.get("complete", True))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")


def sample_initial(l_nu: GridDensity, N: int, seed: int) -> ParticleCloud:
    """Draw N particles from a grid density; deterministic in ``seed``.

    1-D uses the inverse CDF of the piecewise-constant law, one uniform per
    particle stream.  Higher dimensions accept uniform proposals in the grid
    box with probability value / max(value).
    """
    mass = l_nu.mass()
    if mass <= 0:
        raise ValueError("initial density has zero mass")
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"initial density integrates to {mass:.9g}, not 1")
    streams = np.arange(N, dtype=np.uint64)
    if l_nu.d == 1:
        u = kernels.uniforms(seed, streams, 0, 1, DOMAIN_INIT)[:, 0]
        cell_mass = l_nu.values * l_nu.cell_width[0]
        cdf = np.cumsum(cell_mass)
        target = u * cdf[-1]
        k = np.minimum(np.searchsorted(cdf, target, side="right"), cdf.shape[0] - 1)
        below = np.where(k > 0, cdf[np.maximum(k - 1, 0)], 0.0)
        frac = np.clip((target - below) / cell_mass[k], 0.0, 1.0)
        x = l_nu.origin[0] + (k + frac) * l_nu.cell_width[0]
        return ParticleCloud(x[:, None], 0.0)
    d = l_nu.d
    vmax = l_nu.sup_norm()
    lo, hi = l_nu.origin, l_nu.upper()
    out = np.empty((N, d))
    todo = np.arange(N)
    attempt = 0
    while todo.size:
        u = kernels.uniforms(seed, streams[todo], attempt, d + 1, DOMAIN_INIT)
        prop = lo + u[:, :d] * (hi - lo)
        idx = tuple(np.minimum(((prop[:, k] - lo[k]) / l_nu.cell_width[k]).astype(int),
                               l_nu.shape[k] - 1) for k in range(d))
        ok = u[:, d] * vmax < l_nu.values[idx]
        out[todo[ok]] = prop[ok]
        todo = todo[~ok]
        attempt += 1
    return ParticleCloud(out, 0.0)


def _sort_order(pos: np.ndarray) -> np.ndarray:
    if pos.shape[1] == 1:
        return np.argsort(pos[:, 0], kind="stable")
    return np.lexsort(pos.T[::-1])


def resolve_kde_method(cloud: ParticleCloud, fam: MollifierFamily, method: str) -> str:
    """Pick exact or binned KDE for a cloud; binned only where exact is too costly."""
    if method != "auto":
        return method
    if cloud.d != 1:
        return "exact"
    xs = np.sort(cloud.positions[:, 0])
    h = 1.0 / fam.n
    pairs = int(np.sum(np.searchsorted(xs, xs + h) - np.searchsorted(xs, xs - h)))
    return "exact" if pairs <= EXACT_PAIR_BUDGET else "binned"


def em_step(cloud: ParticleCloud, cs: CoefficientSet, fam: MollifierFamily, dt: float,
            noise: np.ndarray, kde_method: str = "exact", threads: int = 1) -> ParticleCloud:
    """One Euler-Maruyama step with the density and measure frozen at the step start."""
    X = cloud.positions
    N, d = X.shape
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (N, cs.noise_dim):
        raise ValueError(f"noise shape {noise.shape} != {(N, cs.noise_dim)}")
    order = _sort_order(X)
    xs = np.ascontiguousarray(X[order])
    if cs.uses_density:
        r = kde_many(xs, fam, X, method=kde_method, threads=threads, presorted=True)
    else:
        r = np.zeros(N)
    m = DiscreteMeasure.uniform(xs, check=False)
    t = cloud.time
    b = np.asarray(cs.drift(t, X, r, m), dtype=np.float64)
    if cs.sigma_scalar is not None:
        kick = (cs.sigma_scalar * math.sqrt(dt)) * noise
    else:
        sig = np.asarray(cs.diffusion(t, X, m), dtype=np.float64)
        kick = math.sqrt(dt) * np.einsum("nij,nj->ni", sig, noise)
    new = X + b * dt + kick
    bad = ~np.all(np.isfinite(new), axis=1)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ParticleStateError(
            f"non-finite update for particle {i} at t={t}: x={X[i]}, r={r[i]}, b={b[i]}"
        )
    return ParticleCloud(new, t + dt)


def simulate(config: SimConfig, cs: CoefficientSet, l_nu: GridDensity,
             threads: int = 1, initial: ParticleCloud | None = None,
             streams: np.ndarray | None = None) -> TrajectoryStore:
    """Run the particle system and record the configured snapshots.

    ``initial`` and ``streams`` override the sampled start and the per-particle
    noise stream ids (used to check exchangeability).
    """
    if cs.d != config.d or l_nu.d != config.d:
        raise ValueError("dimension mismatch between config, coefficients and initial density")
    fam = MollifierFamily(config.n_mollifier, _base_for(config.d))
    cloud = initial if initial is not None else sample_initial(l_nu, config.N, config.seed)
    if streams is None:
        streams = np.arange(cloud.N, dtype=np.uint64)
    method = resolve_kde_method(cloud, fam, config.kde_method) if cs.uses_density else "none"
    snap_steps = config.snapshot_steps()
    want = dict(zip(snap_steps, config.snapshot_times))
    store = TrajectoryStore()
    if 0 in want:
        store.snapshots.append((0.0, cloud))
    dense = [cloud.positions.copy()] if config.dense else None
    started = _time.monotonic()
    steps = config.steps
    for k in range(steps):
        noise = kernels.normals(config.seed, streams, k, cs.noise_dim, DOMAIN_EM)
        cloud = em_step(cloud, cs, fam, config.dt, noise,
                        kde_method="exact" if method == "none" else method, threads=threads)
        cloud.time = (k + 1) * config.dt
        if dense is not None:
            dense.append(cloud.positions.copy())
        if k + 1 in want:
            cloud.time = want[k + 1]
            store.snapshots.append((want[k + 1], cloud))
        if config.max_wall_seconds is not None and _time.monotonic() - started > config.max_wall_seconds:
            store.complete = False
            break
    if dense is not None:
        store.dense_paths = np.stack(dense)
        store.dense_times = np.arange(len(dense)) * config.dt
    store.metadata = {
        "config": config.to_dict(),
        "coefficients": cs.describe(),
        "mollifier": fam.describe(),
        "kde_method": method,
        "backend": BACKEND,
        "complete": store.complete,
    }
    store.metadata["content_hash"] = store.content_hash()
    return store


def _base_for(d: int):
    from mckv.mollify import BaseKernel

    return BaseKernel(d)
