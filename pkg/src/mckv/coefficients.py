"""Coefficient sets (b, sigma), built-in scenarios and a sampled assumption checker.

Coefficient callables are vectorized over particles:

* ``drift(t, x, r, m)`` with ``x`` of shape (N, d), ``r`` of shape (N,) and
  ``m`` a :class:`~mckv.transport.DiscreteMeasure`, returns (N, d);
* ``diffusion(t, x, m)`` returns (N, d, k) for a k-dimensional noise.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from mckv.transport import DiscreteMeasure, wasserstein_lp

SCENARIOS = ("tanh-mean", "pure-diffusion", "density-repulsion", "translation")


class AssumptionError(ValueError):
    """A coefficient returned a non-finite value on a sampled tuple."""


@dataclass(frozen=True)
class Constants:
    C: float
    beta: float
    p: float
    f0_bound: float
    # integrability exponents of the drift envelope; (inf, inf) means bounded
    f0_exponents: tuple = (math.inf, math.inf)

    def __post_init__(self):
        if not (self.C > 0 and self.f0_bound > 0):
            raise ValueError("declared constants must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.p < 1:
            raise ValueError("moment order p must be >= 1")


@dataclass
class CoefficientSet:
    name: str
    d: int
    drift: Callable
    diffusion: Callable
    constants: Constants
    params: dict = field(default_factory=dict)
    noise_dim: int | None = None
    uses_density: bool = True
    sigma_measure_free: bool = True
    # sigma = sigma_scalar * I when set; enables the additive-noise fast path
    sigma_scalar: float | None = None

    def __post_init__(self):
        if self.noise_dim is None:
            self.noise_dim = self.d

    def describe(self) -> dict:
        return {
            "name": self.name,
            "d": self.d,
            "params": dict(self.params),
            "constants": {k: (v if not isinstance(v, tuple) else list(v))
                          for k, v in asdict(self.constants).items()},
            "uses_density": self.uses_density,
            "sigma_measure_free": self.sigma_measure_free,
            "sigma_scalar": self.sigma_scalar,
        }


def _identity_sigma(scale: float, d: int):
    def diffusion(t, x, m):
        x = np.asarray(x)
        return np.broadcast_to(scale * np.eye(d), (x.shape[0], d, d))
    return diffusion


def scenario(name: str, d: int = 1, **params) -> CoefficientSet:
    """Built-in coefficient sets satisfying the standing assumptions.

    ``tanh-mean``: b = tanh(density_coef * r) + mean_coef * clip(mean(m), -clip, clip),
    sigma = I.  ``pure-diffusion``: b = 0, sigma = I.  ``density-repulsion``:
    b = -arctan(r) x / (1 + |x|), sigma = I.  ``translation``: b = c, sigma = eps I.
    """
    root_d = math.sqrt(d)
    if name == "tanh-mean":
        clip = float(params.pop("clip", 5.0))
        mean_coef = float(params.pop("mean_coef", 0.5))
        density_coef = float(params.pop("density_coef", 1.0))
        _no_extra(name, params)

        def drift(t, x, r, m):
            shift = mean_coef * np.clip(m.mean(), -clip, clip)
            return np.tanh(density_coef * np.asarray(r))[:, None] + shift[None, :]

        lip = max(abs(density_coef) * root_d, abs(mean_coef))
        consts = Constants(C=max(2.0 * root_d, lip), beta=0.5, p=1.0,
                           f0_bound=max(1.0, root_d * (1.0 + abs(mean_coef) * clip)))
        return CoefficientSet(name, d, drift, _identity_sigma(1.0, d), consts,
                              {"clip": clip, "mean_coef": mean_coef, "density_coef": density_coef},
                              uses_density=density_coef != 0.0, sigma_scalar=1.0)
    if name == "pure-diffusion":
        _no_extra(name, params)

        def drift(t, x, r, m):
            return np.zeros_like(np.asarray(x, dtype=np.float64))

        consts = Constants(C=2.0 * root_d, beta=0.5, p=1.0, f0_bound=1.0)
        return CoefficientSet(name, d, drift, _identity_sigma(1.0, d), consts, {},
                              uses_density=False, sigma_scalar=1.0)
    if name == "density-repulsion":
        _no_extra(name, params)

        def drift(t, x, r, m):
            x = np.asarray(x, dtype=np.float64)
            norm = np.linalg.norm(x, axis=1, keepdims=True)
            return -np.arctan(np.asarray(r))[:, None] * x / (1.0 + norm)

        consts = Constants(C=2.0 * root_d, beta=0.5, p=1.0, f0_bound=math.pi / 2)
        return CoefficientSet(name, d, drift, _identity_sigma(1.0, d), consts, {},
                              uses_density=True, sigma_scalar=1.0)
    if name == "translation":
        c = np.broadcast_to(np.asarray(params.pop("c", 1.0), dtype=np.float64), (d,)).copy()
        eps = float(params.pop("eps", 1.0))
        _no_extra(name, params)
        if eps < 0:
            raise ValueError("translation noise scale eps must be >= 0")

        def drift(t, x, r, m):
            return np.broadcast_to(c, np.asarray(x).shape).copy()

        bound = eps * root_d + (root_d / eps**2 if eps > 0 else math.inf)
        consts = Constants(C=bound if math.isfinite(bound) else 1.0, beta=0.5, p=1.0,
                           f0_bound=max(1.0, float(np.linalg.norm(c))))
        cs = CoefficientSet(name, d, drift, _identity_sigma(eps, d), consts,
                            {"c": c.tolist() if d > 1 else float(c[0]), "eps": eps},
                            uses_density=False, sigma_scalar=eps)
        return cs
    raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


def _no_extra(name, params):
    if params:
        raise ValueError(f"scenario {name!r} got unknown parameters {sorted(params)}")


def zero_coefficients(d: int = 1) -> CoefficientSet:
    """b = 0 and sigma = 0: nothing moves (degenerate, for bookkeeping tests)."""
    def drift(t, x, r, m):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    return CoefficientSet("zero", d, drift, _identity_sigma(0.0, d),
                          Constants(C=1.0, beta=0.5, p=1.0, f0_bound=1.0),
                          uses_density=False, sigma_scalar=0.0)


CONDITIONS = ("ellipticity", "diffusion_bound", "sigma_plus_ainv", "holder_x",
              "lipschitz_r", "lipschitz_w", "drift_envelope")


@dataclass
class AssumptionReport:
    scenario: str
    sample_count: int
    seed: int
    worst_ratios: dict
    bounds: dict
    verdicts: dict
    worst_tuples: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_json(self) -> str:
        return json.dumps(asdict(self) | {"passed": self.passed}, indent=2, sort_keys=True)


class TupleSampler:
    """Seeded draws of (t, x, y, r, r', m, m') for the assumption checker."""

    def __init__(self, seed: int = 0, T: float = 1.0, spread: float = 3.0,
                 r_max: float = 10.0, atoms: int = 6):
        self.rng = np.random.default_rng(seed)
        self.T, self.spread, self.r_max, self.atoms = T, spread, r_max, atoms

    def draw(self, d: int) -> dict:
        g = self.rng
        x = g.normal(0.0, self.spread, d)
        # half the pairs are close, to probe the Hoelder ratio at small scales
        y = x + (g.normal(0.0, 1e-2, d) if g.random() < 0.5 else g.normal(0.0, self.spread, d))
        r1, r2 = g.uniform(0.0, self.r_max, 2)
        pts = g.normal(g.normal(0.0, 4.0, d), 1.0, (self.atoms, d))
        w = g.dirichlet(np.ones(self.atoms))
        pts2 = pts + g.normal(0.0, g.choice([0.01, 0.3, 3.0]), (self.atoms, d))
        w2 = g.dirichlet(np.ones(self.atoms))
        return {"t": g.uniform(0.0, self.T), "x": x, "y": y, "r": r1, "r2": r2,
                "m": DiscreteMeasure(pts, w / w.sum(), check=False),
                "m2": DiscreteMeasure(pts2, w2 / w2.sum(), check=False)}


def _frob(a) -> float:
    return float(np.sqrt(np.sum(np.asarray(a) ** 2)))


def check_assumptions(cs: CoefficientSet, n_samples: int = 1000, seed: int = 0,
                      sampler: TupleSampler | None = None) -> AssumptionReport:
    """Evaluate each standing inequality on sampled tuples and keep the worst ratios."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    sampler = sampler or TupleSampler(seed)
    k = cs.constants
    worst = dict.fromkeys(CONDITIONS, 0.0)
    where = {}
    d = cs.d
    for _ in range(n_samples):
        s = sampler.draw(d)
        t, x, y, m, m2 = s["t"], s["x"][None, :], s["y"][None, :], s["m"], s["m2"]
        vals = {
            "b": cs.drift(t, x, np.array([s["r"]]), m)[0],
            "b_r2": cs.drift(t, x, np.array([s["r2"]]), m)[0],
            "b_m2": cs.drift(t, x, np.array([s["r"]]), m2)[0],
            "sig": cs.diffusion(t, x, m)[0],
            "sig_y": cs.diffusion(t, y, m2)[0],
        }
        for key, v in vals.items():
            if not np.all(np.isfinite(v)):
                raise AssumptionError(
                    f"{cs.name}: non-finite {key} at t={t}, x={s['x']}, y={s['y']}, "
                    f"r={s['r']}, r'={s['r2']}"
                )
        sig = vals["sig"]
        a = sig @ sig.T
        try:
            ainv = _frob(np.linalg.inv(a))
        except np.linalg.LinAlgError:
            ainv = math.inf
        w = wasserstein_lp(m, m2, k.p)[0]
        dx = float(np.linalg.norm(s["x"] - s["y"]))
        dr = abs(s["r"] - s["r2"])
        ratios = {
            "ellipticity": ainv,
            "diffusion_bound": _frob(sig),
            "sigma_plus_ainv": _frob(sig) + ainv,
            "holder_x": _frob(sig - vals["sig_y"]) / (dx**k.beta + w) if dx + w > 0 else 0.0,
            "lipschitz_r": _frob(vals["b"] - vals["b_r2"]) / dr if dr > 0 else 0.0,
            "lipschitz_w": _frob(vals["b"] - vals["b_m2"]) / w if w > 0 else 0.0,
            "drift_envelope": _frob(vals["b"]),
        }
        for c, v in ratios.items():
            v = float(v)
            if v > worst[c] or (math.isnan(v)):
                worst[c] = v
                where[c] = {"t": float(t), "x": s["x"].tolist(), "r": float(s["r"])}
    bounds = {c: (k.f0_bound if c == "drift_envelope" else k.C) for c in CONDITIONS}
    verdicts = {c: bool(worst[c] <= bounds[c] * (1 + 1e-6)) for c in CONDITIONS}
    return AssumptionReport(cs.name, n_samples, seed, worst, bounds, verdicts, where)
