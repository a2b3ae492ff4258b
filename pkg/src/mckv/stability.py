"""Weighted-TV stability, mollifier-index convergence and the two-seed uniqueness shadow."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from mckv.coefficients import AssumptionError, CoefficientSet, check_assumptions
from mckv.diagnostics import density_snapshot
from mckv.fokker_planck import solve_nonlinear_fp
from mckv.grid import GridDensity
from mckv.mollify import BaseKernel, MollifierFamily
from mckv.particles import SimConfig, simulate
from mckv.transport import mc_noise_floor, wasserstein_1d_samples, weighted_tv


def lambda_bound(l_nu1: GridDensity, T: float) -> float:
    """exp{2 sqrt(T) (1 + ||l||_inf + M_1(l))} by grid quadrature."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    return math.exp(2.0 * math.sqrt(T) * (1.0 + l_nu1.sup_norm() + l_nu1.moment(1.0)))


def _to_json(obj) -> str:
    def plain(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        raise TypeError(type(o))
    return json.dumps(asdict(obj), indent=2, sort_keys=True, default=plain)


@dataclass
class StabilityReport:
    initial_wtv: float
    sup_wtv: float
    lambda_bound: float
    ratio: float
    times: list
    series: list
    particle_sup_wtv: float | None = None
    particle_ratio: float | None = None
    particle_series: list | None = None
    settings: dict = field(default_factory=dict)

    to_json = _to_json


def _require_stability_regime(cs: CoefficientSet, n_samples: int) -> None:
    k = cs.constants
    if k.p != 1:
        raise AssumptionError(f"stability needs moment order p=1, got {k.p}")
    if not cs.sigma_measure_free:
        raise AssumptionError("stability needs a law-independent diffusion coefficient")
    if not all(math.isinf(e) for e in k.f0_exponents):
        raise AssumptionError("stability needs a bounded drift")
    rep = check_assumptions(cs, n_samples=n_samples, seed=0)
    if not rep.passed:
        failed = [c for c, ok in rep.verdicts.items() if not ok]
        raise AssumptionError(f"{cs.name} violates {failed}")


def stability_experiment(cs: CoefficientSet, l_nu1: GridDensity, l_nu2: GridDensity,
                         config: SimConfig, fp_dt: float | None = None,
                         particle: bool = True, threads: int = 1,
                         check_samples: int = 200) -> StabilityReport:
    """Weighted-TV distance between the solutions started from two initial laws.

    The Fokker-Planck path solves on the grid of ``l_nu1`` with step ``fp_dt``
    (default ``config.dt``).  The particle path runs both laws with the same
    seed and compares mollified snapshot densities on the same grid.
    """
    _require_stability_regime(cs, check_samples)
    l_nu1.require_same_grid(l_nu2)
    times = list(config.snapshot_times)
    init = float(weighted_tv(l_nu1, l_nu2, 1.0))
    lam = lambda_bound(l_nu1, config.T)
    dt = fp_dt or config.dt
    s1 = solve_nonlinear_fp(cs, l_nu1, config.T, dt, snapshot_times=times)
    s2 = solve_nonlinear_fp(cs, l_nu2, config.T, dt, snapshot_times=times)
    series = [float(weighted_tv(a.density, b.density, 1.0)) for a, b in zip(s1, s2)]
    sup = max(series)
    ratio = sup / (lam * init) if init > 0 else (0.0 if sup == 0 else math.inf)
    rep = StabilityReport(init, sup, lam, ratio, [s.time for s in s1], series,
                          settings={"dx": float(l_nu1.cell_width[0]), "fp_dt": dt,
                                    "config": config.to_dict()})
    if particle:
        fam = MollifierFamily(config.n_mollifier, BaseKernel(cs.d))
        r1 = simulate(config, cs, l_nu1, threads=threads)
        r2 = simulate(config, cs, l_nu2, threads=threads)
        pser = []
        for (t, c1), (_, c2) in zip(r1.snapshots, r2.snapshots):
            d1 = density_snapshot(c1, fam, l_nu1, threads)
            d2 = density_snapshot(c2, fam, l_nu1, threads)
            pser.append(float(weighted_tv(d1, d2, 1.0)))
        rep.particle_series = pser
        rep.particle_sup_wtv = max(pser)
        rep.particle_ratio = rep.particle_sup_wtv / (lam * init) if init > 0 else math.inf
    return rep


@dataclass
class ConvergenceReport:
    n_values: list
    cauchy_distances: list
    per_time: list
    times: list
    noise_floor: float
    noise_floor_double_N: float
    N_values: list
    dt_values: list
    monotone: bool
    within_noise: bool
    verdict: str

    to_json = _to_json


def mollifier_convergence_study(cs: CoefficientSet, l_nu: GridDensity, base_config: SimConfig,
                                n_list, threads: int = 1, band: float = 2.0) -> ConvergenceReport:
    """Sup-in-time W_1 between runs at consecutive mollifier indices.

    All runs share (seed, N, dt).  Only snapshots with t >= 0.05 T enter the
    supremum.  ``noise_floor`` is the expected W_1 between two independent
    N-particle samples of the finest run's marginal (max over snapshots).
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing with at least 3 entries")
    runs = []
    for n in n_list:
        cfg = dataclasses.replace(base_config, n_mollifier=n)
        runs.append(simulate(cfg, cs, l_nu, threads=threads))
    T = base_config.T
    times = [t for t, _ in runs[0].snapshots if t >= 0.05 * T - 1e-12]
    per_time = []
    for a, b in zip(runs, runs[1:]):
        per_time.append([wasserstein_1d_samples(a.cloud_at(t).positions,
                                                b.cloud_at(t).positions, 1.0) for t in times])
    cauchy = [max(row) for row in per_time]
    N = base_config.N
    finest = runs[-1]
    noise = max(mc_noise_floor(finest.cloud_at(t).positions, N, N) for t in times)
    noise2 = max(mc_noise_floor(finest.cloud_at(t).positions, 2 * N, 2 * N) for t in times)
    tol = band * noise
    monotone = all(b <= a + tol for a, b in zip(cauchy, cauchy[1:])) and \
        all(c <= cauchy[0] + tol for c in cauchy)
    within = all(c <= tol for c in cauchy)
    if cs.uses_density and max(cauchy) < noise:
        verdict = "inconclusive"
    elif monotone:
        verdict = "converging"
    else:
        verdict = "non-monotone"
    return ConvergenceReport(n_list, cauchy, per_time, times, noise, noise2,
                             [N] * len(n_list), [base_config.dt] * len(n_list),
                             monotone, within, verdict)


def mc_noise_scaling(cs: CoefficientSet, l_nu: GridDensity, config: SimConfig,
                     seeds=(0, 1), threads: int = 1) -> dict:
    """Measured W_1 between two seeds at N and at 2N, at the final time."""
    out = {}
    for N in (config.N, 2 * config.N):
        cfg = dataclasses.replace(config, N=N, snapshot_times=(0.0, config.T))
        a = simulate(dataclasses.replace(cfg, seed=seeds[0]), cs, l_nu, threads=threads)
        b = simulate(dataclasses.replace(cfg, seed=seeds[1]), cs, l_nu, threads=threads)
        xa, xb = a.cloud_at(config.T).positions, b.cloud_at(config.T).positions
        out[N] = {"w1": wasserstein_1d_samples(xa, xb),
                  "plug_in": mc_noise_floor(np.concatenate([xa, xb]), N, N)}
    n1, n2 = config.N, 2 * config.N
    out["ratio_w1"] = out[n1]["w1"] / out[n2]["w1"]
    out["ratio_plug_in"] = out[n1]["plug_in"] / out[n2]["plug_in"]
    return out


@dataclass
class UniquenessReport:
    seeds: list
    times: list
    distances: list
    noise_floors: list
    factor: float
    passed: bool

    to_json = _to_json


def uniqueness_shadow(cs: CoefficientSet, l_nu: GridDensity, config: SimConfig,
                      seeds=(0, 1), factor: float = 3.0, threads: int = 1) -> UniquenessReport:
    """Snapshot W_1 between two independently seeded runs from the same law."""
    a = simulate(dataclasses.replace(config, seed=seeds[0]), cs, l_nu, threads=threads)
    b = simulate(dataclasses.replace(config, seed=seeds[1]), cs, l_nu, threads=threads)
    times, dists, floors = [], [], []
    for (t, ca), (_, cb) in zip(a.snapshots, b.snapshots):
        xa, xb = ca.positions, cb.positions
        times.append(t)
        dists.append(wasserstein_1d_samples(xa, xb))
        floors.append(mc_noise_floor(np.concatenate([xa, xb]), xa.shape[0], xb.shape[0]))
    ok = all(d <= factor * f for d, f in zip(dists, floors))
    return UniquenessReport(list(seeds), times, dists, floors, factor, ok)
