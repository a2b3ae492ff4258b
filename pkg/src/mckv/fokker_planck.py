"""Heat kernels, a 1-D nonlinear Fokker-Planck solver and the Duhamel residual.

The solver advances

    d_t l = -d_x(b(t, x, l(x), mu) l) + 1/2 d_xx(a(t, x) l),   a = sigma sigma^T,

on a truncated interval with zero-flux walls.  Each step is an explicit
upwind transport step (drift read from the density at the step start) followed
by a backward-Euler diffusion solve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import fftconvolve
from scipy.special import ndtr

from mckv._backend import kernels
from mckv.coefficients import CoefficientSet
from mckv.grid import GridDensity, gaussian_density
from mckv.transport import DiscreteMeasure

NEGATIVE_TOL = 1e-12


class CFLError(ValueError):
    """Advective Courant number above one."""


class FPStateError(RuntimeError):
    """The scheme produced a density below the negativity tolerance."""


@dataclass(frozen=True)
class HeatKernelParams:
    gamma: float = 0.0
    lam: float = 0.5

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


def heat_kernel_eval(hk: HeatKernelParams, t: float, x) -> float:
    """t^{-(gamma+d)/2} exp(-lambda |x|^2 / t)."""
    if not t > 0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    d = x.shape[0]
    return float(t ** (-(hk.gamma + d) / 2.0) * math.exp(-hk.lam * float(x @ x) / t))


@dataclass
class FPState:
    density: GridDensity
    time: float
    mass: float
    leakage: float = 0.0


def near_delta(center: float, lo: float, hi: float, cells: int) -> GridDensity:
    """Narrow normal of width 3 cells: a bounded stand-in for a point mass."""
    dx = (hi - lo) / cells
    return gaussian_density(center, 3.0 * dx, lo, hi, cells)


def suggest_half_width(l_nu: GridDensity, cs: CoefficientSet, T: float, sigmas: float = 8.0) -> float:
    """Half-width L of a domain [-L, L] whose walls the mass should not reach.

    Treats the law as roughly normal with the initial mean/variance, widened by
    the diffusion over [0, T] and shifted by the drift bound f0 * T.
    """
    x = l_nu.axis(0)
    w = l_nu.values * l_nu.cell_width[0]
    w = w / w.sum()
    mean = float(w @ x)
    var = float(w @ (x - mean) ** 2)
    s2 = (cs.sigma_scalar if cs.sigma_scalar is not None else cs.constants.C) ** 2
    return abs(mean) + cs.constants.f0_bound * T + sigmas * math.sqrt(var + s2 * T)


def _grid_measure(l: GridDensity) -> DiscreteMeasure:
    w = l.values * l.cell_width[0]
    total = w.sum()
    if total <= 0:
        raise FPStateError("density lost all its mass")
    return DiscreteMeasure(l.axis(0)[:, None], w / total, check=False)


def _face_drift(cs: CoefficientSet, t: float, l: GridDensity, faces: np.ndarray) -> np.ndarray:
    v = l.values
    r = 0.5 * (v[:-1] + v[1:])
    m = _grid_measure(l)
    return np.asarray(cs.drift(t, faces[:, None], r, m), dtype=np.float64)[:, 0]


def _diffusivity(cs: CoefficientSet, t: float, x: np.ndarray, m: DiscreteMeasure) -> np.ndarray:
    if cs.sigma_scalar is not None:
        return np.full(x.shape[0], cs.sigma_scalar**2)
    sig = np.asarray(cs.diffusion(t, x[:, None], m), dtype=np.float64)
    return np.einsum("nij,nij->n", sig, sig)


def _step(cs, t, v, l, faces, dx, dt, a, drift_from=None):
    """Advance values ``v`` by one step; returns (new values, would-be outflow)."""
    src = l if drift_from is None else drift_from
    b = _face_drift(cs, t, src, faces)
    if np.max(np.abs(b)) * dt / dx > 1.0:
        raise CFLError(f"|b| dt/dx = {np.max(np.abs(b)) * dt / dx:.3g} > 1 at t={t}")
    flux = np.maximum(b, 0.0) * v[:-1] + np.minimum(b, 0.0) * v[1:]
    adv = v.copy()
    adv[:-1] -= dt / dx * flux
    adv[1:] += dt / dx * flux
    # outflow a wall would pass if it were absorbing: advective plus a one-sided diffusive flux
    left, right = faces[0] - dx, faces[-1] + dx
    m = _grid_measure(l)
    b_walls = np.asarray(cs.drift(t, np.array([[left], [right]]),
                                  np.array([v[0], v[-1]]), m), dtype=np.float64)[:, 0]
    out = max(-b_walls[0], 0.0) * v[0] + max(b_walls[1], 0.0) * v[-1]
    if a is not None:
        out += (a[0] * v[0] + a[-1] * v[-1]) / dx
        k = dt / (2.0 * dx * dx)
        nb = np.full(v.shape[0], 2.0)
        nb[0] = nb[-1] = 1.0
        diag = 1.0 + k * a * nb
        upper = np.empty_like(v)
        lower = np.empty_like(v)
        upper[:-1] = -k * a[1:]
        upper[-1] = 0.0
        lower[1:] = -k * a[:-1]
        lower[0] = 0.0
        new = kernels.thomas(lower, diag, upper, adv)
    else:
        new = adv
    return new, out * dt


def solve_nonlinear_fp(cs: CoefficientSet, l_nu: GridDensity, T: float, dt: float,
                       snapshot_times=None, record_every: int | None = None,
                       picard_tol: float | None = None, max_picard: int = 50) -> list[FPState]:
    """Finite-volume solve of the nonlinear equation on the grid of ``l_nu``.

    States are recorded at ``snapshot_times`` (multiples of dt), or every
    ``record_every`` steps, always including t = 0 and t = T.  With
    ``picard_tol`` each step is repeated with the drift read from the end-of-step
    density until successive iterates agree to that tolerance.
    """
    if l_nu.d != 1 or cs.d != 1:
        raise ValueError("the Fokker-Planck solver is one-dimensional")
    if not cs.sigma_measure_free:
        raise ValueError("diffusion coefficient must not depend on the law")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-12 * max(1.0, T):
        raise ValueError(f"dt={dt} does not divide T={T}")
    dx = float(l_nu.cell_width[0])
    if cs.constants.f0_bound * dt / dx > 1.0:
        raise CFLError(
            f"drift bound {cs.constants.f0_bound} gives Courant number "
            f"{cs.constants.f0_bound * dt / dx:.3g} > 1 (dx={dx}, dt={dt})"
        )
    if snapshot_times is not None:
        want = {int(round(s / dt)) for s in snapshot_times}
    elif record_every is not None:
        want = set(range(0, steps + 1, record_every))
    else:
        want = set()
    want |= {0, steps}
    x = l_nu.axis(0)
    faces = l_nu.edges(0)[1:-1]
    pure_advection = cs.sigma_scalar == 0.0
    l = l_nu.with_values(l_nu.values.copy())
    leak = 0.0
    states = [FPState(l, 0.0, l.mass(), 0.0)] if 0 in want else []
    for k in range(steps):
        t = k * dt
        a = None if pure_advection else _diffusivity(cs, t, x, _grid_measure(l))
        v, out = _step(cs, t, l.values, l, faces, dx, dt, a)
        if picard_tol is not None:
            for _ in range(max_picard):
                trial = l.with_values(np.clip(v, 0.0, None))
                v2, out = _step(cs, t, l.values, l, faces, dx, dt, a, drift_from=trial)
                done = np.max(np.abs(v2 - v)) < picard_tol
                v = v2
                if done:
                    break
        low = float(np.min(v))
        if low < -NEGATIVE_TOL:
            i = int(np.argmin(v))
            raise FPStateError(f"density {low:.3g} < 0 at x={x[i]:.6g}, t={t + dt:.6g}")
        leak += out
        l = l.with_values(np.clip(v, 0.0, None))
        if k + 1 in want:
            states.append(FPState(l, (k + 1) * dt, l.mass(), leak))
    return states


def _gauss_cell_masses(dx: float, var: float, half: int) -> np.ndarray:
    """Mass of N(0, var) on each cell [(k - 1/2) dx, (k + 1/2) dx], |k| <= half."""
    k = np.arange(-half, half + 1)
    s = math.sqrt(var)
    return ndtr((k + 0.5) * dx / s) - ndtr((k - 0.5) * dx / s)


def _gauss_grad_cells(dx: float, var: float, half: int) -> np.ndarray:
    """Cell integrals of d/dy g(x - y) for x - (cell centre) = k dx."""
    k = np.arange(-half, half + 1)
    s = math.sqrt(var)
    g = lambda z: np.exp(-0.5 * z * z / var) / (s * math.sqrt(2.0 * math.pi))
    return g((k - 0.5) * dx) - g((k + 0.5) * dx)


def duhamel_residual(states: list[FPState], cs: CoefficientSet, sigma0: float | None = None) -> float:
    """sup over the grid of |l_t - RHS| for the last state, RHS by quadrature.

    RHS = (g_{sigma0^2 t} * l_nu) + int_0^t int l_s b_s d_y g_{sigma0^2 (t-s)}(x - y) dy ds.
    Space: exact cell integrals of the Gaussian and its gradient.  Time:
    trapezoid over the recorded states, with the s = t integrand replaced by
    its limit -d_x(l_t b_t).
    """
    if cs.sigma_scalar is None:
        raise ValueError("Duhamel check needs sigma = const * identity")
    if sigma0 is None:
        sigma0 = cs.sigma_scalar
    if abs(sigma0 - cs.sigma_scalar) > 1e-12 or sigma0 <= 0:
        raise ValueError(f"sigma0={sigma0} does not match the coefficient set")
    if len(states) < 2:
        raise ValueError("need at least two recorded states")
    l0 = states[0].density
    lt = states[-1].density
    t = states[-1].time
    dx = float(l0.cell_width[0])
    M = l0.shape[0]
    x = l0.axis(0)
    v2 = sigma0 * sigma0

    def conv(f, taps):
        half = (taps.shape[0] - 1) // 2
        return fftconvolve(f, taps, mode="full")[half:half + M]

    def half_for(var):
        return min(M, int(math.ceil(10.0 * math.sqrt(var) / dx)) + 2)

    rhs = conv(l0.values, _gauss_cell_masses(dx, v2 * t, half_for(v2 * t)))
    times = np.array([s.time for s in states])
    vals = []
    for st in states:
        l = st.density
        m = _grid_measure(l)
        f = l.values * np.asarray(cs.drift(st.time, x[:, None], l.values, m))[:, 0]
        lag = t - st.time
        if lag <= 1e-14:
            vals.append(-np.gradient(f, dx))
        else:
            vals.append(conv(f, _gauss_grad_cells(dx, v2 * lag, half_for(v2 * lag))))
    vals = np.array(vals)
    rhs = rhs + trapezoid(vals, times, axis=0)
    return float(np.max(np.abs(lt.values - rhs)))
