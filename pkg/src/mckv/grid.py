"""Densities sampled on uniform rectangular grids.

A :class:`GridDensity` stores one value per cell; the value is read as the
density on the whole cell, so midpoint quadrature integrates it exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr


class GridMismatchError(ValueError):
    pass


@dataclass
class GridDensity:
    origin: np.ndarray
    cell_width: np.ndarray
    values: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 0:
            raise ValueError("values must have at least one axis")
        d = self.values.ndim
        self.origin = np.broadcast_to(np.asarray(self.origin, dtype=np.float64), (d,)).copy()
        self.cell_width = np.broadcast_to(
            np.asarray(self.cell_width, dtype=np.float64), (d,)
        ).copy()
        if np.any(self.cell_width <= 0):
            raise ValueError("cell widths must be positive")
        if self.check:
            if not np.all(np.isfinite(self.values)):
                raise ValueError("density values must be finite")
            if np.any(self.values < 0):
                raise ValueError("density values must be nonnegative")
            if self.mass() > 1.0 + 1e-6:
                raise ValueError(f"density mass {self.mass():.9g} exceeds 1")

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_width))

    def axis(self, k: int) -> np.ndarray:
        """Cell midpoints along axis ``k``."""
        return self.origin[k] + (np.arange(self.shape[k]) + 0.5) * self.cell_width[k]

    def edges(self, k: int) -> np.ndarray:
        return self.origin[k] + np.arange(self.shape[k] + 1) * self.cell_width[k]

    def nodes(self) -> np.ndarray:
        """Cell midpoints as an (M, d) array in C order."""
        mesh = np.meshgrid(*[self.axis(k) for k in range(self.d)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def upper(self) -> np.ndarray:
        return self.origin + np.asarray(self.shape) * self.cell_width

    def mass(self) -> float:
        return float(np.sum(self.values) * self.cell_volume)

    def sup_norm(self) -> float:
        return float(np.max(self.values))

    def moment(self, p: float) -> float:
        r = np.linalg.norm(self.nodes(), axis=1).reshape(self.shape)
        return float(np.sum(r**p * self.values) * self.cell_volume)

    def same_grid(self, other: "GridDensity") -> bool:
        return (
            self.shape == other.shape
            and np.allclose(self.origin, other.origin, rtol=0, atol=1e-12)
            and np.allclose(self.cell_width, other.cell_width, rtol=1e-12, atol=0)
        )

    def require_same_grid(self, other: "GridDensity") -> None:
        if not self.same_grid(other):
            raise GridMismatchError(
                f"grids differ: shape {self.shape} vs {other.shape}, "
                f"origin {self.origin} vs {other.origin}, width {self.cell_width} vs {other.cell_width}"
            )

    def with_values(self, values, check: bool = False) -> "GridDensity":
        return GridDensity(self.origin, self.cell_width, values, check=check)

    def to_measure(self):
        """Midpoint atoms carrying the cell masses, renormalized to a probability.

        Returns ``(measure, mass)``.
        """
        from mckv.transport import DiscreteMeasure

        w = self.values.ravel() * self.cell_volume
        total = float(np.sum(w))
        if total <= 0:
            raise ValueError("zero-mass density has no probability measure")
        keep = w > 0
        return DiscreteMeasure(self.nodes()[keep], w[keep] / total, check=False), total

    def to_csv(self, path) -> None:
        """One row per cell: coordinates of the midpoint, then the value."""
        cols = [f"x{k}" for k in range(self.d)] + ["value"]
        data = np.column_stack([self.nodes(), self.values.ravel()])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in data:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, check: bool = True) -> "GridDensity":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[-1] != "value" or not all(h.startswith("x") for h in header[:-1]):
            raise ValueError(f"{path}: unexpected header {header}")
        data = np.array(body, dtype=np.float64)
        d = len(header) - 1
        axes = [np.unique(data[:, k]) for k in range(d)]
        shape = tuple(len(a) for a in axes)
        widths = np.array([(a[-1] - a[0]) / (len(a) - 1) if len(a) > 1 else 1.0 for a in axes])
        origin = np.array([a[0] for a in axes]) - 0.5 * widths
        return cls(origin, widths, data[:, -1].reshape(shape), check=check)


def uniform_grid(lo, hi, cells) -> GridDensity:
    """Zero density on the box [lo, hi] split into ``cells`` per axis."""
    lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
    cells = np.broadcast_to(np.atleast_1d(cells), lo.shape).astype(int)
    return GridDensity(lo, (hi - lo) / cells, np.zeros(tuple(cells)))


def gaussian_density(mean: float, std: float, lo: float, hi: float, cells: int) -> GridDensity:
    """1-D normal law as exact cell averages (CDF differences over each cell)."""
    g = uniform_grid(lo, hi, cells)
    e = g.edges(0)
    mass = np.diff(ndtr((e - mean) / std))
    return g.with_values(mass / g.cell_width[0], check=True)


def uniform_density(a: float, b: float, lo: float, hi: float, cells: int) -> GridDensity:
    """1-D uniform law on [a, b] as exact cell averages."""
    g = uniform_grid(lo, hi, cells)
    e = g.edges(0)
    overlap = np.clip(np.minimum(e[1:], b) - np.maximum(e[:-1], a), 0.0, None)
    return g.with_values(overlap / ((b - a) * g.cell_width[0]), check=True)


def translate(l: GridDensity, shift: float) -> GridDensity:
    """Shift a 1-D density by ``shift`` on the same grid (cell-average remap)."""
    if l.d != 1:
        raise ValueError("translate is 1-D only")
    e = l.edges(0)
    cdf = np.concatenate([[0.0], np.cumsum(l.values * l.cell_width[0])])
    shifted = np.interp(e - shift, e, cdf, left=0.0, right=cdf[-1])
    return l.with_values(np.clip(np.diff(shifted), 0.0, None) / l.cell_width[0], check=True)
