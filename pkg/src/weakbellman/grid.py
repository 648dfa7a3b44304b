"""Tensor-product grid functions with piecewise-linear interpolation."""
from __future__ import annotations

import numpy as np

SIMPLEX = "simplex"
MULTILINEAR = "multilinear"


class GridFunction:
    """Values on a tensor grid, callable at arbitrary points.

    ``method="simplex"`` interpolates on the Kuhn triangulation of each cell
    (the simplex containing the point is selected by sorting the fractional
    coordinates). It reproduces node values exactly and, being linear on each
    simplex, underestimates any concave function it samples. When two axes
    coincide, points on one side of their diagonal only touch vertices on the
    same side (or the diagonal itself), so nodes outside a region like
    ``x1 <= x3`` never contribute with positive weight.

    Coordinates outside the axes are clamped to the boundary.
    """

    def __init__(self, axes, values, method: str = SIMPLEX):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ValueError(f"values shape {self.values.shape} does not match axes")
        if any(len(a) < 2 or np.any(np.diff(a) <= 0) for a in self.axes):
            raise ValueError("axes must be strictly increasing with at least two nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")
        if method not in (SIMPLEX, MULTILINEAR):
            raise ValueError(f"unknown interpolation method {method!r}")
        self.method = method

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.axes, values, self.method)

    def mesh(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def _locate(self, pts):
        idx = np.empty(pts.shape, dtype=np.int64)
        frac = np.empty(pts.shape)
        for k, a in enumerate(self.axes):
            p = np.clip(pts[:, k], a[0], a[-1])
            i = np.clip(np.searchsorted(a, p, side="right") - 1, 0, len(a) - 2)
            idx[:, k] = i
            frac[:, k] = np.clip((p - a[i]) / (a[i + 1] - a[i]), 0.0, 1.0)
        return idx, frac

    def __call__(self, *coords):
        shape = np.broadcast(*[np.asarray(c) for c in coords]).shape
        pts = np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape).ravel() for c in coords], axis=1)
        out = self.evaluate(pts)
        return out.reshape(shape) if shape else float(out[0])

    def evaluate(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.shape[1] != self.ndim:
            raise ValueError(f"expected points of dimension {self.ndim}")
        idx, frac = self._locate(pts)
        if self.method == SIMPLEX:
            return self._simplex(idx, frac)
        return self._multilinear(idx, frac)

    def _simplex(self, idx, frac):
        n, d = frac.shape
        # descending fractions; ties go to the later axis
        order = d - 1 - np.argsort(-frac[:, ::-1], axis=1, kind="stable")
        fs = np.take_along_axis(frac, order, axis=1)
        rows = np.arange(n)
        vert = idx.copy()
        out = (1.0 - fs[:, 0]) * self.values[tuple(vert.T)]
        for j in range(d):
            vert[rows, order[:, j]] += 1
            nxt = fs[:, j + 1] if j + 1 < d else 0.0
            out = out + (fs[:, j] - nxt) * self.values[tuple(vert.T)]
        return out

    def _multilinear(self, idx, frac):
        n, d = frac.shape
        out = np.zeros(n)
        for corner in range(2 ** d):
            bits = np.array([(corner >> k) & 1 for k in range(d)])
            wgt = np.prod(np.where(bits[None, :] == 1, frac, 1.0 - frac), axis=1)
            out += wgt * self.values[tuple((idx + bits[None, :]).T)]
        return out
