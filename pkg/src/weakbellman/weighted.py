"""Weighted Bellman function on the slice ``x2 = -1, x5 = 1`` and its diagnostics.

A full point ``(x1, x2, x3, x4, x5)`` with ``x2 < 0`` is brought to the slice
by ``normalize``; the full value is ``scale * V(slice)``. Children with
``x2 >= 0`` are exact: the whole weighted mass ``x4`` counts.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import bisect

from .closed_form import b_full_array
from .errors import DomainError, StencilError
from .grid import SIMPLEX, GridFunction


@dataclass(frozen=True)
class SlicePoint:
    x1: float
    x3: float
    x4: float

    def in_g(self, Q) -> bool:
        return abs(self.x1) <= self.x3 and 1 <= self.x4 <= Q


def normalize(x1, x2, x3, x4, x5):
    """``((-x1/x2, -x3/(x2*x5), x4/x5), x5)``."""
    if not x2 < 0:
        raise DomainError("x2 >= 0 has the exact value x4 and no slice representative")
    if not x5 > 0 or x3 < abs(x1) * x5 or x4 < x5:
        raise DomainError(f"({x1}, {x2}, {x3}, {x4}, {x5}) is outside the domain")
    return SlicePoint(-x1 / x2, -x3 / (x2 * x5), x4 / x5), x5


@dataclass(frozen=True)
class WeightedSplit:
    """Children ``(x1 +- d1, -1 +- d2, x3 +- d3, x4 +- d4, s+-)`` of a slice node."""

    d1: float
    d2: float
    d3: float
    d4: float = 0.0
    s_plus: float = 1.0
    s_minus: float = 1.0

    def __post_init__(self):
        if abs(self.d2) > abs(self.d1):
            raise ValueError("need |d2| <= |d1|")
        if min(self.s_plus, self.s_minus) != 1:
            raise ValueError("the parent x5 is min(s+, s-) and must be 1")

    def children(self, x1, x3, x4):
        one = np.ones_like(x1)
        plus = (x1 + self.d1, -one + self.d2, x3 + self.d3, x4 + self.d4, one * self.s_plus)
        minus = (x1 - self.d1, -one - self.d2, x3 - self.d3, x4 - self.d4, one * self.s_minus)
        return plus, minus


@dataclass(frozen=True)
class HeavyHalfSplit:
    """One half carries the constant weight ``s``; the other keeps ``x5 = 1``."""

    d1: float
    d2: float
    d3: float
    s: float

    def children(self, x1, x3, x4):
        one = np.ones_like(x1)
        heavy = (x1 - self.d1, -one - self.d2, x3 - self.d3, one * self.s, one * self.s)
        light = (x1 + self.d1, -one + self.d2, x3 + self.d3, 2 * x4 - self.s, one)
        return light, heavy


class BoundarySplit:
    """``d = (x3, x3, x1, 0)``: both children land on ``x3 = |x1|``."""

    def children(self, x1, x3, x4):
        one = np.ones_like(x1)
        return ((x1 + x3, -one + x3, x3 + x1, x4, one),
                (x1 - x3, -one - x3, x3 - x1, x4, one))


class ConcentratedWeightSplit:
    """Children ``(0, 0, 0, 2x4-1, 2x4-1)`` and ``(2x1, -2, 2x3, 1, 1)``.

    Admissible only where ``|x1| >= 1``, since the ``x2`` jump is 1.
    """

    def children(self, x1, x3, x4):
        one = np.ones_like(x1)
        zero = np.zeros_like(x1)
        ok = np.abs(x1) >= 1
        heavy_x4 = np.where(ok, 2 * x4 - 1, np.nan)
        return ((zero, zero, zero, heavy_x4, heavy_x4),
                (2 * x1, -2 * one, 2 * x3, one, one))


def default_weighted_splits(Q):
    out = []
    for d1 in (0.25, 0.5, 1.0):
        for d2 in (0.0, d1, -d1):
            for d3 in (0.0, 0.25, -0.25, 0.5, -0.5):
                out.append(WeightedSplit(d1, d2, d3))
    s = 2.0
    while s <= Q:
        for d1 in (0.5, 1.0):
            for d2 in (d1, -d1):
                for d3 in (0.0, 0.5, -0.5):
                    out.append(HeavyHalfSplit(d1, d2, d3, s))
        s *= 2
    return out


def seeded_splits():
    return [BoundarySplit(), ConcentratedWeightSplit()]


def _child_value(V, child, Q, x3max):
    x1, x2, x3, x4, x5 = child
    with np.errstate(invalid="ignore"):
        inside = (x5 > 0) & (x3 >= np.abs(x1) * x5) & (x4 >= x5) & (x4 <= Q * x5)
    out = np.full_like(x1, -np.inf)
    term = inside & (x2 >= 0)
    out[term] = x4[term]
    neg = inside & (x2 < 0)
    if neg.any():
        s1 = np.abs(x1[neg]) / -x2[neg]
        s3 = np.minimum(x3[neg] / (-x2[neg] * x5[neg]), x3max)
        s4 = np.clip(x4[neg] / x5[neg], 1.0, Q)
        vals = np.zeros_like(s1)
        ok = s1 <= s3
        if ok.any():
            vals[ok] = V.evaluate(np.stack([s1[ok], s3[ok], s4[ok]], axis=1))
        out[neg] = x5[neg] * vals
    return out


def _best(V, x1, x3, x4, splits, Q, x3max):
    best = np.full_like(x1, -np.inf)
    for sp in splits:
        plus, minus = sp.children(x1, x3, x4)
        best = np.maximum(best, 0.5 * (_child_value(V, plus, Q, x3max) + _child_value(V, minus, Q, x3max)))
    return best


def dp_weighted_iter(Q, grid=(65, 65, 33), iters: int = 4, seeded: bool = True, splits=None,
                     x3max: float = 2.0, workers: int = 1, method: str = SIMPLEX):
    """Yield ``V_0, ..., V_iters`` on the grid ``(x1, x3, x4)`` over ``[0,x3max]^2 x [1,Q]``."""
    if Q < 1:
        raise ValueError("Q must be at least 1")
    n1, n3, n4 = grid
    splits = default_weighted_splits(Q) if splits is None else list(splits)
    if seeded:
        splits = splits + seeded_splits()
    a1 = np.linspace(0.0, x3max, n1)
    a3 = np.linspace(0.0, x3max, n3)
    a4 = np.linspace(1.0, float(Q), n4) if Q > 1 else np.array([1.0, 1.0 + 1e-9])
    X1, X3, X4 = np.meshgrid(a1, a3, a4, indexing="ij")
    active = X1 <= X3
    vals = np.zeros(X1.shape)
    face = active[:, :, 0]
    vals[:, :, 0][face] = b_full_array(X1[:, :, 0][face], -1.0, X3[:, :, 0][face])
    if Q == 1:
        vals[:, :, 1] = vals[:, :, 0]
    V = GridFunction((a1, a3, a4), vals, method)
    yield V
    x1, x3, x4 = X1[active], X3[active], X4[active]
    bounds = np.linspace(0, len(x1), max(1, workers) + 1).astype(int)
    parts = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    for _ in range(iters):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                best = np.concatenate(list(pool.map(
                    lambda sl: _best(V, x1[sl], x3[sl], x4[sl], splits, Q, x3max), parts)))
        else:
            best = _best(V, x1, x3, x4, splits, Q, x3max)
        if np.isnan(best).any():
            raise FloatingPointError("NaN in weighted Bellman iteration")
        new = V.values.copy()
        new[active] = np.maximum(new[active], best)
        V = V.with_values(new)
        yield V


def dp_weighted(Q, grid=(65, 65, 33), iters: int = 4, seeded: bool = True, splits=None,
                x3max: float = 2.0, workers: int = 1, method: str = SIMPLEX) -> GridFunction:
    V = None
    for V in dp_weighted_iter(Q, grid, iters, seeded, splits, x3max, workers, method):
        pass
    return V


def r_statistic(V: GridFunction):
    """``(max V/x3, argmax point)`` over nodes with ``0 < x3`` and ``x1 <= x3``."""
    X1, X3, X4 = V.mesh()
    mask = (X3 > 0) & (X1 <= X3)
    if not mask.any():
        raise ValueError("grid has no node with x3 > 0")
    ratio = np.where(mask, V.values / np.where(mask, X3, 1.0), -np.inf)
    k = np.unravel_index(np.argmax(ratio), ratio.shape)
    return float(ratio[k]), SlicePoint(float(X1[k]), float(X3[k]), float(X4[k]))


# --- averaged quantities -------------------------------------------------------

def beta(V, x, steps: int = 32768):
    """``2 * int_{1/2}^{1} V(x1, t*x3, t*x4) dt`` by the trapezoid rule.

    ``V`` is any callable accepting numpy arrays ``(x1, x3, x4)``.
    """
    x1, x3, x4 = x
    if x4 / 2 < 1:
        raise DomainError("need x4 >= 2 so that t*x4 >= 1 on [1/2, 1]")
    t = np.linspace(0.5, 1.0, steps + 1)
    vals = np.asarray(V(np.full_like(t, x1), t * x3, t * x4), dtype=float) * np.ones_like(t)
    return 2.0 * float(trapezoid(vals, t))


def gamma_op(F, x, h: float = 1e-3):
    """``x3^2 F_33 + 2 x3 x4 F_34 + x4^2 F_44`` as the second derivative of ``s -> F(x1, s x3, s x4)`` at 1."""
    x1, x3, x4 = x
    if (1 - h) * x3 < abs(x1) or (1 - h) * x4 < 1:
        raise StencilError("scaled stencil leaves the domain")
    rho = [float(F(x1, s * x3, s * x4)) for s in (1 - h, 1.0, 1 + h)]
    return (rho[0] - 2 * rho[1] + rho[2]) / (h * h)


@dataclass
class ARoot:
    x4: float
    root: float | None
    crossing: bool
    beta_lo: float
    beta_hi: float

    def to_json(self):
        return {"x4": self.x4, "a_root": self.root, "crossing": self.crossing,
                "beta_lo": self.beta_lo, "beta_hi": self.beta_hi}


def find_a(V, x4, lo: float = 0.0, hi: float = 1.0, tol: float = 1e-9, steps: int = 32768) -> ARoot:
    """Root ``a`` of ``beta(0, a, x4) = x4/8`` on ``[lo, hi]`` by bisection."""
    f = lambda a: beta(V, (0.0, a, x4), steps) - x4 / 8
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return ARoot(x4, lo, True, flo + x4 / 8, fhi + x4 / 8)
    if flo * fhi > 0:
        return ARoot(x4, None, False, flo + x4 / 8, fhi + x4 / 8)
    root = bisect(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)
    return ARoot(x4, float(root), True, flo + x4 / 8, fhi + x4 / 8)


def m_bound(x3, x4, R, a):
    """Piecewise lower bound for ``beta_x3`` with the switch at ``x3 = (1-2a) x4 / (16 R)``."""
    if x3 <= (1 - 2 * a) * x4 / (16 * R):
        return (x4 - 16 * R * x3) / (16 * a)
    return x4 / 8


def _beta_fn(V, steps):
    return lambda x1, x3, x4: beta(V, (x1, x3, x4), steps)


def main1_samples(Q):
    x4s = sorted({4.0, float(max(4.0, Q / 2)), float(max(4.0, Q))})
    out = []
    for x4 in x4s:
        for x3 in (0.25, 0.5, 1.0):
            for frac in (0.0, 0.125, 0.25):
                out.append(SlicePoint(frac * x3, x3, x4))
    return out


def diagnostics_main1(V, samples, R, h: float = 0.05, steps: int = 4096):
    """Compare ``-gamma_beta(x)`` with ``8 R (|x1| + x3/x4)`` on each sample."""
    rows = []
    F = _beta_fn(V, steps)
    for p in samples:
        if abs(p.x1) > p.x3 / 4 or p.x4 < 4:
            raise DomainError(f"{p} is outside |x1| <= x3/4, x4 >= 4")
        lhs = -gamma_op(F, (p.x1, p.x3, p.x4), h)
        rhs = 8 * R * (abs(p.x1) + p.x3 / p.x4)
        rows.append({"x1": p.x1, "x3": p.x3, "x4": p.x4, "lhs": lhs, "rhs": rhs, "margin": rhs - lhs,
                     "holds": bool(lhs <= rhs)})
    passed = sum(r["holds"] for r in rows)
    return {"samples": rows, "passed": passed, "total": len(rows),
            "pass_fraction": passed / len(rows) if rows else 1.0}


def diagnostics_hx3(V, R, Q, a_roots, h: float = 0.02, steps: int = 4096):
    """``beta_x3`` by central differences against the piecewise bound ``m_bound``."""
    rows = []
    F = _beta_fn(V, steps)
    for ar in a_roots:
        if not ar.crossing or ar.x4 > Q:
            continue
        a = ar.root
        for frac in (0.25, 0.5, 1.0):
            x3 = frac * a
            if x3 - h <= 0:
                continue
            d = (F(0.0, x3 + h, ar.x4) - F(0.0, x3 - h, ar.x4)) / (2 * h)
            m = m_bound(x3, ar.x4, R, a)
            rows.append({"x1": 0.0, "x3": x3, "x4": ar.x4, "beta_x3": d, "m": m, "margin": d - m,
                         "holds": bool(d >= m)})
    passed = sum(r["holds"] for r in rows)
    return {"samples": rows, "passed": passed, "total": len(rows)}


def elementary_f(t):
    t = np.asarray(t, dtype=float)
    return 16 * (1 + t / 4) * np.log1p(t / 4) - 4 * t - t * np.log(t)


def elementary_f2(t):
    t = np.asarray(t, dtype=float)
    return (3 * t - 4) / (t * (t + 4))


def elementary_inequality_check(tmin: float = 4.0, tmax: float = 1e6, samples: int = 10000):
    if tmin < 4:
        raise ValueError("tmin must be at least 4")
    t = np.geomspace(tmin, tmax, samples)
    f = elementary_f(t)
    f4 = float(elementary_f(4.0))
    closed4 = 8 * math.log(8 / math.e ** 2)
    # central-difference second derivative against the closed form
    hh = 1e-3
    fd = [(float(elementary_f(s + hh)) - 2 * float(elementary_f(s)) + float(elementary_f(s - hh))) / hh ** 2
          for s in (4.0, 10.0, 100.0)]
    exact = [float(elementary_f2(s)) for s in (4.0, 10.0, 100.0)]
    ok = (bool(np.all(f > 0)) and abs(f4 - closed4) < 1e-12 and f4 > 0
          and all(abs(a - b) < 1e-5 for a, b in zip(fd, exact)) and bool(np.all(elementary_f2(t) > 0)))
    return {"passed": ok, "samples": samples, "min_f": float(f.min()), "f4": f4, "f4_closed": closed4,
            "f2_at_4": exact[0], "f2_fd": fd, "f2_closed": exact}


def concavity_spot_check(V: GridFunction, Q, n: int = 2000, seed: int = 0, tol: float = 1e-6):
    """Midpoint residuals ``V(mid) - (V(a) + V(b))/2`` on random segments inside the slice domain."""
    rng = np.random.default_rng(seed)
    x3max = float(V.axes[1][-1])
    pts = []
    for _ in range(2):
        x3 = rng.uniform(0, x3max, n)
        x1 = rng.uniform(0, 1, n) * x3
        x4 = rng.uniform(1, Q, n)
        pts.append(np.stack([x1, x3, x4], axis=1))
    a, b = pts
    res = V.evaluate((a + b) / 2) - 0.5 * (V.evaluate(a) + V.evaluate(b))
    bad = res < -tol
    return {"samples": n, "min_residual": float(res.min()), "violations": int(bad.sum()),
            "violation_fraction": float(bad.mean())}
