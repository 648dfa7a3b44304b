"""Exact unweighted Bellman function and checks of its differential structure.

Coordinates: ``x = (x1, x2, x3)`` with ``x1 = <phi>``, ``x2 = <psi>``,
``x3 = <|phi|>`` and domain ``|x1| <= x3``. The rotated coordinates are
``y1 = (x1 + x2)/2``, ``y2 = (x2 - x1)/2``, ``y3 = x3``.

Scalar functions work with Fractions (exact) as well as floats; the
``*_array`` variants are numpy-vectorized float versions used by the sweeps.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConstraintViolation, DomainError, StencilError

PM = "PM"
SUB = "SUB"

# derivative-based checks stay this far from the singular line x1 = x3 = 0
SINGULAR_MARGIN = 1e-3


@dataclass(frozen=True)
class Point3:
    x1: object
    x2: object
    x3: object

    def in_omega(self) -> bool:
        return abs(self.x1) <= self.x3

    def to_y(self) -> "YPoint":
        return YPoint(*to_y(self.x1, self.x2, self.x3))


@dataclass(frozen=True)
class YPoint:
    y1: object
    y2: object
    y3: object

    def to_x(self) -> Point3:
        return Point3(*to_x(self.y1, self.y2, self.y3))


def to_y(x1, x2, x3):
    return (x1 + x2) / 2, (x2 - x1) / 2, x3


def to_x(y1, y2, y3):
    return y1 - y2, y1 + y2, y3


def _check_omega(x1, x2, x3):
    if not abs(x1) <= x3:
        raise DomainError(f"({x1}, {x2}, {x3}) is outside |x1| <= x3")


def b_full(x1, x2, x3):
    """The Bellman function of the weak-type problem (both PM and SUB classes)."""
    _check_omega(x1, x2, x3)
    s = x3 + x2
    if s >= 0:
        return s * 0 + 1
    denom = x2 * x2 - x1 * x1
    # |x1| <= x3 < -x2 forces x2^2 > x1^2
    assert denom > 0, (x1, x2, x3)
    return 1 - s * s / denom


def b_boundary(x1, x2):
    """Value on the boundary ``x3 = |x1|``."""
    a = abs(x1)
    if x2 >= -a:
        return a * 0 + 1
    return 2 * a / (a - x2)


def m_y(y1, y2, y3):
    if not abs(y1 - y2) <= y3:
        raise DomainError(f"({y1}, {y2}, {y3}) is outside |y1 - y2| <= y3")
    s = y1 + y2 + y3
    if s >= 0:
        return s * 0 + 1
    return 1 - s * s / (4 * y1 * y2)


def _m_fan(y1, y2, y3):
    # analytic continuation of the fan branch; no domain check
    s = y1 + y2 + y3
    return 1 - s * s / (4 * y1 * y2)


def b_full_array(x1, x2, x3):
    x1, x2, x3 = (np.asarray(v, dtype=float) for v in (x1, x2, x3))
    if np.any(np.abs(x1) > x3):
        raise DomainError("points outside |x1| <= x3")
    s = x3 + x2
    with np.errstate(divide="ignore", invalid="ignore"):
        fan = 1.0 - s * s / (x2 * x2 - x1 * x1)
    return np.where(s >= 0, 1.0, fan)


def hessian_matrix(y1, y2, y3) -> np.ndarray:
    """Hessian of the fan branch ``1 - (y1+y2+y3)^2 / (4 y1 y2)``."""
    if y1 * y2 == 0:
        raise DomainError("Hessian undefined at y1*y2 = 0")
    p, q = y2 + y3, y1 + y3
    return np.array([
        [-p * p / (2 * y1 ** 3 * y2), (y1 * y1 + y2 * y2 - y3 * y3) / (4 * y1 ** 2 * y2 ** 2), p / (2 * y1 ** 2 * y2)],
        [(y1 * y1 + y2 * y2 - y3 * y3) / (4 * y1 ** 2 * y2 ** 2), -q * q / (2 * y1 * y2 ** 3), q / (2 * y1 * y2 ** 2)],
        [p / (2 * y1 ** 2 * y2), q / (2 * y1 * y2 ** 2), -1 / (2 * y1 * y2)],
    ], dtype=float)


def printed_hessian_entry_12(y1, y2, y3):
    """Common mis-transcription of the (1,2) entry, with ``+y3^2``; kept so tests can show it is wrong."""
    return (y1 * y1 + y2 * y2 + y3 * y3) / (4 * y1 ** 2 * y2 ** 2)


def hessian_form(y1, y2, y3, xi):
    """Quadratic form of the Hessian in completed-square form.

    Nonpositive whenever ``xi1 * xi2 <= 0`` on the fan region ``y1, y2 < 0``.
    """
    if y1 * y2 == 0:
        raise DomainError("quadratic form undefined at y1*y2 = 0")
    k1, k2, k3 = xi
    sq = k3 - (y1 + y3) / y2 * k2 - (y2 + y3) / y1 * k1
    s = y1 + y2 + y3
    return -sq * sq / (2 * y1 * y2) + s * s / (2 * y1 * y1 * y2 * y2) * k1 * k2


def hessian_form_array(y, xi):
    y1, y2, y3 = (np.asarray(v, dtype=float) for v in y)
    k1, k2, k3 = (np.asarray(v, dtype=float) for v in xi)
    sq = k3 - (y1 + y3) / y2 * k2 - (y2 + y3) / y1 * k1
    s = y1 + y2 + y3
    return -sq * sq / (2 * y1 * y2) + s * s / (2 * y1 * y1 * y2 * y2) * k1 * k2


def _fan_interior(y1, y2, y3, margin):
    return y1 < -margin and y2 < -margin and y1 + y2 + y3 < -margin


def fd_hessian(y1, y2, y3, h=1e-4):
    """Central-difference Hessian of the fan branch of ``M``."""
    y = np.array([y1, y2, y3], dtype=float)
    corners = y[None, :] + 2 * h * np.array([[a, b, c] for a in (-1, 1) for b in (-1, 1) for c in (-1, 1)])
    if not all(_fan_interior(*c, margin=0.0) for c in corners):
        raise StencilError(f"stencil around {tuple(y)} leaves the fan region")
    f = lambda v: _m_fan(*v)
    f0 = f(y)
    H = np.empty((3, 3))
    E = np.eye(3) * h
    for i in range(3):
        H[i, i] = (f(y + E[i]) - 2 * f0 + f(y - E[i])) / (h * h)
        for j in range(i + 1, 3):
            H[i, j] = H[j, i] = (f(y + E[i] + E[j]) - f(y + E[i] - E[j])
                                 - f(y - E[i] + E[j]) + f(y - E[i] - E[j])) / (4 * h * h)
    return H


def monge_ampere_residual(y1, y2, y3, h=1e-3):
    """Finite-difference ``M_11 M_33 - M_13^2`` in the plane ``y2 = const``.

    Zero (exactly) where ``M`` is identically one; ``O(h^2)`` on the fan.
    """
    pts = [(y1 + a * h, y2, y3 + b * h) for a in (-1, 0, 1) for b in (-1, 0, 1)]
    if all(p[0] + p[1] + p[2] >= 0 for p in pts):
        if not all(abs(p[0] - p[1]) <= p[2] for p in pts):
            raise StencilError("stencil leaves the domain")
        return 0.0
    if not all(_fan_interior(*p, margin=0.0) for p in pts):
        raise StencilError(f"stencil around ({y1}, {y2}, {y3}) straddles the fan boundary")
    f = lambda a, b: _m_fan(y1 + a * h, y2, y3 + b * h)
    m11 = (f(1, 0) - 2 * f(0, 0) + f(-1, 0)) / (h * h)
    m33 = (f(0, 1) - 2 * f(0, 0) + f(0, -1)) / (h * h)
    m13 = (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4 * h * h)
    return m11 * m33 - m13 * m13


def fan_slope(k, y2):
    return -(k + 1) ** 2 / (4 * y2)


@dataclass
class ExtremalLineReport:
    k: float
    y2: float
    y1_range: tuple
    slope: float
    expected_slope: float
    max_deviation: float

    @property
    def ok(self) -> bool:
        return self.max_deviation <= 1e-12 and abs(self.slope - self.expected_slope) <= 1e-9 * max(1.0, abs(self.expected_slope))


def extremal_line_check(k, y2, samples=64) -> ExtremalLineReport:
    """Sample ``M`` along ``y3 = k*y1 - y2`` from the far boundary hit to ``y1 = 0``."""
    if not -1 <= k <= 1 or not y2 < 0:
        raise DomainError("need -1 <= k <= 1 and y2 < 0")
    # for k = -1 the segment is a half-line; M is constant on it
    y1_far = 2 * y2 / (k + 1) if k > -1 else 8 * y2
    t = np.linspace(0.0, 1.0, samples)
    y1 = y1_far * (1 - t)
    y3 = np.maximum(k * y1 - y2, np.abs(y1 - y2))
    vals = np.array([m_y(a, y2, c) for a, c in zip(y1, y3)])
    slope, icpt = np.polyfit(y1, vals, 1)
    # affinity: distance to the chord through the endpoints
    chord = vals[-1] + (vals[0] - vals[-1]) * (y1 - y1[-1]) / (y1[0] - y1[-1])
    dev = float(np.max(np.abs(vals - chord)))
    return ExtremalLineReport(float(k), float(y2), (float(y1_far), 0.0), float(slope), float(fan_slope(k, y2)), dev)


def _midpoint_check(xp, xm, mode):
    d1 = xp[0] - xm[0]
    d2 = xp[1] - xm[1]
    if mode == PM and abs(d2) != abs(d1):
        raise ConstraintViolation("PM pairs need |x2+ - x2-| = |x1+ - x1-|")
    if mode == SUB and abs(d2) > abs(d1):
        raise ConstraintViolation("SUB pairs need |x2+ - x2-| <= |x1+ - x1-|")
    if mode not in (PM, SUB):
        raise ValueError(mode)
    for p in (xp, xm):
        if not abs(p[0]) <= p[2]:
            raise ConstraintViolation(f"{tuple(p)} is outside the domain")


def main_inequality_check(xplus, xminus, mode=SUB):
    """``B(mid) - (B(x+) + B(x-))/2``; nonnegative for admissible pairs."""
    xp, xm = tuple(xplus), tuple(xminus)
    _midpoint_check(xp, xm, mode)
    mid = tuple((a + b) / 2 for a, b in zip(xp, xm))
    return b_full(*mid) - (b_full(*xp) + b_full(*xm)) / 2


def main_inequality_residuals(xp, xm, fn=b_full_array):
    """Vectorized midpoint residuals for arrays of shape (n, 3)."""
    xp, xm = np.asarray(xp, float), np.asarray(xm, float)
    mid = (xp + xm) / 2
    return fn(*mid.T) - (fn(*xp.T) + fn(*xm.T)) / 2


def euler_identity_residual(x1, x2, x3, h=1e-4, margin=SINGULAR_MARGIN):
    """``x1 B_1 + x2 B_2 + x3 B_3`` by central differences."""
    if abs(x1) < margin and x3 < margin:
        raise StencilError("too close to the singular line x1 = x3 = 0")
    x = np.array([x1, x2, x3], dtype=float)
    E = np.eye(3) * h
    pts = [x + s * E[i] for i in range(3) for s in (-1, 1)]
    if not all(abs(p[0]) <= p[2] for p in pts):
        raise StencilError("stencil leaves the domain")
    grad = [(b_full(*(x + E[i])) - b_full(*(x - E[i]))) / (2 * h) for i in range(3)]
    return float(np.dot(x, grad))


# --- supersolution verification -------------------------------------------

def obstacle(x1, x2, x3):
    return np.where(np.asarray(x2) >= 0, 1.0, 0.0)


@dataclass
class Certificate:
    passed: bool
    samples: int
    boundary_samples: int
    min_residual: float
    violations: list = field(default_factory=list)

    def to_json(self):
        return {"passed": self.passed, "samples": self.samples, "boundary_samples": self.boundary_samples,
                "min_residual": self.min_residual, "violations": self.violations}


def unweighted_split_directions():
    """Direction set shared with the grid DP (see ``envelope.default_splits``)."""
    out = []
    for d1 in (0.25, 0.5, 1.0, 2.0):
        for d2 in (0.0, d1 / 2, -d1 / 2, d1, -d1):
            for d3 in (0.0, 0.25, -0.25, 0.5, -0.5, 1.0, -1.0):
                out.append((d1, d2, d3))
    return np.array(out)


def sample_pairs(rng, n, directions=None, mode=SUB, scale=(0.05, 2.0), box=4.0):
    """Random admissible pairs ``x +- s*d`` with ``d`` from a quantized direction set.

    Returns arrays ``(xplus, xminus)`` of shape (m, 3), m <= n (children
    outside the domain are rejected).
    """
    dirs = unweighted_split_directions() if directions is None else np.asarray(directions, float)
    if mode == PM:
        dirs = dirs[np.abs(np.abs(dirs[:, 1]) - np.abs(dirs[:, 0])) == 0]
    x3 = rng.uniform(0, box, n)
    x1 = rng.uniform(-1, 1, n) * x3
    x2 = rng.uniform(-2 * box, box, n)
    d = dirs[rng.integers(0, len(dirs), n)] * rng.uniform(*scale, n)[:, None]
    x = np.stack([x1, x2, x3], axis=1)
    xp, xm = x + d, x - d
    ok = (np.abs(xp[:, 0]) <= xp[:, 2]) & (np.abs(xm[:, 0]) <= xm[:, 2])
    return xp[ok], xm[ok]


def supersolution_verify(candidate, obstacle_fn=obstacle, pairs=None, boundary=None, seed=0,
                         n_pairs=20000, n_boundary=2000, tol=1e-9, max_violations=20) -> Certificate:
    """Check the obstacle condition and sampled midpoint concavity of ``candidate``.

    ``candidate(x1, x2, x3)`` must accept numpy arrays. ``pairs`` is an optional
    ``(xplus, xminus)`` sample; by default :func:`sample_pairs` is used.
    Violations are returned as data.
    """
    rng = np.random.default_rng(seed)
    if boundary is None:
        b1 = rng.uniform(-4, 4, n_boundary)
        b2 = rng.uniform(-4, 4, n_boundary)
        anchors = np.array([[1.0, 0.0], [0.0, 0.0], [-1.0, 2.0], [1.0, -1.0], [0.5, -3.0]])
        boundary = np.concatenate([anchors, np.stack([b1, b2], axis=1)])
    boundary = np.asarray(boundary, float)
    bx1, bx2 = boundary[:, 0], boundary[:, 1]
    bx3 = np.abs(bx1)
    have = np.asarray(candidate(bx1, bx2, bx3), float) * np.ones_like(bx1)
    need = np.asarray(obstacle_fn(bx1, bx2, bx3), float) * np.ones_like(bx1)
    violations = []
    for i in np.flatnonzero(have < need - tol)[:max_violations]:
        violations.append({"kind": "obstacle", "point": [float(bx1[i]), float(bx2[i]), float(bx3[i])],
                           "value": float(have[i]), "required": float(need[i])})
    if pairs is None:
        pairs = sample_pairs(rng, n_pairs)
    xp, xm = pairs
    res = main_inequality_residuals(xp, xm, lambda a, b, c: np.asarray(candidate(a, b, c), float) * np.ones_like(a))
    min_res = float(res.min()) if len(res) else 0.0
    for i in np.flatnonzero(res < -tol)[:max_violations]:
        violations.append({"kind": "main_inequality", "xplus": xp[i].tolist(), "xminus": xm[i].tolist(),
                           "residual": float(res[i])})
    return Certificate(not violations, int(len(res)), int(len(bx1)), min_res, violations)
