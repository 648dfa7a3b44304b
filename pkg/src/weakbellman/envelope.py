"""Finite-depth lower envelopes for the unweighted problem.

Two routes:

* :func:`dp_sub` iterates ``V <- max(V, best split average)`` on the slice
  ``x2 = -1`` of the domain, using 0-homogeneity to bring children back to
  the slice. It is a lower bound for the subordinate class.
* :func:`tree_search_pm` solves an exact dynamic program over a dyadic
  lattice of means for trees with ``eps = +-1`` and returns a replayable
  :class:`TreeWitness` whose measure is a certified lower bound.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .closed_form import b_boundary
from .dyadic import UNIT, HaarExpansion, as_rational, average, format_rational, haar_reconstruct
from .errors import BudgetExceeded, WitnessMismatch
from .grid import SIMPLEX, GridFunction
from .transform import PM, A1Weight, EpsilonAssignment, apply_transform, level_set_measure


@dataclass(frozen=True)
class SplitMove:
    """Children ``x +- (d1, d2, d3)``; admissible when ``|d2| <= |d1|``."""

    d1: float
    d2: float
    d3: float

    def admissible(self) -> bool:
        return abs(self.d2) <= abs(self.d1)


def default_splits():
    out = []
    for d1 in (0.25, 0.5, 1.0, 2.0):
        for d2 in (0.0, d1 / 2, -d1 / 2, d1, -d1):
            for d3 in (0.0, 0.25, -0.25, 0.5, -0.5, 1.0, -1.0):
                out.append(SplitMove(d1, d2, d3))
    return out


def _slice_value(V: GridFunction, x1c, x2c, x3c, x3max):
    """Value of a child point using the slice ``x2 = -1`` and 0-homogeneity.

    Children with ``x2 >= 0`` score 1; children whose renormalized ``x1``
    leaves the grid score 0; ``x3`` beyond the grid is clamped (the Bellman
    function is nondecreasing in ``x3``).
    """
    out = np.ones_like(x1c)
    neg = x2c < 0
    if not neg.any():
        return out
    tau = -1.0 / x2c[neg]
    u = np.abs(x1c[neg]) * tau
    v = np.minimum(x3c[neg] * tau, x3max)
    ok = u <= v
    vals = np.zeros_like(u)
    if ok.any():
        vals[ok] = V.evaluate(np.stack([u[ok], v[ok]], axis=1))
    out[neg] = vals
    return out


def _split_average(V, x1, x3, d1, d2, d3, x3max):
    one = np.ones_like(x1)
    p = (x1 + d1, -one + d2, x3 + d3)
    m = (x1 - d1, -one - d2, x3 - d3)
    inside = (np.abs(p[0]) <= p[2]) & (np.abs(m[0]) <= m[2])
    avg = np.full_like(x1, -np.inf)
    if inside.any():
        vp = _slice_value(V, p[0][inside], p[1][inside], p[2][inside], x3max)
        vm = _slice_value(V, m[0][inside], m[1][inside], m[2][inside], x3max)
        avg[inside] = 0.5 * (vp + vm)
    return avg


def _best_split(V, x1, x3, splits, seeded, x3max):
    best = np.full_like(x1, -np.inf)
    for s in splits:
        best = np.maximum(best, _split_average(V, x1, x3, s.d1, s.d2, s.d3, x3max))
    if seeded:
        # the depth-one move of the explicit three-node construction: d = (x3, x3, x1)
        best = np.maximum(best, _split_average(V, x1, x3, x3, x3, x1, x3max))
    return best


def _chunks(n, parts):
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def dp_sub_iter(grid: int = 129, iters: int = 12, x3max: float = 4.0, splits=None,
                base: str = "boundary", seeded: bool = True, workers: int = 1, method: str = SIMPLEX):
    """Yield ``V_0, V_1, ..., V_iters`` as :class:`GridFunction` on ``(x1, x3)``.

    Only nodes with ``x1 <= x3`` carry values; the rest hold 0. ``base`` is
    ``"boundary"`` (exact boundary values on the diagonal) or ``"obstacle"``
    (zero everywhere; the obstacle enters only through children with
    ``x2 >= 0``).
    """
    splits = default_splits() if splits is None else list(splits)
    if any(not s.admissible() for s in splits):
        raise ValueError("splits need |d2| <= |d1|")
    ax = np.linspace(0.0, x3max, grid)
    X1, X3 = np.meshgrid(ax, ax, indexing="ij")
    active = X1 <= X3
    vals = np.zeros((grid, grid))
    if base == "boundary":
        diag = np.arange(grid)
        vals[diag, diag] = [float(b_boundary(a, -1.0)) for a in ax]
    elif base != "obstacle":
        raise ValueError(f"unknown base {base!r}")
    V = GridFunction((ax, ax), vals, method)
    yield V
    x1, x3 = X1[active], X3[active]
    parts = _chunks(len(x1), max(1, workers))
    for _ in range(iters):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                pieces = list(pool.map(lambda sl: _best_split(V, x1[sl], x3[sl], splits, seeded, x3max), parts))
            best = np.concatenate(pieces)
        else:
            best = _best_split(V, x1, x3, splits, seeded, x3max)
        if np.isnan(best).any():
            raise FloatingPointError("NaN in Bellman iteration")
        new = V.values.copy()
        new[active] = np.maximum(new[active], best)
        V = V.with_values(new)
        yield V


def dp_sub(grid: int = 129, iters: int = 12, x3max: float = 4.0, splits=None, base: str = "boundary",
           seeded: bool = True, workers: int = 1, method: str = SIMPLEX) -> GridFunction:
    V = None
    for V in dp_sub_iter(grid, iters, x3max, splits, base, seeded, workers, method):
        pass
    return V


# --- trees -------------------------------------------------------------------

def leaf(phi, psi) -> dict:
    return {"phi": as_rational(phi), "psi": as_rational(psi)}


def node(c, eps, left=None, right=None) -> dict:
    return {"c": as_rational(c), "eps": int(eps), "left": left, "right": right}


def is_leaf(t) -> bool:
    return t is None or "phi" in t


def fill_leaves(tree, phi, psi):
    """Return a copy of ``tree`` with every leaf (or ``None``) set from the means."""
    phi, psi = as_rational(phi), as_rational(psi)
    if is_leaf(tree):
        return leaf(phi, psi)
    c, e = tree["c"], tree["eps"]
    return node(c, e, fill_leaves(tree["left"], phi - c, psi - e * c),
                fill_leaves(tree["right"], phi + c, psi + e * c))


def tree_depth(tree) -> int:
    if is_leaf(tree):
        return 0
    return 1 + max(tree_depth(tree["left"]), tree_depth(tree["right"]))


def _leaves(tree, k=0):
    """(depth, leaf) pairs, left to right."""
    if is_leaf(tree):
        yield k, tree
        return
    yield from _leaves(tree["left"], k + 1)
    yield from _leaves(tree["right"], k + 1)


def tree_stats(tree):
    """Exact ``(<|phi|>, |{psi >= 0}|)`` of a filled tree."""
    absmean = Fraction(0)
    measure = Fraction(0)
    for k, lf in _leaves(tree):
        wt = Fraction(1, 2 ** k)
        absmean += abs(lf["phi"]) * wt
        if lf["psi"] >= 0:
            measure += wt
    return absmean, measure


def _tree_to_json(t):
    if is_leaf(t):
        return {"phi": format_rational(t["phi"]), "psi": format_rational(t["psi"])}
    return {"c": format_rational(t["c"]), "eps": t["eps"],
            "left": _tree_to_json(t["left"]), "right": _tree_to_json(t["right"])}


def _tree_from_json(d):
    if "phi" in d:
        return leaf(d["phi"], d["psi"])
    return node(d["c"], d["eps"], _tree_from_json(d["left"]), _tree_from_json(d["right"]))


@dataclass
class TreeWitness:
    """Binary tree of Haar increments ``c`` with signs ``eps``; leaves hold constants.

    The right child of a node with means ``(a, b)`` has means
    ``(a + c, b + eps*c)``, the left child ``(a - c, b - eps*c)``.
    """

    tree: dict
    x1: Fraction
    x2: Fraction
    x3: Fraction
    measure: Fraction

    def to_json(self) -> dict:
        return {"x1": format_rational(self.x1), "x2": format_rational(self.x2),
                "x3": format_rational(self.x3), "measure": format_rational(self.measure),
                "tree": _tree_to_json(self.tree)}

    @classmethod
    def from_json(cls, d) -> "TreeWitness":
        return cls(_tree_from_json(d["tree"]), as_rational(d["x1"]), as_rational(d["x2"]),
                   as_rational(d["x3"]), as_rational(d["measure"]))


def three_node_witness(x1, x3) -> TreeWitness:
    """Three-node tree with Bellman point ``(x1, -1, x3)`` and ``w = 1``."""
    x1, x3 = as_rational(x1), as_rational(x3)
    tree = fill_leaves(node(x3, 1, node(x3 - x1, 1), node(x3 + x1, -1)), x1, -1)
    absmean, measure = tree_stats(tree)
    return TreeWitness(tree, x1, Fraction(-1), absmean, measure)


def _collect(tree, J, coeffs, eps, leaves):
    if is_leaf(tree):
        leaves.append((J, tree))
        return
    coeffs[J] = tree["c"]
    eps[J] = tree["eps"]
    _collect(tree["left"], J.left, coeffs, eps, leaves)
    _collect(tree["right"], J.right, coeffs, eps, leaves)


def replay_witness(w: TreeWitness) -> dict:
    """Rebuild ``phi`` and ``psi`` from the witness and compare every claim exactly."""
    coeffs, eps, leaves = {}, {}, []
    _collect(w.tree, UNIT, coeffs, eps, leaves)
    problems = []
    if any(e not in (1, -1) for e in eps.values()):
        problems.append("signs must be +-1")
        eps = {J: (1 if e >= 0 else -1) for J, e in eps.items()}
    depth = max((J.level for J, _ in leaves), default=0)
    phi_e = HaarExpansion(w.x1, coeffs, depth)
    phi = haar_reconstruct(phi_e)
    psi = apply_transform(phi_e, EpsilonAssignment(eps, PM), w.x2)
    for J, lf in leaves:
        cells = J.cells(depth)
        if any(phi.values[i] != lf["phi"] or psi.values[i] != lf["psi"] for i in cells):
            problems.append(f"leaf at {J} disagrees with the reconstruction")
    point = (average(phi), average(psi), average(abs(phi)))
    measure = level_set_measure(psi, 0, A1Weight.constant(1))
    claimed = (w.x1, w.x2, w.x3)
    if point != claimed:
        problems.append(f"Bellman point {tuple(map(format_rational, point))} != claimed "
                        f"{tuple(map(format_rational, claimed))}")
    if measure != w.measure:
        problems.append(f"measure {format_rational(measure)} != claimed {format_rational(w.measure)}")
    report = {"ok": not problems, "point": [format_rational(v) for v in point] + ["1/1", "1/1"],
              "measure": format_rational(measure), "depth": depth, "problems": problems}
    if problems:
        raise WitnessMismatch("; ".join(problems), report)
    return report


# --- exact lattice search for the PM class -----------------------------------

DEFAULT_QUANT = ("0", "1/2", "1", "2")


@dataclass
class _Lattice:
    a: np.ndarray       # x1 values
    b: np.ndarray       # negative x2 values, b[j] = -1 + g*(j - j0)
    u: np.ndarray       # budgets for <|phi|>
    g: Fraction
    h: Fraction
    x1: Fraction
    x2_floor: float

    def b_index(self, bval):
        return np.rint((bval - self.b[0]) / float(self.g)).astype(np.int64)


def _moves(quant, n_u):
    mags = sorted({abs(as_rational(q)) for q in quant})
    out = []
    for c in mags:
        for e in ((1,) if c == 0 else (1, -1)):
            for t in sorted(range(-(n_u - 1), n_u), key=lambda t: (abs(t), -t)):
                out.append((c, e, t))
    return out


def tree_search_pm(x1=0, x3="1/2", depth: int = 8, quant=DEFAULT_QUANT, x3_step="1/4",
                   cap=8, x2_floor=8, max_work: float = 5e8):
    """Best PM tree of depth at most ``depth`` with root ``(x1, -1, x3)``.

    ``W_r(a, b, u)`` is the largest ``|{psi >= 0}|`` over trees of depth at
    most ``r`` with means ``(a, b)`` and ``<|phi|> <= u``; it is computed
    exactly (all values are dyadic, so floats are exact) on the lattice
    generated by the increments in ``quant``. Nodes whose ``x2`` mean drops
    below ``-x2_floor`` become leaves and budgets above ``cap`` are clamped,
    so the result is a lower bound. The optimal tree is padded on a
    ``psi < 0`` leaf until ``<|phi|> = x3`` exactly; padding may add one
    level.

    Returns ``(bound, witness)`` with ``bound == witness.measure``.
    """
    if depth > 10:
        raise ValueError("depth is limited to 10")
    x1, x3 = as_rational(x1), as_rational(x3)
    if abs(x1) > x3:
        raise ValueError("need |x1| <= x3")
    mags = [abs(as_rational(q)) for q in quant if as_rational(q) != 0]
    if not mags:
        raise ValueError("quantization needs a nonzero increment")
    g = Fraction(math.gcd(*[m.numerator for m in mags]), math.lcm(*[m.denominator for m in mags]))
    h = as_rational(x3_step)
    cap = as_rational(cap)
    ka = range(math.ceil((-cap - x1) / g), math.floor((cap - x1) / g) + 1)
    a = np.array([float(x1 + g * k) for k in ka])
    b = np.array([float(-1 + g * k) for k in range(math.ceil((-x2_floor + 1) / g), math.ceil(1 / g))])
    b = b[b < 0]
    n_u = int(cap / h) + 1
    u = np.array([float(h * j) for j in range(n_u)])
    lat = _Lattice(a, b, u, g, h, x1, float(x2_floor))
    moves = _moves(quant, n_u)
    work_per_level = len(a) * len(b) * n_u * len(moves)

    A, Bv, U = np.meshgrid(a, b, u, indexing="ij")
    IA, IB, IU = np.meshgrid(np.arange(len(a)), np.arange(len(b)), np.arange(n_u), indexing="ij")
    leaf_val = np.where(np.abs(A) <= U, 0.0, -np.inf)

    root_u = min(int(x3 / h), n_u - 1)
    root = (int(np.argmin(np.abs(a - float(x1)))), int(np.argmin(np.abs(b + 1.0))), root_u)

    def child(W, c, e, t, sign):
        shift = int(c / g)
        ia = IA + sign * shift
        bc = Bv + sign * e * float(c)
        iu = IU + sign * t
        ok = (ia >= 0) & (ia < len(a)) & (iu >= 0)
        iu = np.minimum(iu, n_u - 1)
        iac = np.clip(ia, 0, len(a) - 1)
        ac = a[iac]
        uc = u[np.clip(iu, 0, n_u - 1)]
        affordable = np.abs(ac) <= uc
        term = bc >= 0
        below = bc < -x2_floor
        ib = np.clip(lat.b_index(bc), 0, len(b) - 1)
        inner = W[iac, ib, np.clip(iu, 0, n_u - 1)]
        val = np.where(term, np.where(affordable, 1.0, -np.inf),
                       np.where(below, np.where(affordable, 0.0, -np.inf), inner))
        return np.where(ok, val, -np.inf)

    tables = [leaf_val]
    for r in range(1, depth + 1):
        if work_per_level * r > max_work:
            raise BudgetExceeded(f"work budget {max_work:g} exceeded at depth {r}",
                                 best=float(tables[-1][root]))
        W = tables[-1]
        new = leaf_val.copy()
        for c, e, t in moves:
            v = 0.5 * (child(W, c, e, t, 1) + child(W, c, e, t, -1))
            np.maximum(new, v, out=new)
        tables.append(np.maximum(new, W))

    def build(r, ia, ib, iu):
        target = tables[r][ia, ib, iu]
        while r > 0 and tables[r - 1][ia, ib, iu] == target:
            r -= 1
        av, bv = x1 + g * (ka.start + ia), Fraction(-1) + g * (round((b[ib] + 1) / float(g)))
        if r == 0:
            return leaf(av, bv)
        W = tables[r - 1]
        for c, e, t in moves:
            vals = []
            kids = []
            for sign in (1, -1):
                ja, ju = ia + sign * int(c / g), iu + sign * t
                if not (0 <= ja < len(a) and ju >= 0):
                    break
                ju = min(ju, n_u - 1)
                ac, bc = av + sign * c, bv + sign * e * c
                if bc >= 0 or bc < -x2_floor:
                    if abs(ac) > h * ju:
                        break
                    vals.append(1.0 if bc >= 0 else 0.0)
                    kids.append(leaf(ac, bc))
                else:
                    jb = int(lat.b_index(np.array([float(bc)]))[0])
                    vals.append(W[ja, jb, ju])
                    kids.append((ja, jb, ju))
            if len(vals) == 2 and 0.5 * (vals[0] + vals[1]) == target:
                right, left = (k if isinstance(k, dict) else build(r - 1, *k) for k in kids)
                return node(c, e, left, right)
        raise RuntimeError("backtracking failed to reproduce the table value")

    tree = build(depth, *root)
    tree = fill_leaves(tree, x1, -1)
    absmean, _ = tree_stats(tree)
    tree = _pad(tree, x3 - absmean)
    absmean, measure = tree_stats(tree)
    witness = TreeWitness(tree, x1, Fraction(-1), absmean, measure)
    return float(measure), witness


def _pad(tree, delta):
    """Raise ``<|phi|>`` by ``delta`` by splitting the shallowest ``psi < 0`` leaf."""
    if delta == 0:
        return tree
    if delta < 0:
        raise ValueError("tree already exceeds the target <|phi|>")
    best = None
    for path, k, lf in _leaf_paths(tree):
        if lf["psi"] < 0 and (best is None or k < best[1]):
            best = (path, k, lf)
    path, k, lf = best
    c = abs(lf["phi"]) + delta * 2 ** k
    repl = fill_leaves(node(c, 1), lf["phi"], lf["psi"])
    return _replace(tree, path, repl)


def _leaf_paths(tree, path=()):
    if is_leaf(tree):
        yield path, len(path), tree
        return
    yield from _leaf_paths(tree["left"], path + ("left",))
    yield from _leaf_paths(tree["right"], path + ("right",))


def _replace(tree, path, repl):
    if not path:
        return repl
    out = dict(tree)
    out[path[0]] = _replace(tree[path[0]], path[1:], repl)
    return out
