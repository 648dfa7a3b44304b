"""Martingale transforms, A1 weights and exact weighted level sets."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .dyadic import (
    UNIT,
    DyadicInterval,
    HaarExpansion,
    StepFunction,
    as_rational,
    average,
    common_depth,
    format_rational,
    haar_reconstruct,
    intervals,
)
from .errors import DomainError, MissingEpsilonError, NonPositiveWeightError, WitnessMismatch

PM = "PM"
SUB = "SUB"


@dataclass(frozen=True, eq=False)
class EpsilonAssignment:
    entries: Mapping[DyadicInterval, object] = field(default_factory=dict)
    mode: str = SUB

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))
        if self.mode not in (PM, SUB):
            raise ValueError(f"unknown mode {self.mode!r}")
        for J, e in self.entries.items():
            if self.mode == PM and e not in (1, -1):
                raise ValueError(f"PM assignment needs eps = +-1, got {e} at {J}")
            if self.mode == SUB and not -1 <= e <= 1:
                raise ValueError(f"SUB assignment needs |eps| <= 1, got {e} at {J}")

    @classmethod
    def constant(cls, value, max_level: int, mode: str = PM) -> "EpsilonAssignment":
        return cls({J: value for J in intervals(max_level)}, mode)

    def get(self, J: DyadicInterval, needed: bool = False):
        if J in self.entries:
            return self.entries[J]
        if self.mode == PM and needed:
            raise MissingEpsilonError(f"no epsilon for {J} in PM mode")
        return 0

    def to_json(self) -> list:
        return [[J.level, J.position, format_rational(e)] for J, e in sorted(self.entries.items())]

    @classmethod
    def from_json(cls, data, mode: str = SUB) -> "EpsilonAssignment":
        return cls({DyadicInterval(int(k), int(m)): as_rational(v) for k, m, v in data}, mode)


@dataclass(frozen=True)
class A1Weight:
    w: StepFunction

    def __post_init__(self):
        if any(v <= 0 for v in self.w.values):
            raise NonPositiveWeightError("weights must be strictly positive")

    @classmethod
    def constant(cls, c=1, depth: int = 0) -> "A1Weight":
        return cls(StepFunction.constant(as_rational(c), depth))


@dataclass(frozen=True)
class BellmanPoint5:
    x1: object
    x2: object
    x3: object
    x4: object
    x5: object

    def as_tuple(self):
        return (self.x1, self.x2, self.x3, self.x4, self.x5)

    def in_omega(self, Q) -> bool:
        return self.x3 >= abs(self.x1) * self.x5 and 0 < self.x5 <= self.x4 <= Q * self.x5


def apply_transform(phi: HaarExpansion, eps: EpsilonAssignment, start) -> StepFunction:
    """``start + sum_J eps_J c_J H_J`` at the depth of ``phi``."""
    coeffs = {J: eps.get(J, needed=(c != 0)) * c for J, c in phi.coeffs.items()}
    return haar_reconstruct(HaarExpansion(start, coeffs, phi.depth))


def subordination_audit(phi: HaarExpansion, eps: EpsilonAssignment) -> bool:
    return all(abs(eps.get(J) * c) <= abs(c) for J, c in phi.coeffs.items())


def characteristic(w: A1Weight):
    """Dyadic A1 characteristic: max over J of <w>_J / min_J w."""
    f = w.w
    best = None
    for J in intervals(f.depth + 1):
        cells = J.cells(f.depth)
        ratio = average(f, J) / min(f.values[i] for i in cells)
        if best is None or ratio > best:
            best = ratio
    return best


def level_set_measure(psi: StepFunction, lam, w: A1Weight):
    """``w({psi >= lam})`` on the unit interval; closed inequality."""
    psi, ww = common_depth(psi, w.w)
    n = len(psi.values)
    total = sum((wv for pv, wv in zip(psi.values, ww.values) if pv >= lam), Fraction(0))
    return total / n


def bellman_point(phi: StepFunction, psi: StepFunction, w: A1Weight) -> BellmanPoint5:
    phi, psi, ww = common_depth(phi, psi, w.w)
    return BellmanPoint5(average(phi), average(psi), average(abs(phi) * ww), average(ww), ww.minimum())


def weak_type_ratio(phi: HaarExpansion, eps: EpsilonAssignment, start, w: A1Weight, lam):
    """``lam * w({T_eps phi >= lam}) / <|phi| w>``; ``start`` cancels out of the set."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    f = haar_reconstruct(phi)
    f, ww = common_depth(f, w.w)
    denom = average(abs(f) * ww)
    if denom == 0:
        raise ZeroDivisionError("<|phi| w> vanishes")
    psi = apply_transform(phi, eps, start)
    return lam * level_set_measure(psi - start, lam, w) / denom


@dataclass(frozen=True)
class Triple:
    phi: StepFunction
    psi: StepFunction
    w: A1Weight
    phi_expansion: HaarExpansion
    eps: EpsilonAssignment


def three_node_triple(x1, x3, x4) -> Triple:
    """Depth-2 test triple with Bellman point ``(x1, -1, x3, x4, 1)``.

    ``w`` is ``2*x4 - 1`` on the middle half; ``psi`` takes the value
    ``2*x3 + x1 - 1`` on ``[1/2, 3/4)``, where the weight is heavy.
    """
    x1, x3, x4 = as_rational(x1), as_rational(x3), as_rational(x4)
    if x3 < abs(x1):
        raise DomainError(f"need x3 >= |x1|, got x1={x1}, x3={x3}")
    if x4 < 1:
        raise DomainError(f"need x4 >= 1, got {x4}")
    L, R = UNIT.left, UNIT.right
    expansion = HaarExpansion(x1, {UNIT: x3, L: x3 - x1, R: x3 + x1}, 2)
    eps = EpsilonAssignment({UNIT: 1, L: 1, R: -1}, PM)
    phi = haar_reconstruct(expansion)
    psi = apply_transform(expansion, eps, Fraction(-1))
    heavy = 2 * x4 - 1
    w = A1Weight(StepFunction(2, (Fraction(1), heavy, heavy, Fraction(1))))
    return Triple(phi, psi, w, expansion, eps)


@dataclass(frozen=True)
class TransformWitness:
    """A test configuration plus optional claimed values to be re-derived exactly."""

    phi: HaarExpansion
    eps: EpsilonAssignment
    start: Fraction
    weight: A1Weight
    lam: Fraction
    claims: Mapping = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"phi": self.phi.to_json(), "eps": self.eps.to_json(), "mode": self.eps.mode,
               "start": format_rational(self.start), "weight": self.weight.w.to_json(),
               "lambda": format_rational(self.lam)}
        if self.claims:
            out["claims"] = dict(self.claims)
        return out

    @classmethod
    def from_json(cls, data) -> "TransformWitness":
        mode = data.get("mode", PM)
        return cls(HaarExpansion.from_json(data["phi"]), EpsilonAssignment.from_json(data["eps"], mode),
                   as_rational(data["start"]), A1Weight(StepFunction.from_json(data["weight"])),
                   as_rational(data["lambda"]), dict(data.get("claims", {})))


def three_node_transform_witness(x1, x3, x4) -> TransformWitness:
    """The three-node triple as a witness with ``lambda = 1`` and ``start = -1``."""
    t = three_node_triple(x1, x3, x4)
    ratio = weak_type_ratio(t.phi_expansion, t.eps, -1, t.w, 1)
    point = bellman_point(t.phi, t.psi, t.w)
    claims = {"ratio": format_rational(ratio), "point": [format_rational(v) for v in point.as_tuple()],
              "measure": format_rational(level_set_measure(t.psi, 0, t.w))}
    return TransformWitness(t.phi_expansion, t.eps, Fraction(-1), t.w, Fraction(1), claims)


def replay_transform_witness(wit: TransformWitness) -> dict:
    """Recompute the point, ``w({psi >= 0})``, ``[w]_A1`` and the ratio; compare with any claims."""
    psi = apply_transform(wit.phi, wit.eps, wit.start)
    phi = haar_reconstruct(wit.phi)
    point = bellman_point(phi, psi, wit.weight)
    values = {
        "point": [format_rational(v) for v in point.as_tuple()],
        "measure": format_rational(level_set_measure(psi - wit.start, wit.lam, wit.weight)),
        "characteristic": format_rational(characteristic(wit.weight)),
        "ratio": format_rational(weak_type_ratio(wit.phi, wit.eps, wit.start, wit.weight, wit.lam)),
        "subordinate": subordination_audit(wit.phi, wit.eps),
    }
    problems = []
    for key, claimed in wit.claims.items():
        if key not in values:
            problems.append(f"unknown claim {key!r}")
            continue
        have = values[key]
        if key == "point":
            same = len(claimed) == 5 and all(as_rational(a) == as_rational(b) for a, b in zip(claimed, have))
        elif key == "subordinate":
            same = bool(claimed) == have
        else:
            same = as_rational(claimed) == as_rational(have)
        if not same:
            problems.append(f"{key}: recomputed {have} != claimed {claimed}")
    report = {"ok": not problems, **values, "problems": problems}
    if problems:
        raise WitnessMismatch("; ".join(problems), report)
    return report


def weak_type_bruteforce(depth: int = 3, coeffs=None, lambdas=None, means=None, chunk: int = 512):
    """Exhaustive check of ``lam |{T_eps phi >= lam}| <= 2 <|phi|>`` over PM transforms.

    ``phi`` ranges over ``mean + sum_J c_J H_J`` with every ``c_J`` (levels
    below ``depth``) and the mean drawn from ``coeffs``/``means``; ``eps``
    ranges over all of ``{-1, +1}`` per interval. Since ``T_eps phi`` only
    sees ``eps_J c_J``, the set of transforms of ``phi`` is every sign flip of
    ``|c|``, so the search is organised by ``u = |c|``: the worst case for a
    given ``u`` pairs the largest level set over sign flips with the smallest
    ``<|phi|>`` over sign flips. All arithmetic is in scaled integers.

    ``coeffs`` must be closed under negation for that reduction to be exact.

    Returns a dict with the number of violating ``(|c|, mean, lambda)``
    classes, the number of (phi, eps, lambda) cases covered and the worst
    ratio ``lam |{...}| / <|phi|>`` (a Fraction).
    """
    coeffs = [Fraction(c) for c in (coeffs if coeffs is not None else (0, "1/2", "-1/2", 1, -1, 2, -2))]
    if {-c for c in coeffs} != set(coeffs):
        raise ValueError("coefficient set must be symmetric under negation")
    lambdas = [Fraction(l) for l in (lambdas if lambdas is not None else ("1/2", 1, 2))]
    means = [Fraction(m) for m in (means if means is not None else coeffs)]
    D = int(np.lcm.reduce([q.denominator for q in coeffs + lambdas + means]))
    cells = 2 ** depth
    ivs = list(intervals(depth))
    n = len(ivs)
    H = np.zeros((n, cells), dtype=np.int64)
    for k, J in enumerate(ivs):
        H[k, list(J.right.cells(depth))] = 1
        H[k, list(J.left.cells(depth))] = -1
    mags = sorted({abs(c) for c in coeffs})
    mag_int = np.array([int(m * D) for m in mags], dtype=np.int64)
    signs = np.array(list(itertools.product((1, -1), repeat=n)), dtype=np.int64)  # (S, n)
    lam_int = [int(l * D) for l in lambdas]
    mean_int = np.array([int(m * D) for m in means], dtype=np.int64)

    violations = 0
    worst = Fraction(0)
    worst_case = None
    all_u = np.array(list(itertools.product(range(len(mags)), repeat=n)), dtype=np.int64)
    for s in range(0, len(all_u), chunk):
        u = mag_int[all_u[s:s + chunk]]                        # (B, n)
        vals = np.einsum("bn,sn,nc->bsc", u, signs, H)         # (B, S, cells)
        # <|phi|> numerator, minimised over sign flips, per mean
        absum = np.abs(vals[:, :, :, None] + mean_int[None, None, None, :]).sum(axis=2)  # (B, S, M)
        min_abs = absum.min(axis=1)                             # (B, M)
        for lam, li in zip(lambdas, lam_int):
            count = (vals >= li).sum(axis=2).max(axis=1)       # (B,)
            lhs = li * count                                    # lam*D*count
            rhs = 2 * min_abs                                   # 2 * D * cells * <|phi|>
            bad = lhs[:, None] > rhs
            violations += int(bad.sum())
            pos = min_abs > 0
            if pos.any():
                ratio = np.where(pos, (lhs[:, None]).astype(float) / np.where(pos, min_abs, 1), -1.0)
                b, m = np.unravel_index(np.argmax(ratio), ratio.shape)
                cand = Fraction(int(lhs[b]), int(min_abs[b, m]))
                if cand > worst:
                    worst = cand
                    worst_case = {"u": [mags[i] for i in all_u[s + b]], "mean": means[m], "lambda": lam}
    cases = len(means) * len(coeffs) ** n * 2 ** n * len(lambdas)
    return {"violations": violations, "cases": cases, "worst_ratio": worst, "worst_case": worst_case}
