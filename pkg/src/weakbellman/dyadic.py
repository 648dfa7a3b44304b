"""Dyadic step functions on [0, 1) and their Haar expansions.

Conventions
-----------
* ``J+`` is the RIGHT half of ``J``; ``h_J`` and ``H_J`` are positive there.
* Haar coefficients are stored L^inf-normalized: ``c_J = (phi, H_J) / |J|``,
  i.e. half the jump between the child averages. The L^2-normalized value
  ``a_J = (phi, h_J) = c_J * |J|**0.5`` is available from
  :meth:`HaarExpansion.h_coefficient`; it is irrational on odd levels, which
  is why it is not the stored form.
* Values are exact :class:`fractions.Fraction` by default. Floats are accepted
  everywhere (``exact=False``) for large grid work.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

from .errors import LevelTooDeepError


def as_rational(v) -> Fraction:
    """Coerce ints, Fractions, "p/q" strings and floats to a Fraction."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, float):
        return Fraction(v)
    return Fraction(v)


def format_rational(q) -> str:
    q = as_rational(q)
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """[position / 2**level, (position + 1) / 2**level)."""

    level: int
    position: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"negative level {self.level}")
        if not 0 <= self.position < 2 ** self.level:
            raise ValueError(f"position {self.position} out of range at level {self.level}")

    @property
    def length(self) -> Fraction:
        return Fraction(1, 2 ** self.level)

    @property
    def left(self) -> "DyadicInterval":
        return DyadicInterval(self.level + 1, 2 * self.position)

    @property
    def right(self) -> "DyadicInterval":
        return DyadicInterval(self.level + 1, 2 * self.position + 1)

    def children(self):
        return self.left, self.right

    @property
    def parent(self) -> "DyadicInterval":
        if self.level == 0:
            raise ValueError("[0,1) has no parent")
        return DyadicInterval(self.level - 1, self.position // 2)

    def cells(self, depth: int) -> range:
        """Indices of the depth-``depth`` cells covering this interval."""
        if self.level > depth:
            raise LevelTooDeepError(f"level {self.level} deeper than depth {depth}")
        span = 2 ** (depth - self.level)
        return range(self.position * span, (self.position + 1) * span)

    def __str__(self):
        n = 2 ** self.level
        return f"[{self.position}/{n},{self.position + 1}/{n})"


UNIT = DyadicInterval(0, 0)


def intervals(max_level: int) -> Iterator[DyadicInterval]:
    """All dyadic intervals with level < max_level, coarse to fine."""
    for k in range(max_level):
        for m in range(2 ** k):
            yield DyadicInterval(k, m)


@dataclass(frozen=True)
class StepFunction:
    depth: int
    values: tuple

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) != 2 ** self.depth:
            raise ValueError(f"expected {2 ** self.depth} values, got {len(self.values)}")

    @classmethod
    def from_values(cls, values: Sequence, exact: bool = True) -> "StepFunction":
        n = len(values)
        depth = n.bit_length() - 1
        if n == 0 or 2 ** depth != n:
            raise ValueError(f"number of values must be a power of two, got {n}")
        vals = [as_rational(v) for v in values] if exact else [float(v) for v in values]
        return cls(depth, tuple(vals))

    @classmethod
    def constant(cls, c, depth: int = 0) -> "StepFunction":
        return cls(depth, (c,) * 2 ** depth)

    @classmethod
    def indicator(cls, J: DyadicInterval, depth: int | None = None) -> "StepFunction":
        depth = J.level if depth is None else depth
        cells = J.cells(depth)
        return cls(depth, tuple(Fraction(1) if i in cells else Fraction(0) for i in range(2 ** depth)))

    def refine(self, depth: int) -> "StepFunction":
        if depth < self.depth:
            raise ValueError("cannot refine to a coarser depth")
        r = 2 ** (depth - self.depth)
        return StepFunction(depth, tuple(v for v in self.values for _ in range(r)))

    def map(self, fn) -> "StepFunction":
        return StepFunction(self.depth, tuple(fn(v) for v in self.values))

    def __abs__(self):
        return self.map(abs)

    def _binary(self, other, op):
        if not isinstance(other, StepFunction):
            return self.map(lambda v: op(v, other))
        a, b = common_depth(self, other)
        return StepFunction(a.depth, tuple(op(x, y) for x, y in zip(a.values, b.values)))

    def __add__(self, other):
        return self._binary(other, lambda x, y: x + y)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda x, y: x - y)

    def __mul__(self, other):
        return self._binary(other, lambda x, y: x * y)

    __rmul__ = __mul__

    def __neg__(self):
        return self.map(lambda v: -v)

    def integral(self):
        return sum(self.values, Fraction(0)) / len(self.values) if self._exact() else sum(self.values) / len(self.values)

    def _exact(self) -> bool:
        return all(isinstance(v, (int, Fraction)) for v in self.values)

    def minimum(self):
        return min(self.values)

    def to_json(self) -> dict:
        return {"depth": self.depth, "values": [format_rational(v) for v in self.values]}

    @classmethod
    def from_json(cls, data: Mapping) -> "StepFunction":
        return cls(int(data["depth"]), tuple(as_rational(v) for v in data["values"]))


def common_depth(*fs: StepFunction):
    d = max(f.depth for f in fs)
    return tuple(f.refine(d) for f in fs)


def average(f: StepFunction, J: DyadicInterval = UNIT):
    if J.level > f.depth:
        raise LevelTooDeepError(f"interval {J} is finer than the depth-{f.depth} step function")
    cells = J.cells(f.depth)
    vals = [f.values[i] for i in cells]
    total = sum(vals, Fraction(0)) if f._exact() else sum(vals)
    return total / len(vals)


def _half_jump(f: StepFunction, J: DyadicInterval):
    if J.level + 1 > f.depth:
        raise LevelTooDeepError(f"interval {J} has no children at depth {f.depth}")
    return (average(f, J.right) - average(f, J.left)) / 2


def haar_H(J: DyadicInterval, depth: int) -> StepFunction:
    """L^inf-normalized Haar function: +1 on the right half, -1 on the left half."""
    if J.level + 1 > depth:
        raise LevelTooDeepError(f"H_J for {J} needs depth > {J.level}")
    vals = [Fraction(0)] * 2 ** depth
    for i in J.right.cells(depth):
        vals[i] = Fraction(1)
    for i in J.left.cells(depth):
        vals[i] = Fraction(-1)
    return StepFunction(depth, tuple(vals))


def martingale_difference(f: StepFunction, J: DyadicInterval) -> StepFunction:
    c = _half_jump(f, J)
    zero = c - c
    vals = [zero] * 2 ** f.depth
    for i in J.right.cells(f.depth):
        vals[i] = c
    for i in J.left.cells(f.depth):
        vals[i] = -c
    return StepFunction(f.depth, tuple(vals))


@dataclass(frozen=True, eq=False)
class HaarExpansion:
    """Mean plus L^inf-normalized Haar coefficients ``c_J``.

    ``depth`` is the depth of the step function the expansion reconstructs to;
    it is at least one more than the deepest level carrying a coefficient.
    """

    mean: object
    coeffs: Mapping[DyadicInterval, object] = field(default_factory=dict)
    depth: int = 0

    def __post_init__(self):
        coeffs = dict(self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        need = max((J.level + 1 for J in coeffs), default=0)
        if self.depth < need:
            object.__setattr__(self, "depth", need)

    def coefficient(self, J: DyadicInterval):
        return self.coeffs.get(J, 0)

    def h_coefficient(self, J: DyadicInterval):
        """``(phi, h_J)``; exact when the level is even, float otherwise."""
        c = self.coefficient(J)
        if J.level % 2 == 0:
            return Fraction(c) / 2 ** (J.level // 2)
        return float(c) / math.sqrt(2.0 ** J.level)

    def nonzero(self):
        return {J: c for J, c in self.coeffs.items() if c != 0}

    def __eq__(self, other):
        if not isinstance(other, HaarExpansion):
            return NotImplemented
        return (self.mean == other.mean and self.depth == other.depth
                and self.nonzero() == other.nonzero())

    def to_json(self) -> dict:
        return {
            "mean": format_rational(self.mean),
            "depth": self.depth,
            "coeffs": [[J.level, J.position, format_rational(c)]
                       for J, c in sorted(self.coeffs.items())],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "HaarExpansion":
        coeffs = {DyadicInterval(int(k), int(m)): as_rational(v) for k, m, v in data["coeffs"]}
        return cls(as_rational(data["mean"]), coeffs, int(data.get("depth", 0)))


def haar_decompose(f: StepFunction) -> HaarExpansion:
    coeffs = {J: _half_jump(f, J) for J in intervals(f.depth)}
    return HaarExpansion(average(f), coeffs, f.depth)


def haar_reconstruct(e: HaarExpansion) -> StepFunction:
    depth = e.depth
    vals = [e.mean] * 2 ** depth
    for J, c in e.coeffs.items():
        if c == 0:
            continue
        for i in J.right.cells(depth):
            vals[i] = vals[i] + c
        for i in J.left.cells(depth):
            vals[i] = vals[i] - c
    return StepFunction(depth, tuple(vals))


def parseval_terms(e: HaarExpansion):
    """``mean**2 + sum_J a_J**2`` computed exactly as ``sum_J c_J**2 |J|``."""
    return e.mean ** 2 + sum((c * c * J.length for J, c in e.coeffs.items()), Fraction(0))
