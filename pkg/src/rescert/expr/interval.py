"""Closed intervals, boxes and vectorised interval arithmetic.

:class:`Interval` and :class:`Box` are the small public value types.  The
evaluators work on :class:`IArray`, an interval per array element, so a whole
batch of boxes is enclosed with one pass over an expression tree.

Every operation rounds outward so enclosures survive round-to-nearest
arithmetic.  Sums and products detect exact results with error-free
transformations and only move an endpoint when rounding actually happened
(so ``x - x`` at a point stays exactly zero); library transcendentals are
widened by a few ulps unconditionally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import EvaluationDomainError

UNIT_ROUNDOFF = 2.0**-53
# Relative error budget granted to libm transcendentals (tanh, exp, sin, ...).
TRANSCENDENTAL_ULPS = 4
_TWO_PI = 2.0 * math.pi


def down(x):
    return np.nextafter(x, -np.inf)


def up(x):
    return np.nextafter(x, np.inf)


_SPLITTER = 134217729.0  # 2^27 + 1
_DEKKER_SAFE = 1e290
_DEKKER_TINY = 1e-290


def _sum_err(a, b, s):
    """Exact ``a + b - s`` for ``s = fl(a + b)`` (Knuth's TwoSum)."""
    bb = s - a
    return (a - (s - bb)) + (b - bb)


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _prod_err(a, b, p):
    """Exact ``a * b - p`` for ``p = fl(a * b)`` (Dekker's TwoProduct); NaN when
    the magnitudes are outside the range where it is exact."""
    ah, al = _split(a)
    bh, bl = _split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    ap = np.abs(p)
    risky = (np.abs(a) > _DEKKER_SAFE) | (np.abs(b) > _DEKKER_SAFE) | ((ap < _DEKKER_TINY) & (p != 0))
    risky |= (p == 0) & (a != 0) & (b != 0)  # underflow to zero
    return np.where(risky, np.nan, err)


def round_down(s, err):
    """``s`` if the exact value ``s + err`` is at least ``s``, else one ulp down."""
    return np.where(err >= 0, s, down(s))


def round_up(s, err):
    return np.where(err <= 0, s, up(s))


def add_down(a, b):
    s = a + b
    return round_down(s, _sum_err(a, b, s))


def add_up(a, b):
    s = a + b
    return round_up(s, _sum_err(a, b, s))


def mul_down(a, b):
    p = a * b
    return round_down(p, _prod_err(a, b, p))


def mul_up(a, b):
    p = a * b
    return round_up(p, _prod_err(a, b, p))


def widen_rel(lo, hi, rel: float):
    """Widen by ``rel`` times the endpoint magnitude, then one more ulp."""
    return down(lo - np.abs(lo) * rel), up(hi + np.abs(hi) * rel)


def widen_abs(lo, hi, eps):
    return down(lo - eps), up(hi + eps)


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]`` with finite endpoints."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise EvaluationDomainError(f"non-finite interval [{lo}, {hi}]")
        if lo > hi:
            raise ValueError(f"empty interval: lo={lo} > hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def mag(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def __contains__(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        return self.lo <= x <= self.hi

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def intersect(self, other: "Interval") -> "Interval | None":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else None

    def __repr__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by lower and upper corner."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("box corners must be non-empty and of equal length")
        for k, (a, b) in enumerate(zip(lo, hi)):
            if not (math.isfinite(a) and math.isfinite(b)) or a > b:
                raise ValueError(f"invalid extent [{a}, {b}] in dimension {k}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_intervals(cls, ivs: Iterable[Interval]) -> "Box":
        ivs = list(ivs)
        return cls(tuple(iv.lo for iv in ivs), tuple(iv.hi for iv in ivs))

    @classmethod
    def cube(cls, radius: float, n: int) -> "Box":
        return cls((-radius,) * n, (radius,) * n)

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def intervals(self) -> list[Interval]:
        return [Interval(a, b) for a, b in zip(self.lo, self.hi)]

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def mid(self) -> tuple[float, ...]:
        return tuple(0.5 * (a + b) for a, b in zip(self.lo, self.hi))

    def contains_point(self, x: Sequence[float]) -> bool:
        return all(a <= v <= b for a, v, b in zip(self.lo, x, self.hi))

    def contains_box(self, other: "Box") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def intersect(self, other: "Box") -> "Box | None":
        lo = tuple(max(a, c) for a, c in zip(self.lo, other.lo))
        hi = tuple(min(b, d) for b, d in zip(self.hi, other.hi))
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return Box(lo, hi)

    def split(self, dim: int) -> tuple["Box", "Box"]:
        m = 0.5 * (self.lo[dim] + self.hi[dim])
        left_hi = list(self.hi)
        left_hi[dim] = m
        right_lo = list(self.lo)
        right_lo[dim] = m
        return Box(self.lo, tuple(left_hi)), Box(tuple(right_lo), self.hi)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        lo, hi = np.array(self.lo), np.array(self.hi)
        return lo + (hi - lo) * rng.random((count, self.n))

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([self.lo]), np.array([self.hi])


class IArray:
    """Elementwise intervals over numpy arrays of a common shape."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = np.asarray(lo, dtype=float)
        hi = lo if hi is None else np.asarray(hi, dtype=float)
        if lo.shape != hi.shape:
            lo, hi = np.broadcast_arrays(lo, hi)
        self.lo = lo
        self.hi = hi

    @property
    def shape(self):
        return self.lo.shape

    @property
    def mag(self) -> np.ndarray:
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    @property
    def mig(self) -> np.ndarray:
        """Smallest magnitude over each interval."""
        return np.where((self.lo <= 0) & (self.hi >= 0), 0.0,
                        np.minimum(np.abs(self.lo), np.abs(self.hi)))

    def __getitem__(self, idx) -> "IArray":
        return IArray(self.lo[idx], self.hi[idx])

    def __add__(self, other):
        return iadd(self, _as_iarray(other))

    __radd__ = __add__

    def __sub__(self, other):
        return isub(self, _as_iarray(other))

    def __rsub__(self, other):
        return isub(_as_iarray(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return iscale(self, float(other))
        return imul(self, _as_iarray(other))

    __rmul__ = __mul__

    def __neg__(self):
        return IArray(-self.hi, -self.lo)

    def __repr__(self) -> str:
        return f"IArray(lo={self.lo!r}, hi={self.hi!r})"

    def to_interval(self) -> Interval:
        if self.lo.size != 1:
            raise ValueError("to_interval needs a single element")
        return Interval(float(self.lo.reshape(-1)[0]), float(self.hi.reshape(-1)[0]))


def _as_iarray(x) -> IArray:
    if isinstance(x, IArray):
        return x
    return IArray(np.asarray(x, dtype=float))


def hull(a: IArray, b: IArray) -> IArray:
    return IArray(np.minimum(a.lo, b.lo), np.maximum(a.hi, b.hi))


def intersect(a: IArray, b: IArray) -> IArray:
    """Intersection of two enclosures of the same quantity.

    Both operands are sound, so the true value lies in the intersection; if
    rounding makes them disjoint we keep the tighter operand rather than
    returning an empty interval."""
    lo = np.maximum(a.lo, b.lo)
    hi = np.minimum(a.hi, b.hi)
    bad = lo > hi
    if np.any(bad):
        wa = a.hi - a.lo
        wb = b.hi - b.lo
        lo = np.where(bad, np.where(wa <= wb, a.lo, b.lo), lo)
        hi = np.where(bad, np.where(wa <= wb, a.hi, b.hi), hi)
    return IArray(lo, hi)


def iadd(a: IArray, b: IArray) -> IArray:
    return IArray(add_down(a.lo, b.lo), add_up(a.hi, b.hi))


def isub(a: IArray, b: IArray) -> IArray:
    return IArray(add_down(a.lo, -b.hi), add_up(a.hi, -b.lo))


def iscale(a: IArray, c: float) -> IArray:
    if c >= 0:
        return IArray(mul_down(a.lo, c), mul_up(a.hi, c))
    return IArray(mul_down(a.hi, c), mul_up(a.lo, c))


def imul(a: IArray, b: IArray) -> IArray:
    pairs = ((a.lo, b.lo), (a.lo, b.hi), (a.hi, b.lo), (a.hi, b.hi))
    lo = hi = None
    for x, y in pairs:
        p = x * y
        err = _prod_err(x, y, p)
        pd = round_down(p, err)
        pu = round_up(p, err)
        lo = pd if lo is None else np.minimum(lo, pd)
        hi = pu if hi is None else np.maximum(hi, pu)
    return IArray(lo, hi)


def isqr(a: IArray) -> IArray:
    m = a.mag
    hi = mul_up(m, m)
    mn = a.mig
    lo = mul_down(mn, mn)
    return IArray(np.maximum(lo, 0.0), hi)


def ipowi(a: IArray, k: int) -> IArray:
    """Integer power with the exact even/odd monotonicity rules."""
    if k == 0:
        return IArray(np.ones_like(a.lo))
    if k < 0:
        return irecip(ipowi(a, -k))
    if k == 1:
        return a
    if k == 2:
        return isqr(a)
    rel = (2 * k + 2) * UNIT_ROUNDOFF
    plo = a.lo**k
    phi = a.hi**k
    if k % 2:
        lo, hi = widen_rel(plo, phi, rel)
        return IArray(lo, hi)
    straddle = (a.lo <= 0) & (a.hi >= 0)
    lo = np.where(straddle, 0.0, np.minimum(plo, phi))
    hi = np.maximum(plo, phi)
    lo, hi = widen_rel(lo, hi, rel)
    return IArray(np.maximum(lo, 0.0), hi)


def irecip(a: IArray) -> IArray:
    if np.any((a.lo <= 0) & (a.hi >= 0)):
        raise EvaluationDomainError("division by an interval containing zero")
    return IArray(down(1.0 / a.hi), up(1.0 / a.lo))


def idiv(a: IArray, b: IArray) -> IArray:
    return imul(a, irecip(b))


def _widen_fn(lo, hi):
    rel = TRANSCENDENTAL_ULPS * 2 * UNIT_ROUNDOFF
    return widen_rel(lo, hi, rel)


def iexp(a: IArray) -> IArray:
    with np.errstate(over="ignore"):
        lo, hi = _widen_fn(np.exp(a.lo), np.exp(a.hi))
    return IArray(np.maximum(lo, 0.0), hi)


def itanh(a: IArray) -> IArray:
    lo, hi = _widen_fn(np.tanh(a.lo), np.tanh(a.hi))
    return IArray(np.maximum(lo, -1.0), np.minimum(hi, 1.0))


def isqrt(a: IArray) -> IArray:
    if np.any(a.lo < 0):
        raise EvaluationDomainError("sqrt of an interval with negative part")
    lo, hi = widen_rel(np.sqrt(a.lo), np.sqrt(a.hi), 2 * UNIT_ROUNDOFF)
    return IArray(np.maximum(lo, 0.0), hi)


def _contains_phase(lo, hi, phase):
    """Whether ``[lo, hi]`` may contain ``phase + 2*pi*k`` for some integer k.

    Errs towards True near the boundary, which only loosens the enclosure."""
    slack = 1e-12 * (1.0 + np.maximum(np.abs(lo), np.abs(hi)))
    k = np.ceil((lo - slack - phase) / _TWO_PI)
    return phase + _TWO_PI * k <= hi + slack


def _periodic(a: IArray, fn, max_phase, min_phase) -> IArray:
    vlo = fn(a.lo)
    vhi = fn(a.hi)
    lo = np.minimum(vlo, vhi)
    hi = np.maximum(vlo, vhi)
    eps = TRANSCENDENTAL_ULPS * 2 * UNIT_ROUNDOFF
    lo, hi = widen_abs(lo, hi, eps)
    full = (a.hi - a.lo) >= _TWO_PI
    hi = np.where(full | _contains_phase(a.lo, a.hi, max_phase), 1.0, hi)
    lo = np.where(full | _contains_phase(a.lo, a.hi, min_phase), -1.0, lo)
    return IArray(np.maximum(lo, -1.0), np.minimum(hi, 1.0))


def isin(a: IArray) -> IArray:
    return _periodic(a, np.sin, 0.5 * math.pi, -0.5 * math.pi)


def icos(a: IArray) -> IArray:
    return _periodic(a, np.cos, 0.0, math.pi)


def imin(a: IArray, b: IArray) -> IArray:
    return IArray(np.minimum(a.lo, b.lo), np.minimum(a.hi, b.hi))


def imax(a: IArray, b: IArray) -> IArray:
    return IArray(np.maximum(a.lo, b.lo), np.maximum(a.hi, b.hi))


def idot_const(x: IArray, coef: np.ndarray, extra_terms: int = 0) -> IArray:
    """Enclose ``x @ coef`` for a float matrix ``coef`` (contracting the last
    axis of ``x`` with the first of ``coef``).

    The float products and the length-m sum carry at most ``gamma_{m+k}``
    relative error in aggregate, which is added explicitly; ``extra_terms``
    accounts for rounding already present in ``coef`` itself.
    """
    cpos = np.maximum(coef, 0.0)
    cneg = np.maximum(-coef, 0.0)
    lo = x.lo @ cpos - x.hi @ cneg
    hi = x.hi @ cpos - x.lo @ cneg
    m = coef.shape[0]
    gamma = 1.01 * (m + 2 + extra_terms) * UNIT_ROUNDOFF
    err = gamma * (x.mag @ np.abs(coef)) + 1e-300
    return IArray(down(lo - err), up(hi + err))


def box_batch(boxes: Sequence[Box]) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([b.lo for b in boxes], dtype=float)
    hi = np.array([b.hi for b in boxes], dtype=float)
    return lo, hi


def check_finite(x: IArray, what: str = "result") -> IArray:
    if not (np.all(np.isfinite(x.lo)) and np.all(np.isfinite(x.hi))):
        raise EvaluationDomainError(f"non-finite interval bound in {what}")
    return x
