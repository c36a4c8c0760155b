"""Evaluation of expression trees in four semantics.

All evaluators walk the tree once in topological order and are vectorised over
a leading batch axis: points ``X`` of shape ``(N, n)`` or boxes given by corner
arrays ``lo, hi`` of shape ``(N, n)``.  The four semantics are

* floats (:func:`eval_points`),
* second-order forward mode over floats (:func:`eval_dual2_points`),
* natural interval extension (:func:`eval_interval_boxes`),
* second-order forward mode over intervals (:func:`eval_interval_dual2_boxes`).

The forward-mode algebra is generic over its scalar algebra, so the interval
Hessian enclosures use exactly the same chain-rule code as the point Hessians.
Zero derivative parts are carried as ``None`` so constant subtrees cost nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import EvaluationDomainError
from . import interval as ia
from . import nodes as N
from .interval import Box, IArray, Interval
from .nodes import Expr, TanhLayer, topo_order
from .tanh_poly import (corrected_slope, corrected_slope_range, corrected_value,
                        corrected_value_range, tanh_deriv_range, tanh_deriv_values,
                        tanh_interval)


# -- scalar algebras ------------------------------------------------------------

class FloatBase:
    """Plain float arrays."""

    def __init__(self, X: np.ndarray):
        self.X = X
        self.shape = (X.shape[0],)
        self.n = X.shape[1]
        self._layer_cache: dict = {}

    def const(self, c, shape=None):
        return np.full(self.shape if shape is None else shape, c, dtype=float)

    def var(self, k):
        return self.X[:, k]

    add = staticmethod(np.add)
    sub = staticmethod(np.subtract)
    neg = staticmethod(np.negative)
    mul = staticmethod(np.multiply)

    @staticmethod
    def scale(a, c):
        return a * c

    @staticmethod
    def sqr(a):
        return a * a

    @staticmethod
    def powi(a, k):
        if k < 0 and np.any(a == 0):
            raise EvaluationDomainError("zero raised to a negative power")
        return a ** float(k) if k < 0 else a**k

    @staticmethod
    def recip(a):
        if np.any(a == 0):
            raise EvaluationDomainError("division by zero")
        return 1.0 / a

    sin = staticmethod(np.sin)
    cos = staticmethod(np.cos)
    tanh = staticmethod(np.tanh)

    @staticmethod
    def exp(a):
        with np.errstate(over="ignore"):
            return np.exp(a)

    @staticmethod
    def sqrt(a):
        if np.any(a < 0):
            raise EvaluationDomainError("sqrt of a negative number")
        return np.sqrt(a)

    minimum = staticmethod(np.minimum)
    maximum = staticmethod(np.maximum)

    @staticmethod
    def tanh_triple(a):
        t = np.tanh(a)
        d1 = 1.0 - t * t
        return t, d1, -2.0 * t * d1

    @staticmethod
    def outer_sym(g):
        return g[..., :, None] * g[..., None, :]

    @staticmethod
    def pick(mask_a, a, b):
        """Select ``a`` where ``mask_a`` else ``b`` (mask broadcast on the left)."""
        mask = mask_a.reshape(mask_a.shape + (1,) * (np.ndim(a) - mask_a.ndim))
        return np.where(mask, a, b)

    # tanh-layer unit values, shape (N, m)
    def _affine(self, layer: TanhLayer):
        key = id(layer)
        hit = self._layer_cache.get(key)
        if hit is None:
            S = self.X @ layer.A.T
            t = np.tanh(S + layer.b)
            tb = np.tanh(layer.b)
            hit = (S, t, tb, 1.0 - tb * tb)
            self._layer_cache[key] = hit
        return hit

    def unit_values(self, layer: TanhLayer, q: int):
        key = (id(layer), q)
        hit = self._layer_cache.get(key)
        if hit is None:
            S, t, tb, db = self._affine(layer)
            if layer.corrected and q == 0:
                hit = corrected_value(S, layer.b, tb, db)
            elif layer.corrected and q == 1:
                hit = corrected_slope(S, layer.b, db)
            else:
                hit = tanh_deriv_values(q, t)
            self._layer_cache[key] = hit
        return hit

    @staticmethod
    def contract(units, coef, extra_terms=0):
        return units @ coef


class IntervalBase:
    """Elementwise intervals (:class:`IArray`) with outward rounding."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.lo, self.hi = lo, hi
        self.shape = (lo.shape[0],)
        self.n = lo.shape[1]
        self._layer_cache: dict = {}

    def const(self, c, shape=None):
        return IArray(np.full(self.shape if shape is None else shape, c, dtype=float))

    def var(self, k):
        return IArray(self.lo[:, k], self.hi[:, k])

    add = staticmethod(ia.iadd)
    sub = staticmethod(ia.isub)
    mul = staticmethod(ia.imul)
    scale = staticmethod(ia.iscale)
    sqr = staticmethod(ia.isqr)
    powi = staticmethod(ia.ipowi)
    recip = staticmethod(ia.irecip)
    sin = staticmethod(ia.isin)
    cos = staticmethod(ia.icos)
    tanh = staticmethod(ia.itanh)
    exp = staticmethod(ia.iexp)
    sqrt = staticmethod(ia.isqrt)
    minimum = staticmethod(ia.imin)
    maximum = staticmethod(ia.imax)

    @staticmethod
    def neg(a):
        return -a

    @staticmethod
    def tanh_triple(a):
        tlo, thi = tanh_interval(a.lo, a.hi)
        return IArray(tlo, thi), tanh_deriv_range(1, tlo, thi), tanh_deriv_range(2, tlo, thi)

    @staticmethod
    def outer_sym(g):
        out = ia.imul(g[..., :, None], g[..., None, :])
        sq = ia.isqr(g)
        n = g.shape[-1]
        idx = np.arange(n)
        lo, hi = out.lo.copy(), out.hi.copy()
        lo[..., idx, idx] = sq.lo
        hi[..., idx, idx] = sq.hi
        return IArray(lo, hi)

    @staticmethod
    def pick(mask_a, a, b):
        mask = mask_a.reshape(mask_a.shape + (1,) * (a.lo.ndim - mask_a.ndim))
        return IArray(np.where(mask, a.lo, b.lo), np.where(mask, a.hi, b.hi))

    def _affine(self, layer: TanhLayer):
        key = id(layer)
        hit = self._layer_cache.get(key)
        if hit is None:
            S = ia.idot_const(IArray(self.lo, self.hi), layer.A.T)
            tb = np.tanh(layer.b)
            hit = (S, tb, 1.0 - tb * tb)
            self._layer_cache[key] = hit
        return hit

    def unit_values(self, layer: TanhLayer, q: int):
        key = (id(layer), q)
        hit = self._layer_cache.get(key)
        if hit is None:
            S, tb, db = self._affine(layer)
            if layer.corrected and q == 0:
                hit = corrected_value_range(S.lo, S.hi, layer.b, tb, db)
            elif layer.corrected and q == 1:
                hit = corrected_slope_range(S.lo, S.hi, layer.b, db)
            else:
                tkey = (id(layer), "t")
                T = self._layer_cache.get(tkey)
                if T is None:
                    zlo = ia.down(S.lo + layer.b)
                    zhi = ia.up(S.hi + layer.b)
                    T = tanh_interval(zlo, zhi)
                    self._layer_cache[tkey] = T
                hit = tanh_deriv_range(q, *T)
            self._layer_cache[key] = hit
        return hit

    @staticmethod
    def contract(units, coef, extra_terms=0):
        return ia.idot_const(units, coef, extra_terms)


# -- second-order forward mode ----------------------------------------------

class D2:
    """Value, gradient and Hessian over a scalar algebra; ``None`` means zero."""

    __slots__ = ("v", "g", "h")

    def __init__(self, v, g=None, h=None):
        self.v, self.g, self.h = v, g, h


def _madd(B, a, b):
    if a is None:
        return b
    if b is None:
        return a
    return B.add(a, b)


class Dual2Alg:
    def __init__(self, base):
        self.B = base
        self.n = base.n

    def const(self, c):
        return D2(self.B.const(c))

    def var(self, k):
        B = self.B
        g = B.const(0.0, self.B.shape + (self.n,))
        if isinstance(g, IArray):
            g.lo[:, k] = 1.0
            g.hi[:, k] = 1.0
        else:
            g[:, k] = 1.0
        return D2(B.var(k), g, None)

    def add(self, a, b):
        B = self.B
        return D2(B.add(a.v, b.v), _madd(B, a.g, b.g), _madd(B, a.h, b.h))

    def neg(self, a):
        B = self.B
        return D2(B.neg(a.v), None if a.g is None else B.neg(a.g),
                  None if a.h is None else B.neg(a.h))

    def mul(self, a, b):
        B = self.B
        v = B.mul(a.v, b.v)
        if a.g is None and a.h is None:
            a, b = b, a
        if b.g is None and b.h is None:  # b constant
            bv1 = b.v[..., None]
            g = None if a.g is None else B.mul(a.g, bv1)
            h = None if a.h is None else B.mul(a.h, bv1[..., None])
            return D2(v, g, h)
        g = _madd(B, None if a.g is None else B.mul(a.g, b.v[..., None]),
                  None if b.g is None else B.mul(a.v[..., None], b.g))
        h = None
        if a.h is not None:
            h = B.mul(a.h, b.v[..., None, None])
        if b.h is not None:
            h = _madd(B, h, B.mul(a.v[..., None, None], b.h))
        if a.g is not None and b.g is not None:
            cross = B.mul(a.g[..., :, None], b.g[..., None, :])
            h = _madd(B, h, B.add(cross, _swap(cross)))
        return D2(v, g, h)

    def chain(self, a, f0, f1, f2):
        B = self.B
        g = None if a.g is None else B.mul(a.g, f1[..., None])
        h = None
        if a.h is not None:
            h = B.mul(a.h, f1[..., None, None])
        if a.g is not None:
            h = _madd(B, h, B.mul(B.outer_sym(a.g), f2[..., None, None]))
        return D2(f0, g, h)

    def powi(self, a, k):
        B = self.B
        if k == 0:
            return D2(B.const(1.0))
        if k == 1:
            return a
        v = B.powi(a.v, k)
        if a.g is None and a.h is None:
            return D2(v)
        f1 = B.scale(B.powi(a.v, k - 1), float(k))
        f2 = B.scale(B.powi(a.v, k - 2), float(k * (k - 1)))
        return self.chain(a, v, f1, f2)

    def recip(self, a):
        B = self.B
        r = B.recip(a.v)
        if a.g is None and a.h is None:
            return D2(r)
        return self.chain(a, r, B.neg(B.sqr(r)), B.scale(B.powi(r, 3), 2.0))

    def unary(self, op, a):
        B = self.B
        if a.g is None and a.h is None:
            return D2(getattr(B, op)(a.v))
        if op == N.SIN:
            s, c = B.sin(a.v), B.cos(a.v)
            return self.chain(a, s, c, B.neg(s))
        if op == N.COS:
            s, c = B.sin(a.v), B.cos(a.v)
            return self.chain(a, c, B.neg(s), B.neg(c))
        if op == N.EXP:
            e = B.exp(a.v)
            return self.chain(a, e, e, e)
        if op == N.TANH:
            return self.chain(a, *B.tanh_triple(a.v))
        if op == N.SQRT:
            s = B.sqrt(a.v)
            rs = B.recip(s)
            return self.chain(a, s, B.scale(rs, 0.5), B.scale(B.powi(rs, 3), -0.25))
        raise ValueError(op)

    def select(self, op, a, b):
        B = self.B
        v = B.minimum(a.v, b.v) if op == N.MIN else B.maximum(a.v, b.v)
        n = self.n
        ag = a.g if a.g is not None else B.const(0.0, B.shape + (n,))
        bg = b.g if b.g is not None else B.const(0.0, B.shape + (n,))
        ah = a.h if a.h is not None else B.const(0.0, B.shape + (n, n))
        bh = b.h if b.h is not None else B.const(0.0, B.shape + (n, n))
        if isinstance(a.v, IArray):
            if op == N.MIN:
                only_a, only_b = a.v.hi < b.v.lo, b.v.hi < a.v.lo
            else:
                only_a, only_b = a.v.lo > b.v.hi, b.v.lo > a.v.hi
            both_g, both_h = ia.hull(ag, bg), ia.hull(ah, bh)
            g = B.pick(only_a, ag, B.pick(only_b, bg, both_g))
            h = B.pick(only_a, ah, B.pick(only_b, bh, both_h))
        else:
            mask = a.v <= b.v if op == N.MIN else a.v >= b.v
            g, h = B.pick(mask, ag, bg), B.pick(mask, ah, bh)
        return D2(v, g, h)

    def layer(self, params: TanhLayer, dirs: tuple[int, ...]):
        B, n = self.B, self.n
        p = len(dirs)
        extra = p + 3
        v = B.contract(B.unit_values(params, p), params.coefficients(dirs), extra)
        c1 = np.stack([params.coefficients(tuple(sorted(dirs + (k,)))) for k in range(n)], axis=1)
        g = B.contract(B.unit_values(params, p + 1), c1, extra)
        c2 = np.stack([params.coefficients(tuple(sorted(dirs + (j, k))))
                       for j in range(n) for k in range(n)], axis=1)
        h = B.contract(B.unit_values(params, p + 2), c2, extra)
        shape = B.shape + (n, n)
        if isinstance(h, IArray):
            h = IArray(h.lo.reshape(shape), h.hi.reshape(shape))
        else:
            h = h.reshape(shape)
        return D2(v, g, h)


def _swap(x):
    if isinstance(x, IArray):
        return IArray(np.swapaxes(x.lo, -1, -2), np.swapaxes(x.hi, -1, -2))
    return np.swapaxes(x, -1, -2)


class PlainAlg:
    """Value-only semantics over a scalar algebra."""

    def __init__(self, base):
        self.B = base
        self.n = base.n

    def const(self, c):
        return self.B.const(c)

    def var(self, k):
        return self.B.var(k)

    def add(self, a, b):
        return self.B.add(a, b)

    def neg(self, a):
        return self.B.neg(a)

    def mul(self, a, b):
        return self.B.mul(a, b)

    def powi(self, a, k):
        return self.B.powi(a, k)

    def recip(self, a):
        return self.B.recip(a)

    def unary(self, op, a):
        return getattr(self.B, op)(a)

    def select(self, op, a, b):
        return self.B.minimum(a, b) if op == N.MIN else self.B.maximum(a, b)

    def layer(self, params: TanhLayer, dirs: tuple[int, ...]):
        B = self.B
        units = B.unit_values(params, len(dirs))
        return B.contract(units, params.coefficients(dirs), len(dirs) + 3)


# -- driver ---------------------------------------------------------------------

class ExprList(tuple):
    """Tuple of expressions with a cached joint topological order; pass it
    instead of a list when the same group is evaluated repeatedly."""

    def __new__(cls, exprs):
        self = super().__new__(cls, exprs)
        self.order = topo_order(list(self))
        return self


def _run(exprs: Sequence[Expr], alg) -> list:
    n = alg.n
    if isinstance(exprs, ExprList):
        order = exprs.order
    elif len(exprs) == 1:
        order = exprs[0].topo_order()
    else:
        order = topo_order(exprs)
    memo: dict[int, object] = {}
    for node in order:
        op = node.op
        if op == N.CONST:
            r = alg.const(node.data)
        elif op == N.VAR:
            if node.data >= n:
                raise ValueError(f"variable index {node.data} out of range for dimension {n}")
            r = alg.var(node.data)
        elif op == N.LAYER:
            params, dirs = node.data
            if params.n != n:
                raise ValueError(f"layer expects dimension {params.n}, got {n}")
            r = alg.layer(params, dirs)
        else:
            args = [memo[id(a)] for a in node.args]
            if op == N.ADD:
                r = alg.add(args[0], args[1])
            elif op == N.NEG:
                r = alg.neg(args[0])
            elif op == N.MUL:
                r = alg.mul(args[0], args[1])
            elif op == N.DIV:
                r = alg.mul(args[0], alg.recip(args[1]))
            elif op == N.POW:
                r = alg.powi(args[0], node.data)
            elif op in N.UNARY_FUNCS:
                r = alg.unary(op, args[0])
            elif op in N.BINARY_FUNCS:
                r = alg.select(op, args[0], args[1])
            else:  # pragma: no cover
                raise ValueError(f"unknown op {op}")
        memo[id(node)] = r
    return [memo[id(e)] for e in exprs]


def _seq(exprs):
    return exprs if isinstance(exprs, ExprList) else list(exprs)


def _as_points(x) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        return X[None, :], True
    if X.ndim != 2:
        raise ValueError("points must have shape (n,) or (N, n)")
    return X, False


def _as_boxes(box) -> tuple[np.ndarray, np.ndarray, bool]:
    if isinstance(box, Box):
        lo, hi = box.as_arrays()
        return lo, hi, True
    lo, hi = box
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.ndim == 1:
        return lo[None, :], hi[None, :], True
    return lo, hi, False


def _check_points(values, what):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise EvaluationDomainError(f"non-finite value in {what}")


def _materialize(d: D2, B, n: int) -> D2:
    g = d.g if d.g is not None else B.const(0.0, B.shape + (n,))
    h = d.h if d.h is not None else B.const(0.0, B.shape + (n, n))
    return D2(d.v, g, h)


def eval_points(exprs: Sequence[Expr], X: np.ndarray) -> list[np.ndarray]:
    """Float values of several expressions at the rows of ``X``."""
    out = _run(_seq(exprs), PlainAlg(FloatBase(X)))
    out = [np.broadcast_to(v, (X.shape[0],)).astype(float) for v in out]
    _check_points(out, "point evaluation")
    return out


def eval_dual2_points(exprs: Sequence[Expr], X: np.ndarray) -> list[D2]:
    B = FloatBase(X)
    out = [_materialize(d, B, X.shape[1]) for d in _run(_seq(exprs), Dual2Alg(B))]
    for d in out:
        _check_points((d.v, d.g, d.h), "dual evaluation")
    return out


def eval_interval_boxes(exprs: Sequence[Expr], lo: np.ndarray, hi: np.ndarray) -> list[IArray]:
    out = _run(_seq(exprs), PlainAlg(IntervalBase(lo, hi)))
    return [ia.check_finite(v, "interval evaluation") for v in out]


def eval_interval_dual2_boxes(exprs: Sequence[Expr], lo: np.ndarray, hi: np.ndarray) -> list[D2]:
    B = IntervalBase(lo, hi)
    out = [_materialize(d, B, lo.shape[1]) for d in _run(_seq(exprs), Dual2Alg(B))]
    for d in out:
        for part in (d.v, d.g, d.h):
            ia.check_finite(part, "interval dual evaluation")
    return out


# -- public single-expression API ----------------------------------------------

@dataclass
class Dual2:
    """Value, gradient (n,) and symmetric Hessian (n, n) at a point; batched
    inputs give leading batch axes."""

    value: np.ndarray | float
    gradient: np.ndarray
    hessian: np.ndarray


@dataclass
class IntervalDual2:
    value: Interval
    gradient: list[Interval]
    hessian: list[list[Interval]]


def eval(e: Expr, x) -> float | np.ndarray:  # noqa: A001 - mirrors the math name
    """Evaluate at a point ``x`` of shape (n,) (returns float) or at each row
    of an (N, n) array."""
    X, single = _as_points(x)
    (v,) = eval_points([e], X)
    return float(v[0]) if single else v


def eval_dual2(e: Expr, x) -> Dual2:
    X, single = _as_points(x)
    (d,) = eval_dual2_points([e], X)
    if single:
        return Dual2(float(d.v[0]), d.g[0], d.h[0])
    return Dual2(d.v, d.g, d.h)


def eval_interval(e: Expr, box) -> Interval | IArray:
    """Natural interval extension over a :class:`Box` (returns
    :class:`Interval`) or over a batch ``(lo, hi)`` (returns :class:`IArray`)."""
    lo, hi, single = _as_boxes(box)
    (v,) = eval_interval_boxes([e], lo, hi)
    return v.to_interval() if single else v


def eval_interval_dual2(e: Expr, box) -> IntervalDual2 | D2:
    lo, hi, single = _as_boxes(box)
    (d,) = eval_interval_dual2_boxes([e], lo, hi)
    if not single:
        return d
    n = lo.shape[1]
    value = d.v.to_interval()
    grad = [Interval(d.g.lo[0, k], d.g.hi[0, k]) for k in range(n)]
    hess = [[Interval(d.h.lo[0, j, k], d.h.hi[0, j, k]) for k in range(n)] for j in range(n)]
    return IntervalDual2(value, grad, hess)
