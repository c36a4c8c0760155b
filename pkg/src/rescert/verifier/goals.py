"""Inequalities proved by branch and bound.

A goal splits its work into an expensive, parameter-free ``evaluate`` (derivative
enclosures per box, cached across bisection probes) and a cheap ``bounds`` that
turns the cached data into per-box bounds for the current parameters.

``bounds`` returns three arrays over boxes:

* ``ub``: upper bound of the goal ``G`` over the box (certified when ``<= 0``),
* ``lb``: a lower bound of ``G`` valid at every point of the box (``> 0`` is a
  box-wide counterexample),
* ``clb``: a lower bound of ``G`` at the box centre (``> 0`` is a point
  counterexample).

Vector-valued goals report the worst component.  Boxes a goal does not care
about (outside a sublevel set, say) get ``ub = lb = clb = -inf``.
"""

from __future__ import annotations

import numpy as np

from ..expr import Expr, ExprList, hessian_entries
from ..expr.interval import UNIT_ROUNDOFF, IArray, down, isub, up
from .enclosure import BaseEnclosure, enclose, taylor_value

NEG_INF = -np.inf


class Goal:
    n: int

    def evaluate(self, lo: np.ndarray, hi: np.ndarray):
        raise NotImplementedError

    def bounds(self, data) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    @staticmethod
    def take(data, idx):
        return data.take(idx)

    @staticmethod
    def concat(items):
        return BaseEnclosure.concat(items)


class CombinationGoal(Goal):
    """``max_k sum_e combos[k, e] * exprs[e] <= 0``.

    With ``sublevel=(V, c)``, boxes where ``V > c`` throughout are ignored and
    counterexamples must lie inside ``{V <= c}``.
    """

    def __init__(self, exprs: list[Expr], combos, n: int,
                 sublevel: tuple[Expr, float] | None = None):
        self.n = n
        self.n_base = len(exprs)
        all_exprs = list(exprs)
        self.sublevel_c = None
        if sublevel is not None:
            all_exprs.append(sublevel[0])
            self.sublevel_c = float(sublevel[1])
        self.exprs = ExprList(all_exprs)
        self.set_combos(combos)

    def set_combos(self, combos) -> None:
        combos = np.atleast_2d(np.asarray(combos, dtype=float))
        if combos.shape[1] != self.n_base:
            raise ValueError("combination width must match the number of expressions")
        pad = np.zeros((combos.shape[0], len(self.exprs) - self.n_base))
        self.combos = np.hstack([combos, pad])

    def evaluate(self, lo, hi):
        return enclose(self.exprs, lo, hi)

    def bounds(self, data: BaseEnclosure):
        ub = lb = clb = None
        for coef in self.combos:
            box, ctr = taylor_value(data, coef)
            ub = box.hi if ub is None else np.maximum(ub, box.hi)
            lb = box.lo if lb is None else np.maximum(lb, box.lo)
            clb = ctr.lo if clb is None else np.maximum(clb, ctr.lo)
        if self.sublevel_c is not None:
            e = np.zeros(len(self.exprs))
            e[-1] = 1.0
            vbox, vctr = taylor_value(data, e)
            outside = vbox.lo > self.sublevel_c
            ub = np.where(outside, NEG_INF, ub)
            lb = np.where(vbox.hi <= self.sublevel_c, lb, NEG_INF)
            clb = np.where(vctr.hi <= self.sublevel_c, clb, NEG_INF)
            lb = np.where(outside, NEG_INF, lb)
            clb = np.where(outside, NEG_INF, clb)
        return ub, lb, clb


def _entry_exprs(e: Expr, n: int):
    ent = hessian_entries(e, n)
    keys = sorted(ent)
    return keys, [ent[k] for k in keys]


class _HessianEntries(Goal):
    """Shared machinery: Taylor enclosures of every upper-triangular Hessian
    entry of ``e``."""

    def __init__(self, e: Expr, n: int):
        self.n = n
        self.keys, exprs = _entry_exprs(e, n)
        self.exprs = ExprList(exprs)
        self._unit = np.eye(len(self.keys))

    def evaluate(self, lo, hi):
        enc = enclose(self.exprs, lo, hi)
        boxes, ctrs = [], []
        for coef in self._unit:
            box, ctr = taylor_value(enc, coef)
            boxes.append(box)
            ctrs.append(ctr)
        return _Entries(_stack_last(boxes), _stack_last(ctrs))

    @staticmethod
    def take(data, idx):
        return data.take(idx)

    @staticmethod
    def concat(items):
        return _Entries.concat(items)


def _stack_last(parts) -> IArray:
    return IArray(np.stack([p.lo for p in parts], axis=-1), np.stack([p.hi for p in parts], axis=-1))


class _Entries:
    def __init__(self, box: IArray, ctr: IArray):
        self.box = box
        self.ctr = ctr

    def take(self, idx):
        return _Entries(self.box[idx], self.ctr[idx])

    @staticmethod
    def concat(items):
        def cat(parts):
            return IArray(np.concatenate([p.lo for p in parts]),
                          np.concatenate([p.hi for p in parts]))
        return _Entries(cat([i.box for i in items]), cat([i.ctr for i in items]))


class FrobeniusGoal(_HessianEntries):
    """``|Hess e|_F^2 - bound^2 <= 0`` with ``|H|_F^2`` enclosed entrywise."""

    def __init__(self, e: Expr, n: int, bound: float = 0.0):
        super().__init__(e, n)
        self.mult = np.array([1.0 if j == k else 2.0 for j, k in self.keys])
        self.bound = bound

    def _sum(self, x: np.ndarray, rounding) -> np.ndarray:
        s = (x * x) @ self.mult
        rel = (2 * len(self.keys) + 2) * UNIT_ROUNDOFF
        return rounding(s * (1 + rel)) if rounding is up else rounding(s * (1 - rel))

    def bounds(self, data: _Entries):
        t = self.bound * self.bound
        t_hi = up(t * (1 + 2 * UNIT_ROUNDOFF))
        t_lo = down(t * (1 - 2 * UNIT_ROUNDOFF))
        ub = up(self._sum(data.box.mag, up) - t_lo)
        lb = down(self._sum(data.box.mig, down) - t_hi)
        clb = down(self._sum(data.ctr.mig, down) - t_hi)
        return ub, lb, clb

    def max_norm(self, data: _Entries) -> np.ndarray:
        """Upper bound of the Frobenius norm per box."""
        return up(np.sqrt(self._sum(data.box.mag, up)) * (1 + 2 * UNIT_ROUNDOFF))


class PsdGoal(_HessianEntries):
    """``Hess e - shift * I`` positive semidefinite, as ``-lambda_min <= 0``.

    Uses ``lambda_min(M) >= lambda_min(Mc) - |Delta|_F`` for an interval
    matrix with midpoint ``Mc`` and radius ``Delta``.
    """

    def __init__(self, e: Expr, n: int, shift: float = 0.0):
        super().__init__(e, n)
        self.shift = shift

    def _matrix(self, entries: IArray) -> tuple[np.ndarray, np.ndarray]:
        n = self.n
        N = entries.shape[0]
        lo = np.zeros((N, n, n))
        hi = np.zeros((N, n, n))
        for idx, (j, k) in enumerate(self.keys):
            e = entries[:, idx]
            if j == k:
                s = IArray(np.full(N, self.shift))
                e = isub(e, s)
            lo[:, j, k] = lo[:, k, j] = e.lo
            hi[:, j, k] = hi[:, k, j] = e.hi
        mid = 0.5 * (lo + hi)
        rad = up(np.maximum(hi - mid, mid - lo))
        return mid, rad

    def _lambda_bounds(self, entries: IArray):
        mid, rad = self._matrix(entries)
        lam = np.linalg.eigvalsh(mid)[:, 0]
        radius = np.sqrt(np.sum(rad * rad, axis=(1, 2)))
        scale = np.sqrt(np.sum(mid * mid, axis=(1, 2)))
        slack = 8 * self.n * UNIT_ROUNDOFF * scale
        rad_up = up(radius * (1 + 4 * self.n * UNIT_ROUNDOFF))
        lower = down(lam - rad_up - slack)
        upper = up(lam + rad_up + slack)
        return lower, upper

    def bounds(self, data: _Entries):
        lower, upper = self._lambda_bounds(data.box)
        _, c_upper = self._lambda_bounds(data.ctr)
        return -lower, -upper, -c_upper
