"""Second-order Taylor-form enclosures over batches of boxes.

For each box with centre ``c`` and offsets ``d = x - c`` the value of an
expression ``e`` is enclosed three ways and the results intersected:

* natural extension ``e(B)``,
* mean-value form ``e(c) + sum_k De_k(B) d_k``,
* Taylor form ``e(c) + De(c).d + 1/2 d' D2e(B) d``.

``e(c)`` and ``De(c)`` are interval evaluations on the degenerate box ``[c, c]``,
so only the remainder carries box-wide dependency.  Linear combinations of
several expressions are enclosed by combining their derivative enclosures
first, which keeps correlations (``r - eps * omega`` is much tighter than
``r`` and ``eps * omega`` bounded separately).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..expr import ExprList, eval_interval_dual2_boxes
from ..expr.interval import IArray, down, iadd, imul, intersect, iscale, isqr, up


@dataclass
class BaseEnclosure:
    """Derivative enclosures of ``E`` expressions on ``N`` boxes.

    Arrays are stacked with the expression axis second: value ``(N, E)``,
    gradients ``(N, E, n)``, Hessians ``(N, E, n, n)``.
    """

    v: IArray      # natural value on the box
    g: IArray      # gradient on the box
    h: IArray      # Hessian on the box
    vc: IArray     # value at the centre
    gc: IArray     # gradient at the centre
    d: IArray      # offsets x - c, (N, n)

    def take(self, idx) -> "BaseEnclosure":
        return BaseEnclosure(*(part[idx] for part in self.parts()))

    def parts(self):
        return (self.v, self.g, self.h, self.vc, self.gc, self.d)

    @staticmethod
    def concat(items: list["BaseEnclosure"]) -> "BaseEnclosure":
        fields = []
        for parts in zip(*(it.parts() for it in items)):
            fields.append(IArray(np.concatenate([p.lo for p in parts]),
                                 np.concatenate([p.hi for p in parts])))
        return BaseEnclosure(*fields)


def _stack(parts, axis=1) -> IArray:
    return IArray(np.stack([p.lo for p in parts], axis=axis),
                  np.stack([p.hi for p in parts], axis=axis))


def enclose(exprs: ExprList, lo: np.ndarray, hi: np.ndarray) -> BaseEnclosure:
    c = 0.5 * (lo + hi)
    c = np.minimum(np.maximum(c, lo), hi)
    box = eval_interval_dual2_boxes(exprs, lo, hi)
    ctr = eval_interval_dual2_boxes(exprs, c, c)
    d = IArray(down(lo - c), up(hi - c))
    return BaseEnclosure(
        _stack([b.v for b in box]), _stack([b.g for b in box]), _stack([b.h for b in box]),
        _stack([t.v for t in ctr]), _stack([t.g for t in ctr]), d)


def _combine(part: IArray, coef: np.ndarray) -> IArray:
    """``sum_e coef[e] * part[:, e, ...]`` in interval arithmetic."""
    acc = None
    for e, c in enumerate(coef):
        if c == 0.0:
            continue
        term = part[:, e]
        if c != 1.0:
            term = iscale(term, float(c))
        acc = term if acc is None else iadd(acc, term)
    if acc is None:
        zeros = np.zeros(part.lo[:, 0].shape)
        return IArray(zeros, zeros)
    return acc


def _sum_last(x: IArray) -> IArray:
    acc = x[..., 0]
    for k in range(1, x.shape[-1]):
        acc = iadd(acc, x[..., k])
    return acc


def taylor_value(enc: BaseEnclosure, coef: np.ndarray) -> tuple[IArray, IArray]:
    """Enclosure over each box, and at each centre, of ``sum_e coef[e] e``."""
    coef = np.asarray(coef, dtype=float)
    v = _combine(enc.v, coef)
    vc = _combine(enc.vc, coef)
    g = _combine(enc.g, coef)
    gc = _combine(enc.gc, coef)
    h = _combine(enc.h, coef)
    d = enc.d
    n = d.shape[-1]

    mean_value = iadd(vc, _sum_last(imul(g, d)))
    linear = _sum_last(imul(gc, d))
    dsq = isqr(d)
    rem = None
    for j in range(n):
        term = iscale(imul(h[:, j, j], dsq[:, j]), 0.5)
        rem = term if rem is None else iadd(rem, term)
        for k in range(j + 1, n):
            term = imul(h[:, j, k], imul(d[:, j], d[:, k]))
            rem = iadd(rem, term)
    taylor = iadd(iadd(vc, linear), rem)
    return intersect(intersect(v, mean_value), taylor), vc
