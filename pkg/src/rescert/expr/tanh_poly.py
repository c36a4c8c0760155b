"""Derivatives of tanh as polynomials in t = tanh(z), with tight ranges.

``d^q/dz^q tanh(z) = P_q(tanh z)`` where ``P_0(t) = t`` and
``P_{q+1}(t) = P_q'(t) (1 - t^2)``.  Because tanh is increasing, the range of
the q-th derivative over ``[zlo, zhi]`` is the range of ``P_q`` over
``[tanh zlo, tanh zhi]``, attained at the endpoints or at the (precomputed)
real critical points of ``P_q`` in ``[-1, 1]``.

The bias-corrected unit ``psi(s) = tanh(b+s) - tanh(b) - sech^2(b) s`` and its
derivative ``phi(s) = sech^2(b+s) - sech^2(b)`` get the same treatment in the
shift variable ``s``, with critical points ``{0, -2b}`` and ``{-b}``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial

from .interval import UNIT_ROUNDOFF, IArray, TRANSCENDENTAL_ULPS, down, up

_ONE_MINUS_T2 = Polynomial([1.0, 0.0, -1.0])


@lru_cache(maxsize=None)
def tanh_deriv_poly(q: int) -> Polynomial:
    if q < 0:
        raise ValueError("derivative order must be non-negative")
    if q == 0:
        return Polynomial([0.0, 1.0])
    return tanh_deriv_poly(q - 1).deriv() * _ONE_MINUS_T2


@lru_cache(maxsize=None)
def _critical_points(q: int) -> tuple[float, ...]:
    dp = tanh_deriv_poly(q).deriv()
    if dp.degree() < 1:
        return ()
    ddp = dp.deriv()
    pts = []
    for r in dp.roots():
        if abs(r.imag) > 1e-9:
            continue
        x = float(r.real)
        for _ in range(3):  # Newton polish
            d2 = ddp(x)
            if d2 == 0:
                break
            x -= dp(x) / d2
        if -1.0 <= x <= 1.0:
            pts.append(x)
    return tuple(sorted(set(pts)))


@lru_cache(maxsize=None)
def _pad(q: int) -> float:
    """Absolute slack covering Horner rounding, critical-point error and the
    error in t itself (via the Lipschitz constant of P_q on [-1, 1])."""
    p = tanh_deriv_poly(q)
    coef_sum = float(np.sum(np.abs(p.coef)))
    grid = np.linspace(-1, 1, 2001)
    lip = float(np.max(np.abs(p.deriv()(grid)))) * 1.1 + 1.0
    deg = max(p.degree(), 1)
    return 4 * deg * UNIT_ROUNDOFF * coef_sum + 8 * UNIT_ROUNDOFF * lip + 1e-15 * lip


def _horner(coef: np.ndarray, t):
    acc = np.zeros_like(t) + coef[-1]
    for c in coef[-2::-1]:
        acc = acc * t + c
    return acc


def tanh_deriv_values(q: int, t: np.ndarray) -> np.ndarray:
    """``P_q(t)`` evaluated at already computed ``t = tanh(z)``."""
    if q == 0:
        return t
    return _horner(tanh_deriv_poly(q).coef, t)


def tanh_deriv_range(q: int, tlo: np.ndarray, thi: np.ndarray) -> IArray:
    """Enclosure of ``P_q`` over ``[tlo, thi]`` (elementwise, outward)."""
    if q == 0:
        return IArray(tlo, thi)
    coef = tanh_deriv_poly(q).coef
    vlo = _horner(coef, tlo)
    vhi = _horner(coef, thi)
    lo = np.minimum(vlo, vhi)
    hi = np.maximum(vlo, vhi)
    for c in _critical_points(q):
        inside = (tlo <= c) & (c <= thi)
        if np.any(inside):
            v = float(_horner(coef, np.float64(c)))
            lo = np.where(inside, np.minimum(lo, v), lo)
            hi = np.where(inside, np.maximum(hi, v), hi)
    pad = _pad(q)
    return IArray(down(lo - pad), up(hi + pad))


def tanh_interval(zlo: np.ndarray, zhi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rel = TRANSCENDENTAL_ULPS * 2 * UNIT_ROUNDOFF
    tlo = np.tanh(zlo)
    thi = np.tanh(zhi)
    tlo = np.maximum(down(tlo - np.abs(tlo) * rel), -1.0)
    thi = np.minimum(up(thi + np.abs(thi) * rel), 1.0)
    return tlo, thi


# -- bias-corrected units ----------------------------------------------------

def corrected_value(s: np.ndarray, b: np.ndarray, tb: np.ndarray, db: np.ndarray) -> np.ndarray:
    """``tanh(b+s) - tanh(b) - sech^2(b) s`` given ``tb = tanh b``, ``db = sech^2 b``."""
    return (np.tanh(b + s) - tb) - db * s


def corrected_slope(s: np.ndarray, b: np.ndarray, db: np.ndarray) -> np.ndarray:
    """``sech^2(b+s) - sech^2(b)``."""
    t = np.tanh(b + s)
    return (1.0 - t * t) - db


def _corrected_pad(s, b):
    # tanh(b+s): argument rounding (<= u|b+s|, slope <= 1) plus libm error;
    # three further roundings of O(1) quantities.
    return 16 * UNIT_ROUNDOFF * (2.0 + np.abs(s) + np.abs(b + s))


def corrected_value_range(slo, shi, b, tb, db) -> IArray:
    """Range of ``psi(s)`` over ``[slo, shi]``; critical points are s=0, s=-2b."""
    vlo = corrected_value(slo, b, tb, db)
    vhi = corrected_value(shi, b, tb, db)
    lo = np.minimum(vlo, vhi)
    hi = np.maximum(vlo, vhi)
    inside0 = (slo <= 0) & (shi >= 0)
    lo = np.where(inside0, np.minimum(lo, 0.0), lo)
    hi = np.where(inside0, np.maximum(hi, 0.0), hi)
    s2 = -2.0 * b
    inside2 = (slo <= s2) & (s2 <= shi)
    if np.any(inside2):
        v2 = corrected_value(s2, b, tb, db)
        lo = np.where(inside2, np.minimum(lo, v2), lo)
        hi = np.where(inside2, np.maximum(hi, v2), hi)
    pad = np.maximum(_corrected_pad(slo, b), _corrected_pad(shi, b))
    # s=-2b is computed inexactly; psi' vanishes there so the error is second order.
    pad = pad + 8 * UNIT_ROUNDOFF * np.abs(b)
    return IArray(down(lo - pad), up(hi + pad))


def corrected_slope_range(slo, shi, b, db) -> IArray:
    """Range of ``phi(s)`` over ``[slo, shi]``; critical point s=-b."""
    vlo = corrected_slope(slo, b, db)
    vhi = corrected_slope(shi, b, db)
    lo = np.minimum(vlo, vhi)
    hi = np.maximum(vlo, vhi)
    s1 = -b
    inside = (slo <= s1) & (s1 <= shi)
    if np.any(inside):
        v1 = 1.0 - db  # sech^2(0) - sech^2(b)
        lo = np.where(inside, np.minimum(lo, v1), lo)
        hi = np.where(inside, np.maximum(hi, v1), hi)
    pad = np.maximum(_corrected_pad(slo, b), _corrected_pad(shi, b))
    return IArray(down(lo - pad), up(hi + pad))
