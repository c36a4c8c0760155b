"""Certification entry points built on :func:`bnb_prove`.

The relative residual bound ``|r| <= eps * weight`` is split in two regions.
On the cube ``[-rho, rho]^n`` (which contains the ball of radius ``rho`` and is
star-shaped about the origin) a bound ``|Hess r|_F <= 2 eps alpha`` together
with ``r(0) = 0``, ``Dr(0) = 0`` and ``weight >= alpha |x|^2`` gives
``|r| <= eps alpha |x|^2 <= eps weight`` by Taylor's theorem.  Everywhere else
(boxes not strictly inside the ball) the inequality is checked directly.

The one-sided bound ``r <= eps * weight`` only needs
``lambda_max(Hess r) <= 2 eps alpha`` on the cube; that is tried first and the
Frobenius bound (which implies it) is the fallback.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..errors import PreconditionError
from ..expr import Box, Expr, const, eval_dual2_points, eval_interval, eval_points, sum_exprs, var
from ..net import ValueNet, to_expr
from ..residual import ResidualBundle
from ..system import QuadraticLowerBound
from .bnb import (BUDGET_EXHAUSTED, CERTIFIED, REFUTED, BnbConfig, Certificate, Leaves,
                  VerifyTask, Witness, bnb_prove)
from .goals import CombinationGoal, FrobeniusGoal, PsdGoal


def _cube(rho: float, n: int) -> Box:
    return Box(tuple([-rho] * n), tuple([rho] * n))


def _as_value_expr(V: ValueNet | Expr) -> Expr:
    return to_expr(V, fused=True) if isinstance(V, ValueNet) else V


def _is_flat_at_origin(e: Expr, n: int) -> bool:
    """Value and gradient exactly zero at the origin."""
    (d,) = eval_dual2_points([e], np.zeros((1, n)))
    return bool(d.v[0] == 0.0 and np.all(d.g[0] == 0.0))


def _sum_of_squares(n: int) -> Expr:
    return sum_exprs([var(j) ** 2 for j in range(n)])


def _merge(mode: str, parts: list[Certificate], **kw) -> Certificate:
    status = CERTIFIED
    witness = None
    for p in parts:
        if p.status == REFUTED:
            status, witness = REFUTED, p.witness
            break
        if p.status == BUDGET_EXHAUSTED:
            status = BUDGET_EXHAUSTED
    return Certificate(mode=mode, status=status, witness=witness,
                       boxes_processed=sum(p.boxes_processed for p in parts),
                       max_depth=max((p.max_depth for p in parts), default=0),
                       wall_time=sum(p.wall_time for p in parts), parts=parts, **kw)


# -- quadratic lower bound ----------------------------------------------------------

def verify_quadratic_bound(weight: Expr, alpha: float, rho: float, cfg: BnbConfig = BnbConfig(),
                           n: int | None = None) -> Certificate:
    """Prove ``weight(x) >= alpha |x|^2`` on the cube ``[-rho, rho]^n``.

    When ``weight`` has zero value and gradient at the origin it suffices that
    ``Hess weight - 2 alpha I`` is positive semidefinite on the cube; this is
    tried first.  Otherwise (or if that fails) the inequality is searched
    directly, which can refute it with a genuine counterexample.
    """
    if not (alpha > 0 and rho > 0):
        raise ValueError("alpha and rho must be positive")
    n = n if n is not None else max(1, _max_var(weight) + 1)
    region = _cube(rho, n)
    parts = []
    if _is_flat_at_origin(weight, n):
        psd = bnb_prove(VerifyTask(PsdGoal(weight, n, 2.0 * alpha), region), cfg,
                        mode="quad_lower_bound_hessian")
        parts.append(psd)
        if psd.certified:
            return _merge("quad_lower_bound", parts, alpha=alpha, rho=rho, region=region)
    direct = bnb_prove(VerifyTask(const(alpha) * _sum_of_squares(n) - weight, region), cfg,
                       mode="quad_lower_bound_direct")
    parts.append(direct)
    status = direct.status if direct.status != CERTIFIED else CERTIFIED
    cert = _merge("quad_lower_bound", parts, alpha=alpha, rho=rho, region=region)
    cert.status = status
    cert.witness = direct.witness
    return cert


def _max_var(e: Expr) -> int:
    from ..expr.nodes import max_var_index
    return max_var_index(e)


def certify_quadratic_bound(weight: Expr, alpha: float, rho: float, n: int,
                            cfg: BnbConfig = BnbConfig()) -> tuple[QuadraticLowerBound, Certificate]:
    cert = verify_quadratic_bound(weight, alpha, rho, cfg, n)
    return QuadraticLowerBound(alpha, rho, certified=cert.certified), cert


# -- relative residual ------------------------------------------------------------

def _check_residual_flat(bundle: ResidualBundle, n: int) -> None:
    if not _is_flat_at_origin(bundle.r, n):
        raise PreconditionError("the residual and its gradient must vanish exactly at the "
                                "origin (bias-corrected value function, f(0) = 0 and a "
                                "weight with a minimum at 0)")


@dataclass
class _Warm:
    inner: Leaves | None = None
    outer: Leaves | None = None
    upper: Leaves | None = None


class ResidualVerifier:
    """Reusable relative-residual prover for one bundle and region; keeps the
    last certified partitions as warm starts for later probes."""

    def __init__(self, bundle: ResidualBundle, qb: QuadraticLowerBound, region: Box,
                 cfg: BnbConfig = BnbConfig(), one_sided: bool = False,
                 sublevel: tuple[Expr, float] | None = None):
        if not qb.certified:
            raise PreconditionError("the quadratic lower bound has not been certified")
        n = region.n
        _check_residual_flat(bundle, n)
        inner = region.intersect(_cube(qb.rho, n))
        if inner is None or not inner.contains_point([0.0] * n):
            raise PreconditionError("the region must contain the origin")
        self.bundle, self.qb, self.region, self.cfg = bundle, qb, region, cfg
        self.one_sided = one_sided
        self.sublevel = sublevel
        self.inner_region = inner
        self.frob = FrobeniusGoal(bundle.r, n)
        # one-sided inner check: lambda_max(Hess r) <= 2 eps alpha gives
        # r <= eps alpha |x|^2 for a residual that is flat at the origin
        self.upper = PsdGoal(-bundle.r, n) if one_sided else None
        self.outer = CombinationGoal([bundle.r, bundle.weight], [[1.0, 0.0]], n, sublevel)
        self.warm = _Warm()

    @property
    def mode(self) -> str:
        return "one_sided" if self.one_sided else "two_sided"

    def check(self, eps: float) -> Certificate:
        if not 0 <= eps < 1:
            raise ValueError("eps must lie in [0, 1)")
        alpha, rho = self.qb.alpha, self.qb.rho
        self.frob.bound = 2.0 * eps * alpha
        inner = upper = None
        if self.upper is not None:
            self.upper.shift = -2.0 * eps * alpha
            upper = bnb_prove(VerifyTask(self.upper, self.inner_region), self.cfg,
                              mode="hessian_upper_inner", warm=self.warm.upper,
                              keep_leaves=True)
        if upper is None or not upper.certified:
            # the Frobenius bound also implies the one-sided inner bound
            inner = bnb_prove(VerifyTask(self.frob, self.inner_region), self.cfg,
                              mode="hessian_inner", warm=self.warm.inner, keep_leaves=True)
        parts = [inner if inner is not None else upper]
        if parts[0].certified:
            combos = [[1.0, -eps]] if self.one_sided else [[1.0, -eps], [-1.0, -eps]]
            self.outer.set_combos(combos)
            outer = bnb_prove(VerifyTask(self.outer, self.region, rho), self.cfg,
                              mode="outer_upper" if self.one_sided else "outer_two_sided",
                              warm=self.warm.outer, keep_leaves=True)
            parts.append(outer)
            if outer.certified:
                self.warm = _Warm(inner.leaves if inner is not None else self.warm.inner,
                                  outer.leaves, upper.leaves if upper is not None else None)
        for p in parts:
            p.leaves = None
            p.epsilon = eps
        details = {}
        if self.sublevel is not None:
            details["sublevel_c"] = self.sublevel[1]
        return _merge(self.mode, parts, epsilon=eps, rho=rho, alpha=alpha,
                      region=self.region, details=details)


def verify_relative_residual(bundle: ResidualBundle, eps: float, qb: QuadraticLowerBound,
                             region: Box, cfg: BnbConfig = BnbConfig(), *,
                             sublevel: tuple[Expr, float] | None = None) -> Certificate:
    """Certify ``|r| <= eps * weight`` on ``region`` (restricted to
    ``{V <= c}`` when ``sublevel=(V, c)`` is given)."""
    return ResidualVerifier(bundle, qb, region, cfg, False, sublevel).check(eps)


def verify_one_sided(bundle: ResidualBundle, eps: float, qb: QuadraticLowerBound, region: Box,
                     cfg: BnbConfig = BnbConfig(), *,
                     sublevel: tuple[Expr, float] | None = None) -> Certificate:
    """Certify ``r <= eps * weight`` on ``region``."""
    return ResidualVerifier(bundle, qb, region, cfg, True, sublevel).check(eps)


def sampled_ratio_sup(bundle: ResidualBundle, region: Box, per_dim: int = 201,
                      one_sided: bool = False,
                      sublevel: tuple[Expr, float] | None = None) -> float:
    """Largest ``|r| / weight`` (or ``r / weight``) over a uniform grid; a lower
    bound for any certifiable ``eps``."""
    lo, hi = region.as_arrays()
    axes = [np.linspace(lo[0, j], hi[0, j], per_dim) for j in range(region.n)]
    X = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    X = X[np.linalg.norm(X, axis=1) > 0]
    r, w = eval_points([bundle.r, bundle.weight], X)
    keep = w > 0
    if sublevel is not None:
        (v,) = eval_points([sublevel[0]], X)
        keep &= v <= sublevel[1]
    ratio = r[keep] / w[keep]
    if not one_sided:
        ratio = np.abs(ratio)
    return float(max(0.0, np.max(ratio))) if ratio.size else 0.0


def min_certified_epsilon(bundle: ResidualBundle, qb: QuadraticLowerBound, region: Box,
                          cfg: BnbConfig = BnbConfig(), eps_hi: float = 0.5, *,
                          one_sided: bool = False, sublevel: tuple[Expr, float] | None = None,
                          max_iters: int = 20, rel_bracket: float = 0.05,
                          eps_lo: float | None = None,
                          ) -> tuple[float | None, Certificate]:
    """Smallest certifiable ``eps`` up to a relative bracket, by bisection.

    The lower end of the bracket is the sampled sup of the relative residual
    (nothing below it can be certified); midpoints are geometric because the
    interesting range spans decades.  Returns ``(None, certificate)`` when
    ``eps_hi`` itself fails.
    """
    if not 0 < eps_hi < 1:
        raise ValueError("eps_hi must lie in (0, 1)")
    start = time.perf_counter()
    ver = ResidualVerifier(bundle, qb, region, cfg, one_sided, sublevel)
    best = ver.check(eps_hi)
    probes = [(eps_hi, best.status)]
    if not best.certified:
        best.details["probes"] = probes
        return None, best
    lo = sampled_ratio_sup(bundle, region, one_sided=one_sided, sublevel=sublevel) \
        if eps_lo is None else eps_lo
    lo = floor = min(lo, eps_hi)
    hi = eps_hi
    for _ in range(max_iters):
        if hi - lo <= rel_bracket * hi:
            break
        mid = math.sqrt(lo * hi) if lo > 0 else hi / 4
        cert = ver.check(mid)
        probes.append((mid, cert.status))
        if cert.certified:
            hi, best = mid, cert
        else:
            lo = mid
    best.details["probes"] = probes
    best.details["lower_bound"] = floor
    best.details["search_time"] = time.perf_counter() - start
    return hi, best


# -- sublevel sets and positive definiteness ------------------------------------

def _faces(region: Box):
    for j in range(region.n):
        for side, val in (("lo", region.lo[j]), ("hi", region.hi[j])):
            lo = list(region.lo)
            hi = list(region.hi)
            lo[j] = hi[j] = val
            yield f"x{j + 1}={side}", Box(tuple(lo), tuple(hi))


def verify_sublevel_separation(V: ValueNet | Expr, c: float, region: Box,
                               cfg: BnbConfig = BnbConfig()) -> Certificate:
    """Prove ``V > c`` on every face of ``region`` so that the closure of
    ``{V <= c}`` does not meet the boundary."""
    if not c > 0:
        raise ValueError("c must be positive")
    value = _as_value_expr(V)
    parts = []
    for name, face in _faces(region):
        cert = bnb_prove(VerifyTask(const(c) - value, face, strict=True), cfg,
                         mode=f"face {name}")
        parts.append(cert)
        if cert.status == REFUTED:
            break
    return _merge("sublevel_sep", parts, region=region, details={"c": c})


def boundary_min_sampled(V: ValueNet | Expr, region: Box, per_dim: int = 401) -> float:
    value = _as_value_expr(V)
    best = math.inf
    for _, face in _faces(region):
        lo, hi = face.as_arrays()
        axes = [np.linspace(lo[0, j], hi[0, j], per_dim if hi[0, j] > lo[0, j] else 1)
                for j in range(region.n)]
        X = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
        (v,) = eval_points([value], X)
        best = min(best, float(v.min()))
    return best


def max_separated_level(V: ValueNet | Expr, region: Box, cfg: BnbConfig = BnbConfig(),
                        fractions=(0.99, 0.98, 0.95, 0.9, 0.8, 0.65, 0.5, 0.25, 0.1),
                        ) -> tuple[float | None, Certificate | None]:
    """Largest level ``c`` among ``fractions`` of the sampled boundary minimum
    of ``V`` that is certified separated from the boundary."""
    m = boundary_min_sampled(V, region)
    last = None
    if not m > 0:
        return None, None
    for frac in fractions:
        cert = verify_sublevel_separation(V, frac * m, region, cfg)
        last = cert
        if cert.certified:
            return frac * m, cert
    return None, last


def verify_local_pd(V: ValueNet | Expr, rho_pd: float, cfg: BnbConfig = BnbConfig(),
                    n: int | None = None) -> Certificate:
    """Prove ``V(x) >= beta |x|^2`` on ``[-rho_pd, rho_pd]^n`` with
    ``beta = lambda_min(Hess V(0)) / 4`` via ``Hess V - 2 beta I >= 0``."""
    if not rho_pd > 0:
        raise ValueError("rho_pd must be positive")
    if isinstance(V, ValueNet):
        n = V.n
    elif n is None:
        n = _max_var(V) + 1
    value = _as_value_expr(V)
    region = _cube(rho_pd, n)
    start = time.perf_counter()
    (d,) = eval_dual2_points([value], np.zeros((1, n)))
    lam, vecs = np.linalg.eigh(d.h[0])
    if not _is_flat_at_origin(value, n):
        raise PreconditionError("V must have zero value and gradient at the origin")
    if lam[0] <= 0:
        witness = _saddle_witness(value, vecs[:, 0], rho_pd)
        return Certificate(mode="local_pd", status=REFUTED, rho=rho_pd, region=region,
                           witness=witness, wall_time=time.perf_counter() - start,
                           details={"lambda_min": float(lam[0])})
    beta = float(lam[0]) / 4.0
    cert = bnb_prove(VerifyTask(PsdGoal(value, n, 2.0 * beta), region), cfg, mode="local_pd")
    cert.rho = rho_pd
    cert.details = {"beta": beta, "lambda_min": float(lam[0])}
    return cert


def _saddle_witness(value: Expr, direction: np.ndarray, rho: float) -> Witness | None:
    """A point along a non-positive curvature direction where ``V < 0`` is
    proved by interval evaluation."""
    for k in range(1, 40):
        for sign in (1.0, -1.0):
            x = tuple(sign * rho * 2.0**-k * direction)
            iv = eval_interval(value, Box(x, x))
            if iv.hi < 0:
                return Witness(Box(x, x), float(-iv.hi))
    return None
