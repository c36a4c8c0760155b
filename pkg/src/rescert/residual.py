"""Residual expressions of the Lyapunov and HJB equations for a value function.

Lyapunov: ``r = DV.f + omega``.
HJB: ``r = Q + DV.f - 1/4 DV g R^{-1} g' DV'`` with induced policy
``u = -1/2 R^{-1} g' DV'``.

``R^{-1}`` is formed symbolically: termwise for diagonal ``R`` and through the
adjugate over the determinant for general symmetric ``R`` with ``k <= 3``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

from .errors import ConfigError
from .expr import Expr, const, diff, sum_exprs
from .expr.nodes import CONST
from .net import ValueNet, gradient_exprs, to_expr
from .system import HJB, LYAPUNOV, SystemModel


@dataclass(frozen=True)
class ResidualBundle:
    mode: str
    r: Expr
    weight: Expr
    value: Expr
    grad: tuple[Expr, ...]
    policy: tuple[Expr, ...] | None = None


def value_and_gradient(V: ValueNet | Expr, n: int) -> tuple[Expr, tuple[Expr, ...]]:
    """Expression of ``V`` and of its gradient.  Networks are lowered to the
    exactly corrected fused layer and differentiated per unit."""
    if isinstance(V, ValueNet):
        if V.n != n:
            raise ConfigError(f"network dimension {V.n} does not match system dimension {n}",
                              "net")
        return to_expr(V, fused=True), tuple(gradient_exprs(V))
    if isinstance(V, Expr):
        return V, tuple(diff(V, j) for j in range(n))
    raise TypeError("value function must be a ValueNet or an Expr")


def _dot(a, b) -> Expr:
    terms = [x * y for x, y in zip(a, b) if not (_is_zero(x) or _is_zero(y))]
    return sum_exprs(terms) if terms else const(0.0)


def build_lyap_residual(sysm: SystemModel, V: ValueNet | Expr) -> ResidualBundle:
    if sysm.mode != LYAPUNOV:
        raise ConfigError("the Lyapunov residual needs a lyapunov-mode system", "mode")
    value, grad = value_and_gradient(V, sysm.n)
    r = _dot(grad, sysm.f) + sysm.omega
    return ResidualBundle(LYAPUNOV, r, sysm.omega, value, grad)


def _is_zero(e: Expr) -> bool:
    return e.op == CONST and e.data == 0.0


def _det(M) -> Expr:
    k = len(M)
    if k == 1:
        return M[0][0]
    if k == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    terms = []
    for perm in permutations(range(3)):
        inversions = sum(1 for i in range(3) for j in range(i + 1, 3) if perm[i] > perm[j])
        t = M[0][perm[0]] * M[1][perm[1]] * M[2][perm[2]]
        terms.append(-t if inversions % 2 else t)
    return sum_exprs(terms)


def _adjugate(M) -> list[list[Expr]]:
    k = len(M)
    if k == 1:
        return [[const(1.0)]]
    adj = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(k):
            minor = [[M[a][b] for b in range(k) if b != j] for a in range(k) if a != i]
            cof = _det(minor)
            adj[j][i] = -cof if (i + j) % 2 else cof
    return adj


def _inverse_quadratic_and_solve(R, p):
    """``p' R^{-1} p`` and ``R^{-1} p`` as expressions."""
    k = len(R)
    diagonal = all(_is_zero(R[i][j]) for i in range(k) for j in range(k) if i != j)
    if diagonal:
        quad = sum_exprs([p[i] ** 2 / R[i][i] for i in range(k)])
        sol = [p[i] / R[i][i] for i in range(k)]
        return quad, sol
    if k > 3:
        raise ConfigError("non-diagonal R is only supported for control_dim <= 3", "R")
    det = _det(R)
    adj = _adjugate(R)
    adj_p = [_dot(adj[i], p) for i in range(k)]
    quad = _dot(p, adj_p) / det
    sol = [a / det for a in adj_p]
    return quad, sol


def build_hjb_residual(sysm: SystemModel, V: ValueNet | Expr) -> ResidualBundle:
    if sysm.mode != HJB:
        raise ConfigError("the HJB residual needs an hjb-mode system", "mode")
    value, grad = value_and_gradient(V, sysm.n)
    # p = g' DV', one entry per control
    p = [_dot(grad, [sysm.g[i][c] for i in range(sysm.n)]) for c in range(sysm.k)]
    quad, sol = _inverse_quadratic_and_solve(sysm.R, p)
    r = sysm.Q + _dot(grad, sysm.f) - const(0.25) * quad
    policy = tuple(const(-0.5) * s for s in sol)
    return ResidualBundle(HJB, r, sysm.Q, value, grad, policy)


def build_residual(sysm: SystemModel, V: ValueNet | Expr) -> ResidualBundle:
    if sysm.mode == LYAPUNOV:
        return build_lyap_residual(sysm, V)
    return build_hjb_residual(sysm, V)
