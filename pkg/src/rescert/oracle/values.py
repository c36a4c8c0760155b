"""Value integrals along trajectories, with linearised tails."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import OracleError
from ..expr import Expr, eval_dual2_points, eval_points
from ..net import ValueNet, net_eval2, net_gradient
from ..system import HJB, LYAPUNOV, SystemModel, linearize, weight_hessian_at_origin
from .integrate import CONVERGED, Trajectory, integrate_batch
from .linear import lyap_solve

Policy = Callable[[np.ndarray], np.ndarray]


@dataclass
class OracleValue:
    value: float
    tail: float
    stop_radius: float
    reason: str
    final_time: float

    @property
    def converged(self) -> bool:
        return self.reason == CONVERGED


def _inside(sysm: SystemModel):
    lo, hi = sysm.domain.as_arrays()
    return lambda X: np.all((X >= lo) & (X <= hi), axis=1)


def net_policy(sysm: SystemModel, net: ValueNet) -> Policy:
    """``u = -1/2 R^{-1} g' DV'`` evaluated in closed form from the network."""
    def policy(X):
        grad = net_gradient(net, X)
        G = sysm.eval_g(X)
        R = sysm.eval_R(X)
        p = np.einsum("pnk,pn->pk", G, grad)
        return -0.5 * np.linalg.solve(R, p[..., None])[..., 0]
    return policy


def expr_policy(exprs: Sequence[Expr]) -> Policy:
    def policy(X):
        return np.stack(eval_points(list(exprs), X), axis=-1)
    return policy


def _policy_jacobian_at_origin(sysm: SystemModel, policy, net: ValueNet | None) -> np.ndarray:
    if net is not None:
        H = net_eval2(net, np.zeros(sysm.n)).hessian
        G0 = sysm.eval_g(np.zeros((1, sysm.n)))[0]
        R0 = sysm.eval_R(np.zeros((1, sysm.n)))[0]
        return -0.5 * np.linalg.solve(R0, G0.T @ H)
    if isinstance(policy, (list, tuple)):
        ds = eval_dual2_points(list(policy), np.zeros((1, sysm.n)))
        return np.stack([d.g[0] for d in ds])
    # generic callable: central differences
    h = 1e-6
    cols = []
    for j in range(sysm.n):
        e = np.zeros((2, sysm.n))
        e[0, j], e[1, j] = h, -h
        u = policy(e)
        cols.append((u[0] - u[1]) / (2 * h))
    return np.stack(cols, axis=-1)


def _lyapunov_rhs(sysm: SystemModel):
    n = sysm.n

    def rhs(Y):
        X = Y[:, :n]
        return np.hstack([sysm.eval_f(X), sysm.eval_weight(X)[:, None]])
    return rhs


def _closed_loop_rhs(sysm: SystemModel, policy: Policy):
    n = sysm.n

    def rhs(Y):
        X = Y[:, :n]
        U = policy(X)
        G = sysm.eval_g(X)
        R = sysm.eval_R(X)
        dx = sysm.eval_f(X) + np.einsum("pnk,pk->pn", G, U)
        cost = sysm.eval_weight(X) + np.einsum("pk,pkl,pl->p", U, R, U)
        return np.hstack([dx, cost[:, None]])
    return rhs


def lyapunov_tail_matrix(sysm: SystemModel) -> np.ndarray:
    """``P`` with ``V(x) ~ x'Px`` near the origin for the linearised flow."""
    A, _ = linearize(sysm)
    return lyap_solve(A, 0.5 * weight_hessian_at_origin(sysm))


def closed_loop_tail_matrix(sysm: SystemModel, K: np.ndarray) -> np.ndarray:
    """Quadratic cost-to-go of the linearised closed loop ``u = K x``."""
    A, B = linearize(sysm)
    R0 = sysm.eval_R(np.zeros((1, sysm.n)))[0]
    W = 0.5 * weight_hessian_at_origin(sysm) + K.T @ R0 @ K
    return lyap_solve(A + B @ K, W)


def _values(trajs: list[Trajectory], P: np.ndarray, stop_radius: float) -> list[OracleValue]:
    out = []
    for tr in trajs:
        xs = tr.final_state
        tail = float(xs @ P @ xs) if tr.reason == CONVERGED else 0.0
        out.append(OracleValue(tr.cost + tail, max(tail, 0.0), stop_radius, tr.reason,
                               tr.final_time))
    return out


def true_values(sysm: SystemModel, X, rtol: float = 1e-10, stop_radius: float = 1e-5,
                t_max: float = 200.0) -> list[OracleValue]:
    """``V(x) = int_0^inf omega(phi(t, x)) dt`` for each row of ``X``;
    non-converging trajectories are reported through ``reason``."""
    if sysm.mode != LYAPUNOV:
        raise OracleError("true_value needs a lyapunov-mode system")
    P = lyapunov_tail_matrix(sysm)
    trajs = integrate_batch(_lyapunov_rhs(sysm), X, n=sysm.n, inside=_inside(sysm),
                            t_max=t_max, rtol=rtol, atol=rtol * 1e-2,
                            stop_radius=stop_radius, record=False)
    return _values(trajs, P, stop_radius)


def true_value(sysm: SystemModel, x, rtol: float = 1e-10, stop_radius: float = 1e-5,
               t_max: float = 200.0) -> OracleValue:
    (v,) = true_values(sysm, np.atleast_2d(x), rtol, stop_radius, t_max)
    if not v.converged:
        raise OracleError(f"trajectory from {list(np.ravel(x))} did not converge ({v.reason})")
    return v


def policy_costs(sysm: SystemModel, controller: ValueNet | Sequence[Expr] | Policy, X,
                 rtol: float = 1e-10, stop_radius: float = 1e-5,
                 t_max: float = 200.0) -> list[OracleValue]:
    """Closed-loop cost ``J(x, u) = int Q + u'Ru`` for each row of ``X``."""
    if sysm.mode != HJB:
        raise OracleError("policy_cost needs an hjb-mode system")
    net = controller if isinstance(controller, ValueNet) else None
    if net is not None:
        policy = net_policy(sysm, net)
    elif isinstance(controller, (list, tuple)):
        policy = expr_policy(controller)
    else:
        policy = controller
    K = _policy_jacobian_at_origin(sysm, controller if net is None else policy, net)
    try:
        P = closed_loop_tail_matrix(sysm, K)
    except OracleError as exc:
        raise OracleError(f"closed-loop linearisation is not stable: {exc}") from exc
    trajs = integrate_batch(_closed_loop_rhs(sysm, policy), X, n=sysm.n, inside=_inside(sysm),
                            t_max=t_max, rtol=rtol, atol=rtol * 1e-2,
                            stop_radius=stop_radius, record=False)
    return _values(trajs, P, stop_radius)


def policy_cost(sysm: SystemModel, controller, x, rtol: float = 1e-10,
                stop_radius: float = 1e-5, t_max: float = 200.0) -> OracleValue:
    (v,) = policy_costs(sysm, controller, np.atleast_2d(x), rtol, stop_radius, t_max)
    if not v.converged:
        raise OracleError(f"closed loop from {list(np.ravel(x))} did not converge ({v.reason})")
    return v


def integrate(sysm: SystemModel, x0, policy: ValueNet | Sequence[Expr] | Policy | None = None,
              t_max: float = 200.0, rtol: float = 1e-10, atol: float = 1e-12,
              stop_radius: float = 1e-5) -> Trajectory:
    """Single trajectory of ``f`` (or of the closed loop under ``policy``),
    with the running cost accumulated alongside."""
    if policy is None:
        if sysm.mode == LYAPUNOV:
            rhs = _lyapunov_rhs(sysm)
        else:
            rhs = _closed_loop_rhs(sysm, lambda X: np.zeros((X.shape[0], sysm.k)))
    else:
        if isinstance(policy, ValueNet):
            policy = net_policy(sysm, policy)
        elif isinstance(policy, (list, tuple)):
            policy = expr_policy(policy)
        rhs = _closed_loop_rhs(sysm, policy)
    (tr,) = integrate_batch(rhs, np.atleast_2d(x0), n=sysm.n, inside=_inside(sysm), t_max=t_max,
                            rtol=rtol, atol=atol, stop_radius=stop_radius)
    if tr.reason == "step_underflow":
        raise OracleError("step size underflow")
    return tr
