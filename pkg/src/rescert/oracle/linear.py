"""Exact quadratic solutions for linear systems: Lyapunov and Riccati equations."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ..errors import OracleError

RICCATI_TOL = 1e-12


def _is_hurwitz(A: np.ndarray) -> bool:
    return bool(np.all(np.linalg.eigvals(A).real < 0))


def lyap_solve(A, W) -> np.ndarray:
    """Symmetric ``P`` with ``A'P + PA = -W`` for Hurwitz ``A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if not _is_hurwitz(A):
        raise OracleError("lyap_solve needs a Hurwitz matrix")
    P = scipy.linalg.solve_continuous_lyapunov(A.T, -W)
    return 0.5 * (P + P.T)


def riccati_residual(A, B, Qm, Rm, P) -> np.ndarray:
    """``A'P + PA - P B R^{-1} B' P + Q``."""
    return A.T @ P + P @ A - P @ B @ np.linalg.solve(Rm, B.T @ P) + Qm


def _stabilizing_gain(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    k = B.shape[1]
    if _is_hurwitz(A):
        return np.zeros((k, A.shape[0]))
    # Bass's construction: with beta beyond the spectrum of -A, Z solving
    # -(A + beta I) Z - Z (A + beta I)' = -2 B B' gives A - B B' Z^{-1} stable.
    beta = 1.0 + np.linalg.norm(A, 2)
    Ab = -(A + beta * np.eye(A.shape[0]))
    Z = scipy.linalg.solve_continuous_lyapunov(Ab, -2.0 * B @ B.T)
    try:
        K = B.T @ np.linalg.inv(Z)
    except np.linalg.LinAlgError as exc:
        raise OracleError("no stabilizing gain: linearization is not controllable") from exc
    if not _is_hurwitz(A - B @ K):
        raise OracleError("no stabilizing gain: linearization is not controllable")
    return K


def riccati_solve(A, B, Qm, Rm, max_iters: int = 100) -> np.ndarray:
    """Stabilizing solution of the continuous algebraic Riccati equation by
    Newton-Kleinman iteration (a Lyapunov solve per step)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Qm = np.atleast_2d(np.asarray(Qm, dtype=float))
    Rm = np.atleast_2d(np.asarray(Rm, dtype=float))
    K = _stabilizing_gain(A, B)
    P = None
    for _ in range(max_iters):
        Acl = A - B @ K
        P_new = lyap_solve(Acl, Qm + K.T @ Rm @ K)
        K = np.linalg.solve(Rm, B.T @ P_new)
        done = P is not None and np.max(np.abs(P_new - P)) <= 1e-15 * (1 + np.max(np.abs(P_new)))
        P = P_new
        res = np.max(np.abs(riccati_residual(A, B, Qm, Rm, P)))
        if done or res <= RICCATI_TOL * 1e-2:
            break
    res = np.max(np.abs(riccati_residual(A, B, Qm, Rm, P)))
    if not np.isfinite(res) or res > RICCATI_TOL * (1 + np.max(np.abs(P))):
        raise OracleError(f"Newton-Kleinman iteration did not converge (residual {res:.3e})")
    return P
