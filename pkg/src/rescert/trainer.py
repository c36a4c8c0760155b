"""Least-squares collocation training of the output weights.

The gradient of the corrected network is linear in ``w``:
``DV(x) = sum_i w_i (sech^2(a_i.x + b_i) - sech^2(b_i)) a_i``, so the
Lyapunov residual ``DV.f + omega`` is affine in ``w`` and one linear
least-squares solve trains the network.  The HJB equation is handled by
successive approximation: for a fixed policy ``u`` the generalized equation
``DV.(f + g u) = -(Q + u'Ru)`` is again linear in ``w``, and the policy is
then improved to ``u = -1/2 R^{-1} g' DV'``.

Rows are scaled by ``1 / weight(x)`` by default, so the solve targets the
relative residual ``|r| / weight`` that the verifier has to bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.stats import qmc

from .errors import ConfigError, TrainingError
from .expr import Box
from .net import ValueNet, net_value
from .system import HJB, LYAPUNOV, SystemModel, linearize, weight_hessian_at_origin

DEFAULT_RIDGE_REL = 1e-10
MAX_COLLOCATION_POINTS = 2_000_000
WEIGHTINGS = ("relative", "absolute")


@dataclass(frozen=True)
class CollocationSet:
    points: np.ndarray
    kind: str
    count: int
    seed: int

    def descriptor(self) -> dict:
        return {"kind": self.kind, "count": self.count, "seed": self.seed}


def make_collocation(domain: Box, count: int, kind: str = "halton", seed: int = 0,
                     max_points: int = MAX_COLLOCATION_POINTS) -> CollocationSet:
    """Tensor grid (``count`` must be a perfect n-th power, corners included)
    or a Halton sequence skipped ahead by ``seed`` and mapped onto the box."""
    if count < 1:
        raise ConfigError("collocation count must be at least 1", "collocation.count")
    if count > max_points:
        raise ConfigError(f"collocation count {count} exceeds the memory budget "
                          f"of {max_points} points", "collocation.count")
    lo, hi = domain.as_arrays()
    lo, hi = lo[0], hi[0]
    n = domain.n
    if kind == "grid":
        q = int(round(count ** (1.0 / n)))
        if q ** n != count:
            raise ConfigError(f"grid count {count} is not a perfect {n}-th power",
                              "collocation.count")
        axes = [np.linspace(lo[j], hi[j], q) if q > 1 else np.array([0.5 * (lo[j] + hi[j])])
                for j in range(n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
    elif kind == "halton":
        engine = qmc.Halton(d=n, scramble=False)
        engine.fast_forward(int(seed))
        pts = lo + engine.random(count) * (hi - lo)
        pts = np.clip(pts, lo, hi)
    else:
        raise ConfigError(f"unknown collocation kind {kind!r}", "collocation.kind")
    pts.setflags(write=False)
    return CollocationSet(pts, kind, count, int(seed))


@dataclass
class TrainReport:
    iterations: int = 0
    max_residual: list[float] = field(default_factory=list)
    rms_residual: list[float] = field(default_factory=list)
    max_relative_residual: list[float] = field(default_factory=list)
    w_change_norm: float = 0.0
    ridge: float = 0.0
    converged: bool = True

    def record(self, r: np.ndarray, weight: np.ndarray) -> None:
        self.iterations += 1
        self.max_residual.append(float(np.max(np.abs(r))))
        self.rms_residual.append(float(np.sqrt(np.mean(r * r))))
        self.max_relative_residual.append(float(np.max(np.abs(r) / weight)))

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "max_residual": self.max_residual,
            "rms_residual": self.rms_residual,
            "max_relative_residual": self.max_relative_residual,
            "w_change_norm": self.w_change_norm,
            "ridge": self.ridge,
            "converged": self.converged,
        }


# -- shared pieces --------------------------------------------------------------

def _usable_points(sysm: SystemModel, pts: CollocationSet):
    X = np.asarray(pts.points, dtype=float)
    weight = sysm.eval_weight(X)
    keep = weight > 0  # the origin carries no information after correction
    return X[keep], weight[keep]


def unit_slopes(net: ValueNet, X: np.ndarray) -> np.ndarray:
    """``sech^2(a_i.x + b_i) - sech^2(b_i)`` for every point and unit, (N, m)."""
    t = np.tanh(X @ net.A.T + net.b)
    tb = np.tanh(net.b)
    return (tb - t) * (tb + t)


def default_ridge(design: np.ndarray, rel: float = DEFAULT_RIDGE_REL) -> float:
    """``rel * trace(design' design) / m``."""
    return rel * float(np.sum(design * design)) / design.shape[1]


def solve_least_squares(design: np.ndarray, rhs: np.ndarray, ridge: float) -> np.ndarray:
    """``argmin |design w - rhs|^2 + ridge |w|^2`` via an orthogonal
    (SVD-based) solve of the augmented system, never the normal equations."""
    m = design.shape[1]
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    if ridge == 0:
        cond = max(design.shape) * np.finfo(float).eps
        w, _, rank, _ = scipy.linalg.lstsq(design, rhs, cond=cond, lapack_driver="gelsd")
        if rank < m:
            raise TrainingError(f"rank-deficient least squares (rank {rank} < width {m}) "
                                f"with ridge=0; use a ridge or more collocation points")
        return w
    aug = np.vstack([design, np.sqrt(ridge) * np.eye(m)])
    rhs_aug = np.concatenate([rhs, np.zeros(m)])
    w, *_ = scipy.linalg.lstsq(aug, rhs_aug, lapack_driver="gelsd")
    return w


def _row_scale(weight: np.ndarray, weighting: str) -> np.ndarray:
    if weighting not in WEIGHTINGS:
        raise ConfigError(f"weighting must be one of {WEIGHTINGS}", "trainer.weighting")
    return 1.0 / weight if weighting == "relative" else np.ones_like(weight)


def _fit(design, rhs, scale, ridge, ridge_rel):
    D = design * scale[:, None]
    y = rhs * scale
    lam = default_ridge(D, ridge_rel) if ridge is None else float(ridge)
    return solve_least_squares(D, y, lam), lam


# -- Lyapunov -------------------------------------------------------------------

def lyapunov_residual_at(sysm: SystemModel, net: ValueNet, X: np.ndarray) -> np.ndarray:
    S = unit_slopes(net, X)
    F = sysm.eval_f(X)
    return (S * (F @ net.A.T)) @ net.w + sysm.eval_weight(X)


def train_lyapunov(sysm: SystemModel, net: ValueNet, pts: CollocationSet,
                   ridge: float | None = None, *, ridge_rel: float = DEFAULT_RIDGE_REL,
                   weighting: str = "relative") -> tuple[ValueNet, TrainReport]:
    """One linear least-squares solve for ``DV.f + omega = 0`` at the
    collocation points.  ``ridge=None`` picks ``ridge_rel * trace / m``."""
    if sysm.mode != LYAPUNOV:
        raise ConfigError("train_lyapunov needs a lyapunov-mode system", "mode")
    X, weight = _usable_points(sysm, pts)
    design = unit_slopes(net, X) * (sysm.eval_f(X) @ net.A.T)
    w, lam = _fit(design, -weight, _row_scale(weight, weighting), ridge, ridge_rel)
    trained = net.with_weights(w)
    report = TrainReport(ridge=lam, w_change_norm=float(np.linalg.norm(w - net.w)))
    report.record(design @ w + weight, weight)
    return trained, report


# -- HJB ------------------------------------------------------------------------

def lqr_gain(sysm: SystemModel) -> np.ndarray:
    """Gain ``K`` of the LQR policy ``u = -K x`` for the linearization with
    ``Q ~ x' (Hess Q(0) / 2) x`` and ``R(0)``."""
    from .oracle.linear import riccati_solve  # local import keeps layering one-way

    A, B = linearize(sysm)
    Qm = 0.5 * weight_hessian_at_origin(sysm)
    Rm = sysm.eval_R(np.zeros((1, sysm.n)))[0]
    try:
        P = riccati_solve(A, B, Qm, Rm)
    except Exception as exc:
        raise TrainingError(f"LQR initialisation failed: {exc}") from exc
    return np.linalg.solve(Rm, B.T @ P)


@dataclass
class _HjbData:
    X: np.ndarray
    Q: np.ndarray
    F: np.ndarray
    G: np.ndarray
    R: np.ndarray
    S: np.ndarray


def _hjb_data(sysm, net, X, Q) -> _HjbData:
    return _HjbData(X, Q, sysm.eval_f(X), sysm.eval_g(X), sysm.eval_R(X), unit_slopes(net, X))


def _policy_from_gradient(d: _HjbData, grad: np.ndarray) -> np.ndarray:
    gtp = np.einsum("pnk,pn->pk", d.G, grad)
    return -0.5 * np.linalg.solve(d.R, gtp[..., None])[..., 0]


def _hjb_residual(d: _HjbData, grad: np.ndarray) -> np.ndarray:
    gtp = np.einsum("pnk,pn->pk", d.G, grad)
    quad = np.einsum("pk,pk->p", gtp, np.linalg.solve(d.R, gtp[..., None])[..., 0])
    return d.Q + np.einsum("pn,pn->p", grad, d.F) - 0.25 * quad


def hjb_residual_at(sysm: SystemModel, net: ValueNet, X: np.ndarray) -> np.ndarray:
    d = _hjb_data(sysm, net, X, sysm.eval_weight(X))
    return _hjb_residual(d, (d.S * net.w) @ net.A)


def train_hjb(sysm: SystemModel, net: ValueNet, pts: CollocationSet, max_iters: int = 30,
              tol: float = 1e-9, ridge: float | None = None, *,
              ridge_rel: float = DEFAULT_RIDGE_REL, weighting: str = "relative",
              initial_policy: str = "lqr") -> tuple[ValueNet, TrainReport]:
    """Successive approximation of the HJB equation.

    Starts from the LQR policy of the linearization (``initial_policy="lqr"``)
    or from the policy induced by ``net`` itself (``"net"``).  Stops when the
    largest change of the network values at the collocation points is below
    ``tol``.
    """
    if sysm.mode != HJB:
        raise ConfigError("train_hjb needs an hjb-mode system", "mode")
    if max_iters < 1:
        raise ConfigError("max_iters must be at least 1", "trainer.max_iters")
    X, Q = _usable_points(sysm, pts)
    d = _hjb_data(sysm, net, X, Q)
    scale = _row_scale(Q, weighting)
    if initial_policy == "lqr":
        U = -X @ lqr_gain(sysm).T
    elif initial_policy == "net":
        U = _policy_from_gradient(d, (d.S * net.w) @ net.A)
    else:
        raise ConfigError(f"unknown initial policy {initial_policy!r}", "trainer.initial_policy")

    report = TrainReport(converged=False)
    w_prev = net.w
    values_prev = net_value(net, X)
    for _ in range(max_iters):
        drift = d.F + np.einsum("pnk,pk->pn", d.G, U)
        design = d.S * (drift @ net.A.T)
        cost = Q + np.einsum("pk,pkl,pl->p", U, d.R, U)
        w, lam = _fit(design, -cost, scale, ridge, ridge_rel)
        report.ridge = lam
        grad = (d.S * w) @ net.A
        report.record(_hjb_residual(d, grad), Q)
        rel = report.max_relative_residual
        if len(rel) >= 4 and rel[-1] > 10 * rel[-4]:
            raise TrainingError(f"successive approximation diverged: relative residual "
                                f"{rel[-4]:.3e} -> {rel[-1]:.3e} over 3 iterations")
        current = net.with_weights(w)
        values = net_value(current, X)
        change = float(np.max(np.abs(values - values_prev)))
        report.w_change_norm = float(np.linalg.norm(w - w_prev))
        w_prev, values_prev = w, values
        U = _policy_from_gradient(d, grad)
        if change < tol:
            report.converged = True
            break
    return net.with_weights(w_prev), report
