"""End-to-end checks of the error bounds implied by a residual certificate.

Tolerances are explicit: ``tol = 10 * (rtol * value + tail)`` where ``rtol`` is
the integrator tolerance and ``tail`` the linearised tail added to the
truncated integral.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import PreconditionError
from ..expr import eval_points
from ..net import ValueNet, net_gradient, to_expr
from ..system import SystemModel
from .integrate import LEFT_DOMAIN
from .values import OracleValue, policy_costs, true_values

TOL_FACTOR = 10.0


@dataclass
class CheckRow:
    point: tuple[float, ...]
    v_hat: float
    oracle: float | None
    bound: float | None
    slack: float | None
    status: str  # "ok", "violation", "excluded"
    note: str = ""


@dataclass
class CheckReport:
    name: str
    epsilon: float
    rows: list[CheckRow] = field(default_factory=list)

    @property
    def checked(self) -> list[CheckRow]:
        return [r for r in self.rows if r.status != "excluded"]

    @property
    def violations(self) -> list[CheckRow]:
        return [r for r in self.rows if r.status == "violation"]

    @property
    def excluded(self) -> list[CheckRow]:
        return [r for r in self.rows if r.status == "excluded"]

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def min_slack(self) -> float | None:
        s = [r.slack for r in self.checked if r.slack is not None]
        return min(s) if s else None

    @property
    def worst(self) -> CheckRow | None:
        rows = [r for r in self.checked if r.slack is not None]
        return min(rows, key=lambda r: r.slack) if rows else None

    def summary(self) -> dict:
        worst = self.worst
        return {
            "check": self.name,
            "epsilon": self.epsilon,
            "passed": self.passed,
            "points": len(self.rows),
            "checked": len(self.checked),
            "excluded": len(self.excluded),
            "violations": len(self.violations),
            "min_slack": None if self.min_slack is None else float(self.min_slack),
            "worst_point": [float(v) for v in worst.point] if worst else None,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        n = len(self.rows[0].point) if self.rows else 0
        w.writerow([f"x{i + 1}" for i in range(n)] + ["v_hat", "oracle", "bound", "slack",
                                                      "status", "note"])
        for r in self.rows:
            w.writerow([repr(v) for v in r.point] + [
                repr(r.v_hat), "" if r.oracle is None else repr(r.oracle),
                "" if r.bound is None else repr(r.bound),
                "" if r.slack is None else repr(r.slack), r.status, r.note])
        return buf.getvalue()


def _point(x) -> tuple[float, ...]:
    return tuple(float(v) for v in x)


def certified_value(net: ValueNet, X: np.ndarray) -> np.ndarray:
    """Values of the exactly corrected network (the function the verifier
    certifies)."""
    (v,) = eval_points([to_expr(net, fused=True)], np.atleast_2d(X))
    return v


def _epsilon(cert) -> float:
    """Accept a certificate or a bare epsilon; uncertified certificates are
    rejected so a report never borrows an unproved bound."""
    eps = getattr(cert, "epsilon", cert)
    if hasattr(cert, "certified") and not cert.certified:
        raise PreconditionError(f"certificate status is {cert.status!r}, not certified")
    eps = float(eps)
    if not 0 <= eps < 1:
        raise PreconditionError(f"epsilon must lie in [0, 1), got {eps}")
    return eps


def oracle_tol(ov: OracleValue, rtol: float) -> float:
    return TOL_FACTOR * (rtol * abs(ov.value) + ov.tail)


def check_value_bounds(sysm: SystemModel, net: ValueNet, cert, test_points,
                       rtol: float = 1e-10, stop_radius: float = 1e-5,
                       t_max: float = 200.0) -> CheckReport:
    """``|V_hat - V| <= eps V`` and ``|V_hat - V| <= eps / (1 - eps) V_hat``
    against integrated values; trajectories leaving the domain are excluded."""
    eps = _epsilon(cert)
    X = np.atleast_2d(np.asarray(test_points, dtype=float))
    vh = certified_value(net, X)
    ovs = true_values(sysm, X, rtol, stop_radius, t_max)
    report = CheckReport("value_bounds", eps)
    for x, v_hat, ov in zip(X, vh, ovs):
        if not ov.converged:
            report.rows.append(CheckRow(_point(x), float(v_hat), None, None, None, "excluded",
                                        ov.reason))
            continue
        V = ov.value
        tol = oracle_tol(ov, rtol)
        err = abs(v_hat - V)
        b1 = eps * V + tol
        b2 = eps / (1 - eps) * v_hat + tol
        slack = min(b1 - err, b2 - err)
        report.rows.append(CheckRow(_point(x), float(v_hat), V, min(b1, b2), slack,
                                    "ok" if slack >= 0 else "violation"))
    return report


def check_decrease(sysm: SystemModel, net: ValueNet, cert, samples) -> CheckReport:
    """Decrease condition ``DV_hat . f <= -(1 - eps) omega`` by direct evaluation."""
    eps = _epsilon(cert)
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    lie = np.einsum("pn,pn->p", net_gradient(net, X), sysm.eval_f(X))
    bound = -(1 - eps) * sysm.eval_weight(X)
    slack = bound - lie + 1e-12 * (1 + np.abs(bound))
    report = CheckReport("decrease", eps)
    vh = certified_value(net, X)
    for x, v, l, b, s in zip(X, vh, lie, bound, slack):
        report.rows.append(CheckRow(_point(x), float(v), float(l), float(b), float(s),
                                    "ok" if s >= 0 else "violation"))
    return report


def check_closed_loop(sysm: SystemModel, net: ValueNet, cert, c: float | None, test_points,
                      rtol: float = 1e-10, stop_radius: float = 1e-5, t_max: float = 200.0,
                      v_star: Callable[[np.ndarray], np.ndarray] | None = None) -> CheckReport:
    """Closed-loop checks for a certified HJB residual on ``{V_hat <= c}``:

    * the closed loop under the induced policy converges,
    * ``J(x, u) <= V_hat / (1 - eps) + tol``,
    * ``V_hat / (1 + eps) <= J(x, u) + tol`` (as ``J >= V*``),
    * ``(1 - eps) J <= V_hat / (1 - eps) + tol``,
    * with a known optimal value ``v_star``, ``|V_hat - V*| <= eps V* + tol``.

    Points outside the sublevel set are excluded.  With ``c=None`` closed
    loops that leave the domain are excluded too; inside a certified sublevel
    set any non-converging closed loop is a violation.
    """
    eps = _epsilon(cert)
    X = np.atleast_2d(np.asarray(test_points, dtype=float))
    vh = certified_value(net, X)
    report = CheckReport("closed_loop", eps)
    keep = np.ones(len(X), dtype=bool) if c is None else vh <= c
    idx = np.flatnonzero(keep)
    ovs = policy_costs(sysm, net, X[idx], rtol, stop_radius, t_max) if idx.size else []
    vstar = v_star(X) if v_star is not None else None
    results = dict(zip(idx.tolist(), ovs))
    for i, (x, v_hat) in enumerate(zip(X, vh)):
        if i not in results:
            report.rows.append(CheckRow(_point(x), float(v_hat), None, None, None, "excluded",
                                        "outside sublevel set"))
            continue
        ov = results[i]
        if not ov.converged:
            if c is None and ov.reason == LEFT_DOMAIN:
                # without a certified sublevel set nothing keeps the loop inside the domain
                report.rows.append(CheckRow(_point(x), float(v_hat), None, None, None,
                                            "excluded", ov.reason))
                continue
            report.rows.append(CheckRow(_point(x), float(v_hat), None, None, -np.inf,
                                        "violation", f"closed loop did not converge: {ov.reason}"))
            continue
        J = ov.value
        tol = oracle_tol(ov, rtol)
        upper = v_hat / (1 - eps) + tol
        slacks = [upper - J, J + tol - v_hat / (1 + eps), upper - (1 - eps) * J]
        if vstar is not None:
            slacks.append(eps * vstar[i] + tol + 1e-14 - abs(v_hat - vstar[i]))
        slack = float(min(slacks))
        report.rows.append(CheckRow(_point(x), float(v_hat), J, upper, slack,
                                    "ok" if slack >= 0 else "violation"))
    return report


def check_sublevel_containment(sysm: SystemModel, net: ValueNet, cert, c: float,
                               test_points, rtol: float = 1e-10,
                               stop_radius: float = 1e-5) -> CheckReport:
    """Inner and outer approximations of ``{V <= c}``: ``V_hat <= (1 - eps) c``
    implies ``V <= c``, and ``V <= c`` implies ``V_hat <= (1 + eps) c``."""
    eps = _epsilon(cert)
    X = np.atleast_2d(np.asarray(test_points, dtype=float))
    vh = certified_value(net, X)
    ovs = true_values(sysm, X, rtol, stop_radius)
    report = CheckReport("sublevel_containment", eps)
    for x, v_hat, ov in zip(X, vh, ovs):
        if not ov.converged:
            report.rows.append(CheckRow(_point(x), float(v_hat), None, None, None, "excluded",
                                        ov.reason))
            continue
        tol = oracle_tol(ov, rtol)
        slacks = []
        if v_hat <= (1 - eps) * c:
            slacks.append(c + tol - ov.value)
        if ov.value <= c:
            slacks.append((1 + eps) * c + tol - v_hat)
        slack = min(slacks) if slacks else None
        report.rows.append(CheckRow(_point(x), float(v_hat), ov.value, c, slack,
                                    "ok" if slack is None or slack >= 0 else "violation"))
    return report
