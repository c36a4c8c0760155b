"""Dynamical systems with stage costs on a box domain, loaded from YAML.

Schema (keys of the ``system`` mapping)::

    mode: lyapunov | hjb
    state_dim: n
    control_dim: k            # 0 (or absent) in lyapunov mode
    vars: [x1, ..., xn]       # optional, defaults to x1..xn
    f: [expr, ...]            # n drift components
    g: [[expr, ...], ...]     # n x k input matrix (hjb mode)
    omega: expr               # lyapunov mode
    Q: expr                   # hjb mode
    R: [[expr, ...], ...]     # k x k, symmetric positive definite (hjb mode)
    domain: {lo: [...], hi: [...]}

Expressions may be strings in the grammar of :mod:`rescert.expr.parser` or
plain numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml
from scipy.stats import qmc

from .errors import ConfigError, EvaluationDomainError, ParseError
from .expr import Box, Expr, eval_dual2_points, eval_points, parse

EQUILIBRIUM_TOL = 1e-12
SPOT_CHECK_POINTS = 1024

LYAPUNOV = "lyapunov"
HJB = "hjb"


@dataclass(frozen=True)
class SystemModel:
    """Autonomous (``k == 0``) or control-affine system ``f(x) + g(x) u``
    with either a Lyapunov stage cost ``omega`` or HJB costs ``Q``, ``R``."""

    mode: str
    n: int
    k: int
    var_names: tuple[str, ...]
    f: tuple[Expr, ...]
    domain: Box
    g: tuple[tuple[Expr, ...], ...] | None = None
    omega: Expr | None = None
    Q: Expr | None = None
    R: tuple[tuple[Expr, ...], ...] | None = None
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def weight(self) -> Expr:
        """The stage cost that scales the relative residual bound."""
        return self.omega if self.mode == LYAPUNOV else self.Q

    def eval_f(self, X: np.ndarray) -> np.ndarray:
        return np.stack(eval_points(self.f, X), axis=-1)

    def eval_g(self, X: np.ndarray) -> np.ndarray:
        """Shape (N, n, k)."""
        flat = [e for row in self.g for e in row]
        vals = eval_points(flat, X)
        return np.stack(vals, axis=-1).reshape(X.shape[0], self.n, self.k)

    def eval_R(self, X: np.ndarray) -> np.ndarray:
        """Shape (N, k, k)."""
        flat = [e for row in self.R for e in row]
        vals = eval_points(flat, X)
        return np.stack(vals, axis=-1).reshape(X.shape[0], self.k, self.k)

    def eval_weight(self, X: np.ndarray) -> np.ndarray:
        (v,) = eval_points([self.weight], X)
        return v


@dataclass(frozen=True)
class QuadraticLowerBound:
    """Claim ``weight(x) >= alpha * |x|^2`` on the ball of radius ``rho``;
    only meaningful once certified by the verifier."""

    alpha: float
    rho: float
    certified: bool = False

    def __post_init__(self):
        if not (self.alpha > 0 and self.rho > 0):
            raise ValueError("alpha and rho must be positive")


# -- loading --------------------------------------------------------------------

def _require(cfg: Mapping, key: str):
    if key not in cfg:
        raise ConfigError(f"missing required field '{key}'", key)
    return cfg[key]


def _parse_field(value: Any, names, fld: str) -> Expr:
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise ConfigError(f"expected an expression string or number, got {value!r}", fld)
    try:
        return parse(str(value), names)
    except ParseError as exc:
        raise ConfigError(f"cannot parse expression: {exc}", fld) from exc


def _parse_vector(values: Any, length: int, names, fld: str) -> tuple[Expr, ...]:
    if not isinstance(values, (list, tuple)):
        raise ConfigError("expected a list", fld)
    if len(values) != length:
        raise ConfigError(f"expected {length} entries, got {len(values)}", fld)
    return tuple(_parse_field(v, names, f"{fld}[{i}]") for i, v in enumerate(values))


def _parse_matrix(values: Any, rows: int, cols: int, names, fld: str):
    if not isinstance(values, (list, tuple)) or len(values) != rows:
        raise ConfigError(f"expected {rows} rows", fld)
    return tuple(_parse_vector(row, cols, names, f"{fld}[{i}]") for i, row in enumerate(values))


def _positive_int(value: Any, fld: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"expected an integer >= {minimum}, got {value!r}", fld)
    return value


def _spot_points(domain: Box) -> np.ndarray:
    lo, hi = (np.asarray(a, dtype=float) for a in (domain.lo, domain.hi))
    sample = qmc.LatinHypercube(d=domain.n, seed=0).random(SPOT_CHECK_POINTS)
    X = lo + sample * (hi - lo)
    return X[np.linalg.norm(X, axis=1) > 1e-6]


def _check_value_at_origin(e: Expr, n: int, fld: str, what: str):
    v = eval_points([e], np.zeros((1, n)))[0][0]
    if abs(v) > EQUILIBRIUM_TOL:
        raise ConfigError(f"{what} at the origin is {v:.3e}, expected 0", fld)


def _validate(sysm: SystemModel) -> None:
    n = sysm.n
    origin = np.zeros((1, n))
    try:
        f0 = sysm.eval_f(origin)[0]
    except EvaluationDomainError as exc:
        raise ConfigError(f"f cannot be evaluated at the origin: {exc}", "f") from exc
    if np.max(np.abs(f0)) > EQUILIBRIUM_TOL:
        raise ConfigError(f"equilibrium violation: f(0) = {f0.tolist()}", "f")
    fld = "omega" if sysm.mode == LYAPUNOV else "Q"
    _check_value_at_origin(sysm.weight, n, fld, fld)

    X = _spot_points(sysm.domain)
    try:
        w = sysm.eval_weight(X)
    except EvaluationDomainError as exc:
        raise ConfigError(f"cannot be evaluated on the domain: {exc}", fld) from exc
    if np.any(w <= 0):
        bad = X[np.argmin(w)]
        raise ConfigError(f"not positive at sampled point {bad.tolist()}", fld)

    if sysm.mode == HJB:
        Rs = sysm.eval_R(np.vstack([origin, X]))
        asym = np.max(np.abs(Rs - np.swapaxes(Rs, 1, 2)))
        if asym > EQUILIBRIUM_TOL * (1 + np.max(np.abs(Rs))):
            raise ConfigError("R is not symmetric", "R")
        if np.min(np.linalg.eigvalsh(Rs)) <= 0:
            raise ConfigError("R is not positive definite at a sampled point", "R")


def system_from_mapping(cfg: Mapping) -> SystemModel:
    """Build and validate a :class:`SystemModel` from a parsed config mapping."""
    if not isinstance(cfg, Mapping):
        raise ConfigError("system config must be a mapping", "system")
    mode = _require(cfg, "mode")
    if mode not in (LYAPUNOV, HJB):
        raise ConfigError(f"mode must be '{LYAPUNOV}' or '{HJB}', got {mode!r}", "mode")
    n = _positive_int(_require(cfg, "state_dim"), "state_dim", 1)
    k = cfg.get("control_dim", 0)
    k = _positive_int(k, "control_dim", 1 if mode == HJB else 0)
    if mode == LYAPUNOV and k != 0:
        raise ConfigError("lyapunov mode requires control_dim 0", "control_dim")

    names = cfg.get("vars", [f"x{i + 1}" for i in range(n)])
    if not isinstance(names, (list, tuple)) or len(names) != n:
        raise ConfigError(f"expected {n} variable names", "vars")
    if len(set(names)) != n or not all(isinstance(s, str) and s.isidentifier() for s in names):
        raise ConfigError("variable names must be distinct identifiers", "vars")
    try:
        parse("0", names)
    except ValueError as exc:
        raise ConfigError(str(exc), "vars") from exc
    names = tuple(names)

    f = _parse_vector(_require(cfg, "f"), n, names, "f")
    dom = _require(cfg, "domain")
    if not isinstance(dom, Mapping):
        raise ConfigError("domain must have 'lo' and 'hi'", "domain")
    lo = dom.get("lo")
    hi = dom.get("hi")
    if not (isinstance(lo, (list, tuple)) and isinstance(hi, (list, tuple))
            and len(lo) == n and len(hi) == n):
        raise ConfigError(f"domain.lo and domain.hi must have {n} entries", "domain")
    try:
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
    except (TypeError, ValueError) as exc:
        raise ConfigError("domain bounds must be numbers", "domain") from exc
    if not all(a < 0 < b for a, b in zip(lo, hi)):
        raise ConfigError("the origin must lie in the interior of the domain", "domain")
    domain = Box(lo, hi)

    if mode == LYAPUNOV:
        for key in ("g", "Q", "R"):
            if key in cfg:
                raise ConfigError(f"'{key}' is not allowed in lyapunov mode", key)
        omega = _parse_field(_require(cfg, "omega"), names, "omega")
        sysm = SystemModel(mode, n, 0, names, f, domain, omega=omega, source=dict(cfg))
    else:
        if "omega" in cfg:
            raise ConfigError("'omega' is not allowed in hjb mode", "omega")
        g = _parse_matrix(_require(cfg, "g"), n, k, names, "g")
        Q = _parse_field(_require(cfg, "Q"), names, "Q")
        R = _parse_matrix(_require(cfg, "R"), k, k, names, "R")
        sysm = SystemModel(mode, n, k, names, f, domain, g=g, Q=Q, R=R, source=dict(cfg))
    _validate(sysm)
    return sysm


def load_system(source: str | Path | Mapping) -> SystemModel:
    """Load a system from a mapping, a YAML string, or a path to a YAML file.

    A top-level ``system`` key is unwrapped, so full run configs work too.
    """
    if isinstance(source, Path):
        try:
            text = source.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {source}: {exc}", "path") from exc
        source = text
    if isinstance(source, str):
        try:
            source = yaml.safe_load(source)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}", "config") from exc
    if isinstance(source, Mapping) and "system" in source:
        source = source["system"]
    return system_from_mapping(source)


def linearize(sysm: SystemModel) -> tuple[np.ndarray, np.ndarray]:
    """``A = Df(0)`` and ``B = g(0)`` (shape (n, 0) for autonomous systems)."""
    origin = np.zeros((1, sysm.n))
    A = np.stack([d.g[0] for d in eval_dual2_points(sysm.f, origin)])
    if sysm.k == 0:
        return A, np.zeros((sysm.n, 0))
    return A, sysm.eval_g(origin)[0]


def weight_hessian_at_origin(sysm: SystemModel) -> np.ndarray:
    (d,) = eval_dual2_points([sysm.weight], np.zeros((1, sysm.n)))
    return d.h[0]
