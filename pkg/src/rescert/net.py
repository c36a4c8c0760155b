"""One-hidden-layer tanh value network with bias correction.

``V(x) = w . tanh(A x + b) - c1 . x - c0`` where ``c0`` and ``c1`` are the raw
network's value and gradient at the origin, so the corrected network and its
gradient vanish there.  Only ``w`` is trained; ``A`` and ``b`` are random and
fixed.

For verification the network is lowered to a fused ``layer`` expression that
applies the correction per unit in exact arithmetic,
``sum_i w_i (tanh(a_i.x + b_i) - tanh(b_i) - sech^2(b_i) a_i.x)``, which is the
same function without the rounding of the stored ``c0``, ``c1``.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NetFormatError
from .expr import Dual2, Expr, TanhLayer, const, layer, sum_exprs, tanh, var

FORMAT_NAME = "rescert-net"
FORMAT_VERSION = 1


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ValueNet:
    A: np.ndarray
    b: np.ndarray
    w: np.ndarray
    c0: float = 0.0
    c1: np.ndarray | None = None
    seed: int | None = None
    scale: float | None = None
    _layer_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = _frozen(self.A)
        if A.ndim != 2:
            raise ValueError("A must be an (m, n) matrix")
        m, n = A.shape
        b = _frozen(self.b)
        w = _frozen(self.w)
        c1 = _frozen(np.zeros(n) if self.c1 is None else self.c1)
        if b.shape != (m,) or w.shape != (m,) or c1.shape != (n,):
            raise ValueError("inconsistent network dimensions")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "c0", float(self.c0))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def with_weights(self, w) -> ValueNet:
        """Same hidden layer, new output weights, correction refreshed."""
        return refresh_correction(ValueNet(self.A, self.b, w, seed=self.seed, scale=self.scale))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ValueNet):
            return NotImplemented
        return (self.seed == other.seed and self.scale == other.scale
                and np.array_equal(self.A, other.A) and np.array_equal(self.b, other.b)
                and np.array_equal(self.w, other.w) and self.c0 == other.c0
                and np.array_equal(self.c1, other.c1))

    __hash__ = None


def init_net(n: int, m: int, seed: int, scale: float = 1.0) -> ValueNet:
    """Hidden weights and biases i.i.d. uniform on ``[-scale, scale]``."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    if not scale > 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng(seed)
    A = rng.uniform(-scale, scale, size=(m, n))
    b = rng.uniform(-scale, scale, size=m)
    return ValueNet(A, b, np.zeros(m), seed=seed, scale=scale)


def refresh_correction(net: ValueNet) -> ValueNet:
    tb = np.tanh(net.b)
    c0 = float(net.w @ tb)
    c1 = (net.w * (1.0 - tb * tb)) @ net.A
    return ValueNet(net.A, net.b, net.w, c0, c1, seed=net.seed, scale=net.scale)


def net_eval2(net: ValueNet, x) -> Dual2:
    """Closed-form value, gradient and Hessian of the corrected network at a
    point (n,) or at each row of an (N, n) array."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    t = np.tanh(X @ net.A.T + net.b)
    s = 1.0 - t * t
    value = t @ net.w - X @ net.c1 - net.c0
    grad = (s * net.w) @ net.A - net.c1
    curv = net.w * (-2.0 * t * s)
    hess = np.einsum("pi,ij,ik->pjk", curv, net.A, net.A)
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))  # exactly symmetric
    if single:
        return Dual2(float(value[0]), grad[0], hess[0])
    return Dual2(value, grad, hess)


def net_value(net: ValueNet, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.tanh(X @ net.A.T + net.b) @ net.w - X @ net.c1 - net.c0


def net_gradient(net: ValueNet, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t = np.tanh(X @ net.A.T + net.b)
    return ((1.0 - t * t) * net.w) @ net.A - net.c1


def layer_params(net: ValueNet) -> TanhLayer:
    """Exactly corrected fused layer for this network (cached per net)."""
    params = net._layer_cache.get("params")
    if params is None:
        params = TanhLayer(net.A, net.b, net.w, corrected=True)
        net._layer_cache["params"] = params
    return params


def to_expr(net: ValueNet, fused: bool = False) -> Expr:
    """Expression computing the corrected network.

    The default is a plain tree of ``tanh`` nodes and affine combinations using
    the stored ``c0``, ``c1``.  ``fused=True`` returns the single exactly
    corrected layer node used by the verifier.
    """
    if fused:
        return layer(layer_params(net))
    units = []
    for i in range(net.m):
        pre = sum_exprs([const(float(net.A[i, j])) * var(j) for j in range(net.n)]
                        + [const(float(net.b[i]))])
        units.append(const(float(net.w[i])) * tanh(pre))
    linear = [const(float(net.c1[j])) * var(j) for j in range(net.n)]
    return sum_exprs(units) - sum_exprs(linear + [const(net.c0)])


def gradient_exprs(net: ValueNet) -> list[Expr]:
    """Per-unit chain-rule gradient components of the corrected network."""
    params = layer_params(net)
    return [layer(params, (j,)) for j in range(net.n)]


# -- persistence ----------------------------------------------------------------

def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode(text, count: int, what: str) -> np.ndarray:
    try:
        raw = base64.b64decode(text, validate=True)
    except (TypeError, ValueError) as exc:
        raise NetFormatError(f"{what}: invalid base64 payload") from exc
    if len(raw) != 8 * count:
        raise NetFormatError(f"{what}: expected {count} float64 values, got {len(raw) / 8:g}")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def net_to_dict(net: ValueNet, metadata: dict | None = None) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "n": net.n,
        "m": net.m,
        "seed": net.seed,
        "scale": net.scale,
        "A": _encode(net.A),
        "b": _encode(net.b),
        "w": _encode(net.w),
        "c0": _encode(np.array([net.c0])),
        "c1": _encode(net.c1),
        "metadata": metadata or {},
    }


def net_from_dict(doc) -> ValueNet:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise NetFormatError("not a network file")
    if doc.get("version") != FORMAT_VERSION:
        raise NetFormatError(f"unsupported version {doc.get('version')!r}, "
                             f"expected {FORMAT_VERSION}")
    try:
        n, m = int(doc["n"]), int(doc["m"])
        A = _decode(doc["A"], m * n, "A").reshape(m, n)
        b = _decode(doc["b"], m, "b")
        w = _decode(doc["w"], m, "w")
        c0 = float(_decode(doc["c0"], 1, "c0")[0])
        c1 = _decode(doc["c1"], n, "c1")
    except KeyError as exc:
        raise NetFormatError(f"missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise NetFormatError(f"malformed field: {exc}") from exc
    return ValueNet(A, b, w, c0, c1, seed=doc.get("seed"), scale=doc.get("scale"))


def save_net(net: ValueNet, path: str | Path, metadata: dict | None = None) -> None:
    Path(path).write_text(json.dumps(net_to_dict(net, metadata), indent=1) + "\n")


def load_net_file(path: str | Path) -> tuple[ValueNet, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise NetFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise NetFormatError(f"malformed network file {path}: {exc}") from exc
    return net_from_dict(doc), doc.get("metadata", {}) if isinstance(doc, dict) else {}


def load_net(path: str | Path) -> ValueNet:
    return load_net_file(path)[0]
