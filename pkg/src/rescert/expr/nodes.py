"""Expression trees.

An :class:`Expr` is an immutable node with an operator tag, child nodes and an
optional payload.  Trees may share subtrees (they are DAGs after symbolic
differentiation); evaluators memoise on node identity.

Besides the elementary nodes there is one fused node, ``layer``, holding a
derivative of a bias-corrected hidden tanh layer (see :class:`TanhLayer`).  It
keeps a 400-unit network a single node, closed under differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..errors import NotDifferentiableError

CONST = "const"
VAR = "var"
NEG = "neg"
ADD = "add"
MUL = "mul"
DIV = "div"
POW = "pow"
SIN = "sin"
COS = "cos"
TANH = "tanh"
EXP = "exp"
SQRT = "sqrt"
MIN = "min"
MAX = "max"
LAYER = "layer"

UNARY_FUNCS = (SIN, COS, TANH, EXP, SQRT)
BINARY_FUNCS = (MIN, MAX)


@dataclass(frozen=True, eq=False)
class TanhLayer:
    """Parameters of ``x -> sum_i w_i * psi_i(x)`` with ``psi_i`` built from
    ``tanh(a_i . x + b_i)``.

    With ``corrected`` set, each unit is replaced by its bias-corrected form
    ``tanh(a_i.x + b_i) - tanh(b_i) - sech^2(b_i) a_i.x`` so the layer and its
    gradient vanish at the origin exactly (not just up to rounding of stored
    correction constants).
    """

    A: np.ndarray
    b: np.ndarray
    w: np.ndarray
    corrected: bool = True
    _coef_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = np.ascontiguousarray(self.A, dtype=float)
        b = np.ascontiguousarray(self.b, dtype=float)
        w = np.ascontiguousarray(self.w, dtype=float)
        if A.ndim != 2 or b.shape != (A.shape[0],) or w.shape != (A.shape[0],):
            raise ValueError("layer shapes must be A (m,n), b (m,), w (m,)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "w", w)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def coefficients(self, dirs: tuple[int, ...]) -> np.ndarray:
        """``w * prod_{j in dirs} A[:, j]`` (floating point, cached)."""
        c = self._coef_cache.get(dirs)
        if c is None:
            c = self.w.copy()
            for j in dirs:
                c = c * self.A[:, j]
            self._coef_cache[dirs] = c
        return c


class Expr:
    """Immutable expression node.

    ``data`` is the float for constants, the index for variables, the integer
    exponent for ``pow`` and ``(TanhLayer, dirs)`` for layer nodes.
    """

    __slots__ = ("op", "args", "data", "_topo", "__weakref__")

    def __init__(self, op: str, args: Sequence["Expr"] = (), data=None):
        self.op = op
        self.args = tuple(args)
        self.data = data
        self._topo = None

    # -- construction sugar -------------------------------------------------
    def __add__(self, other):
        return Expr(ADD, (self, as_expr(other)))

    def __radd__(self, other):
        return Expr(ADD, (as_expr(other), self))

    def __sub__(self, other):
        return Expr(ADD, (self, Expr(NEG, (as_expr(other),))))

    def __rsub__(self, other):
        return Expr(ADD, (as_expr(other), Expr(NEG, (self,))))

    def __mul__(self, other):
        return Expr(MUL, (self, as_expr(other)))

    def __rmul__(self, other):
        return Expr(MUL, (as_expr(other), self))

    def __truediv__(self, other):
        return Expr(DIV, (self, as_expr(other)))

    def __rtruediv__(self, other):
        return Expr(DIV, (as_expr(other), self))

    def __neg__(self):
        return Expr(NEG, (self,))

    def __pow__(self, k):
        if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
            raise TypeError("only integer exponents are supported")
        return Expr(POW, (self,), int(k))

    def __repr__(self) -> str:
        return f"Expr({pretty(self)})"

    def topo_order(self) -> list["Expr"]:
        if self._topo is None:
            self._topo = topo_order([self])
        return self._topo


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool):
        return const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def const(c: float) -> Expr:
    return Expr(CONST, (), float(c))


def var(i: int) -> Expr:
    if i < 0:
        raise ValueError("variable index must be non-negative")
    return Expr(VAR, (), int(i))


def sin(e) -> Expr:
    return Expr(SIN, (as_expr(e),))


def cos(e) -> Expr:
    return Expr(COS, (as_expr(e),))


def tanh(e) -> Expr:
    return Expr(TANH, (as_expr(e),))


def exp(e) -> Expr:
    return Expr(EXP, (as_expr(e),))


def sqrt(e) -> Expr:
    return Expr(SQRT, (as_expr(e),))


def minimum(a, b) -> Expr:
    return Expr(MIN, (as_expr(a), as_expr(b)))


def maximum(a, b) -> Expr:
    return Expr(MAX, (as_expr(a), as_expr(b)))


def layer(params: TanhLayer, dirs: Iterable[int] = ()) -> Expr:
    """Partial derivative ``d^{|dirs|} / dx_dirs`` of a tanh layer."""
    return Expr(LAYER, (), (params, tuple(sorted(int(j) for j in dirs))))


def sum_exprs(terms: Sequence) -> Expr:
    """Balanced binary sum; keeps tree depth logarithmic for long sums."""
    terms = [as_expr(t) for t in terms]
    if not terms:
        return const(0.0)
    while len(terms) > 1:
        nxt = [Expr(ADD, (terms[i], terms[i + 1])) for i in range(0, len(terms) - 1, 2)]
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    return terms[0]


def topo_order(roots: Sequence[Expr]) -> list[Expr]:
    """Post-order of all distinct nodes reachable from ``roots`` (iterative)."""
    seen: set[int] = set()
    order: list[Expr] = []
    for root in roots:
        if id(root) in seen:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in reversed(node.args):
                if id(child) not in seen:
                    stack.append((child, False))
    return order


def max_var_index(e: Expr) -> int:
    """Largest variable index referenced (-1 for constant expressions)."""
    best = -1
    for node in e.topo_order():
        if node.op == VAR:
            best = max(best, node.data)
        elif node.op == LAYER:
            best = max(best, node.data[0].n - 1)
    return best


def node_count(e: Expr) -> int:
    return len(e.topo_order())


def structurally_equal(a: Expr, b: Expr) -> bool:
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        if x is y:
            continue
        if x.op != y.op or len(x.args) != len(y.args):
            return False
        if x.op == LAYER:
            (la, da), (lb, db) = x.data, y.data
            if da != db or la.corrected != lb.corrected:
                return False
            if not (np.array_equal(la.A, lb.A) and np.array_equal(la.b, lb.b)
                    and np.array_equal(la.w, lb.w)):
                return False
        elif x.data != y.data:
            return False
        stack.extend(zip(x.args, y.args))
    return True


# -- pretty printing ---------------------------------------------------------

_PREC = {ADD: 1, MUL: 2, DIV: 2, NEG: 3, POW: 4}


def _prec(e: Expr) -> int:
    if e.op == CONST and e.data < 0:
        return 0
    return _PREC.get(e.op, 5)


def pretty(e: Expr, names: Sequence[str] | None = None) -> str:
    """Render in the parser's grammar; ``parse(pretty(e))`` rebuilds ``e``
    for every tree the parser can produce."""
    text: dict[int, str] = {}

    def wrap(child: Expr, min_prec: int) -> str:
        s = text[id(child)]
        return f"({s})" if _prec(child) < min_prec else s

    for node in e.topo_order():
        op = node.op
        if op == CONST:
            s = repr(node.data)
        elif op == VAR:
            s = names[node.data] if names is not None else f"x{node.data + 1}"
        elif op == NEG:
            s = "-" + wrap(node.args[0], 3)
        elif op == ADD:
            a, b = node.args
            if b.op == NEG:
                s = wrap(a, 1) + " - " + wrap(b.args[0], 2)
            else:
                s = wrap(a, 1) + " + " + wrap(b, 2)
        elif op in (MUL, DIV):
            sym = " * " if op == MUL else " / "
            s = wrap(node.args[0], 2) + sym + wrap(node.args[1], 3)
        elif op == POW:
            s = wrap(node.args[0], 5) + "^" + str(node.data)
        elif op in UNARY_FUNCS:
            s = f"{op}({text[id(node.args[0])]})"
        elif op in BINARY_FUNCS:
            s = f"{op}({text[id(node.args[0])]}, {text[id(node.args[1])]})"
        elif op == LAYER:
            params, dirs = node.data
            tag = "".join(str(j + 1) for j in dirs)
            s = f"layer{'_d' + tag if tag else ''}[{params.m} units]"
        else:  # pragma: no cover
            raise ValueError(f"unknown op {op}")
        text[id(node)] = s
    return text[id(e)]


# -- symbolic differentiation ------------------------------------------------

ZERO = const(0.0)
ONE = const(1.0)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return e.op == CONST and (value is None or e.data == value)


def _add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return const(a.data + b.data)
    return Expr(ADD, (a, b))


def _neg(a: Expr) -> Expr:
    if _is_const(a):
        return const(-a.data)
    if a.op == NEG:
        return a.args[0]
    return Expr(NEG, (a,))


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return const(a.data * b.data)
    return Expr(MUL, (a, b))


def diff(e: Expr, k: int, _memo: dict | None = None) -> Expr:
    """Exact partial derivative with respect to variable ``k``.

    Products of constants with 0/1 are folded so repeated differentiation
    of residual trees stays small.  Raises NotDifferentiableError at min/max.
    """
    memo: dict[int, Expr] = {} if _memo is None else _memo
    for node in e.topo_order():
        if id(node) in memo:
            continue
        op, args = node.op, node.args
        d = [memo[id(a)] for a in args]
        if op == CONST:
            r = ZERO
        elif op == VAR:
            r = ONE if node.data == k else ZERO
        elif op == NEG:
            r = _neg(d[0])
        elif op == ADD:
            r = _add(d[0], d[1])
        elif op == MUL:
            r = _add(_mul(d[0], args[1]), _mul(args[0], d[1]))
        elif op == DIV:
            a, b = args
            first = Expr(DIV, (d[0], b)) if not _is_const(d[0], 0.0) else ZERO
            second = ZERO
            if not _is_const(d[1], 0.0):
                second = _neg(Expr(DIV, (_mul(a, d[1]), Expr(POW, (b,), 2))))
            r = _add(first, second)
        elif op == POW:
            n = node.data
            if n == 0 or _is_const(d[0], 0.0):
                r = ZERO
            else:
                base = args[0] if n - 1 != 1 else args[0]
                power = ONE if n == 1 else (base if n == 2 else Expr(POW, (base,), n - 1))
                r = _mul(_mul(const(float(n)), power), d[0])
        elif op == SIN:
            r = _mul(Expr(COS, args), d[0])
        elif op == COS:
            r = _neg(_mul(Expr(SIN, args), d[0]))
        elif op == TANH:
            r = _mul(_add(ONE, _neg(Expr(POW, (node,), 2))), d[0])
        elif op == EXP:
            r = _mul(node, d[0])
        elif op == SQRT:
            r = ZERO if _is_const(d[0], 0.0) else Expr(DIV, (d[0], _mul(const(2.0), node)))
        elif op in BINARY_FUNCS:
            raise NotDifferentiableError(f"{op} is not differentiable")
        elif op == LAYER:
            params, dirs = node.data
            r = layer(params, dirs + (k,)) if k < params.n else ZERO
        else:  # pragma: no cover
            raise ValueError(f"unknown op {op}")
        memo[id(node)] = r
    return memo[id(e)]


def gradient(e: Expr, n: int) -> list[Expr]:
    return [diff(e, k) for k in range(n)]


def hessian_entries(e: Expr, n: int) -> dict[tuple[int, int], Expr]:
    """Upper-triangular second partials ``{(j, k): d2e/dxj dxk, j <= k}``."""
    first = gradient(e, n)
    return {(j, k): diff(first[j], k) for j in range(n) for k in range(j, n)}
