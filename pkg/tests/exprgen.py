"""Random smooth expressions for fuzz and property tests."""

from __future__ import annotations

import numpy as np

from rescert.expr import (Expr, TanhLayer, const, cos, exp, layer, maximum, minimum, sin, sqrt,
                          tanh, var)

SMOOTH_OPS = ("add", "sub", "mul", "div", "pow", "sin", "cos", "tanh", "exp", "sqrt", "neg")


def random_expr(rng: np.random.Generator, n: int, depth: int = 4, smooth: bool = True,
                allow_layer: bool = False) -> Expr:
    """Domain-safe random tree: divisions and square roots only see arguments
    bounded away from zero, so any box is inside the evaluation domain."""
    if depth == 0 or rng.random() < 0.25:
        if allow_layer and rng.random() < 0.2:
            m = int(rng.integers(1, 6))
            params = TanhLayer(rng.uniform(-1.5, 1.5, (m, n)), rng.uniform(-1, 1, m),
                               rng.uniform(-2, 2, m), corrected=bool(rng.random() < 0.5))
            return layer(params, tuple(int(j) for j in rng.integers(0, n, rng.integers(0, 3))))
        if rng.random() < 0.6:
            return var(int(rng.integers(n)))
        return const(round(float(rng.uniform(-2, 2)), 3))
    ops = SMOOTH_OPS if smooth else SMOOTH_OPS + ("min", "max")
    op = ops[int(rng.integers(len(ops)))]
    sub = lambda: random_expr(rng, n, depth - 1, smooth, allow_layer)  # noqa: E731
    if op == "add":
        return sub() + sub()
    if op == "sub":
        return sub() - sub()
    if op == "mul":
        return sub() * sub()
    if op == "div":
        return sub() / (1.5 + sin(sub()) ** 2)
    if op == "pow":
        return sub() ** int(rng.integers(0, 5))
    if op == "neg":
        return -sub()
    if op == "sin":
        return sin(sub())
    if op == "cos":
        return cos(sub())
    if op == "tanh":
        return tanh(sub())
    if op == "exp":
        return exp(tanh(sub()))
    if op == "sqrt":
        return sqrt(1.0 + sub() ** 2)
    if op == "min":
        return minimum(sub(), sub())
    return maximum(sub(), sub())


def random_flat_at_origin(rng: np.random.Generator, n: int, terms: int = 3) -> Expr:
    """Smooth h with h(0) = 0 and Dh(0) = 0 exactly: a sum of
    ``x_j * x_k * e(x)`` terms."""
    total = None
    for _ in range(terms):
        j, k = (int(v) for v in rng.integers(0, n, 2))
        t = var(j) * var(k) * random_expr(rng, n, depth=3)
        total = t if total is None else total + t
    return total


def random_boxes(rng: np.random.Generator, n: int, count: int, scale: float = 2.0):
    a = rng.uniform(-scale, scale, (count, n))
    w = rng.uniform(0, 1, (count, n)) * rng.choice([1e-6, 1e-2, 0.3, 1.0], (count, 1))
    return a, a + w


def points_in(rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return lo + (hi - lo) * rng.random(lo.shape)
