"""Expression trees with point, forward-mode and interval evaluation."""

from .evaluate import (Dual2, ExprList, IntervalDual2, eval, eval_dual2, eval_dual2_points,
                       eval_interval, eval_interval_boxes, eval_interval_dual2,
                       eval_interval_dual2_boxes, eval_points)
from .interval import Box, IArray, Interval
from .nodes import (Expr, TanhLayer, as_expr, const, cos, diff, exp, gradient, hessian_entries,
                    layer, maximum, minimum, pretty, sin, sqrt, structurally_equal, sum_exprs,
                    tanh, var)
from .parser import parse

__all__ = [
    "Box", "Dual2", "Expr", "ExprList", "IArray", "Interval", "IntervalDual2", "TanhLayer",
    "as_expr", "const", "cos", "diff", "eval", "eval_dual2", "eval_dual2_points",
    "eval_interval", "eval_interval_boxes", "eval_interval_dual2", "eval_interval_dual2_boxes",
    "eval_points", "exp", "gradient", "hessian_entries", "layer", "maximum", "minimum", "parse",
    "pretty", "sin", "sqrt", "structurally_equal", "sum_exprs", "tanh", "var",
]
