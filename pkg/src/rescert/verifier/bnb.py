"""Breadth-first interval branch and bound.

Boxes are processed a generation at a time.  Each generation is evaluated in
fixed-size chunks (optionally on worker threads) and the results are
concatenated in order, so verdicts, witnesses and statistics do not depend on
the number of workers.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..expr import Box, Expr
from ..expr.interval import up
from .goals import CombinationGoal, Goal

CERTIFIED = "certified"
REFUTED = "refuted"
BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class BnbConfig:
    max_boxes: int = 2_000_000
    max_depth: int = 60
    min_box_width: float = 1e-9
    workers: int = 1
    chunk_size: int = 2048

    def __post_init__(self):
        if not self.min_box_width > 0:
            raise ValueError("min_box_width must be positive")
        if self.max_boxes < 1 or self.max_depth < 0 or self.workers < 1 or self.chunk_size < 1:
            raise ValueError("invalid branch-and-bound limits")


@dataclass
class Witness:
    """Counterexample: the goal's interval lower bound is positive on ``box``
    (a degenerate box when the witness is a single point)."""

    box: Box
    lower_bound: float

    def to_dict(self) -> dict:
        return {"lo": list(self.box.lo), "hi": list(self.box.hi), "lower_bound": self.lower_bound}

    @classmethod
    def from_dict(cls, d: dict) -> "Witness":
        return cls(Box(tuple(d["lo"]), tuple(d["hi"])), float(d["lower_bound"]))


@dataclass
class Leaves:
    """Final partition of a branch-and-bound run, reusable as a warm start."""

    lo: np.ndarray
    hi: np.ndarray
    depth: np.ndarray
    data: object = None  # goal data for the non-skipped boxes, aligned with ``live``
    live: np.ndarray | None = None


@dataclass
class Certificate:
    mode: str
    status: str
    epsilon: float | None = None
    rho: float | None = None
    alpha: float | None = None
    boxes_processed: int = 0
    max_depth: int = 0
    wall_time: float = 0.0
    witness: Witness | None = None
    region: Box | None = None
    details: dict = field(default_factory=dict)
    parts: list["Certificate"] = field(default_factory=list)
    leaves: Leaves | None = field(default=None, repr=False, compare=False)

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "status": self.status,
            "epsilon": self.epsilon,
            "rho": self.rho,
            "alpha": self.alpha,
            "boxes_processed": self.boxes_processed,
            "max_depth": self.max_depth,
            "wall_time": self.wall_time,
            "witness": self.witness.to_dict() if self.witness else None,
            "region": {"lo": list(self.region.lo), "hi": list(self.region.hi)}
            if self.region else None,
            "details": self.details,
            "parts": [p.to_dict() for p in self.parts],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        region = d.get("region")
        return cls(
            mode=d["mode"], status=d["status"], epsilon=d.get("epsilon"), rho=d.get("rho"),
            alpha=d.get("alpha"), boxes_processed=int(d.get("boxes_processed", 0)),
            max_depth=int(d.get("max_depth", 0)), wall_time=float(d.get("wall_time", 0.0)),
            witness=Witness.from_dict(d["witness"]) if d.get("witness") else None,
            region=Box(tuple(region["lo"]), tuple(region["hi"])) if region else None,
            details=dict(d.get("details", {})),
            parts=[cls.from_dict(p) for p in d.get("parts", [])],
        )


@dataclass
class VerifyTask:
    """Prove ``goal <= 0`` on ``region``, skipping boxes strictly inside the
    ball of radius ``excluded_ball_radius``.  ``goal`` is an expression or a
    :class:`Goal`."""

    goal: Expr | Goal
    region: Box
    excluded_ball_radius: float = 0.0
    strict: bool = False

    def goal_object(self) -> Goal:
        if isinstance(self.goal, Goal):
            return self.goal
        return CombinationGoal([self.goal], [[1.0]], self.region.n)


def inside_ball(lo: np.ndarray, hi: np.ndarray, radius: float) -> np.ndarray:
    """Boxes contained in the open ball of the given radius (rounded safely)."""
    if radius <= 0:
        return np.zeros(lo.shape[0], dtype=bool)
    far = np.maximum(lo * lo, hi * hi)
    sq = up(np.sum(far, axis=1) * (1 + 4 * lo.shape[1] * 2.0**-53))
    return sq < radius * radius * (1 - 1e-12)


def _evaluate(goal: Goal, lo, hi, cfg: BnbConfig, pool):
    chunks = [(lo[i:i + cfg.chunk_size], hi[i:i + cfg.chunk_size])
              for i in range(0, lo.shape[0], cfg.chunk_size)]
    if pool is None or len(chunks) == 1:
        parts = [goal.evaluate(a, b) for a, b in chunks]
    else:
        parts = list(pool.map(lambda ab: goal.evaluate(*ab), chunks))
    return parts[0] if len(parts) == 1 else goal.concat(parts)


def _split(lo, hi):
    widths = hi - lo
    dim = np.argmax(widths, axis=1)
    rows = np.arange(lo.shape[0])
    mid = 0.5 * (lo[rows, dim] + hi[rows, dim])
    lo1, hi1 = lo.copy(), hi.copy()
    lo2, hi2 = lo.copy(), hi.copy()
    hi1[rows, dim] = mid
    lo2[rows, dim] = mid
    # interleave children so siblings stay adjacent
    new_lo = np.empty((2 * lo.shape[0], lo.shape[1]))
    new_hi = np.empty_like(new_lo)
    new_lo[0::2], new_lo[1::2] = lo1, lo2
    new_hi[0::2], new_hi[1::2] = hi1, hi2
    return new_lo, new_hi


def bnb_prove(task: VerifyTask, cfg: BnbConfig = BnbConfig(), mode: str = "goal",
              warm: Leaves | None = None, keep_leaves: bool = False) -> Certificate:
    """Prove ``task.goal <= 0`` (``< 0`` with ``task.strict``) on the region."""
    start = time.perf_counter()
    goal = task.goal_object()
    if warm is not None:
        lo, hi, depth = warm.lo.copy(), warm.hi.copy(), warm.depth.copy()
        cached = warm.data
        cached_live = warm.live
    else:
        lo, hi = (a.astype(float) for a in task.region.as_arrays())
        depth = np.zeros(1, dtype=int)
        cached, cached_live = None, None

    processed = 0
    max_depth_seen = int(depth.max()) if depth.size else 0
    leaf_lo, leaf_hi, leaf_depth, leaf_data, leaf_live = [], [], [], [], []
    stalled = False
    witness = None
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        while lo.shape[0] > 0:
            if processed + lo.shape[0] > cfg.max_boxes:
                stalled = True
                break
            processed += lo.shape[0]
            skip = inside_ball(lo, hi, task.excluded_ball_radius)
            live = ~skip
            if cached is not None and np.array_equal(live, cached_live):
                data = cached
                cached = None
            else:
                cached = None
                live_idx = np.flatnonzero(live)
                data = _evaluate(goal, lo[live_idx], hi[live_idx], cfg, pool) \
                    if live_idx.size else None
            ub = np.full(lo.shape[0], -np.inf)
            lb = np.full(lo.shape[0], -np.inf)
            clb = np.full(lo.shape[0], -np.inf)
            if data is not None:
                ub[live], lb[live], clb[live] = goal.bounds(data)

            bad_box = lb > 0
            bad_ctr = clb > 0
            if task.excluded_ball_radius > 0 and np.any(bad_ctr):
                # a centre sample inside the excluded ball is not a counterexample
                ctr = 0.5 * (lo + hi)
                bad_ctr &= np.sum(ctr * ctr, axis=1) >= task.excluded_ball_radius ** 2
            if np.any(bad_box | bad_ctr):
                i = int(np.flatnonzero(bad_box | bad_ctr)[0])
                if bad_box[i]:
                    witness = Witness(Box(tuple(lo[i]), tuple(hi[i])), float(lb[i]))
                else:
                    c = 0.5 * (lo[i] + hi[i])
                    c = np.minimum(np.maximum(c, lo[i]), hi[i])
                    witness = Witness(Box(tuple(c), tuple(c)), float(clb[i]))
                break

            done = (ub < 0) if task.strict else (ub <= 0)
            done |= skip
            open_ = ~done
            too_small = open_ & ((np.max(hi - lo, axis=1) < cfg.min_box_width)
                                 | (depth >= cfg.max_depth))
            if np.any(too_small):
                stalled = True
            split = open_ & ~too_small

            if keep_leaves:
                keep = done | too_small
                leaf_lo.append(lo[keep])
                leaf_hi.append(hi[keep])
                leaf_depth.append(depth[keep])
                leaf_live.append(live[keep])
                if data is not None:
                    leaf_data.append(goal.take(data, keep[live]))
            if not np.any(split):
                lo = lo[:0]
                break
            lo, hi = _split(lo[split], hi[split])
            depth = np.repeat(depth[split] + 1, 2)
            max_depth_seen = max(max_depth_seen, int(depth.max()))
    finally:
        if pool is not None:
            pool.shutdown()

    if witness is not None:
        status = "refuted"
    elif stalled:
        status = BUDGET_EXHAUSTED
    else:
        status = CERTIFIED
    cert = Certificate(mode=mode, status=status, boxes_processed=processed,
                       max_depth=max_depth_seen, wall_time=time.perf_counter() - start,
                       witness=witness, region=task.region)
    if keep_leaves and status == CERTIFIED and leaf_lo:
        cert.leaves = Leaves(np.concatenate(leaf_lo), np.concatenate(leaf_hi),
                             np.concatenate(leaf_depth),
                             goal.concat(leaf_data) if leaf_data else None,
                             np.concatenate(leaf_live))
    return cert
