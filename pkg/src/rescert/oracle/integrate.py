"""Adaptive Dormand-Prince 5(4) integration, batched over initial states.

Every trajectory keeps its own step size and stopping status; the stages are
evaluated for all still-active trajectories at once.  The state is augmented
with the accumulated running cost, which is integrated under the same error
control.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import OracleError

CONVERGED = "converged"
LEFT_DOMAIN = "left_domain"
TIME_LIMIT = "time_limit"
STEP_UNDERFLOW = "step_underflow"

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100,
                1 / 40])
_E = _B5 - _B4

Rhs = Callable[[np.ndarray], np.ndarray]


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    reason: str
    cost: float

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])


@dataclass
class _Batch:
    t: np.ndarray
    y: np.ndarray
    h: np.ndarray
    k1: np.ndarray
    active: np.ndarray
    reason: np.ndarray
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)


def integrate_batch(rhs: Rhs, x0: np.ndarray, *, n: int, inside: Callable[[np.ndarray], np.ndarray],
                    t_max: float = 200.0, rtol: float = 1e-10, atol: float = 1e-12,
                    stop_radius: float = 1e-5, record: bool = True,
                    max_steps: int = 1_000_000) -> list[Trajectory]:
    """Integrate ``y' = rhs(y)`` for every row of ``x0`` (state plus appended
    cost, which starts at 0).  ``rhs`` maps an (N, n+1) array to (N, n+1);
    ``inside`` flags states still in the domain."""
    X0 = np.atleast_2d(np.asarray(x0, dtype=float))
    N = X0.shape[0]
    y = np.hstack([X0, np.zeros((N, 1))])
    reason = np.array([""] * N, dtype=object)
    norms = np.linalg.norm(X0, axis=1)
    reason[norms <= stop_radius] = CONVERGED
    reason[(reason == "") & ~inside(X0)] = LEFT_DOMAIN
    active = reason == ""
    st = _Batch(np.zeros(N), y, np.full(N, 1e-3), np.zeros_like(y), active, reason)
    if record:
        st.times = [[0.0] for _ in range(N)]
        st.states = [[X0[i].copy()] for i in range(N)]
    idx = np.flatnonzero(active)
    if idx.size:
        st.k1[idx] = rhs(y[idx])
    steps = 0
    while np.any(st.active):
        steps += 1
        if steps > max_steps:
            raise OracleError("integration exceeded the step limit")
        idx = np.flatnonzero(st.active)
        t, yy, h, k1 = st.t[idx], st.y[idx], st.h[idx], st.k1[idx]
        h = np.minimum(h, t_max - t)
        ks = [k1]
        for s in range(1, 7):
            ys = yy + h[:, None] * sum(a * k for a, k in zip(_A[s], ks))
            ks.append(rhs(ys))
        y5 = yy + h[:, None] * sum(b * k for b, k in zip(_B5[:6], ks[:6]))
        err = h[:, None] * sum(e * k for e, k in zip(_E, ks))
        scale = atol + rtol * np.maximum(np.abs(yy), np.abs(y5))
        enorm = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        enorm = np.where(np.isfinite(enorm), enorm, np.inf)
        accept = enorm <= 1.0
        factor = np.clip(0.9 * np.where(enorm > 0, enorm, 1e-10) ** -0.2, 0.2, 5.0)
        h_new = h * np.where(accept, factor, np.minimum(factor, 1.0))

        acc = idx[accept]
        st.t[acc] = t[accept] + h[accept]
        st.y[acc] = y5[accept]
        st.k1[acc] = ks[6][accept]  # first-same-as-last
        st.h[idx] = h_new
        if record:
            for j, i in enumerate(idx):
                if accept[j]:
                    st.times[i].append(float(st.t[i]))
                    st.states[i].append(st.y[i, :n].copy())

        xs = st.y[acc, :n]
        conv = np.linalg.norm(xs, axis=1) <= stop_radius
        out = ~conv & ~inside(xs)
        tlim = ~conv & ~out & (st.t[acc] >= t_max)
        st.reason[acc[conv]] = CONVERGED
        st.reason[acc[out]] = LEFT_DOMAIN
        st.reason[acc[tlim]] = TIME_LIMIT
        tiny = st.h[idx] < 1e-13 * np.maximum(1.0, st.t[idx])
        st.reason[idx[tiny & (st.reason[idx] == "")]] = STEP_UNDERFLOW
        st.active = st.reason == ""

    result = []
    for i in range(N):
        if record:
            times = np.array(st.times[i])
            states = np.array(st.states[i])
        else:
            times = np.array([0.0, st.t[i]])
            states = np.vstack([X0[i], st.y[i, :n]])
        result.append(Trajectory(times, states, str(st.reason[i]), float(st.y[i, n])))
    return result
