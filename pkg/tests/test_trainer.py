import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rescert.errors import ConfigError, TrainingError
from rescert.expr import Box
from rescert.net import init_net, net_value
from rescert.oracle import lyap_solve, riccati_solve
from rescert.system import load_system
from rescert.trainer import (hjb_residual_at, lqr_gain, lyapunov_residual_at, make_collocation,
                             solve_least_squares, train_hjb, train_lyapunov)
from systems import LINEAR2D, LQR_DI, PENDULUM_HJB, PENDULUM_LYAP, SCALAR


def _grid(lo, hi, k, n):
    axes = [np.linspace(lo, hi, k)] * n
    return np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)


class TestCollocation:
    def test_grid_includes_corners(self):
        pts = make_collocation(Box((-1.0, -1.0), (1.0, 1.0)), 9, "grid")
        assert pts.points.shape == (9, 2)
        assert {tuple(p) for p in pts.points} == {(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)}

    def test_grid_needs_perfect_power(self):
        with pytest.raises(ConfigError):
            make_collocation(Box((-1.0, -1.0), (1.0, 1.0)), 10, "grid")

    def test_halton_reproducible(self):
        box = Box((-1.0, -2.0), (1.0, 0.5))
        a = make_collocation(box, 500, "halton", 7)
        b = make_collocation(box, 500, "halton", 7)
        assert np.array_equal(a.points, b.points)
        assert not np.array_equal(a.points, make_collocation(box, 500, "halton", 8).points)
        assert a.descriptor() == {"kind": "halton", "count": 500, "seed": 7}

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(1, 4), count=st.integers(1, 300), seed=st.integers(0, 1000),
           kind=st.sampled_from(["halton", "grid"]))
    def test_points_inside(self, n, count, seed, kind):
        if kind == "grid":
            count = max(1, round(count ** (1 / n))) ** n
        rng = np.random.default_rng(seed)
        lo = -rng.uniform(0.1, 3, n)
        hi = rng.uniform(0.1, 3, n)
        pts = make_collocation(Box(tuple(lo), tuple(hi)), count, kind, seed).points
        assert pts.shape == (count, n)
        assert np.all(pts >= lo) and np.all(pts <= hi)

    def test_memory_budget(self):
        with pytest.raises(ConfigError, match="budget"):
            make_collocation(Box((-1.0,), (1.0,)), 10_000, max_points=1000)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            make_collocation(Box((-1.0,), (1.0,)), 10, "sobol")


class TestLeastSquares:
    def test_ridge_zero_rank_deficient(self):
        D = np.ones((10, 2))
        with pytest.raises(TrainingError, match="rank"):
            solve_least_squares(D, np.ones(10), 0.0)

    def test_matches_normal_equations_when_well_conditioned(self):
        rng = np.random.default_rng(0)
        D = rng.normal(size=(50, 5))
        y = rng.normal(size=50)
        lam = 0.3
        ref = np.linalg.solve(D.T @ D + lam * np.eye(5), D.T @ y)
        assert np.allclose(solve_least_squares(D, y, lam), ref, rtol=1e-10)


class TestLyapunov:
    def test_scalar_value(self):
        s = load_system(SCALAR)
        net, rep = train_lyapunov(s, init_net(1, 50, 0), make_collocation(s.domain, 1024))
        X = np.linspace(-0.5, 0.5, 101)[:, None]
        assert np.max(np.abs(net_value(net, X) - 0.5 * X[:, 0] ** 2)) <= 1e-4
        assert rep.iterations == 1 and rep.converged

    def test_linear2d_matches_lyapunov_matrix(self):
        s = load_system(LINEAR2D)
        net, _ = train_lyapunov(s, init_net(2, 200, 0), make_collocation(s.domain, 4096))
        P = lyap_solve(np.array([[0.0, 1.0], [-2.0, -3.0]]), np.eye(2))
        X = _grid(-1, 1, 21, 2)
        X = X[np.linalg.norm(X, axis=1) > 0]
        exact = np.einsum("pi,ij,pj->p", X, P, X)
        assert np.max(np.abs(net_value(net, X) - exact) / exact) <= 1e-3

    def test_pendulum_collocation_ratio(self):
        s = load_system(PENDULUM_LYAP)
        net, rep = train_lyapunov(s, init_net(2, 400, 0), make_collocation(s.domain, 4096))
        assert rep.max_relative_residual[-1] < 1e-3

    def test_bit_reproducible(self):
        s = load_system(LINEAR2D)
        pts = make_collocation(s.domain, 512)
        a, _ = train_lyapunov(s, init_net(2, 40, 1), pts)
        b, _ = train_lyapunov(s, init_net(2, 40, 1), pts)
        assert a == b

    def test_objective_not_worse_than_zero(self):
        s = load_system(LINEAR2D)
        pts = make_collocation(s.domain, 512)
        for weighting in ("relative", "absolute"):
            net, rep = train_lyapunov(s, init_net(2, 30, 2), pts, weighting=weighting)
            w = s.eval_weight(pts.points)
            assert rep.rms_residual[-1] <= np.sqrt(np.mean(w * w))
            assert rep.rms_residual[-1] <= rep.max_residual[-1]

    def test_report_matches_residual(self):
        s = load_system(LINEAR2D)
        pts = make_collocation(s.domain, 256)
        net, rep = train_lyapunov(s, init_net(2, 30, 2), pts)
        r = lyapunov_residual_at(s, net, pts.points)
        assert np.max(np.abs(r)) == pytest.approx(rep.max_residual[-1], rel=1e-6)

    def test_mode_mismatch(self):
        s = load_system(LQR_DI)
        with pytest.raises(ConfigError):
            train_lyapunov(s, init_net(2, 10, 0), make_collocation(s.domain, 64))


class TestHjb:
    def test_lqr_gain(self):
        K = lqr_gain(load_system(LQR_DI))
        assert np.allclose(K, [[1.0, np.sqrt(3.0)]], rtol=1e-12)

    def test_lqr_matches_riccati(self):
        s = load_system(LQR_DI)
        net, rep = train_hjb(s, init_net(2, 200, 0), make_collocation(s.domain, 4096))
        assert rep.converged
        P = riccati_solve(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]),
                          np.eye(2), np.eye(1))
        X = _grid(-0.5, 0.5, 21, 2)
        X = X[np.linalg.norm(X, axis=1) > 0]
        exact = np.einsum("pi,ij,pj->p", X, P, X)
        assert np.max(np.abs(net_value(net, X) - exact) / exact) <= 1e-3

    def test_pendulum_converges(self):
        s = load_system(PENDULUM_HJB)
        pts = make_collocation(s.domain, 4096)
        net, rep = train_hjb(s, init_net(2, 400, 0), pts)
        assert rep.converged
        assert rep.max_relative_residual[-1] <= 1e-2
        assert all(r <= m for r, m in zip(rep.rms_residual, rep.max_residual))

    def test_fixed_point(self):
        s = load_system(LQR_DI)
        pts = make_collocation(s.domain, 1024)
        tol = 1e-9
        net, rep = train_hjb(s, init_net(2, 60, 0), pts, tol=tol)
        assert rep.converged
        again, rep2 = train_hjb(s, net, pts, max_iters=1, tol=tol, initial_policy="net")
        assert abs(rep2.rms_residual[-1] - rep.rms_residual[-1]) <= 10 * tol
        assert np.max(np.abs(net_value(again, pts.points) - net_value(net, pts.points))) < 1e-6

    def test_residual_helper_consistent(self):
        s = load_system(LQR_DI)
        pts = make_collocation(s.domain, 256)
        net, rep = train_hjb(s, init_net(2, 40, 0), pts)
        r = hjb_residual_at(s, net, pts.points)
        assert np.max(np.abs(r)) == pytest.approx(rep.max_residual[-1], rel=1e-6)

    def test_uncontrollable_linearization(self):
        # x1 is unstable and cannot be reached through the input
        s = load_system(dict(LQR_DI, f=["x1", "-x2"]))
        with pytest.raises(TrainingError, match="LQR"):
            train_hjb(s, init_net(2, 10, 0), make_collocation(s.domain, 64))
