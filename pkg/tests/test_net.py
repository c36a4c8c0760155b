import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rescert.errors import NetFormatError
from rescert.expr import Box, eval_dual2_points, eval_interval_boxes, eval_points, pretty
from rescert.net import (ValueNet, gradient_exprs, init_net, load_net, net_eval2, net_gradient,
                         net_value, refresh_correction, save_net, to_expr)


def _trained_like(seed=0, m=40, n=2):
    rng = np.random.default_rng(seed + 100)
    return init_net(n, m, seed, 1.0).with_weights(rng.normal(size=m))


def _unit_net():
    return refresh_correction(ValueNet(np.array([[1.0, 0.0]]), np.zeros(1), np.ones(1)))


class TestInit:
    def test_deterministic(self):
        a, b = init_net(2, 400, 42, 1.0), init_net(2, 400, 42, 1.0)
        assert a == b
        assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)

    def test_seeds_differ(self):
        assert not np.array_equal(init_net(2, 400, 42, 1.0).A, init_net(2, 400, 43, 1.0).A)

    def test_uniform_range_and_zero_weights(self):
        net = init_net(3, 500, 1, 0.5)
        assert net.A.shape == (500, 3) and net.b.shape == (500,)
        assert np.all(np.abs(net.A) <= 0.5) and np.all(np.abs(net.b) <= 0.5)
        assert np.all(net.w == 0) and net.c0 == 0 and np.all(net.c1 == 0)

    def test_zero_weights_give_zero_function(self):
        net = init_net(2, 30, 0)
        X = np.random.default_rng(0).uniform(-1, 1, (20, 2))
        assert np.all(net_value(net, X) == 0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            init_net(2, 0, 0)
        with pytest.raises(ValueError):
            init_net(2, 5, 0, scale=0.0)

    def test_immutable(self):
        net = init_net(2, 5, 0)
        with pytest.raises(ValueError):
            net.w[0] = 1.0


class TestCorrection:
    def test_origin_value_and_gradient(self):
        for seed in range(5):
            d = net_eval2(_trained_like(seed), np.zeros(2))
            assert abs(d.value) <= 1e-12
            assert np.max(np.abs(d.gradient)) <= 1e-12

    def test_idempotent(self):
        net = _trained_like()
        assert refresh_correction(net) == net
        assert refresh_correction(refresh_correction(net)) == refresh_correction(net)

    def test_zero_weights_zero_correction(self):
        net = refresh_correction(init_net(2, 10, 3))
        assert net.c0 == 0 and np.all(net.c1 == 0)

    def test_unit_net_by_hand(self):
        net = _unit_net()
        assert net.c0 == 0.0 and np.array_equal(net.c1, [1.0, 0.0])
        for x in (0.3, -0.7, 1.0):
            assert net_eval2(net, np.array([x, 0.2])).value == pytest.approx(np.tanh(x) - x,
                                                                             abs=1e-15)
        assert np.array_equal(net_eval2(net, np.zeros(2)).gradient, [0.0, 0.0])


class TestDerivatives:
    def test_finite_differences(self):
        net = _trained_like(m=60)
        rng = np.random.default_rng(5)
        h = 1e-5
        for x in rng.uniform(-1, 1, (10, 2)):
            d = net_eval2(net, x)
            for j in range(2):
                e = np.zeros(2)
                e[j] = h
                fd = (net_eval2(net, x + e).value - net_eval2(net, x - e).value) / (2 * h)
                assert fd == pytest.approx(d.gradient[j], rel=1e-6, abs=1e-8)
                fdh = (net_eval2(net, x + e).gradient - net_eval2(net, x - e).gradient) / (2 * h)
                assert np.allclose(fdh, d.hessian[:, j], rtol=1e-6, atol=1e-7)

    def test_hessian_exactly_symmetric(self):
        d = net_eval2(_trained_like(), np.random.default_rng(1).uniform(-1, 1, (7, 2)))
        assert np.array_equal(d.hessian, np.swapaxes(d.hessian, 1, 2))

    def test_batched_matches_helpers(self):
        net = _trained_like()
        X = np.random.default_rng(2).uniform(-1, 1, (15, 2))
        d = net_eval2(net, X)
        assert np.array_equal(d.value, net_value(net, X))
        assert np.array_equal(d.gradient, net_gradient(net, X))


class TestToExpr:
    @pytest.mark.parametrize("fused", [False, True])
    def test_agreement(self, fused):
        net = _trained_like(m=400)
        X = np.random.default_rng(3).uniform(-1, 1, (100, 2))
        (v,) = eval_points([to_expr(net, fused=fused)], X)
        ref = net_value(net, X)
        assert np.max(np.abs(v - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))

    def test_unit_net_expression(self):
        net = _unit_net()
        text = pretty(to_expr(net))
        assert "tanh" in text
        X = np.array([[0.5, 0.1], [-0.2, 0.9]])
        (v,) = eval_points([to_expr(net)], X)
        assert np.allclose(v, np.tanh(X[:, 0]) - X[:, 0], atol=1e-16)

    def test_gradient_exprs(self):
        net = _trained_like()
        X = np.random.default_rng(4).uniform(-1, 1, (30, 2))
        G = np.stack(eval_points(gradient_exprs(net), X), axis=-1)
        assert np.allclose(G, net_gradient(net, X), atol=1e-13)

    def test_fused_origin_exact(self):
        (d,) = eval_dual2_points([to_expr(_trained_like(), fused=True)], np.zeros((1, 2)))
        assert d.v[0] == 0.0 and np.all(d.g[0] == 0.0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), fused=st.booleans())
    def test_interval_soundness(self, seed, fused):
        net = _trained_like(seed % 7, m=25)
        rng = np.random.default_rng(seed)
        c = rng.uniform(-1, 1, 2)
        r = rng.uniform(0, 0.5, 2)
        box = Box(tuple(c - r), tuple(c + r))
        (iv,) = eval_interval_boxes([to_expr(net, fused=fused)], box.as_arrays()[0],
                                    box.as_arrays()[1])
        X = rng.uniform(c - r, c + r, (50, 2))
        v = net_eval2(net, X).value
        assert np.all(v >= iv.lo[0]) and np.all(v <= iv.hi[0])


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        net = _trained_like(m=400)
        p = tmp_path / "net.json"
        save_net(net, p, {"note": "x"})
        back = load_net(p)
        assert back == net
        assert back.A.tobytes() == net.A.tobytes() and back.c1.tobytes() == net.c1.tobytes()
        assert back.c0 == net.c0 and back.seed == net.seed

    def test_truncated_file(self, tmp_path):
        p = tmp_path / "net.json"
        save_net(_trained_like(), p)
        p.write_text(p.read_text()[:200])
        with pytest.raises(NetFormatError):
            load_net(p)

    def test_version_mismatch(self, tmp_path):
        p = tmp_path / "net.json"
        save_net(_trained_like(), p)
        doc = json.loads(p.read_text())
        doc["version"] = 99
        p.write_text(json.dumps(doc))
        with pytest.raises(NetFormatError, match="version"):
            load_net(p)

    def test_dimension_mismatch(self, tmp_path):
        p = tmp_path / "net.json"
        save_net(_trained_like(), p)
        doc = json.loads(p.read_text())
        doc["m"] = 41
        p.write_text(json.dumps(doc))
        with pytest.raises(NetFormatError):
            load_net(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(NetFormatError):
            load_net(tmp_path / "absent.json")
