import numpy as np
import pytest

from rescert.config import bundled_path
from rescert.errors import ConfigError
from rescert.expr import structurally_equal
from rescert.system import (QuadraticLowerBound, linearize, load_system, system_from_mapping,
                            weight_hessian_at_origin)

PENDULUM_LYAP = """
mode: lyapunov
state_dim: 2
f: ["x2", "sin(x1) - x2 - (4.4142*x1 + 2.3163*x2)"]
omega: "x1^2 + x2^2"
domain: {lo: [-1, -1], hi: [1, 1]}
"""

PENDULUM_HJB = """
mode: hjb
state_dim: 2
control_dim: 1
f: ["x2", "19.6*sin(x1) - 4*x2"]
g: [["0"], ["40"]]
Q: "x1^2 + x2^2"
R: [["2"]]
domain: {lo: [-1, -1], hi: [1, 1]}
"""


def _hjb(**changes):
    import yaml
    cfg = yaml.safe_load(PENDULUM_HJB)
    cfg.update(changes)
    return cfg


class TestLoad:
    def test_pendulum_lyapunov(self):
        s = load_system(PENDULUM_LYAP)
        assert (s.mode, s.n, s.k) == ("lyapunov", 2, 0)
        assert s.var_names == ("x1", "x2")
        assert np.allclose(s.eval_f(np.array([[0.3, -0.2]])),
                           [[-0.2, np.sin(0.3) + 0.2 - 4.4142 * 0.3 + 2.3163 * 0.2]])

    def test_pendulum_hjb(self):
        s = load_system(PENDULUM_HJB)
        assert (s.mode, s.n, s.k) == ("hjb", 2, 1)
        X = np.array([[0.1, 0.2]])
        assert s.eval_g(X).shape == (1, 2, 1)
        assert s.eval_R(X)[0, 0, 0] == 2.0
        assert s.eval_weight(X)[0] == pytest.approx(0.05)

    def test_from_path_and_wrapped_config(self, tmp_path):
        p = tmp_path / "sys.yaml"
        p.write_text(PENDULUM_LYAP)
        assert load_system(p).n == 2
        assert load_system(bundled_path("pendulum_hjb")).mode == "hjb"

    def test_deterministic(self):
        a, b = load_system(PENDULUM_HJB), load_system(PENDULUM_HJB)
        assert all(structurally_equal(x, y) for x, y in zip(a.f + (a.Q,), b.f + (b.Q,)))
        assert a.domain == b.domain

    def test_equilibrium_violation(self):
        cfg = _hjb(f=["x2 + 0.1", "19.6*sin(x1) - 4*x2"])
        with pytest.raises(ConfigError, match="equilibrium") as err:
            system_from_mapping(cfg)
        assert err.value.field == "f"

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError) as err:
            system_from_mapping(_hjb(f=["x2"]))
        assert err.value.field == "f"
        with pytest.raises(ConfigError) as err:
            system_from_mapping(_hjb(g=[["0", "1"], ["40", "1"]]))
        assert err.value.field.startswith("g")

    def test_non_symmetric_R(self):
        cfg = _hjb(control_dim=2, g=[["0", "0"], ["40", "1"]], R=[["2", "1"], ["0", "2"]])
        with pytest.raises(ConfigError, match="symmetric") as err:
            system_from_mapping(cfg)
        assert err.value.field == "R"

    def test_indefinite_R(self):
        cfg = _hjb(control_dim=2, g=[["0", "0"], ["40", "1"]], R=[["1", "2"], ["2", "1"]])
        with pytest.raises(ConfigError, match="positive definite"):
            system_from_mapping(cfg)

    def test_parse_failure_names_field(self):
        with pytest.raises(ConfigError) as err:
            system_from_mapping(_hjb(Q="x1^2 + * x2"))
        assert err.value.field == "Q"

    def test_weight_not_positive(self):
        with pytest.raises(ConfigError, match="not positive"):
            system_from_mapping(_hjb(Q="x1^2 - x2^2"))
        with pytest.raises(ConfigError, match="at the origin"):
            system_from_mapping(_hjb(Q="x1^2 + x2^2 + 1"))

    def test_origin_must_be_interior(self):
        with pytest.raises(ConfigError) as err:
            system_from_mapping(_hjb(domain={"lo": [0, -1], "hi": [1, 1]}))
        assert err.value.field == "domain"

    def test_mode_specific_fields(self):
        with pytest.raises(ConfigError) as err:
            system_from_mapping(_hjb(omega="x1^2"))
        assert err.value.field == "omega"
        with pytest.raises(ConfigError) as err:
            system_from_mapping(_hjb(mode="other"))
        assert err.value.field == "mode"

    def test_missing_field(self):
        cfg = _hjb()
        del cfg["R"]
        with pytest.raises(ConfigError) as err:
            system_from_mapping(cfg)
        assert err.value.field == "R"

    def test_invalid_yaml(self):
        with pytest.raises(ConfigError, match="YAML"):
            load_system("mode: [lyapunov")


class TestLinearize:
    def test_pendulum_hjb(self):
        A, B = linearize(load_system(PENDULUM_HJB))
        assert np.array_equal(A, [[0.0, 1.0], [19.6, -4.0]])
        assert np.array_equal(B, [[0.0], [40.0]])

    def test_linear_system_exact(self):
        s = load_system({"mode": "lyapunov", "state_dim": 2, "f": ["x2", "-2*x1 - 3*x2"],
                         "omega": "x1^2 + x2^2", "domain": {"lo": [-1, -1], "hi": [1, 1]}})
        A, B = linearize(s)
        assert np.array_equal(A, [[0.0, 1.0], [-2.0, -3.0]])
        assert B.shape == (2, 0)

    def test_matches_finite_differences(self):
        s = load_system(PENDULUM_LYAP)
        A, _ = linearize(s)
        h = 1e-6
        cols = []
        for j in range(2):
            e = np.zeros((2, 2))
            e[0, j], e[1, j] = h, -h
            F = s.eval_f(e)
            cols.append((F[0] - F[1]) / (2 * h))
        assert np.allclose(A, np.stack(cols, axis=1), rtol=1e-6, atol=1e-9)

    def test_weight_hessian(self):
        assert np.array_equal(weight_hessian_at_origin(load_system(PENDULUM_LYAP)),
                              2 * np.eye(2))


def test_quadratic_lower_bound_validation():
    assert not QuadraticLowerBound(1.0, 0.1).certified
    with pytest.raises(ValueError):
        QuadraticLowerBound(0.0, 0.1)
