"""System configs shared by the tests."""

SCALAR = {"mode": "lyapunov", "state_dim": 1, "f": ["-x1"], "omega": "x1^2",
          "domain": {"lo": [-0.5], "hi": [0.5]}}
LINEAR2D = {"mode": "lyapunov", "state_dim": 2, "f": ["x2", "-2*x1 - 3*x2"],
            "omega": "x1^2 + x2^2", "domain": {"lo": [-1, -1], "hi": [1, 1]}}
LQR_DI = {"mode": "hjb", "state_dim": 2, "control_dim": 1, "f": ["x2", "0"],
          "g": [["0"], ["1"]], "Q": "x1^2 + x2^2", "R": [["1"]],
          "domain": {"lo": [-0.5, -0.5], "hi": [0.5, 0.5]}}
PENDULUM_LYAP = {"mode": "lyapunov", "state_dim": 2,
                 "f": ["x2", "sin(x1) - x2 - (4.4142*x1 + 2.3163*x2)"],
                 "omega": "x1^2 + x2^2", "domain": {"lo": [-1, -1], "hi": [1, 1]}}
PENDULUM_HJB = {"mode": "hjb", "state_dim": 2, "control_dim": 1,
                "f": ["x2", "19.6*sin(x1) - 4*x2"], "g": [["0"], ["40"]], "Q": "x1^2 + x2^2",
                "R": [["2"]], "domain": {"lo": [-1, -1], "hi": [1, 1]}}
