"""Train-and-certify toolkit for Lyapunov and HJB equations with shallow tanh networks."""

__version__ = "0.1.0"
