"""Interval branch-and-bound certification of residual bounds."""

from .bnb import (BUDGET_EXHAUSTED, CERTIFIED, REFUTED, BnbConfig, Certificate, Leaves,
                  VerifyTask, Witness, bnb_prove)
from .certify import (ResidualVerifier, boundary_min_sampled, certify_quadratic_bound,
                      max_separated_level, min_certified_epsilon, sampled_ratio_sup,
                      verify_local_pd, verify_one_sided, verify_quadratic_bound,
                      verify_relative_residual, verify_sublevel_separation)
from .goals import CombinationGoal, FrobeniusGoal, Goal, PsdGoal

__all__ = [
    "BUDGET_EXHAUSTED", "CERTIFIED", "REFUTED", "BnbConfig", "Certificate", "CombinationGoal",
    "FrobeniusGoal", "Goal", "Leaves", "PsdGoal", "ResidualVerifier", "VerifyTask", "Witness",
    "bnb_prove", "boundary_min_sampled", "certify_quadratic_bound", "max_separated_level",
    "min_certified_epsilon", "sampled_ratio_sup", "verify_local_pd", "verify_one_sided",
    "verify_quadratic_bound", "verify_relative_residual", "verify_sublevel_separation",
]
