"""Stability analysis for multi-dimensional birth-death processes with 0-homogeneous rates.

Analytic criteria (fluid hitting times, gradient potentials, cone separation,
planar instability sets) plus a lattice simulator used as an empirical check.
"""
from .drift_model import (ConePartition2D, Scenario, SmoothDrift, SupportPatternDrift,
                          builtin_scenario, check_homogeneity)
from .verdict import Label, Verdict

__version__ = "0.1.0"

__all__ = ["ConePartition2D", "Scenario", "SmoothDrift", "SupportPatternDrift",
           "builtin_scenario", "check_homogeneity", "Label", "Verdict", "__version__"]
